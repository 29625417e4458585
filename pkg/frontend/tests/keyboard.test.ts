/**
 * Keyboard review bindings: digits 1-4 map onto the four label categories
 * in canonical order, j/k and the arrow keys move the cursor, and keys are
 * ignored while the reviewer is typing in a form field.
 */

import { beforeEach, describe, expect, it, vi } from 'vitest';

import { KEY_TO_CATEGORY, bindReviewKeys, reviewKeyHandler } from '../src/keyboard.js';
import type { ReviewKeyActions } from '../src/keyboard.js';
import { LABEL_CATEGORIES } from '../src/types.js';

function actions(): {
  acts: ReviewKeyActions;
  onLabel: ReturnType<typeof vi.fn>;
  onNext: ReturnType<typeof vi.fn>;
  onPrevious: ReturnType<typeof vi.fn>;
} {
  const onLabel = vi.fn();
  const onNext = vi.fn();
  const onPrevious = vi.fn();
  return { acts: { onLabel, onNext, onPrevious }, onLabel, onNext, onPrevious };
}

function keyEvent(key: string, init: KeyboardEventInit = {}): KeyboardEvent {
  return new KeyboardEvent('keydown', { key, bubbles: true, cancelable: true, ...init });
}

describe('review keyboard bindings', () => {
  beforeEach(() => {
    document.body.textContent = '';
  });

  it('maps digits 1-4 to the four categories in canonical order', () => {
    expect(KEY_TO_CATEGORY['1']).toBe(LABEL_CATEGORIES[0]);
    expect(KEY_TO_CATEGORY['2']).toBe(LABEL_CATEGORIES[1]);
    expect(KEY_TO_CATEGORY['3']).toBe(LABEL_CATEGORIES[2]);
    expect(KEY_TO_CATEGORY['4']).toBe(LABEL_CATEGORIES[3]);
    expect(Object.keys(KEY_TO_CATEGORY)).toHaveLength(4);
    expect(KEY_TO_CATEGORY['1']).toBe('absolute_positive');
    expect(KEY_TO_CATEGORY['2']).toBe('absolute_negative');
    expect(KEY_TO_CATEGORY['3']).toBe('incomplete');
    expect(KEY_TO_CATEGORY['4']).toBe('indeterminate');
  });

  it('dispatches each digit to onLabel with its category', () => {
    const { acts, onLabel } = actions();
    const handler = reviewKeyHandler(acts);
    for (const [key, category] of Object.entries(KEY_TO_CATEGORY)) {
      handler(keyEvent(key));
      expect(onLabel).toHaveBeenLastCalledWith(category);
    }
    expect(onLabel).toHaveBeenCalledTimes(4);
  });

  it('moves the cursor with j/k and the arrow keys', () => {
    const { acts, onNext, onPrevious } = actions();
    const handler = reviewKeyHandler(acts);
    handler(keyEvent('j'));
    handler(keyEvent('ArrowDown'));
    expect(onNext).toHaveBeenCalledTimes(2);
    handler(keyEvent('k'));
    handler(keyEvent('ArrowUp'));
    expect(onPrevious).toHaveBeenCalledTimes(2);
  });

  it('ignores keys while typing in an input', () => {
    const { acts, onLabel, onNext } = actions();
    const handler = reviewKeyHandler(acts);
    const input = document.createElement('input');
    document.body.append(input);
    const ev = keyEvent('1');
    Object.defineProperty(ev, 'target', { value: input });
    handler(ev);
    const ev2 = keyEvent('j');
    Object.defineProperty(ev2, 'target', { value: input });
    handler(ev2);
    expect(onLabel).not.toHaveBeenCalled();
    expect(onNext).not.toHaveBeenCalled();
  });

  it('ignores modified keystrokes', () => {
    const { acts, onLabel } = actions();
    const handler = reviewKeyHandler(acts);
    handler(keyEvent('1', { ctrlKey: true }));
    handler(keyEvent('2', { metaKey: true }));
    handler(keyEvent('3', { altKey: true }));
    expect(onLabel).not.toHaveBeenCalled();
  });

  it('bindReviewKeys attaches to the document and unbinds cleanly', () => {
    const { acts, onLabel } = actions();
    const unbind = bindReviewKeys(document, acts);
    document.dispatchEvent(keyEvent('1'));
    expect(onLabel).toHaveBeenCalledTimes(1);
    unbind();
    document.dispatchEvent(keyEvent('1'));
    expect(onLabel).toHaveBeenCalledTimes(1);
  });
});
