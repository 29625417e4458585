/**
 * Reviewer keyboard bindings.
 *
 * Digits 1-4 pick the four label categories in their canonical order;
 * j/k (or arrows) move through the queue. Keystrokes inside text inputs
 * are never intercepted.
 */

import type { LabelCategory } from './types.js';
import { LABEL_CATEGORIES } from './types.js';

export interface ReviewKeyActions {
  onLabel: (category: LabelCategory) => void;
  onNext: () => void;
  onPrevious: () => void;
}

export const KEY_TO_CATEGORY: Readonly<Record<string, LabelCategory>> = {
  '1': LABEL_CATEGORIES[0]!,
  '2': LABEL_CATEGORIES[1]!,
  '3': LABEL_CATEGORIES[2]!,
  '4': LABEL_CATEGORIES[3]!,
};

function isTypingTarget(target: EventTarget | null): boolean {
  if (!(target instanceof HTMLElement)) return false;
  return (
    target.tagName === 'INPUT' ||
    target.tagName === 'TEXTAREA' ||
    target.isContentEditable
  );
}

export function reviewKeyHandler(
  actions: ReviewKeyActions,
): (event: KeyboardEvent) => void {
  return (event: KeyboardEvent): void => {
    if (event.ctrlKey || event.metaKey || event.altKey) return;
    if (isTypingTarget(event.target)) return;

    const category = KEY_TO_CATEGORY[event.key];
    if (category !== undefined) {
      event.preventDefault();
      actions.onLabel(category);
      return;
    }
    switch (event.key) {
      case 'j':
      case 'ArrowDown':
        event.preventDefault();
        actions.onNext();
        break;
      case 'k':
      case 'ArrowUp':
        event.preventDefault();
        actions.onPrevious();
        break;
    }
  };
}

export function bindReviewKeys(
  doc: Document,
  actions: ReviewKeyActions,
): () => void {
  const handler = reviewKeyHandler(actions);
  doc.addEventListener('keydown', handler);
  return () => doc.removeEventListener('keydown', handler);
}
