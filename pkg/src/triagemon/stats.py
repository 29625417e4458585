"""Evaluation mathematics for binary raters.

Confusion tabulation, the standard metric battery with a composite
score, single-operating-point ROC / precision-recall areas, pairwise
rater agreement (Cohen's kappa, Jaccard), percentile bootstrap
confidence intervals, and paired bootstrap comparison of Matthews
correlation coefficients.

Conventions
-----------
* Point estimates follow a zero-denominator policy: a metric whose
  denominator vanishes is reported as 0.0.
* Bootstrap replicates instead mark such degenerate values as undefined
  (NaN); undefined replicates are excluded from the percentiles and
  their count is reported, so degenerate resamples never poison the
  interval.
* Everything is deterministic given (inputs, seed). Replicate streams
  are drawn from ``numpy.random.default_rng(seed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class StatsError(ValueError):
    pass


class LengthMismatch(StatsError):
    pass


class EmptyInput(StatsError):
    pass


class TooFewCases(StatsError):
    pass


class NoPositives(StatsError):
    pass


#: Metrics in a MetricReport, in report-column order.
REPORT_METRICS = (
    "accuracy",
    "precision_ppv",
    "recall_sensitivity",
    "specificity",
    "npv",
    "f1",
    "cohens_kappa",
    "mcc",
    "composite",
)

#: The seven metrics averaged into the composite score (MCC excluded).
COMPOSITE_COMPONENTS = REPORT_METRICS[:7]

#: Metrics bootstrap_ci understands (report metrics plus the two areas).
BOOTSTRAP_METRICS = REPORT_METRICS + ("roc_auc", "pr_auc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if v < 0:
                raise StatsError(f"ConfusionCounts.{name} must be >= 0, got {v}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricReport:
    """The metric battery for one predictor against one reference.

    ``cis`` maps metric name to a (low, high) 95% interval when a
    bootstrap was run; metrics without an interval are simply absent.
    """

    accuracy: float
    precision_ppv: float
    recall_sensitivity: float
    specificity: float
    npv: float
    f1: float
    cohens_kappa: float
    mcc: float
    composite: float
    cis: dict = field(default_factory=dict)

    def value(self, name: str) -> float:
        if name not in REPORT_METRICS:
            raise StatsError(f"unknown metric {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class AgreementMatrices:
    """Pairwise agreement over a panel of raters: symmetric matrices
    with unit diagonal, indexed by ``rater_ids`` order."""

    rater_ids: tuple
    kappa: np.ndarray
    jaccard: np.ndarray


@dataclass(frozen=True)
class BootstrapCI:
    metric: str
    low: float
    high: float
    replicates_used: int
    replicates_excluded: int
    n_boot: int
    seed: int


@dataclass(frozen=True)
class PairedMccComparison:
    """mcc_a and mcc_b are the full-sample coefficients of the two
    predictors against the shared reference; p_value is the two-sided
    paired bootstrap probability for delta = mcc_a - mcc_b."""

    mcc_a: float
    mcc_b: float
    delta: float
    p_value: float
    delta_low: float
    delta_high: float
    n_cases: int
    replicates_used: int
    replicates_excluded: int
    n_boot: int
    seed: int


def _as_bool_array(seq, name: str) -> np.ndarray:
    arr = np.asarray(seq)
    if arr.dtype != np.bool_:
        arr = arr.astype(bool)
    if arr.ndim != 1:
        raise StatsError(f"{name} must be one-dimensional")
    return arr


def _check_pair(pred, ref) -> tuple[np.ndarray, np.ndarray]:
    p = _as_bool_array(pred, "pred")
    r = _as_bool_array(ref, "ref")
    if len(p) != len(r):
        raise LengthMismatch(f"length mismatch: {len(p)} vs {len(r)}")
    if len(p) == 0:
        raise EmptyInput("empty input sequences")
    return p, r


def confusion(pred, ref) -> ConfusionCounts:
    """Tabulate tp/fp/tn/fn for a boolean predictor against a boolean
    reference of equal length."""
    p, r = _check_pair(pred, ref)
    tp = int(np.count_nonzero(p & r))
    fp = int(np.count_nonzero(p & ~r))
    tn = int(np.count_nonzero(~p & ~r))
    fn = int(np.count_nonzero(~p & r))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _div(num, den):
    """Elementwise num/den with NaN where den == 0."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.full(np.broadcast(num, den).shape, np.nan)
    np.divide(num, den, out=out, where=den != 0)
    return out


def metric_from_counts(name: str, tp, fp, tn, fn):
    """Vectorized metric over count arrays; NaN marks undefined values.

    Accepts scalars or equally-shaped arrays; used both for point
    estimates and for per-replicate bootstrap evaluation.
    """
    tp = np.asarray(tp, dtype=float)
    fp = np.asarray(fp, dtype=float)
    tn = np.asarray(tn, dtype=float)
    fn = np.asarray(fn, dtype=float)
    total = tp + fp + tn + fn

    if name == "accuracy":
        return _div(tp + tn, total)
    if name == "precision_ppv":
        return _div(tp, tp + fp)
    if name == "recall_sensitivity":
        return _div(tp, tp + fn)
    if name == "specificity":
        return _div(tn, tn + fp)
    if name == "npv":
        return _div(tn, tn + fn)
    if name == "f1":
        p = _div(tp, tp + fp)
        r = _div(tp, tp + fn)
        return _div(2.0 * p * r, p + r)
    if name == "cohens_kappa":
        p_o = _div(tp + tn, total)
        p_e = _div((tp + fp) * (tp + fn) + (tn + fn) * (tn + fp), total * total)
        return _div(p_o - p_e, 1.0 - p_e)
    if name == "mcc":
        denom = np.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
        return _div(tp * tn - fp * fn, denom)
    if name == "composite":
        parts = [metric_from_counts(m, tp, fp, tn, fn) for m in COMPOSITE_COMPONENTS]
        return sum(parts) / 7.0
    if name == "roc_auc":
        rec = _div(tp, tp + fn)
        spec = _div(tn, tn + fp)
        return (rec + spec) / 2.0
    if name == "pr_auc":
        prec = _div(tp, tp + fp)
        rec = _div(tp, tp + fn)
        prev = _div(tp + fn, total)
        return prec * rec + prev * (1.0 - rec)
    raise StatsError(f"unknown metric {name!r}")


def _scalar_metric(name: str, c: ConfusionCounts) -> float:
    v = float(metric_from_counts(name, c.tp, c.fp, c.tn, c.fn))
    return 0.0 if math.isnan(v) else v


def metrics(c: ConfusionCounts) -> MetricReport:
    """The full metric battery from one confusion table.

    accuracy=(tp+tn)/N, precision=tp/(tp+fp), recall=tp/(tp+fn),
    specificity=tn/(tn+fp), npv=tn/(tn+fn), F1 the harmonic mean of
    precision/recall, Cohen's kappa with the marginal-product chance
    term, and MCC. Zero denominators yield 0.0. The composite is the
    mean of the first seven (MCC excluded, see :func:`composite`).
    """
    if c.total <= 0:
        raise EmptyInput("confusion table is empty")
    values = {name: _scalar_metric(name, c) for name in REPORT_METRICS[:8]}
    report = MetricReport(composite=0.0, **values)
    return MetricReport(composite=composite(report), **values)


def composite(r: MetricReport) -> float:
    """Composite score: the arithmetic mean of accuracy, precision,
    recall, specificity, NPV, F1 and Cohen's kappa (seven metrics; MCC
    is not included)."""
    return sum(r.value(name) for name in COMPOSITE_COMPONENTS) / 7.0


def roc_auc_from_rates(recall: float, specificity: float) -> float:
    """Trapezoidal ROC area through (0,0), (1-specificity, recall), (1,1)
    for a single-operating-point predictor: (recall+specificity)/2.

    The rate form exists so reported sensitivity/specificity pairs can be
    cross-checked against a reported AUC without the underlying counts.
    """
    return (recall + specificity) / 2.0


def pr_auc_from_rates(precision: float, recall: float, prevalence: float) -> float:
    """Step-interpolated average precision for a single-operating-point
    predictor: AP = P*R + prevalence*(1-R)."""
    return precision * recall + prevalence * (1.0 - recall)


def roc_auc_single_point(c: ConfusionCounts) -> float:
    """:func:`roc_auc_from_rates` evaluated on one confusion table."""
    return roc_auc_from_rates(
        _scalar_metric("recall_sensitivity", c), _scalar_metric("specificity", c)
    )


def pr_auc_single_point(c: ConfusionCounts) -> float:
    """:func:`pr_auc_from_rates` evaluated on one confusion table.

    Raises NoPositives when the reference has no positive cases.
    """
    if c.tp + c.fn == 0:
        raise NoPositives("reference contains no positive cases")
    return pr_auc_from_rates(
        _scalar_metric("precision_ppv", c),
        _scalar_metric("recall_sensitivity", c),
        (c.tp + c.fn) / c.total,
    )


def kappa_pair(a, b) -> float:
    """Cohen's kappa between two raters (symmetric in its arguments).

    Degenerate marginals (chance agreement exactly 1) return 1.0 when
    the sequences are identical and 0.0 otherwise.
    """
    x, y = _check_pair(a, b)
    c = confusion(x, y)
    v = float(metric_from_counts("cohens_kappa", c.tp, c.fp, c.tn, c.fn))
    if math.isnan(v):
        return 1.0 if bool(np.array_equal(x, y)) else 0.0
    return v


def jaccard_pair(a, b) -> float:
    """Intersection-over-union of the two raters' positive sets.

    An empty union (both raters all-negative) counts as vacuous
    agreement and returns 1.0.
    """
    x, y = _check_pair(a, b)
    union = int(np.count_nonzero(x | y))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(x & y)) / union


def agreement_matrices(verdict_columns: dict) -> AgreementMatrices:
    """Pairwise kappa and Jaccard over named rater columns.

    Columns must be equal-length boolean sequences over the same case
    set (complete-case restriction is the caller's job). Include the
    consensus as one more column to get it compared against every
    rater. Matrices come back symmetric with an exact unit diagonal.
    """
    ids = tuple(verdict_columns.keys())
    if not ids:
        raise EmptyInput("no rater columns")
    cols = [_as_bool_array(verdict_columns[r], r) for r in ids]
    lengths = {len(c) for c in cols}
    if len(lengths) != 1:
        raise LengthMismatch(f"rater columns differ in length: {sorted(lengths)}")
    m = len(ids)
    kap = np.ones((m, m))
    jac = np.ones((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            kap[i, j] = kap[j, i] = kappa_pair(cols[i], cols[j])
            jac[i, j] = jac[j, i] = jaccard_pair(cols[i], cols[j])
    return AgreementMatrices(rater_ids=ids, kappa=kap, jaccard=jac)


def _resampled_confusion(pred: np.ndarray, ref: np.ndarray, n_boot: int, rng):
    """Confusion counts for n_boot case-resamples with replacement.

    Returns (tp, fp, tn, fn) arrays of length n_boot. Cases are encoded
    into the four confusion categories once, then gathered per replicate.
    """
    n = len(pred)
    cat = (pred.astype(np.int8) << 1) | ref.astype(np.int8)  # 0=tn 1=fn 2=fp 3=tp
    idx = rng.integers(0, n, size=(n_boot, n))
    drawn = cat[idx]
    tn = (drawn == 0).sum(axis=1)
    fn = (drawn == 1).sum(axis=1)
    fp = (drawn == 2).sum(axis=1)
    tp = (drawn == 3).sum(axis=1)
    return tp, fp, tn, fn


def _percentile_ci(values: np.ndarray) -> tuple[float, float]:
    lo, hi = np.percentile(values, [2.5, 97.5])
    return float(lo), float(hi)


def bootstrap_metric_cis(
    pred, ref, metric_names=REPORT_METRICS, n_boot: int = 1000, seed: int = 0
) -> dict:
    """95% percentile bootstrap CIs for several metrics over one shared
    set of case resamples.

    Each replicate redraws n cases with replacement and re-tabulates the
    confusion counts; every requested metric is evaluated on the same
    replicate stream, so the dict is internally consistent. Undefined
    replicate values are excluded per metric with counts reported.
    """
    p, r = _check_pair(pred, ref)
    n = len(p)
    if n < 2:
        raise TooFewCases(f"need at least 2 cases, got {n}")
    if n_boot < 100:
        raise StatsError(f"n_boot must be >= 100, got {n_boot}")
    rng = np.random.default_rng(seed)
    tp, fp, tn, fn = _resampled_confusion(p, r, n_boot, rng)
    out = {}
    for name in metric_names:
        vals = metric_from_counts(name, tp, fp, tn, fn)
        kept = vals[~np.isnan(vals)]
        if len(kept) == 0:
            raise StatsError(f"all {n_boot} replicates undefined for {name!r}")
        lo, hi = _percentile_ci(kept)
        out[name] = BootstrapCI(
            metric=name,
            low=lo,
            high=hi,
            replicates_used=int(len(kept)),
            replicates_excluded=int(n_boot - len(kept)),
            n_boot=n_boot,
            seed=seed,
        )
    return out


def bootstrap_ci(pred, ref, metric: str = "accuracy", n_boot: int = 1000, seed: int = 0) -> BootstrapCI:
    """95% percentile bootstrap CI for one metric; see
    :func:`bootstrap_metric_cis`."""
    if metric not in BOOTSTRAP_METRICS:
        raise StatsError(f"unknown metric {metric!r}")
    return bootstrap_metric_cis(pred, ref, (metric,), n_boot=n_boot, seed=seed)[metric]


def paired_bootstrap_mcc(pred_a, pred_b, ref, n_boot: int = 1000, seed: int = 0) -> PairedMccComparison:
    """Paired bootstrap comparison of MCC(pred_a, ref) vs MCC(pred_b, ref).

    Each replicate resamples case indices once and applies them to both
    predictors jointly, preserving the pairing; delta_b is the per-
    replicate MCC difference. The two-sided p-value is
    2*min(P(delta<=0), P(delta>=0)) with the (count+1)/(B+1) small-
    sample correction. Replicates where either MCC is undefined are
    excluded and counted.
    """
    a = _as_bool_array(pred_a, "pred_a")
    b = _as_bool_array(pred_b, "pred_b")
    r = _as_bool_array(ref, "ref")
    if not (len(a) == len(b) == len(r)):
        raise LengthMismatch(
            f"length mismatch: {len(a)}, {len(b)}, {len(r)}"
        )
    n = len(a)
    if n < 2:
        raise TooFewCases(f"need at least 2 cases, got {n}")
    if n_boot < 100:
        raise StatsError(f"n_boot must be >= 100, got {n_boot}")

    # Joint category per case: bit2=pred_a, bit1=pred_b, bit0=ref.
    cat = (a.astype(np.int8) << 2) | (b.astype(np.int8) << 1) | r.astype(np.int8)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    drawn = cat[idx]
    counts = np.stack([(drawn == k).sum(axis=1) for k in range(8)], axis=1)

    def mcc_of(counts8, pred_bit):
        if pred_bit == 2:  # pred_a
            tp = counts8[:, 5] + counts8[:, 7]
            fp = counts8[:, 4] + counts8[:, 6]
            fn = counts8[:, 1] + counts8[:, 3]
            tn = counts8[:, 0] + counts8[:, 2]
        else:  # pred_b
            tp = counts8[:, 3] + counts8[:, 7]
            fp = counts8[:, 2] + counts8[:, 6]
            fn = counts8[:, 1] + counts8[:, 5]
            tn = counts8[:, 0] + counts8[:, 4]
        return metric_from_counts("mcc", tp, fp, tn, fn)

    mcc_a_rep = mcc_of(counts, 2)
    mcc_b_rep = mcc_of(counts, 1)
    delta_rep = mcc_a_rep - mcc_b_rep
    kept = delta_rep[~np.isnan(delta_rep)]
    if len(kept) == 0:
        raise StatsError("all replicates undefined for the MCC delta")

    b_used = int(len(kept))
    p_low = (int(np.count_nonzero(kept <= 0)) + 1) / (b_used + 1)
    p_high = (int(np.count_nonzero(kept >= 0)) + 1) / (b_used + 1)
    p_value = min(1.0, 2.0 * min(p_low, p_high))
    lo, hi = _percentile_ci(kept)

    ca = confusion(a, r)
    cb = confusion(b, r)
    mcc_a = _scalar_metric("mcc", ca)
    mcc_b = _scalar_metric("mcc", cb)
    return PairedMccComparison(
        mcc_a=mcc_a,
        mcc_b=mcc_b,
        delta=mcc_a - mcc_b,
        p_value=p_value,
        delta_low=lo,
        delta_high=hi,
        n_cases=n,
        replicates_used=b_used,
        replicates_excluded=int(n_boot - b_used),
        n_boot=n_boot,
        seed=seed,
    )
