"""Predictor evaluation: correlation statistics, the five-parameter
logistic remap, and stratified reports.

Rank statistics (SRCC, KRCC) are computed on raw predictor scores; PLCC
and RMSE are computed after the logistic remap is fitted to the evaluated
sample set, refit within each stratum.  Zero-variance inputs yield None
(an explicit undefined marker), never a silent 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .core import REGION_MODES, ValidationError

LABEL_KINDS = ("consistency", "accuracy", "composite")

_EXP_CLAMP = 500.0


# ---------------------------------------------------------------------------
# Correlation / error statistics
# ---------------------------------------------------------------------------

def _as_pair(a, b):
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValidationError(f"expected equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValidationError(f"need at least 2 samples, got {x.size}")
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def plcc(a, b) -> Optional[float]:
    """Pearson linear correlation; None when either side has zero variance."""
    x, y = _as_pair(a, b)
    return _pearson(x, y)


def srcc(a, b) -> Optional[float]:
    """Spearman rank correlation: Pearson on average ranks (ties averaged)."""
    x, y = _as_pair(a, b)
    return _pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def rmse(a, b) -> float:
    x, y = _as_pair(a, b)
    d = x - y
    return math.sqrt(float(np.mean(d * d)))


def _tie_term(sorted_values: np.ndarray) -> int:
    _, counts = np.unique(sorted_values, return_counts=True)
    counts = counts.astype(object)
    return int((counts * (counts - 1) // 2).sum())


def _count_inversions(values: np.ndarray):
    """Strict inversions via mergesort; returns (sorted copy, count)."""
    n = values.shape[0]
    if n <= 1:
        return values, 0
    mid = n // 2
    left, cl = _count_inversions(values[:mid])
    right, cr = _count_inversions(values[mid:])
    positions = np.searchsorted(left, right, side="right")
    cross = int((left.shape[0] - positions).sum())
    merged = np.concatenate([left, right])
    merged.sort(kind="stable")
    return merged, cl + cr + cross


def krcc(a, b) -> Optional[float]:
    """Kendall tau-b (tie-corrected), computed with the O(n log n)
    sort-and-count formulation."""
    x, y = _as_pair(a, b)
    n = x.size
    order = np.lexsort((y, x))
    xs = x[order]
    ys = y[order]

    total = n * (n - 1) // 2
    xtie = _tie_term(xs)
    ytie = _tie_term(np.sort(y, kind="stable"))
    both_same = (xs[1:] == xs[:-1]) & (ys[1:] == ys[:-1])
    # run lengths of jointly-tied samples
    xytie = 0
    run = 1
    for same in both_same:
        if same:
            run += 1
        else:
            xytie += run * (run - 1) // 2
            run = 1
    xytie += run * (run - 1) // 2

    if total == xtie or total == ytie:
        return None
    _, discordant = _count_inversions(ys.copy())
    con_minus_dis = total - xtie - ytie + xytie - 2 * discordant
    tau = con_minus_dis / math.sqrt((total - xtie) * (total - ytie))
    return min(1.0, max(-1.0, tau))


# ---------------------------------------------------------------------------
# Five-parameter logistic remap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticParams:
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "a4", "a5"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"logistic parameter {name} is not finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4, self.a5], dtype=np.float64)


def logistic_eval(params, q) -> np.ndarray:
    theta = params.as_array() if isinstance(params, LogisticParams) else np.asarray(params)
    q = np.asarray(q, dtype=np.float64)
    # the product may overflow for extreme trial parameters; the clamp
    # immediately brings it back to +-500
    with np.errstate(over="ignore"):
        u = np.clip(theta[1] * (q - theta[2]), -_EXP_CLAMP, _EXP_CLAMP)
    s = 1.0 / (1.0 + np.exp(u))
    return theta[0] * (0.5 - s) + theta[3] * q + theta[4]


def _logistic_jacobian(theta: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        u = np.clip(theta[1] * (q - theta[2]), -_EXP_CLAMP, _EXP_CLAMP)
        s = 1.0 / (1.0 + np.exp(u))
        bell = s * (1.0 - s)
        jac = np.empty((q.size, 5), dtype=np.float64)
        jac[:, 0] = 0.5 - s
        jac[:, 1] = theta[0] * bell * (q - theta[2])
        jac[:, 2] = -theta[0] * bell * theta[1]
        jac[:, 3] = q
        jac[:, 4] = 1.0
    return jac


def _sse(theta: np.ndarray, q: np.ndarray, y: np.ndarray) -> float:
    r = logistic_eval(theta, q) - y
    return float(r @ r)


def fit_logistic(q, y, max_iter: int = 2000, rel_tol: float = 1e-10) -> LogisticParams:
    """Fit the five-parameter logistic by damped (Levenberg-Marquardt)
    least squares.  Only improving steps are accepted, so the returned
    parameters never have a larger SSE than the initialization."""
    q = np.asarray(q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if q.ndim != 1 or q.shape != y.shape:
        raise ValidationError(f"expected equal-length vectors, got {q.shape} and {y.shape}")
    if q.size < 5:
        raise ValidationError(f"need at least 5 samples to fit, got {q.size}")
    if float(np.ptp(q)) == 0.0:
        raise ValidationError("degenerate input: predictor scores are all identical")

    a4, a5 = np.polyfit(q, y, 1)
    theta = np.array(
        [
            float(np.max(y) - np.min(y)),
            4.0 / (float(np.std(q)) + 1e-12),
            float(np.mean(q)),
            float(a4),
            float(a5),
        ]
    )
    sse = _sse(theta, q, y)
    lam = 1e-3
    for _ in range(max_iter):
        residual = logistic_eval(theta, q) - y
        jac = _logistic_jacobian(theta, q)
        grad = jac.T @ residual
        hess = jac.T @ jac
        damping = np.diag(hess).copy()
        damping[damping <= 0.0] = 1e-12

        accepted = False
        while lam <= 1e14:
            try:
                step = np.linalg.solve(hess + lam * np.diag(damping), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = theta + step
            cand_sse = _sse(candidate, q, y)
            if math.isfinite(cand_sse) and cand_sse < sse:
                improvement = (sse - cand_sse) / max(sse, 1e-300)
                theta, sse = candidate, cand_sse
                lam = max(lam * 0.1, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted or improvement < rel_tol:
            break
    return LogisticParams(*theta)


# ---------------------------------------------------------------------------
# Stratified evaluation
# ---------------------------------------------------------------------------

MIN_STRATUM_SAMPLES = 5


@dataclass(frozen=True)
class MetricBlock:
    n: int
    srcc: Optional[float]
    plcc: Optional[float]
    krcc: Optional[float]
    rmse: Optional[float]
    insufficient: bool = False

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "srcc": self.srcc,
            "plcc": self.plcc,
            "krcc": self.krcc,
            "rmse": self.rmse,
            "insufficient": self.insufficient,
        }


@dataclass(frozen=True)
class EvalReport:
    label_kind: str
    overall: MetricBlock
    strata: dict = field(default_factory=dict)
    by_region: dict = field(default_factory=dict)
    by_distortion: dict = field(default_factory=dict)
    by_severity: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label_kind": self.label_kind,
            "overall": self.overall.to_dict(),
            "strata": {k: v.to_dict() for k, v in self.strata.items()},
            "by_region": {k: v.to_dict() for k, v in self.by_region.items()},
            "by_distortion": {k: v.to_dict() for k, v in self.by_distortion.items()},
            "by_severity": {k: v.to_dict() for k, v in self.by_severity.items()},
        }


def stratum_key(label_kind: str, region_mode: str, distortion_type: str, cell) -> str:
    return f"{label_kind}|{region_mode}|{distortion_type}|{cell[0]}-{cell[1]}"


def _score_block(q: np.ndarray, y: np.ndarray) -> MetricBlock:
    n = int(q.size)
    if n < MIN_STRATUM_SAMPLES:
        return MetricBlock(n, None, None, None, None, insufficient=True)
    s = srcc(q, y)
    k = krcc(q, y)
    if float(np.ptp(q)) == 0.0:
        # remap undefined on constant predictions
        return MetricBlock(n, s, None, k, None)
    params = fit_logistic(q, y)
    remapped = logistic_eval(params, q)
    return MetricBlock(n, s, _pearson(remapped, y), k, rmse(remapped, y))


def evaluate(predicted: dict, labels: dict, label_kind: str, grid_meta: dict) -> EvalReport:
    """Evaluate predictor scores against quality labels.

    All three maps must share exactly the same keys; each key carries its
    DistortionSpec in grid_meta so the report can be stratified by region
    mode, distortion type, and severity cell.
    """
    if label_kind not in LABEL_KINDS:
        raise ValidationError(f"label_kind must be one of {LABEL_KINDS}, got {label_kind!r}")
    pred_keys = set(predicted)
    label_keys = set(labels)
    if pred_keys != label_keys:
        missing = sorted(label_keys - pred_keys)[:10]
        extra = sorted(pred_keys - label_keys)[:10]
        raise ValidationError(
            f"key mismatch between predictions and labels; missing={missing} extra={extra}"
        )
    meta_keys = set(grid_meta)
    if pred_keys - meta_keys:
        raise ValidationError("grid metadata does not cover every evaluated key")
    if not predicted:
        raise ValidationError("empty input")

    keys = sorted(predicted)
    q = np.array([float(predicted[k]) for k in keys], dtype=np.float64)
    y = np.array([float(getattr(labels[k], label_kind)) for k in keys], dtype=np.float64)
    specs = [grid_meta[k] for k in keys]

    if q.size < MIN_STRATUM_SAMPLES:
        raise ValidationError(f"need at least {MIN_STRATUM_SAMPLES} samples, got {q.size}")

    overall = _score_block(q, y)

    def grouped(index_fn):
        groups = {}
        for i, spec in enumerate(specs):
            groups.setdefault(index_fn(spec), []).append(i)
        out = {}
        for gkey in sorted(groups):
            idx = np.array(groups[gkey], dtype=np.int64)
            out[gkey] = _score_block(q[idx], y[idx])
        return out

    strata = grouped(
        lambda s: stratum_key(label_kind, s.region_mode, s.distortion_type, (s.roi_level, s.bg_level))
    )
    by_region = grouped(lambda s: s.region_mode)
    by_distortion = grouped(lambda s: s.distortion_type)
    by_severity = grouped(lambda s: f"{s.roi_level}-{s.bg_level}")

    assert sum(b.n for b in strata.values()) == overall.n
    return EvalReport(
        label_kind=label_kind,
        overall=overall,
        strata=strata,
        by_region=by_region,
        by_distortion=by_distortion,
        by_severity=by_severity,
    )
