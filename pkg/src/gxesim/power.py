"""Replicate-level summary statistics, ROC curves and AUC with DeLong intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

LABELS = ((0.6, "fail"), (0.7, "poor"), (0.8, "fair"), (0.9, "good"), (1.0, "excellent"))
TINY_P = np.finfo(float).tiny


class NoUsableResultsError(ValueError):
    pass


@dataclass
class ScoreVector:
    hypothesis: str
    scores: np.ndarray
    method: str = ""
    region: str = ""

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    def __len__(self):
        return len(self.scores)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def trapezoid_area(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


@dataclass
class AucEstimate:
    auc: float
    ci_low: float
    ci_high: float
    label: str
    variance: float = 0.0

    def cell(self) -> str:
        return f"{100 * self.auc:.2f} [{100 * self.ci_low:.2f}-{100 * self.ci_high:.2f}]"


def _scores(x) -> np.ndarray:
    return np.asarray(x.scores if isinstance(x, ScoreVector) else x, dtype=float)


def summary_min_p(results, field: str = "p_snp", region=None) -> float:
    """``-log10`` of the smallest usable p-value in ``region`` (all SNPs by default)."""
    rows = results if region is None else [results[i] for i in region]
    ps = [getattr(r, field) for r in rows if r.status == "ok" and getattr(r, field) is not None]
    if not ps:
        raise NoUsableResultsError(f"no usable {field} in region")
    return -math.log10(max(min(ps), TINY_P))


def min_p_scores(p_values: np.ndarray, regions: dict) -> dict[str, float]:
    """Vectorized min-p summaries from a p-value array (NaN = failed fit)."""
    out = {}
    for name, idx in regions.items():
        sub = p_values[np.asarray(idx)]
        sub = sub[np.isfinite(sub)]
        if sub.size == 0:
            raise NoUsableResultsError(f"no usable p-value in region {name}")
        out[name] = -math.log10(max(float(sub.min()), TINY_P))
    return out


def ingest_external_scores(path, hypothesis: str = "H1", method: str = "external", n_expected: int | None = None) -> ScoreVector:
    """Read (replicate_index, score) rows, e.g. per-replicate maximal importance values."""
    seen: dict[int, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0] == "replicate_index" or parts[0].startswith("#"):
                continue
            if len(parts) < 2:
                raise ValueError(f"{path}: line {lineno}: expected replicate_index and score")
            idx = int(parts[0])
            if idx in seen:
                raise ValueError(f"{path}: duplicate replicate index {idx}")
            seen[idx] = float(parts[1])
    size = n_expected if n_expected is not None else (max(seen) + 1 if seen else 0)
    gaps = sorted(set(range(size)) - set(seen))
    if gaps or not seen:
        raise ValueError(f"{path}: missing replicate indices {gaps[:20]}{'...' if len(gaps) > 20 else ''}")
    extra = sorted(set(seen) - set(range(size)))
    if extra:
        raise ValueError(f"{path}: unexpected replicate indices {extra[:20]}")
    return ScoreVector(hypothesis=hypothesis, scores=np.array([seen[i] for i in range(size)]), method=method)


def roc(h0, h1) -> RocCurve:
    """Empirical ROC; higher scores are more H1-like, tied scores form one step."""
    x, y = _scores(h0), _scores(h1)
    if x.size == 0 or y.size == 0:
        raise ValueError("both score vectors must be nonempty")
    thresholds = np.unique(np.concatenate([x, y]))[::-1]
    xs, ys = np.sort(x), np.sort(y)
    fpr = (x.size - np.searchsorted(xs, thresholds, side="left")) / x.size
    tpr = (y.size - np.searchsorted(ys, thresholds, side="left")) / y.size
    return RocCurve(
        fpr=np.concatenate([[0.0], fpr]),
        tpr=np.concatenate([[0.0], tpr]),
        thresholds=np.concatenate([[np.inf], thresholds]),
    )


def qualitative_label(auc: float) -> str:
    for upper, label in LABELS:
        if auc <= upper:
            return label
    return "excellent"


def _placements(x: np.ndarray, y: np.ndarray):
    """DeLong structural components: per-H1 and per-H0 pair-credit averages."""
    xs, ys = np.sort(x), np.sort(y)
    below = np.searchsorted(xs, y, side="left")
    equal = np.searchsorted(xs, y, side="right") - below
    v10 = (below + 0.5 * equal) / x.size
    above = y.size - np.searchsorted(ys, x, side="right")
    equal_y = np.searchsorted(ys, x, side="right") - np.searchsorted(ys, x, side="left")
    v01 = (above + 0.5 * equal_y) / y.size
    return v10, v01


def auc(h0, h1, level: float = 0.95) -> AucEstimate:
    """Mann-Whitney AUC with a DeLong normal-approximation interval clamped to [0, 1]."""
    x, y = _scores(h0), _scores(h1)
    if x.size == 0 or y.size == 0:
        raise ValueError("both score vectors must be nonempty")
    v10, v01 = _placements(x, y)
    # integer half-credit counts keep auc(h0, h1) + auc(h1, h0) == 1 exactly
    xs = np.sort(x)
    lo, hi = np.searchsorted(xs, y, side="left"), np.searchsorted(xs, y, side="right")
    twice = int(np.sum(lo + hi))
    a = twice / (2 * x.size * y.size)
    s10 = v10.var(ddof=1) if y.size > 1 else 0.0
    s01 = v01.var(ddof=1) if x.size > 1 else 0.0
    var = float(s10 / y.size + s01 / x.size)
    z = float(ndtri(0.5 + level / 2.0))
    half = z * math.sqrt(max(var, 0.0))
    return AucEstimate(
        auc=a,
        ci_low=max(0.0, a - half),
        ci_high=min(1.0, a + half),
        label=qualitative_label(a),
        variance=var,
    )


def write_auc_table(path, table: dict, methods: list, regions: list) -> None:
    """Rows are regions, columns methods, cells ``auc [low-high]`` in percent."""
    with open(path, "w") as fh:
        fh.write("region\t" + "\t".join(methods) + "\n")
        for reg in regions:
            cells = [table[(reg, m)].cell() if (reg, m) in table else "NA" for m in methods]
            fh.write(f"{reg}\t" + "\t".join(cells) + "\n")


def write_roc_tsv(path, curves: dict) -> None:
    with open(path, "w") as fh:
        fh.write("method\tregion\tfpr\ttpr\n")
        for (reg, method), c in curves.items():
            for f, t in zip(c.fpr, c.tpr):
                fh.write(f"{method}\t{reg}\t{float(f)!r}\t{float(t)!r}\n")
