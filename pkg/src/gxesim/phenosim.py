"""Penetrance under the G x E disease model and exact-case-count phenotype sampling.

H1 phenotypes are drawn from independent Bernoulli(p_i) laws conditioned on
the total number of cases (a weighted permutation). The sampler builds the
Poisson-binomial tail table ``T(i, k) = P(exactly k cases among i..n-1)`` in
log space and then walks forward through the individuals, so every draw is
exact and the case count is fixed by construction.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .genotype_io import MISSING
from .textio import data_lines

HYPOTHESIS_CODES = {"H0": 0, "H1": 1}


class ModelValidityError(ValueError):
    pass


class InfeasibleDesignError(ValueError):
    pass


@dataclass(frozen=True)
class DiseaseModel:
    baseline_prevalence: float = 0.01
    relative_risk: float = 50.0
    causal_snp: str | None = None
    genetic_coding: str = "dominant"
    interacting_exposure: str = "treatment"

    def __post_init__(self):
        if not 0.0 <= self.baseline_prevalence <= 1.0:
            raise ModelValidityError("baseline prevalence must be a probability")
        if self.relative_risk < 0:
            raise ModelValidityError("relative risk must be >= 0")
        if self.baseline_prevalence * (1.0 + self.relative_risk) > 1.0:
            raise ModelValidityError(
                f"baseline {self.baseline_prevalence} x (1 + RR {self.relative_risk}) exceeds 1"
            )
        if self.genetic_coding not in ("dominant", "additive"):
            raise ModelValidityError(f"unknown genetic coding {self.genetic_coding!r}")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class PhenotypeReplicate:
    y: np.ndarray
    n_cases: int
    hypothesis: str
    replicate_index: int
    seed: int

    def __post_init__(self):
        if int(self.y.sum()) != self.n_cases:
            raise AssertionError(f"replicate has {int(self.y.sum())} cases, expected {self.n_cases}")

    @property
    def label(self) -> str:
        return f"{self.hypothesis}_{self.replicate_index}"


@dataclass
class ReplicateSet:
    replicates: list
    n: int
    n_cases: int
    model_hash: str = ""
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.replicates:
            if r.y.shape[0] != self.n or r.n_cases != self.n_cases:
                raise ValueError("all replicates must share n and n_cases")

    def by_hypothesis(self, hypothesis: str) -> list:
        return [r for r in self.replicates if r.hypothesis == hypothesis]

    def __len__(self):
        return len(self.replicates)


# --------------------------------------------------------------------------
# disease model


def penetrance(model: DiseaseModel, causal_column, exposure) -> np.ndarray:
    """p_i = f0 * (1 + RR * carrier_i * exposed_i); missing genotype = non-carrier."""
    col = np.asarray(causal_column, dtype=float)
    exposure = np.asarray(exposure, dtype=float)
    if col.shape != exposure.shape:
        raise ValueError("causal column and exposure must have the same length")
    missing = np.isnan(col) | (col == MISSING)
    if model.genetic_coding == "dominant":
        g = np.where(missing, 0.0, (col > 0).astype(float))
    else:
        g = np.where(missing, 0.0, col)
    p = model.baseline_prevalence * (1.0 + model.relative_risk * g * exposure)
    if np.any(p > 1.0) or np.any(p < 0.0):
        raise ModelValidityError("penetrance outside [0, 1]")
    return p


# --------------------------------------------------------------------------
# conditional Bernoulli sampling


def _logs(p):
    with np.errstate(divide="ignore"):
        return np.log(p), np.log1p(-p)


def _step_back(row: np.ndarray, lp: float, lq: float, lo: int, hi: int) -> np.ndarray:
    """T(i, .) from T(i + 1, .) in log space, filled only for k in [lo, hi]."""
    out = np.full_like(row, -np.inf)
    if lo == 0:
        out[0] = lq + row[0]
        lo = 1
    if hi >= lo:
        np.logaddexp(lp + row[lo - 1 : hi], lq + row[lo : hi + 1], out=out[lo : hi + 1])
    return out


class TailTable:
    """Checkpointed log Poisson-binomial tail table for a penetrance vector.

    Rows ``T(i, .)`` for ``k = 0..n_cases`` are stored only every ``block``
    positions; rows in between are recomputed on demand, which keeps memory
    at roughly ``(n / block + block) * n_cases`` floats. Only the band of k
    reachable from the start state is filled: at position i at most i cases
    have been assigned, so k >= n_cases - i, and k <= n - i.
    """

    def __init__(self, p, n_cases: int, block: int | None = None):
        p = np.asarray(p, dtype=float)
        n = p.shape[0]
        if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
            raise ValueError("penetrances must lie in [0, 1]")
        if not 0 <= n_cases <= n:
            raise InfeasibleDesignError(f"n_cases={n_cases} outside 0..{n}")
        forced_cases = int(np.sum(p == 1.0))
        forced_controls = int(np.sum(p == 0.0))
        if not forced_cases <= n_cases <= n - forced_controls:
            raise InfeasibleDesignError(
                f"n_cases={n_cases} infeasible: {forced_cases} forced cases, {forced_controls} forced controls"
            )
        self.p = p
        self.n = n
        self.n_cases = n_cases
        self.block = block or max(1, int(np.sqrt(n)))
        self.lp, self.lq = _logs(p)
        last = np.full(n_cases + 1, -np.inf)
        last[0] = 0.0
        self._checkpoints = {n: last}
        row = last
        with np.errstate(invalid="ignore"):
            for i in range(n - 1, -1, -1):
                row = _step_back(row, self.lp[i], self.lq[i], *self._band(i))
                if i % self.block == 0:
                    self._checkpoints[i] = row
        self.log_total = float(self._checkpoints[0][n_cases])
        if not np.isfinite(self.log_total):
            raise InfeasibleDesignError(f"probability of exactly {n_cases} cases is zero")

    def _band(self, i: int) -> tuple[int, int]:
        return max(0, self.n_cases - i), min(self.n_cases, self.n - i)

    def rows(self, start: int, stop: int) -> np.ndarray:
        """Rows T(start..stop-1, .) as an array; ``stop`` must be a checkpoint or n."""
        row = self._checkpoints[stop]
        out = np.empty((stop - start, self.n_cases + 1))
        with np.errstate(invalid="ignore"):
            for i in range(stop - 1, start - 1, -1):
                row = _step_back(row, self.lp[i], self.lq[i], *self._band(i))
                out[i - start] = row
        return out

    def _walk_scalar(self, next_rows, b0, b1, u, y, k) -> int:
        lp, lq = self.lp, self.lq
        for i in range(b0, b1):
            if k == 0:
                break
            nxt = next_rows[i - b0]
            prob = _cond_case_prob(lp[i] + nxt[k - 1], lq[i] + nxt[k])
            if u[i] < prob:
                y[i] = 1
                k -= 1
        return k

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        """Draw phenotype vectors, one per row of ``uniforms`` (shape draws x n)."""
        u = np.atleast_2d(uniforms)
        draws = u.shape[0]
        y = np.zeros((draws, self.n), dtype=np.int8)
        k = np.full(draws, self.n_cases, dtype=np.int64)
        for b0 in range(0, self.n, self.block):
            b1 = min(b0 + self.block, self.n)
            # next_rows[j] = T(b0 + j + 1, .)
            next_rows = self.rows(b0 + 1, b1) if b1 - 1 > b0 else np.empty((0, self.n_cases + 1))
            next_rows = np.vstack([next_rows, self._checkpoints[b1][None, :]])
            if draws <= 4:
                for d in range(draws):
                    k[d] = self._walk_scalar(next_rows, b0, b1, u[d], y[d], int(k[d]))
                continue
            for i in range(b0, b1):
                nxt = next_rows[i - b0]
                with np.errstate(invalid="ignore"):
                    take = self.lp[i] + np.where(k > 0, nxt[np.maximum(k - 1, 0)], -np.inf)
                    skip = self.lq[i] + nxt[k]
                    prob = np.exp(take - np.logaddexp(take, skip))
                prob = np.nan_to_num(prob, nan=0.0)
                hit = u[:, i] < prob
                y[hit, i] = 1
                k -= hit
        if np.any(k != 0):
            raise RuntimeError("sampler ended with unassigned cases")
        return y


def _cond_case_prob(take: float, skip: float) -> float:
    """exp(take) / (exp(take) + exp(skip)) for log weights, -inf allowed."""
    if take == -math.inf:
        return 0.0
    if skip == -math.inf:
        return 1.0
    return 1.0 / (1.0 + math.exp(skip - take)) if skip - take < 700 else 0.0


def waffect_sample(p, n_cases: int, rng, hypothesis: str = "H1", replicate_index: int = 0, seed: int = 0):
    """One draw of ``y ~ Bernoulli(p)`` conditioned on ``sum(y) == n_cases``."""
    table = TailTable(p, n_cases)
    y = table.sample(rng.random((1, table.n)))[0]
    return PhenotypeReplicate(y=y, n_cases=n_cases, hypothesis=hypothesis, replicate_index=replicate_index, seed=seed)


def waffect_sample_many(p, n_cases: int, n_draws: int, rng) -> np.ndarray:
    """``n_draws`` conditional draws sharing one tail table; returns (n_draws, n)."""
    table = TailTable(p, n_cases)
    return table.sample(rng.random((n_draws, table.n)))


def brute_force_conditional_law(p, n_cases: int) -> dict[tuple, float]:
    """Exact conditional law by enumerating every configuration with ``n_cases`` ones."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if n > 20:
        raise ValueError("enumeration refused for n > 20")
    weights = {}
    for cases in itertools.combinations(range(n), n_cases):
        y = np.zeros(n, dtype=int)
        y[list(cases)] = 1
        weights[tuple(int(v) for v in y)] = float(np.prod(np.where(y == 1, p, 1.0 - p)))
    total = sum(weights.values())
    if total == 0:
        raise InfeasibleDesignError("all configurations have zero probability")
    return {cfg: w / total for cfg, w in weights.items()}


def permute_phenotypes(n: int, n_cases: int, rng, replicate_index: int = 0, seed: int = 0):
    """Uniform draw among binary vectors with exactly ``n_cases`` ones."""
    if not 0 <= n_cases <= n:
        raise InfeasibleDesignError(f"n_cases={n_cases} outside 0..{n}")
    base = np.zeros(n, dtype=np.int8)
    base[:n_cases] = 1
    return PhenotypeReplicate(
        y=rng.permutation(base), n_cases=n_cases, hypothesis="H0", replicate_index=replicate_index, seed=seed
    )


def replicate_rng(seed: int, hypothesis: str, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), HYPOTHESIS_CODES[hypothesis], int(index)])


def generate_replicates(
    model: DiseaseModel,
    causal_column,
    exposure,
    n_h0: int = 200,
    n_h1: int = 200,
    n_cases: int = 595,
    seed: int = 0,
) -> ReplicateSet:
    """H0 replicates by permutation, H1 replicates by weighted permutation.

    Replicate r of hypothesis h draws from its own generator seeded by
    ``(seed, h, r)``, so its phenotype does not depend on the replicate counts.
    """
    p = penetrance(model, causal_column, exposure)
    n = p.shape[0]
    reps = []
    for r in range(n_h0):
        reps.append(permute_phenotypes(n, n_cases, replicate_rng(seed, "H0", r), replicate_index=r, seed=seed))
    if n_h1:
        table = TailTable(p, n_cases)
        u = np.vstack([replicate_rng(seed, "H1", r).random(n) for r in range(n_h1)])
        ys = table.sample(u)
        for r in range(n_h1):
            reps.append(PhenotypeReplicate(y=ys[r], n_cases=n_cases, hypothesis="H1", replicate_index=r, seed=seed))
    digest = hashlib.sha256(model.digest().encode() + np.ascontiguousarray(p).tobytes()).hexdigest()[:16]
    return ReplicateSet(
        replicates=reps,
        n=n,
        n_cases=n_cases,
        model_hash=digest,
        seed=seed,
        metadata={"model": asdict(model), "n_h0": n_h0, "n_h1": n_h1},
    )


def write_replicates(path, reps: ReplicateSet, individual_ids, extra_meta: dict | None = None) -> Path:
    """TSV (rows = individuals, columns = replicates) plus a JSON sidecar."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("individual_id\t" + "\t".join(r.label for r in reps.replicates) + "\n")
        ymat = np.column_stack([r.y for r in reps.replicates]) if reps.replicates else np.zeros((reps.n, 0))
        for iid, row in zip(individual_ids, ymat):
            fh.write(iid + "\t" + "\t".join(str(int(v)) for v in row) + "\n")
    meta = {
        "n": reps.n,
        "n_cases": reps.n_cases,
        "seed": reps.seed,
        "model_hash": reps.model_hash,
        "replicates": [r.label for r in reps.replicates],
        **reps.metadata,
        **(extra_meta or {}),
    }
    sidecar = path.with_suffix(".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return sidecar


def read_replicates(path) -> tuple[list[str], ReplicateSet]:
    path = Path(path)
    with open(path) as fh:
        lines = data_lines(fh)
        header = next(lines, "").rstrip("\n").split("\t")
        rows = [line.rstrip("\n").split("\t") for line in lines]
    ids = [r[0] for r in rows]
    y = np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.int8).reshape(len(rows), len(header) - 1)
    meta = {}
    sidecar = path.with_suffix(".meta.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    reps = []
    for j, label in enumerate(header[1:]):
        hyp, idx = label.split("_")
        reps.append(
            PhenotypeReplicate(
                y=y[:, j], n_cases=int(y[:, j].sum()), hypothesis=hyp, replicate_index=int(idx), seed=meta.get("seed", 0)
            )
        )
    n_cases = meta.get("n_cases", reps[0].n_cases if reps else 0)
    return ids, ReplicateSet(
        replicates=reps, n=len(ids), n_cases=n_cases, model_hash=meta.get("model_hash", ""), seed=meta.get("seed", 0), metadata=meta
    )
