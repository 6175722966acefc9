"""Per-SNP logistic regression scans with covariates, optionally with a
SNP x covariate product term, tested by Wald statistics.

The scan engine fits every SNP of a chunk simultaneously. Because the
covariates are shared, the per-SNP information matrices are assembled from a
handful of matrix products (covariate cross-products weighted by the n x m
IRLS weight matrix), which keeps a whole-region scan cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr

from .genotype_io import MISSING, GenotypeMatrix
from .textio import data_lines

STATUSES = ("ok", "not_converged", "separated", "degenerate")
SEPARATION_BETA = 30.0
SATURATED_ETA = 15.0
RANK_TOL = 1e-10
CHUNK = 512


@dataclass
class GlmFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    status: str = "ok"
    log_likelihood_trace: list = field(default_factory=list)


@dataclass
class AssocResult:
    snp_id: str
    beta_snp: float | None
    se_snp: float | None
    p_snp: float | None
    beta_int: float | None = None
    se_int: float | None = None
    p_int: float | None = None
    status: str = "ok"
    chromosome: str = "NA"
    position: int = 0
    coding: str = "additive"
    n_used: int = 0


@dataclass
class ScanConfig:
    covariates: tuple = ("sex", "smoking", "bmi", "pc1", "pc2", "pc3", "pc4", "pc5")
    interaction_covariate: str | None = None
    snp_coding: str = "additive"
    tol: float = 1e-8
    max_iter: int = 25

    def __post_init__(self):
        self.covariates = tuple(self.covariates)
        if self.interaction_covariate is not None and self.interaction_covariate not in self.covariates:
            raise ValueError(f"interaction covariate {self.interaction_covariate!r} must be among the covariates")
        if self.snp_coding not in ("additive", "dominant"):
            raise ValueError(f"unknown SNP coding {self.snp_coding!r}")


def wald_p(beta, se):
    """Two-sided normal p-value for ``beta / se``."""
    se_arr = np.asarray(se, dtype=float)
    if np.any(~(se_arr > 0)):
        raise ValueError("standard error must be positive")
    p = 2.0 * ndtr(-np.abs(np.asarray(beta, dtype=float) / se_arr))
    return float(p) if np.ndim(p) == 0 else p


def _loglik(eta, y, weight=None):
    ll = y * eta - np.logaddexp(0.0, eta)
    if weight is not None:
        ll = ll * weight
    return ll.sum(axis=0)


def _loglik_mu(eta, y, weight):
    """Weighted log-likelihood per column and fitted means, sharing one exp."""
    e = np.exp(-np.abs(eta))
    softplus = np.maximum(eta, 0.0) + np.log1p(e)
    ll = (weight * (y * eta - softplus)).sum(axis=0)
    inv = 1.0 / (1.0 + e)
    mu = np.where(eta >= 0, inv, e * inv)
    return ll, mu


# --------------------------------------------------------------------------
# single fit


def logistic_irls(design, y, tol: float = 1e-8, max_iter: int = 25) -> GlmFit:
    """Maximum-likelihood logistic regression by Newton / IRLS with step halving.

    Status is ``degenerate`` for a rank-deficient design, ``separated`` when
    coefficients diverge (a standardized coefficient beyond 30, or fitted
    probabilities saturating when the iteration cap is hit), and
    ``not_converged`` when the cap is hit otherwise.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = x.shape
    nan = np.full(q, np.nan)
    if n <= q:
        return GlmFit(nan, nan, math.nan, 0, False, "degenerate")
    scale = np.linalg.norm(x, axis=0)
    if np.any(scale == 0) or np.linalg.matrix_rank(x / scale, tol=1e-8) < q:
        return GlmFit(nan, nan, math.nan, 0, False, "degenerate")
    sd = x.std(axis=0)

    beta = np.zeros(q)
    eta = x @ beta
    ll = float(_loglik(eta, y))
    trace = [ll]
    status, converged, it = "not_converged", False, 0
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        w = mu * (1.0 - mu)
        grad = x.T @ (y - mu)
        info = x.T @ (w[:, None] * x)
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            status = "separated"
            break
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            eta_c = x @ cand
            ll_c = float(_loglik(eta_c, y))
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, eta, ll = cand, eta_c, max(ll_c, ll)
        trace.append(ll)
        if np.any(np.abs(beta * sd) > SEPARATION_BETA):
            status = "separated"
            break
        if np.max(np.abs(t * step)) < tol:
            status, converged = "ok", True
            break
    else:
        if np.max(np.abs(eta)) > SATURATED_ETA:
            status = "separated"

    if status != "ok":
        return GlmFit(beta, nan, ll, it, False, status, trace)
    mu = expit(eta)
    info = x.T @ ((mu * (1.0 - mu))[:, None] * x)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return GlmFit(beta, nan, ll, it, False, "degenerate", trace)
    se = np.sqrt(np.diag(cov))
    return GlmFit(beta, se, ll, it, converged, status, trace)


# --------------------------------------------------------------------------
# batched scan engine


def _pair_products(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    return (a[:, :, None] * b[:, None, :]).reshape(n, -1)


class _BatchLogistic:
    """Fits ``logit P(y) = A @ beta_a + g_s * (B @ beta_b)`` for every SNP column g_s."""

    def __init__(self, fixed: np.ndarray, mult: np.ndarray, y: np.ndarray):
        self.A = fixed
        self.B = mult
        self.y = y.astype(float)
        self.a = fixed.shape[1]
        self.b = mult.shape[1]
        self.q = self.a + self.b
        self.PAA = _pair_products(fixed, fixed)
        self.PAB = _pair_products(fixed, mult)
        self.PBB = _pair_products(mult, mult)

    def eta(self, g, beta):
        return self.A @ beta[:, : self.a].T + g * (self.B @ beta[:, self.a :].T)

    def blocks(self, g, w, r=None):
        m = g.shape[1]
        a, b = self.a, self.b
        gw = g * w
        h = np.empty((m, self.q, self.q))
        h[:, :a, :a] = (self.PAA.T @ w).T.reshape(m, a, a)
        hab = (self.PAB.T @ gw).T.reshape(m, a, b)
        h[:, :a, a:] = hab
        h[:, a:, :a] = hab.transpose(0, 2, 1)
        h[:, a:, a:] = (self.PBB.T @ (g * gw)).T.reshape(m, b, b)
        if r is None:
            return h
        grad = np.empty((m, self.q))
        grad[:, :a] = (self.A.T @ r).T
        grad[:, a:] = (self.B.T @ (g * r)).T
        return h, grad

    def fit(self, g: np.ndarray, mask: np.ndarray, tol: float, max_iter: int, start=None):
        n, m = g.shape
        q = self.q
        beta = np.zeros((m, q))
        if start is not None:
            beta[:, : self.a] = start
        se = np.full((m, q), np.nan)
        status = np.array(["not_converged"] * m, dtype=object)
        n_used = mask.sum(axis=0).astype(int)

        # rank check on the unweighted Gram matrix, column-normalized
        gram = self.blocks(g, mask)
        d = np.sqrt(np.einsum("mii->mi", gram))
        bad = np.any(d == 0, axis=1) | (n_used <= q)
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = gram / (d[:, :, None] * d[:, None, :])
        corr[bad] = np.eye(q)
        min_eig = np.linalg.eigvalsh(corr)[:, 0]
        degenerate = bad | (min_eig < RANK_TOL)
        status[degenerate] = "degenerate"

        # column standard deviations for the divergence rule
        cnt = np.maximum(n_used, 1)
        sd = np.empty((m, q))
        sd[:, : self.a] = self.A.std(axis=0)
        for j in range(self.b):
            col = g * self.B[:, [j]]
            mean = col.sum(axis=0) / cnt
            sd[:, self.a + j] = np.sqrt(np.maximum((mask * (col - mean) ** 2).sum(axis=0) / cnt, 0.0))
        sd[:, 0] = 0.0

        y = self.y[:, None]
        active = ~degenerate
        ll = np.full(m, -np.inf)
        iters = np.zeros(m, dtype=int)
        mu_final = np.zeros((n, m))
        idx = np.flatnonzero(active)
        gi, mi = g[:, idx], mask[:, idx]
        eta = self.eta(gi, beta[idx])
        ll[idx], mu = _loglik_mu(eta, y, mi)
        for it in range(1, max_iter + 1):
            if idx.size == 0:
                break
            w = mi * mu * (1.0 - mu)
            r = mi * (y - mu)
            h, grad = self.blocks(gi, w, r)
            step, ok = _batched_solve(h, grad)
            step[~ok] = 0.0
            t = np.ones(idx.size)
            cand = beta[idx] + step
            eta_c = self.eta(gi, cand)
            ll_c, mu_c = _loglik_mu(eta_c, y, mi)
            worse = ll_c < ll[idx] - 1e-12 * np.abs(ll[idx])
            for _ in range(30):
                if not worse.any():
                    break
                t[worse] *= 0.5
                sub = np.flatnonzero(worse)
                cand[sub] = beta[idx[sub]] + t[sub, None] * step[sub]
                eta_c[:, sub] = self.eta(gi[:, sub], cand[sub])
                ll_c[sub], mu_c[:, sub] = _loglik_mu(eta_c[:, sub], y, mi[:, sub])
                worse = ll_c < ll[idx] - 1e-12 * np.abs(ll[idx])
            beta[idx] = cand
            ll[idx] = np.maximum(ll_c, ll[idx])
            iters[idx] = it
            diverged = ~ok | np.any(np.abs(cand * sd[idx]) > SEPARATION_BETA, axis=1)
            done = ~diverged & (np.max(np.abs(t[:, None] * step), axis=1) < tol)
            status[idx[diverged]] = "separated"
            status[idx[done]] = "ok"
            mu_final[:, idx[done]] = mu_c[:, done]
            keep = ~(diverged | done)
            idx, gi, mi = idx[keep], gi[:, keep], mi[:, keep]
            eta, mu = eta_c[:, keep], mu_c[:, keep]

        if idx.size:
            sat = np.max(np.abs(np.where(mi > 0, eta, 0.0)), axis=0) > SATURATED_ETA
            status[idx[sat]] = "separated"

        idx = np.flatnonzero(status == "ok")
        if idx.size:
            mu = mu_final[:, idx]
            h = self.blocks(g[:, idx], mask[:, idx] * mu * (1.0 - mu))
            cov, ok = _batched_inv(h)
            se[idx[ok]] = np.sqrt(np.einsum("mii->mi", cov[ok]))
            status[idx[~ok]] = "degenerate"
            se[~(status == "ok")] = np.nan
        return beta, se, status, n_used, iters


def _batched_solve(h, rhs):
    try:
        return np.linalg.solve(h, rhs[..., None])[..., 0], np.ones(h.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        out = np.zeros_like(rhs)
        ok = np.ones(h.shape[0], dtype=bool)
        for i in range(h.shape[0]):
            try:
                out[i] = np.linalg.solve(h[i], rhs[i])
            except np.linalg.LinAlgError:
                ok[i] = False
        return out, ok


def _batched_inv(h):
    try:
        return np.linalg.inv(h), np.ones(h.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        out = np.full_like(h, np.nan)
        ok = np.ones(h.shape[0], dtype=bool)
        for i in range(h.shape[0]):
            try:
                out[i] = np.linalg.inv(h[i])
            except np.linalg.LinAlgError:
                ok[i] = False
        return out, ok


# --------------------------------------------------------------------------
# scans


def _genotype_floats(matrix, coding: str) -> np.ndarray:
    if isinstance(matrix, GenotypeMatrix):
        g = matrix.as_float()
    else:
        g = np.asarray(matrix, dtype=float)
        g = np.where(g == MISSING, np.nan, g)
    if coding == "dominant":
        g = np.where(np.isnan(g), np.nan, (g > 0).astype(float))
    return g


def _covariate_design(covariates, config: ScanConfig, n: int):
    if hasattr(covariates, "design"):
        cov = covariates.design(config.covariates)
        inter = covariates.column(config.interaction_covariate) if config.interaction_covariate else None
    else:
        cov = np.asarray(covariates, dtype=float).reshape(n, -1)
        if cov.shape[1] != len(config.covariates):
            raise ValueError(f"{cov.shape[1]} covariate columns but {len(config.covariates)} names configured")
        inter = cov[:, config.covariates.index(config.interaction_covariate)] if config.interaction_covariate else None
    if np.isnan(cov).any():
        raise ValueError("covariates must be complete (no missing values)")
    return np.column_stack([np.ones(n), cov]), inter


def _snp_meta(snps, j):
    if snps is None:
        return f"snp{j}", "NA", 0
    s = snps[j]
    return s.snp_id, s.chromosome, s.bp_position


def _opt(x) -> float | None:
    return None if x is None or not np.isfinite(x) else float(x)


def _run_scan(matrix, y, covariates, config: ScanConfig, interaction: bool, snps=None) -> list[AssocResult]:
    g_all = _genotype_floats(matrix, config.snp_coding)
    n, m = g_all.shape
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ValueError(f"phenotype length {y.shape} does not match {n} individuals")
    fixed, inter = _covariate_design(covariates, config, n)
    if interaction:
        if inter is None:
            raise ValueError("SNP x covariate scan needs an interaction covariate")
        mult = np.column_stack([np.ones(n), inter])
    else:
        mult = np.ones((n, 1))
    engine = _BatchLogistic(fixed, mult, y)
    a = fixed.shape[1]
    null = logistic_irls(fixed, y, config.tol, config.max_iter)
    start = null.coefficients if null.status == "ok" else None
    results = []
    for c0 in range(0, m, CHUNK):
        gc = g_all[:, c0 : c0 + CHUNK]
        mask = (~np.isnan(gc)).astype(float)
        beta, se, status, n_used, _ = engine.fit(
            np.nan_to_num(gc, nan=0.0), mask, config.tol, config.max_iter, start
        )
        okk = status == "ok"
        p_all = np.full((gc.shape[1], engine.q), np.nan)
        p_all[okk] = wald_p(beta[okk], se[okk]) if okk.any() else p_all[okk]
        for k in range(gc.shape[1]):
            sid, chrom, pos = _snp_meta(snps, c0 + k)
            st = status[k]
            res = AssocResult(
                snp_id=sid, beta_snp=None, se_snp=None, p_snp=None, status=st,
                chromosome=chrom, position=pos, coding=config.snp_coding, n_used=int(n_used[k]),
            )
            if st == "ok":
                res.beta_snp, res.se_snp = float(beta[k, a]), float(se[k, a])
                res.p_snp = float(p_all[k, a])
                if interaction:
                    res.beta_int, res.se_int = float(beta[k, a + 1]), float(se[k, a + 1])
                    res.p_int = float(p_all[k, a + 1])
            results.append(res)
    return results


def scan_snp(matrix, y, covariates, config: ScanConfig | None = None, snps=None) -> list[AssocResult]:
    """Fit ``[intercept | snp | covariates]`` per SNP and report the SNP Wald p-value.

    Individuals missing the SNP are dropped for that SNP only; failed fits are
    reported through ``status`` and the scan carries on.
    """
    config = config or ScanConfig()
    return _run_scan(matrix, y, covariates, config, interaction=False, snps=snps)


def scan_snp_x_cov(matrix, y, covariates, config: ScanConfig, snps=None) -> list[AssocResult]:
    """As :func:`scan_snp` plus a SNP x covariate product; ``p_int`` tests the product."""
    if config.interaction_covariate is None:
        raise ValueError("scan_snp_x_cov requires config.interaction_covariate")
    return _run_scan(matrix, y, covariates, config, interaction=True, snps=snps)


# --------------------------------------------------------------------------
# results files

RESULT_COLUMNS = (
    "snp_id", "chromosome", "position", "coding", "n_used",
    "beta_snp", "se_snp", "p_snp", "beta_int", "se_int", "p_int", "status",
)


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results_tsv(path, results: list[AssocResult], with_interaction: bool = True) -> None:
    cols = [c for c in RESULT_COLUMNS if with_interaction or not c.endswith("_int")]
    lines = ["\t".join(cols)]
    for r in results:
        lines.append("\t".join(_fmt(getattr(r, c)) for c in cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_results_tsv(path) -> list[AssocResult]:
    out = []
    with open(path) as fh:
        lines = data_lines(fh)
        header = next(lines, "").rstrip("\n").split("\t")
        for line in lines:
            if not line.strip():
                continue
            row = dict(zip(header, line.rstrip("\n").split("\t")))

            def num(key):
                v = row.get(key, "NA")
                return None if v == "NA" else float(v)

            out.append(
                AssocResult(
                    snp_id=row["snp_id"], chromosome=row["chromosome"], position=int(row["position"]),
                    coding=row["coding"], n_used=int(row["n_used"]),
                    beta_snp=num("beta_snp"), se_snp=num("se_snp"), p_snp=num("p_snp"),
                    beta_int=num("beta_int"), se_int=num("se_int"), p_int=num("p_int"),
                    status=row["status"],
                )
            )
    return out
