"""Spectral linear mixed model scan.

The phenotype is modelled as ``y ~ N(X beta, sigma_g2 * (K + delta * I))``.
Rotating by the eigenvectors of K makes the covariance diagonal, so the
likelihood of any ``delta`` is a weighted least-squares problem. ``delta`` is
estimated once on the covariates-only model and held fixed for every SNP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .assoc import AssocResult
from .genotype_io import MISSING, GenotypeMatrix
from .popstruct import Kinship

LOG_DELTA_GRID = np.linspace(-10.0, 10.0, 61)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SpectralKinship:
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


@dataclass
class LmmFit:
    delta: float
    sigma_g2: float
    log_likelihood: float
    beta: np.ndarray
    at_boundary: bool = False


def eigendecompose_kinship(kinship, sym_tol: float = 1e-8) -> SpectralKinship:
    """Full symmetric eigendecomposition, eigenvalues in nonincreasing order.

    Tiny negative eigenvalues (above ``-1e-8 * trace / n``) are set to zero.
    """
    k = np.asarray(kinship.matrix if isinstance(kinship, Kinship) else kinship, dtype=float)
    n = k.shape[0]
    scale = max(np.abs(k).max(), 1e-300)
    if np.abs(k - k.T).max() > sym_tol * scale:
        raise ValueError("kinship matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (k + k.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    floor = -1e-8 * abs(np.trace(k)) / n
    if vals.min() < floor:
        raise ValueError(f"kinship matrix is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    vals = np.where(vals < 0, 0.0, vals)
    return SpectralKinship(eigenvectors=vecs, eigenvalues=vals)


class _Rotated:
    def __init__(self, y, x, spec: SpectralKinship):
        u = spec.eigenvectors
        self.s = spec.eigenvalues
        self.uy = u.T @ np.asarray(y, dtype=float)
        self.ux = u.T @ np.asarray(x, dtype=float).reshape(len(self.uy), -1)
        self.n = len(self.uy)

    def gls(self, delta: float):
        d = self.s + delta
        w = 1.0 / d
        xtw = self.ux.T * w
        beta = np.linalg.solve(xtw @ self.ux, xtw @ self.uy)
        r = self.uy - self.ux @ beta
        return beta, d, float(np.sum(w * r * r))

    def profile_loglik(self, delta: float) -> tuple[float, np.ndarray, float]:
        beta, d, rss = self.gls(delta)
        sigma_g2 = rss / self.n
        ll = -0.5 * (self.n * math.log(2.0 * math.pi) + np.sum(np.log(d)) + self.n * math.log(sigma_g2) + self.n)
        return float(ll), beta, sigma_g2


def lmm_loglik(y, x, beta, sigma_g2: float, delta: float, spec: SpectralKinship) -> float:
    """Log-likelihood at explicit parameters, evaluated in the rotated basis."""
    rot = _Rotated(y, x, spec)
    d = sigma_g2 * (rot.s + delta)
    r = rot.uy - rot.ux @ np.asarray(beta, dtype=float)
    return float(-0.5 * (rot.n * math.log(2.0 * math.pi) + np.sum(np.log(d)) + np.sum(r * r / d)))


def _golden_max(f, lo: float, hi: float, tol: float = 1e-6):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_null_delta(y, x, spec: SpectralKinship) -> LmmFit:
    """Maximum-likelihood ``delta = sigma_e2 / sigma_g2`` on the covariates-only model.

    Grid search over 61 points of log(delta) in [-10, 10], then golden-section
    refinement between the neighbours of the best grid point. An optimum on
    the grid edge is flagged through ``at_boundary``.
    """
    rot = _Rotated(y, x, spec)
    if np.linalg.matrix_rank(rot.ux) < rot.ux.shape[1]:
        raise ValueError("covariate design is not full rank")
    grid_ll = np.array([rot.profile_loglik(math.exp(t))[0] for t in LOG_DELTA_GRID])
    best = int(np.argmax(grid_ll))
    lo = LOG_DELTA_GRID[max(best - 1, 0)]
    hi = LOG_DELTA_GRID[min(best + 1, len(LOG_DELTA_GRID) - 1)]
    log_delta = _golden_max(lambda t: rot.profile_loglik(math.exp(t))[0], lo, hi)
    if rot.profile_loglik(math.exp(log_delta))[0] < grid_ll[best]:
        log_delta = float(LOG_DELTA_GRID[best])
    delta = math.exp(log_delta)
    ll, beta, sigma_g2 = rot.profile_loglik(delta)
    at_edge = best in (0, len(LOG_DELTA_GRID) - 1)
    return LmmFit(delta=delta, sigma_g2=sigma_g2, log_likelihood=ll, beta=beta, at_boundary=at_edge)


def _mean_imputed(matrix) -> np.ndarray:
    if isinstance(matrix, GenotypeMatrix):
        g = matrix.as_float()
    else:
        g = np.asarray(matrix, dtype=float)
        g = np.where(g == MISSING, np.nan, g)
    if np.isnan(g).any():
        mean = np.nanmean(g, axis=0)
        g = np.where(np.isnan(g), mean, g)
    return g


def lmm_scan(matrix, y, x, spec: SpectralKinship, null_fit: LmmFit, snps=None, chunk: int = 2048) -> list[AssocResult]:
    """Per-SNP generalized least squares with ``delta`` fixed at the null estimate.

    Missing genotypes are mean-imputed (the rotation mixes individuals, so
    per-SNP deletion is not available). The SNP coefficient is tested with a
    t statistic on ``n - q - 1`` degrees of freedom.
    """
    rot = _Rotated(y, x, spec)
    g_all = _mean_imputed(matrix)
    n, m = g_all.shape
    q = rot.ux.shape[1]
    df = n - q - 1
    w = 1.0 / (rot.s + null_fit.delta)
    xtw = rot.ux.T * w
    xwx_inv = np.linalg.inv(xtw @ rot.ux)
    xwy = xtw @ rot.uy
    beta0 = xwx_inv @ xwy
    r0 = rot.uy - rot.ux @ beta0
    rss0 = float(np.sum(w * r0 * r0))
    u_t = spec.eigenvectors.T
    results = []
    for c0 in range(0, m, chunk):
        ug = u_t @ g_all[:, c0 : c0 + chunk]
        wug = ug * w[:, None]
        a = xtw @ ug  # q x m
        gg = np.einsum("ij,ij->j", ug, wug)
        gy = wug.T @ rot.uy
        schur = gg - np.einsum("im,ij,jm->m", a, xwx_inv, a)
        num = gy - a.T @ beta0
        with np.errstate(invalid="ignore", divide="ignore"):
            beta_g = num / schur
            rss = rss0 - num * beta_g
            se = np.sqrt(rss / df / schur)
            tstat = beta_g / se
        p = 2.0 * stats.t.sf(np.abs(tstat), df)
        degenerate = ~(schur > 1e-10 * np.maximum(gg, 1e-300)) | ~np.isfinite(p)
        for k in range(ug.shape[1]):
            j = c0 + k
            sid, chrom, pos = (f"snp{j}", "NA", 0) if snps is None else (snps[j].snp_id, snps[j].chromosome, snps[j].bp_position)
            if degenerate[k]:
                results.append(AssocResult(sid, None, None, None, status="degenerate", chromosome=chrom, position=pos, n_used=n))
            else:
                results.append(
                    AssocResult(
                        sid, float(beta_g[k]), float(se[k]), float(p[k]),
                        status="ok", chromosome=chrom, position=pos, n_used=n,
                    )
                )
    return results
