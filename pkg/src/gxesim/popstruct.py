"""Genotype standardization, principal components and the genetic relatedness matrix."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .genotype_io import GenotypeMatrix, thin_snps
from .textio import data_lines

logger = logging.getLogger(__name__)


class RankError(ValueError):
    pass


@dataclass
class Standardized:
    values: np.ndarray  # n x m'
    snp_indices_used: list[int]
    excluded: list[int]


@dataclass
class PcaResult:
    scores: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    snp_indices_used: list[int]

    @property
    def k(self) -> int:
        return self.scores.shape[1]


@dataclass
class Kinship:
    matrix: np.ndarray
    snp_indices_used: list[int]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def standardize(matrix: GenotypeMatrix, indices=None) -> Standardized:
    """Centre each selected SNP and scale it to unit sample variance.

    Missing calls become 0 after centring, i.e. they are filled with the
    column mean. Columns with zero variance are dropped with a warning.
    """
    idx = np.arange(matrix.m) if indices is None else np.asarray(list(indices), dtype=np.int64)
    x = matrix.as_float(idx)
    obs = ~np.isnan(x)
    count = obs.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(obs, x, 0.0).sum(axis=0) / count
        centred = np.where(obs, x - mean, 0.0)
        var = (centred**2).sum(axis=0) / (count - 1)
    ok = (count > 1) & np.isfinite(var) & (var > 0)
    excluded = [int(i) for i in idx[~ok]]
    if excluded:
        warnings.warn(f"{len(excluded)} zero-variance SNP(s) excluded from standardization", stacklevel=2)
    values = centred[:, ok] / np.sqrt(var[ok])
    return Standardized(values=values, snp_indices_used=[int(i) for i in idx[ok]], excluded=excluded)


def _numerical_rank(sv: np.ndarray, shape) -> int:
    if sv.size == 0:
        return 0
    tol = sv.max() * max(shape) * np.finfo(float).eps
    return int(np.sum(sv > tol))


def pca(matrix: GenotypeMatrix, k: int = 5, thin_step: int = 1000, indices=None) -> PcaResult:
    """Top-``k`` principal components of the standardized (thinned) genotypes.

    Eigenvalues are those of the sample covariance ``S'S / (n - 1)``, so the
    variance of score column j equals eigenvalue j. Each loading column is
    signed so that its largest-magnitude entry is positive.
    """
    if indices is None:
        indices = thin_snps(matrix.m, thin_step)
    std = standardize(matrix, indices)
    s = std.values
    n = s.shape[0]
    _, sv, vt = np.linalg.svd(s, full_matrices=False)
    rank = _numerical_rank(sv, s.shape)
    if k > rank:
        raise RankError(f"requested {k} components but the standardized matrix has rank {rank}")
    loadings = vt[:k].T.copy()
    pivot = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    loadings *= signs
    scores = s @ loadings
    eigenvalues = sv[:k] ** 2 / (n - 1)
    return PcaResult(scores=scores, loadings=loadings, eigenvalues=eigenvalues, snp_indices_used=std.snp_indices_used)


def grm(matrix: GenotypeMatrix, indices=None) -> Kinship:
    """Genetic relatedness ``S S' / m'`` over the usable selected SNPs."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        std = standardize(matrix, indices)
    if not std.snp_indices_used:
        raise ValueError("no usable SNPs for the relatedness matrix")
    s = std.values
    k = s @ s.T / s.shape[1]
    k = 0.5 * (k + k.T)
    return Kinship(matrix=k, snp_indices_used=std.snp_indices_used)


def write_scores_tsv(path, individual_ids, result: PcaResult) -> None:
    with open(path, "w") as fh:
        fh.write("individual_id\t" + "\t".join(f"pc{j + 1}" for j in range(result.k)) + "\n")
        for iid, row in zip(individual_ids, result.scores):
            fh.write(iid + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def read_scores_tsv(path) -> tuple[list[str], np.ndarray]:
    ids, rows = [], []
    with open(path) as fh:
        lines = data_lines(fh)
        header = next(lines, "").split()
        if not header or header[0] != "individual_id":
            raise ValueError(f"{path}: expected an individual_id header")
        for line in lines:
            parts = line.split()
            if parts:
                ids.append(parts[0])
                rows.append([float(v) for v in parts[1:]])
    return ids, np.array(rows)


def write_scatter_tsv(path, individual_ids, populations, result: PcaResult) -> None:
    """Long-format pairwise scatter data (one row per individual per PC pair)."""
    with open(path, "w") as fh:
        fh.write("individual_id\tpopulation\tpc_x\tpc_y\tx\ty\n")
        for a in range(result.k):
            for b in range(a + 1, result.k):
                for i, iid in enumerate(individual_ids):
                    pop = populations[i] if populations is not None else "NA"
                    fh.write(
                        f"{iid}\t{pop}\tpc{a + 1}\tpc{b + 1}\t"
                        f"{result.scores[i, a]!r}\t{result.scores[i, b]!r}\n"
                    )
