"""Synthetic genotypes with population structure and short-range LD.

Subpopulation allele frequencies are drawn around an ancestral frequency
with the Balding-Nichols model. Each haplotype is a thresholded Gaussian
AR(1) sequence along the chromosome, which keeps every SNP's marginal
frequency exact while correlating neighbouring SNPs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from .genotype_io import GenotypeMatrix, SampleRecord, SnpRecord


def balding_nichols(ancestral: np.ndarray, fst: float, n_pops: int, rng) -> np.ndarray:
    """Subpopulation frequencies, shape (n_pops, m)."""
    if fst <= 0:
        return np.tile(ancestral, (n_pops, 1))
    a = ancestral * (1.0 - fst) / fst
    b = (1.0 - ancestral) * (1.0 - fst) / fst
    return np.clip(rng.beta(a, b, size=(n_pops, ancestral.size)), 1e-4, 1 - 1e-4)


def _haplotypes(freqs: np.ndarray, n_hap: int, rho: float, rng) -> np.ndarray:
    m = freqs.size
    z = np.empty((n_hap, m))
    z[:, 0] = rng.standard_normal(n_hap)
    innov = np.sqrt(1.0 - rho**2)
    for j in range(1, m):
        z[:, j] = rho * z[:, j - 1] + innov * rng.standard_normal(n_hap)
    return (z < ndtri(freqs)).astype(np.int8)


def structured_genotypes(
    n: int = 1000,
    m: int = 2000,
    populations=("CEU", "YRI", "CHB"),
    fst: float = 0.1,
    ld_rho: float = 0.5,
    freq_range=(0.05, 0.5),
    chromosome: str = "6",
    seed: int = 0,
):
    """Simulate ``n`` individuals split evenly across ``populations``.

    Returns:
        ``(matrix, samples, snps)``; dosages count allele1 copies, SNP ids are
        ``rs<j>`` and positions are spaced 1 kb apart.
    """
    rng = np.random.default_rng(seed)
    ancestral = rng.uniform(*freq_range, size=m)
    pop_freqs = balding_nichols(ancestral, fst, len(populations), rng)
    sizes = np.full(len(populations), n // len(populations))
    sizes[: n - sizes.sum()] += 1
    blocks, samples = [], []
    for k, (pop, size) in enumerate(zip(populations, sizes)):
        hap = _haplotypes(pop_freqs[k], 2 * size, ld_rho, rng)
        blocks.append(hap[0::2] + hap[1::2])
        for i in range(size):
            sex = "male" if rng.random() < 0.5 else "female"
            iid = f"{pop}{i:04d}"
            samples.append(SampleRecord(family_id=iid, individual_id=iid, sex=sex, population=pop))
    values = np.vstack(blocks)
    snps = [
        SnpRecord(chromosome=chromosome, snp_id=f"rs{j + 1}", genetic_distance=0.0, bp_position=1000 * (j + 1), allele1="A", allele2="G")
        for j in range(m)
    ]
    return GenotypeMatrix(values), samples, snps


def write_populations(path, samples) -> None:
    with open(path, "w") as fh:
        fh.write("individual_id\tpopulation\n")
        for s in samples:
            fh.write(f"{s.individual_id}\t{s.population}\n")
