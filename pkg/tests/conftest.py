import numpy as np
import pytest

from gxesim.genotype_io import GenotypeMatrix, SampleRecord, SnpRecord


def make_samples(n, sexes=("male", "female")):
    return [SampleRecord(f"F{i}", f"I{i}", sexes[i % len(sexes)]) for i in range(n)]


def make_snps(m, chromosome="6"):
    return [SnpRecord(chromosome, f"rs{j + 1}", 0.0, 100 * (j + 1), "A", "G") for j in range(m)]


def random_hwe_matrix(n, m, rng, freq_range=(0.1, 0.9), missing_rate=0.0):
    f = rng.uniform(*freq_range, size=m)
    values = rng.binomial(2, f, size=(n, m)).astype(np.int8)
    if missing_rate:
        values[rng.random((n, m)) < missing_rate] = -1
    return GenotypeMatrix(values)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
