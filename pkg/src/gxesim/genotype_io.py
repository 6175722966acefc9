"""Binary genotype triplet I/O, SNP quality control and region utilities.

The on-disk format is the common ``.bed`` / ``.bim`` / ``.fam`` triplet in
SNP-major mode. Genotypes are held in memory as an ``int8`` matrix of shape
``(n_individuals, n_snps)`` counting copies of allele1, with
:data:`MISSING` marking missing calls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

MISSING = -1
MAGIC = bytes([0x6C, 0x1B])
SNP_MAJOR = 0x01

# 2-bit code -> allele1 dosage; codes read from the low bits upward.
_CODE_TO_DOSAGE = np.array([2, MISSING, 1, 0], dtype=np.int8)
_DOSAGE_TO_CODE = {2: 0b00, MISSING: 0b01, 1: 0b10, 0: 0b11}


class GenotypeFormatError(ValueError):
    """Raised for malformed genotype files (bad magic, truncation, bad rows)."""


class UndefinedFrequencyError(ValueError):
    """Raised when an allele frequency is requested for an all-missing column."""


@dataclass(frozen=True)
class SampleRecord:
    family_id: str
    individual_id: str
    sex: str  # "male" | "female" | "unknown"
    phenotype_placeholder: int = -9
    population: str | None = None

    @property
    def sex_code(self) -> int:
        return {"male": 1, "female": 2}.get(self.sex, 0)


@dataclass(frozen=True)
class SnpRecord:
    chromosome: str
    snp_id: str
    genetic_distance: float
    bp_position: int
    allele1: str
    allele2: str

    def __post_init__(self):
        if self.bp_position < 0:
            raise ValueError(f"negative position for {self.snp_id}")


class GenotypeMatrix:
    """Immutable n x m allele1-dosage matrix (``MISSING`` for no call)."""

    def __init__(self, values):
        values = np.array(values, dtype=np.int8, copy=True)
        if values.ndim != 2:
            raise ValueError("genotype matrix must be 2-D (individuals x SNPs)")
        bad = (values != MISSING) & ((values < 0) | (values > 2))
        if bad.any():
            raise ValueError("genotype entries must be 0, 1, 2 or MISSING")
        values.setflags(write=False)
        self._values = values

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n(self) -> int:
        return self._values.shape[0]

    @property
    def m(self) -> int:
        return self._values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._values.shape

    def as_float(self, indices=None) -> np.ndarray:
        """Dosages as float64 with NaN for missing calls."""
        v = self._values if indices is None else self._values[:, indices]
        out = v.astype(np.float64)
        out[v == MISSING] = np.nan
        return out

    def column(self, j: int) -> np.ndarray:
        return self._values[:, j]

    def subset(self, indices) -> GenotypeMatrix:
        return GenotypeMatrix(self._values[:, indices])

    def __eq__(self, other):
        if not isinstance(other, GenotypeMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._values, other._values))

    def __repr__(self):
        return f"GenotypeMatrix(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class QcReport:
    snps_in: int
    removed_maf: int
    removed_hwe: int
    snps_out: int
    maf_min: float
    hwe_alpha: float
    kept_indices: tuple[int, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "snps_in": self.snps_in,
            "removed_maf": self.removed_maf,
            "removed_hwe": self.removed_hwe,
            "snps_out": self.snps_out,
            "maf_min": self.maf_min,
            "hwe_alpha": self.hwe_alpha,
        }


# --------------------------------------------------------------------------
# reading / writing


def _stem_paths(path_stem) -> tuple[Path, Path, Path]:
    stem = str(path_stem)
    for ext in (".bed", ".bim", ".fam"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
    return Path(stem + ".bed"), Path(stem + ".bim"), Path(stem + ".fam")


def _read_bim(path: Path) -> list[SnpRecord]:
    records = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise GenotypeFormatError(f"{path}: row {i + 1}: expected 6 columns, got {len(parts)}")
            try:
                records.append(
                    SnpRecord(
                        chromosome=parts[0],
                        snp_id=parts[1],
                        genetic_distance=float(parts[2]),
                        bp_position=int(parts[3]),
                        allele1=parts[4],
                        allele2=parts[5],
                    )
                )
            except ValueError as exc:
                raise GenotypeFormatError(f"{path}: row {i + 1}: {exc}") from exc
    ids = [r.snp_id for r in records]
    if len(set(ids)) != len(ids):
        raise GenotypeFormatError(f"{path}: duplicate SNP identifiers")
    return records


def _decode_sex(code: str) -> str:
    return {"1": "male", "2": "female"}.get(code, "unknown")


def _read_fam(path: Path) -> list[SampleRecord]:
    records = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise GenotypeFormatError(f"{path}: row {i + 1}: expected 6 columns, got {len(parts)}")
            try:
                pheno = int(float(parts[5]))
            except ValueError as exc:
                raise GenotypeFormatError(f"{path}: row {i + 1}: bad phenotype field {parts[5]!r}") from exc
            records.append(
                SampleRecord(
                    family_id=parts[0],
                    individual_id=parts[1],
                    sex=_decode_sex(parts[4]),
                    phenotype_placeholder=pheno,
                )
            )
    ids = [r.individual_id for r in records]
    if len(set(ids)) != len(ids):
        raise GenotypeFormatError(f"{path}: duplicate individual identifiers")
    return records


def decode_bed_block(block: bytes | np.ndarray, n: int) -> np.ndarray:
    """Decode one SNP's packed bytes into ``n`` dosages."""
    raw = np.frombuffer(bytes(block), dtype=np.uint8) if not isinstance(block, np.ndarray) else block
    shifts = np.array([0, 2, 4, 6], dtype=np.uint8)
    codes = (raw[..., :, None] >> shifts) & 0b11
    codes = codes.reshape(*raw.shape[:-1], -1)[..., :n]
    return _CODE_TO_DOSAGE[codes]


def read_genotype_triplet(path_stem) -> tuple[GenotypeMatrix, list[SampleRecord], list[SnpRecord]]:
    """Read a SNP-major binary genotype triplet.

    Args:
        path_stem: Path prefix shared by the ``.bed``, ``.bim`` and ``.fam`` files.

    Returns:
        ``(matrix, samples, snps)`` with ``matrix`` of shape ``(len(samples), len(snps))``.

    Raises:
        FileNotFoundError: If any of the three files is missing.
        GenotypeFormatError: On bad magic bytes, a non SNP-major mode byte,
            a file length that does not match the tables, or an unparsable row.
    """
    bed, bim, fam = _stem_paths(path_stem)
    for p in (bed, bim, fam):
        if not p.exists():
            raise FileNotFoundError(f"genotype file not found: {p}")
    snps = _read_bim(bim)
    samples = _read_fam(fam)
    n, m = len(samples), len(snps)

    data = bed.read_bytes()
    if len(data) < 3 or data[:2] != MAGIC:
        raise GenotypeFormatError(f"{bed}: bad magic bytes")
    if data[2] != SNP_MAJOR:
        raise GenotypeFormatError(f"{bed}: mode byte {data[2]:#04x} unsupported (only SNP-major 0x01)")
    block = (n + 3) // 4
    expected = 3 + m * block
    if len(data) != expected:
        raise GenotypeFormatError(f"{bed}: truncated or oversized file: {len(data)} bytes, expected {expected}")

    payload = np.frombuffer(data, dtype=np.uint8, offset=3).reshape(m, block)
    dosages = decode_bed_block(payload, n) if m else np.zeros((0, n), dtype=np.int8)
    return GenotypeMatrix(dosages.T), samples, snps


def encode_bed_payload(values: np.ndarray) -> bytes:
    """Pack an (n, m) dosage matrix into SNP-major blocks, zero-padded."""
    n, m = values.shape
    block = (n + 3) // 4
    codes = np.full((m, block * 4), 0, dtype=np.uint8)
    lut = np.zeros(256, dtype=np.uint8)
    for dosage, code in _DOSAGE_TO_CODE.items():
        lut[dosage & 0xFF] = code
    codes[:, :n] = lut[values.T.astype(np.int16) & 0xFF]
    codes = codes.reshape(m, block, 4)
    packed = codes[..., 0] | (codes[..., 1] << 2) | (codes[..., 2] << 4) | (codes[..., 3] << 6)
    return packed.astype(np.uint8).tobytes()


def write_genotype_triplet(matrix: GenotypeMatrix, samples, snps, path_stem) -> tuple[Path, Path, Path]:
    """Write ``matrix`` with its tables as a SNP-major triplet at ``path_stem``."""
    if matrix.n != len(samples) or matrix.m != len(snps):
        raise ValueError(
            f"matrix is {matrix.n}x{matrix.m} but tables have {len(samples)} samples, {len(snps)} SNPs"
        )
    bed, bim, fam = _stem_paths(path_stem)
    bed.parent.mkdir(parents=True, exist_ok=True)
    with open(bed, "wb") as fh:
        fh.write(MAGIC + bytes([SNP_MAJOR]))
        fh.write(encode_bed_payload(matrix.values))
    with open(bim, "w") as fh:
        for s in snps:
            fh.write(
                f"{s.chromosome}\t{s.snp_id}\t{s.genetic_distance:g}\t{s.bp_position}\t{s.allele1}\t{s.allele2}\n"
            )
    with open(fam, "w") as fh:
        for r in samples:
            fh.write(f"{r.family_id}\t{r.individual_id}\t0\t0\t{r.sex_code}\t{r.phenotype_placeholder}\n")
    return bed, bim, fam


def read_populations(path, samples: list[SampleRecord]) -> list[SampleRecord]:
    """Attach population labels from a two-column (individual_id, population) table."""
    labels = {}
    with open(path) as fh:
        for i, line in enumerate(fh):
            parts = line.split()
            if not parts or parts[0].startswith("#") or (parts[0] == "individual_id"):
                continue
            if len(parts) < 2:
                raise GenotypeFormatError(f"{path}: row {i + 1}: expected individual_id and population")
            labels[parts[0]] = parts[1]
    missing = [s.individual_id for s in samples if s.individual_id not in labels]
    if missing:
        raise GenotypeFormatError(f"{path}: no population for {len(missing)} individuals, e.g. {missing[:3]}")
    return [replace(s, population=labels[s.individual_id]) for s in samples]


# --------------------------------------------------------------------------
# allele frequency, HWE and QC


def _nonmissing(column) -> np.ndarray:
    col = np.asarray(column)
    if col.dtype.kind == "f":
        return col[~np.isnan(col)]
    return col[col != MISSING]


def allele1_frequency(column) -> float:
    obs = _nonmissing(column)
    if obs.size == 0:
        raise UndefinedFrequencyError("allele frequency undefined for an all-missing column")
    return float(obs.sum()) / (2.0 * obs.size)


def minor_allele_frequency(column) -> float:
    """Minor allele frequency ``min(f, 1 - f)`` over non-missing calls."""
    f = allele1_frequency(column)
    return min(f, 1.0 - f)


def genotype_counts(column) -> tuple[int, int, int]:
    obs = _nonmissing(column)
    return int(np.sum(obs == 0)), int(np.sum(obs == 1)), int(np.sum(obs == 2))


def hwe_chisq_pvalue(n0, n1, n2) -> np.ndarray:
    """1-df chi-square HWE p-values from genotype counts (vectorized).

    Monomorphic columns (no departure testable) get p = 1.
    """
    n0, n1, n2 = (np.asarray(x, dtype=np.float64) for x in (n0, n1, n2))
    total = n0 + n1 + n2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (n1 + 2.0 * n2) / (2.0 * total)
        e0 = total * (1.0 - f) ** 2
        e1 = 2.0 * total * f * (1.0 - f)
        e2 = total * f**2
        chi2 = (n0 - e0) ** 2 / e0 + (n1 - e1) ** 2 / e1 + (n2 - e2) ** 2 / e2
    p = stats.chi2.sf(chi2, df=1)
    mono = (total == 0) | (f <= 0.0) | (f >= 1.0)
    return np.where(mono, 1.0, p)


def hwe_test(column) -> float:
    """HWE goodness-of-fit p-value for one dosage column."""
    obs = _nonmissing(column)
    if obs.size == 0:
        raise UndefinedFrequencyError("HWE test undefined for an all-missing column")
    return float(hwe_chisq_pvalue(*genotype_counts(obs)))


def column_stats(matrix: GenotypeMatrix) -> dict[str, np.ndarray]:
    """Per-SNP genotype counts, allele1 frequency, MAF and HWE p-value."""
    v = matrix.values
    n0 = (v == 0).sum(axis=0)
    n1 = (v == 1).sum(axis=0)
    n2 = (v == 2).sum(axis=0)
    called = n0 + n1 + n2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (n1 + 2.0 * n2) / (2.0 * called)
    return {
        "n0": n0,
        "n1": n1,
        "n2": n2,
        "called": called,
        "freq": f,
        "maf": np.minimum(f, 1.0 - f),
        "hwe_p": hwe_chisq_pvalue(n0, n1, n2),
    }


def filter_snps(matrix: GenotypeMatrix, maf_min: float = 0.05, hwe_alpha: float = 1e-6):
    """Keep SNPs with MAF >= ``maf_min`` and HWE p >= ``hwe_alpha``.

    All-missing SNPs count as MAF failures. A SNP failing both criteria is
    reported under ``removed_maf`` only.

    Returns:
        ``(filtered_matrix, report)``; ``report.kept_indices`` indexes the input columns.
    """
    if not 0.0 <= maf_min < 0.5:
        raise ValueError(f"maf_min must lie in [0, 0.5), got {maf_min}")
    if not 0.0 < hwe_alpha < 1.0:
        raise ValueError(f"hwe_alpha must lie in (0, 1), got {hwe_alpha}")
    st = column_stats(matrix)
    fail_maf = ~(st["maf"] >= maf_min)  # NaN (all missing) fails
    fail_hwe = st["hwe_p"] < hwe_alpha
    keep = ~fail_maf & ~fail_hwe
    kept = np.flatnonzero(keep)
    report = QcReport(
        snps_in=matrix.m,
        removed_maf=int(fail_maf.sum()),
        removed_hwe=int((fail_hwe & ~fail_maf).sum()),
        snps_out=int(keep.sum()),
        maf_min=maf_min,
        hwe_alpha=hwe_alpha,
        kept_indices=tuple(int(i) for i in kept),
    )
    logger.info("QC kept %d of %d SNPs", report.snps_out, report.snps_in)
    return matrix.subset(kept), report


def orient_to_minor(matrix: GenotypeMatrix, snps: list[SnpRecord]):
    """Swap allele labels where allele1 is the major allele.

    After this, every dosage counts copies of the minor allele, so dominant
    coding means "carries at least one minor allele".
    """
    f = column_stats(matrix)["freq"]
    flip = np.flatnonzero(f > 0.5)
    values = matrix.values.copy()
    sub = values[:, flip]
    values[:, flip] = np.where(sub == MISSING, MISSING, 2 - sub)
    new_snps = list(snps)
    for j in flip:
        s = snps[j]
        new_snps[j] = replace(s, allele1=s.allele2, allele2=s.allele1)
    return GenotypeMatrix(values), new_snps


# --------------------------------------------------------------------------
# SNP selection and encoding


def thin_snps(snps, step: int = 1000) -> list[int]:
    """Indices 0, step, 2*step, ... below the SNP count."""
    if step < 1:
        raise ValueError("step must be >= 1")
    m = snps if isinstance(snps, (int, np.integer)) else len(snps)
    return list(range(0, int(m), step))


def find_snp(snps: list[SnpRecord], snp_id: str | None = None, chromosome=None, position=None) -> int:
    """Index of a SNP given its identifier or its (chromosome, position)."""
    if snp_id is not None:
        for i, s in enumerate(snps):
            if s.snp_id == snp_id:
                return i
        raise LookupError(f"unknown SNP id {snp_id!r}")
    if position is None:
        raise ValueError("need a SNP id or a position")
    for i, s in enumerate(snps):
        if s.bp_position == int(position) and (chromosome is None or s.chromosome == str(chromosome)):
            return i
    raise LookupError(f"no SNP at chromosome {chromosome} position {position}")


def window_indices(m: int, center: int, width: int) -> range:
    """Contiguous window of ``min(width, m)`` indices around ``center``.

    The window is shifted, not shrunk, at the edges.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if not 0 <= center < m:
        raise IndexError(f"center {center} outside 0..{m - 1}")
    w = min(width, m)
    start = center - w // 2
    start = max(0, min(start, m - w))
    return range(start, start + w)


def select_region(snps: list[SnpRecord], center_snp_id: str, width: int) -> range:
    """Window of ``width`` SNPs centred on ``center_snp_id``."""
    return window_indices(len(snps), find_snp(snps, center_snp_id), width)


def dominant_encode(column) -> np.ndarray:
    """0 -> 0, 1/2 -> 1; missing stays missing (same representation as input)."""
    col = np.asarray(column)
    if col.dtype.kind == "f":
        return np.where(np.isnan(col), np.nan, (col > 0).astype(np.float64))
    return np.where(col == MISSING, MISSING, (col > 0)).astype(col.dtype if col.dtype.kind == "i" else np.int8)
