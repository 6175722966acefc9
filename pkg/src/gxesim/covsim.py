"""Covariate cascade: smoking from sex and subpopulation, bmi from PCs and
smoking, and a latent treatment exposure from sex, bmi and population."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .textio import data_lines

SUBPOPULATIONS = ("European", "African", "Asian")

# Population order used when assigning default treatment shifts.
POPULATION_ORDER = ("MEX", "YRI", "ASW", "CEU", "MKK", "CHB", "CHD", "GIH", "JPT", "LWK", "TSI")

DEFAULT_SUBPOP_MAP = {
    "CEU": "European",
    "TSI": "European",
    "MEX": "European",
    "YRI": "African",
    "ASW": "African",
    "MKK": "African",
    "LWK": "African",
    "CHB": "Asian",
    "CHD": "Asian",
    "JPT": "Asian",
    "GIH": "Asian",
}

SHIFT_VALUES = (-math.inf, -0.1, 0.0, 0.15, -0.45, 0.35, 0.6, -0.4, 0.05, 0.1)


class CovariateConfigError(ValueError):
    pass


def default_gamma_map(populations=POPULATION_ORDER) -> dict[str, float]:
    """First population gets -inf, populations 2..11 the ten default shifts."""
    pops = list(populations)
    gammas = {pops[0]: -math.inf}
    for pop, g in zip(pops[1:], SHIFT_VALUES):
        gammas[pop] = g
    return gammas


@dataclass(frozen=True)
class SmokingRates:
    rates: dict  # (subpopulation, sex) -> probability

    def __post_init__(self):
        for key, p in self.rates.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"smoking rate {key} = {p} outside [0, 1]")

    def rate(self, subpopulation: str, sex: str) -> float:
        if sex == "unknown":
            return 0.5 * (self.rates[(subpopulation, "male")] + self.rates[(subpopulation, "female")])
        return self.rates[(subpopulation, sex)]


def default_smoking_rates() -> SmokingRates:
    return SmokingRates(
        {
            ("European", "male"): 0.37,
            ("European", "female"): 0.27,
            ("African", "male"): 0.438,
            ("African", "female"): 0.129,
            ("Asian", "male"): 0.457,
            ("Asian", "female"): 0.048,
        }
    )


@dataclass
class CovSimConfig:
    heritability: float = 0.60
    residual_sd: float = 4.0
    nonsmoker_offset: float = 1.5
    bmi_baseline: float = 25.0
    gamma: dict = field(default_factory=default_gamma_map)
    subpop_map: dict = field(default_factory=lambda: dict(DEFAULT_SUBPOP_MAP))
    smoking_rates: SmokingRates = field(default_factory=default_smoking_rates)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.heritability < 1.0:
            raise CovariateConfigError(f"heritability must lie in [0, 1), got {self.heritability}")
        if not self.residual_sd > 0:
            raise CovariateConfigError("residual_sd must be positive")


@dataclass
class CovariateTable:
    individual_ids: list
    sex: np.ndarray  # 1 male, 2 female, 0 unknown
    smoking: np.ndarray
    bmi: np.ndarray
    pcs: np.ndarray  # n x 5
    population: list
    treatment: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.individual_ids)

    def column(self, name: str) -> np.ndarray:
        if name == "sex":
            return (self.sex == 1).astype(float)
        if name in ("smoking", "bmi"):
            return np.asarray(getattr(self, name), dtype=float)
        if name == "treatment":
            if self.treatment is None:
                raise KeyError("treatment was not simulated")
            return self.treatment.astype(float)
        if name.startswith("pc") and name[2:].isdigit():
            return self.pcs[:, int(name[2:]) - 1]
        raise KeyError(f"unknown covariate {name!r}")

    def design(self, names) -> np.ndarray:
        return np.column_stack([self.column(c) for c in names]) if names else np.empty((self.n, 0))


def simulate_smoking(samples, subpop_map, rates: SmokingRates, rng) -> np.ndarray:
    """Bernoulli smoking status at each individual's (subpopulation, sex) rate."""
    probs = np.empty(len(samples))
    for i, s in enumerate(samples):
        if s.population not in subpop_map:
            raise CovariateConfigError(f"population {s.population!r} of {s.individual_id} has no subpopulation")
        probs[i] = rates.rate(subpop_map[s.population], s.sex)
    return (rng.random(len(samples)) < probs).astype(np.int8)


def simulate_bmi(pcs, smoking, config: CovSimConfig, rng) -> np.ndarray:
    """bmi = baseline + offset * nonsmoker + pcs @ beta + noise.

    ``beta`` is drawn standard normal and rescaled so the realized sample
    variance of the genetic part is exactly the configured fraction of
    (genetic + residual variance).
    """
    pcs = np.asarray(pcs, dtype=float)
    smoking = np.asarray(smoking)
    n = pcs.shape[0]
    if not config.heritability < 1.0:
        raise CovariateConfigError("heritability must be < 1")
    beta = rng.standard_normal(pcs.shape[1])
    sigma2 = config.residual_sd**2
    if config.heritability == 0.0:
        g = np.zeros(n)
    else:
        g = pcs @ beta
        v = np.var(g, ddof=1)
        if not v > 0:
            raise CovariateConfigError("genetic component has zero variance; PCs are degenerate")
        target = config.heritability * sigma2 / (1.0 - config.heritability)
        g = g * math.sqrt(target / v)
    eps = rng.normal(0.0, config.residual_sd, n)
    return config.bmi_baseline + config.nonsmoker_offset * (smoking == 0) + g + eps


def treatment_probability(sex, bmi, gamma):
    """P(treatment) = 1 / ((1 + 2 * male) * (1 + exp(25 + gamma - bmi))).

    ``sex`` may be 1/2 codes, "male"/"female" labels, or booleans for male.
    ``gamma = -inf`` is accepted as a limit.
    """
    sex_arr = np.asarray(sex)
    if sex_arr.dtype.kind in "US":
        male = sex_arr == "male"
    elif sex_arr.dtype.kind == "b":
        male = sex_arr
    else:
        male = sex_arr == 1
    z = 25.0 + np.asarray(gamma, dtype=float) - np.asarray(bmi, dtype=float)
    p = expit(-z) / (1.0 + 2.0 * male)
    return p if np.ndim(p) else float(p)


def simulate_treatment(sex, bmi, gamma_map, populations, rng) -> np.ndarray:
    missing = sorted({p for p in populations if p not in gamma_map})
    if missing:
        raise CovariateConfigError(f"no treatment shift configured for population(s) {missing}")
    gamma = np.array([gamma_map[p] for p in populations], dtype=float)
    p = treatment_probability(np.asarray(sex), bmi, gamma)
    return (rng.random(len(populations)) < p).astype(np.int8)


def simulate_covariates(samples, pcs, config: CovSimConfig, with_treatment: bool = True) -> CovariateTable:
    """Run the whole cascade from one RNG seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    pcs = np.asarray(pcs, dtype=float)
    smoking = simulate_smoking(samples, config.subpop_map, config.smoking_rates, rng)
    bmi = simulate_bmi(pcs, smoking, config, rng)
    sex = np.array([s.sex_code for s in samples], dtype=np.int8)
    populations = [s.population for s in samples]
    treatment = simulate_treatment(sex, bmi, config.gamma, populations, rng) if with_treatment else None
    return CovariateTable(
        individual_ids=[s.individual_id for s in samples],
        sex=sex,
        smoking=smoking,
        bmi=bmi,
        pcs=pcs,
        population=populations,
        treatment=treatment,
    )


def write_covariates_tsv(path, table: CovariateTable) -> None:
    k = table.pcs.shape[1]
    header = ["individual_id", "sex", "smoking", "bmi", "treatment"] + [f"pc{j + 1}" for j in range(k)] + ["population"]
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for i, iid in enumerate(table.individual_ids):
            treat = "NA" if table.treatment is None else str(int(table.treatment[i]))
            row = [iid, str(int(table.sex[i])), str(int(table.smoking[i])), repr(float(table.bmi[i])), treat]
            row += [repr(float(v)) for v in table.pcs[i]]
            row.append(str(table.population[i]))
            fh.write("\t".join(row) + "\n")


def read_covariates_tsv(path) -> CovariateTable:
    with open(path) as fh:
        lines = data_lines(fh)
        header = next(lines, "").rstrip("\n").split("\t")
        rows = [line.rstrip("\n").split("\t") for line in lines]
    col = {name: i for i, name in enumerate(header)}
    required = ["individual_id", "sex", "smoking", "bmi", "population"]
    absent = [c for c in required if c not in col]
    if absent:
        raise ValueError(f"{path}: missing columns {absent}")
    pc_names = sorted((c for c in header if c.startswith("pc") and c[2:].isdigit()), key=lambda c: int(c[2:]))
    treat = None
    if "treatment" in col and rows and rows[0][col["treatment"]] != "NA":
        treat = np.array([int(r[col["treatment"]]) for r in rows], dtype=np.int8)
    return CovariateTable(
        individual_ids=[r[col["individual_id"]] for r in rows],
        sex=np.array([int(r[col["sex"]]) for r in rows], dtype=np.int8),
        smoking=np.array([int(r[col["smoking"]]) for r in rows], dtype=np.int8),
        bmi=np.array([float(r[col["bmi"]]) for r in rows]),
        pcs=np.array([[float(r[col[c]]) for c in pc_names] for r in rows]).reshape(len(rows), len(pc_names)),
        population=[r[col["population"]] for r in rows],
        treatment=treat,
    )
