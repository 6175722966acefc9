"""Run configuration: a sectioned key = value text file (configparser dialect)."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .assoc import ScanConfig
from .covsim import DEFAULT_SUBPOP_MAP, CovSimConfig, default_gamma_map, default_smoking_rates
from .phenosim import DiseaseModel, ModelValidityError

METHODS = ("snp", "snp_x_cov", "lmm")
DEFAULT_REGIONS = ("whole", "8000", "2000", "800", "200", "1")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    genotypes: Path
    output: Path
    populations: Path | None = None
    covariates: Path | None = None
    maf_min: float = 0.05
    hwe_alpha: float = 1e-6
    force_minor: bool = True
    pca_k: int = 5
    thin_step: int = 1000
    grm_snps: str = "thinned"
    covsim: CovSimConfig = field(default_factory=CovSimConfig)
    model: DiseaseModel = field(default_factory=DiseaseModel)
    causal_chromosome: str | None = None
    causal_position: int | None = None
    n_h0: int = 200
    n_h1: int = 200
    n_cases: int = 595
    exposure: str = "bmi"
    interaction_covariate: str | None = "bmi"
    snp_coding: str = "additive"
    irls_tol: float = 1e-8
    max_iter: int = 25
    lmm_pcs: bool = False
    regions: tuple = DEFAULT_REGIONS
    methods: tuple = METHODS
    manhattan_replicate: int = 0
    seed: int = 1
    threads: int = 1
    text: str = ""

    @property
    def base_covariates(self) -> tuple:
        return ("sex", "smoking", self.exposure) + tuple(f"pc{j + 1}" for j in range(self.pca_k))

    def scan_config(self, method: str) -> ScanConfig:
        inter = self.interaction_covariate if method == "snp_x_cov" else None
        return ScanConfig(
            covariates=self.base_covariates,
            interaction_covariate=inter,
            snp_coding=self.snp_coding,
            tol=self.irls_tol,
            max_iter=self.max_iter,
        )

    def lmm_covariates(self) -> tuple:
        extra = tuple(f"pc{j + 1}" for j in range(self.pca_k)) if self.lmm_pcs else ()
        return ("sex", "smoking", self.exposure) + extra

    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]

    def region_widths(self, m: int) -> dict[str, int]:
        out = {}
        for r in self.regions:
            out[r] = m if r == "whole" else int(r)
        return out


def _float(s: str) -> float:
    s = s.strip().lower()
    if s in ("-inf", "-infinity"):
        return -math.inf
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    return float(s)


def _list(s: str) -> tuple:
    return tuple(x.strip() for x in s.replace(",", " ").split() if x.strip())


def _canonical(cp: configparser.ConfigParser) -> str:
    lines = []
    for sec in sorted(cp.sections()):
        lines.append(f"[{sec}]")
        for key in sorted(cp[sec]):
            lines.append(f"{key} = {cp[sec][key]}")
    return "\n".join(lines) + "\n"


def load_config(path, seed: int | None = None, threads: int | None = None, check_files: bool = True) -> RunConfig:
    """Parse and validate a run configuration file.

    Relative paths are resolved against the configuration file's directory.
    ``seed`` and ``threads`` override the file's ``[run]`` values.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if seed is not None:
        cp.setdefault("run", {})
        cp["run"]["seed"] = str(seed)
    base = path.parent

    def get(sec, key, default=None):
        if cp.has_option(sec, key):
            return cp.get(sec, key).strip()
        return default

    def resolve(p):
        if p in (None, ""):
            return None
        q = Path(p)
        return q if q.is_absolute() else base / q

    try:
        genotypes = resolve(get("paths", "genotypes"))
        if genotypes is None:
            raise ConfigError("[paths] genotypes is required")
        output = resolve(get("paths", "output", "out"))

        gamma = default_gamma_map()
        if cp.has_section("gamma"):
            gamma = {k: _float(v) for k, v in cp["gamma"].items()}
        subpop = dict(DEFAULT_SUBPOP_MAP)
        if cp.has_section("subpopulations"):
            subpop = {k: v.strip() for k, v in cp["subpopulations"].items()}
        run_seed = int(get("run", "seed", "1"))
        cov = CovSimConfig(
            heritability=float(get("covsim", "heritability", "0.60")),
            residual_sd=float(get("covsim", "residual_sd", "4.0")),
            nonsmoker_offset=float(get("covsim", "nonsmoker_offset", "1.5")),
            bmi_baseline=float(get("covsim", "bmi_baseline", "25.0")),
            gamma=gamma,
            subpop_map=subpop,
            smoking_rates=default_smoking_rates(),
            seed=int(get("covsim", "seed", str(run_seed))),
        )
        model = DiseaseModel(
            baseline_prevalence=float(get("model", "baseline_prevalence", "0.01")),
            relative_risk=float(get("model", "relative_risk", "50.0")),
            causal_snp=get("model", "causal_snp"),
            genetic_coding=get("model", "genetic_coding", "dominant"),
            interacting_exposure=get("model", "interacting_exposure", "treatment"),
        )
        pos = get("model", "causal_position")
        cfg = RunConfig(
            genotypes=genotypes,
            output=output,
            populations=resolve(get("paths", "populations")),
            covariates=resolve(get("paths", "covariates")),
            maf_min=float(get("qc", "maf_min", "0.05")),
            hwe_alpha=float(get("qc", "hwe_alpha", "1e-6")),
            force_minor=cp.getboolean("qc", "force_minor", fallback=True),
            pca_k=int(get("pca", "k", "5")),
            thin_step=int(get("pca", "thin_step", "1000")),
            grm_snps=get("pca", "grm_snps", "thinned"),
            covsim=cov,
            model=model,
            causal_chromosome=get("model", "causal_chromosome"),
            causal_position=int(pos) if pos else None,
            n_h0=int(get("replicates", "n_h0", "200")),
            n_h1=int(get("replicates", "n_h1", "200")),
            n_cases=int(get("replicates", "n_cases", "595")),
            exposure=get("scan", "exposure", "bmi"),
            interaction_covariate=get("scan", "interaction_covariate", get("scan", "exposure", "bmi")) or None,
            snp_coding=get("scan", "snp_coding", "additive"),
            irls_tol=float(get("scan", "tol", "1e-8")),
            max_iter=int(get("scan", "max_iter", "25")),
            lmm_pcs=cp.getboolean("scan", "lmm_pcs", fallback=False),
            regions=_list(get("power", "regions", " ".join(DEFAULT_REGIONS))),
            methods=_list(get("power", "methods", " ".join(METHODS))),
            manhattan_replicate=int(get("power", "manhattan_replicate", "0")),
            seed=run_seed,
            threads=int(threads if threads is not None else get("run", "threads", "1")),
        )
    except (ValueError, ModelValidityError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc

    # neither the worker count nor the output location changes results
    for sec, key in (("run", "threads"), ("paths", "output")):
        if cp.has_option(sec, key):
            cp.remove_option(sec, key)
    cfg.text = _canonical(cp)
    _validate(cfg, check_files)
    return cfg


def _validate(cfg: RunConfig, check_files: bool) -> None:
    if cfg.model.causal_snp is None and cfg.causal_position is None:
        raise ConfigError("[model] needs causal_snp or causal_position")
    for r in cfg.regions:
        if r != "whole" and (not r.isdigit() or int(r) < 1):
            raise ConfigError(f"region width {r!r} must be 'whole' or a positive integer")
    for m in cfg.methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    if cfg.exposure not in ("bmi", "treatment"):
        raise ConfigError("[scan] exposure must be bmi or treatment")
    if "snp_x_cov" in cfg.methods:
        if cfg.interaction_covariate is None:
            raise ConfigError("method snp_x_cov needs [scan] interaction_covariate")
        if cfg.interaction_covariate not in cfg.base_covariates:
            raise ConfigError(f"interaction covariate {cfg.interaction_covariate!r} is not among {cfg.base_covariates}")
    if cfg.grm_snps not in ("thinned", "all"):
        raise ConfigError("[pca] grm_snps must be thinned or all")
    if cfg.pca_k < 1 or cfg.thin_step < 1 or cfg.threads < 1:
        raise ConfigError("k, thin_step and threads must be positive")
    if cfg.n_cases < 0 or cfg.n_h0 < 0 or cfg.n_h1 < 0:
        raise ConfigError("replicate and case counts must be nonnegative")
    if check_files:
        bed = Path(str(cfg.genotypes) + ".bed")
        if not bed.exists():
            raise ConfigError(f"genotype file not found: {bed}")
        for p in (cfg.populations, cfg.covariates):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"file not found: {p}")
