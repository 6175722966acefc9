"""Command-line pipeline: qc-pca, simulate, scan and power subcommands.

Every subcommand reads one configuration file and writes under its output
directory::

    qc/        genotypes.{bed,bim,fam}, populations.tsv, pca.tsv, pca_scatter.{tsv,svg}, qc_report.jsonl
    simulate/  covariates.tsv, replicates.tsv, replicates.meta.json
    scans/     <method>/<replicate>.tsv
    power/     auc_table.tsv, auc_detail.tsv, roc.tsv, roc.svg, manhattan.svg

Text artifacts start with ``#`` comment lines (``<!-- -->`` for SVG) that
record the configuration hash and master seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .assoc import read_results_tsv, scan_snp, scan_snp_x_cov, write_results_tsv
from .config import METHODS, ConfigError, RunConfig, load_config
from .covsim import CovariateConfigError, read_covariates_tsv, simulate_covariates, write_covariates_tsv
from .genotype_io import (
    filter_snps,
    find_snp,
    orient_to_minor,
    read_genotype_triplet,
    read_populations,
    thin_snps,
    window_indices,
    write_genotype_triplet,
)
from .lmm import eigendecompose_kinship, fit_null_delta, lmm_scan
from .phenosim import ModelValidityError, generate_replicates, read_replicates, write_replicates
from .popstruct import grm, pca, read_scores_tsv, write_scatter_tsv, write_scores_tsv
from .power import auc, min_p_scores, roc, write_auc_table, write_roc_tsv
from .svg import manhattan_svg, roc_svg, scatter_svg
from .textio import atomic_path, prepend_comments

log = logging.getLogger("gxesim")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
P_FIELD = {"snp": "p_snp", "snp_x_cov": "p_int", "lmm": "p_snp"}


class PipelineError(RuntimeError):
    """Runtime or data problem; maps to exit code 2."""


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        out = {"level": record.levelname.lower(), "event": record.getMessage()}
        out.update(getattr(record, "fields", {}))
        return json.dumps(out, sort_keys=True, default=str)


def _event(msg: str, level=logging.INFO, **fields) -> None:
    log.log(level, msg, extra={"fields": fields})


# --------------------------------------------------------------------------
# artifact helpers


def _stamp(cfg: RunConfig) -> list[str]:
    return [f"config_hash={cfg.digest()}", f"seed={cfg.seed}"]


def _write_text(path, cfg: RunConfig, writer, marker: str = "#") -> Path:
    """Run ``writer(tmp_path)`` then atomically publish it with the stamp prepended."""
    with atomic_path(path) as tmp:
        writer(tmp)
        prepend_comments(tmp, _stamp(cfg), marker)
    return Path(path)


def _stamp_of(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            out[key] = value
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _qc_dir(cfg):
    return cfg.output / "qc"


def _sim_dir(cfg):
    return cfg.output / "simulate"


def _scan_dir(cfg, method):
    return cfg.output / "scans" / method


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise PipelineError(f"{path} not found; run `gxesim {producer}` first")
    return path


def _load_qc(cfg: RunConfig):
    stem = _qc_dir(cfg) / "genotypes"
    _require(Path(str(stem) + ".bed"), "qc-pca")
    matrix, samples, snps = read_genotype_triplet(stem)
    samples = read_populations(_require(_qc_dir(cfg) / "populations.tsv", "qc-pca"), samples)
    return matrix, samples, snps


def _causal_index(cfg: RunConfig, snps) -> int:
    try:
        return find_snp(snps, cfg.model.causal_snp, cfg.causal_chromosome, cfg.causal_position)
    except LookupError as exc:
        raise PipelineError(f"causal SNP not among the QC'd SNPs: {exc}") from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_qc_pca(cfg: RunConfig) -> None:
    matrix, samples, snps = read_genotype_triplet(cfg.genotypes)
    if cfg.populations is not None:
        samples = read_populations(cfg.populations, samples)
    else:
        samples = [dataclasses.replace(s, population=s.family_id) for s in samples]
    filtered, report = filter_snps(matrix, cfg.maf_min, cfg.hwe_alpha)
    kept_snps = [snps[j] for j in report.kept_indices]
    if cfg.force_minor:
        filtered, kept_snps = orient_to_minor(filtered, kept_snps)
    qc = _qc_dir(cfg)
    qc.mkdir(parents=True, exist_ok=True)

    stem = qc / "genotypes"
    write_genotype_triplet(filtered, samples, kept_snps, stem)

    def write_pops(p):
        with open(p, "w") as fh:
            fh.write("individual_id\tpopulation\n")
            for s in samples:
                fh.write(f"{s.individual_id}\t{s.population}\n")

    _write_text(qc / "populations.tsv", cfg, write_pops)

    result = pca(filtered, k=cfg.pca_k, thin_step=cfg.thin_step)
    ids = [s.individual_id for s in samples]
    pops = [s.population for s in samples]
    _write_text(qc / "pca.tsv", cfg, lambda p: write_scores_tsv(p, ids, result))
    _write_text(qc / "pca_scatter.tsv", cfg, lambda p: write_scatter_tsv(p, ids, pops, result))
    if result.k >= 2:
        _write_text(
            qc / "pca_scatter.svg", cfg,
            lambda p: scatter_svg(result.scores[:, 0], result.scores[:, 1], pops, p), marker="<!--",
        )

    record = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        **report.as_dict(),
        "force_minor": cfg.force_minor,
        "pca_snps": len(result.snp_indices_used),
        "eigenvalues": [float(v) for v in result.eigenvalues],
        "files": {f"genotypes{ext}": _sha256(str(stem) + ext) for ext in (".bed", ".bim", ".fam")},
    }
    with atomic_path(qc / "qc_report.jsonl") as tmp:
        tmp.write_text(json.dumps(record, sort_keys=True) + "\n")
    _event("qc-pca done", snps_in=report.snps_in, snps_out=report.snps_out, removed_maf=report.removed_maf, removed_hwe=report.removed_hwe)


def cmd_simulate(cfg: RunConfig) -> None:
    matrix, samples, snps = _load_qc(cfg)
    ids = [s.individual_id for s in samples]
    if cfg.covariates is not None:
        table = read_covariates_tsv(cfg.covariates)
        if table.individual_ids != ids:
            raise PipelineError(f"{cfg.covariates}: individuals differ from the genotype files")
    else:
        pca_ids, scores = read_scores_tsv(_require(_qc_dir(cfg) / "pca.tsv", "qc-pca"))
        if pca_ids != ids:
            raise PipelineError("pca.tsv individuals differ from the genotype files")
        table = simulate_covariates(samples, scores, cfg.covsim)
    causal = _causal_index(cfg, snps)
    try:
        exposure = table.column(cfg.model.interacting_exposure)
    except KeyError as exc:
        raise PipelineError(f"interacting exposure unavailable: {exc}") from exc
    reps = generate_replicates(
        cfg.model, matrix.column(causal), exposure, cfg.n_h0, cfg.n_h1, cfg.n_cases, seed=cfg.seed
    )
    sim = _sim_dir(cfg)
    sim.mkdir(parents=True, exist_ok=True)
    _write_text(sim / "covariates.tsv", cfg, lambda p: write_covariates_tsv(p, table))
    meta = {
        "config_hash": cfg.digest(),
        "covariate_seed": cfg.covsim.seed,
        "causal_snp": snps[causal].snp_id,
        "causal_index": causal,
        "causal_position": snps[causal].bp_position,
    }
    target = sim / "replicates.tsv"
    with atomic_path(target) as tmp:
        sidecar = write_replicates(tmp, reps, ids, meta)
        prepend_comments(tmp, _stamp(cfg))
        final_sidecar = target.with_suffix(".meta.json")
        sidecar.replace(final_sidecar)
    _event("simulate done", replicates=len(reps), n=reps.n, n_cases=reps.n_cases, causal_snp=snps[causal].snp_id)


def _select_replicates(labels: list[str], selector: str | None) -> list[str]:
    if selector in (None, "", "all"):
        return labels
    if selector in ("H0", "H1"):
        return [lab for lab in labels if lab.startswith(selector + "_")]
    wanted = [s.strip() for s in selector.split(",") if s.strip()]
    unknown = [w for w in wanted if w not in labels]
    if unknown:
        raise ConfigError(f"unknown replicate(s) {unknown}")
    return [lab for lab in labels if lab in wanted]


class _LmmContext:
    def __init__(self, cfg, matrix, table):
        idx = thin_snps(matrix.m, cfg.thin_step) if cfg.grm_snps == "thinned" else None
        self.spec = eigendecompose_kinship(grm(matrix, idx))
        names = cfg.lmm_covariates()
        self.x = np.column_stack([np.ones(table.n), table.design(names)])


def cmd_scan(cfg: RunConfig, methods, selector: str | None = None) -> None:
    matrix, samples, snps = _load_qc(cfg)
    table = read_covariates_tsv(_require(_sim_dir(cfg) / "covariates.tsv", "simulate"))
    ids, reps = read_replicates(_require(_sim_dir(cfg) / "replicates.tsv", "simulate"))
    if ids != [s.individual_id for s in samples]:
        raise PipelineError("replicate individuals differ from the genotype files")
    labels = _select_replicates([r.label for r in reps.replicates], selector)
    by_label = {r.label: r for r in reps.replicates}
    digest = cfg.digest()
    for method in methods:
        out_dir = _scan_dir(cfg, method)
        out_dir.mkdir(parents=True, exist_ok=True)
        todo = [lab for lab in labels if not _is_complete(out_dir / f"{lab}.tsv", digest)]
        _event("scan start", method=method, replicates=len(labels), pending=len(todo))
        if not todo:
            continue
        scan_cfg = cfg.scan_config(method)
        lmm_ctx = _LmmContext(cfg, matrix, table) if method == "lmm" else None

        def run(label, method=method, scan_cfg=scan_cfg, lmm_ctx=lmm_ctx, out_dir=out_dir):
            y = by_label[label].y.astype(float)
            t0 = time.perf_counter()
            if method == "snp":
                res = scan_snp(matrix, y, table, scan_cfg, snps)
            elif method == "snp_x_cov":
                res = scan_snp_x_cov(matrix, y, table, scan_cfg, snps)
            else:
                null = fit_null_delta(y, lmm_ctx.x, lmm_ctx.spec)
                res = lmm_scan(matrix, y, lmm_ctx.x, lmm_ctx.spec, null, snps)
            _write_text(
                out_dir / f"{label}.tsv", cfg,
                lambda p: write_results_tsv(p, res, with_interaction=method == "snp_x_cov"),
            )
            failed = sum(r.status != "ok" for r in res)
            _event("scan replicate", method=method, replicate=label, failed_fits=failed, seconds=round(time.perf_counter() - t0, 3))

        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(run, todo))


def _is_complete(path: Path, digest: str) -> bool:
    return path.exists() and _stamp_of(path).get("config_hash") == digest


def _replicate_p(path: Path, field: str, m: int) -> np.ndarray:
    rows = read_results_tsv(path)
    if len(rows) != m:
        raise PipelineError(f"{path}: {len(rows)} rows, expected {m}")
    return np.array([np.nan if getattr(r, field) is None else getattr(r, field) for r in rows])


def cmd_power(cfg: RunConfig, methods, regions) -> None:
    _, _, snps = _load_qc(cfg)
    _, reps = read_replicates(_require(_sim_dir(cfg) / "replicates.tsv", "simulate"))
    m = len(snps)
    causal = _causal_index(cfg, snps)
    widths = cfg.region_widths(m)
    region_idx = {r: np.asarray(window_indices(m, causal, widths[r])) for r in regions}
    table, curves, detail = {}, {}, []
    pvals_for_plot = {}
    for method in methods:
        field = P_FIELD[method]
        scan_dir = _scan_dir(cfg, method)
        files = sorted(scan_dir.glob("*.tsv")) if scan_dir.exists() else []
        if not files:
            raise PipelineError(f"no scan results in {scan_dir}; run `gxesim scan --method {method}` first")
        scores = {r: {"H0": [], "H1": []} for r in regions}
        for rep in reps.replicates:
            path = scan_dir / f"{rep.label}.tsv"
            if not path.exists():
                raise PipelineError(f"{path} missing; rerun `gxesim scan --method {method}`")
            p = _replicate_p(path, field, m)
            if rep.hypothesis == "H1" and rep.replicate_index == cfg.manhattan_replicate:
                pvals_for_plot[method] = p
            for r in regions:
                sub = p[region_idx[r]]
                sub = sub[np.isfinite(sub)]
                # a region without usable fits carries no evidence (p = 1)
                s = min_p_scores(sub, {r: np.arange(sub.size)})[r] if sub.size else 0.0
                scores[r][rep.hypothesis].append(s)
        for r in regions:
            h0, h1 = np.array(scores[r]["H0"]), np.array(scores[r]["H1"])
            est = auc(h0, h1)
            table[(r, method)] = est
            curves[(r, method)] = roc(h0, h1)
            detail.append((r, method, est))
    out = cfg.output / "power"
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "auc_table.tsv", cfg, lambda p: write_auc_table(p, table, list(methods), list(regions)))

    def write_detail(p):
        with open(p, "w") as fh:
            fh.write("region\tmethod\tauc\tci_low\tci_high\tlabel\n")
            for r, method, e in detail:
                fh.write(f"{r}\t{method}\t{e.auc!r}\t{e.ci_low!r}\t{e.ci_high!r}\t{e.label}\n")

    _write_text(out / "auc_detail.tsv", cfg, write_detail)
    _write_text(out / "roc.tsv", cfg, lambda p: write_roc_tsv(p, curves))
    labelled = {f"{method} / {r}": c for (r, method), c in curves.items()}
    _write_text(out / "roc.svg", cfg, lambda p: roc_svg(labelled, p), marker="<!--")
    plot_method = methods[0]
    if plot_method in pvals_for_plot:
        p = pvals_for_plot[plot_method]
        ok = np.isfinite(p)
        pos = np.array([s.bp_position for s in snps])[ok]
        score = -np.log10(np.maximum(p[ok], np.finfo(float).tiny))
        title = f"{plot_method} H1_{cfg.manhattan_replicate}"
        _write_text(
            out / "manhattan.svg", cfg,
            lambda q: manhattan_svg(pos, score, snps[causal].bp_position, q, title=title), marker="<!--",
        )
    for r, method, e in detail:
        _event("auc", region=r, method=method, auc=round(e.auc, 6), label=e.label)


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gxesim", description="Simulate confounded GxE case/control data and measure scan power.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--log-level", default="info", choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("qc-pca", parents=[common], help="QC filter, orient alleles, principal components")
    sub.add_parser("simulate", parents=[common], help="covariates and H0/H1 phenotype replicates")
    scan = sub.add_parser("scan", parents=[common], help="per-SNP association scans of every replicate")
    scan.add_argument("--method", action="append", choices=METHODS, help="repeatable; default: [power] methods")
    scan.add_argument("--replicates", help="all (default), H0, H1 or a comma-separated list such as H1_0,H0_3")
    pw = sub.add_parser("power", parents=[common], help="AUC table, ROC curves and Manhattan plot")
    pw.add_argument("--method", action="append", choices=METHODS, help="repeatable; default: [power] methods")
    pw.add_argument("--region", action="append", help="repeatable region width or 'whole'; default: [power] regions")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter())
    log.handlers[:] = [handler]
    log.setLevel(args.log_level.upper())
    log.propagate = False
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads)
        methods = tuple(getattr(args, "method", None) or cfg.methods)
        if args.command in ("scan", "power"):
            for method in methods:
                if method == "snp_x_cov" and cfg.interaction_covariate is None:
                    raise ConfigError("method snp_x_cov needs [scan] interaction_covariate")
        regions = tuple(getattr(args, "region", None) or cfg.regions)
        for r in regions:
            if r != "whole" and (not r.isdigit() or int(r) < 1):
                raise ConfigError(f"region width {r!r} must be 'whole' or a positive integer")
        _event("start", command=args.command, config_hash=cfg.digest(), seed=cfg.seed, threads=cfg.threads)
        if args.command == "qc-pca":
            cmd_qc_pca(cfg)
        elif args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "scan":
            cmd_scan(cfg, methods, args.replicates)
        else:
            cmd_power(cfg, methods, regions)
    except (ConfigError, ModelValidityError, CovariateConfigError) as exc:
        _event("validation error", logging.ERROR, error=str(exc))
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        _event("runtime error", logging.ERROR, error=f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    _event("done", command=args.command)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
