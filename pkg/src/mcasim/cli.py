"""Command-line entry point: ``mcasim <mechanism> --config <path|defaults> ...``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from . import __version__, kernels
from .config import MECHANISMS, ConfigError, ScenarioConfig, check, parse_config
from .metrics import write_csv, write_json
from .rng import RNG_ALGORITHM, derive_run_seed

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


@dataclass(frozen=True)
class Mechanism:
    run: Callable
    header: tuple
    rows: Callable  # (result, params, label) -> rows
    merge: Callable
    summarize: Callable  # (result, params) -> dict
    with_samples: Callable
    extra: Callable | None = None  # (out_dir, [(label, result)], params) -> list of written files


def _dupstat() -> Mechanism:
    from . import dupstat as m
    return Mechanism(
        run=lambda cfg, seed: m.run_duplication_experiment(cfg, seed),
        header=m.CSV_HEADER,
        rows=lambda res, cfg, label: m.csv_rows(res, cfg, label),
        merge=lambda a, b: {k: a[k].merge(b[k]) for k in a},
        summarize=lambda res, cfg: m.summarize(res, cfg),
        with_samples=m.with_samples,
    )


def _ccselect() -> Mechanism:
    from . import ccselect as m
    return Mechanism(
        run=lambda cfg, seed: m.run_carrier_experiment(cfg, seed),
        header=m.CSV_HEADER,
        rows=lambda res, cfg, label: m.csv_rows(res, label),
        merge=lambda a, b: a.merge(b),
        summarize=lambda res, cfg: m.summarize(res),
        with_samples=m.with_samples,
    )


def _mecassoc_ccdf(out_dir: Path, labelled, cfg):
    from . import mecassoc as m
    rows = [row for label, res in labelled for row in m.ccdf_rows(res, label)]
    write_csv(out_dir / "mecassoc_ccdf.csv", m.CCDF_HEADER, rows)
    return ["mecassoc_ccdf.csv"]


def _mecassoc() -> Mechanism:
    from . import mecassoc as m
    return Mechanism(
        run=lambda cfg, seed: m.run_offload_experiment(cfg, seed),
        header=m.CSV_HEADER,
        rows=lambda res, cfg, label: m.csv_rows(res, label),
        merge=lambda a, b: a.merge(b),
        summarize=lambda res, cfg: m.summarize(res),
        with_samples=m.with_samples,
        extra=_mecassoc_ccdf,
    )


def _compcoord() -> Mechanism:
    from . import compcoord as m
    return Mechanism(
        run=lambda cfg, seed: m.run_comp_experiment(cfg, seed),
        header=m.CSV_HEADER,
        rows=lambda res, cfg, label: m.csv_rows(res, label),
        merge=lambda a, b: a.merge(b),
        summarize=lambda res, cfg: m.summarize(res),
        with_samples=m.with_samples,
    )


_FACTORIES = {"dupstat": _dupstat, "ccselect": _ccselect, "mecassoc": _mecassoc, "compcoord": _compcoord}


def mechanism(name: str) -> Mechanism:
    return _FACTORIES[name]()


def _run_one(args):
    name, params, seed = args
    return mechanism(name).run(params, seed)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcasim", description="Multi-channel access RRM simulator.")
    parser.add_argument("--version", action="version", version=f"mcasim {__version__}")
    sub = parser.add_subparsers(dest="mechanism", metavar="{" + ",".join(MECHANISMS) + "}")
    for name in MECHANISMS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help='JSON config path, or "defaults" for built-in parameters')
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--runs", type=int, help="number of seeded replications")
        p.add_argument("--out", help="output directory (falls back to $MCASIM_OUT, then ./mcasim_out)")
        p.add_argument("--samples", type=int, help="override the mechanism's sample budget")
        p.add_argument("--jobs", type=int, default=None, help="parallel replications (default: CPU count)")
        p.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
    return parser


def load_scenario(mechanism_name: str, config_arg: str, seed=None, runs=None, samples=None) -> ScenarioConfig:
    if config_arg == "defaults":
        raw = "{}"
    else:
        try:
            raw = Path(config_arg).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError("--config", f"cannot read {config_arg}: {err.strerror}") from None
    scen = parse_config(raw, mechanism_name)
    if seed is not None:
        check(0 <= seed < 2**64, "--seed", "must be an unsigned 64-bit integer")
        scen = replace(scen, master_seed=seed)
    if runs is not None:
        check(runs >= 1, "--runs", "must be >= 1")
        scen = replace(scen, run_count=runs)
    if samples is not None:
        check(samples >= 1, "--samples", "must be >= 1")
        params = mechanism(mechanism_name).with_samples(scen.params, samples)
        try:
            params.validate()
        except ConfigError as err:
            raise ConfigError(f"--samples ({err.field})", str(err).split(": ", 1)[-1]) from None
        scen = replace(scen, params=params, samples=samples)
    return scen


def config_hash(scen: ScenarioConfig) -> str:
    canon = json.dumps(scen.echo(), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def run_replications(scen: ScenarioConfig, jobs: int | None = None) -> list:
    seeds = [derive_run_seed(scen.master_seed, i) for i in range(scen.run_count)]
    tasks = [(scen.mechanism, scen.params, s) for s in seeds]
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_one, tasks))  # map preserves submission order


def execute(scen: ScenarioConfig, out_dir: Path, config_path: str, jobs: int | None = None) -> dict:
    """Write manifest, run, then write the CSV and summary.  Returns the summary."""
    mech = mechanism(scen.mechanism)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [derive_run_seed(scen.master_seed, i) for i in range(scen.run_count)]
    digest = config_hash(scen)
    manifest = {
        "tool": "mcasim",
        "version": __version__,
        "mechanism": scen.mechanism,
        "config_path": config_path,
        "config_hash": digest,
        "master_seed": scen.master_seed,
        "run_count": scen.run_count,
        "run_seeds": seeds,
        "samples_override": scen.samples,
        "rng": RNG_ALGORITHM,
        "output_dir": str(out_dir),
    }
    write_json(out_dir / "manifest.json", manifest)

    results = run_replications(scen, jobs)
    merged = results[0]
    for r in results[1:]:
        merged = mech.merge(merged, r)

    rows = [row for i, r in enumerate(results) for row in mech.rows(r, scen.params, i)]
    rows += mech.rows(merged, scen.params, "all")
    csv_name = f"{scen.mechanism}_results.csv"
    write_csv(out_dir / csv_name, mech.header, rows)
    files = [csv_name]
    if mech.extra is not None:
        files += mech.extra(out_dir, [(i, r) for i, r in enumerate(results)] + [("all", merged)], scen.params)

    summary = {
        "mechanism": scen.mechanism,
        "version": __version__,
        "manifest_hash": digest,
        "config": scen.echo(),
        "defaulted": list(scen.defaulted),
        "run_seeds": seeds,
        "slot_duration_ms": scen.slot_duration_ms,
        "merged": mech.summarize(merged, scen.params),
        "runs": [mech.summarize(r, scen.params) for r in results],
        "files": files + ["summary.json", "manifest.json"],
    }
    write_json(out_dir / "summary.json", summary)
    return summary


def _headline(summary: dict) -> str:
    merged = summary["merged"]
    name = summary["mechanism"]
    if name == "dupstat":
        parts = [f"{m}: tx/pkt={v['tx_per_delivered']:.4f} outage-latency={v['latency_at_outage_target']}"
                 for m, v in merged.items()]
    elif name == "ccselect":
        g = merged["gain"]
        parts = [f"p5 gain={g['p5']:+.1%}", f"p50 gain={g['p50']:+.1%}", f"p95 gain={g['p95']:+.1%}"]
    elif name == "mecassoc":
        parts = [f"median E-PDB reduction={merged['median_epdb_reduction']:.1%}", f"omega={merged['omega']:g}"]
    else:
        parts = [f"LLU avg latency reduction={merged['llu_avg_latency_reduction']:.1%}"]
    return f"{name}: " + "; ".join(parts)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.mechanism is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if not args.config:
        parser.print_usage(sys.stderr)
        print(f"mcasim {args.mechanism}: error: --config is required (a JSON path or 'defaults')", file=sys.stderr)
        return EXIT_USAGE
    try:
        scen = load_scenario(args.mechanism, args.config, args.seed, args.runs, args.samples)
    except ConfigError as err:
        print(f"mcasim {args.mechanism}: config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs is not None and args.jobs < 1:
        print(f"mcasim {args.mechanism}: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or os.environ.get("MCASIM_OUT") or "mcasim_out")
    try:
        summary = execute(scen, out, args.config, args.jobs)
    except ConfigError as err:
        print(f"mcasim {args.mechanism}: config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001 - any failure during the run is a runtime error
        print(f"mcasim {args.mechanism}: runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(_headline(summary))
        print(f"outputs written to {out} (backend: {kernels.BACKEND})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
