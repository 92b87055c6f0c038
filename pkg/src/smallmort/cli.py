"""Command-line interface.

Exit codes: 0 success, 1 runtime or model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from smallmort import io
from smallmort.charts import emit_chart
from smallmort.config import ConfigError, RunConfig, data_path, read_config
from smallmort.core import DataError, naive_rates
from smallmort.fitting import MODELS, fit_dataset
from smallmort.simulation import DEFAULT_SIZES, run_benchmark, simulate_dataset

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


def _csv_list(cast):
    def parse(text):
        try:
            return tuple(cast(v) for v in text.split(",") if v.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def _size(text):
    v = float(text)
    return int(v) if v.is_integer() else v


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=S, help="random seed (default 0)")
    p.add_argument("--config", default=S, help="flat key = value run file")
    p.add_argument("--threads", type=int, default=S, help="worker threads (default 1)")
    return p


def _mcmc_flags(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    g = p.add_argument_group("dynamic Poisson sampler")
    g.add_argument("--chains", type=int, default=S)
    g.add_argument("--burn-in", dest="burn_in", type=int, default=S)
    g.add_argument("--thin", type=int, default=S)
    g.add_argument("--keep", type=int, default=S, help="draws kept per chain")
    g.add_argument("--init-precision", dest="init_precision", type=float, default=S)
    g.add_argument("--no-adapt", dest="adapt", action="store_false", default=S)
    g = p.add_argument_group("TOPALS / Gaussian DLM")
    g.add_argument("--penalty-weight", dest="penalty_weight", type=float, default=S)
    g.add_argument(
        "--no-dlm-regression", dest="dlm_regression", action="store_false", default=S,
        help="fit the Gaussian DLM without the standard as regressor",
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(
        prog="smallmort", description="Smoothed mortality schedules for small populations."
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("validate", parents=[common], help="schema-check input files")
    p.add_argument("--data", default=S)
    p.add_argument("--standard", default=S)
    p.add_argument("--reference", default=S)

    p = sub.add_parser("fit", parents=[common], help="fit one model to a dataset")
    p.add_argument("--model", choices=MODELS, default=S)
    p.add_argument("--data", default=S)
    p.add_argument("--standard", default=S)
    p.add_argument("--sex", choices=("female", "male", "both"), default=S)
    p.add_argument("--out", default=S, help="fitted schedule CSV")
    _mcmc_flags(p)

    p = sub.add_parser("simulate", parents=[common], help="emit a synthetic dataset")
    p.add_argument("--reference", default=S, help="reference schedule (default: bundled)")
    p.add_argument("--sizes", type=_csv_list(_size), default=S)
    p.add_argument("--out", default=S)

    p = sub.add_parser("benchmark", parents=[common], help="run the simulation protocol")
    p.add_argument("--reference", default=S, help="reference schedule (default: bundled)")
    p.add_argument("--standard", default=S, help="standard schedule (default: bundled)")
    p.add_argument("--sizes", type=_csv_list(_size), default=S)
    p.add_argument("--models", type=_csv_list(str), default=S)
    p.add_argument("--seeds", type=_csv_list(int), default=S, help="replicate seeds")
    p.add_argument("--out", default=S, help="metrics table CSV")
    p.add_argument("--timings", default=S, help="optional wall-clock CSV")
    _mcmc_flags(p)

    p = sub.add_parser("chart", parents=[common], help="draw observed and fitted schedules")
    p.add_argument("--data", default=S)
    p.add_argument("--fits", nargs="*", default=[])
    p.add_argument("--standard", default=S)
    p.add_argument("--area", default=None)
    p.add_argument("--sex", choices=("female", "male", "both"), default=S)
    p.add_argument("--out", default=S, help="SVG file")
    return parser


def _run_config(ns: argparse.Namespace) -> RunConfig:
    flags = dict(vars(ns))
    file_values = read_config(flags.pop("config")) if "config" in flags else None
    return RunConfig.merge(file_values, flags)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_validate(cfg: RunConfig, ns) -> int:
    if not (cfg.data or cfg.standard or cfg.reference):
        raise ConfigError("validate needs at least one of --data, --standard, --reference")
    cfg.validate()
    if cfg.standard:
        stds = io.read_standards(cfg.standard)
        print(f"standard {cfg.standard}: ok ({', '.join(sorted(stds))})")
    if cfg.data:
        ds = io.read_dataset(cfg.data)
        zeros = int(np.sum(ds.deaths == 0))
        print(f"data {cfg.data}: ok ({len(ds)} populations, {zeros} zero-death cells)")
    if cfg.reference:
        io.read_reference(cfg.reference)
        print(f"reference {cfg.reference}: ok")
    return EXIT_OK


def _standards_for(dataset, standards: dict, path) -> list:
    out = []
    for rec in dataset.populations:
        if rec.sex not in standards:
            raise DataError(f"{path}: no standard for sex {rec.sex!r}")
        out.append(standards[rec.sex])
    return out


def cmd_fit(cfg: RunConfig, ns) -> int:
    cfg.validate(require=("model", "data", "out"))
    if cfg.model in ("topals", "dyn-poisson") and not cfg.standard:
        raise ConfigError(f"fit --model {cfg.model} requires --standard")
    if cfg.model == "gaussian-dlm" and cfg.dlm_regression and not cfg.standard:
        raise ConfigError("fit --model gaussian-dlm requires --standard (or --no-dlm-regression)")
    params = cfg.model_params()
    dataset = io.read_dataset(cfg.data, sex=cfg.sex)
    if len(dataset) == 0:
        raise DataError(f"{cfg.data}: no populations with sex {cfg.sex!r}")
    if cfg.standard:
        standard = _standards_for(dataset, io.read_standards(cfg.standard), cfg.standard)
    else:
        standard = [None] * len(dataset)
    results = fit_dataset(cfg.model, dataset, standard, params)
    fits, failed = [], []
    for rec, res in zip(dataset.populations, results):
        if isinstance(res, Exception):
            failed.append(f"{rec.id} ({rec.sex}): {res}")
        else:
            fits.append(res)
    if fits:
        io.write_fit(fits, cfg.out)
    for msg in failed:
        _log(f"warning: {msg}")
    if not fits:
        raise RuntimeError(f"no population could be fitted ({failed[0]})")
    print(f"wrote {len(fits)} fitted schedules to {cfg.out}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, ns) -> int:
    cfg.validate(require=("out",))
    reference = io.read_reference(cfg.reference or data_path("reference.csv"))
    sizes = cfg.sizes or DEFAULT_SIZES
    dataset = simulate_dataset(reference, sizes, cfg.seed)
    io.write_dataset(dataset, cfg.out)
    print(f"wrote {len(dataset)} simulated populations to {cfg.out}")
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig, ns) -> int:
    cfg.validate(require=("out",))
    from smallmort.fitting import default_runners

    reference = io.read_reference(cfg.reference or data_path("reference.csv"))
    standard = io.read_standard(cfg.standard or data_path("standard.csv"), sex="both")
    seeds = cfg.seeds or (cfg.seed,)
    rows = run_benchmark(
        reference,
        sizes=cfg.sizes or DEFAULT_SIZES,
        models=cfg.models,
        standard=standard,
        seeds=seeds,
        runners=default_runners(cfg.model_params()),
    )
    io.write_metrics(rows, cfg.out)
    if cfg.timings:
        io.write_timings(rows, cfg.timings)
    print(f"wrote {len(rows)} metric rows to {cfg.out}")
    return EXIT_OK


def cmd_chart(cfg: RunConfig, ns) -> int:
    cfg.validate(require=("data", "out"))
    dataset = io.read_dataset(cfg.data, sex=cfg.sex)
    if len(dataset) == 0:
        raise DataError(f"{cfg.data}: no populations with sex {cfg.sex!r}")
    ids = [r.id for r in dataset.populations]
    if ns.area is None:
        if len(ids) > 1:
            raise ConfigError(f"--area required; choose from {', '.join(ids)}")
        area = ids[0]
    elif ns.area not in ids:
        raise DataError(f"area {ns.area!r} not in {cfg.data}")
    else:
        area = ns.area
    record = dataset.populations[ids.index(area)]
    standard = io.read_standard(cfg.standard, sex=record.sex) if cfg.standard else None
    fits = []
    for path in ns.fits:
        if not Path(path).is_file():
            raise ConfigError(f"--fits: file not found: {path}")
        fits += [f for f in io.read_fit(path) if f.population_id == area and f.sex == record.sex]
    emit_chart(naive_rates(record), fits, standard, cfg.out, title=f"{area} ({record.sex})")
    print(f"wrote chart to {cfg.out}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "chart": cmd_chart,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = _run_config(ns)
        return COMMANDS[ns.command](cfg, ns)
    except ConfigError as exc:
        _log(f"smallmort {ns.command}: error: {exc}")
        return EXIT_USAGE
    except (DataError, ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        _log(f"smallmort {ns.command}: error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
