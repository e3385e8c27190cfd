"""Command-line entry point.

Exit codes: 0 success, 1 model/config validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .diffusion import simulate_sde
from .engine import SLQ, Scenario, run
from .errors import ConfigError, HtnError, ValidationError
from .harness import ExperimentPlan, compare_marginals, metrics_row, nash_experiment, rsp_experiment
from .io import atomic_write, customers_csv, dict_rows_csv, json_text, report_csv, sde_csv, trace_csv
from .metrics import run_metrics
from .model import validate

SUBCOMMANDS = ("simulate", "sde", "rsp", "nash", "compare", "validate")


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="htnsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"htnsim {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", required=True, help="model JSON, or a manifest.json to replay")
        sp.add_argument("--policy", choices=("fp", "slq"), default="fp")
        sp.add_argument("--out", type=Path, default=None)
        if seed:
            sp.add_argument("--seed", type=int, required=True)

    sp = sub.add_parser("validate", help="check a config and print derived quantities")
    common(sp, seed=False)

    sp = sub.add_parser("simulate", help="one scenario; writes trace, customers and metrics CSVs")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--scenario", default="ref", help="ref or dev:i:j")
    sp.add_argument("--horizon", type=float, required=True)
    sp.add_argument("--metric-horizon", type=float, default=None)
    sp.add_argument("--reps", type=int, default=1, help="replication index is 0..reps-1; trace files use the first")

    sp = sub.add_parser("sde", help="Euler paths of the limit SDE")
    common(sp)
    sp.add_argument("--horizon", type=float, required=True)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--paths", type=int, default=1)
    sp.add_argument("--x0", type=_floats, default=None)
    sp.add_argument("--times", type=_floats, default=None, help="record only these times")

    for name, help_ in (("rsp", "snapshot-gap and collapse sweep"), ("nash", "sampled-deviator epsilon-Nash check"),
                        ("compare", "simulation vs SDE marginals")):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--n", type=int)
        g.add_argument("--n-list", type=_ints)
        sp.add_argument("--reps", type=int, default=1)
        sp.add_argument("--horizon", type=float, default=5.0)
        sp.add_argument("--metric-horizon", type=float, default=None)
        if name == "nash":
            sp.add_argument("--eps", type=float, required=True)
            sp.add_argument("--deviators", type=int, default=10)
        if name == "compare":
            sp.add_argument("--dt", type=float, default=1e-3)
            sp.add_argument("--paths", type=int, default=1000)
            sp.add_argument("--times", type=_floats, default=None)
    return p


def _load(args):
    try:
        raw = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: not valid JSON ({exc})") from None
    if isinstance(raw, dict) and "subcommand" in raw and "config" in raw:
        raw = raw["config"]
    return validate(raw, require_ordered=args.policy == SLQ)


def _flags(args) -> dict:
    # the config content and output location are not part of what determines the results
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "out")}


def _manifest(args, model) -> str:
    return json_text(
        {
            "artifact": "htnsim",
            "version": __version__,
            "subcommand": args.subcommand,
            "flags": _flags(args),
            "seed": getattr(args, "seed", None),
            "config": model.to_config(),
        }
    )


def _plan(args, model) -> ExperimentPlan:
    n_list = [args.n] if args.n is not None else args.n_list
    return ExperimentPlan(
        model=model,
        policy=args.policy,
        n_list=n_list,
        replications=args.reps,
        horizon=args.horizon,
        metric_horizon=args.metric_horizon,
        seed=args.seed,
        deviators=getattr(args, "deviators", 10),
        eps=getattr(args, "eps", 0.1),
        dt=getattr(args, "dt", 1e-3),
        n_paths=getattr(args, "paths", 1000),
        comparison_times=getattr(args, "times", None) or [args.horizon],
    )


def _write(out: Optional[Path], files: dict) -> None:
    if out is None:
        return
    for name, text in files.items():
        atomic_write(out / name, text)


def _cmd_validate(args, model) -> dict:
    print(f"ok: N={model.N} rho={list(model.rho)} theta={list(model.theta)} M={model.M}")
    return {"model.json": json_text(model.to_config())}


def _cmd_simulate(args, model) -> dict:
    scenario = Scenario.parse(args.scenario)
    T = args.metric_horizon if args.metric_horizon is not None else args.horizon
    files = {}
    rows = []
    for rep in range(args.reps):
        tr = run(model, args.policy, scenario, args.n, args.horizon, args.seed, rep)
        rows.append(metrics_row(args.n, rep, args.policy, scenario.label, run_metrics(tr, T)))
        if rep == 0:
            files["trace.csv"] = trace_csv(tr)
            files["customers.csv"] = customers_csv(tr)
    files["metrics.csv"] = dict_rows_csv(rows)
    print(f"simulated {args.reps} replication(s); {len(files)} files")
    return files


def _cmd_sde(args, model) -> dict:
    paths = simulate_sde(
        args.policy, model, x0=args.x0, dt=args.dt, T=args.horizon, seed=args.seed,
        n_paths=args.paths, sample_times=args.times,
    )
    return {"sde.csv": sde_csv(paths)}


def _cmd_experiment(args, model) -> dict:
    plan = _plan(args, model)
    if args.subcommand == "rsp":
        report = rsp_experiment(plan)
        extra = {"metrics.csv": dict_rows_csv(report.runs)}
    elif args.subcommand == "nash":
        report = nash_experiment(plan)
        extra = {"gaps.csv": dict_rows_csv(report.runs)}
    else:
        report = compare_marginals(plan)
        extra = {}
    text = report.summary()
    sys.stdout.write(text)
    return {"report.csv": report_csv(report), "report.txt": text, **extra}


_HANDLERS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "sde": _cmd_sde,
    "rsp": _cmd_experiment,
    "nash": _cmd_experiment,
    "compare": _cmd_experiment,
}


def argv_from_manifest(path: str | Path, out: Optional[str | Path] = None) -> List[str]:
    """Command line that reproduces the run recorded in a manifest."""
    manifest = json.loads(Path(path).read_text())
    argv = [manifest["subcommand"], "--config", str(path)]
    for key, value in manifest["flags"].items():
        if key == "subcommand" or value is None:
            continue
        if isinstance(value, list):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        argv += ["--" + key.replace("_", "-"), repr(value) if isinstance(value, float) else str(value)]
    if out is not None:
        argv += ["--out", str(out)]
    return argv


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = _load(args)
        files = _HANDLERS[args.subcommand](args, model)
        files["manifest.json"] = _manifest(args, model)
        _write(args.out, files)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (HtnError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
