"""Command-line front end.

Subcommands: ``closed-form``, ``sweep``, ``optimize``, ``threshold`` and
``verify``. Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import protocols as pr
from .bilocality import BsmScenario, bilocality_value
from .errors import BilocalError, ZeroSuccessProbability
from .optimizer import OptimizerConfig, OptimumReport, maximize_over_r, maximize_over_settings, threshold_p
from .protocols import AUTO, NoiseCase, ProtectionCase, ScenarioSpec
from .states import BellKind
from .verification import GROUPS, run_checks

CONFIG_ENV = "NONBILOCAL_CONFIG"
DEFAULT_CONFIG = Path("~/.nonbilocal.cfg")
CONFIG_KEYS = {"seed": int, "restarts": int, "max_iters": int, "tol": float, "jobs": int}

CASES = {
    "c1": (NoiseCase.SINGLE_ARM, ProtectionCase.UNPROTECTED),
    "c2": (NoiseCase.BOTH_ARMS, ProtectionCase.UNPROTECTED),
    "d1": (NoiseCase.SINGLE_ARM, ProtectionCase.WEAK_SINGLE_ARM),
    "d2": (NoiseCase.BOTH_ARMS, ProtectionCase.WEAK_BOTH_ARMS),
}
BELLS = {k.value: k for k in BellKind}


class UsageError(Exception):
    pass


@dataclass
class SweepRecord:
    scenario: str
    case: str
    p: float
    w: float
    r_used: Optional[float]
    b_value: Optional[float]
    b_closed_form: Optional[float]
    success_prob: Optional[float]
    b_average: Optional[float]
    violated: Optional[bool]
    flag: str = ""


FIELDNAMES = [f.name for f in fields(SweepRecord)]


# --- config ----------------------------------------------------------------


def load_config(path: Optional[str] = None) -> dict:
    """Read ``key = value`` defaults; unknown keys are rejected."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or str(DEFAULT_CONFIG.expanduser())
    p = Path(path)
    if not p.is_file():
        return {}
    out = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in CONFIG_KEYS:
            raise UsageError(f"{p}:{lineno}: cannot parse {raw!r}")
        out[key] = CONFIG_KEYS[key](value.strip())
    return out


def optimizer_config(args, cfg_file: dict) -> OptimizerConfig:
    def pick(name, default):
        value = getattr(args, name, None)
        return value if value is not None else cfg_file.get(name, default)

    return OptimizerConfig(
        restarts=pick("restarts", 32), max_iters=pick("max_iters", 2000), seed=pick("seed", 0), tol=pick("tol", 1e-10)
    )


# --- argument helpers --------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    """``start:end:count``, both endpoints included."""
    try:
        start, end, count = text.split(":")
        start, end, n = float(start), float(end), int(count)
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}; expected start:end:count") from exc
    if n < 2:
        raise UsageError(f"grid {text!r} needs at least 2 points")
    if not (0.0 <= start <= 1.0 and 0.0 <= end <= 1.0):
        raise UsageError(f"grid {text!r} leaves [0, 1]")
    return [float(v) for v in np.linspace(start, end, n)]


def parse_r(text: str):
    if text == AUTO:
        return AUTO
    try:
        value = float(text)
    except ValueError as exc:
        raise UsageError(f"--r expects a number or 'auto', got {text!r}") from exc
    if not 0.0 <= value <= 1.0:
        raise UsageError("--r must lie in [0, 1]")
    return value


def _scenario(args) -> BsmScenario:
    return BsmScenario(args.scenario)


def _case(args):
    noise, prot = CASES[args.case]
    protected = prot is not ProtectionCase.UNPROTECTED
    w_given = getattr(args, "w", None) is not None or getattr(args, "w_grid", None) is not None
    if not protected and w_given:
        raise UsageError(f"--w/--w-grid make no sense for case {args.case}")
    if not protected and getattr(args, "r", AUTO) != AUTO:
        raise UsageError(f"--r makes no sense for case {args.case}")
    return noise, prot


def _check_unit(name, value):
    if value is not None and not 0.0 <= value <= 1.0:
        raise UsageError(f"--{name} must lie in [0, 1]")


def _fmt(x: float) -> str:
    return format(x, ".17g")


# --- evaluation of one grid cell ----------------------------------------------


def evaluate_cell(
    scenario: BsmScenario,
    case: str,
    p: float,
    w: float,
    r=AUTO,
    bell: BellKind = BellKind.PSI_PLUS,
    average: bool = False,
    reoptimize: bool = False,
    cfg: Optional[OptimizerConfig] = None,
) -> SweepRecord:
    noise, prot = CASES[case]
    protected = prot is not ProtectionCase.UNPROTECTED
    rec = SweepRecord(scenario.value, case, p, w if protected else 0.0, None, None, None, None, None, None)

    if not protected:
        rec.b_closed_form = pr.closed_form_unprotected(scenario, noise, p)
        rec.success_prob = 1.0
        spec = ScenarioSpec(scenario, noise, prot, p, initial_bell=bell)
    else:
        corner = p == 1.0 and w == 1.0
        try:
            r_used = pr.r_opt(scenario, prot, p, w, cfg) if r == AUTO else float(r)
        except ZeroSuccessProbability:
            r_used = 1.0
        rec.r_used = r_used
        spec = ScenarioSpec(scenario, noise, prot, p, w, r_used, bell)
        rec.success_prob = pr.success_probability(prot, p, w, r_used)
        if not corner:
            if r == AUTO:
                rec.b_closed_form = pr.closed_form_protected(scenario, prot, p, w)
            elif scenario is not BsmScenario.TWO_TWO:
                try:
                    rec.b_closed_form = pr.protected_expression(scenario, prot, p, w, min(r_used, pr.R_MAX))
                except ZeroSuccessProbability:
                    pass

    settings = pr.frozen_settings(scenario, noise, p, bell)
    try:
        outcome = pr.run_pipeline(spec, settings)
    except ZeroSuccessProbability:
        rec.flag = "zero_success"
        rec.success_prob = 0.0
    else:
        if reoptimize:
            rep = maximize_over_settings(outcome.final_state, scenario, cfg, initial=settings)
            rec.b_value = rep.best_value
        else:
            rec.b_value = bilocality_value(outcome.final_state, settings, scenario).b_val
        rec.success_prob = outcome.success_prob

    b = rec.b_value if rec.b_value is not None else rec.b_closed_form
    if b is not None:
        rec.violated = b > 1.0
    if average:
        if not protected:
            rec.b_average = b
        elif rec.b_closed_form is not None or rec.b_value is not None:
            bb = rec.b_closed_form if rec.b_closed_form is not None else rec.b_value
            rec.b_average = rec.success_prob * bb + (1.0 - rec.success_prob)
    return rec


def _cell_job(job):
    return evaluate_cell(*job)


def sweep_records(scenario, case, p_grid, w_grid, r=AUTO, bell=BellKind.PSI_PLUS, average=False,
                  reoptimize=False, cfg=None, jobs: int = 1) -> list[SweepRecord]:
    """All grid cells, p-major then w, in deterministic order."""
    jobs_list = [(scenario, case, p, w, r, bell, average, reoptimize, cfg) for p in p_grid for w in w_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_cell_job, jobs_list, chunksize=max(1, len(jobs_list) // (4 * jobs))))
    return [_cell_job(j) for j in jobs_list]


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIELDNAMES)
    for rec in records:
        writer.writerow([_csv_value(getattr(rec, name)) for name in FIELDNAMES])
    return buf.getvalue()


def records_from_csv(text: str) -> list[SweepRecord]:
    def conv(name, raw):
        if raw == "":
            return "" if name == "flag" else None
        if name in ("scenario", "case", "flag"):
            return raw
        if name == "violated":
            return raw == "true"
        return float(raw)

    reader = csv.DictReader(io.StringIO(text))
    return [SweepRecord(**{k: conv(k, row[k]) for k in FIELDNAMES}) for row in reader]


def records_to_json(records) -> str:
    return json.dumps([asdict(r) for r in records], indent=1) + "\n"


# --- subcommands ---------------------------------------------------------------


def cmd_closed_form(args, cfg_file) -> int:
    scenario = _scenario(args)
    noise, prot = _case(args)
    _check_unit("p", args.p)
    _check_unit("w", args.w)
    if prot is ProtectionCase.UNPROTECTED:
        value = pr.closed_form_unprotected(scenario, noise, args.p)
        payload = {"scenario": scenario.value, "case": args.case, "p": args.p, "b_closed_form": value}
    else:
        if args.w is None:
            raise UsageError(f"case {args.case} needs --w")
        r = pr.r_opt(scenario, prot, args.p, args.w) if not (args.p == 1.0 and args.w == 1.0) else None
        value = pr.closed_form_protected(scenario, prot, args.p, args.w)
        payload = {"scenario": scenario.value, "case": args.case, "p": args.p, "w": args.w, "r_opt": r,
                   "b_closed_form": value, "success_prob": pr.success_probability(prot, args.p, args.w, r)}
        if args.average:
            payload["b_average"] = pr.average_value(scenario, prot, args.p, args.w)
    payload["violated"] = value > 1.0
    if args.format == "json":
        print(json.dumps(payload))
    else:
        extra = f" b_average={payload['b_average']:.6f}" if "b_average" in payload else ""
        print(f"{value:.6f} violated={'true' if value > 1.0 else 'false'}{extra}")
    return 0


def cmd_sweep(args, cfg_file) -> int:
    scenario = _scenario(args)
    noise, prot = _case(args)
    r = parse_r(args.r)
    p_grid = parse_grid(args.p_grid)
    if prot is ProtectionCase.UNPROTECTED:
        w_grid = [0.0]
    else:
        if args.w_grid is None:
            raise UsageError(f"case {args.case} needs --w-grid")
        w_grid = parse_grid(args.w_grid)
    jobs = args.jobs if args.jobs is not None else cfg_file.get("jobs", 1)
    cfg = optimizer_config(args, cfg_file)
    records = sweep_records(scenario, args.case, p_grid, w_grid, r, BELLS[args.bell], args.average,
                            args.reoptimize_settings, cfg, jobs)
    text = records_to_json(records) if args.format == "json" else records_to_csv(records)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_optimize(args, cfg_file) -> int:
    scenario = _scenario(args)
    noise, prot = _case(args)
    _check_unit("p", args.p)
    _check_unit("w", args.w)
    cfg = optimizer_config(args, cfg_file)
    bell = BELLS[args.bell]
    if prot is ProtectionCase.UNPROTECTED:
        spec = ScenarioSpec(scenario, noise, prot, args.p, initial_bell=bell)
        state = pr.run_pipeline(spec).final_state
        report = maximize_over_settings(state, scenario, cfg, initial=pr.published_settings(scenario, noise, args.p))
    else:
        if args.w is None:
            raise UsageError(f"case {args.case} needs --w")
        r = parse_r(args.r)
        spec = ScenarioSpec(scenario, noise, prot, args.p, args.w, AUTO, bell)
        settings = pr.frozen_settings(scenario, noise, args.p, bell)
        if r == AUTO:
            report = maximize_over_r(spec, cfg, settings=settings)
        else:
            outcome = pr.run_pipeline(pr.with_r(spec, r), settings)
            value = bilocality_value(outcome.final_state, settings, scenario).b_val
            report = OptimumReport(value, settings, r, 1)
        if args.reoptimize_settings:
            state = pr.run_pipeline(pr.with_r(spec, report.best_r), settings).final_state
            better = maximize_over_settings(state, scenario, cfg, initial=settings)
            report = OptimumReport(better.best_value, better.best_settings, report.best_r,
                                   report.evaluations + better.evaluations)
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def cmd_threshold(args, cfg_file) -> int:
    scenario = _scenario(args)
    noise, prot = _case(args)
    if prot is not ProtectionCase.UNPROTECTED:
        raise UsageError("thresholds are defined for the unprotected cases c1 and c2")
    p = threshold_p(scenario, noise, optimizer_config(args, cfg_file))
    print(f"{p:.12f}")
    return 0


def cmd_verify(args, cfg_file) -> int:
    results = run_checks(args.only)
    for res in results:
        print(res.line())
    failed = [r.label for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failed: " + ", ".join(failed))
        return 1
    return 0


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonbilocal", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help=f"key=value defaults file (env {CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=False):
        p.add_argument("--scenario", choices=[s.value for s in BsmScenario], required=True)
        p.add_argument("--case", choices=list(CASES), required=True)
        p.add_argument("--bell", choices=list(BELLS), default=BellKind.PSI_PLUS.value)
        if not grid:
            p.add_argument("--p", type=float, required=True)
            p.add_argument("--w", type=float)

    def optim(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--max-iters", dest="max_iters", type=int)

    p = sub.add_parser("closed-form", help="evaluate a closed-form bilocality value")
    common(p)
    p.add_argument("--average", action="store_true")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_closed_form)

    p = sub.add_parser("sweep", help="tabulate a (p, w) surface")
    common(p, grid=True)
    p.add_argument("--p-grid", dest="p_grid", required=True)
    p.add_argument("--w-grid", dest="w_grid")
    p.add_argument("--r", default=AUTO)
    p.add_argument("--average", action="store_true")
    p.add_argument("--reoptimize-settings", dest="reoptimize_settings", action="store_true")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--jobs", type=int)
    optim(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="numerically maximize over settings or r")
    common(p)
    p.add_argument("--r", default=AUTO)
    p.add_argument("--reoptimize-settings", dest="reoptimize_settings", action="store_true")
    optim(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("threshold", help="damping where the bilocal bound is reached")
    common(p, grid=True)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("verify", help="run all self-checks")
    p.add_argument("--only", choices=list(GROUPS))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg_file = load_config(args.config)
        if hasattr(args, "r") and args.r != AUTO:
            parse_r(args.r)
        return args.func(args, cfg_file)
    except (UsageError, BilocalError) as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
