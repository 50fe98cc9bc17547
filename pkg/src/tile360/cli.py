"""Command-line entry point: ``tile360 solve|simulate|verify|channel-dump``.

Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 failed checks.
Set ``TILE360_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import yaml
from pydantic import ValidationError

from .channel import dump_rows, sample_block
from .config import BASELINES, RunConfig, dump_config, load_config, preset
from .sim import gop_users, run_scheme, trace_for
from .solver_mu import cccp_plan_gop
from .solver_su import plan_gop_su
from .verify import run_suite

log = logging.getLogger("tile360")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
CASES = ("pp", "ip", "up")
SOLVER_FAILURES = {"subproblem_failed", "failed", "max_iter"}


class SolverFailure(RuntimeError):
    pass


def _configure_logging():
    level = os.environ.get("TILE360_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else preset("desk")
    update = {}
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    if getattr(args, "baselines", None) is not None:
        update["baselines"] = args.baselines
    if update:
        cfg = RunConfig.model_validate({**cfg.model_dump(mode="json"), **update})
    return cfg


def _cases(args, cfg: RunConfig):
    return CASES if args.case == "all" else (args.case or cfg.case,)


def _with_case(cfg: RunConfig, case: str) -> RunConfig:
    return RunConfig.model_validate({**cfg.model_dump(mode="json"), "case": case})


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    """Plan GOP 0 on slot 1 for each requested case and write plan_<case>.json."""
    cfg = _load(args)
    out = _out_dir(args)
    seed = cfg.seed
    model = cfg.streaming_model()
    params = cfg.channel_params()
    trace = trace_for(cfg, seed)
    block = sample_block(seed, 0, params)
    for case in _cases(args, cfg):
        ccfg = _with_case(cfg, case)
        users = gop_users(ccfg, model, trace, 0)
        if cfg.scenario == "single":
            plan = plan_gop_su(users.cases[0], model, users.fov_sets[0], block, cfg.channel.power)
            status, data = plan.status, plan.to_dict()
        else:
            plan, _ = cccp_plan_gop(users.cases, model, users.fov_sets, block, cfg.channel.power,
                                    ccfg.cccp_options())
            status, data = plan.status, plan.to_dict()
        data["scenario"] = cfg.scenario
        path = out / f"plan_{case}.json"
        path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")
        print(f"{case} objective {plan.objective:.10g} status {status} -> {path}")
        if status in SOLVER_FAILURES:
            raise SolverFailure(f"{case} plan ended with status {status}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    """Run the proposed scheme and each requested baseline; write report files."""
    cfg = _load(args)
    out = _out_dir(args)
    seed = cfg.seed
    trace = trace_for(cfg, seed)
    main = "proposed_su" if cfg.scenario == "single" else "proposed_mu"
    schemes = [main] + list(cfg.baselines)
    for b in cfg.baselines:
        want = "multi" if b == "sdma" else "single"
        if want != cfg.scenario:
            raise ValueError(f"baseline {b!r} needs the {want} scenario")
    failed = 0
    for case in _cases(args, cfg):
        ccfg = _with_case(cfg, case)
        for scheme in schemes:
            report = run_scheme(scheme, ccfg, trace, seed)
            name = "proposed" if scheme == main else f"baseline_{scheme}"
            sub = out if args.case != "all" else out / case
            report.write(sub / name if scheme != main else sub)
            s = report.summary()
            failed += s["failed_gops"]
            print(f"{case} {name}: utility {s['utility_mean']:.6g} rebuffering "
                  f"{s['rebuffering_mean']:.6g} s failed GOPs {s['failed_gops']}")
    dump_config(cfg, out / "config.yaml")
    if failed:
        raise SolverFailure(f"{failed} GOP(s) failed")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite(args.level, args.seed or 0)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_channel_dump(args) -> int:
    """Write ``t, k, n, m, real, imag`` rows for slots ``0..slots-1``."""
    cfg = _load(args)
    params = cfg.channel_params()
    slots = args.slots if args.slots is not None else cfg.timing.slots
    out = _out_dir(args) / "channel.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k", "n", "m", "real", "imag"])
        for t in range(slots):
            w.writerows(dump_rows(sample_block(cfg.seed, t, params)))
    print(f"wrote {out}")
    return EXIT_OK


def _baseline_list(text: str):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [n for n in names if n not in BASELINES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown baseline(s) {bad}; choose from {list(BASELINES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tile360", description="Plan and simulate tiled 360-degree video streaming.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, case=True):
        sp.add_argument("--config", help="YAML configuration (default: desk preset)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="output directory (default: current directory)")
        if case:
            sp.add_argument("--case", choices=CASES + ("all",), help="probability case")

    sp = sub.add_parser("solve", help="plan one GOP and write plan JSON")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", help="run a full simulation and write reports")
    common(sp)
    sp.add_argument("--baselines", type=_baseline_list,
                    help=f"comma-separated subset of {','.join(BASELINES)}")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="run the self-check oracle suites")
    sp.add_argument("level", nargs="?", default="fast", choices=("fast", "full"))
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("channel-dump", help="export channel realizations as CSV")
    common(sp, case=False)
    sp.add_argument("--slots", type=int, help="number of slots (default: configured T)")
    sp.set_defaults(func=cmd_channel_dump)
    return p


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        parser.error("--seed must be nonnegative")
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"invalid configuration:\n{err}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, yaml.YAMLError, ValueError) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except SolverFailure as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
