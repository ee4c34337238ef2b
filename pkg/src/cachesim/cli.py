"""``cachesim`` command line: run, compare, sweep, synth, selfcheck.

Settings come from defaults, then ``--config FILE``, then ``--set KEY=VALUE``
and the dedicated flags, in that order. The effective settings are printed
to stderr before any work starts.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from . import selfcheck, sim, trace
from .agent import PhoebePolicy

OUT_ENV = "CACHESIM_OUT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("cachesim")


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _policy(name: str) -> str:
    if name not in sim.POLICIES:
        raise argparse.ArgumentTypeError(
            f"unknown policy {name!r}; choose from {', '.join(sim.POLICIES)}")
    return name


def _policy_list(text: str) -> list[str]:
    return [_policy(p) for p in _csv_list(text)]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", metavar="FILE", help="key = value settings file")
    g.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one settings key (repeatable)")
    g.add_argument("--seed", type=int, help="seed for every random component")
    g.add_argument("--out", metavar="DIR",
                   help=f"output directory (default: ${OUT_ENV} or ./results)")
    g.add_argument("--block-size", type=int, help="bytes per block for MSR traces")
    g.add_argument("--limit", type=int, help="use only the first N expanded accesses")
    g.add_argument("--warmup", type=int, help="accesses replayed but not counted")
    g.add_argument("--num-bins", type=int, help="bins in the learned policy's cache")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cachesim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", parents=[common], help="one policy on one trace")
    r.add_argument("--trace", required=True, help="trace path or synth:KIND:... reference")
    r.add_argument("--policy", required=True, type=_policy, help=", ".join(sim.POLICIES))
    r.add_argument("--capacity", required=True, help="blocks, or size with KB/MB/GB suffix")
    r.add_argument("--gamma", type=float, help="discount factor for phoebe")
    r.add_argument("--load-agent", metavar="NPZ", help="restore phoebe's agent from a checkpoint")
    r.add_argument("--save-agent", metavar="NPZ", help="write phoebe's agent after the run")
    r.add_argument("--train-log", metavar="CSV", help="write phoebe's per-train-step log")
    r.add_argument("--no-explore", action="store_true", help="act without exploration noise")

    c = sub.add_parser("compare", parents=[common], help="all policies over capacities")
    c.add_argument("--trace", required=True)
    c.add_argument("--capacities", required=True, type=_csv_list, help="comma separated")
    c.add_argument("--policies", type=_policy_list, help="comma separated subset")
    c.add_argument("--gammas", type=lambda s: [float(x) for x in _csv_list(s)])
    c.add_argument("--no-opt", action="store_true", help="skip OPT and the relative columns")
    c.add_argument("--workers", type=int)

    s = sub.add_parser("sweep", parents=[common], help="grid from the settings file")
    s.add_argument("--traces", type=_csv_list)
    s.add_argument("--policies", type=_policy_list)
    s.add_argument("--capacities", type=_csv_list)
    s.add_argument("--gammas", type=lambda s: [float(x) for x in _csv_list(s)])
    s.add_argument("--seeds", type=lambda s: [int(x) for x in _csv_list(s)])
    s.add_argument("--workers", type=int)

    y = sub.add_parser("synth", parents=[common], help="write a synthetic canonical trace")
    y.add_argument("--kind", choices=("cyclic", "zipf", "uniform"), required=True)
    y.add_argument("--blocks", type=int, required=True, help="distinct blocks")
    y.add_argument("--length", type=int, required=True, help="accesses")
    y.add_argument("--skew", type=float, default=1.0, help="zipf exponent")
    y.add_argument("--output", required=True, help="destination CSV")

    k = sub.add_parser("selfcheck", parents=[common], help="run the oracle suites")
    k.add_argument("--quick", action="store_true", help="fewer cases per suite")
    k.add_argument("--only", type=_csv_list, help="comma separated suite names")
    return p


def resolve_settings(args: argparse.Namespace) -> cfgmod.Settings:
    settings = cfgmod.load(args.config)
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    settings = cfgmod.apply(settings, overrides)
    direct = {"seed": args.seed, "block_size": args.block_size, "limit": args.limit,
              "warmup": args.warmup, "num_bins": args.num_bins}
    for name in ("traces", "policies", "capacities", "gammas", "seeds", "workers"):
        direct[name] = getattr(args, name, None)
    settings = replace(settings, **{k: v for k, v in direct.items() if v is not None})
    if getattr(args, "gamma", None) is not None:
        settings = replace(settings, agent=replace(settings.agent, gamma=args.gamma))
    settings.out_dir = args.out or settings.out_dir or os.environ.get(OUT_ENV) or "results"
    if settings.features.history != settings.agent.history:
        raise UsageError("features.history and agent.history must match")
    return settings


def _out_dir(settings: cfgmod.Settings) -> Path:
    out = Path(settings.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args, settings: cfgmod.Settings) -> int:
    blocks = sim.load_trace(args.trace, settings.block_size, settings.limit, settings.seed)
    cap = sim.parse_capacity(args.capacity, settings.block_size)
    agent_cfg = settings.agent
    instance = None
    if args.policy == "phoebe":
        instance = PhoebePolicy(cap, agent_cfg, settings.seed, settings.num_bins,
                                settings.features, explore=not args.no_explore)
        if args.load_agent:
            instance.agent.load(args.load_agent)
    res = sim.run(args.policy, blocks, cap, settings.seed, agent_cfg, None,
                  sim.trace_name(args.trace), settings.num_bins, settings.warmup,
                  feature_cfg=settings.features, instance=instance)
    res.config["settings"] = settings.as_lines()
    out = _out_dir(settings)
    sim.write_results_csv([res], out / "results.csv")
    sim.write_curves_csv([res], out / "curves.csv")
    if instance is not None:
        if args.save_agent:
            instance.agent.save(args.save_agent)
        if args.train_log:
            instance.agent.write_train_log(args.train_log)
    print(f"{res.label} {res.trace} capacity={cap} hit_rate={res.hit_rate:.4f} "
          f"misses={res.misses} bypasses={res.bypasses}")
    return EXIT_OK


def _print_summary(rows: list[dict]) -> None:
    for r in rows:
        extra = "".join(f" {k}={'-' if r[k] is None else format(r[k], '.4f')}"
                        for k in ("rel_miss_lru", "rel_miss_lecar") if k in r)
        print(f"{r['trace']} cap={r['capacity_blocks']} {r['policy']:<12} "
              f"miss={r['miss_rate']:.4f}{extra}")


def _sweep(settings: cfgmod.Settings, traces, policies, capacities) -> int:
    spec = sim.SweepSpec(traces=traces, policies=policies, capacities=capacities,
                         gammas=settings.gammas, seeds=settings.seeds,
                         out_dir=str(_out_dir(settings)), block_size=settings.block_size,
                         limit=settings.limit, workers=settings.workers,
                         num_bins=settings.num_bins, warmup=settings.warmup,
                         agent=settings.agent, features=settings.features)
    results, rows = sim.sweep(spec)
    _print_summary(rows)
    failed = [r for r in results if r.error]
    for r in failed:
        print(f"cell failed: {r.trace} {r.label} cap={r.capacity_blocks}: {r.error}",
              file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_compare(args, settings: cfgmod.Settings) -> int:
    policies = args.policies or list(sim.POLICIES)
    if args.no_opt:
        policies = [p for p in policies if p != "opt"]
    elif "opt" not in policies:
        policies.append("opt")
    settings = replace(settings, seeds=[settings.seed])
    return _sweep(settings, [args.trace], policies, args.capacities)


def cmd_sweep(args, settings: cfgmod.Settings) -> int:
    if not settings.traces or not settings.capacities:
        raise UsageError("sweep needs sweep.traces and sweep.capacities (config or flags)")
    return _sweep(settings, settings.traces, settings.policies, settings.capacities)


def cmd_synth(args, settings: cfgmod.Settings) -> int:
    if args.kind == "cyclic":
        gen = trace.synth_cyclic(args.blocks, args.length, settings.seed)
    elif args.kind == "zipf":
        gen = trace.synth_zipf(args.blocks, args.length, args.skew, settings.seed)
    else:
        gen = trace.synth_uniform(args.blocks, args.length, settings.seed)
    n = trace.write_canonical(gen, args.output)
    print(f"wrote {n} accesses to {args.output}")
    return EXIT_OK


def cmd_selfcheck(args, settings: cfgmod.Settings) -> int:
    if args.only:
        unknown = set(args.only) - set(selfcheck.SUITES)
        if unknown:
            raise UsageError(f"unknown suite(s) {sorted(unknown)}; choose from "
                             f"{', '.join(selfcheck.SUITES)}")
    results = selfcheck.run_all(args.quick, settings.seed, args.only)
    print(selfcheck.format_table(results))
    if all(r.passed for r in results):
        return EXIT_OK
    out = _out_dir(settings) / "selfcheck_failures.json"
    out.write_text(selfcheck.failing_cases_json(results), encoding="utf-8")
    print(f"failing cases written to {out}", file=sys.stderr)
    return EXIT_FAIL


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep,
            "synth": cmd_synth, "selfcheck": cmd_selfcheck}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(args)
    except (cfgmod.ConfigError, UsageError, OSError) as exc:
        print(f"cachesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("# effective settings", file=sys.stderr)
    for line in settings.as_lines():
        print(line, file=sys.stderr)
    try:
        return COMMANDS[args.cmd](args, settings)
    except UsageError as exc:
        print(f"cachesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, trace.TraceParseError) as exc:
        print(f"cachesim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
