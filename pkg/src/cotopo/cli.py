"""Command-line entry point.

    cotopo optimize  --job dlrm16 -d 3 --out runs/opt
    cotopo simulate  --job candle --arch fat_tree --strategy data_parallel
    cotopo sweep     --axis bandwidth --values 10 25 40 100 200
    cotopo cost      --n-values 128 256 512 1024
    cotopo perms     12 12
    cotopo multijob  --jobs 27 -n 432

Options may also come from a JSON file given with ``--config``; flags on the
command line win.  Relative config paths are looked up in ``$COTOPO_CONFIG_DIR``
when they do not exist in the working directory.  Every command that writes
to ``--out`` also writes ``manifest.json`` with the resolved options, their
hash, the seed and library versions.

Exit status: 0 on success, 1 when a run fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .costmodel import ARCHITECTURES as COST_ARCHITECTURES
from .costmodel import PriceTable, cost_sweep
from .scenarios import PERF_ARCHITECTURES

CONFIG_ENV = "COTOPO_CONFIG_DIR"
SWEEP_AXES = ("bandwidth", "degree", "load", "reconfig_latency")
STRATEGIES = ("search", "data_parallel", "embedding_sharded")

SWEEP_COLUMNS = ("axis", "value", "architecture", "iteration_time_us", "bandwidth_tax",
                 "flow_path_length_mean", "link_load_max", "error")
LOAD_COLUMNS = ("axis", "value", "architecture", "jobs", "mean_us", "p99_us", "error")
COST_COLUMNS = ("n", "d", "B", "architecture", "total")
COST_RATIO_COLUMNS = ("n", "ocs_over_patch_panel", "ideal_over_patch_panel")
MULTIJOB_COLUMNS = ("job", "name", "first_server", "servers", "iteration_time_us")


class UsageError(Exception):
    pass


# --- argument parsing ---------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="seed for search, expander and fibers")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None, help="JSON file of option defaults")


def _cluster(p, d=4, B=100.0):
    p.add_argument("--job", default="dlrm", help="preset name or job JSON file")
    p.add_argument("-n", "--servers", dest="n", type=int, default=None,
                   help="override the job's server count")
    p.add_argument("--batch", type=int, default=None, help="override batch per GPU")
    p.add_argument("-d", "--degree", dest="d", type=int, default=d)
    p.add_argument("-B", "--bandwidth", dest="B", type=float, default=B, help="Gbps per link")


def _search(p):
    p.add_argument("--budget", type=int, default=100, help="proposals per search round")
    p.add_argument("--rounds", type=int, default=3, help="alternating rounds")
    p.add_argument("--epsilon", type=float, default=0.01, help="convergence threshold")
    p.add_argument("--overlap", action="store_true", help="overlap AllReduce with backward")


def _reconfig(p):
    p.add_argument("--interval-us", dest="interval_us", type=float, default=50_000.0)
    p.add_argument("--latency-us", dest="latency_us", type=float, default=10_000.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cotopo", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"cotopo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="co-optimize strategy and direct-connect topology")
    _common(p)
    _cluster(p)
    _search(p)

    p = sub.add_parser("simulate", help="simulate one iteration on an architecture")
    _common(p)
    _cluster(p)
    _search(p)
    _reconfig(p)
    p.add_argument("--arch", default="direct_connect", choices=PERF_ARCHITECTURES)
    p.add_argument("--strategy", default="search",
                   help=f"one of {', '.join(STRATEGIES)} or a strategy JSON file")
    p.add_argument("--prices", default=None, help="price table JSON")

    p = sub.add_parser("sweep", help="iteration time along one axis")
    _common(p)
    _cluster(p)
    _search(p)
    _reconfig(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--archs", nargs="+", default=None, choices=PERF_ARCHITECTURES)
    p.add_argument("--strategy", default="search")
    p.add_argument("--prices", default=None)
    p.add_argument("--servers-per-job", dest="servers_per_job", type=int, default=16)
    p.add_argument("--workers", type=int, default=1, help="parallel sweep points")

    p = sub.add_parser("cost", help="interconnect cost over cluster sizes")
    _common(p)
    p.add_argument("--n-values", dest="n_values", type=int, nargs="+",
                   default=list(range(128, 1025, 128)))
    p.add_argument("-d", "--degree", dest="d", type=int, default=4)
    p.add_argument("-B", "--bandwidth", dest="B", type=float, default=100.0)
    p.add_argument("--archs", nargs="+", default=list(COST_ARCHITECTURES),
                   choices=COST_ARCHITECTURES)
    p.add_argument("--prices", default=None, help="price table JSON")

    p = sub.add_parser("perms", help="ring strides for a group")
    _common(p)
    p.add_argument("n", type=int, help="cluster size")
    p.add_argument("k", type=int, help="group size")
    p.add_argument("d_k", type=int, nargs="?", default=None, help="strides to select")
    p.add_argument("--prime-only", dest="prime_only", action="store_true")
    p.add_argument("--dbt", action="store_true", help="also emit double binary trees")

    p = sub.add_parser("multijob", help="jobs on disjoint shards of one cluster")
    _common(p)
    _search(p)
    p.add_argument("-n", "--servers", dest="n", type=int, default=432)
    p.add_argument("-d", "--degree", dest="d", type=int, default=4)
    p.add_argument("-B", "--bandwidth", dest="B", type=float, default=100.0)
    p.add_argument("--jobs", type=int, default=27)
    p.add_argument("--servers-per-job", dest="servers_per_job", type=int, default=16)
    return ap


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    base = os.environ.get(CONFIG_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    return p


def _parse(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config is None:
        return args
    path = _resolve_config(args.config)
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}")
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    known = vars(args)
    bad = sorted(set(cfg) - set(known) - {"command"})
    if bad:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(bad)}")
    # a flag given explicitly beats the file; find those by parsing with no defaults
    sub = ap._subparsers._group_actions[0].choices[args.command]
    saved = {a.dest: a.default for a in sub._actions}
    for a in sub._actions:
        a.default = argparse.SUPPRESS
    explicit = vars(ap.parse_args(argv))
    for a in sub._actions:
        a.default = saved[a.dest]
    for k, v in cfg.items():
        if k != "command" and k not in explicit:
            setattr(args, k, v)
    return args


def _check(args):
    arch = getattr(args, "arch", None)
    if arch is not None and arch not in PERF_ARCHITECTURES:
        raise UsageError(f"unknown architecture {arch!r}; choose from {PERF_ARCHITECTURES}")
    for a in getattr(args, "archs", None) or []:
        allowed = COST_ARCHITECTURES if args.command == "cost" else PERF_ARCHITECTURES
        if a not in allowed:
            raise UsageError(f"unknown architecture {a!r}; choose from {allowed}")
    if getattr(args, "axis", None) not in (None,) + SWEEP_AXES:
        raise UsageError(f"unknown axis {args.axis!r}")
    for name in ("d", "n", "budget", "rounds", "jobs", "servers_per_job", "workers"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise UsageError(f"--{name} must be >= 1")
    if getattr(args, "B", None) is not None and args.B <= 0:
        raise UsageError("bandwidth must be > 0")


# --- helpers ------------------------------------------------------------------

def _load_job(args):
    from .workload import list_presets, load_job, load_preset
    if args.job in list_presets():
        job = load_preset(args.job)
    elif Path(args.job).exists():
        job = load_job(args.job)
    else:
        raise UsageError(f"{args.job!r} is neither a preset ({', '.join(list_presets())}) "
                         "nor a job file")
    if args.n is not None:
        job = job.with_servers(args.n)
    if args.batch is not None:
        job = job.with_batch(args.batch)
    return job


def _strategy(args, job):
    from .workload import data_parallel, embedding_sharded, load_strategy
    s = args.strategy
    if s == "search":
        return None
    if s == "data_parallel":
        return data_parallel(job)
    if s == "embedding_sharded":
        return embedding_sharded(job)
    if Path(s).exists():
        return load_strategy(s, job.n)
    raise UsageError(f"--strategy must be one of {STRATEGIES} or a file, got {s!r}")


def _search_cfg(args):
    from .altopt import SearchConfig
    return SearchConfig(mcmc_budget=args.budget, alt_rounds=args.rounds,
                        convergence_epsilon=args.epsilon, seed=args.seed,
                        overlap=args.overlap)


def _policy(args, latency=None):
    from .simulator.reconfig import ReconfigPolicy
    return ReconfigPolicy("periodic", args.interval_us,
                          args.latency_us if latency is None else latency)


def _prices(args):
    return PriceTable.load(args.prices) if getattr(args, "prices", None) else PriceTable.default()


def _out(args) -> Path | None:
    if args.out is None:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _num(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return v


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(r.get(c, "")) for c in columns])


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def versions() -> dict:
    import networkx
    import numpy
    import scipy
    return {"cotopo": __version__, "python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__,
            "networkx": networkx.__version__}


def manifest(args, outputs) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "config")}
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {"command": args.command, "config": cfg,
            "config_hash": hashlib.sha256(blob).hexdigest(),
            "seed": args.seed, "versions": versions(), "outputs": sorted(outputs)}


def _finish(args, out, outputs):
    if out is not None:
        _write_json(out / "manifest.json", manifest(args, outputs))


# --- commands -----------------------------------------------------------------

def cmd_optimize(args) -> int:
    from .altopt import alternate_optimize, ring_assignment_for
    from .workload import derive_transfers, export_heatmap, traffic_matrix
    job = _load_job(args)
    res = alternate_optimize(job, job.n, args.d, _search_cfg(args), args.B)
    ts = derive_transfers(job, res.strategy)
    summary = {"job": job.name, "n": job.n, "d": args.d, "B": args.B,
               "iteration_time_us": res.iteration_time_us, "best_us": res.best_time_us}
    out = _out(args)
    if out is not None:
        res.topology.to_json(out / "topology.json")
        res.routes.to_json(out / "routing.json")
        _write_json(out / "strategy.json", res.strategy.to_dict())
        res.write_log(out / "rounds.jsonl")
        export_heatmap(traffic_matrix(ts, ring_assignment_for(ts, res.routes)),
                       out / "heatmap.csv")
        _write_json(out / "summary.json", summary)
        _finish(args, out, ["topology.json", "routing.json", "strategy.json",
                            "rounds.jsonl", "heatmap.csv", "summary.json"])
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_simulate(args) -> int:
    from .scenarios import evaluate
    from .simulator.metrics import cdf_points, metrics, write_cdf_csv
    job = _load_job(args)
    strat = _strategy(args, job)
    r = evaluate(args.arch, job, args.d, args.B, _search_cfg(args), _prices(args),
                 _policy(args), search=True, seed=args.seed, strategy=strat)
    m = metrics(r.result, r.topology)
    summary = {k: v for k, v in m.items() if not k.endswith("_cdf")}
    summary.update({"architecture": args.arch, "job": job.name, "n": job.n, **r.extra})
    out = _out(args)
    if out is not None:
        _write_json(out / "result.json", r.result.to_dict())
        _write_json(out / "strategy.json", r.strategy.to_dict())
        write_cdf_csv(m["link_load_cdf"], out / "link_load_cdf.csv", ("bytes", "cdf"))
        write_cdf_csv(cdf_points(r.result.path_hops), out / "path_length_cdf.csv",
                      ("hops", "cdf"))
        _write_json(out / "metrics.json", summary)
        files = ["result.json", "strategy.json", "link_load_cdf.csv",
                 "path_length_cdf.csv", "metrics.json"]
        if r.topology is not None:
            r.topology.to_json(out / "topology.json")
            files.append("topology.json")
        _finish(args, out, files)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _sweep_point(task):
    """One (value, architecture) point; failures come back as an error column."""
    args, value, arch = task
    row = {"axis": args.axis, "value": value, "architecture": arch}
    try:
        if args.axis == "load":
            from .simulator.multijob import job_mix, multi_job_run
            jobs = int(value)
            mj = multi_job_run(job_mix(jobs, args.servers_per_job), args.n or 432, args.d,
                               args.B, _search_cfg(args))
            row.update({"jobs": jobs, "mean_us": mj.mean_us, "p99_us": mj.p99_us})
            return row
        from .scenarios import evaluate
        job = _load_job(args)
        d, B, latency = args.d, args.B, None
        if args.axis == "bandwidth":
            B = value
        elif args.axis == "degree":
            d = int(value)
        else:
            latency = value
        r = evaluate(arch, job, d, B, _search_cfg(args), _prices(args),
                     _policy(args, latency), seed=args.seed, strategy=_strategy(args, job))
        row.update({k: v for k, v in r.row().items() if k in SWEEP_COLUMNS})
    except UsageError:
        raise
    except Exception as e:  # recorded per point; the sweep goes on
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def cmd_sweep(args) -> int:
    if args.axis == "load":
        archs = ["direct_connect"]
    elif args.archs:
        archs = list(args.archs)
    elif args.axis == "reconfig_latency":
        archs = ["ocs_reconfig"]
    else:
        archs = ["direct_connect", "ideal_switch", "fat_tree"]
    if args.axis == "reconfig_latency":
        for v in args.values:
            if not 0 <= v < args.interval_us:
                raise UsageError("reconfiguration latency must lie in [0, interval)")
    tasks = [(args, v, a) for v in args.values for a in archs]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    order = {a: i for i, a in enumerate(archs)}
    rows.sort(key=lambda r: (r["value"], order[r["architecture"]]))
    cols = LOAD_COLUMNS if args.axis == "load" else SWEEP_COLUMNS
    out = _out(args)
    if out is not None:
        _write_csv(out / "sweep.csv", cols, rows)
        _finish(args, out, ["sweep.csv"])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_num(r.get(c, "")) for c in cols])
    return 1 if all(r.get("error") for r in rows) else 0


def cmd_cost(args) -> int:
    prices = _prices(args)
    wide = cost_sweep(args.n_values, args.d, args.B, prices, args.seed, args.archs)
    rows = [{"n": r["n"], "d": args.d, "B": args.B, "architecture": a, "total": r[a]}
            for r in wide for a in args.archs]
    ratios = cost_sweep(args.n_values, args.d, args.B, prices, args.seed,
                        ("direct_connect", "direct_connect_ocs", "ideal_switch"))
    out = _out(args)
    if out is not None:
        _write_csv(out / "cost.csv", COST_COLUMNS, rows)
        _write_csv(out / "cost_ratios.csv", COST_RATIO_COLUMNS, ratios)
        _finish(args, out, ["cost.csv", "cost_ratios.csv"])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(COST_COLUMNS)
    for r in rows:
        w.writerow([_num(r[c]) for c in COST_COLUMNS])
    return 0


def cmd_perms(args) -> int:
    from .permutations import (PermutationError, dbt_permutations, geometric_ratio,
                               select_permutations, totient_perms)
    try:
        ps = totient_perms(args.n, args.k, args.prime_only)
    except PermutationError as e:
        raise UsageError(str(e))
    res = {"n": args.n, "k": args.k, "prime_only": args.prime_only,
           "strides": list(ps.strides)}
    if args.d_k is not None:
        trace: list = []
        try:
            chosen = select_permutations(args.k, args.d_k, ps, trace)
        except PermutationError as e:
            raise UsageError(str(e))
        res.update({"d_k": args.d_k, "ratio": geometric_ratio(args.k, args.d_k),
                    "selected": chosen,
                    "trace": [{"target": t, "chosen": c} for t, c in trace]})
    if args.dbt:
        pair = dbt_permutations(args.k)
        res["dbt"] = {"roots": list(pair.roots),
                      "trees": [sorted(map(list, pair.edges(i))) for i in (0, 1)]}
    out = _out(args)
    if out is not None:
        _write_json(out / "perms.json", res)
        _finish(args, out, ["perms.json"])
    print(json.dumps(res, sort_keys=True))
    return 0


def cmd_multijob(args) -> int:
    from .simulator.multijob import job_mix, multi_job_run
    mj = multi_job_run(job_mix(args.jobs, args.servers_per_job), args.n, args.d, args.B,
                       _search_cfg(args))
    summary = {"n": args.n, "jobs": args.jobs, "mean_us": mj.mean_us, "p99_us": mj.p99_us}
    out = _out(args)
    if out is not None:
        _write_csv(out / "jobs.csv", MULTIJOB_COLUMNS, mj.rows())
        _write_json(out / "summary.json", summary)
        _finish(args, out, ["jobs.csv", "summary.json"])
    print(json.dumps(summary, sort_keys=True))
    return 0


COMMANDS = {"optimize": cmd_optimize, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "cost": cmd_cost, "perms": cmd_perms, "multijob": cmd_multijob}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        _check(args)
    except UsageError as e:
        print(f"cotopo: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:        # argparse usage errors and --help
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"cotopo: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"cotopo: {args.command} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
