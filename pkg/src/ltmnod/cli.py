"""Command line interface.

Exit codes: 0 success, 1 validation error, 2 theorem sweep reported failures.
Every subcommand accepts ``--config file.json`` whose keys override flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import harness
from .graph import GraphError
from .ltm import LtmInstance, ltm_cascade
from .nod import NodInstance, NodOptions, integrate, nod_cascade, InputSchedule
from .relaxation import gamma_star, relax

log = logging.getLogger("ltmnod")


def _seed_list(text):
    if text is None or text.strip() == "":
        return []
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _dump(obj, path=None):
    obj = {"schema_version": harness.SCHEMA_VERSION, **obj}
    text = json.dumps(obj, indent=2)
    if path:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _apply_config(args):
    if not getattr(args, "config", None):
        return args
    for key, value in _load_json(args.config).items():
        setattr(args, key.replace("-", "_"), value)
    return args


def _nod_options(args):
    kw = {}
    for name, attr in [("step", "step"), ("t_max", "tmax"), ("stall_tol", "stall_tol"), ("sample_every", "sample_every"), ("eps_act", "eps_act")]:
        v = getattr(args, attr, None)
        if v is not None:
            kw[name] = float(v)
    return NodOptions(**kw)


def cmd_ltm_run(args):
    inst = LtmInstance.load(args.instance)
    seed = _seed_list(args.seed) if isinstance(args.seed, str) else list(args.seed or [])
    report = ltm_cascade(inst, seed)
    for w in report.warnings:
        log.warning(w)
    _dump(report.to_json_obj(), args.out)
    if args.steps_csv:
        steps = int(report.steps_or_final_time)
        with open(args.steps_csv, "w") as fh:
            fh.write("step,node,state\n")
            for s in range(steps + 1):
                for i in range(inst.n):
                    on = i in report.activation_time and report.activation_time[i] <= s
                    fh.write(f"{s},{i},{int(on)}\n")
    return 0


def _nod_instance(args):
    obj = _load_json(args.instance)
    if "mu" in obj:
        inst = NodInstance.from_json_obj(obj)
    else:
        if args.gamma is None or args.k is None:
            raise harness.ConfigError("an LTM instance needs --gamma and --k to be relaxed")
        inst, _ = relax(LtmInstance.from_json_obj(obj), float(args.gamma), float(args.k))
    if getattr(args, "schedule", None):
        inst = inst.with_schedule(InputSchedule.from_json_obj(inst.n, _load_json(args.schedule)))
    return inst


def cmd_nod_run(args):
    inst = _nod_instance(args)
    opts = _nod_options(args)
    seed = _seed_list(args.seed) if isinstance(args.seed, str) else list(args.seed or [])
    z0 = np.zeros(inst.n)
    z0[seed] = 1.0
    traj = integrate(inst, z0, opts)
    report = nod_cascade(inst, seed, opts)
    for w in report.warnings:
        log.warning(w)
    if args.out:
        traj.to_csv(args.out)
    _dump(report.to_json_obj(), args.report)
    return 0


def cmd_relax(args):
    ltm = LtmInstance.load(args.instance)
    inst, params = relax(ltm, float(args.gamma), float(args.k))
    obj = inst.to_json_obj()
    obj["validity"] = {
        "mu_positive": params.mu_positive,
        "k_ge_one": params.k_ge_one,
        "product_bound": params.product_bound,
        "neutral_stable_sufficient": params.neutral_stable_sufficient,
    }
    _dump(obj, args.out)
    return 0


def cmd_gamma_star(args):
    ltm = LtmInstance.load(args.instance)
    res = gamma_star(ltm, float(args.k), cap=int(args.cap))
    _dump(res.to_json_obj(), args.out)
    return 0


def _experiment_config(args, scenario, **extra):
    kw = {"scenario": scenario, "master_seed": args.master_seed, "output_dir": args.out_dir, **extra}
    if getattr(args, "instance", None):
        kw["instance"] = args.instance
    cfg_obj = kw
    if args.config:
        cfg_obj = {**kw, **_load_json(args.config)}
        cfg_obj.pop("schema_version", None)
    return harness.ExperimentConfig.from_json_obj(cfg_obj)


def cmd_compare(args):
    extra = {"ks": [float(args.k)]}
    if args.gamma:
        extra["gammas"] = _float_list(args.gamma)
    if args.seed:
        extra["seeds"] = [_seed_list(s) for s in args.seed]
    extra["random_seed_count"] = args.random_seeds
    cfg = _experiment_config(args, "compare", **extra)
    records = harness.run_compare(cfg)
    bad = [r for r in records if r.skipped is None and not r.containment]
    for r in records:
        status = "skipped" if r.skipped else ("equal" if r.equality else ("contained" if r.containment else "NOT contained"))
        print(f"seed={r.seed} gamma={r.gamma:.6g} k={r.k:.6g} ltm={len(r.ltm_set)} nod={len(r.nod_set)} {status}")
    return 2 if bad else 0


def cmd_sweep(args):
    scenario = {"thm1": "theorem1-sweep", "thm2": "theorem2-sweep"}[args.which]
    cfg = _experiment_config(args, scenario, trials=args.trials, workers=args.workers)
    if scenario == "theorem1-sweep":
        summary, _ = harness.run_theorem1_sweep(cfg)
        failed = summary["containment_failures"]
    else:
        summary, _ = harness.run_theorem2_sweep(cfg)
        failed = summary["equality_failures"]
    _dump({k: v for k, v in summary.items() if k != "per_instance"})
    return 2 if failed else 0


def cmd_experiment(args):
    cfg = _experiment_config(args, args.which if args.which != "bifurcation" else "bifurcation")
    if args.which == "bifurcation":
        rows = harness.run_bifurcation(cfg)
        if not cfg.output_dir:
            print("b,z,stability,saddle_node")
            for row in rows:
                print(",".join(map(str, row)))
    else:
        mode = "synchronized" if args.which == "subthreshold-sync" else "delayed"
        report, _ = harness.run_subthreshold(cfg, mode)
        _dump({k: report[k] for k in ("mode", "n", "cascade_size", "collective_cascade", "active_set", "converged", "final_time")})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ltmnod", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file whose keys override flags")

    ltm = sub.add_parser("ltm").add_subparsers(dest="sub", required=True)
    sp = ltm.add_parser("run", help="exact LTM cascade")
    common(sp)
    sp.add_argument("--instance", required=True)
    sp.add_argument("--seed", default="")
    sp.add_argument("--out")
    sp.add_argument("--steps-csv")
    sp.set_defaults(func=cmd_ltm_run)

    nod = sub.add_parser("nod").add_subparsers(dest="sub", required=True)
    sp = nod.add_parser("run", help="integrate the opinion dynamics from a seed set")
    common(sp)
    sp.add_argument("--instance", required=True)
    sp.add_argument("--seed", default="")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--k", type=float)
    sp.add_argument("--schedule")
    sp.add_argument("--step", type=float)
    sp.add_argument("--tmax", type=float)
    sp.add_argument("--stall-tol", type=float)
    sp.add_argument("--sample-every", type=float)
    sp.add_argument("--eps-act", type=float)
    sp.add_argument("--out", help="trajectory CSV")
    sp.add_argument("--report", help="cascade report JSON")
    sp.set_defaults(func=cmd_nod_run)

    sp = sub.add_parser("relax", help="build the relaxation of an LTM instance")
    common(sp)
    sp.add_argument("--instance", required=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--k", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_relax)

    sp = sub.add_parser("gamma-star", help="exact-recovery coupling bound")
    common(sp)
    sp.add_argument("--instance", required=True)
    sp.add_argument("--k", type=float, required=True)
    sp.add_argument("--cap", type=int, default=25)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gamma_star)

    def exp_common(sp):
        common(sp)
        sp.add_argument("--master-seed", type=int, default=0)
        sp.add_argument("--out-dir")

    sp = sub.add_parser("compare", help="LTM vs relaxed cascades over a gamma grid")
    exp_common(sp)
    sp.add_argument("--instance")
    sp.add_argument("--seed", action="append", help="comma-separated seed set; repeatable")
    sp.add_argument("--random-seeds", type=int, default=0)
    sp.add_argument("--gamma", help="comma-separated gamma grid")
    sp.add_argument("--k", type=float, default=1.1)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="theorem verification sweeps")
    exp_common(sp)
    sp.add_argument("which", choices=["thm1", "thm2"])
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("experiment", help="figure scenarios")
    exp_common(sp)
    sp.add_argument("which", choices=["bifurcation", "subthreshold-sync", "subthreshold-delayed"])
    sp.add_argument("--instance")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = _apply_config(args) if args.command in ("ltm", "nod", "relax", "gamma-star") else args
        return args.func(args)
    except (ValueError, GraphError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
