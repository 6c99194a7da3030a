"""Command-line front end.

Verbs:
  allocate          write a data-allocation plan for (N, m, Q, C)
  synth             generate a synthetic dataset file
  run               execute experiments from a config file (+ overrides)
  lowerbound-probe  trace support growth and gap bounds on a hard instance

Exit codes: 0 success, 1 configuration error, 2 runtime contract
violation (capacity / sample budget), 3 I/O or dataset-format failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import datasets, experiment, lowerbound
from .allocation import CapacityConfig, allocate
from .cluster import accel_grad_run, build_cluster, dsvrg_run
from .engine import SvrgConfig
from .errors import ConfigError, ContractViolation, DatasetFormatError
from .objective import SmoothnessInfo
from .streams import stream


def _add_allocate(sub):
    p = sub.add_parser("allocate", help="write a data-allocation plan")
    p.add_argument("--points", type=int, required=True, help="number of functions N")
    p.add_argument("--machines", type=int, required=True)
    p.add_argument("--samples", type=int, required=True, help="sequence length Q")
    p.add_argument("--capacity", type=int, required=True, help="per-machine capacity C")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic dataset file")
    p.add_argument("--kind", choices=("ridge", "logistic"), default="ridge")
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--kappa", type=float, default=100.0, help="ridge condition target")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rff-dim", type=int, default=0)
    p.add_argument("--rff-bandwidth", type=float, default=1.0)
    p.add_argument("--output", required=True)


def _add_run(sub):
    p = sub.add_parser("run", help="run experiments from a config file")
    p.add_argument("--config", help="flat key = value config file")
    for f in dataclasses.fields(experiment.ExperimentConfig):
        key = experiment._FIELD_TO_KEY.get(f.name, f.name)
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{f.name}", default=None,
                       metavar="V", help=f"override config key {key}")


def _add_probe(sub):
    p = sub.add_parser("lowerbound-probe", help="instrumented run on a hard instance")
    p.add_argument("--algo", choices=("dsvrg", "accel_grad"), default="dsvrg")
    p.add_argument("--chain-functions", type=int, default=2, help="k")
    p.add_argument("--repeats", type=int, default=0, help="u (0 = auto)")
    p.add_argument("--kappa-prime", type=float, default=16.0)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--copies", type=int, default=25)
    p.add_argument("--machines", type=int, default=0, help="0 = one shard per k copies")
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--steps-per-stage", type=int, default=0, help="0 = two shards per stage")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true")


def _cmd_allocate(args) -> int:
    n = args.points // args.machines
    cap = CapacityConfig(capacity=args.capacity, n=n)
    plan = allocate(args.points, args.machines, args.samples, cap,
                    stream(args.seed, "partition"), stream(args.seed, "sequence"))
    plan.save(args.output)
    print(f"wrote {args.output}: Q={plan.Q}, extra_transfers={plan.extra_transfers}, "
          f"reuse_mismatches={plan.reuse_mismatches}, bound Q^2/N={plan.Q ** 2 / plan.N:.3f}")
    return 0


def _cmd_synth(args) -> int:
    rng = stream(args.seed, "data")
    if args.kind == "ridge":
        ds, lam, _ = datasets.synth_ridge(args.points, args.dim, args.kappa, rng)
        print(f"ridge instance: N={ds.n_points} d={ds.dim} lambda={lam!r}")
    else:
        ds = datasets.synth_logistic(args.points, args.dim, rng)
        print(f"logistic instance: N={ds.n_points} d={ds.dim}")
    if args.rff_dim:
        ds = datasets.rff_transform(ds, args.rff_dim, args.rff_bandwidth,
                                    stream(args.seed, "features"))
        print(f"applied random Fourier features: d={ds.dim}")
    datasets.write_libsvm(ds, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_run(args) -> int:
    config = experiment.load_config(args.config) if args.config else experiment.ExperimentConfig()
    overrides = {}
    defaults = experiment.ExperimentConfig()
    for f in dataclasses.fields(experiment.ExperimentConfig):
        raw = getattr(args, f"cfg_{f.name}", None)
        if raw is None:
            continue
        overrides[f.name] = experiment._parse_value(f.name, raw, defaults)
    config = dataclasses.replace(config, **overrides)
    out = experiment.run_experiment(config)
    for path in out["csv"]:
        print(f"wrote {path}")
    print(f"wrote {out['plot_script']}")
    for path in out["figures"]:
        print(f"wrote {path}")
    return 0


def _cmd_probe(args) -> int:
    k = args.chain_functions
    u = args.repeats or lowerbound.default_u(args.kappa_prime, k,
                                             floor=max(1, (args.rounds * k + k) // k))
    params = lowerbound.HardParams(k=k, u=u, kappa_prime=args.kappa_prime,
                                   n=args.blocks, copies=args.copies)
    family = lowerbound.build_hard_instance(params)
    x_star, f_star = lowerbound.hard_instance_optimum(family)
    m = args.machines or params.copies * params.k
    plan = lowerbound.adversarial_partition(family, m)
    cluster = build_cluster(plan)
    probe = lowerbound.ConfinementProbe(family, f_star, params.b)
    info = SmoothnessInfo(L=params.L, mu=params.mu)
    shard = family.n_components // m
    if args.algo == "accel_grad":
        accel_grad_run(family, cluster, info, f_star=f_star, max_rounds=args.rounds,
                       probe=probe)
    else:
        T = args.steps_per_stage or 2 * shard
        stages = max(1, (args.rounds * shard) // max(T, 1))
        cfg = SvrgConfig(eta=1.0 / (16.0 * params.L), T=T, K=stages)
        dsvrg_run(family, cluster, cfg, info, f_star=f_star, probe=probe)
    rounds, support, gap = probe.by_round()
    os.makedirs(args.output, exist_ok=True)
    csv_path = os.path.join(args.output, f"probe_{args.algo}.csv")
    with open(csv_path, "w") as fh:
        fh.write(f"# algo={args.algo} k={k} u={u} kappa_prime={args.kappa_prime!r} "
                 f"blocks={args.blocks} copies={args.copies} m={m}\n")
        fh.write("round,support,support_budget,gap,gap_lower_bound\n")
        for r, s, g in zip(rounds, support, gap):
            budget = lowerbound.reachable_dim(int(r), k)
            bound = lowerbound.confinement_gap_bound(params, int(r))
            fh.write(f"{r},{s},{budget},{float(g)!r},{float(bound)!r}\n")
    print(f"wrote {csv_path}")
    if not args.no_figures:
        _probe_figures(args.output, args.algo, rounds, support, gap, params)
    return 0


def _probe_figures(out_dir, algo, rounds, support, gap, params):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    ax1.plot(rounds, support, marker=".", label="max nonzero index")
    ax1.plot(rounds, [lowerbound.reachable_dim(int(r), params.k) for r in rounds],
             linestyle="--", label="k per round budget")
    ax1.set_xlabel("round")
    ax1.set_ylabel("block-local support")
    ax1.legend(fontsize=8)
    bounds = [lowerbound.confinement_gap_bound(params, int(r)) for r in rounds]
    ax2.semilogy(rounds, np.maximum(gap, 1e-300), marker=".", label="measured gap")
    ax2.semilogy(rounds, bounds, linestyle="--", label="confinement bound")
    ax2.set_xlabel("round")
    ax2.set_ylabel("optimality gap")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, f"probe_{algo}.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    print(f"wrote {path}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="svrgsim",
                                     description="simulated-cluster variance-reduced solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_allocate(sub)
    _add_synth(sub)
    _add_run(sub)
    _add_probe(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "allocate":
            return _cmd_allocate(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_probe(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 2
    except (OSError, DatasetFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
