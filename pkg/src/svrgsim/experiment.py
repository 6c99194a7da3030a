"""Experiment configuration, runners, and report emission.

Configs are flat `key = value` text (# comments allowed) so a run is
reproducible from a file that diffs cleanly.  Each (algorithm, seed)
pair produces one CSV of ledger checkpoints; the report path also
emits a gnuplot script (never executed here) and renders the same
curves to PNG files next to the CSVs.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import datasets
from .allocation import CapacityConfig, allocate, local_pass_plan, random_partition
from .cluster import (DasvrgConfig, MetricsLedger, accel_grad_run, build_cluster,
                      dasvrg_run, default_dasvrg_schedule, dsvrg_run)
from .engine import SvrgConfig, svrg_single_machine
from .errors import CapacityError, ConfigError
from .objective import (GAMMA_CLASSIC, GAMMA_CURVATURE, ErmObjective, LossKind,
                        SmoothnessInfo, estimate_constants)
from .streams import stream

DATASET_KINDS = ("synth_ridge", "synth_logistic", "libsvm", "hard")
ALGORITHMS = ("dsvrg", "dasvrg", "accel_grad", "svrg_oracle")
LAMBDA_RULES = ("N^-0.5", "N^-0.75", "N^-1", "explicit")
CSV_HEADER = "algo,seed,stage,rounds,vectors,runtime,gap"


@dataclass
class ExperimentConfig:
    # problem
    dataset: str = "synth_ridge"
    data_path: str = ""
    loss: str = "square"
    lambda_rule: str = "explicit"
    lam: float = 0.01
    label_rescale: bool = False
    gamma: float = 0.0          # 0 = curvature-exact preset for the loss
    classic_gamma: bool = False
    synth_points: int = 1000
    synth_dim: int = 20
    synth_kappa: float = 100.0
    synth_noise: float = 0.1
    rff_dim: int = 0
    rff_bandwidth: float = 1.0  # no principled default exists; set per dataset
    hard_k: int = 2
    hard_u: int = 0             # 0 = smallest u with negligible chain tail
    hard_kappa_prime: float = 4.0
    hard_blocks: int = 4
    hard_copies: int = 2
    hard_L: float = 1.0
    # cluster
    m: int = 5
    capacity: int = 0           # 0 = derive from n_tilde or the sample budget
    n_tilde: int = 0
    rj_equals_sj: bool = False
    # schedule
    algorithms: tuple = ("dsvrg",)
    eta: float = 0.0            # 0 = 1/(16L)
    T: int = 0                  # 0 = ceil(96 kappa)
    K: int = 0                  # 0 = canonical stage count for epsilon
    P: int = 0                  # 0 = guarantee-backed outer count
    sigma: float = -1.0         # <0 = L/n
    practical: bool = False
    epsilon: float = 1e-6
    max_rounds: int = 100000
    # execution
    seeds: tuple = (0,)
    checkpoint_stride: int = 1
    output_dir: str = "runs"
    figures: bool = True


_TUPLE_INT = ("seeds",)
_TUPLE_STR = ("algorithms",)
_KEY_ALIASES = {"lambda": "lam"}
_FIELD_TO_KEY = {"lam": "lambda"}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    lines = ["# svrgsim experiment configuration"]
    for f in dataclasses.fields(config):
        key = _FIELD_TO_KEY.get(f.name, f.name)
        lines.append(f"{key} = {_format_value(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        name = _KEY_ALIASES.get(key, key)
        if name not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[name] = _parse_value(name, val, defaults)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return dataclasses.replace(defaults, **values)


def _parse_value(name: str, val: str, defaults: ExperimentConfig):
    current = getattr(defaults, name)
    if name in _TUPLE_INT:
        return tuple(int(v) for v in val.split(",") if v.strip() != "")
    if name in _TUPLE_STR:
        return tuple(v.strip() for v in val.split(",") if v.strip() != "")
    if isinstance(current, bool):
        if val.lower() in ("true", "1", "yes"):
            return True
        if val.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{name} expects true/false, got {val!r}")
    if isinstance(current, int):
        return int(val)
    if isinstance(current, float):
        return float(val)
    return val


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def save_config(config: ExperimentConfig, path):
    with open(path, "w") as fh:
        fh.write(serialize_config(config))


def validate_config(config: ExperimentConfig):
    """Raise ConfigError naming every invalid field."""
    problems = []
    if config.dataset not in DATASET_KINDS:
        problems.append(f"dataset must be one of {DATASET_KINDS}")
    if config.loss not in [k.value for k in LossKind]:
        problems.append(f"loss must be one of {[k.value for k in LossKind]}")
    if config.lambda_rule not in LAMBDA_RULES:
        problems.append(f"lambda_rule must be one of {LAMBDA_RULES}")
    bad_algos = [a for a in config.algorithms if a not in ALGORITHMS]
    if bad_algos:
        problems.append(f"algorithms: unknown {bad_algos}; known {ALGORITHMS}")
    if not config.seeds:
        problems.append("seeds must be nonempty")
    if config.epsilon <= 0:
        problems.append("epsilon must be positive")
    if config.m < 1:
        problems.append("m must be at least 1")
    if config.checkpoint_stride < 1:
        problems.append("checkpoint_stride must be at least 1")
    if config.rff_dim and (config.rff_dim < 2 or config.rff_dim % 2):
        problems.append("rff_dim must be 0 or a positive even number")
    if config.rff_dim and config.rff_bandwidth <= 0:
        problems.append("rff_bandwidth must be positive when rff_dim is set")
    if config.dataset == "libsvm" and not config.data_path:
        problems.append("data_path is required for dataset = libsvm")
    if config.dataset == "hard" and config.hard_kappa_prime < 1:
        problems.append("hard_kappa_prime must be at least 1")
    if problems:
        raise ConfigError("; ".join(problems))


def lambda_from_rule(rule: str, explicit: float, N: int) -> float:
    if rule == "N^-0.5":
        return N ** -0.5
    if rule == "N^-0.75":
        return N ** -0.75
    if rule == "N^-1":
        return 1.0 / N
    if rule == "explicit":
        return explicit
    raise ConfigError(f"unknown lambda rule {rule!r}")


@dataclass
class Problem:
    family: object
    info: SmoothnessInfo
    x_star: np.ndarray
    f_star: float
    lam: float
    meta: dict = field(default_factory=dict)


def build_problem(config: ExperimentConfig, seed: int) -> Problem:
    """Instantiate the objective named by the config for one seed."""
    if config.dataset == "hard":
        return _build_hard_problem(config)
    rng = stream(seed, "data")
    if config.dataset == "synth_ridge":
        ds, lam, _ = datasets.synth_ridge(config.synth_points, config.synth_dim,
                                          config.synth_kappa, rng, noise=config.synth_noise)
        loss = LossKind.SQUARE
        if config.lambda_rule != "explicit":
            # rule overrides the generator's kappa-targeted lambda
            lam = lambda_from_rule(config.lambda_rule, config.lam, ds.n_points)
    elif config.dataset == "synth_logistic":
        ds = datasets.synth_logistic(config.synth_points, config.synth_dim, rng)
        loss = LossKind.LOGISTIC
        lam = lambda_from_rule(config.lambda_rule, config.lam, ds.n_points)
    else:
        ds = datasets.parse_libsvm(config.data_path)
        loss = LossKind(config.loss)
        if config.label_rescale:
            ds = datasets.rescale_labels_01(ds)
        if config.rff_dim:
            ds = datasets.rff_transform(ds, config.rff_dim, config.rff_bandwidth,
                                        stream(seed, "features"))
        lam = lambda_from_rule(config.lambda_rule, config.lam, ds.n_points)
    spec = ErmObjective(loss, ds.features, ds.labels, lam)
    gamma = config.gamma if config.gamma > 0 else (
        GAMMA_CLASSIC[loss] if config.classic_gamma else GAMMA_CURVATURE[loss])
    info = estimate_constants(spec, gamma)
    x_star, f_star = datasets.exact_optimum(spec)
    return Problem(family=spec, info=info, x_star=x_star, f_star=f_star, lam=lam,
                   meta={"N": spec.n_components, "d": spec.dim, "loss": loss.value,
                         "gamma": gamma})


def _build_hard_problem(config: ExperimentConfig) -> Problem:
    from . import lowerbound as lb

    u = config.hard_u or lb.default_u(config.hard_kappa_prime, config.hard_k)
    params = lb.HardParams(k=config.hard_k, u=u, kappa_prime=config.hard_kappa_prime,
                           n=config.hard_blocks, copies=config.hard_copies, L=config.hard_L)
    family = lb.build_hard_instance(params)
    x_star, f_star = lb.hard_instance_optimum(family)
    info = SmoothnessInfo(L=params.L, mu=params.mu)
    return Problem(family=family, info=info, x_star=x_star, f_star=f_star, lam=params.mu,
                   meta={"N": family.n_components, "d": family.dim, "loss": "hard-chain",
                         "k": params.k, "u": u, "kappa_prime": params.kappa_prime})


def resolve_schedules(config: ExperimentConfig, problem: Problem, gap0: float) -> dict:
    """Fill in every unset schedule knob from the guarantee-backed
    defaults for this problem."""
    info = problem.info
    eta = config.eta if config.eta > 0 else 1.0 / (16.0 * info.L)
    T = config.T if config.T > 0 else math.ceil(96.0 * info.kappa)
    if config.K > 0:
        K = config.K
    else:
        K = max(1, math.ceil(math.log(max(gap0 / config.epsilon, 1.0 + 1e-12)) / math.log(9.0 / 8.0)))
    out = {}
    if "dsvrg" in config.algorithms or "svrg_oracle" in config.algorithms:
        out["dsvrg"] = SvrgConfig(eta=eta, T=T, K=K, practical=config.practical)
    if "dasvrg" in config.algorithms:
        base = default_dasvrg_schedule(info.L, info.mu, _shard_size(problem, config), gap0,
                                       config.epsilon)
        out["dasvrg"] = DasvrgConfig(
            eta=config.eta if config.eta > 0 else base.eta,
            T=config.T if config.T > 0 else base.T,
            K=config.K if config.K > 0 else base.K,
            P=config.P if config.P > 0 else base.P,
            sigma=config.sigma if config.sigma >= 0 else base.sigma,
            practical=config.practical)
    return out


def _shard_size(problem: Problem, config: ExperimentConfig) -> int:
    return problem.family.n_components // config.m


def make_plan(config: ExperimentConfig, N: int, Q: int, seed: int):
    """Allocation for one run: the sampled-multiset scheme, or the
    R_j = S_j local-pass shortcut when configured."""
    if config.rj_equals_sj:
        perm, offsets = random_partition(N, config.m, stream(seed, "partition"))
        if N % config.m:
            raise ConfigError("rj_equals_sj needs m to divide N")
        return local_pass_plan(perm, offsets), None
    n = N // config.m
    if config.n_tilde > 0:
        n_tilde = config.n_tilde
    elif config.capacity > 0:
        n_tilde = config.capacity - n
    else:
        n_tilde = max(1, math.ceil(Q / config.m))
    cap = CapacityConfig(capacity=n + n_tilde, n=n)
    plan = allocate(N, config.m, Q, cap, stream(seed, "partition"), stream(seed, "sequence"))
    return plan, cap


def _oracle_ledger(problem, trace, T: int) -> MetricsLedger:
    """Checkpoint shell for the single-machine oracle: no communication,
    runtime counts the batch pass plus two evals per step."""
    ledger = MetricsLedger(m=1)
    N = problem.family.n_components
    for stage, x in enumerate(trace):
        ledger.runtime = stage * (N + 2 * T)
        ledger.checkpoint(stage, problem.family.full_value(x) - problem.f_star)
    return ledger


def run_one(config: ExperimentConfig, algo: str, seed: int, problem: Problem | None = None):
    """Run one (algorithm, seed) pair; returns (problem, ledger)."""
    if problem is None:
        problem = build_problem(config, seed)
    family, info = problem.family, problem.info
    gap0 = family.full_value(np.zeros(family.dim)) - problem.f_star
    schedules = resolve_schedules(config, problem, gap0)
    N = family.n_components
    if algo == "accel_grad":
        plan, cap = make_plan(config, N, 0, seed)
        cluster = build_cluster(plan, cap.capacity if cap else None)
        res = accel_grad_run(family, cluster, info, f_star=problem.f_star,
                             epsilon=config.epsilon, max_rounds=config.max_rounds)
        return problem, res.ledger
    if algo == "svrg_oracle":
        sched = schedules["dsvrg"].validate(info)
        trace = svrg_single_machine(family, np.zeros(family.dim), sched.eta, sched.T,
                                    sched.K, rng=stream(seed, "svrg"))
        return problem, _oracle_ledger(problem, trace, sched.T)
    if algo == "dsvrg":
        sched = schedules["dsvrg"]
        plan, cap = make_plan(config, N, sched.T * sched.K, seed)
        cluster = build_cluster(plan, cap.capacity if cap else None)
        res = dsvrg_run(family, cluster, sched, info, f_star=problem.f_star,
                        stop_gap=config.epsilon)
        return problem, res.ledger
    if algo == "dasvrg":
        sched = schedules["dasvrg"]
        plan, cap = make_plan(config, N, sched.T * sched.K * sched.P, seed)
        cluster = build_cluster(plan, cap.capacity if cap else None)
        res = dasvrg_run(family, cluster, sched, info, f_star=problem.f_star,
                         stop_gap=config.epsilon)
        return problem, res.ledger
    raise ConfigError(f"unknown algorithm {algo!r}")


def write_run_csv(path, algo: str, seed: int, ledger: MetricsLedger, meta: dict,
                  stride: int = 1):
    rows = ledger.checkpoints
    kept = [c for idx, c in enumerate(rows) if idx % stride == 0 or idx == len(rows) - 1]
    with open(path, "w") as fh:
        meta_s = " ".join(f"{k}={_format_value(v)}" for k, v in meta.items())
        fh.write(f"# {meta_s}\n")
        fh.write(CSV_HEADER + "\n")
        for c in kept:
            fh.write(f"{algo},{seed},{c.stage},{c.rounds},{c.vectors},{c.runtime},{c.gap!r}\n")


def write_plot_script(path, csv_names: list[str]):
    """gnuplot script drawing log10(gap) against rounds and runtime.
    Emitted for reproducibility, never executed by this package."""
    lines = [
        "# gnuplot script generated by svrgsim",
        "set datafile separator ','",
        "set logscale y",
        "set ylabel 'optimality gap'",
        "set terminal pngcairo size 900,600",
    ]
    for xcol, xlabel, out in ((4, "rounds", "gap_vs_rounds.png"),
                              (6, "parallel runtime", "gap_vs_runtime.png")):
        lines.append(f"set xlabel '{xlabel}'")
        lines.append(f"set output '{out}'")
        plots = [f"'{name}' skip 1 using {xcol}:7 with lines title '{name.removesuffix('.csv')}'"
                 for name in csv_names]
        lines.append("plot \\\n  " + ", \\\n  ".join(plots))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def render_figures(out_dir, runs: dict):
    """PNG renderings of the same two charts the gnuplot script draws."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for xattr, xlabel, fname in (("rounds", "rounds", "gap_vs_rounds.png"),
                                 ("runtime", "parallel runtime", "gap_vs_runtime.png")):
        fig, ax = plt.subplots(figsize=(8, 5))
        for (algo, seed), ledger in sorted(runs.items()):
            xs = [getattr(c, xattr) for c in ledger.checkpoints]
            ys = [c.gap for c in ledger.checkpoints]
            ax.semilogy(xs, ys, label=f"{algo} seed {seed}", alpha=0.8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("optimality gap")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, fname), dpi=120)
        plt.close(fig)


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute every (algorithm, seed) pair and emit the report files.

    Returns {"csv": [...], "plot_script": path, "figures": [...]} with
    all paths inside config.output_dir.
    """
    validate_config(config)
    os.makedirs(config.output_dir, exist_ok=True)
    csv_names = []
    runs = {}
    problems = {}
    for seed in config.seeds:
        problems[seed] = build_problem(config, seed)
        for algo in config.algorithms:
            problem, ledger = run_one(config, algo, seed, problem=problems[seed])
            runs[(algo, seed)] = ledger
            name = f"{algo}_seed{seed}.csv"
            meta = {"algo": algo, "seed": seed, "lambda": problem.lam,
                    "epsilon": config.epsilon, **problem.meta}
            write_run_csv(os.path.join(config.output_dir, name), algo, seed, ledger, meta,
                          stride=config.checkpoint_stride)
            csv_names.append(name)
    script = os.path.join(config.output_dir, "plot_script.gp")
    write_plot_script(script, csv_names)
    out = {"csv": [os.path.join(config.output_dir, n) for n in csv_names],
           "plot_script": script, "figures": []}
    if config.figures:
        render_figures(config.output_dir, runs)
        out["figures"] = [os.path.join(config.output_dir, f)
                          for f in ("gap_vs_rounds.png", "gap_vs_runtime.png")]
    return out
