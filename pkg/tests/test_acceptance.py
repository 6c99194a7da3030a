"""Acceptance criteria, one test per criterion.

Each test prints one pass/fail line (run with -s to see them on
success); every tolerance is pinned here.  The distributed round
comparison (criterion 6) takes a couple of minutes; the rest run in
seconds.
"""

import math

import numpy as np
from scipy import stats

from conftest import logistic_spec, ridge_problem, theory_plan
from oracles import iid_uniform_law, log_log_slope, sequence_law
from svrgsim import (DasvrgConfig, SvrgConfig, accel_grad_run, alpha_update,
                     beta_from_alphas, build_cluster, dasvrg_run, derive_sequence, dsvrg_run,
                     estimate_constants, local_pass_plan, random_partition, stream,
                     svrg_single_machine)
from svrgsim import lowerbound as lb
from svrgsim.datasets import exact_optimum
from svrgsim.objective import ErmObjective, LossKind


def _report(tag, ok, detail):
    print(f"[{tag}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{tag}: {detail}"


def test_c1_stage_contraction():
    """Per-stage gap ratio at eta = 1/(16L), T = 96*kappa stays under
    8/9 + 0.02 averaged over 100 seeds (ridge, N=2000, d=20, kappa=100)."""
    spec, info, _, f_star = ridge_problem(2000, 20, 100.0, seed=0)
    eta = 1.0 / (16.0 * info.L)
    T = math.ceil(96.0 * info.kappa)
    ratios = []
    for seed in range(100):
        trace = svrg_single_machine(spec, np.zeros(20), eta, T, 2, rng=stream(seed, "svrg"))
        gaps = [spec.full_value(x) - f_star for x in trace]
        ratios.extend([gaps[1] / gaps[0], gaps[2] / gaps[1]])
    mean = float(np.mean(ratios))
    _report("C1", mean <= 8.0 / 9.0 + 0.02,
            f"mean stage ratio {mean:.4f} <= {8.0 / 9.0 + 0.02:.4f}")


def test_c2_distributed_matches_oracle():
    """Shared sample stream: distributed stages and the single-machine
    oracle agree coordinate-wise within 1e-12 on 5 configs x 5 seeds."""
    configs = [
        (60, 3, 20, 3, "square", 0.10, 25),
        (100, 5, 50, 2, "logistic", 0.05, 30),
        (40, 4, 10, 4, "smooth_hinge", 0.20, 15),
        (200, 10, 100, 2, "square", 0.02, 40),
        (120, 6, 60, 2, "logistic", 0.03, 45),
    ]
    worst = 0.0
    for idx, (N, m, T, K, loss, lam, n_tilde) in enumerate(configs):
        if loss == "square":
            spec, info, _, _ = ridge_problem(N, 5, 1.0 + 2.0 / lam, seed=idx)
            spec = ErmObjective(LossKind.SQUARE, spec.features, spec.labels, lam)
        else:
            spec = logistic_spec(N, 5, lam, seed=idx)
            if loss == "smooth_hinge":
                spec = ErmObjective(LossKind.SMOOTH_HINGE, spec.features, spec.labels, lam)
        info = estimate_constants(spec)
        cfg = SvrgConfig(eta=1.0 / (16.0 * info.L), T=T, K=K)
        for seed in range(5):
            plan, cap = theory_plan(N, m, T * K, n_tilde, seed=100 * idx + seed)
            res = dsvrg_run(spec, build_cluster(plan, cap.capacity), cfg, info,
                            collect_trace=True)
            oracle = svrg_single_machine(spec, np.zeros(5), cfg.eta, T, K,
                                         indices=plan.sequence)
            for a, b in zip(res.trace, oracle):
                worst = max(worst, float(np.max(np.abs(a - b))))
    _report("C2", worst <= 1e-12, f"worst coordinate deviation {worst:.2e} <= 1e-12")


def test_c3_allocation_law_exact_and_marginal():
    """Sampling-tree law equals i.i.d. uniform exactly for N <= 3,
    Q <= 3 (rational arithmetic); chi-squared marginals pass at
    alpha = 0.001 for N=1000, Q=100 over 1e6 draws."""
    for N in (1, 2, 3):
        for Q in (1, 2, 3):
            assert sequence_law(N, Q) == iid_uniform_law(N, Q), (N, Q)
    N, Q, seeds = 1000, 100, 10_000
    watched = {0: [], 1: [], 49: [], 99: []}
    for seed in range(seeds):
        perm = stream(seed, "partition").permutation(N)
        r = derive_sequence(perm, Q, stream(seed, "sequence"))
        for p in watched:
            watched[p].append(r[p])
    pvals = {}
    for p, vals in watched.items():
        counts = np.bincount(np.array(vals), minlength=N)
        pvals[p + 1] = float(stats.chisquare(counts).pvalue)
    ok = all(pv >= 1e-3 for pv in pvals.values())
    _report("C3", ok, f"exact law matches for N<=3,Q<=3; marginal chi2 p-values {pvals}")


def test_c4_extra_communication_bound():
    """Mean separately-shipped functions stays below 2*Q^2/N over 1000
    seeds for (N,Q) in {(1000,100), (10000,300)}."""
    details = []
    ok = True
    for N, Q, m, n_tilde in ((1000, 100, 10, 10), (10000, 300, 20, 15)):
        extras = []
        for seed in range(1000):
            plan, _ = theory_plan(N, m, Q, n_tilde, seed=seed)
            assert plan.extra_transfers <= Q
            extras.append(plan.extra_transfers)
        mean = float(np.mean(extras))
        bound = 2.0 * Q * Q / N
        ok &= mean <= bound
        details.append(f"(N={N},Q={Q}): mean {mean:.2f} <= {bound:.0f}")
    _report("C4", ok, "; ".join(details))


def test_c5_constant_rounds_regime():
    """Large-step preset eta = 1/(16 n^0.25 L), T = n on a kappa <= 2
    instance: contraction <= 2/n^0.25 + 0.05 and rounds to 1e-6 within
    twice the scheduled stage count."""
    n_loc, delta, m = 4096, 0.25, 20
    N = n_loc * m
    spec, info, _, f_star = ridge_problem(N, 8, 2.0, seed=1)
    eta = 1.0 / (16.0 * n_loc ** delta * info.L)
    T = n_loc
    ratios = []
    for seed in range(20):
        trace = svrg_single_machine(spec, np.zeros(8), eta, T, 2, rng=stream(seed, "svrg"))
        gaps = [spec.full_value(x) - f_star for x in trace]
        ratios.extend([gaps[1] / gaps[0], gaps[2] / gaps[1]])
    mean = float(np.mean(ratios))
    limit = 2.0 / n_loc ** delta + 0.05
    gap0 = spec.full_value(np.zeros(8)) - f_star
    K = math.ceil(math.log(gap0 / 1e-6) / math.log(n_loc ** delta / 2.0))
    rounds = []
    for seed in range(3):
        plan, cap = theory_plan(N, m, T * K, n_loc, seed=seed)
        res = dsvrg_run(spec, build_cluster(plan, cap.capacity),
                        SvrgConfig(eta=eta, T=T, K=K), info, f_star=f_star, stop_gap=1e-6)
        rounds.append(res.ledger.rounds_to_gap(1e-6))
    ok = mean <= limit and all(r is not None and r <= 2 * K for r in rounds)
    _report("C5", ok, f"contraction {mean:.4f} <= {limit:.4f}; rounds {rounds} <= 2K={2 * K}")


def _run_round_comparison(kappa_over_n, seeds, n_loc=20, d=10, n_tilde=350, eps=1e-6):
    """Measured rounds-to-eps for the two distributed solvers on a
    fresh kappa-exact ridge instance per seed.

    The guarantee-backed inner stage count for the accelerated solver
    is astronomically conservative (its constant exceeds 1e4), so the
    round comparison runs the practical single-stage inner loop, which
    is also the configuration the large-scale experiments use; sigma,
    eta and T keep their guarantee-backed values.
    """
    kappa = kappa_over_n * n_loc
    T = math.ceil(96.0 * kappa)
    K_max = 8
    m = math.ceil(T * K_max / n_tilde)
    N = m * n_loc
    rounds_d, rounds_a = [], []
    for seed in seeds:
        spec, info, _, f_star = ridge_problem(N, d, kappa, seed=seed)
        plan, cap = theory_plan(N, m, T * K_max, n_tilde, seed=seed)
        res = dsvrg_run(spec, build_cluster(plan, cap.capacity),
                        SvrgConfig(eta=1.0 / (16.0 * info.L), T=T, K=K_max), info,
                        f_star=f_star, stop_gap=eps)
        rounds_d.append(res.ledger.rounds_to_gap(eps))
        sigma = info.L / n_loc
        kappa_sigma = (info.L + sigma) / (info.mu + sigma)
        Ta = math.ceil(96.0 * kappa_sigma)
        P = min(200, (n_tilde * m) // Ta)
        plan, cap = theory_plan(N, m, Ta * P, n_tilde, seed=seed)
        cfg = DasvrgConfig(eta=1.0 / (16.0 * info.L), T=Ta, K=1, P=P, sigma=sigma)
        res = dasvrg_run(spec, build_cluster(plan, cap.capacity), cfg, info,
                         f_star=f_star, stop_gap=eps)
        rounds_a.append(res.ledger.rounds_to_gap(eps))
    assert all(r is not None for r in rounds_d + rounds_a)
    return rounds_d, rounds_a


def test_c6_accelerated_round_advantage():
    """At kappa/n = 300 the accelerated solver needs less than half the
    rounds of the plain one (20 seeds); across kappa/n in
    {10,30,100,300} the log-log slopes split at 0.65 / 0.85."""
    ratios = (10, 30, 100, 300)
    mean_d, mean_a = {}, {}
    for r in ratios:
        seeds = range(20) if r == 300 else range(5)
        rd, ra = _run_round_comparison(r, seeds)
        mean_d[r], mean_a[r] = float(np.mean(rd)), float(np.mean(ra))
    advantage = mean_a[300] / mean_d[300]
    slope_d = log_log_slope(ratios, [mean_d[r] for r in ratios])
    slope_a = log_log_slope(ratios, [mean_a[r] for r in ratios])
    ok = advantage < 0.5 and slope_d >= 0.85 and slope_a <= 0.65
    _report("C6", ok,
            f"round ratio {advantage:.3f} < 0.5; slopes plain {slope_d:.2f} >= 0.85, "
            f"accelerated {slope_a:.2f} <= 0.65; rounds plain {mean_d}, accel {mean_a}")


def test_c7_extrapolation_fixed_point():
    """alpha stays at sqrt(q) to 1e-14 over 1000 outer steps; beta
    stays at (1 - sqrt(q)) / (1 + sqrt(q))."""
    worst_a, worst_b = 0.0, 0.0
    for q in (1.0 / 101.0, 0.25, 0.5, 0.9):
        rq = math.sqrt(q)
        beta_target = (1.0 - rq) / (1.0 + rq)
        a = rq
        for _ in range(1000):
            a_next = alpha_update(a, q)
            worst_a = max(worst_a, abs(a_next - rq))
            worst_b = max(worst_b, abs(beta_from_alphas(a, a_next) - beta_target))
            a = a_next
    ok = worst_a <= 1e-14 and worst_b <= 1e-14
    _report("C7", ok, f"alpha drift {worst_a:.2e}, beta drift {worst_b:.2e} (<= 1e-14)")


def test_c8_chain_structure():
    """Chain matrices: sum identity exact, spectral norm <= 4 + 1e-9,
    strict-subset Hessian blocks <= k over 100 draws, and the
    closed-form minimizer is stationary to the stated tolerance."""
    rng = stream(8, "init")
    for k, u, kp in ((1, 6, 4.0), (2, 50, 9.0), (3, 20, 64.0), (4, 30, 25.0)):
        p = lb.HardParams(k=k, u=u, kappa_prime=kp, n=1, copies=1)
        total = sum(lb.build_sigma(s, p) for s in range(1, k + 1))
        assert np.array_equal(total, lb.sigma_sum_closed_form(p))
        for s in range(1, k + 1):
            assert np.linalg.eigvalsh(lb.build_sigma(s, p))[-1] <= 4.0 + 1e-9
    p = lb.HardParams(k=4, u=30, kappa_prime=25.0, n=1, copies=1)
    for _ in range(100):
        size = int(rng.integers(0, p.k))
        subset = sorted(rng.choice(np.arange(1, p.k + 1), size=size, replace=False).tolist())
        coeffs = rng.normal(size=size)
        assert lb.block_structure(subset, coeffs, p) <= p.k
    residuals = []
    for k, u, kp in ((2, 50, 4.0), (2, 64, 36.0), (3, 64, 100.0)):
        p = lb.HardParams(k=k, u=u, kappa_prime=kp, n=1, copies=1)
        h, w = lb.pbar_minimizer(p)
        res = float(np.linalg.norm(lb.pbar_grad(w, p)))
        bound = max(1e-8, 10.0 * h ** p.b * np.linalg.norm(w) * p.mu_prime)
        assert res <= bound
        residuals.append(res)
    _report("C8", True,
            f"sum identity exact, spectra <= 4, blocks <= k, residuals {max(residuals):.1e}")


def _confined_probe(algo: str):
    if algo == "accel_grad":
        p = lb.HardParams(k=2, u=64, kappa_prime=16.0, n=2, copies=10)
        fam = lb.build_hard_instance(p)
        _, f_star = lb.hard_instance_optimum(fam)
        plan = lb.adversarial_partition(fam, 8)
        probe = lb.ConfinementProbe(fam, f_star, p.b)
        from svrgsim import SmoothnessInfo

        accel_grad_run(fam, build_cluster(plan), SmoothnessInfo(L=p.L, mu=p.mu),
                       f_star=f_star, max_rounds=50, probe=probe)
    else:
        p = lb.HardParams(k=2, u=64, kappa_prime=16.0, n=4, copies=25)
        fam = lb.build_hard_instance(p)
        _, f_star = lb.hard_instance_optimum(fam)
        m = 50
        plan = lb.adversarial_partition(fam, m)
        probe = lb.ConfinementProbe(fam, f_star, p.b)
        shard = fam.n_components // m
        from svrgsim import SmoothnessInfo

        dsvrg_run(fam, build_cluster(plan),
                  SvrgConfig(eta=1.0 / (16.0 * p.L), T=2 * shard, K=25),
                  SmoothnessInfo(L=p.L, mu=p.mu), f_star=f_star, probe=probe)
    return p, probe


def test_c9_reachable_dimension_confinement():
    """On adversarially partitioned chain instances, both instrumented
    solvers extend coordinate support by at most k per round over
    50-round traces, and the measured gap never drops below the
    (mu' ||w*||^2 / 4) h^(2Hk) bound."""
    details = []
    ok = True
    for algo in ("accel_grad", "dsvrg"):
        p, probe = _confined_probe(algo)
        rounds, support, gap = probe.by_round()
        growth = np.diff(np.concatenate([[0], support]))
        bounds = np.array([lb.confinement_gap_bound(p, int(r)) for r in rounds])
        ok &= rounds[-1] >= 50 and int(np.max(growth)) <= p.k and bool(np.all(gap >= bounds))
        details.append(f"{algo}: {int(rounds[-1])} rounds, max growth {int(np.max(growth))} "
                       f"<= k={p.k}, gap >= bound")
    _report("C9", ok, "; ".join(details))


def test_c10_practical_preset_beats_accelerated_gradient():
    """50k-point logistic instance, lambda = N^(-3/4), practical preset
    (eta = 1/L, T = 1e4, local-pass sampling): both stochastic solvers
    sit strictly below the accelerated-gradient baseline at every
    shared round count past round 5, in at least 18 of 20 seeds."""
    N, d, m, T = 50_000, 20, 10, 10_000
    lam = N ** -0.75
    K = N // T
    wins_d = wins_a = 0
    seeds = range(20)
    for seed in seeds:
        spec = logistic_spec(N, d, lam, seed=seed)
        info = estimate_constants(spec)
        _, f_star = exact_optimum(spec)
        perm, offs = random_partition(N, m, stream(seed, "partition"))
        eta = 1.0 / info.L
        run_d = dsvrg_run(spec, build_cluster(local_pass_plan(perm, offs)),
                          SvrgConfig(eta=eta, T=T, K=K, practical=True), f_star=f_star)
        sigma = info.L / (N // m)
        run_a = dasvrg_run(spec, build_cluster(local_pass_plan(perm, offs)),
                           DasvrgConfig(eta=eta, T=T, K=1, P=K, sigma=sigma, practical=True),
                           info, f_star=f_star)
        run_g = accel_grad_run(spec, build_cluster(local_pass_plan(perm, offs)), info,
                               f_star=f_star, max_rounds=16)
        agd_gap = {c.rounds: c.gap for c in run_g.ledger.checkpoints}
        def beats(run):
            points = [(c.rounds, c.gap) for c in run.ledger.checkpoints if c.rounds > 5]
            assert points, "no checkpoints beyond round 5"
            return all(gap < agd_gap[r] for r, gap in points if r in agd_gap)
        wins_d += beats(run_d)
        wins_a += beats(run_a)
    ok = wins_d >= 18 and wins_a >= 18
    _report("C10", ok, f"wins over the gradient baseline: plain {wins_d}/20, "
                       f"accelerated {wins_a}/20 (need >= 18)")
