"""Acceptance gate: one test per criterion, each timed against its budget.

Run ``pytest tests/test_acceptance.py`` (or this file directly); the terminal
summary lists a PASS/FAIL line per criterion.
"""

import filecmp
import math
import time

import numpy as np
import pytest

from gradslide import (
    ENTROPY,
    EUCLIDEAN,
    FeasibleSet,
    ProxSubproblem,
    ags_run,
    check_smoothness,
    estimate_lmax,
    gen_portfolio,
    gen_quadratic,
    gen_tv,
    mags_dynamic_smoothing,
    mags_run,
    nest_run,
    plan_mags,
    prox_optimality_residual,
    psi,
    quadratic,
    schedule_cor1,
    schedule_cor2,
    solve_prox,
    solve_spp,
    validate_schedule,
)
from gradslide.runner import main, race
from reference import dense_matrix, kl, qp_simplex, simplex_qp, tv_reference, zoom_grid_min

RATIOS = (1.0, 4.0, 2.0**6, 2.0**10, 2.0**15)


class Timer:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.2f}s, budget {self.limit}s"


@pytest.fixture(scope="module")
def simplex_qps():
    """Ten seeded simplex QPs with reference optima (computed once, untimed)."""
    out = []
    for seed in range(10):
        Qf, c, Qh, L, M = simplex_qp(seed)
        x_star, phi_star, ok = qp_simplex(Qf + Qh, c)
        assert ok, "reference QP solve failed its KKT check"
        out.append((Qf, c, Qh, L, M, x_star, phi_star))
    return out


def _rate_gaps(qps, make_schedule, const, N=200):
    worst = -np.inf
    for Qf, c, Qh, L, M, x_star, phi_star in qps:
        n = c.size
        f = quadratic(Qf, c, lipschitz=L)
        h = quadratic(Qh, lipschitz=M)
        x0 = np.full(n, 1.0 / n)
        _, trace = ags_run(f, h, ENTROPY, FeasibleSet.simplex(n), x0, N, make_schedule(L, M),
                           trace_objective=True)
        k = np.arange(1, N + 1)
        bound = const * L * kl(x0, x_star) / (ENTROPY.modulus * k * (k + 1))
        worst = max(worst, float(np.max(trace.objectives() - phi_star - bound)))
    return worst


@pytest.mark.criterion(1, "schedule validity")
def test_schedule_validity():
    with Timer(1.0):
        for r in RATIOS:
            for make in (schedule_cor1, schedule_cor2):
                bad = validate_schedule(make(1.0, r), 1.0, r, 1.0, 200, rtol=1e-9)
                assert bad == [], f"{make.__name__} at M/L={r}: {bad[:3]}"


@pytest.mark.criterion(2, "rate certificate, schedule_cor2")
def test_rate_cor2(simplex_qps):
    with Timer(30.0):
        assert _rate_gaps(simplex_qps, schedule_cor2, 9.0) <= 1e-8


@pytest.mark.criterion(3, "rate certificate, schedule_cor1")
def test_rate_cor1(simplex_qps):
    with Timer(30.0):
        assert _rate_gaps(simplex_qps, schedule_cor1, 30.0) <= 1e-8


@pytest.mark.criterion(4, "oracle-count exactness")
def test_oracle_counts(simplex_qps):
    with Timer(5.0):
        for Qf, c, Qh, L, M, *_ in simplex_qps:
            n = c.size
            f, h = quadratic(Qf, c, lipschitz=L), quadratic(Qh, lipschitz=M)
            x0 = np.full(n, 1.0 / n)
            fs = FeasibleSet.simplex(n)
            for N in (1, 7, 50):
                _, tr = ags_run(f, h, ENTROPY, fs, x0, N, schedule_cor1(L, M))
                assert tr.counters.n_grad_f == N
                assert tr.counters.n_grad_h == N * math.ceil(math.sqrt(M / L) - 1e-12)
                s2 = schedule_cor2(L, M)
                _, tr = ags_run(f, h, ENTROPY, fs, x0, N, s2)
                assert tr.counters.n_grad_f == N
                assert tr.counters.n_grad_h == s2.T(1) + (N - 1) * s2.T(2)
                _, tr = nest_run(f, h, ENTROPY, fs, x0, N)
                assert (tr.counters.n_grad_f, tr.counters.n_grad_h) == (N, N)


@pytest.mark.criterion(5, "multistage halving")
def test_mags_halving():
    with Timer(10.0):
        qp = gen_quadratic(10, L=4.0, M=400.0, mu=0.5, seed=3)
        f, h = qp.f_oracle(), qp.h_oracle()
        Q = qp.Qf + qp.Qh
        x_star = np.linalg.solve(Q, -qp.c)
        phi_star = qp.objective(x_star)
        v0 = np.zeros(10)
        delta0 = qp.objective(v0) - phi_star
        plan = plan_mags(qp.L, qp.mu, 1.0, delta0, delta0 / 64.0)
        assert plan.S == 6
        _, trace = mags_run(f, h, EUCLIDEAN, None, v0, plan)
        for s, v in enumerate(trace.meta["stage_points"]):
            assert qp.objective(v) - phi_star <= delta0 * 2.0**-s, f"stage {s}"


@pytest.mark.criterion(6, "smoothing sandwich")
def test_sandwich():
    with Timer(10.0):
        rng = np.random.default_rng(6)
        for seed, (r, c) in enumerate(((4, 4), (8, 8), (16, 16))):
            tv = gen_tv(r, c, eta=0.7, seed=seed)
            sp = tv.saddle()
            for rho in (1e-3, 0.1, 2.0):
                sm = sp.smoothed(rho)
                X = np.concatenate([rng.uniform(0, 1, (50, tv.n)),
                                    rng.standard_normal((50, tv.n))])
                for x in X:
                    gap = psi(sp, x) - sm.psi_rho(x)
                    assert 0.0 <= gap <= rho * sp.Omega + 1e-9


@pytest.mark.criterion(7, "smoothed constant and ||D||^2 <= 8")
def test_smoothed_constant():
    with Timer(10.0):
        for seed, (r, c) in enumerate(((4, 4), (8, 8), (16, 16))):
            tv = gen_tv(r, c, eta=1.3, seed=seed)
            sp = tv.saddle()
            for rho in (1e-2, 0.5):
                sm = sp.smoothed(rho)
                rep = check_smoothness(sm.oracle(), FeasibleSet.whole_space(tv.n), samples=100,
                                       rng_seed=seed, fd_probes=0)
                assert rep.max_violation_upper <= 1e-7
                assert rep.max_violation_lower <= 1e-7
            D = tv.D
            assert estimate_lmax(lambda x: D.adjoint(D.apply(x)), tv.n) <= 8.0 + 1e-9


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@pytest.mark.criterion(8, "complexity slopes of smoothed AGS")
def test_spp_slopes():
    with Timer(120.0):
        tv = gen_tv(8, 8, eta=1.0, seed=0)
        sp = tv.saddle()
        eps = np.array([1e-1, 3e-2, 1e-2, 3e-3])
        nf, nk = [], []
        for e in eps:
            _, tr = solve_spp(sp, tv.x0(), e, EUCLIDEAN, None, radius_sq=tv.n / 2.0)
            assert tr.meta["regime"] == "sliding"
            nf.append(tr.counters.n_grad_f)
            nk.append(tr.counters.n_apply_K)
        assert 0.35 <= _slope(1 / eps, nf) <= 0.65
        assert 0.85 <= _slope(1 / eps, nk) <= 1.15


@pytest.fixture(scope="module")
def strongly_convex_tv():
    tv = gen_tv(4, 4, eta=1.0, seed=3, mu=1.0)
    x_ref = tv_reference(tv.A, tv.b, dense_matrix(tv.D.apply, tv.n), tv.eta, tv.mu)
    return tv, tv.objective(x_ref)


@pytest.mark.criterion(9, "dynamic smoothing")
def test_dynamic_smoothing(strongly_convex_tv):
    tv, psi_star = strongly_convex_tv
    sp = tv.saddle()
    with Timer(120.0):
        x0 = tv.x0()
        delta0 = psi(sp, x0) - psi_star
        counts = []
        for eps in (1e-1, 1e-2, 1e-3, 1e-4):
            v, tr = mags_dynamic_smoothing(sp, x0, delta0, eps)
            S = tr.meta["S"]
            assert 2.0**S * (psi(sp, v) - psi_star) <= 15.0 * delta0
            counts.append(tr.counters.n_grad_f)
        ratios = np.array(counts[1:]) / np.array(counts[:-1])
        assert np.all(ratios <= 1.8), ratios


@pytest.mark.criterion(10, "race trend")
def test_race_trend():
    with Timer(60.0):
        ratios = []
        for m in (16, 64, 256):
            inst = gen_portfolio(200, m, 2.0**10, seed=0)
            ratios.append(race(inst, ("nest", "ags-cor2")).ratio)
        assert ratios[0] >= 1.0
        assert ratios[1] <= ratios[0] and ratios[2] <= ratios[1], ratios


def _random_subproblem(rng, fset, geometry):
    n = fset.dim
    scale = 10.0 ** rng.uniform(-1, 1)
    c1, c2 = fset.sample(rng, 2)
    if geometry.kind == "entropy":
        # pull the anchors into the relative interior (convex mix stays feasible)
        mid = fset.interior_point()
        c1 = 0.9 * c1 + 0.1 * mid
        c2 = 0.9 * c2 + 0.1 * mid
    w2 = rng.uniform(0, 2) if rng.uniform() < 0.7 else 0.0
    return ProxSubproblem(scale * rng.standard_normal(n), c1, rng.uniform(0.1, 3.0),
                          c2, w2, geometry, fset)


@pytest.mark.criterion(11, "prox-solver correctness")
def test_prox_correctness():
    with Timer(20.0):
        rng = np.random.default_rng(11)
        n = 6
        b = rng.uniform(0, 5, n)
        sets = [
            (FeasibleSet.whole_space(n), EUCLIDEAN),
            (FeasibleSet.box(-0.5, 0.5, n), EUCLIDEAN),
            (FeasibleSet.simplex(n), EUCLIDEAN),
            (FeasibleSet.simplex_halfspace(b, 0.8 * b.max()), EUCLIDEAN),
            (FeasibleSet.grouped_balls(3), EUCLIDEAN),
            (FeasibleSet.simplex(n), ENTROPY),
            (FeasibleSet.simplex_halfspace(b, 0.8 * b.max()), ENTROPY),
        ]
        for fset, geom in sets:
            for _ in range(100):
                sub = _random_subproblem(rng, fset, geom)
                u = solve_prox(sub)
                assert fset.contains(u)
                assert prox_optimality_residual(sub, u, samples=32) <= 1e-10

        for dim in (2, 3):
            for trial in range(4):
                lin = rng.standard_normal(dim)
                b1, b2 = rng.uniform(0.5, 2.0), rng.uniform(0, 1.0)
                half = None
                fset = FeasibleSet.simplex(dim)
                if trial % 2:
                    bb = rng.uniform(0, 3, dim)
                    half = (bb, 0.5 * (bb.mean() + bb.max()))
                    fset = FeasibleSet.simplex_halfspace(*half)
                mid = fset.interior_point()
                x, w = 0.8 * fset.sample(rng, 2) + 0.2 * mid
                u = solve_prox(ProxSubproblem(lin, x, b1, w, b2, ENTROPY, fset))
                F = lambda v: lin @ v + b1 * kl(x, v) + b2 * kl(w, v)
                u_grid, _ = zoom_grid_min(F, dim, half)
                assert np.max(np.abs(u - u_grid)) <= 1e-6


def _cli_twice(tmp_path, name, argv):
    dirs = []
    for rep in ("a", "b"):
        out = tmp_path / f"{name}-{rep}"
        assert main([*argv, "--out", str(out)]) == 0
        dirs.append(out)
    files = sorted(p.name for p in dirs[0].iterdir() if p.suffix in (".csv", ".json")
                   and p.name != "timing.json")
    assert files and files == sorted(p.name for p in dirs[1].iterdir()
                                     if p.suffix in (".csv", ".json") and p.name != "timing.json")
    match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
    assert not mismatch and not errors, (mismatch, errors)
    return dirs[0]


@pytest.mark.criterion(12, "determinism of CLI artifacts")
def test_determinism(tmp_path):
    with Timer(10.0):
        port = _cli_twice(tmp_path, "gp", ["gen-portfolio", "--n", "40", "--m", "8",
                                            "--ratio", "64", "--seed", "5"])
        tv = _cli_twice(tmp_path, "gt", ["gen-tv", "--rows", "4", "--cols", "4", "--seed", "2",
                                         "--mu", "0.5"])
        inst_p = str(port / "instance.json")
        inst_t = str(tv / "instance.json")
        _cli_twice(tmp_path, "ss", ["solve-smooth", "--instance", inst_p, "--N", "30",
                                    "--trace-objective", "true"])
        _cli_twice(tmp_path, "sq", ["solve-smooth", "--kind", "quadratic", "--n", "12",
                                    "--solver", "nest", "--N", "25"])
        _cli_twice(tmp_path, "sp", ["solve-spp", "--instance", inst_t, "--eps", "0.1"])
        _cli_twice(tmp_path, "sm", ["solve-mags", "--n", "8", "--mu", "0.2", "--eps", "1e-4"])
        _cli_twice(tmp_path, "sd", ["solve-dyn", "--instance", inst_t, "--eps", "0.05"])
        _cli_twice(tmp_path, "ra", ["race", "--instance", inst_p, "--budget", "4000"])


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
