"""Acceptance criteria, each at its stated tolerance and runtime budget."""

import time

import numpy as np

from qnlchain import experiments as ex
from qnlchain.chain import (ChainConfig, cell_indices, difference, inner_product, integrate,
                            norm_l2_eps, project_zero_mean)
from qnlchain.energy_models import (ModelKind, RepresentativeGrid, energy, gradient, hessian,
                                    interfacial_energies, interpolate, local_qc_energy)
from qnlchain.linear_solver import consistency_error, sin_load, solve_linearized
from qnlchain.potentials import evaluate, lennard_jones
from qnlchain.stability import (curvatures, lambda_min, mu_eps, stability_coefficient,
                                stability_constants)

import oracles

LJ = lennard_jones()


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _random_state(rng, kind):
    N, s = int(rng.integers(8, 24)), int(rng.integers(2, 5))
    cfg = ChainConfig(N, int(rng.integers(2, N - s)), s, float(rng.uniform(0.95, 1.1)))
    grid = None
    while kind is ModelKind.LOCAL_QC and (grid is None or grid.n_segments < 2):
        # a single segment has one distinct representative atom and a constant energy
        grid = RepresentativeGrid.random(N, s, rng)
    v = rng.uniform(-0.03, 0.03, 2 * N)
    return cfg, grid, integrate(v - v.mean()).values


def _zero_mean(rng, N):
    return project_zero_mean(rng.standard_normal(2 * N)).values


def test_criterion_1_ghost_force(acceptance_report):
    with Timer() as t:
        results = {s: ex.run(ex.default_config("ghost-force", s=s)) for s in (2, 3, 4, 5)}
    qnl = max(r["max_force"] / max(1.0, abs(evaluate(LJ, s * r["F"], 1)))
              for s, res in results.items() for r in res.rows if r["model"] == "qnl")
    qce = min(r["max_force"] for res in results.values() for r in res.rows if r["model"] == "qce")
    failed = [a.name for res in results.values() for a in res.failures()]
    ok = not failed and qnl <= 1e-12 and qce >= 1e-3 and t.elapsed < 10
    acceptance_report(1, ok, f"QNL max scaled force {qnl:.1e} <= 1e-12, QCE min {qce:.2e} >= 1e-3, "
                             f"N-spread checks {'ok' if not failed else failed}, {t.elapsed:.1f}s < 10s")
    assert ok


def test_criterion_2_derivatives(acceptance_report):
    rng = np.random.default_rng(2024)
    grad_worst = hess_worst = 0.0
    with Timer() as t:
        for kind in ModelKind:
            for _ in range(20):
                cfg, grid, u = _random_state(rng, kind)
                w = _zero_mean(rng, cfg.N)
                # measure the step in strain units: max |Dw| = 1
                w = w / np.abs(difference(w).values).max()
                g = gradient(kind, cfg, LJ, u, grid)
                exact = inner_product(g, w)
                h = 1e-4
                e = [energy(kind, cfg, LJ, u + k * h * w, grid) for k in (-2, -1, 1, 2)]
                fd = (e[0] - 8 * e[1] + 8 * e[2] - e[3]) / (12 * h)
                scale = max(abs(exact), 1e-3 * norm_l2_eps(g) * norm_l2_eps(w))
                grad_worst = max(grad_worst, abs(fd - exact) / scale)

                # quadratic form of the Hessian at y_F
                H = hessian(kind, cfg, LJ, grid)
                h = 1e-3
                e = [energy(kind, cfg, LJ, k * h * w, grid) for k in (-2, -1, 0, 1, 2)]
                fd2 = (-e[0] + 16 * e[1] - 30 * e[2] + 16 * e[3] - e[4]) / (12 * h * h)
                q = H.value(w)
                hess_worst = max(hess_worst, abs(fd2 - q) / abs(q))
    ok = grad_worst <= 1e-6 and hess_worst <= 1e-5 and t.elapsed < 30
    acceptance_report(2, ok, f"gradient rel err {grad_worst:.1e} <= 1e-6, Hessian form rel err "
                             f"{hess_worst:.1e} <= 1e-5, 4 models x 20 states, {t.elapsed:.1f}s < 30s")
    assert ok


def test_criterion_3_decomposition(acceptance_report):
    rng = np.random.default_rng(3)
    worst = 0.0
    with Timer() as t:
        for trial in range(50):
            s = 2 + trial % 3
            N = int(rng.integers(2 * s, 48))
            cfg = ChainConfig(N, 2, s, float(rng.uniform(0.9, 1.1)))
            grid = RepresentativeGrid.random(N, s, rng)
            X = grid.nodes()
            Y = cfg.F * X + rng.uniform(-0.2, 0.2, X.size) * cfg.eps * s * cfg.F
            Y[-1] = Y[0] + 2 * cfg.F
            u = interpolate(cfg, grid, Y).values
            E_a = oracles.atomistic_energy(oracles.lj, N, s, cfg.F, u)
            E_qc = local_qc_energy(cfg, LJ, grid, Y) + interfacial_energies(cfg, LJ, grid, Y).sum()
            worst = max(worst, abs(E_a - E_qc) / abs(E_a))
    ok = worst <= 1e-12 and t.elapsed < 10
    acceptance_report(3, ok, f"max relative identity error {worst:.1e} <= 1e-12 over 50 grids, "
                             f"s in 2..4, {t.elapsed:.1f}s < 10s")
    assert ok


def test_criterion_4_mu_eps(acceptance_report):
    with Timer() as t:
        errs = [abs(oracles.mu_eps_dense(N) - mu_eps(N)) / mu_eps(N) for N in (4, 8, 16, 32)]
    ok = max(errs) <= 1e-10 and t.elapsed < 5
    acceptance_report(4, ok, f"max relative error {max(errs):.1e} <= 1e-10, N in 4..32, {t.elapsed:.2f}s < 5s")
    assert ok


def test_criterion_5_qnl_sharp_stability(acceptance_report):
    Fs = np.linspace(0.95, 1.25, 20)
    worst = 0.0
    spans = []
    with Timer() as t:
        for s in (2, 3):
            A = [stability_coefficient(curvatures(LJ, F, s)) for F in Fs]
            spans.append(min(A) < 0 < max(A))
            for N in (32, 64):
                for F, a in zip(Fs, A):
                    worst = max(worst, abs(lambda_min("qnl", ChainConfig(N, N // 4, s, F), LJ) - a))
    ok = all(spans) and worst <= 1e-8 and t.elapsed < 60
    acceptance_report(5, ok, f"max |lambda_min - A_F| {worst:.1e} <= 1e-8, F grid spans F* "
                             f"({all(spans)}), {t.elapsed:.1f}s < 60s")
    assert ok


def test_criterion_6_atomistic_bracket(acceptance_report):
    inside = True
    margin = np.inf
    s2_dev = 0.0
    count = 0
    with Timer() as t:
        for s in (2, 3, 4):
            for N in (8, 16, 32, 64):
                for F in np.linspace(0.95, 1.25, 10):
                    rep = stability_constants(ChainConfig(N, 2 if N == 8 else N // 4, s, F), LJ)
                    upper, lower = rep.B_bracket
                    count += 1
                    if s == 2:
                        s2_dev = max(s2_dev, abs(rep.B_effective - curvatures(LJ, F, 2)[1]))
                    else:
                        inside &= lower <= rep.B_effective <= upper
                        margin = min(margin, rep.B_effective - lower, upper - rep.B_effective)
    ok = inside and s2_dev <= 1e-8 and t.elapsed < 60
    acceptance_report(6, ok, f"B_effective inside bracket at {count} (F, N, s) points (s >= 3 margin "
                             f"{margin:.2e}), s=2 |B - phi''(2F)| {s2_dev:.1e} <= 1e-8, {t.elapsed:.1f}s < 60s")
    assert ok


def test_criterion_7_critical_gap(acceptance_report):
    with Timer() as t:
        result = ex.run(ex.default_config("critical-gap", s=2, N=(16, 32, 64, 128)))
    slope = result.metadata.get("slope", float("nan"))
    ok = result.passed and 1.8 <= slope <= 2.2 and t.elapsed < 120
    acceptance_report(7, ok, f"gap slope {slope:.4f} in [1.8, 2.2], {t.elapsed:.1f}s < 120s")
    assert ok


def test_criterion_8_convergence(acceptance_report):
    slopes = {}
    with Timer() as t:
        for s in (2, 3):
            result = ex.run(ex.default_config("convergence", s=s, N=(32, 64, 128, 256, 512, 1024)))
            slopes[s] = (result.metadata["slope"], result.passed)
    ok = all(1.4 <= v <= 1.6 and p for v, p in slopes.values()) and t.elapsed < 120
    acceptance_report(8, ok, ", ".join(f"s={s} slope {v:.4f}" for s, (v, _) in slopes.items())
                      + f" in [1.4, 1.6], {t.elapsed:.1f}s < 120s")
    assert ok


def test_criterion_9_consistency_error(acceptance_report):
    rng = np.random.default_rng(9)
    vanish = 0.0
    worst = 0.0
    with Timer() as t:
        for s in (2, 3):
            N, K = 64, 16
            cfg = ChainConfig(N, K, s)
            ell = cell_indices(N)
            core = np.abs(ell) <= K - s
            Du = np.where(core, 1.0, -core.sum() / (~core).sum())
            u_const = project_zero_mean(np.cumsum(Du) / N).values
            bump = np.where(core, np.cos(np.pi * ell / (2 * K)) ** 2, 0.0)
            u_local = project_zero_mean(bump).values
            assert np.all(consistency_error(cfg, LJ, np.zeros(2 * N)).values == 0)
            for u in (u_const, u_local):
                # size of the individual terms phi'' k Du / eps that T sums
                scale = np.abs(curvatures(LJ, 1.0, s)).sum() * s * np.abs(difference(u).values).max() * N
                vanish = max(vanish, np.max(np.abs(consistency_error(cfg, LJ, u).values)) / scale)
            for N in (32, 256, 2048):
                cfg = ChainConfig(N, N // 4, s)
                load = sin_load(N)
                ua = solve_linearized("atomistic", cfg, LJ, load).u.values
                uq = solve_linearized("qnl", cfg, LJ, load).u.values
                T = consistency_error(cfg, LJ, ua)
                form = hessian("qnl", cfg, LJ)
                Ae = form.euclidean_apply(ua - uq)
                for _ in range(10):
                    w = _zero_mean(rng, N)
                    gap = abs(w @ Ae - inner_product(T, w))
                    worst = max(worst, gap / (norm_l2_eps(load.f) * norm_l2_eps(w)))
    ok = vanish <= 1e-13 and worst <= 1e-9 and t.elapsed < 10
    acceptance_report(9, ok, f"representer max {vanish:.1e} (relative to its term size) on constant-strain and atomistic-supported "
                             f"inputs, error equation {worst:.1e} <= 1e-9 * ||f|| ||w||, {t.elapsed:.1f}s < 10s")
    assert ok
