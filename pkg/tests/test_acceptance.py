"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line, collected in the terminal summary.
"""

import time

import numpy as np
import yaml

from rfde.cli import main
from rfde.coefficients import lift_vector_field, linear_field, sin_field
from rfde.core import ControlledPath, Grid, SampledPath, chen_reconstruct, geometric_lift, ito_lift
from rfde.experiments import COEFFICIENT_CLASSES, build_case, driver_spec_for, random_controlled_path, stability_sweep
from rfde.integrate import rough_integral
from rfde.solver import discrete_residual, forward_recursion, solve_rfde
from rfde.stochastic import (
    DriverSpec,
    bracket,
    delayed_lift,
    make_rng,
    rde_vs_sde_compare,
    simulate_driver,
)
from rfde.variation import brute_force_pvar, pvar

from conftest import record_acceptance

DRIVER_KINDS = ("smooth", "brownian", "compensated_poisson", "engineered_jumps")


def report(number: int, ok: bool, detail: str) -> None:
    record_acceptance(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


# ----------------------------------------------------------------- 1 Chen


def test_chen_relation_on_random_lifts():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    max_points = 0
    for i in range(100):
        kind = DRIVER_KINDS[i % 4]
        n_cells = int(2 ** rng.integers(6, 13))
        delays = (0.25,) if i % 3 else ()
        dim = int(rng.integers(1, 3))
        spec = driver_spec_for(kind, seed=i, delays=delays, dim=dim, step=1.0 / n_cells)
        rp = delayed_lift(simulate_driver(spec), delays, spec.step, "geometric" if kind == "smooth" else "ito")
        n = len(rp)
        max_points = max(max_points, n)
        x = rp.values
        triples = np.sort(rng.integers(0, n, size=(1000, 3)), axis=1)
        residual, level2 = 0.0, 0.0
        for s, u, t in triples:
            whole = chen_reconstruct(rp, s, t)
            parts = chen_reconstruct(rp, s, u) + chen_reconstruct(rp, u, t) + np.outer(x[u] - x[s], x[t] - x[u])
            residual = max(residual, float(np.abs(whole - parts).max()))
            level2 = max(level2, float(np.abs(whole).max()))
        scale = 1.0 + float(np.abs(x).max()) ** 2 + level2
        worst = max(worst, residual / scale)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed <= 60.0
    report(1, ok, f"Chen residual/scale {worst:.2e} <= 1e-10 over 100 lifts (<= {max_points} points), {elapsed:.1f}s <= 60s")
    assert ok


# ----------------------------------------------------------------- 2 p-variation


def test_pvar_matches_brute_force_exactly():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    mismatches = 0
    for i in range(500):
        n = int(rng.integers(1, 15))
        d = int(rng.integers(1, 3))
        p = (1.0, 1.5, 2.0, 2.5, 3.0)[i % 5]
        values = rng.normal(size=(n, d)) * rng.choice([1e-3, 1.0, 1e3])
        if pvar(values, p) != brute_force_pvar(values, p):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed <= 60.0
    report(2, ok, f"pvar == brute force on 500 paths: {mismatches} mismatches, {elapsed:.1f}s <= 60s")
    assert ok


# ----------------------------------------------------------------- 3 integral identities


def test_rough_integral_identities():
    linear_err = 0.0
    for n_cells in (1, 7, 64, 333, 4096):
        t = Grid.uniform(1.0, n_cells).times
        x = SampledPath(Grid(t), t)
        v = ControlledPath(x, t[:, None, None], np.ones((len(t), 1, 1, 1)))
        value, _ = rough_integral(v, geometric_lift(x))
        linear_err = max(linear_err, abs(value[0] - 0.5))
    sbp_err = 0.0
    for seed in range(100):
        w = simulate_driver(DriverSpec("brownian", step=2.0**-10, seed=seed))
        wv = w.values[:, 0]
        v = ControlledPath(w, wv[:, None, None], np.ones((len(wv), 1, 1, 1)))
        value, _ = rough_integral(v, ito_lift(w))
        sbp_err = max(sbp_err, abs(value[0] - 0.5 * (wv[-1] ** 2 - np.sum(np.diff(wv) ** 2))))
    ok = linear_err <= 1e-12 and sbp_err <= 1e-12
    report(3, ok, f"linear integral error {linear_err:.2e}, summation by parts error {sbp_err:.2e} (both <= 1e-12)")
    assert ok


# ----------------------------------------------------------------- 4 uniqueness


def test_solver_matches_forward_recursion():
    start = time.perf_counter()
    worst_gap, worst_res = 0.0, 0.0
    for cls in COEFFICIENT_CLASSES:
        for kind in DRIVER_KINDS:
            for seed in range(10):
                case = build_case(cls, kind, seed)
                sol = solve_rfde(case.rp, case.y, case.cf).solution
                fwd = forward_recursion(case.rp, case.y, case.cf)
                scale = 1.0 + float(np.abs(fwd.y).max())
                worst_gap = max(worst_gap, float(np.abs(sol.y - fwd.y).max()) / scale)
                worst_res = max(worst_res, discrete_residual(sol, case.y, case.cf, case.rp) / scale)
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-9 and worst_res <= 1e-10 and elapsed <= 300.0
    report(4, ok, f"gap/scale {worst_gap:.2e} <= 1e-9, residual/scale {worst_res:.2e} <= 1e-10 on 200 cases, {elapsed:.1f}s <= 300s")
    assert ok


# ----------------------------------------------------------------- 5 ODE oracle


def test_sin_field_matches_closed_form():
    y0 = 1.0
    errors = []
    for n in (1250, 2500, 5000, 10_000):
        t = Grid.uniform(1.0, n).times
        rp = geometric_lift(SampledPath(Grid(t), t))
        sol = solve_rfde(rp, ControlledPath.constant(rp.path, [y0]), lift_vector_field(sin_field())).solution
        exact = 2.0 * np.arctan(np.tan(y0 / 2.0) * np.exp(t))
        errors.append(float(np.abs(sol.y[:, 0] - exact).max()))
    ratios = [b / a for a, b in zip(errors, errors[1:])]
    ok = errors[-1] <= 1e-3 and all(r <= 0.75 for r in ratios)
    report(5, ok, f"error at N=1e4 {errors[-1]:.2e} <= 1e-3, halving ratios {', '.join(f'{r:.3f}' for r in ratios)} <= 0.75")
    assert ok


# ----------------------------------------------------------------- 6 RDE vs SDE


def test_rde_coincides_with_euler_maruyama():
    step = 2.0**-7
    worst_gap, worst_window = 0.0, 0.0
    for kind in ("brownian", "compensated_poisson"):
        for n_delays in (1, 2):
            delays = (0.25, 0.5)[:n_delays]
            m = n_delays + 1
            fields = (
                sin_field([[0.7]], [0.5] * m, [[0.2]]),
                # dY = Y(t - r_1) dZ: on [0, r_1] the solution is 1 + Z
                linear_field(np.eye(1, m, 1)[None]),
            )
            for seed in range(20):
                spec = driver_spec_for(kind, seed, delays, 1, step)
                z = simulate_driver(spec)
                for j, vf in enumerate(fields):
                    res = rde_vs_sde_compare(z, vf, np.array([1.0]), delays, step)
                    worst_gap = max(worst_gap, res["sup_norm_gap"] / res["scale"])
                    if j == 1:
                        k = int(round(delays[0] / step))
                        zw = z.values[spec.lead : spec.lead + k + 1, 0]
                        rde = res["rde"].y[: k + 1, 0]
                        worst_window = max(worst_window, float(np.abs(rde - (1.0 + zw)).max()))
    ok = worst_gap <= 1e-10 and worst_window <= 1e-12
    report(6, ok, f"RDE vs Euler-Maruyama gap/scale {worst_gap:.2e} <= 1e-10, first lag window error {worst_window:.2e} <= 1e-12")
    assert ok


# ----------------------------------------------------------------- 7 bracket refinement


def test_delayed_cross_bracket_vanishes_and_jump_bracket_is_one():
    delay, h = 0.25, 2.0**-12
    strides = (16, 4, 1)
    sums = np.zeros(len(strides))
    n_seeds = 200
    for seed in range(n_seeds):
        z = simulate_driver(DriverSpec("brownian", step=h, delays=(delay,), seed=seed))
        sd = delayed_lift(z, (delay,), h)
        base = SampledPath(sd.grid, sd.values[:, 0])
        lagged = SampledPath(sd.grid, sd.values[:, 1])
        partial = bracket(base, lagged, strides).partial_sums
        sums += [abs(partial[s]) for s in strides]
    means = sums / n_seeds
    monotone = bool(np.all(np.diff(means) < 0))

    spec = DriverSpec("engineered_jumps", step=0.1, delays=(0.5,), jumps=((0.3, 0, 1.0), (0.8, 0, 1.0)))
    sd = delayed_lift(simulate_driver(spec), (0.5,), 0.1)
    jump = bracket(SampledPath(sd.grid, sd.values[:, 0]), SampledPath(sd.grid, sd.values[:, 1])).path.values[-1, 0]
    ok = monotone and jump == 1.0
    mean_text = ", ".join(f"{v:.4f}" for v in means)
    report(7, ok, f"mean |partial sum| at h=2^-8,2^-10,2^-12: {mean_text} (decreasing), jump bracket {float(jump):g} == 1")
    assert ok


# ----------------------------------------------------------------- 8 stability


def test_stability_ratios_are_scale_stable():
    start = time.perf_counter()
    scales = (1e-1, 1e-2, 1e-3, 1e-4)
    spread, all_within = 0.0, True
    for seed in range(4):
        rows = stability_sweep(seed, scales=scales, k_bound=50.0)
        all_within &= all(r.within_bound for r in rows)
        for kind in ("initial", "field", "driver"):
            ratios = [r.ratio for r in rows if r.perturbation == kind]
            spread = max(spread, max(ratios) / min(ratios))
    elapsed = time.perf_counter() - start
    ok = spread <= 10.0 and all_within and elapsed <= 600.0
    report(8, ok, f"ratio max/min {spread:.3f} <= 10, all within K=50: {all_within}, {elapsed:.1f}s <= 600s")
    assert ok


# ----------------------------------------------------------------- 9 non-anticipativity


def test_coefficients_are_non_anticipative():
    failures = 0
    for i in range(200):
        cls = COEFFICIENT_CLASSES[i % 5]
        case = build_case(cls, DRIVER_KINDS[(i // 5) % 4], i, step=2.0**-5)
        rng = make_rng(50_000 + i)
        k = case.y.y.shape[1]
        y = random_controlled_path(case.rp.path, k, rng)
        other = random_controlled_path(case.rp.path, k, rng)
        cut = int(rng.integers(0, len(y)))
        mixed = ControlledPath(
            y.driver,
            np.concatenate([y.y[: cut + 1], other.y[cut + 1 :]]),
            np.concatenate([y.gubinelli[: cut + 1], other.gubinelli[cut + 1 :]]),
        )
        a, b = case.cf.evaluate(y), case.cf.evaluate(mixed)
        same = np.array_equal(a.y[: cut + 1], b.y[: cut + 1]) and np.array_equal(a.gubinelli[: cut + 1], b.gubinelli[: cut + 1])
        failures += not same
    ok = failures == 0
    report(9, ok, f"output up to the cut unchanged by the future on 200 cases: {failures} failures")
    assert ok


# ----------------------------------------------------------------- 10 reproducibility


CLI_RUNS = [
    ("lift", {"driver": {"kind": "compensated_poisson", "rate": 5.0, "step": 2.0**-7, "delays": [0.25]}}, ["driver.csv", "lift_diagnostics.csv"]),
    (
        "solve",
        {
            "driver": {"kind": "brownian", "step": 2.0**-7, "delays": [0.25]},
            "coefficient": {
                "class": "constant_delay",
                "field": {"name": "sin", "amplitude": [[0.8]], "weights": [1.0, 1.0]},
                "extend_by_zero": True,
                "history": [1.0],
            },
            "initial": {"value": [1.0]},
        },
        ["solution.csv", "norms.csv"],
    ),
    (
        "compare",
        {
            "driver": {"kind": "brownian", "step": 2.0**-7, "delays": [0.25]},
            "coefficient": {"field": {"name": "sin", "amplitude": [[0.8]], "weights": [1.0, 1.0]}},
            "initial": {"value": [1.0]},
            "compare": {"seeds": 4, "refinements": [2]},
        },
        ["compare.csv"],
    ),
    ("stability", {"stability": {"seeds": 3, "scales": [0.1, 0.001], "step": 2.0**-7}}, ["stability.csv"]),
]


def test_cli_outputs_are_reproducible(tmp_path):
    differing = []
    for command, doc, outputs in CLI_RUNS:
        cfg = tmp_path / f"{command}.yaml"
        cfg.write_text(yaml.safe_dump(doc))
        seen = []
        for run, threads in enumerate((1, 4, 1, 4, 1, 4)):
            out = tmp_path / f"{command}-{run}"
            code = main(["--seed", "11", "--threads", str(threads), "--out-dir", str(out), command, str(cfg)])
            assert code == 0
            seen.append(tuple((out / name).read_bytes() for name in outputs))
        if len(set(seen)) != 1:
            differing.append(command)
    ok = not differing
    report(10, ok, f"CSV outputs byte-identical over 3 runs x threads {{1, 4}}: differing commands {differing or 'none'}")
    assert ok
