"""Reusable experiment builders shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import (
    CoefficientFunctional,
    VectorField,
    extend_by_zero,
    history_segments,
    lift_constant_delay,
    lift_controlled,
    lift_discrete_time,
    lift_variable_delay,
    lift_vector_field,
    sin_field,
    tanh_field,
)
from .core import ControlledPath, SampledPath
from .solver import RFDEData, SolverConfig, solve_rfde, stability_experiment
from .stochastic import (
    DriverSpec,
    StackedDriver,
    delayed_lift,
    make_rng,
    simulate_driver,
    variable_delay_driver,
)

__all__ = [
    "COEFFICIENT_CLASSES",
    "Case",
    "driver_spec_for",
    "build_case",
    "random_controlled_path",
    "StabilityRow",
    "stability_sweep",
]

COEFFICIENT_CLASSES = ("vector_field", "controlled", "discrete_time", "constant_delay", "variable_delay")

_CASE_DELAYS = (0.25, 0.5)


def _eta(t: float) -> float:
    return 0.125 + 0.25 * t


@dataclass
class Case:
    rp: StackedDriver
    y: ControlledPath
    cf: CoefficientFunctional


def driver_spec_for(kind: str, seed: int, delays=(), dim: int = 1, step: float = 2.0**-7) -> DriverSpec:
    """Default driver of each kind used by the uniqueness matrix."""
    if kind == "brownian":
        return DriverSpec(kind, dim=dim, step=step, delays=delays, seed=seed)
    if kind == "compensated_poisson":
        return DriverSpec(kind, dim=dim, step=step, delays=delays, seed=seed, rate=6.0, jump_size=0.4)
    if kind == "engineered_jumps":
        rng = make_rng(seed)
        n = int(round(1.0 / step))
        idx = np.sort(rng.choice(np.arange(1, n + 1), size=4, replace=False))
        jumps = tuple((float(i * step), int(rng.integers(dim)), float(rng.normal(0, 0.5))) for i in idx)
        return DriverSpec(kind, dim=dim, step=step, delays=delays, seed=seed, jumps=jumps)
    if kind == "smooth":
        freqs = tuple(float(v) for v in make_rng(seed).integers(0, 3, size=dim))
        return DriverSpec(kind, dim=dim, step=step, delays=delays, seed=seed, frequencies=freqs)
    raise ValueError(f"unknown driver kind {kind!r}")


def _field(rng: np.random.Generator, m: int, k: int, d: int, kind: str) -> VectorField:
    amp = rng.uniform(-0.6, 0.6, size=(k, d))
    w = rng.uniform(-0.8, 0.8, size=(k, d, m))
    ph = rng.uniform(-1, 1, size=(k, d))
    return (sin_field if kind == "sin" else tanh_field)(amp, w, ph)


def build_case(cls: str, kind: str, seed: int, step: float = 2.0**-7, state_dim: int = 2) -> Case:
    """One randomized RFDE instance of a coefficient class over a driver kind."""
    rng = make_rng(10_000 + seed)
    convention = "geometric" if kind == "smooth" else "ito"
    k = state_dim
    y0 = rng.normal(0, 1, size=k)
    if cls == "variable_delay":
        z = simulate_driver(driver_spec_for(kind, seed, (), 1, step))
        rp = variable_delay_driver(z, _eta, step, convention)
    else:
        delays = _CASE_DELAYS if cls == "constant_delay" else ()
        z = simulate_driver(driver_spec_for(kind, seed, delays, 1, step))
        rp = delayed_lift(z, delays, step, convention)
    d = rp.dim
    y = ControlledPath.constant(rp.path, y0)
    if cls == "vector_field":
        cf = lift_vector_field(_field(rng, k, k, d, "tanh"))
    elif cls == "controlled":
        t = rp.times
        alpha = ControlledPath(rp.path, np.sin(3 * t)[:, None], np.zeros((len(t), 1, d)))
        cf = lift_controlled(_field(rng, k + 1, k, d, "sin"), alpha)
    elif cls == "discrete_time":
        cf = lift_discrete_time(_field(rng, 3 * k, k, d, "sin"), [0.25, 0.5], rp.grid)
    elif cls == "constant_delay":
        segs = history_segments(lambda s: y0 * (1 + s), _CASE_DELAYS, rp.path)
        cf = lift_constant_delay(_field(rng, 3 * k, k, d, "sin"), _CASE_DELAYS, segs, step)
    elif cls == "variable_delay":
        seg = ControlledPath.constant(rp.path, y0)
        cf = lift_variable_delay(_field(rng, 2 * k, k, d, "tanh"), _eta, seg, step, eps=0.125)
    else:
        raise ValueError(f"unknown coefficient class {cls!r}")
    return Case(rp, y, cf)


def random_controlled_path(driver: SampledPath, state_dim: int, rng: np.random.Generator) -> ControlledPath:
    n = len(driver)
    y = np.add.accumulate(rng.normal(0, 0.3, size=(n, state_dim)), axis=0)
    yp = rng.normal(0, 1, size=(n, state_dim, driver.dim))
    return ControlledPath(driver, y, yp)


# ----------------------------------------------------------------- stability sweep


@dataclass
class StabilityRow:
    seed: int
    perturbation: str
    scale: float
    input_distance: float
    output_distance: float
    ratio: float
    norm: float
    perturbed_norm: float
    within_bound: bool


def _delayed_sin_problem(z, delays, step, y0, amplitude):
    sd = delayed_lift(z, delays, step)
    base = sin_field(amplitude=[[amplitude]], weights=[1.0] * (len(delays) + 1))
    vf = extend_by_zero(base, sd.dim, 0)
    segs = history_segments(np.array([y0]), delays, sd.path)
    cf = lift_constant_delay(vf, delays, segs, step)
    y = ControlledPath.constant(sd.path, [y0])
    return RFDEData(sd, y, cf)


def stability_sweep(
    seed: int,
    scales=(1e-1, 1e-2, 1e-3, 1e-4),
    perturbations=("initial", "field", "driver"),
    step: float = 2.0**-8,
    delays=(0.25,),
    y0: float = 1.0,
    amplitude: float = 0.8,
    k_bound: float = 50.0,
    p: float = 2.5,
) -> list[StabilityRow]:
    """Perturb the sin-field delayed-Brownian equation and record both sides of the estimate.

    The field perturbation scales the amplitude by ``1 + eps``, so the
    difference functional is ``-eps F`` and its declared growth constant is
    ``eps C_F``.  The driver perturbation adds ``eps`` times an independent
    Brownian path.
    """
    cfg = SolverConfig(p=p)
    spec = DriverSpec("brownian", step=step, delays=tuple(delays), seed=seed)
    z = simulate_driver(spec)
    noise = simulate_driver(DriverSpec("brownian", step=step, delays=tuple(delays), seed=seed + 1_000_003))
    base = _delayed_sin_problem(z, delays, step, y0, amplitude)
    sol = solve_rfde(base.rp, base.y, base.cf, cfg).solution
    rows = []
    for kind in perturbations:
        for eps in scales:
            c_diff = 0.0
            if kind == "initial":
                other = _delayed_sin_problem(z, delays, step, y0 + eps, amplitude)
            elif kind == "field":
                other = _delayed_sin_problem(z, delays, step, y0, amplitude * (1 + eps))
                c_diff = eps * base.cf.growth_constant()
            elif kind == "driver":
                zt = SampledPath(z.grid, z.values + eps * noise.values)
                other = _delayed_sin_problem(zt, delays, step, y0, amplitude)
            else:
                raise ValueError(f"unknown perturbation {kind!r}")
            sol_b = solve_rfde(other.rp, other.y, other.cf, cfg).solution
            res = stability_experiment(
                base, other, p, k_bound, c_diff, cfg, solutions=(sol, sol_b)
            )
            rows.append(
                StabilityRow(
                    seed, kind, eps, res.input_distance, res.output_distance, res.ratio,
                    res.norms[0], res.norms[1], res.within_bound,
                )
            )
    return rows
