"""Experiment configuration documents (YAML) and builders for the CLI.

Schema (all sections optional unless a subcommand needs them)::

    driver:
      kind: brownian | compensated_poisson | engineered_jumps | smooth
      dim: 1
      horizon: 1.0
      step: 0.00390625
      delays: [0.25]
      covariance: [[1.0]]        # brownian
      rate: 5.0                  # compensated_poisson
      jump_size: 0.5             # compensated_poisson
      jumps: [[0.3, 0, 1.0]]     # engineered_jumps: (time, component, size)
      frequencies: [0.0]         # smooth
      lift: ito | geometric      # default: geometric for smooth, ito otherwise
    coefficient:
      class: vector_field | controlled | discrete_time | constant_delay | variable_delay
      field: {name: sin, amplitude: [[0.8]], weights: [1.0, 1.0]}
      extend_by_zero: true       # field acts on the undelayed block only
      times: [0.5]               # discrete_time
      history: [1.0]             # constant_delay / variable_delay initial segment
      alpha: time | driver       # controlled
      eta: {offset: 0.125, slope: 0.25, eps: 0.125}   # variable_delay
    initial: {value: [1.0]}
    solver: {gamma: 1.0, delta: null, max_picard_iters: 200, picard_tol: 1.0e-13,
             contraction_guard: 0.5, residual_tol: 1.0e-10}
    compare: {seeds: 4, refinements: [2, 4]}
    stability: {seeds: 2, scales: [0.1, 0.01], perturbations: [initial, field, driver],
                step: 0.00390625, delays: [0.25], k_bound: 50.0}
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .coefficients import (
    CoefficientFunctional,
    extend_by_zero,
    history_segments,
    lift_constant_delay,
    lift_controlled,
    lift_discrete_time,
    lift_variable_delay,
    lift_vector_field,
    make_field,
)
from .core import ControlledPath
from .experiments import COEFFICIENT_CLASSES
from .solver import SolverConfig
from .stochastic import DRIVER_KINDS, DriverSpec, StackedDriver, delayed_lift, simulate_driver, variable_delay_driver

__all__ = [
    "ConfigError",
    "InputError",
    "load_config",
    "driver_spec",
    "build_driver",
    "build_coefficient",
    "build_initial",
    "solver_config",
    "validate_config",
]


class ConfigError(ValueError):
    """The configuration document is well-formed but invalid."""


class InputError(OSError):
    """An input file could not be read or parsed."""


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return doc


def _section(cfg: dict, name: str, required: bool = True) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return sec


_DRIVER_KEYS = {
    "kind", "dim", "horizon", "step", "delays", "covariance", "rate",
    "jump_size", "jumps", "frequencies", "lift", "seed",
}


def driver_spec(cfg: dict, seed: int) -> DriverSpec:
    sec = _section(cfg, "driver")
    unknown = set(sec) - _DRIVER_KEYS
    if unknown:
        raise ConfigError(f"unknown driver keys: {sorted(unknown)}")
    if sec.get("kind") not in DRIVER_KINDS:
        raise ConfigError(f"driver.kind must be one of {DRIVER_KINDS}")
    kw = {k: v for k, v in sec.items() if k not in ("lift", "seed")}
    for key in ("delays", "jumps", "frequencies"):
        if key in kw and kw[key] is not None:
            kw[key] = tuple(tuple(v) if isinstance(v, list) else v for v in kw[key])
    if "covariance" in kw and kw["covariance"] is not None:
        kw["covariance"] = tuple(tuple(r) for r in kw["covariance"])
    if isinstance(kw.get("jump_size"), list):
        kw["jump_size"] = tuple(kw["jump_size"])
    try:
        return DriverSpec(seed=int(sec.get("seed", seed)), **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid driver: {exc}") from exc


def _eta_from(cfg: dict):
    sec = _section(cfg, "coefficient")
    eta = sec.get("eta") or {}
    offset = float(eta.get("offset", 0.125))
    slope = float(eta.get("slope", 0.0))
    eps = float(eta.get("eps", offset))

    def fn(t):
        return offset + slope * t

    return fn, eps


def build_driver(cfg: dict, seed: int) -> StackedDriver:
    spec = driver_spec(cfg, seed)
    sec = _section(cfg, "driver")
    convention = sec.get("lift", "geometric" if spec.kind == "smooth" else "ito")
    if convention not in ("ito", "geometric"):
        raise ConfigError("driver.lift must be 'ito' or 'geometric'")
    z = simulate_driver(spec)
    coef = cfg.get("coefficient") or {}
    if coef.get("class") == "variable_delay":
        eta, _ = _eta_from(cfg)
        return variable_delay_driver(z, eta, spec.step, convention)
    return delayed_lift(z, spec.delays, spec.step, convention)


def build_initial(cfg: dict, rp: StackedDriver) -> ControlledPath:
    sec = _section(cfg, "initial")
    try:
        value = np.atleast_1d(np.asarray(sec.get("value"), dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"initial.value must be a list of numbers: {exc}") from exc
    if value.ndim != 1 or value.size == 0:
        raise ConfigError("initial.value must be a non-empty list")
    return ControlledPath.constant(rp.path, value)


def build_coefficient(cfg: dict, rp: StackedDriver, state_dim: int) -> CoefficientFunctional:
    sec = _section(cfg, "coefficient")
    cls = sec.get("class", "vector_field")
    if cls not in COEFFICIENT_CLASSES:
        raise ConfigError(f"coefficient.class must be one of {COEFFICIENT_CLASSES}")
    fsec = dict(sec.get("field") or {})
    name = fsec.pop("name", None)
    if name is None:
        raise ConfigError("coefficient.field.name is required")
    try:
        vf = make_field(name, **fsec)
        if sec.get("extend_by_zero", False):
            vf = extend_by_zero(vf, rp.dim, 0)
        if cls == "vector_field":
            cf = lift_vector_field(vf)
        elif cls == "controlled":
            src = sec.get("alpha", "time")
            n = len(rp)
            if src == "time":
                alpha = ControlledPath(rp.path, rp.times[:, None], np.zeros((n, 1, rp.dim)))
            elif src == "driver":
                gub = np.zeros((n, 1, rp.dim))
                gub[:, 0, 0] = 1.0
                alpha = ControlledPath(rp.path, rp.values[:, :1], gub)
            else:
                raise ConfigError("coefficient.alpha must be 'time' or 'driver'")
            cf = lift_controlled(vf, alpha)
        elif cls == "discrete_time":
            cf = lift_discrete_time(vf, [float(t) for t in sec.get("times", [])], rp.grid)
        elif cls == "constant_delay":
            history = np.asarray(sec.get("history", [0.0] * state_dim), dtype=float)
            delays = [m * rp.step for m in rp.shifts]
            segs = history_segments(history, delays, rp.path)
            cf = lift_constant_delay(vf, delays, segs, rp.step)
        else:
            history = np.asarray(sec.get("history", [0.0] * state_dim), dtype=float)
            eta, eps = _eta_from(cfg)
            seg = ControlledPath.constant(rp.path, history)
            cf = lift_variable_delay(vf, eta, seg, rp.step, eps=eps)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid coefficient: {exc}") from exc
    if cf.state_dim != state_dim:
        raise ConfigError(f"coefficient expects state dimension {cf.state_dim}, initial value has {state_dim}")
    try:
        cf.check_driver(rp)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cf


_SOLVER_KEYS = {"gamma", "delta", "max_picard_iters", "picard_tol", "contraction_guard", "max_gamma_halvings"}


def solver_config(cfg: dict, p: float) -> tuple[SolverConfig, float]:
    sec = dict(_section(cfg, "solver", required=False))
    residual_tol = float(sec.pop("residual_tol", 1e-10))
    unknown = set(sec) - _SOLVER_KEYS
    if unknown:
        raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
    try:
        return SolverConfig(p=p, **sec), residual_tol
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver config: {exc}") from exc


def validate_config(cfg: dict, command: str, p: float, seed: int) -> None:
    """Run every check a subcommand performs before computing anything expensive."""
    if not (2 < p < 3):
        raise ConfigError(f"--p must lie in (2, 3), got {p}")
    if command in ("lift", "solve", "compare"):
        driver_spec(cfg, seed)
    if command == "solve":
        solver_config(cfg, p)
        rp = build_driver(cfg, seed)
        y = build_initial(cfg, rp)
        build_coefficient(cfg, rp, y.y.shape[1])
    if command == "compare":
        sec = _section(cfg, "compare", required=False)
        coef = _section(cfg, "coefficient")
        fsec = dict(coef.get("field") or {})
        try:
            make_field(fsec.pop("name", "missing"), **fsec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid coefficient field: {exc}") from exc
        if int(sec.get("seeds", 1)) < 1:
            raise ConfigError("compare.seeds must be positive")
        _section(cfg, "initial")
    if command == "stability":
        sec = _section(cfg, "stability", required=False)
        for s in sec.get("scales", [0.1]):
            if not float(s) >= 0:
                raise ConfigError("stability.scales must be non-negative")
        for kind in sec.get("perturbations", []):
            if kind not in ("initial", "field", "driver"):
                raise ConfigError(f"unknown perturbation {kind!r}")
