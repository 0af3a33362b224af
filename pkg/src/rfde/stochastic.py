"""Martingale drivers, the delayed Itô lift, brackets and the delayed-SDE oracle.

Drivers ``Z`` live on a uniform grid of step ``h`` covering ``[-r_max, T]``
with ``Z = 0`` for ``t <= 0``.  The stacked driver
``X = (Z, Z_{.-r_1}, ..., Z_{.-r_l})`` lives on ``[0, T]``; block ``j`` is
``Z`` read ``r_j / h`` grid points earlier.

Under the piecewise-constant embedding every Itô cell area is zero, and the
antisymmetric partner ``dX^i dX^j - [X^i, X^j]_cell`` vanishes as well, so
all level-2 structure comes from Chen reconstruction, which produces exactly
the left-point Itô sums.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coefficients import (
    VectorField,
    extend_by_zero,
    history_segments,
    lift_constant_delay,
)
from .core import ControlledPath, Grid, RoughPath, SampledPath, chen_reconstruct
from .solver import SolverConfig, solve_rfde

__all__ = [
    "DRIVER_KINDS",
    "DriverSpec",
    "StackedDriver",
    "make_rng",
    "simulate_driver",
    "stack_delays",
    "delayed_lift",
    "variable_delay_driver",
    "direct_level2",
    "cross_validate_lift",
    "antisymmetry_residual",
    "BracketResult",
    "bracket",
    "partial_bracket",
    "euler_maruyama_delay",
    "rde_vs_sde_compare",
    "coarsen",
    "seed_sweep",
]

DRIVER_KINDS = ("brownian", "compensated_poisson", "engineered_jumps", "smooth")

_ALIGN_TOL = 1e-9


def _multiple(x: float, h: float, what: str) -> int:
    m = x / h
    mi = int(round(m))
    if abs(m - mi) > _ALIGN_TOL * max(1.0, abs(m)):
        raise ValueError(f"{what} {x!r} is not an integer multiple of the step {h!r}")
    return mi


@dataclass(frozen=True)
class DriverSpec:
    """Description of a driver ``Z`` in R^e with grid-aligned delays.

    ``jumps`` holds ``(time, component, size)`` triples for engineered
    drivers; ``frequencies`` shapes the smooth driver
    ``Z^i_t = sin(2 pi f_i t) / (2 pi f_i)`` (``Z^i_t = t`` when ``f_i = 0``).
    """

    kind: str
    dim: int = 1
    horizon: float = 1.0
    step: float = 2.0**-8
    delays: tuple[float, ...] = ()
    seed: int = 0
    covariance: tuple | None = None
    rate: float = 0.0
    jump_size: float | tuple = 1.0
    jumps: tuple = ()
    frequencies: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(float(r) for r in self.delays))
        object.__setattr__(self, "jumps", tuple(tuple(j) for j in self.jumps))
        self.validate()

    def validate(self) -> None:
        if self.kind not in DRIVER_KINDS:
            raise ValueError(f"unknown driver kind {self.kind!r}; known: {DRIVER_KINDS}")
        if self.dim < 1:
            raise ValueError("driver dimension must be positive")
        if not (self.step > 0 and self.horizon > 0):
            raise ValueError("step and horizon must be positive")
        _multiple(self.horizon, self.step, "horizon")
        prev = 0.0
        for r in self.delays:
            if r <= prev:
                raise ValueError("delays must be positive and strictly increasing")
            _multiple(r, self.step, "delay")
            prev = r
        if self.covariance is not None:
            c = np.asarray(self.covariance, dtype=float)
            if c.shape != (self.dim, self.dim):
                raise ValueError(f"covariance must be {self.dim} x {self.dim}")
            if not np.allclose(c, c.T, rtol=0, atol=1e-14):
                raise ValueError("covariance must be symmetric")
            if np.linalg.eigvalsh(c).min() < -1e-12 * max(1.0, np.abs(c).max()):
                raise ValueError("covariance must be positive semidefinite")
        if self.rate < 0:
            raise ValueError("jump rate must be non-negative")
        for t, comp, _ in self.jumps:
            if not (0 < t <= self.horizon):
                raise ValueError(f"jump time {t!r} outside (0, T]")
            if not (0 <= int(comp) < self.dim):
                raise ValueError(f"jump component {comp!r} out of range")
            _multiple(t, self.step, "jump time")
        if self.frequencies is not None and len(self.frequencies) != self.dim:
            raise ValueError("need one frequency per component")

    @property
    def n_cells(self) -> int:
        return _multiple(self.horizon, self.step, "horizon")

    @property
    def shifts(self) -> list[int]:
        return [_multiple(r, self.step, "delay") for r in self.delays]

    @property
    def lead(self) -> int:
        """Number of grid points before t = 0."""
        return self.shifts[-1] if self.delays else 0


def make_rng(seed: int) -> np.random.Generator:
    """Independent PCG64 stream per seed; results do not depend on worker count."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _extended_grid(lead: int, n: int, h: float) -> Grid:
    return Grid(h * np.arange(-lead, n + 1))


def simulate_driver(spec: DriverSpec) -> SampledPath:
    """Sample ``Z`` on the extended grid ``[-r_max, T]``; ``Z = 0`` for ``t <= 0``."""
    h, n, e, lead = spec.step, spec.n_cells, spec.dim, spec.lead
    grid = _extended_grid(lead, n, h)
    z = np.zeros((lead + n + 1, e))
    t = h * np.arange(n + 1)
    if spec.kind == "brownian":
        cov = np.eye(e) if spec.covariance is None else np.asarray(spec.covariance, float)
        vals, vecs = np.linalg.eigh(cov)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
        inc = make_rng(spec.seed).standard_normal((n, e)) @ root.T * math.sqrt(h)
        z[lead + 1 :] = np.add.accumulate(inc, axis=0)
    elif spec.kind == "compensated_poisson":
        rng = make_rng(spec.seed)
        size = np.broadcast_to(np.asarray(spec.jump_size, float), (e,))
        counts = np.zeros((n + 1, e))
        for c in range(e):
            k = rng.poisson(spec.rate * spec.horizon)
            times = rng.uniform(0.0, spec.horizon, size=k)
            # an event in (t_{j-1}, t_j] becomes a jump at t_j
            idx = np.clip(np.ceil(times / h - _ALIGN_TOL).astype(int), 1, n)
            np.add.at(counts[:, c], idx, 1.0)
        counts = np.add.accumulate(counts, axis=0)
        z[lead:] = counts * size - spec.rate * size * t[:, None]
    elif spec.kind == "engineered_jumps":
        for time, comp, size in spec.jumps:
            j = _multiple(time, h, "jump time")
            z[lead + j :, int(comp)] += float(size)
    elif spec.kind == "smooth":
        freqs = np.zeros(e) if spec.frequencies is None else np.asarray(spec.frequencies, float)
        for i, f in enumerate(freqs):
            z[lead:, i] = t if f == 0 else np.sin(2 * np.pi * f * t) / (2 * np.pi * f)
    return SampledPath(grid, z)


@dataclass(frozen=True, eq=False)
class StackedDriver(RoughPath):
    """Rough path over ``(Z, Z_{.-r_1}, ...)`` with the block structure kept as metadata.

    Stacked component ``i`` is component ``i % e`` of ``Z`` in block ``i // e``.
    For a variable delay ``eta`` is set and there are two blocks.
    """

    base: SampledPath | None = None
    block_width: int = 1
    shifts: list = field(default_factory=list)
    step: float = 1.0
    eta: Callable | None = None

    @property
    def n_blocks(self) -> int:
        return self.dim // self.block_width

    def block_of(self, i: int) -> tuple[int, int]:
        """(component of Z, block index) of stacked component ``i``."""
        return i % self.block_width, i // self.block_width


def _split(z: SampledPath, h: float) -> tuple[int, int]:
    """Index of t = 0 in the extended grid and the number of cells after it."""
    lead = z.grid.index_of(0.0, tol=1e-9)
    return lead, len(z) - 1 - lead


def stack_delays(z: SampledPath, delays: Sequence[float], step: float) -> tuple[SampledPath, list[int]]:
    lead, n = _split(z, step)
    shifts = [_multiple(r, step, "delay") for r in delays]
    if shifts and shifts[-1] > lead:
        raise ValueError("driver history is shorter than the largest delay")
    blocks = [z.values[lead : lead + n + 1]]
    for m in shifts:
        blocks.append(z.values[lead - m : lead - m + n + 1])
    grid = Grid(z.times[lead : lead + n + 1])
    return SampledPath(grid, np.concatenate(blocks, axis=1)), shifts


def _ito_cells(x: SampledPath, block_width: int) -> np.ndarray:
    """Per-cell level-2 values of the delayed Itô lift.

    For a more-delayed (or equally delayed) integrand the cell is the
    left-point iterated integral over one cell, which is zero for a
    piecewise-constant path.  The remaining entries follow from the
    antisymmetry relation with the cell bracket ``dX^i dX^j``.
    """
    dx = x.increments()
    d = x.dim
    block = np.arange(d) // block_width
    more_delayed = block[:, None] >= block[None, :]
    cells = np.zeros((dx.shape[0], d, d))
    prod = dx[:, :, None] * dx[:, None, :]
    cell_bracket = prod
    partner = np.swapaxes(cells, 1, 2)
    anti = -partner + prod - cell_bracket
    return np.where(more_delayed[None], cells, anti)


def delayed_lift(z: SampledPath, delays: Sequence[float], step: float, convention: str = "ito") -> StackedDriver:
    """Stack ``Z`` with its delayed copies and attach level-2 cells.

    ``convention='ito'`` gives the delayed Itô lift; ``'geometric'`` uses
    ``dX (x) dX / 2`` cells, appropriate for smooth drivers.
    """
    x, shifts = stack_delays(z, delays, step)
    e = z.dim
    if convention == "ito":
        cells = _ito_cells(x, e)
    elif convention == "geometric":
        dx = x.increments()
        cells = 0.5 * dx[:, :, None] * dx[:, None, :]
    else:
        raise ValueError(f"unknown lift convention {convention!r}")
    return StackedDriver(x, cells, base=z, block_width=e, shifts=shifts, step=float(step))


def variable_delay_driver(
    z: SampledPath, eta: Callable, step: float, convention: str = "ito"
) -> StackedDriver:
    """Stack ``(Z, Z_{. - eta(.)})`` with the delayed time rounded down to the grid."""
    lead, n = _split(z, step)
    t = z.times[lead:]
    src = np.array([math.floor((ti - float(eta(ti)) - t[0]) / step + 1e-9) for ti in t])
    if np.any(src + lead < 0) and np.any(z.values[: lead + 1] != 0):
        raise ValueError("driver history is shorter than the delay")
    delayed = np.where((src + lead >= 0)[:, None], z.values[np.maximum(src + lead, 0)], 0.0)
    x = SampledPath(Grid(t), np.concatenate([z.values[lead:], delayed], axis=1))
    e = z.dim
    if convention == "ito":
        cells = _ito_cells(x, e)
    else:
        dx = x.increments()
        cells = 0.5 * dx[:, :, None] * dx[:, None, :]
    return StackedDriver(x, cells, base=z, block_width=e, shifts=[], step=float(step), eta=eta)


# ----------------------------------------------------------------- checks of the lift


def direct_level2(x: np.ndarray, s: int, t: int) -> np.ndarray:
    """Left-point sum ``sum_k (X_k - X_s) (x) dX_k`` via prefix sums of ``X_k (x) dX_k``."""
    dx = np.diff(x[s : t + 1], axis=0)
    if dx.shape[0] == 0:
        return np.zeros((x.shape[1], x.shape[1]))
    prefix = (x[s:t, :, None] * dx[:, None, :]).sum(axis=0)
    return prefix - np.outer(x[s], x[t] - x[s])


def cross_validate_lift(sd: StackedDriver, stride: int = 2, pairs: int | None = None, seed: int = 0) -> float:
    """Largest mismatch between Chen reconstruction and an independent direct construction.

    On the grid coarsened by ``stride``: entries with a more-delayed integrand
    are direct left-point sums; the others come from the antisymmetry
    formula with the bracket.
    """
    x = sd.values
    n = len(sd)
    e = sd.block_width
    block = np.arange(sd.dim) // e
    more_delayed = block[:, None] >= block[None, :]
    coarse = np.arange(0, n, stride)
    if pairs is None:
        idx_pairs = [(int(a), int(b)) for i, a in enumerate(coarse) for b in coarse[i:]]
    else:
        rng = make_rng(seed)
        idx_pairs = [tuple(sorted(int(v) for v in rng.choice(coarse, 2))) for _ in range(pairs)]
    worst = 0.0
    for s, t in idx_pairs:
        direct = direct_level2(x, s, t)
        inc = x[t] - x[s]
        dx = np.diff(x[s : t + 1], axis=0)
        br = dx.T @ dx
        anti = -direct.T + np.outer(inc, inc) - br
        built = np.where(more_delayed, direct, anti)
        scale = 1.0 + float(np.abs(inc).max()) ** 2 + float(np.abs(direct).max())
        worst = max(worst, float(np.abs(built - chen_reconstruct(sd, s, t)).max()) / scale)
    return worst


def antisymmetry_residual(
    sd: RoughPath, idx_pairs: Sequence[tuple[int, int]], with_bracket: bool = True
) -> float:
    """``max |XX^{ij} + XX^{ji} - X^i X^j + [X^i, X^j]|`` over the given index pairs.

    ``with_bracket=False`` drops the bracket term, which is the identity a
    geometric lift satisfies.
    """
    x = sd.values
    worst = 0.0
    for s, t in idx_pairs:
        lv = chen_reconstruct(sd, s, t)
        inc = x[t] - x[s]
        dx = np.diff(x[s : t + 1], axis=0)
        res = lv + lv.T - np.outer(inc, inc)
        if with_bracket:
            res = res + dx.T @ dx
        worst = max(worst, float(np.abs(res).max()))
    return worst


# ----------------------------------------------------------------- brackets


@dataclass
class BracketResult:
    path: SampledPath
    partial_sums: dict


def partial_bracket(xi: np.ndarray, xj: np.ndarray, stride: int, upto: int | None = None) -> float:
    """Increment-product sum of two scalar paths along the partition of every ``stride``-th point."""
    end = len(xi) - 1 if upto is None else upto
    pts = np.arange(0, end + 1, stride)
    if pts[-1] != end:
        pts = np.append(pts, end)
    di = np.diff(np.asarray(xi)[pts])
    dj = np.diff(np.asarray(xj)[pts])
    return float(np.add.accumulate(di * dj)[-1]) if di.size else 0.0


def bracket(x_i: SampledPath, x_j: SampledPath, strides: Sequence[int] = ()) -> BracketResult:
    """Quadratic covariation ``[X^i, X^j]_t`` and partial sums along coarser partitions."""
    if not x_i.grid.same_as(x_j.grid):
        raise ValueError("bracket needs paths on the same grid")
    a = x_i.values[:, 0]
    b = x_j.values[:, 0]
    prod = np.diff(a) * np.diff(b)
    vals = np.zeros(len(a))
    if prod.size:
        vals[1:] = np.add.accumulate(prod)
    partial = {int(s): partial_bracket(a, b, int(s)) for s in strides}
    return BracketResult(SampledPath(x_i.grid, vals), partial)


# ----------------------------------------------------------------- delayed SDE oracle


def _history_value(history, t: float, k: int) -> np.ndarray:
    if callable(history):
        return np.atleast_1d(np.asarray(history(t), dtype=float))
    return np.atleast_1d(np.asarray(history, dtype=float)).copy()


def euler_maruyama_delay(
    z: SampledPath, vf: VectorField, history, delays: Sequence[float], step: float
) -> SampledPath:
    """Left-point scheme ``Y_{k+1} = Y_k + f(Y_k, Y_{k-m_1}, ...) dZ_k`` on [0, T].

    ``history`` gives ``Y`` on ``[-r_max, 0]`` (callable of time, or a constant
    vector); ``Y_0`` is its value at 0.
    """
    lead, n = _split(z, step)
    shifts = [_multiple(r, step, "delay") for r in delays]
    times = z.times[lead:]
    dz = np.diff(z.values[lead:], axis=0)
    y0 = _history_value(history, 0.0, 0)
    k_dim = y0.size
    ys = np.zeros((n + 1, k_dim))
    ys[0] = y0
    past = {}
    for m, r in zip(shifts, delays):
        past[m] = np.array([_history_value(history, times[l] - r, l) for l in range(min(m, n + 1))])
    for k in range(n):
        args = [ys[k]]
        for m in shifts:
            args.append(ys[k - m] if k >= m else past[m][k])
        f = vf.values(np.concatenate(args)[None])[0]
        ys[k + 1] = ys[k] + f @ dz[k]
    return SampledPath(Grid(times), ys)


def coarsen(z: SampledPath, factor: int) -> SampledPath:
    """Keep every ``factor``-th point, anchored at t = 0."""
    lead = z.grid.index_of(0.0)
    if lead % factor:
        raise ValueError("coarsening factor must divide the history length")
    idx = np.arange(lead % factor, len(z), factor)
    if (len(z) - 1 - lead) % factor:
        raise ValueError("coarsening factor must divide the number of cells")
    return SampledPath(Grid(z.times[idx]), z.values[idx])


def rde_vs_sde_compare(
    z: SampledPath,
    vf: VectorField,
    history,
    delays: Sequence[float],
    step: float,
    p: float = 2.5,
    refinements: Sequence[int] = (),
    config: SolverConfig | None = None,
) -> dict:
    """Solve the delayed RFDE over the Itô lift and compare with Euler–Maruyama on the same path.

    ``vf`` acts on ``Z`` increments; it is extended by zero to the stacked
    driver.  ``refinements`` lists coarsening factors for additional
    comparisons on sub-sampled versions of the same path.
    """
    cfg = config or SolverConfig(p=p)

    def one(zz: SampledPath, h: float) -> dict:
        sd = delayed_lift(zz, delays, h)
        full = extend_by_zero(vf, sd.dim, 0)
        segs = history_segments(history, delays, sd.path)
        cf = lift_constant_delay(full, delays, segs, h)
        y0 = _history_value(history, 0.0, 0)
        y = ControlledPath.constant(sd.path, y0)
        rep = solve_rfde(sd, y, cf, cfg)
        em = euler_maruyama_delay(zz, vf, history, delays, h)
        gap = float(np.abs(rep.solution.y - em.values).max())
        scale = 1.0 + float(np.abs(em.values).max())
        return {"step": h, "gap": gap, "scale": scale, "rde": rep.solution, "sde": em, "report": rep}

    base = one(z, step)
    levels = [
        {k: v for k, v in one(coarsen(z, f), step * f).items() if k in ("step", "gap", "scale")}
        for f in refinements
    ]
    return {
        "sup_norm_gap": base["gap"],
        "scale": base["scale"],
        "rde": base["rde"],
        "sde": base["sde"],
        "report": base["report"],
        "refinements": levels,
    }


def seed_sweep(fn: Callable[[int], object], seeds: Sequence[int], threads: int = 1) -> list:
    """Apply ``fn`` to each seed; results come back in seed order for any thread count."""
    if threads <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds))
