"""Non-anticipative coefficient functionals (F, F') built from vector fields.

Every concrete class evaluates a vector field on a *stacked argument*: a
linear, non-anticipative rearrangement of the controlled path (Y, Y') such as
``(Y_t, Y_{t-r_1}, ...)`` or ``(alpha_t, Y_t)``.  With the stacked argument
``(Ybar, Ybar')`` the functional is

    F_t(Y) = f(Ybar_t),    F'_t(Y, Y') = Df(Ybar_t) Ybar'_t.

Shapes: ``f(x)`` is an operator of shape (k, d) acting on driver increments,
``Df(x)`` has shape (k, d, m) and ``F'`` has shape (k, d, d) with the last
axis in the driver direction.  Evaluation at grid index ``l`` reads the
state only at indices ``<= l``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ControlledPath, Grid, RoughPath, SampledPath
from .variation import controlled_distance, controlled_norm, pvar, pvar2, remainder_var

__all__ = [
    "VectorField",
    "constant_field",
    "linear_field",
    "sin_field",
    "tanh_field",
    "extend_by_zero",
    "FIELD_REGISTRY",
    "make_field",
    "CoefficientFunctional",
    "VectorFieldLift",
    "ControlledLift",
    "DiscreteTimeLift",
    "ConstantDelayLift",
    "VariableDelayLift",
    "lift_vector_field",
    "lift_controlled",
    "lift_discrete_time",
    "lift_constant_delay",
    "lift_variable_delay",
    "history_segments",
    "truncate_after",
    "AssumptionReport",
    "validate_assumptions",
]


# ----------------------------------------------------------------- vector fields


@dataclass(frozen=True)
class VectorField:
    """Map ``R^m -> L(R^d; R^k)`` with its derivative and declared C^k bounds.

    ``c1``, ``c2`` and ``c3`` are the user's declared values of
    ``||f||_inf + ||Df||_inf (+ ...)`` up to the respective order.  When
    ``vectorized`` is set, ``f`` and ``df`` accept a batch ``(L, m)``.
    """

    f: Callable
    df: Callable
    in_dim: int
    out_dim: int
    drive_dim: int
    c1: float
    c2: float
    c3: float
    d2f: Callable | None = None
    vectorized: bool = False
    name: str = "custom"

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.in_dim)
        shape = (x.shape[0], self.out_dim, self.drive_dim)
        if self.vectorized:
            return np.asarray(self.f(x), dtype=float).reshape(shape)
        return np.array([self.f(xi) for xi in x], dtype=float).reshape(shape)

    def derivs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.in_dim)
        shape = (x.shape[0], self.out_dim, self.drive_dim, self.in_dim)
        if self.vectorized:
            return np.asarray(self.df(x), dtype=float).reshape(shape)
        return np.array([self.df(xi) for xi in x], dtype=float).reshape(shape)

    def second_derivs(self, x: np.ndarray) -> np.ndarray | None:
        if self.d2f is None:
            return None
        x = np.asarray(x, dtype=float).reshape(-1, self.in_dim)
        shape = (x.shape[0], self.out_dim, self.drive_dim, self.in_dim, self.in_dim)
        if self.vectorized:
            return np.asarray(self.d2f(x), dtype=float).reshape(shape)
        return np.array([self.d2f(xi) for xi in x], dtype=float).reshape(shape)

    def check_derivative(self, probes: np.ndarray, h: float = 1e-6) -> float:
        """Largest central-difference mismatch of ``df`` over probe points and unit directions."""
        probes = np.asarray(probes, dtype=float).reshape(-1, self.in_dim)
        worst = 0.0
        for e in np.eye(self.in_dim):
            fd = (self.values(probes + h * e) - self.values(probes - h * e)) / (2 * h)
            an = np.einsum("lkdm,m->lkd", self.derivs(probes), e)
            worst = max(worst, float(np.abs(fd - an).max()))
        return worst

    def sampled_bounds(self, probes: np.ndarray) -> dict:
        """Observed ``||f||``, ``||Df||`` and (if available) ``||D^2 f||`` suprema on probes."""
        probes = np.asarray(probes, dtype=float).reshape(-1, self.in_dim)

        def sup(a):
            return float(np.sqrt((a.reshape(a.shape[0], -1) ** 2).sum(axis=1)).max())

        out = {"f": sup(self.values(probes)), "df": sup(self.derivs(probes))}
        d2 = self.second_derivs(probes)
        if d2 is not None:
            out["d2f"] = sup(d2)
        return out

    def bounds_dominate(self, probes: np.ndarray) -> bool:
        b = self.sampled_bounds(probes)
        ok = b["f"] + b["df"] <= self.c1 * (1 + 1e-12)
        if "d2f" in b:
            ok = ok and b["f"] + b["df"] + b["d2f"] <= self.c2 * (1 + 1e-12)
        return bool(ok)


def _as_operator(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim == 1:
        a = a[:, None]
    return a


def constant_field(value, in_dim: int) -> VectorField:
    """``f(x) = value`` for an operator ``value`` of shape (k, d)."""
    c = _as_operator(value)
    k, d = c.shape
    norm = float(np.linalg.norm(c))
    return VectorField(
        f=lambda x: np.broadcast_to(c, (x.shape[0], k, d)),
        df=lambda x: np.zeros((x.shape[0], k, d, in_dim)),
        d2f=lambda x: np.zeros((x.shape[0], k, d, in_dim, in_dim)),
        in_dim=in_dim,
        out_dim=k,
        drive_dim=d,
        c1=norm,
        c2=norm,
        c3=norm,
        vectorized=True,
        name="constant",
    )


def linear_field(matrix, offset=None, bound_radius: float = 1.0) -> VectorField:
    """``f(x)[a, b] = sum_e A[a, b, e] x_e + offset[a, b]``.

    Unbounded on R^m, so the declared bounds refer to the ball of radius
    ``bound_radius``.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 3:
        raise ValueError("linear field needs a coefficient array of shape (k, d, m)")
    k, d, m = a.shape
    b = np.zeros((k, d)) if offset is None else _as_operator(offset)
    na = float(np.linalg.norm(a))
    sup_f = float(np.linalg.norm(b)) + na * bound_radius
    return VectorField(
        f=lambda x: np.einsum("kde,le->lkd", a, x) + b,
        df=lambda x: np.broadcast_to(a, (x.shape[0], k, d, m)),
        d2f=lambda x: np.zeros((x.shape[0], k, d, m, m)),
        in_dim=m,
        out_dim=k,
        drive_dim=d,
        c1=sup_f + na,
        c2=sup_f + na,
        c3=sup_f + na,
        vectorized=True,
        name="linear",
    )


def _ridge_field(name, g, dg, d2g, sup_g, sup_dg, sup_d2g, sup_d3g, amplitude, weights, phase):
    amp = _as_operator(amplitude)
    k, d = amp.shape
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        w = np.broadcast_to(w, (k, d, w.size))
    if w.shape[:2] != (k, d):
        raise ValueError("weights must have shape (m,) or (k, d, m)")
    m = w.shape[2]
    ph = np.zeros((k, d)) if phase is None else np.broadcast_to(np.asarray(phase, float), (k, d))

    def arg(x):
        return np.einsum("kde,le->lkd", w, x) + ph

    wn = np.sqrt((w**2).sum(axis=2))
    n0 = float(np.linalg.norm(amp)) * sup_g
    n1 = float(np.linalg.norm(amp * wn)) * sup_dg
    n2 = float(np.linalg.norm(amp * wn**2)) * sup_d2g
    n3 = float(np.linalg.norm(amp * wn**3)) * sup_d3g
    return VectorField(
        f=lambda x: amp * g(arg(x)),
        df=lambda x: (amp * dg(arg(x)))[..., None] * w,
        d2f=lambda x: (amp * d2g(arg(x)))[..., None, None] * w[..., :, None] * w[..., None, :],
        in_dim=m,
        out_dim=k,
        drive_dim=d,
        c1=n0 + n1,
        c2=n0 + n1 + n2,
        c3=n0 + n1 + n2 + n3,
        vectorized=True,
        name=name,
    )


def sin_field(amplitude=1.0, weights=(1.0,), phase=None) -> VectorField:
    """``f(x)[a, b] = amplitude[a, b] * sin(<weights[a, b], x> + phase[a, b])``."""
    return _ridge_field(
        "sin", np.sin, np.cos, lambda u: -np.sin(u), 1.0, 1.0, 1.0, 1.0, amplitude, weights, phase
    )


def _tanh_d1(u):
    return 1.0 - np.tanh(u) ** 2


def _tanh_d2(u):
    t = np.tanh(u)
    return -2.0 * t * (1.0 - t * t)


# sup |tanh''| = 4 / (3 sqrt 3), sup |tanh'''| = 2
def tanh_field(amplitude=1.0, weights=(1.0,), phase=None) -> VectorField:
    """Saturating field ``amplitude * tanh(<weights, x> + phase)``."""
    return _ridge_field(
        "tanh-saturating",
        np.tanh,
        _tanh_d1,
        _tanh_d2,
        1.0,
        1.0,
        4.0 / (3.0 * np.sqrt(3.0)),
        2.0,
        amplitude,
        weights,
        phase,
    )


def extend_by_zero(vf: VectorField, drive_dim: int, block: int = 0) -> VectorField:
    """Act on a larger driver by reading only the ``block``-th group of ``vf.drive_dim`` columns."""
    d0 = vf.drive_dim
    lo = block * d0
    if lo + d0 > drive_dim:
        raise ValueError("block does not fit into the extended driver")

    def pad_f(x):
        out = np.zeros((x.shape[0], vf.out_dim, drive_dim))
        out[:, :, lo : lo + d0] = vf.values(x)
        return out

    def pad_df(x):
        out = np.zeros((x.shape[0], vf.out_dim, drive_dim, vf.in_dim))
        out[:, :, lo : lo + d0] = vf.derivs(x)
        return out

    pad_d2f = None
    if vf.d2f is not None:

        def pad_d2f(x):
            out = np.zeros((x.shape[0], vf.out_dim, drive_dim, vf.in_dim, vf.in_dim))
            out[:, :, lo : lo + d0] = vf.second_derivs(x)
            return out

    return VectorField(
        f=pad_f,
        df=pad_df,
        d2f=pad_d2f,
        in_dim=vf.in_dim,
        out_dim=vf.out_dim,
        drive_dim=drive_dim,
        c1=vf.c1,
        c2=vf.c2,
        c3=vf.c3,
        vectorized=True,
        name=vf.name,
    )


def _registry_constant(value=1.0, in_dim=1):
    return constant_field(value, in_dim)


def _registry_linear(matrix=((1.0,),), offset=None, bound_radius=1.0):
    a = np.asarray(matrix, dtype=float)
    if a.ndim == 2:
        a = a[None]
    return linear_field(a, offset, bound_radius)


FIELD_REGISTRY: dict[str, Callable[..., VectorField]] = {
    "constant": _registry_constant,
    "linear": _registry_linear,
    "sin": lambda amplitude=1.0, weights=(1.0,), phase=None: sin_field(amplitude, weights, phase),
    "tanh-saturating": lambda amplitude=1.0, weights=(1.0,), phase=None: tanh_field(
        amplitude, weights, phase
    ),
}


def make_field(name: str, **params) -> VectorField:
    try:
        builder = FIELD_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown vector field {name!r}; known: {sorted(FIELD_REGISTRY)}") from None
    return builder(**params)


# ----------------------------------------------------------------- functionals


class CoefficientFunctional:
    """Base class: ``(F, F')`` from a vector field evaluated on a stacked argument.

    Subclasses implement :meth:`stack_values` and :meth:`stack_derivs`, which
    read ``y`` and ``yp`` only at indices ``<= b``.
    """

    vf: VectorField
    state_dim: int

    def __init__(self, vf: VectorField, state_dim: int):
        self.vf = vf
        self.state_dim = int(state_dim)

    # -- stacking, overridden per class
    def stack_values(self, y: np.ndarray, a: int, b: int) -> np.ndarray:
        raise NotImplementedError

    def stack_derivs(self, yp: np.ndarray, a: int, b: int) -> np.ndarray:
        raise NotImplementedError

    def check_driver(self, rp: RoughPath) -> None:
        if rp.dim != self.vf.drive_dim:
            raise ValueError(
                f"coefficient acts on a {self.vf.drive_dim}-dimensional driver, got {rp.dim}"
            )

    # -- evaluation
    def values_range(self, y: np.ndarray, a: int, b: int) -> np.ndarray:
        """``F_l(Y)`` for l = a..b, shape (b - a + 1, k, d)."""
        return self.vf.values(self.stack_values(y, a, b))

    def derivs_range(self, y: np.ndarray, yp: np.ndarray, a: int, b: int) -> np.ndarray:
        """``F'_l(Y, Y')`` for l = a..b, shape (b - a + 1, k, d, d)."""
        xbar = self.stack_values(y, a, b)
        xbarp = self.stack_derivs(yp, a, b)
        return np.einsum("lkde,lec->lkdc", self.vf.derivs(xbar), xbarp)

    def evaluate_range(self, y, yp, a, b):
        return self.values_range(y, a, b), self.derivs_range(y, yp, a, b)

    def evaluate(self, cp: ControlledPath) -> ControlledPath:
        n = len(cp)
        f, fp = self.evaluate_range(cp.y, cp.gubinelli, 0, n - 1)
        return ControlledPath(cp.driver, f, fp)

    # -- metadata
    def growth_constant(self) -> float:
        """Declared C_F."""
        return 2.0 * self.vf.c2

    def lipschitz_constant(self, k_bound: float, driver_norm: float) -> float:
        """Declared C_{F,K,X}; a heuristic envelope, checked empirically by validate_assumptions."""
        return 4.0 * self.vf.c3 * (1.0 + k_bound) ** 3 * (1.0 + driver_norm) ** 3


def _check_state(y: np.ndarray, k: int) -> None:
    if y.shape[-1] != k:
        raise ValueError(f"coefficient expects a {k}-dimensional state, got {y.shape[-1]}")


class VectorFieldLift(CoefficientFunctional):
    """``(f(Y), Df(Y) Y')``."""

    def __init__(self, vf: VectorField):
        super().__init__(vf, vf.in_dim)

    def stack_values(self, y, a, b):
        _check_state(y, self.state_dim)
        return y[a : b + 1]

    def stack_derivs(self, yp, a, b):
        return yp[a : b + 1]


class ControlledLift(CoefficientFunctional):
    """``(f(alpha, Y), Df(alpha, Y) (alpha', Y'))`` for a given controlled path alpha."""

    def __init__(self, vf: VectorField, alpha: ControlledPath):
        e = alpha.y.shape[1]
        if alpha.y.ndim != 2 or vf.in_dim <= e:
            raise ValueError("vector field input must stack alpha (R^e) and the state (R^k)")
        super().__init__(vf, vf.in_dim - e)
        self.alpha = alpha

    def check_driver(self, rp):
        super().check_driver(rp)
        if not self.alpha.grid.same_as(rp.grid):
            raise ValueError("alpha and driver live on different grids")

    def stack_values(self, y, a, b):
        _check_state(y, self.state_dim)
        return np.concatenate([self.alpha.y[a : b + 1], y[a : b + 1]], axis=1)

    def stack_derivs(self, yp, a, b):
        return np.concatenate([self.alpha.gubinelli[a : b + 1], yp[a : b + 1]], axis=1)

    def growth_constant(self):
        p = 2.5
        na = controlled_norm(self.alpha, p) + pvar(self.alpha.y, p)
        return 2.0 * self.vf.c2 * (1.0 + na) ** 2


class DiscreteTimeLift(CoefficientFunctional):
    """``f(Y_t, Y_{t ^ r_1}, ..., Y_{t ^ r_l})`` with frozen values after each r_j."""

    def __init__(self, vf: VectorField, time_indices: Sequence[int]):
        idx = [int(i) for i in time_indices]
        if any(b <= a for a, b in zip(idx[:-1], idx[1:])) or any(i < 0 for i in idx):
            raise ValueError("time indices must be non-negative and strictly increasing")
        n_blocks = len(idx) + 1
        if vf.in_dim % n_blocks:
            raise ValueError("vector field input dimension must be k * (l + 1)")
        super().__init__(vf, vf.in_dim // n_blocks)
        self.time_indices = idx

    def stack_values(self, y, a, b):
        _check_state(y, self.state_dim)
        ls = np.arange(a, b + 1)
        blocks = [y[ls]] + [y[np.minimum(ls, i)] for i in self.time_indices]
        return np.concatenate(blocks, axis=1)

    def stack_derivs(self, yp, a, b):
        ls = np.arange(a, b + 1)
        blocks = [yp[ls]]
        for i in self.time_indices:
            live = (ls < i)[:, None, None]
            blocks.append(np.where(live, yp[np.minimum(ls, i)], 0.0))
        return np.concatenate(blocks, axis=1)

    def growth_constant(self):
        return 2.0 * self.vf.c2 * (len(self.time_indices) + 1) ** 2


def lift_vector_field(vf: VectorField) -> VectorFieldLift:
    return VectorFieldLift(vf)


def lift_controlled(vf: VectorField, alpha: ControlledPath) -> ControlledLift:
    return ControlledLift(vf, alpha)


def lift_discrete_time(vf: VectorField, times: Sequence[float], grid: Grid) -> DiscreteTimeLift:
    """Freeze copies of the state at the grid times ``r_1 < ... < r_l``; off-grid times raise."""
    return DiscreteTimeLift(vf, [grid.index_of(r) for r in times])


def _delay_shifts(delays: Sequence[float], step: float) -> list[int]:
    shifts = []
    for r in delays:
        m = r / step
        mi = int(round(m))
        if mi <= 0 or abs(m - mi) > 1e-9 * max(1.0, m):
            raise ValueError(f"delay {r!r} is not a positive integer multiple of the step {step!r}")
        shifts.append(mi)
    if any(b <= a for a, b in zip(shifts[:-1], shifts[1:])):
        raise ValueError("delays must be strictly increasing")
    return shifts


class _DelayBase(CoefficientFunctional):
    """Shared machinery for stacked-driver delays with ``n_blocks`` driver blocks of width e."""

    def __init__(self, vf, n_state_blocks, n_driver_blocks, segments):
        if vf.in_dim % n_state_blocks:
            raise ValueError("vector field input dimension must be k * (l + 1)")
        super().__init__(vf, vf.in_dim // n_state_blocks)
        if vf.drive_dim % n_driver_blocks:
            raise ValueError("driver dimension must be e * (l + 1) for a stacked driver")
        self.block_width = vf.drive_dim // n_driver_blocks
        self.n_driver_blocks = n_driver_blocks
        self.segments = list(segments)
        for seg in self.segments:
            if seg.y.shape[1:] != (self.state_dim,):
                raise ValueError("initial segment has the wrong state dimension")

    def _route(self, yp_rows: np.ndarray, targets: dict[int, int]) -> np.ndarray:
        """Move driver blocks ``b -> targets[b]`` of Gubinelli rows; unmatched blocks are dropped."""
        e = self.block_width
        out = np.zeros_like(yp_rows)
        for src, dst in targets.items():
            out[..., dst * e : (dst + 1) * e] = yp_rows[..., src * e : (src + 1) * e]
        return out

    def check_driver(self, rp):
        super().check_driver(rp)
        from .stochastic import StackedDriver  # local import to avoid a cycle

        if not isinstance(rp, StackedDriver):
            raise ValueError("delayed coefficients need a stacked driver (Z, Z shifted by each delay)")
        for seg in self.segments:
            if not seg.grid.same_as(rp.grid):
                raise ValueError("initial segment and driver live on different grids")


class ConstantDelayLift(_DelayBase):
    """``f(Y_t, Y_{t-r_1}, ..., Y_{t-r_l})`` on a uniform grid with step-aligned delays.

    Before ``r_j`` the delayed argument is read from the j-th initial segment.
    The Gubinelli derivative of ``Y_{t-r_j}`` is ``Y'_{t-r_j}`` with each driver
    block ``b`` moved to the block whose delay is ``r_b + r_j``; blocks without
    such a partner are dropped.
    """

    def __init__(self, vf, delays, initial_segments, step):
        self.delays = [float(r) for r in delays]
        self.step = float(step)
        self.shifts = _delay_shifts(self.delays, self.step)
        if len(initial_segments) != len(self.shifts):
            raise ValueError("need one initial segment per delay")
        n = len(self.shifts) + 1
        super().__init__(vf, n, n, initial_segments)
        all_shifts = [0] + self.shifts
        self._targets = []
        for m_j in self.shifts:
            t = {}
            for b, m_b in enumerate(all_shifts):
                if m_b + m_j in all_shifts:
                    t[b] = all_shifts.index(m_b + m_j)
            self._targets.append(t)

    def check_driver(self, rp):
        super().check_driver(rp)
        if rp.shifts[: len(self.shifts)] != self.shifts or abs(rp.step - self.step) > 1e-12 * self.step:
            raise ValueError("stacked driver delays do not match the coefficient delays")

    def stack_values(self, y, a, b):
        _check_state(y, self.state_dim)
        ls = np.arange(a, b + 1)
        blocks = [y[ls]]
        for m_j, seg in zip(self.shifts, self.segments):
            src = ls - m_j
            past = (src >= 0)[:, None]
            blocks.append(np.where(past, y[np.maximum(src, 0)], seg.y[ls]))
        return np.concatenate(blocks, axis=1)

    def stack_derivs(self, yp, a, b):
        ls = np.arange(a, b + 1)
        blocks = [yp[ls]]
        for m_j, seg, tgt in zip(self.shifts, self.segments, self._targets):
            src = ls - m_j
            past = (src >= 0)[:, None, None]
            shifted = self._route(yp[np.maximum(src, 0)], tgt)
            blocks.append(np.where(past, shifted, seg.gubinelli[ls]))
        return np.concatenate(blocks, axis=1)

    def growth_constant(self):
        n = len(self.shifts) + 1
        seg = max((controlled_norm(s, 2.5) for s in self.segments), default=0.0)
        return 2.0 * self.vf.c2 * n**2 * (1.0 + seg) ** 2


class VariableDelayLift(_DelayBase):
    """``f(Y_t, Y_{t - eta(t)})`` with ``t - eta(t)`` rounded down to the grid.

    The driver has two blocks ``(Z, Z_{. - eta(.)})``; the Gubinelli derivative
    of the delayed argument is ``Y'`` at the delayed index with block 0 moved
    to block 1.
    """

    def __init__(self, vf, eta: Callable, eps: float, initial_segment: ControlledPath, step: float):
        if eps <= 0:
            raise ValueError("the delay lower bound must be positive")
        super().__init__(vf, 2, 2, [initial_segment])
        self.eta = eta
        self.eps = float(eps)
        self.step = float(step)
        self.source_index = self.delayed_indices(initial_segment.grid.times)

    def delayed_indices(self, times: np.ndarray) -> np.ndarray:
        """Grid index of ``t - eta(t)`` rounded down; negative means inside the initial segment."""
        eta = np.array([float(self.eta(t)) for t in times])
        if np.any(eta < self.eps):
            bad = times[np.argmax(eta < self.eps)]
            raise ValueError(f"delay function drops below {self.eps} at t = {bad}")
        pos = (times - eta - times[0]) / self.step
        return np.floor(pos + 1e-9).astype(int)

    def check_driver(self, rp):
        super().check_driver(rp)
        if getattr(rp, "eta", None) is None:
            raise ValueError("variable-delay coefficients need a driver stacked with a variable delay")

    def _idx(self, ls):
        return self.source_index[ls]

    def stack_values(self, y, a, b):
        _check_state(y, self.state_dim)
        ls = np.arange(a, b + 1)
        src = self._idx(ls)
        past = (src >= 0)[:, None]
        seg = self.segments[0]
        return np.concatenate([y[ls], np.where(past, y[np.maximum(src, 0)], seg.y[ls])], axis=1)

    def stack_derivs(self, yp, a, b):
        ls = np.arange(a, b + 1)
        src = self._idx(ls)
        past = (src >= 0)[:, None, None]
        seg = self.segments[0]
        shifted = self._route(yp[np.maximum(src, 0)], {0: 1})
        return np.concatenate([yp[ls], np.where(past, shifted, seg.gubinelli[ls])], axis=1)

    def growth_constant(self):
        seg = controlled_norm(self.segments[0], 2.5)
        return 2.0 * self.vf.c2 * 4 * (1.0 + seg) ** 2


def lift_constant_delay(vf, delays, initial_segments, step) -> ConstantDelayLift:
    return ConstantDelayLift(vf, delays, initial_segments, step)


def lift_variable_delay(vf, eta, initial_segment, step, eps=None) -> VariableDelayLift:
    if eps is None:
        eps = step
    return VariableDelayLift(vf, eta, eps, initial_segment, step)


def history_segments(history, delays: Sequence[float], driver: SampledPath) -> list[ControlledPath]:
    """Initial segments ``alpha_j(t) = history(t - r_j)`` with zero Gubinelli derivative.

    ``history`` is a callable of time or a constant state vector; only the
    entries with ``t < r_j`` are ever read by the delayed coefficients.
    """
    times = driver.times
    out = []
    for r in delays:
        if callable(history):
            before = times < times[0] + r
            rows = [np.atleast_1d(np.asarray(history(t - r), dtype=float)) for t in times[before]]
            vals = np.array(rows + [rows[-1]] * int((~before).sum()), dtype=float)
        else:
            h = np.atleast_1d(np.asarray(history, dtype=float))
            vals = np.broadcast_to(h, (len(times), h.size))
        k = vals.shape[1]
        out.append(ControlledPath(driver, vals, np.zeros((len(times), k, driver.dim))))
    return out


def truncate_after(cp: ControlledPath, index: int) -> ControlledPath:
    """Stopped path ``(Y_{. ^ t}, Y'_{. ^ t})`` for ``t`` the grid time at ``index``."""
    y = cp.y.copy()
    yp = cp.gubinelli.copy()
    y[index + 1 :] = cp.y[index]
    yp[index + 1 :] = cp.gubinelli[index]
    return ControlledPath(cp.driver, y, yp)


# ----------------------------------------------------------------- assumption checks


@dataclass
class AssumptionReport:
    growth: list[float]
    lipschitz: list[float]
    declared_growth: float
    declared_lipschitz: float
    growth_violations: list[int] = field(default_factory=list)
    lipschitz_violations: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.growth_violations and not self.lipschitz_violations


def _ratio(lhs, rhs):
    if lhs == 0.0:
        return 0.0
    return lhs / rhs if rhs > 0 else float("inf")


def _sample_ranges(n: int, rng: np.random.Generator, count: int) -> list[tuple[int, int]]:
    pairs = [(0, n - 1)]
    for _ in range(count):
        s, t = sorted(rng.integers(0, n, size=2))
        if s < t:
            pairs.append((int(s), int(t)))
    return pairs


def validate_assumptions(
    cf: CoefficientFunctional,
    rp: RoughPath,
    samples: Sequence[ControlledPath],
    k_bound: float,
    p: float = 2.5,
    n_ranges: int = 4,
    seed: int = 0,
) -> AssumptionReport:
    """Observed constants of the four growth and two Lipschitz inequalities.

    Each entry is the worst ratio ``lhs / (inequality factor)``, i.e. the
    smallest constant the samples would accept.  Samples whose controlled
    norm exceeds ``k_bound`` are left out of the Lipschitz checks.
    """
    rng = np.random.default_rng(seed)
    n = len(rp)
    x = rp.values
    growth = [0.0] * 4
    lip = [0.0] * 2
    evaluated = []
    for cp in samples:
        fy = cf.evaluate(cp)
        evaluated.append((cp, fy))
        growth[0] = max(growth[0], float(np.sqrt((fy.y.reshape(n, -1) ** 2).sum(axis=1)).max()))
        jumps_f = np.linalg.norm(np.diff(fy.y, axis=0).reshape(n - 1, -1), axis=1)
        jumps_y = np.linalg.norm(np.diff(cp.y, axis=0).reshape(n - 1, -1), axis=1)
        # the tightest right side for the jump at t_l uses s = t_{l-1}
        growth[1] = max(growth[1], float((jumps_f / (1.0 + jumps_y)).max()))
        for s, t in _sample_ranges(n, rng, n_ranges):
            nx = pvar(rp.path, p, s, t)
            head = float(np.linalg.norm(cp.gubinelli[s])) + pvar(cp.gubinelli, p, s, t)
            rem = remainder_var(cp.y, cp.gubinelli, x, p, s, t)
            growth[2] = max(growth[2], _ratio(pvar(fy.y, p, s, t), 1.0 + head * nx + rem))
            ncp = head + rem
            growth[3] = max(
                growth[3], _ratio(controlled_norm(fy, p, s, t), (1.0 + ncp) ** 2 * (1.0 + nx) ** 2)
            )
    bounded = [(cp, fy) for cp, fy in evaluated if controlled_norm(cp, p) <= k_bound]
    for i in range(len(bounded)):
        for j in range(i + 1, len(bounded)):
            (a, fa), (b, fb) = bounded[i], bounded[j]
            for s, t in _sample_ranges(n, rng, n_ranges):
                dys = float(np.linalg.norm(a.y[s] - b.y[s]))
                lip[0] = max(lip[0], _ratio(pvar(fa.y - fb.y, p, s, t), dys + pvar(a.y - b.y, p, s, t)))
                lip[1] = max(
                    lip[1],
                    _ratio(controlled_distance(fa, fb, p, s, t), dys + controlled_distance(a, b, p, s, t)),
                )
    c_f = cf.growth_constant()
    c_lip = cf.lipschitz_constant(k_bound, pvar(rp.path, p) + pvar2(rp, p))
    return AssumptionReport(
        growth=growth,
        lipschitz=lip,
        declared_growth=c_f,
        declared_lipschitz=c_lip,
        growth_violations=[i for i, g in enumerate(growth) if g > c_f * (1 + 1e-12)],
        lipschitz_violations=[i for i, g in enumerate(lip) if g > c_lip * (1 + 1e-12)],
    )

