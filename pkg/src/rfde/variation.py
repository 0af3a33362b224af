"""Exact p-variation and p/2-variation seminorms over grid sub-partitions.

Every seminorm is a supremum over sub-partitions of an index range and is
computed by the dynamic program

    M[s] = 0,    M[k] = max_{s <= j < k} (M[j] + |A_{j,k}|^q),

where ``A`` is a one- or two-parameter increment and ``q`` the power.  The
DP value is the left-to-right floating point sum along one particular
partition, and since rounded addition is monotone in each argument it is
bitwise equal to the maximum of left-to-right sums over all partitions,
which is what :func:`brute_force_pvar` enumerates.

Matrix and operator norms are Frobenius norms of the flattened array.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Iterator

import numpy as np

from .core import (
    ControlledPath,
    RoughPath,
    SampledPath,
    level2_columns,
    remainder_column,
)

__all__ = [
    "pvar",
    "pvar2",
    "brute_force_pvar",
    "brute_force_pvar2",
    "twoparam_var",
    "brute_force_twoparam_var",
    "remainder_var",
    "controlled_norm",
    "controlled_distance",
    "rough_norm",
    "rough_distance",
    "ControlFunction",
    "control_w",
    "dp_rows",
    "MAX_BRUTE_FORCE_POINTS",
]

MAX_BRUTE_FORCE_POINTS = 14

ColumnFn = Callable[[int], np.ndarray]


def _norms(a: np.ndarray) -> np.ndarray:
    """Frobenius norm of each leading-axis slice."""
    flat = a.reshape(a.shape[0], -1)
    return np.sqrt((flat * flat).sum(axis=1))


def _root(m: float, power: float) -> float:
    return float(np.float64(m) ** (1.0 / power))


def _resolve_range(n: int, s: int, t: int | None) -> tuple[int, int]:
    if t is None:
        t = n - 1
    if not (0 <= s <= t < n):
        raise IndexError(f"index range [{s}, {t}] invalid for {n} points")
    return s, t


def _check_p(p: float) -> None:
    if not np.isfinite(p) or p < 1:
        raise ValueError(f"p must be >= 1, got {p!r}")


# ----------------------------------------------------------------- columns


def _path_columns(values: np.ndarray, s: int) -> Iterator[tuple[int, np.ndarray]]:
    flat = values.reshape(values.shape[0], -1)
    for k in range(s + 1, flat.shape[0]):
        yield k, _norms(flat[k] - flat[s:k])


def _level2_norm_columns(rp: RoughPath, s: int) -> Iterator[tuple[int, np.ndarray]]:
    for k, state in level2_columns(rp, s, len(rp) - 1):
        yield k, _norms(state)


def _remainder_columns(
    y: np.ndarray, yp: np.ndarray, x: np.ndarray, s: int
) -> Iterator[tuple[int, np.ndarray]]:
    for k in range(s + 1, y.shape[0]):
        yield k, _norms(remainder_column(y, yp, x, s, k))


def _callable_columns(fn: ColumnFn, s: int, n: int) -> Iterator[tuple[int, np.ndarray]]:
    for k in range(s + 1, n):
        yield k, _norms(np.asarray(fn(s, k), dtype=float))


def dp_rows(columns: Iterator[tuple[int, np.ndarray]], q: float) -> Iterator[tuple[int, float]]:
    """Run the DP over a column stream; yields ``(k, M[k])`` with ``M[s] = 0`` first implied."""
    best = np.zeros(1)
    for k, norms in columns:
        m = float((best + norms**q).max())
        best = np.append(best, m)
        yield k, m


class _Row:
    """Lazily extended DP row ``M[s..]`` for one (kind, power, start)."""

    def __init__(self, s: int, stream: Iterator[tuple[int, float]]):
        self.s = s
        self.values = [0.0]
        self._stream = stream
        self._lock = threading.Lock()

    def get(self, t: int) -> float:
        idx = t - self.s
        if idx >= len(self.values):
            with self._lock:
                while idx >= len(self.values):
                    _, m = next(self._stream)
                    self.values.append(m)
        return self.values[idx]

    def iter_from(self, t0: int) -> Iterator[tuple[int, float]]:
        t = t0
        while True:
            try:
                yield t, self.get(t)
            except StopIteration:
                return
            t += 1


def _cached_row(obj, key, make: Callable[[], Iterator[tuple[int, float]]], s: int) -> _Row:
    cache = obj._cache
    row = cache.get(key)
    if row is None:
        row = cache.setdefault(key, _Row(s, make()))
    return row


def _path_row(path, q: float, s: int) -> _Row:
    if isinstance(path, SampledPath):
        return _cached_row(
            path, ("x", q, s), lambda: dp_rows(_path_columns(path.values, s), q), s
        )
    values = np.asarray(path, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return _Row(s, dp_rows(_path_columns(values, s), q))


def _level2_row(rp: RoughPath, q: float, s: int) -> _Row:
    return _cached_row(rp, ("xx", q, s), lambda: dp_rows(_level2_norm_columns(rp, s), q), s)


def _values_of(path) -> np.ndarray:
    if isinstance(path, SampledPath):
        return path.values
    v = np.asarray(path, dtype=float)
    return v[:, None] if v.ndim == 1 else v


# ----------------------------------------------------------------- seminorms


def pvar(path, p: float, s_index: int = 0, t_index: int | None = None) -> float:
    """p-variation of a path (SampledPath or array of shape (n, ...)) over [s, t]."""
    _check_p(p)
    s, t = _resolve_range(len(_values_of(path)), s_index, t_index)
    if s == t:
        return 0.0
    return _root(_path_row(path, float(p), s).get(t), p)


def pvar2(rp: RoughPath, p: float, s_index: int = 0, t_index: int | None = None) -> float:
    """p/2-variation of the Chen-reconstructed level-2 increments, raised to 2/p."""
    if not (2 < p < 3):
        raise ValueError(f"p must lie in (2, 3), got {p!r}")
    s, t = _resolve_range(len(rp), s_index, t_index)
    if s == t:
        return 0.0
    return _root(_level2_row(rp, p / 2.0, s).get(t), p / 2.0)


def twoparam_var(fn: ColumnFn, n: int, p: float, s_index: int = 0, t_index: int | None = None) -> float:
    """p/2-variation of a two-parameter function given column-wise.

    ``fn(s, k)`` returns the stacked values ``A_{j,k}`` for ``j = s..k-1``.
    """
    _check_p(p)
    s, t = _resolve_range(n, s_index, t_index)
    if s == t:
        return 0.0
    row = _Row(s, dp_rows(_callable_columns(fn, s, t + 1), p / 2.0))
    return _root(row.get(t), p / 2.0)


def remainder_var(
    y: np.ndarray, yp: np.ndarray, x: np.ndarray, p: float, s_index: int = 0, t_index: int | None = None
) -> float:
    """p/2-variation of ``R_{j,k} = y_k - y_j - yp_j (x_k - x_j)`` over [s, t]."""
    _check_p(p)
    s, t = _resolve_range(y.shape[0], s_index, t_index)
    if s == t:
        return 0.0
    end = t + 1
    cols = _remainder_columns(y[:end], yp[:end], x[:end], s)
    row = _Row(s, dp_rows(cols, p / 2.0))
    return _root(row.get(t), p / 2.0)


def _brute_force(columns: dict[int, np.ndarray], s: int, t: int, q: float, power: float) -> float:
    if t - s + 1 > MAX_BRUTE_FORCE_POINTS:
        raise ValueError(
            f"brute force limited to {MAX_BRUTE_FORCE_POINTS} points, got {t - s + 1}"
        )
    if s == t:
        return 0.0
    powered = {k: col**q for k, col in columns.items()}
    best = 0.0
    interior = range(s + 1, t)
    for r in range(len(interior) + 1):
        for cut in itertools.combinations(interior, r):
            points = (s,) + cut + (t,)
            total = 0.0
            for u, v in zip(points[:-1], points[1:]):
                total = total + float(powered[v][u - s])
            best = max(best, total)
    return _root(best, power)


def brute_force_pvar(path, p: float, s_index: int = 0, t_index: int | None = None) -> float:
    """Exhaustive enumeration of all sub-partitions; test oracle for :func:`pvar`."""
    _check_p(p)
    values = _values_of(path)
    s, t = _resolve_range(len(values), s_index, t_index)
    cols = dict(itertools.takewhile(lambda kc: kc[0] <= t, _path_columns(values, s)))
    return _brute_force(cols, s, t, float(p), p)


def brute_force_pvar2(rp: RoughPath, p: float, s_index: int = 0, t_index: int | None = None) -> float:
    if not (2 < p < 3):
        raise ValueError(f"p must lie in (2, 3), got {p!r}")
    s, t = _resolve_range(len(rp), s_index, t_index)
    cols = dict(itertools.takewhile(lambda kc: kc[0] <= t, _level2_norm_columns(rp, s)))
    return _brute_force(cols, s, t, p / 2.0, p / 2.0)


def brute_force_twoparam_var(fn: ColumnFn, n: int, p: float, s_index: int = 0, t_index: int | None = None) -> float:
    _check_p(p)
    s, t = _resolve_range(n, s_index, t_index)
    cols = dict(_callable_columns(fn, s, t + 1))
    return _brute_force(cols, s, t, p / 2.0, p / 2.0)


# ----------------------------------------------------------------- controlled paths


def _end(t: int, open_right: bool) -> int:
    # [s, t) under the piecewise-constant embedding is the closed range [s, t-1]
    return t - 1 if open_right and t > 0 else t


def controlled_norm(
    cp: ControlledPath, p: float, s_index: int = 0, t_index: int | None = None, open_right: bool = False
) -> float:
    """``|Y'_s| + ||Y'||_{p,[s,t]} + ||R^Y||_{p/2,[s,t]}``."""
    s, t = _resolve_range(len(cp), s_index, t_index)
    t = max(s, _end(t, open_right))
    head = float(np.linalg.norm(cp.gubinelli[s]))
    return (
        head
        + pvar(cp.gubinelli, p, s, t)
        + remainder_var(cp.y, cp.gubinelli, cp.driver.values, p, s, t)
    )


def _remainder_diff_fn(a: ControlledPath, b: ControlledPath) -> ColumnFn:
    def fn(s, k):
        return remainder_column(a.y, a.gubinelli, a.driver.values, s, k) - remainder_column(
            b.y, b.gubinelli, b.driver.values, s, k
        )

    return fn


def controlled_distance(
    a: ControlledPath, b: ControlledPath, p: float, s_index: int = 0, t_index: int | None = None
) -> float:
    """``|Y'_s - Z'_s| + ||Y' - Z'||_{p,[s,t]} + ||R^Y - R^Z||_{p/2,[s,t]}``.

    The two paths may be controlled by different drivers but must share a grid.
    """
    if not a.grid.same_as(b.grid):
        raise ValueError("controlled paths live on different grids")
    if a.y.shape != b.y.shape or a.gubinelli.shape != b.gubinelli.shape:
        raise ValueError("controlled paths have different shapes")
    s, t = _resolve_range(len(a), s_index, t_index)
    dprime = a.gubinelli - b.gubinelli
    return (
        float(np.linalg.norm(dprime[s]))
        + pvar(dprime, p, s, t)
        + twoparam_var(_remainder_diff_fn(a, b), len(a), p, s, t)
    )


def rough_norm(rp: RoughPath, p: float, s_index: int = 0, t_index: int | None = None) -> float:
    """Inhomogeneous rough path seminorm ``||X||_p + ||XX||_{p/2}``."""
    return pvar(rp.path, p, s_index, t_index) + pvar2(rp, p, s_index, t_index)


def rough_distance(
    a: RoughPath, b: RoughPath, p: float, s_index: int = 0, t_index: int | None = None
) -> float:
    """``||X - Z||_p + ||XX - ZZ||_{p/2}`` with level-2 values Chen-reconstructed."""
    if not a.grid.same_as(b.grid):
        raise ValueError("rough paths live on different grids")
    if a.dim != b.dim:
        raise ValueError("rough paths have different dimensions")
    if not (2 < p < 3):
        raise ValueError(f"p must lie in (2, 3), got {p!r}")
    s, t = _resolve_range(len(a), s_index, t_index)
    gen_a = level2_columns(a, s, t)
    gen_b = level2_columns(b, s, t)
    cache: dict[int, np.ndarray] = {}

    def fn(s_, k):
        # columns are requested in increasing k, so the sweeps stay in step
        while k not in cache:
            ka, la = next(gen_a)
            _, lb = next(gen_b)
            cache.clear()
            cache[ka] = la - lb
        return cache[k]

    return pvar(a.values - b.values, p, s, t) + twoparam_var(fn, len(a), p, s, t)


# ----------------------------------------------------------------- control function


class ControlFunction:
    """``w(s, t) = ||X||_{p,[s,t]}^p + ||XX||_{p/2,[s,t]}^{p/2}`` on grid-index pairs."""

    def __init__(self, rp: RoughPath, p: float):
        if not (2 < p < 3):
            raise ValueError(f"p must lie in (2, 3), got {p!r}")
        self.rp = rp
        self.p = float(p)

    def __call__(self, s: int, t: int) -> float:
        s, t = _resolve_range(len(self.rp), s, t)
        if s == t:
            return 0.0
        return _path_row(self.rp.path, self.p, s).get(t) + _level2_row(
            self.rp, self.p / 2.0, s
        ).get(t)

    def components(self, s: int, t: int) -> tuple[float, float]:
        """``(||X||^p, ||XX||^{p/2})`` on [s, t]."""
        if s == t:
            return 0.0, 0.0
        return _path_row(self.rp.path, self.p, s).get(t), _level2_row(
            self.rp, self.p / 2.0, s
        ).get(t)

    def sweep(self, s: int) -> Iterator[tuple[int, float]]:
        """Yield ``(t, w(s, t))`` for t = s, s+1, ... up to the last grid index."""
        yield s, 0.0
        for t in range(s + 1, len(self.rp)):
            yield t, self(s, t)


def control_w(rp: RoughPath, p: float) -> ControlFunction:
    return ControlFunction(rp, p)
