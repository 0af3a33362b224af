"""Grids, sampled càdlàg paths, level-2 rough paths and controlled paths.

A sampled path is embedded as a piecewise-constant càdlàg path: it is
constant on every cell ``[t_k, t_{k+1})`` and carries all of its variation
at the grid points, so the left limit at ``t_k`` is the value at
``t_{k-1}``.  Level-2 increments are stored per cell only; the value on an
arbitrary pair of grid indices is always rebuilt through Chen's relation.

All two-parameter objects are addressed by grid *indices*, never by times.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

__all__ = [
    "Grid",
    "SampledPath",
    "RoughPath",
    "ControlledPath",
    "chen_reconstruct",
    "level2_columns",
    "remainder",
    "restrict",
    "ito_lift",
    "geometric_lift",
    "write_path_csv",
    "read_path_csv",
    "write_rough_path",
    "read_rough_path",
    "format_float",
]


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_range(n: int, s: int, t: int) -> None:
    if not (0 <= s < n and 0 <= t < n):
        raise IndexError(f"index range [{s}, {t}] outside grid with {n} points")
    if s > t:
        raise IndexError(f"empty index range [{s}, {t}]")


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing finite set of time points."""

    times: np.ndarray

    def __post_init__(self):
        times = _readonly(self.times)
        if times.ndim != 1 or times.size < 1:
            raise ValueError("grid needs a one-dimensional, non-empty array of times")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("grid times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float, n_cells: int, start: float = 0.0) -> "Grid":
        # times are integer multiples of the step so that delays stay aligned
        step = (horizon - start) / n_cells
        return cls(start + step * np.arange(n_cells + 1))

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_cells(self) -> int:
        return self.times.size - 1

    @property
    def step(self) -> float:
        """Step of a uniform grid; raises if the grid is not uniform."""
        dt = np.diff(self.times)
        if dt.size == 0:
            raise ValueError("single-point grid has no step")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid is not uniform")
        return float((self.times[-1] - self.times[0]) / dt.size)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the grid point equal to ``t`` (within ``tol`` times the step)."""
        k = int(np.searchsorted(self.times, t))
        scale = tol * max(1.0, abs(t))
        for cand in (k - 1, k):
            if 0 <= cand < len(self) and abs(self.times[cand] - t) <= scale:
                return cand
        raise ValueError(f"time {t!r} is not a grid point")

    def restrict(self, s: int, t: int) -> "Grid":
        _check_range(len(self), s, t)
        return Grid(self.times[s : t + 1])

    def same_as(self, other: "Grid") -> bool:
        return self is other or (
            len(self) == len(other) and bool(np.array_equal(self.times, other.times))
        )


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Path with values in R^d observed on a grid."""

    grid: Grid
    values: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != len(self.grid):
            raise ValueError(
                f"values of shape {values.shape} do not match a grid of {len(self.grid)} points"
            )
        object.__setattr__(self, "values", _readonly(values))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self) -> int:
        return self.values.shape[0]

    def increment(self, s: int, t: int) -> np.ndarray:
        _check_range(len(self), min(s, t), max(s, t))
        return self.values[t] - self.values[s]

    def left_limit(self, k: int) -> np.ndarray:
        """Value of ``X_{t_k-}``; at the first grid point this is the value itself."""
        return self.values[max(k - 1, 0)]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


@dataclass(frozen=True, eq=False)
class RoughPath:
    """Level-2 rough path: a sampled path plus one d x d matrix per cell."""

    path: SampledPath
    cells: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        d = self.path.dim
        cells = np.array(self.cells, dtype=float)
        if cells.shape != (len(self.path) - 1, d, d):
            raise ValueError(
                f"expected cells of shape {(len(self.path) - 1, d, d)}, got {cells.shape}"
            )
        object.__setattr__(self, "cells", _readonly(cells))

    @property
    def grid(self) -> Grid:
        return self.path.grid

    @property
    def dim(self) -> int:
        return self.path.dim

    @property
    def values(self) -> np.ndarray:
        return self.path.values

    @property
    def times(self) -> np.ndarray:
        return self.path.grid.times

    def __len__(self) -> int:
        return len(self.path)

    def level2(self, s: int, t: int) -> np.ndarray:
        return chen_reconstruct(self, s, t)


@dataclass(frozen=True, eq=False)
class ControlledPath:
    """Pair (Y, Y') controlled by a driver X on the driver's grid.

    ``y`` has shape ``(n, *value_shape)`` and ``gubinelli`` has shape
    ``(n, *value_shape, d)``: the last axis of the Gubinelli derivative is
    the direction of the driver increment it acts on.
    """

    driver: SampledPath
    y: np.ndarray
    gubinelli: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        yp = np.array(self.gubinelli, dtype=float)
        n, d = len(self.driver), self.driver.dim
        if y.shape[0] != n:
            raise ValueError(f"controlled path has {y.shape[0]} points, driver has {n}")
        if yp.shape != y.shape + (d,):
            raise ValueError(
                f"Gubinelli derivative must have shape {y.shape + (d,)}, got {yp.shape}"
            )
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "gubinelli", _readonly(yp))

    @property
    def grid(self) -> Grid:
        return self.driver.grid

    @property
    def value_shape(self) -> tuple:
        return self.y.shape[1:]

    def __len__(self) -> int:
        return self.y.shape[0]

    @classmethod
    def constant(cls, driver: SampledPath, value) -> "ControlledPath":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        n = len(driver)
        y = np.broadcast_to(value, (n,) + value.shape)
        return cls(driver, y, np.zeros((n,) + value.shape + (driver.dim,)))


def chen_reconstruct(rp: RoughPath, s_index: int, t_index: int) -> np.ndarray:
    """Level-2 increment on ``[t_s, t_t]`` by left-to-right Chen accumulation."""
    n = len(rp)
    _check_range(n, s_index, t_index)
    d = rp.dim
    if s_index == t_index:
        return np.zeros((d, d))
    x = rp.values
    ks = np.arange(s_index, t_index)
    dx = x[ks + 1] - x[ks]
    lag = x[ks] - x[s_index]
    terms = rp.cells[ks] + lag[:, :, None] * dx[:, None, :]
    return np.add.accumulate(terms, axis=0)[-1]


def level2_columns(rp: RoughPath, s: int, t: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(k, L)`` for k = s+1..t where ``L[j - s]`` is the level-2 increment on [j, k].

    Uses the same accumulation order as :func:`chen_reconstruct`, so every
    entry is bitwise equal to the corresponding single-pair reconstruction.
    """
    _check_range(len(rp), s, t)
    x, cells = rp.values, rp.cells
    d = rp.dim
    state = np.zeros((0, d, d))
    for k in range(s, t):
        starts = np.arange(s, k + 1)
        dx = x[k + 1] - x[k]
        lag = x[k] - x[starts]
        terms = cells[k] + lag[:, :, None] * dx[None, None, :]
        if state.shape[0]:
            state = np.concatenate([state + terms[:-1], terms[-1:]], axis=0)
        else:
            state = terms
        yield k + 1, state


def remainder(cp: ControlledPath, s_index: int, t_index: int) -> np.ndarray:
    """``R_{s,t} = Y_{s,t} - Y'_s X_{s,t}``."""
    _check_range(len(cp), s_index, t_index)
    dx = cp.driver.values[t_index] - cp.driver.values[s_index]
    return cp.y[t_index] - cp.y[s_index] - cp.gubinelli[s_index] @ dx


def remainder_column(cp_y: np.ndarray, cp_yp: np.ndarray, x: np.ndarray, s: int, k: int) -> np.ndarray:
    """Remainders ``R_{j,k}`` for all j in [s, k), as an array of shape (k - s, *value_shape)."""
    dx = x[k] - x[s:k]
    lin = np.einsum("j...c,jc->j...", cp_yp[s:k], dx)
    return cp_y[k] - cp_y[s:k] - lin


def restrict(obj, s_index: int, t_index: int):
    """Sub-object on the index range ``[s_index, t_index]`` with identical values."""
    if isinstance(obj, Grid):
        return obj.restrict(s_index, t_index)
    _check_range(len(obj), s_index, t_index)
    sl = slice(s_index, t_index + 1)
    if isinstance(obj, SampledPath):
        return SampledPath(obj.grid.restrict(s_index, t_index), obj.values[sl])
    if isinstance(obj, RoughPath):
        return RoughPath(restrict(obj.path, s_index, t_index), obj.cells[s_index:t_index])
    if isinstance(obj, ControlledPath):
        return ControlledPath(
            restrict(obj.driver, s_index, t_index), obj.y[sl], obj.gubinelli[sl]
        )
    raise TypeError(f"cannot restrict object of type {type(obj).__name__}")


def ito_lift(path: SampledPath) -> RoughPath:
    """Lift with zero cell areas.

    Under the piecewise-constant embedding the left-point (Itô) iterated
    integral over a single cell vanishes, so coarse level-2 values are
    exactly the left-point sums rebuilt by Chen's relation.
    """
    d = path.dim
    return RoughPath(path, np.zeros((len(path) - 1, d, d)))


def geometric_lift(path: SampledPath) -> RoughPath:
    """Lift of the piecewise-linear interpolation: cells ``dX (x) dX / 2``.

    Exact for a driver that is linear in time, e.g. ``X_t = t``.
    """
    dx = path.increments()
    return RoughPath(path, 0.5 * dx[:, :, None] * dx[:, None, :])


# ---------------------------------------------------------------- file formats


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_path_csv(path: SampledPath, file) -> None:
    """CSV with header ``t,x1,...,xd``; floats written with 17 significant digits."""
    file = Path(file)
    header = ["t"] + [f"x{i + 1}" for i in range(path.dim)]
    with file.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, row in zip(path.times, path.values):
            writer.writerow([format_float(t)] + [format_float(v) for v in row])


def read_path_csv(file) -> SampledPath:
    with Path(file).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{file}: empty path file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t" or len(header) < 2:
        raise ValueError(f"{file}: header must be 't, x1, ..., xd'")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{file}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{file}: ragged rows")
    return SampledPath(Grid(data[:, 0]), data[:, 1:])


def _json_array(a) -> str:
    a = np.asarray(a)
    if a.ndim == 1:
        return "[" + ", ".join(format_float(v) for v in a) + "]"
    return "[" + ", ".join(_json_array(row) for row in a) + "]"


def write_rough_path(rp: RoughPath, file) -> None:
    """JSON document with ``times``, ``values`` and row-major ``cells``."""
    n = len(rp.cells)
    flat = rp.cells.reshape(n, -1)
    text = (
        "{\n"
        f'  "times": {_json_array(rp.grid.times)},\n'
        f'  "values": {_json_array(rp.values)},\n'
        f'  "cells": {_json_array(flat) if n else "[]"}\n'
        "}\n"
    )
    Path(file).write_text(text)


def read_rough_path(file) -> RoughPath:
    doc = json.loads(Path(file).read_text())
    try:
        times = np.array(doc["times"], dtype=float)
        values = np.array(doc["values"], dtype=float)
        cells = np.array(doc["cells"], dtype=float)
    except KeyError as exc:
        raise ValueError(f"{file}: missing field {exc}") from exc
    path = SampledPath(Grid(times), values)
    d = path.dim
    return RoughPath(path, cells.reshape(len(times) - 1, d, d))
