"""Radial mesh and the tridiagonal sweep (Thomas) solver."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

PIVOT_FLOOR = 1e-30


class SingularSystemError(ArithmeticError):
    """Raised when forward elimination meets a (near-)zero pivot."""

    def __init__(self, row: int, pivot: float):
        super().__init__(f"near-zero pivot {pivot:.3e} at row {row}")
        self.row = row
        self.pivot = pivot


class NonDominantSystemWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RadialMesh:
    """Uniform grid ``r_inner + i*h`` on ``[r_inner, r_outer]``."""

    r_inner: float
    r_outer: float
    n_nodes: int

    @property
    def h(self) -> float:
        return (self.r_outer - self.r_inner) / (self.n_nodes - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        r = self.r_inner + self.h * np.arange(self.n_nodes, dtype=np.float64)
        r[-1] = self.r_outer
        r.setflags(write=False)
        return r

    def node(self, i: int) -> float:
        return float(self.nodes[i])

    def index_of(self, r: float) -> int:
        """Index of the node nearest to ``r``."""
        return int(np.clip(round((r - self.r_inner) / self.h), 0, self.n_nodes - 1))

    def __len__(self) -> int:
        return self.n_nodes


def build_mesh(r_inner: float, r_outer: float, h: float) -> RadialMesh:
    """Build a uniform mesh with spacing ``h``.

    The span must be an integer multiple (at least 2) of ``h``; a relative
    slack of 1e-9 absorbs decimal round-off such as ``1/0.001``.
    """
    if not (h > 0 and math.isfinite(h)):
        raise ValueError(f"mesh spacing must be positive, got h={h!r}")
    if not r_inner < r_outer:
        raise ValueError(f"need r_inner < r_outer, got [{r_inner}, {r_outer}]")
    ratio = (r_outer - r_inner) / h
    cells = round(ratio)
    if abs(ratio - cells) > 1e-9 * max(1.0, ratio):
        raise ValueError(
            f"span {r_outer - r_inner!r} is not an integer multiple of h={h!r} "
            f"(ratio {ratio:.6g})"
        )
    if cells < 2:
        raise ValueError(f"mesh needs at least 3 nodes, h={h!r} gives {cells + 1}")
    return RadialMesh(float(r_inner), float(r_outer), int(cells) + 1)


@dataclass(frozen=True, eq=False)
class TridiagonalSystem:
    """``lower[i-1]*x[i-1] + diag[i]*x[i] + upper[i]*x[i+1] = rhs[i]``."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        if n < 1 or len(self.rhs) != n or len(self.lower) != n - 1 or len(self.upper) != n - 1:
            raise ValueError(
                "inconsistent tridiagonal sizes: "
                f"lower={len(self.lower)}, diag={n}, upper={len(self.upper)}, rhs={len(self.rhs)}"
            )

    @property
    def n(self) -> int:
        return len(self.diag)

    @cached_property
    def diagonally_dominant(self) -> bool:
        """Weak row dominance everywhere, strict in at least one row."""
        off = np.zeros(self.n)
        off[1:] += np.abs(self.lower)
        off[:-1] += np.abs(self.upper)
        d = np.abs(self.diag)
        return bool(np.all(d >= off) and np.any(d > off))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.lower * x[:-1]
        y[:-1] += self.upper * x[1:]
        return y

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)


@njit(cache=True)
def _thomas(lower, diag, upper, rhs, out):
    # returns -1 on success, else the row index of the failing pivot
    n = diag.shape[0]
    c = np.empty(n)
    d = np.empty(n)
    beta = diag[0]
    if abs(beta) < PIVOT_FLOOR:
        return 0
    c[0] = upper[0] / beta if n > 1 else 0.0
    d[0] = rhs[0] / beta
    for i in range(1, n):
        beta = diag[i] - lower[i - 1] * c[i - 1]
        if abs(beta) < PIVOT_FLOOR:
            return i
        c[i] = upper[i] / beta if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / beta
    out[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = d[i] - c[i] * out[i + 1]
    return -1


def sweep_solve(system: TridiagonalSystem, *, check_dominance: bool = True) -> np.ndarray:
    """Solve a tridiagonal system by forward elimination and back substitution.

    No pivoting is done. A system that is not diagonally dominant triggers a
    :class:`NonDominantSystemWarning` (when ``check_dominance``) and is
    solved anyway; a pivot below ``PIVOT_FLOOR`` raises
    :class:`SingularSystemError`.
    """
    if check_dominance and not system.diagonally_dominant:
        warnings.warn(
            f"tridiagonal system of size {system.n} is not diagonally dominant",
            NonDominantSystemWarning,
            stacklevel=2,
        )
    out = np.empty(system.n)
    # empty off-diagonals for n == 1 still need a typed buffer for numba
    lower = np.ascontiguousarray(system.lower, dtype=np.float64)
    upper = np.ascontiguousarray(system.upper, dtype=np.float64)
    if system.n == 1:
        lower = upper = np.zeros(1)
    bad = _thomas(
        lower,
        np.ascontiguousarray(system.diag, dtype=np.float64),
        upper,
        np.ascontiguousarray(system.rhs, dtype=np.float64),
        out,
    )
    if bad >= 0:
        raise SingularSystemError(int(bad), float(_pivot_at(system, bad)))
    return out


def _pivot_at(system: TridiagonalSystem, row: int) -> float:
    beta = system.diag[0]
    c = system.upper[0] / beta if system.n > 1 and beta != 0 else 0.0
    for i in range(1, row + 1):
        beta = system.diag[i] - system.lower[i - 1] * c
        if i < system.n - 1 and beta != 0:
            c = system.upper[i] / beta
    return beta
