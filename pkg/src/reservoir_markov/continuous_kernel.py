"""Continuous-state Moran dam: storage in ``[0, C1 - c0]`` hm³.

One year maps ``z`` and inflow ``y`` to ``min(C1 - c0, max(z + y - c0, 0))``,
so ``P(Z' <= z2 | Z = z1) = G(c0 - z1 + z2)`` below the top and one at the
top. The inflow CDF ``G`` has an atom at zero and is piecewise linear
above it.

The stationary CDF is computed on a node set that contains every point
where it can jump (``top - k c0``), storing both the value and the left
limit at each node. Between nodes it is linear, so the Stieltjes integral
``int G(c0 + z - x) dF(x)`` is exact given that representation: atoms use
``G`` and its left limit, linear pieces use ``Gamma(t) = int_0^t G``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NoConvergenceError, OutOfDomainError, ZeroAtomError
from .moran_finite import DamSpec, as_pmf

MAX_ITER = 100_000


@dataclass(frozen=True)
class InflowCdf:
    """Annual inflow CDF: ``atom0 = P(Y = 0)`` plus a piecewise-linear part.

    ``knots`` and ``values`` describe the CDF on ``[0, knots[-1]]``; the
    first knot is ``(0, atom0)`` and the last value is one.
    """

    atom0: float
    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.array(self.knots, dtype=float, copy=True).reshape(-1)
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        a = float(self.atom0)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"atom0 must lie in [0, 1], got {a}")
        if x.shape != v.shape:
            raise ValueError("knots and values must have the same length")
        if x.size == 0 or x[0] > 0:
            x = np.concatenate([[0.0], x])
            v = np.concatenate([[a], v])
        if x[0] != 0 or abs(v[0] - a) > 1e-12:
            raise ValueError("CDF must start at (0, atom0)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(np.diff(v) < -1e-12) or np.any(v < 0):
            raise ValueError("CDF values must be nondecreasing")
        if abs(v[-1] - 1.0) > 1e-9:
            raise ValueError(f"CDF must reach 1, ends at {v[-1]}")
        v = np.clip(v, 0.0, 1.0)
        v[-1] = 1.0
        v = np.maximum.accumulate(v)
        # cumulative integral of G at the knots
        area = np.concatenate([[0.0], np.cumsum(np.diff(x) * (v[1:] + v[:-1]) / 2.0)])
        for arr in (x, v, area):
            arr.setflags(write=False)
        object.__setattr__(self, "atom0", a)
        object.__setattr__(self, "knots", x)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_area", area)

    @classmethod
    def from_interval_pmf(cls, p, c0: float) -> "InflowCdf":
        """Spread a discretized pmf back over its intervals.

        Mass ``p_0`` stays at zero and ``p_j`` (``j >= 1``) is uniform on
        ``((j - 1/2) c0, (j + 1/2) c0]``.
        """
        p = as_pmf(p)
        x = [0.0, 0.5 * c0]
        v = [p[0], p[0]]
        acc = p[0]
        for j in range(1, len(p)):
            acc += p[j]
            x.append((j + 0.5) * c0)
            v.append(acc)
        return cls(p[0], np.asarray(x), np.minimum(np.asarray(v), 1.0))

    @classmethod
    def point_mass_zero(cls) -> "InflowCdf":
        return cls(1.0, np.array([0.0, 1.0]), np.array([1.0, 1.0]))

    def _require_atom(self):
        if self.atom0 <= 0:
            raise ZeroAtomError("P(Y = 0) must be positive")

    def __call__(self, t):
        """``G(t) = P(Y <= t)``, zero for negative ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.knots, self.values)
        return np.where(t < 0, 0.0, out)

    def left(self, t):
        """``P(Y < t)``; differs from ``G`` only at ``t = 0``."""
        t = np.asarray(t, dtype=float)
        return np.where(t <= 0, 0.0, np.interp(t, self.knots, self.values))

    def integral(self, t):
        """``Gamma(t) = int_0^t G(s) ds`` (zero for ``t <= 0``)."""
        t = np.asarray(t, dtype=float)
        x, v, area = self.knots, self.values, self._area
        tc = np.clip(t, 0.0, x[-1])
        i = np.clip(np.searchsorted(x, tc, side="right") - 1, 0, x.size - 2)
        dx = tc - x[i]
        slope = (v[i + 1] - v[i]) / (x[i + 1] - x[i])
        inside = area[i] + v[i] * dx + 0.5 * slope * dx**2
        beyond = np.maximum(t - x[-1], 0.0)
        return np.where(t <= 0, 0.0, inside + beyond)

    def mean(self) -> float:
        return float(self.knots[-1] - self._area[-1])

    def sample(self, u):
        """Inverse CDF: zero with probability ``atom0``, otherwise interpolate."""
        u = np.asarray(u, dtype=float)
        x, v = self.knots, self.values
        i = np.clip(np.searchsorted(v, u, side="left"), 1, v.size - 1)
        frac = (u - v[i - 1]) / np.maximum(v[i] - v[i - 1], 1e-300)
        y = x[i - 1] + frac * (x[i] - x[i - 1])
        return np.where(u < self.atom0, 0.0, y)


@dataclass(frozen=True)
class ContinuousDam:
    inflow: InflowCdf
    spec: DamSpec


@dataclass(frozen=True)
class GridCdf:
    """Piecewise-linear CDF with jumps at the nodes.

    ``values[i] = F(grid[i])`` and ``left[i] = F(grid[i]-)``; ``F`` is
    linear from ``values[i]`` to ``left[i+1]`` on each cell. The atoms at
    zero and at the top are ``values[0]`` and ``1 - left[-1]``.
    """

    grid: np.ndarray
    values: np.ndarray
    left: np.ndarray
    iterations: int = 0
    residual: float = float("nan")

    def __post_init__(self):
        for name in ("grid", "values", "left"):
            a = np.array(getattr(self, name), dtype=float, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    @property
    def atom_zero(self) -> float:
        return float(self.values[0])

    @property
    def atom_top(self) -> float:
        return float(1.0 - self.left[-1])

    def __call__(self, z):
        """``F(z)`` (right-continuous)."""
        z = np.asarray(z, dtype=float)
        x = self.grid
        i = np.clip(np.searchsorted(x, z, side="right") - 1, 0, x.size - 1)
        j = np.minimum(i + 1, x.size - 1)
        width = np.where(j > i, x[j] - x[i], 1.0)
        frac = np.where(j > i, (z - x[i]) / width, 0.0)
        out = self.values[i] + frac * (self.left[j] - self.values[i])
        return np.where(z < x[0], 0.0, np.where(z >= x[-1], 1.0, out))

    def mean(self) -> float:
        """``int x dF(x)``: atoms plus the linear pieces (midpoint times mass)."""
        x = self.grid
        jumps = self.values - self.left
        cell_mass = self.left[1:] - self.values[:-1]
        return float(x @ jumps + ((x[1:] + x[:-1]) / 2.0) @ cell_mass)

    def to_csv(self, path) -> None:
        """Two columns ``x,F``; a jump shows as a repeated ``x`` with the left limit first."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,F\n")
            for x, l, r in zip(self.grid, self.left, self.values):
                if r - l > 0:
                    fh.write(f"{x!r},{l!r}\n")
                fh.write(f"{x!r},{r!r}\n")


def kernel_cdf(z1: float, z2: float, G: InflowCdf, spec: DamSpec) -> float:
    """``P(Z_{n+1} <= z2 | Z_n = z1)``.

    Raises
    ------
    OutOfDomainError
        If either storage lies outside ``[0, C1 - c0]``.
    """
    top = spec.top
    for v in (z1, z2):
        if not 0.0 <= v <= top:
            raise OutOfDomainError(f"storage {v} outside [0, {top}]")
    if z2 >= top:
        return 1.0
    return float(G(spec.c0 - z1 + z2))


def doeblin_certificate(G: InflowCdf, spec: DamSpec) -> tuple[int, float]:
    """Minorization constants ``(n0, delta)`` with ``n0 = k + 1`` and ``delta = atom0**k``.

    ``k = floor((C1 - c0) / c0)`` empty years drain any storage.
    """
    G._require_atom()
    k = int(math.floor((spec.C1 - spec.c0) / spec.c0 + 1e-12))
    return k + 1, G.atom0**k


def stationary_nodes(spec: DamSpec, grid_size: int) -> np.ndarray:
    """Uniform grid on ``[0, top]`` merged with the possible jump points ``top - k c0``."""
    top = spec.top
    base = np.linspace(0.0, top, grid_size + 1)
    k = np.arange(1, int(top / spec.c0) + 2)
    jumps = top - k * spec.c0
    jumps = jumps[jumps > 0]
    nodes = np.unique(np.concatenate([base, jumps]))
    # drop nodes that nearly duplicate a jump point
    keep = np.ones(nodes.size, dtype=bool)
    scale = top / grid_size
    for j in jumps:
        close = np.flatnonzero((np.abs(nodes - j) < 1e-9 * scale) & (nodes != j))
        keep[close] = False
    return nodes[keep]


def _operator(G: InflowCdf, spec: DamSpec, x: np.ndarray):
    """Linear maps from ``(values, left)`` at the nodes to the next iterate."""
    c0 = spec.c0
    t = c0 + x[:, None] - x[None, :]
    dx = np.diff(x)
    g_right = G(t)
    g_left = G.left(t)
    gam = G.integral(t)
    # contribution of cell i: slope_i (Gamma(t_i) - Gamma(t_{i+1})), slope_i = (left[i+1] - values[i]) / dx_i
    cell = (gam[:, :-1] - gam[:, 1:]) / dx[None, :]
    m = x.size

    def build(g_atom):
        # F' = sum_i (values_i - left_i) g_atom[:, i] + sum_i cell_i (left_{i+1} - values_i)
        A_val = g_atom.copy()
        A_val[:, :-1] -= cell
        A_left = -g_atom
        A_left[:, 1:] += cell
        return A_val, A_left

    Rv, Rl = build(g_right)
    Lv, Ll = build(g_left)
    return (Rv, Rl, Lv, Ll), m


def _apply(ops, values, left):
    Rv, Rl, Lv, Ll = ops
    new_v = Rv @ values + Rl @ left
    new_l = Lv @ values + Ll @ left
    new_v[-1] = 1.0
    new_l[0] = 0.0
    np.clip(new_v, 0.0, 1.0, out=new_v)
    np.clip(new_l, 0.0, 1.0, out=new_l)
    return new_v, new_l


def stationary_cdf(
    G: InflowCdf,
    spec: DamSpec,
    grid_size: int = 512,
    tol: float = 1e-10,
    z_init: float = 0.0,
    max_iter: int = MAX_ITER,
) -> GridCdf:
    """Fixed point of ``F(z) = int_0^{C1-c0} G(c0 + z - x) dF(x)``.

    Starts from a point mass at ``z_init`` (snapped to the nearest node) and
    iterates until successive iterates differ by less than ``tol`` in sup
    norm.

    Raises
    ------
    ZeroAtomError
        If ``P(Y = 0) = 0``.
    NoConvergenceError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    G._require_atom()
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    if not 0.0 <= z_init <= spec.top:
        raise OutOfDomainError(f"z_init {z_init} outside [0, {spec.top}]")
    x = stationary_nodes(spec, grid_size)
    ops, m = _operator(G, spec, x)
    k0 = int(np.argmin(np.abs(x - z_init)))
    values = (np.arange(m) >= k0).astype(float)
    left = (np.arange(m) > k0).astype(float)
    for it in range(1, max_iter + 1):
        nv, nl = _apply(ops, values, left)
        change = max(np.max(np.abs(nv - values)), np.max(np.abs(nl - left)))
        values, left = nv, nl
        if change < tol:
            break
    else:
        raise NoConvergenceError(f"no convergence to tol={tol} in {max_iter} iterations")
    rv, rl = _apply(ops, values, left)
    residual = float(max(np.max(np.abs(rv - values)), np.max(np.abs(rl - left))))
    return GridCdf(x, values, left, iterations=it, residual=residual)


def fixed_point_residual(F: GridCdf, G: InflowCdf, spec: DamSpec) -> float:
    """Sup-norm distance between ``F`` and one application of the integral operator, at the nodes."""
    ops, _ = _operator(G, spec, np.asarray(F.grid))
    rv, rl = _apply(ops, np.array(F.values), np.array(F.left))
    return float(max(np.max(np.abs(rv - F.values)), np.max(np.abs(rl - F.left))))
