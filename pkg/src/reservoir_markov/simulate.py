"""Seeded Monte Carlo for every model flavour, plus estimators with standard errors.

Each path ``k`` draws from its own ``SFC64`` stream whose 256-bit state is
read from a Philox counter stream keyed by ``seed``, at counter
``(k mod 1024, 0, k // 1024, stream)``. The mapping from path to stream is
fixed, so results do not depend on how paths are split across worker
threads. The per-path loops are numba kernels; long runs draw the path's
uniforms in one call and pass the buffer in.

Discrete models work in index units with integer arithmetic; one step is
``t = z + y``, ``released = min(t, 1)``, ``spill = max(t - 1 - cap, 0)``,
``z' = t - released - spill``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from numba import njit

from .chain_core import TransitionMatrix, as_mass, stationary_distribution
from .continuous_kernel import ContinuousDam
from .dependability import EmptyClass
from .exceptions import InvalidModelError, InvalidStartError, NoConvergenceError, UnknownMetricError
from .lloyd_joint import JointChain, joint_stationary
from .resilience import ResiliencePartition
from .semi_infinite import SemiInfiniteDam, stationary_solution

METRICS = (
    "occupancy",
    "reliability",
    "availability",
    "mtte",
    "mtto",
    "loss_rate",
    "safety",
    "resistant_resilience",
    "recovery_resilience",
    "clt_variance",
)

NO_CAP = 2**62
HIT_CAP = 10**8


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n_paths: int
    horizon: int
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1 or self.horizon < 1:
            raise ValueError("n_paths and horizon must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class Trajectory:
    """One path: ``z`` has ``horizon + 1`` entries, the others ``horizon``."""

    z: np.ndarray
    y: np.ndarray
    spill: np.ndarray
    released: np.ndarray

    def conservation_residual(self) -> np.ndarray:
        return self.z[1:] - (self.z[:-1] + self.y - self.released - self.spill)


# -- kernels ----------------------------------------------------------------

@njit(nogil=True, cache=True)
def _draw(gen, cum):
    u = gen.random()
    j = 0
    for c in range(cum.shape[0] - 1):
        j += u >= cum[c]
    return j


@njit(nogil=True, cache=True, inline="always")
def _next(z, y, cap):
    """Storage after one step and the spill, without data-dependent branches."""
    nz = max(z + y - 1, 0)
    sp = max(nz - cap, 0)
    return nz - sp, sp


@njit(nogil=True, cache=True)
def _draw_start(gen, cum):
    k = np.searchsorted(cum, gen.random(), side="right")
    return min(k, cum.shape[0] - 1)


@njit(nogil=True, cache=True)
def _discrete_path(gen, rows, sz, sy, scum, cap, z, y, rel, spill):
    k = _draw_start(gen, scum)
    zc = sz[k]
    yc = sy[k]
    markov = 1 if rows.shape[0] > 1 else 0
    n = y.shape[0]
    for i in range(n):
        z[i] = zc
        y[i] = yc
        t = zc + yc
        r = 1 if t >= 1 else 0
        nz = t - r
        s = nz - cap if nz > cap else 0
        rel[i] = r
        spill[i] = s
        zc = nz - s
        yc = _draw(gen, rows[yc * markov])
    z[n] = zc


@njit(nogil=True, cache=True)
def _fill_inflows(U, rows, y0, out):
    """``out[k] = Y_k`` with ``Y_0 = y0`` and ``U[k]`` driving ``Y_k`` for ``k >= 1``."""
    out[0] = y0
    if rows.shape[0] == 1:
        row = rows[0]
        for k in range(1, out.shape[0]):
            u = U[k]
            y = 0
            for c in range(row.shape[0] - 1):
                y += u >= row[c]
            out[k] = y
    else:
        y = y0
        for k in range(1, out.shape[0]):
            y = _pick(U[k], rows, y)
            out[k] = y


@njit(nogil=True, cache=True)
def _discrete_counts(U, rows, sz, sy, scum, cap, counts, ybuf):
    """``counts[i, z] += 1`` when ``Z_i = z`` (levels beyond the table are ignored).

    ``U[0]`` picks the start and ``U[1:]`` the inflows; ``ybuf`` is scratch
    space of the same length as ``counts``.
    """
    k = min(np.searchsorted(scum, U[0], side="right"), scum.shape[0] - 1)
    _fill_inflows(U, rows, sy[k], ybuf)
    zc = sz[k]
    width = counts.shape[1]
    for i in range(counts.shape[0]):
        counts[i, min(zc, width - 1)] += zc < width
        zc, _ = _next(zc, ybuf[i], cap)


@njit(nogil=True, cache=True)
def _discrete_hit(gen, rows, sz, sy, scum, cap, target, counted, max_steps):
    """First ``n >= 1`` with ``Z_n`` in ``target`` (-1 if beyond ``max_steps``) and visits to ``counted`` before it."""
    k = _draw_start(gen, scum)
    zc = sz[k]
    yc = sy[k]
    width = target.shape[0]
    markov = 1 if rows.shape[0] > 1 else 0
    visits = 0
    for i in range(1, max_steps + 1):
        zc, _ = _next(zc, yc, cap)
        if zc < width:
            if target[zc]:
                return i, visits
            if counted[zc]:
                visits += 1
        yc = _draw(gen, rows[yc * markov])
    return -1, visits


@njit(nogil=True, cache=True)
def _pick(u, rows, r):
    """Inverse-CDF draw from row ``r`` of a cumulative table."""
    j = 0
    for c in range(rows.shape[1] - 1):
        j += u >= rows[r, c]
    return j


@njit(nogil=True, cache=True)
def _sums_iid(U, row, z, y, cap, vals):
    width = vals.shape[0]
    sv = 0.0
    ss = 0
    sg = 0
    for i in range(U.shape[0] - 1):
        if width > 0:
            sv += vals[min(z, width - 1)]
        else:
            sv += z
        sg += y - min(z, 1)
        z, sp = _next(z, y, cap)
        ss += sp
        # Y_{k+1} does not depend on Y_k, which keeps the loop free of a serial chain
        u = U[i + 1]
        y = 0
        for c in range(row.shape[0] - 1):
            y += u >= row[c]
    return sv, float(ss), float(sg)


@njit(nogil=True, cache=True)
def _sums_markov(U, rows, z, y, cap, vals):
    width = vals.shape[0]
    sv = 0.0
    ss = 0
    sg = 0
    for i in range(U.shape[0] - 1):
        if width > 0:
            sv += vals[min(z, width - 1)]
        else:
            sv += z
        sg += y - min(z, 1)
        z, sp = _next(z, y, cap)
        ss += sp
        y = _pick(U[i + 1], rows, y)
    return sv, float(ss), float(sg)


@njit(nogil=True, cache=True)
def _discrete_sums(U, rows, sz, sy, scum, cap, vals):
    """``(sum v(Z_k), sum spill_k, sum (Y_k - 1{Z_k > 0}))`` over ``k < len(U) - 1``.

    ``U`` holds the path's uniforms: ``U[0]`` picks the start, ``U[k+1]``
    the inflow ``Y_{k+1}``. ``v(z) = z`` when ``vals`` is empty.
    """
    k = min(np.searchsorted(scum, U[0], side="right"), scum.shape[0] - 1)
    if rows.shape[0] == 1:
        return _sums_iid(U, rows[0], sz[k], sy[k], cap, vals)
    return _sums_markov(U, rows, sz[k], sy[k], cap, vals)


@njit(nogil=True, cache=True)
def _cont_draw(gen, atom0, knots, cvals):
    u = gen.random()
    if u < atom0:
        return 0.0
    i = np.searchsorted(cvals, u, side="left")
    if i < 1:
        i = 1
    if i > cvals.shape[0] - 1:
        i = cvals.shape[0] - 1
    w = cvals[i] - cvals[i - 1]
    frac = (u - cvals[i - 1]) / w if w > 0 else 0.0
    return knots[i - 1] + frac * (knots[i] - knots[i - 1])


@njit(nogil=True, cache=True)
def _cont_path(gen, atom0, knots, cvals, c0, top, z0, z, y, rel, spill):
    zc = z0
    for i in range(y.shape[0]):
        yc = _cont_draw(gen, atom0, knots, cvals)
        z[i] = zc
        y[i] = yc
        t = zc + yc
        r = c0 if t >= c0 else t
        s = t - r - top if t - r > top else 0.0
        rel[i] = r
        spill[i] = s
        zc = t - r - s
    z[y.shape[0]] = zc


@njit(nogil=True, cache=True)
def _cont_final(U, atom0, knots, cvals, c0, top, z0):
    """Storage after ``len(U)`` steps; ``U[k]`` drives the inflow of step ``k``."""
    zc = z0
    m = cvals.shape[0]
    for k in range(U.shape[0]):
        u = U[k]
        # branchless inverse CDF: count knots below u, interpolate, then apply the atom
        i = 0
        for c in range(m):
            i += cvals[c] < u
        i = min(max(i, 1), m - 1)
        w = cvals[i] - cvals[i - 1]
        frac = (u - cvals[i - 1]) / max(w, 1e-300)
        y = (knots[i - 1] + frac * (knots[i] - knots[i - 1])) * (u >= atom0)
        zc = min(max(zc + y - c0, 0.0), top)
    return zc


@njit(nogil=True, cache=True)
def _discrete_final(U, rows, sz, sy, scum, cap, ybuf):
    """Storage after ``len(ybuf)`` steps, with uniforms laid out as in :func:`_discrete_counts`."""
    k = min(np.searchsorted(scum, U[0], side="right"), scum.shape[0] - 1)
    _fill_inflows(U, rows, sy[k], ybuf)
    zc = sz[k]
    for i in range(ybuf.shape[0]):
        zc, _ = _next(zc, ybuf[i], cap)
    return zc


@njit(nogil=True, cache=True)
def _chain_sums(U, rows, scum, vals):
    x = min(np.searchsorted(scum, U[0], side="right"), scum.shape[0] - 1)
    s = 0.0
    for i in range(U.shape[0] - 1):
        s += vals[x]
        x = _pick(U[i + 1], rows, x)
    return s


# -- orchestration ----------------------------------------------------------

BLOCK = 1024  # paths per Philox counter block


class PathStreams:
    """Reusable per-path generators for one ``(seed, stream)`` pair.

    ``streams(k)`` reseeds and returns the same :class:`numpy.random.Generator`
    object, so draw from it before asking for the next path. Not thread-safe;
    use one instance per thread.
    """

    def __init__(self, seed: int, stream: int):
        self.key = np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)
        self.stream = int(stream)
        self._block = -1
        self._words = None
        self._sfc = np.random.SFC64(0)
        self._state = self._sfc.state
        self.gen = np.random.Generator(self._sfc)

    def __call__(self, path: int) -> np.random.Generator:
        b, r = divmod(int(path), BLOCK)
        if b != self._block:
            ph = np.random.Philox(key=self.key, counter=np.array([0, 0, b, self.stream], dtype=np.uint64))
            self._words = ph.random_raw(4 * BLOCK).reshape(BLOCK, 4)
            self._block = b
        self._state["state"]["state"] = self._words[r]
        self._state["has_uint32"] = 0
        self._state["uinteger"] = 0
        self._sfc.state = self._state
        return self.gen


def path_generator(seed: int, stream: int, path: int) -> np.random.Generator:
    """A fresh generator positioned at the start of path ``path`` of ``stream``."""
    bg = np.random.SFC64(0)
    bg.state = PathStreams(seed, stream)(path).bit_generator.state
    return np.random.Generator(bg)


def _run(cfg: SimConfig, stream: int, body: Callable[..., None]) -> None:
    """Call ``body(path, generator, chunk)`` for every path.

    Paths are split into ``cfg.workers`` contiguous chunks run on threads;
    ``chunk`` lets a body keep per-thread accumulators.
    """
    edges = np.linspace(0, cfg.n_paths, cfg.workers + 1).astype(int)

    def run_chunk(c):
        streams = PathStreams(cfg.seed, stream)
        for k in range(edges[c], edges[c + 1]):
            body(k, streams(k), c)

    if cfg.workers == 1:
        run_chunk(0)
        return
    with ThreadPoolExecutor(cfg.workers) as ex:
        list(ex.map(run_chunk, range(cfg.workers)))


def _cumulative(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    c = np.cumsum(p) / p.sum()
    nz = np.flatnonzero(p > 0)
    c[nz[-1]:] = 1.0
    return c


@dataclass(frozen=True)
class _Discrete:
    rows: np.ndarray  # cumulative inflow rows; one shared row for i.i.d. inflows
    pi_y: np.ndarray
    cap: int
    C: int | None
    labels: tuple

    def start_fixed(self, z0: int):
        ys = np.arange(self.pi_y.size)
        return np.full(ys.size, z0, dtype=np.int64), ys.astype(np.int64), _cumulative(self.pi_y)

    def state_index(self, z) -> int:
        if isinstance(z, (int, np.integer)) and not isinstance(z, bool):
            i = int(z)
        elif str(z) in self.labels:
            i = self.labels.index(str(z))
        else:
            raise InvalidStartError(f"unknown storage state {z!r}")
        if i < 0 or (self.C is not None and i >= self.C):
            raise InvalidStartError(f"storage index {i} outside the state space")
        return i


def _prepare_joint(chain: JointChain) -> tuple[_Discrete, tuple]:
    if chain.iid:
        rows = _cumulative(chain.inflow.p)[None, :]
    else:
        rows = np.array([_cumulative(r) for r in chain.inflow_rows()])
    d = _Discrete(rows, chain.inflow_stationary(), chain.C - 1, chain.C, chain.storage_labels())
    pi, _, _ = joint_stationary(chain)
    m = np.asarray(pi.mass)
    start = (chain.storage_of().astype(np.int64), chain.inflow_of().astype(np.int64), _cumulative(m))
    return d, start


def _prepare_semi(dam: SemiInfiniteDam) -> tuple[_Discrete, tuple]:
    p = dam.inflow.p
    rows = _cumulative(p)[None, :]
    d = _Discrete(rows, np.asarray(p), NO_CAP, None, ())
    try:
        sol = stationary_solution(dam.inflow)
        pz = sol.pi / sol.pi.sum()
    except Exception:  # unstable or degenerate: no stationary start available
        return d, None
    zz, yy = np.meshgrid(np.arange(pz.size), np.arange(p.size), indexing="ij")
    m = np.outer(pz, p).reshape(-1)
    return d, (zz.reshape(-1).astype(np.int64), yy.reshape(-1).astype(np.int64), _cumulative(m))


def _prepare(model):
    if isinstance(model, JointChain):
        return _prepare_joint(model)
    if isinstance(model, SemiInfiniteDam):
        return _prepare_semi(model)
    raise InvalidModelError(f"unsupported model type {type(model).__name__}")


def simulate(model, z0, cfg: SimConfig) -> Iterator[Trajectory]:
    """Yield one :class:`Trajectory` per path, in path order.

    ``model`` is a :class:`JointChain` (finite dam, i.i.d. or Markov
    inflows), a :class:`SemiInfiniteDam` or a :class:`ContinuousDam`.
    Inflow ``Y_0`` is drawn from its stationary law.

    Raises
    ------
    InvalidStartError
    """
    n = cfg.horizon
    if isinstance(model, ContinuousDam):
        z0 = float(z0)
        if not 0.0 <= z0 <= model.spec.top:
            raise InvalidStartError(f"z0 {z0} outside [0, {model.spec.top}]")
        G = model.inflow
        args = (G.atom0, np.asarray(G.knots), np.asarray(G.values), model.spec.c0, model.spec.top, z0)
        streams = PathStreams(cfg.seed, 0)
        for k in range(cfg.n_paths):
            z = np.empty(n + 1)
            y, rel, spill = np.empty(n), np.empty(n), np.empty(n)
            _cont_path(streams(k), *args, z, y, rel, spill)
            yield Trajectory(z, y, spill, rel)
        return
    d, _ = _prepare(model)
    start = d.start_fixed(d.state_index(z0))
    streams = PathStreams(cfg.seed, 0)
    for k in range(cfg.n_paths):
        z = np.empty(n + 1, dtype=np.int64)
        y, rel, spill = (np.empty(n, dtype=np.int64) for _ in range(3))
        _discrete_path(streams(k), d.rows, *start, d.cap, z, y, rel, spill)
        yield Trajectory(z, y, spill, rel)


def write_trajectories_csv(trajectories, path) -> None:
    """CSV with columns ``path,n,y,z,released,spill`` (``z`` is the storage at the start of step ``n``)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "n", "y", "z", "released", "spill"])
        for k, tr in enumerate(trajectories):
            for i in range(tr.y.size):
                w.writerow([k, i, tr.y[i], tr.z[i], tr.released[i], tr.spill[i]])


def final_states(model, z0, cfg: SimConfig) -> np.ndarray:
    """Storage after ``cfg.horizon`` steps on every path."""
    out_f = np.empty(cfg.n_paths)
    if isinstance(model, ContinuousDam):
        z0 = float(z0)
        if not 0.0 <= z0 <= model.spec.top:
            raise InvalidStartError(f"z0 {z0} outside [0, {model.spec.top}]")
        G = model.inflow
        args = (G.atom0, np.asarray(G.knots), np.asarray(G.values), model.spec.c0, model.spec.top, z0)

        def body(k, gen, _):
            out_f[k] = _cont_final(gen.random(cfg.horizon), *args)

        _run(cfg, 1, body)
        return out_f
    d, _ = _prepare(model)
    start = d.start_fixed(d.state_index(z0))
    out = np.empty(cfg.n_paths, dtype=np.int64)

    def body_d(k, gen, _):
        out[k] = _discrete_final(gen.random(cfg.horizon + 1), d.rows, *start, d.cap, np.empty(cfg.horizon, np.int64))

    _run(cfg, 1, body_d)
    return out


# -- estimators -------------------------------------------------------------

def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("inf")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _proportion(hits: float, n: int) -> tuple[float, float]:
    p = hits / n
    return float(p), float(math.sqrt(p * (1.0 - p) / n))


def _counts_table(d: _Discrete, start, cfg: SimConfig, n: int, width: int, stream: int) -> np.ndarray:
    """Occupancy counts at steps ``0..n``, summed over paths."""
    parts = np.zeros((cfg.workers, n + 1, width), dtype=np.int64)
    ybufs = np.empty((cfg.workers, n + 1), dtype=np.int64)

    def body(k, gen, c):
        _discrete_counts(gen.random(n + 1), d.rows, *start, d.cap, parts[c], ybufs[c])

    _run(cfg, stream, body)
    return parts.sum(axis=0)


def occupancy_counts(model, z0, cfg: SimConfig, n: int | None = None) -> np.ndarray:
    """Counts of paths in each storage level at steps ``0..n`` (finite and semi-infinite dams)."""
    d, _ = _prepare(model)
    n = cfg.horizon if n is None else n
    start = d.start_fixed(d.state_index(z0))
    width = d.C if d.C is not None else 64
    return _counts_table(d, start, cfg, n, width, METRICS.index("occupancy") + 1)


def _hits(d: _Discrete, start, cfg, target_idx, counted_idx, max_steps, stream):
    width = (d.C if d.C is not None else max(list(target_idx) + list(counted_idx) + [0]) + 1)
    target = np.zeros(width, dtype=np.bool_)
    target[list(target_idx)] = True
    counted = np.zeros(width, dtype=np.bool_)
    counted[list(counted_idx)] = True
    T = np.empty(cfg.n_paths, dtype=np.int64)
    V = np.empty(cfg.n_paths, dtype=np.int64)

    def body(k, gen, _):
        T[k], V[k] = _discrete_hit(gen, d.rows, *start, d.cap, target, counted, max_steps)

    _run(cfg, stream, body)
    return T, V


def _sums(d: _Discrete, start, cfg, vals, n, stream) -> np.ndarray:
    out = np.empty((cfg.n_paths, 3))

    def body(k, gen, _):
        out[k] = _discrete_sums(gen.random(n + 1), d.rows, *start, d.cap, vals)

    _run(cfg, stream, body)
    return out


def _resolve_set(d: _Discrete, states) -> list[int]:
    return sorted({d.state_index(s) for s in states})


def clt_sample(model, cfg: SimConfig, values=None) -> np.ndarray:
    """Standardized sums ``(S_n - n mu) / sqrt(n)`` from a stationary start, one per path.

    ``S_n`` is ``sum_{k<n} v(Z_k)`` for a :class:`JointChain` (``v`` defaults
    to the storage index) and for a :class:`TransitionMatrix`, and
    ``sum_{k<n} (Y_k - 1{Z_k > 0})`` for a :class:`SemiInfiniteDam`. ``mu``
    is the exact stationary mean of the summand.
    """
    n = cfg.horizon
    stream = METRICS.index("clt_variance") + 1
    if isinstance(model, TransitionMatrix):
        pi = np.asarray(stationary_distribution(model).mass)
        vals = np.arange(model.n, dtype=float) if values is None else np.asarray(values, dtype=float)
        rows = np.array([_cumulative(r) for r in np.asarray(model.entries)])
        scum = _cumulative(pi)
        S = np.empty(cfg.n_paths)

        def body(k, gen, _):
            S[k] = _chain_sums(gen.random(n + 1), rows, scum, vals)

        _run(cfg, stream, body)
        mu = float(vals @ pi)
        return (S - n * mu) / math.sqrt(n)
    d, start = _prepare(model)
    if start is None:
        raise InvalidModelError("model has no stationary law to start from")
    if isinstance(model, SemiInfiniteDam):
        out = _sums(d, start, cfg, np.zeros(0), n, stream)
        mu = model.inflow.mean - (1.0 - stationary_solution(model.inflow).pi0)
        return (out[:, 2] - n * mu) / math.sqrt(n)
    vals = np.arange(d.C, dtype=float) if values is None else np.asarray(values, dtype=float)
    pi, _, _ = joint_stationary(model)
    mu = float(np.asarray(pi.mass) @ vals[model.storage_of()])
    out = _sums(d, start, cfg, vals, n, stream)
    return (out[:, 0] - n * mu) / math.sqrt(n)


def variance_with_se(x: np.ndarray) -> tuple[float, float]:
    """Sample variance and its standard error ``sqrt((m4 - s^4) / N)``."""
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    s2 = float(c @ c / (x.size - 1))
    m4 = float(np.mean(c**4))
    return s2, float(math.sqrt(max(m4 - s2**2, 0.0) / x.size))


def estimate_metric(metric: str, model, cfg: SimConfig, **params) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of a named metric.

    Parameters
    ----------
    metric
        One of :data:`METRICS`.
    model
        :class:`JointChain`, :class:`SemiInfiniteDam` or (for
        ``clt_variance`` only) a :class:`TransitionMatrix`.
    cfg
        Seed, number of paths and horizon. ``horizon`` is the run length
        for ``loss_rate`` and ``clt_variance`` and the default ``n`` for the
        curve metrics.
    **params
        ``z0`` (start state, default 0), ``n``, ``state`` (occupancy),
        ``empty`` (list of labels or :class:`EmptyClass`), ``top``,
        ``z_safe``, ``partition`` (:class:`ResiliencePartition`) and
        ``values`` (storage values for ``clt_variance``).

    Raises
    ------
    UnknownMetricError
    """
    if metric not in METRICS:
        raise UnknownMetricError(f"unknown metric {metric!r}; known: {', '.join(METRICS)}")
    if metric == "clt_variance":
        return variance_with_se(clt_sample(model, cfg, params.get("values")))
    d, stat_start = _prepare(model)
    stream = METRICS.index(metric) + 1
    n = int(params.get("n", cfg.horizon))
    z0 = params.get("z0", 0)
    N = cfg.n_paths

    if metric == "loss_rate":
        if stat_start is None:
            raise InvalidModelError("model has no stationary law to start from")
        out = _sums(d, stat_start, cfg, np.zeros(0), cfg.horizon, stream)
        return _mean_se(out[:, 1] / cfg.horizon)

    start = d.start_fixed(d.state_index(z0))
    empty = params.get("empty")
    if empty is None:
        empty_idx = [0]
    else:
        states = empty.empty_states if isinstance(empty, EmptyClass) else empty
        empty_idx = _resolve_set(d, states)

    if metric in ("occupancy", "availability", "safety"):
        width = d.C if d.C is not None else max(64, n + 2)
        counts = _counts_table(d, start, cfg, n, width, stream)[n]
        if metric == "occupancy":
            return _proportion(counts[d.state_index(params.get("state", 0))], N)
        if metric == "availability":
            return _proportion(N - counts[empty_idx].sum(), N)
        z_safe = d.state_index(params.get("z_safe", 1))
        return _proportion(counts[z_safe:].sum(), N)
    if metric == "reliability":
        if d.state_index(z0) in empty_idx:
            return 0.0, 0.0
        T, _ = _hits(d, start, cfg, empty_idx, [], n, stream)
        return _proportion(float(np.sum(T < 0)), N)
    if metric in ("mtte", "mtto"):
        if metric == "mtte":
            target = empty_idx
        else:
            top = params.get("top")
            target = [d.C - 1] if top is None else _resolve_set(d, top)
        T, _ = _hits(d, start, cfg, target, [], HIT_CAP, stream)
        if np.any(T < 0):
            raise NoConvergenceError(f"{int(np.sum(T < 0))} paths did not hit the target within {HIT_CAP} steps")
        return _mean_se(T)
    part = params.get("partition") or ResiliencePartition.case_study()
    E1, E3 = _resolve_set(d, part.E1), _resolve_set(d, part.E3)
    if metric == "resistant_resilience":
        T, V = _hits(d, start, cfg, E3, E1, HIT_CAP, stream)
    else:
        T, V = _hits(d, start, cfg, E1, E3, HIT_CAP, stream)
    if np.any(T < 0):
        raise NoConvergenceError("some paths did not reach the target class")
    return _mean_se(V)


def stationary_mass(model) -> np.ndarray:
    """Storage marginal of the stationary law (finite models)."""
    if isinstance(model, JointChain):
        return as_mass(joint_stationary(model)[1])
    raise InvalidModelError("finite model required")
