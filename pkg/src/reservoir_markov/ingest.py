"""Monthly flow records to a fitted discrete inflow model.

Input is a CSV with header ``date,inflow_m3s[,storage_hm3][,outflow_hm3]``:
one row per calendar month, mean inflow in m³/s, and optionally the
storage on the record date and the month's outflow, both in hm³. Months are converted
to volumes with a 30-day month (factor 2.592 hm³ per m³/s) and summed over
hydrological years running from October to September.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.stats

from .chain_core import TransitionMatrix, validate_stochastic
from .exceptions import (
    DataError,
    MissingColumnsError,
    NegativeFlowError,
    PartialYearError,
    TooFewYearsError,
    TooShortError,
)
from .moran_finite import DamSpec, InflowPmf, inflow_labels, storage_labels
from .series import MetricSeries

MONTH_FACTOR = 60 * 60 * 24 * 30 * 1e-6  # hm³ per (m³/s over a 30-day month)
FIRST_MONTH = 10  # hydrological years start in October
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class FlowRecord:
    date: pd.Timestamp
    mean_flow: float
    storage: float | None = None
    outflow: float | None = None


def read_flow_csv(path) -> pd.DataFrame:
    """Load and validate a monthly flow CSV.

    Raises
    ------
    MissingColumnsError, NegativeFlowError
    DataError
        If the file cannot be parsed or dates are not strictly increasing.
    """
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    return validate_frame(df)


def validate_frame(df: pd.DataFrame) -> pd.DataFrame:
    missing = {"date", "inflow_m3s"} - set(df.columns)
    if missing:
        raise MissingColumnsError(f"missing columns: {sorted(missing)}")
    df = df.copy()
    try:
        df["date"] = pd.to_datetime(df["date"])
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparseable dates: {exc}") from exc
    if not df["date"].is_monotonic_increasing or df["date"].duplicated().any():
        raise DataError("dates must be strictly increasing")
    if (df["inflow_m3s"] < 0).any():
        bad = df.loc[df["inflow_m3s"] < 0, "date"].iloc[0]
        raise NegativeFlowError(f"negative mean flow on {bad.date()}")
    return df.reset_index(drop=True)


def records_to_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return validate_frame(records)
    rows = [
        {"date": r.date, "inflow_m3s": r.mean_flow, "storage_hm3": r.storage, "outflow_hm3": r.outflow}
        for r in records
    ]
    return validate_frame(pd.DataFrame(rows))


def hydrological_year(dates: pd.Series) -> pd.Series:
    """Label of the hydrological year: the calendar year in which it starts."""
    d = pd.to_datetime(dates)
    return d.dt.year - (d.dt.month < FIRST_MONTH).astype(int)


def monthly_volumes(df: pd.DataFrame, calendar_exact: bool = False) -> pd.Series:
    """Monthly inflow volume (hm³) from the mean flow (m³/s)."""
    if calendar_exact:
        days = pd.to_datetime(df["date"]).dt.days_in_month
        return df["inflow_m3s"] * days * 86400e-6
    return df["inflow_m3s"] * MONTH_FACTOR


def monthly_to_annual(records, calendar_exact: bool = False) -> pd.Series:
    """Annual inflow volumes (hm³) indexed by hydrological year.

    Raises
    ------
    PartialYearError
        If any hydrological year does not have exactly its twelve months.
    NegativeFlowError
    """
    df = records_to_frame(records)
    hy = hydrological_year(df["date"])
    months = pd.to_datetime(df["date"]).dt.to_period("M")
    for year, grp in months.groupby(hy):
        expected = pd.period_range(f"{year}-{FIRST_MONTH:02d}", periods=12, freq="M")
        if len(grp) != 12 or not (grp.values == expected.values).all():
            raise PartialYearError(f"hydrological year {year}/{year + 1} has {len(grp)} of 12 months")
    vol = monthly_volumes(df, calendar_exact)
    annual = vol.groupby(hy).sum()
    annual.index.name = "hydrological_year"
    annual.name = "inflow_hm3"
    return annual


@dataclass(frozen=True)
class DiscretizationScheme:
    """Release-unit intervals for inflow and storage.

    Inflow: ``I_0 = [0, c0/2]``, ``I_j = ((j - 1/2) c0, (j + 1/2) c0]`` for
    ``1 <= j <= k`` and ``I''_{k+1} = ((k + 1/2) c0, inf)``. Storage uses
    ``I_0 .. I_{k-1}`` and a top interval ``I'_k = ((k - 1/2) c0, upper]``.
    """

    c0: float
    upper: float
    k: int = field(default=-1)

    def __post_init__(self):
        if self.c0 <= 0 or self.upper <= 0:
            raise ValueError("c0 and upper must be positive")
        k = self.k if self.k >= 0 else _choose_k(self.upper, self.c0)
        if k < 1:
            raise ValueError(f"upper={self.upper} gives fewer than two storage states for c0={self.c0}")
        object.__setattr__(self, "k", int(k))

    @property
    def C(self) -> int:
        return self.k + 1

    @property
    def n_inflow(self) -> int:
        return self.k + 2

    def storage_labels(self) -> tuple[str, ...]:
        return storage_labels(self.C)

    def inflow_labels(self) -> tuple[str, ...]:
        return inflow_labels(self.n_inflow)

    def storage_intervals(self) -> list[tuple[float, float]]:
        c0 = self.c0
        out = [(0.0, c0 / 2)] + [((j - 0.5) * c0, (j + 0.5) * c0) for j in range(1, self.k)]
        out.append(((self.k - 0.5) * c0, self.upper))
        return out

    def inflow_intervals(self) -> list[tuple[float, float]]:
        c0 = self.c0
        out = [(0.0, c0 / 2)] + [((j - 0.5) * c0, (j + 0.5) * c0) for j in range(1, self.k + 1)]
        out.append(((self.k + 0.5) * c0, math.inf))
        return out

    def storage_values(self) -> np.ndarray:
        """Interval midpoints (hm³), used as representative storage volumes."""
        return np.array([(a + b) / 2 for a, b in self.storage_intervals()])

    def inflow_index(self, v) -> np.ndarray:
        return self._index(v, self.k + 1)

    def storage_index(self, v) -> np.ndarray:
        return self._index(v, self.k)

    def _index(self, v, cap: int) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if np.any(v < 0) or np.any(~np.isfinite(v)):
            raise ValueError("volumes must be finite and nonnegative")
        j = np.ceil(v / self.c0 - 0.5 - _EDGE_TOL).astype(int)
        return np.clip(j, 0, cap)

    def to_dict(self) -> dict:
        return {
            "c0_hm3": self.c0,
            "upper_hm3": self.upper,
            "k": self.k,
            "storage_states": list(self.storage_labels()),
            "inflow_states": list(self.inflow_labels()),
            "storage_intervals_hm3": [[a, b] for a, b in self.storage_intervals()],
            "inflow_intervals_hm3": [[a, None if math.isinf(b) else b] for a, b in self.inflow_intervals()],
            "storage_values_hm3": self.storage_values().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretizationScheme":
        return cls(float(d["c0_hm3"]), float(d["upper_hm3"]), int(d["k"]))


def _choose_k(upper: float, c0: float) -> int:
    """``k`` with ``(k - 1/2) c0 < upper <= (k + 1/2) c0``."""
    return int(math.ceil(upper / c0 - 0.5 - _EDGE_TOL))


def build_discretization(spec: DamSpec, use_capacity_after_release: bool = False) -> DiscretizationScheme:
    """Intervals for a dam; the top storage bound is ``C1`` (or ``C1 - c0`` if requested)."""
    upper = spec.C1 - spec.c0 if use_capacity_after_release else spec.C1
    return DiscretizationScheme(spec.c0, upper)


def discretize_inflows(annual, scheme: DiscretizationScheme) -> np.ndarray:
    return scheme.inflow_index(np.asarray(annual, dtype=float))


def inflow_counts(annual, scheme: DiscretizationScheme) -> np.ndarray:
    return np.bincount(discretize_inflows(annual, scheme), minlength=scheme.n_inflow)


def fit_inflow_pmf(annual, scheme: DiscretizationScheme) -> InflowPmf:
    """Relative frequencies of the annual volumes over the inflow intervals.

    Raises
    ------
    TooFewYearsError
        With fewer than two years.
    """
    annual = np.asarray(annual, dtype=float)
    if annual.size < 2:
        raise TooFewYearsError(f"need at least two years, got {annual.size}")
    counts = inflow_counts(annual, scheme)
    return InflowPmf(counts / counts.sum())


@dataclass(frozen=True)
class IndependenceResult:
    """Lag-1 independence check; ``testable`` is False when one category remains after merging."""

    statistic: float
    p_value: float
    method: str
    testable: bool
    table: np.ndarray
    categories: tuple

    def to_dict(self) -> dict:
        nan = lambda x: None if x is None or (isinstance(x, float) and math.isnan(x)) else x
        return {
            "statistic": nan(self.statistic),
            "p_value": nan(self.p_value),
            "method": self.method,
            "testable": self.testable,
            "table": self.table.tolist(),
            "categories": [list(c) for c in self.categories],
        }


def merge_sparse_categories(seq, min_count: int = 5) -> tuple[np.ndarray, tuple]:
    """Merge categories seen fewer than ``min_count`` times into an adjacent one.

    The rarest group is merged first, into whichever adjacent group has
    fewer observations.
    Returns the recoded sequence (``0..m-1``) and the original values in
    each merged group.
    """
    seq = np.asarray(seq, dtype=int)
    groups = [[v] for v in np.unique(seq)]
    counts = [int(np.sum(seq == g[0])) for g in groups]
    while len(groups) > 1 and min(counts) < min_count:
        i = int(np.argmin(counts))
        if i == 0:
            j = 1
        elif i == len(groups) - 1:
            j = i - 1
        else:
            j = i - 1 if counts[i - 1] <= counts[i + 1] else i + 1
        lo, hi = sorted((i, j))
        groups[lo] = groups[lo] + groups[hi]
        counts[lo] += counts[hi]
        del groups[hi], counts[hi]
    code = {v: c for c, g in enumerate(groups) for v in g}
    return np.array([code[v] for v in seq], dtype=int), tuple(tuple(int(v) for v in g) for g in groups)


def _lag_tables(codes: np.ndarray, m: int) -> np.ndarray:
    """Lag-1 contingency tables for each row of ``codes`` (shape ``(B, n)``)."""
    B = codes.shape[0]
    pair = codes[:, :-1] * m + codes[:, 1:] + (np.arange(B) * m * m)[:, None]
    return np.bincount(pair.ravel(), minlength=B * m * m).reshape(B, m, m)


def _chi2(tables: np.ndarray) -> np.ndarray:
    tot = tables.sum(axis=(1, 2), keepdims=True)
    exp = tables.sum(axis=2, keepdims=True) * tables.sum(axis=1, keepdims=True) / tot
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(exp > 0, (tables - exp) ** 2 / exp, 0.0)
    return terms.sum(axis=(1, 2))


def independence_diagnostic(seq, n_mc: int = 1999, seed: int = 0, min_count: int = 5) -> IndependenceResult:
    """Test whether consecutive discretized inflows are independent.

    Sparse categories are merged first. A 2x2 lag-1 table is tested with
    Fisher's exact test; a larger table with the chi-square statistic and a
    Monte Carlo p-value over random permutations of the sequence.

    Raises
    ------
    TooShortError
        With fewer than ten observations.
    """
    seq = np.asarray(seq, dtype=int)
    if seq.size < 10:
        raise TooShortError(f"need at least 10 observations, got {seq.size}")
    codes, groups = merge_sparse_categories(seq, min_count)
    m = len(groups)
    if m == 1:
        table = np.array([[seq.size - 1]])
        return IndependenceResult(float("nan"), float("nan"), "not testable", False, table, groups)
    table = _lag_tables(codes[None, :], m)[0]
    if m == 2:
        stat, p = scipy.stats.fisher_exact(table)
        return IndependenceResult(float(stat), float(p), "fisher_exact", True, table, groups)
    obs = float(_chi2(table[None])[0])
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(codes, (n_mc, 1)), axis=1)
    null = _chi2(_lag_tables(perms, m))
    p = (1.0 + np.sum(null >= obs - 1e-12)) / (n_mc + 1.0)
    return IndependenceResult(obs, float(p), "chi2_monte_carlo", True, table, groups)


def fit_inflow_markov(seq, n_states: int | None = None) -> tuple[TransitionMatrix, list[int]]:
    """Row-wise transition frequencies of a discretized sequence.

    Rows of states never left (no observed outgoing transition) are set to
    uniform; their indices are returned as the second element.
    """
    seq = np.asarray(seq, dtype=int)
    n = int(seq.max()) + 1 if n_states is None else n_states
    counts = np.zeros((n, n))
    np.add.at(counts, (seq[:-1], seq[1:]), 1.0)
    totals = counts.sum(axis=1)
    flagged = [int(i) for i in np.flatnonzero(totals == 0)]
    rows = np.where(totals[:, None] > 0, counts / np.maximum(totals, 1)[:, None], 1.0 / n)
    return validate_stochastic(rows, inflow_labels(n)), flagged


def balance_residual_series(records, calendar_exact: bool = False) -> MetricSeries:
    """Modelled minus observed storage, period by period.

    The modelled storage starts from the first observed storage and adds
    each month's inflow volume minus its outflow. A positive value means
    water that the recorded flows cannot account for has gone missing.

    Raises
    ------
    MissingColumnsError
        If storage or outflow is absent.
    """
    df = records_to_frame(records)
    missing = {"storage_hm3", "outflow_hm3"} - set(df.columns)
    if missing or df[["storage_hm3", "outflow_hm3"]].isna().any().any():
        raise MissingColumnsError("storage_hm3 and outflow_hm3 are required")
    net = (monthly_volumes(df, calendar_exact) - df["outflow_hm3"]).to_numpy()
    storage = df["storage_hm3"].to_numpy(dtype=float)
    modelled = storage[0] + np.concatenate([[0.0], np.cumsum(net[:-1])])
    return MetricSeries("balance_residual", repr(float(storage[0])), np.arange(storage.size), modelled - storage)
