"""``reservoir-markov`` command line: fit, analyze, simulate.

Every command reads a JSON run configuration (``--config``); relative paths
inside it are resolved against the configuration file. Outputs go under
``--out`` (default: the configuration's ``output_dir``)::

    model.json       fitted inflow model and discretization      (fit)
    analysis.json    stationary law, metrics, curves              (analyze)
    curves/*.csv     plot data for the curves                     (analyze)
    estimates.json   Monte Carlo estimates with standard errors   (simulate)

Exit codes: 0 success, 1 analysis failure (including a failed ``--check``),
2 input/output or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dependability as dep
from .chain_core import TransitionMatrix, n_step_distribution
from .continuous_kernel import ContinuousDam, InflowCdf, doeblin_certificate, stationary_cdf
from .exceptions import DataError, InvalidModelError, ReservoirMarkovError
from .ingest import (
    DiscretizationScheme,
    balance_residual_series,
    build_discretization,
    discretize_inflows,
    fit_inflow_markov,
    fit_inflow_pmf,
    independence_diagnostic,
    inflow_counts,
    monthly_to_annual,
    read_flow_csv,
)
from .lloyd_joint import JointChain, build_joint_iid, build_joint_lloyd, joint_stationary
from .moran_finite import (
    DamSpec,
    InflowPmf,
    build_transition_matrix,
    clt_variance,
    mean_storage,
    stationary_recursive,
    storage_labels,
    water_balance_residual,
)
from .resilience import ResiliencePartition, recovery_resilience, resistant_resilience
from .semi_infinite import (
    SemiInfiniteDam,
    clt_semi_infinite,
    drift,
    stability_condition,
    stationary_solution,
    truncated_matrix,
)
from .simulate import SimConfig, estimate_metric, final_states

MODEL_KINDS = ("iid", "markov", "semi-infinite", "continuous")

EXIT_OK, EXIT_ANALYSIS, EXIT_IO = 0, 1, 2


class ConfigError(ReservoirMarkovError):
    """Unreadable or inconsistent run configuration (exit code 2)."""


@dataclass
class RunConfig:
    dam: DamSpec
    data: Path | None = None
    model: str = "iid"
    partition: dict | None = None
    empty_class: tuple = ("I_0",)
    z_safe: str | None = None
    start: str = "I_1"
    horizon: int = 30
    seed: int = 0
    output_dir: Path = Path("out")
    use_capacity_after_release: bool = False
    grid_size: int = 1024
    simulate: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        base = path.parent
        try:
            dam = DamSpec.from_config(raw["dam"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad or missing 'dam' section: {exc}") from exc
        model = raw.get("model", "iid")
        if model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {model!r}")

        def resolve(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        return cls(
            dam=dam,
            data=resolve(raw.get("data")),
            model=model,
            partition=raw.get("partition"),
            empty_class=tuple(raw.get("empty_class", ("I_0",))),
            z_safe=raw.get("z_safe"),
            start=str(raw.get("start", "I_1")),
            horizon=int(raw.get("horizon", 30)),
            seed=int(raw.get("seed", 0)),
            output_dir=resolve(raw.get("output_dir", "out")),
            use_capacity_after_release=bool(raw.get("use_capacity_after_release", False)),
            grid_size=int(raw.get("grid_size", 1024)),
            simulate=dict(raw.get("simulate", {})),
        )


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


# -- fit --------------------------------------------------------------------

def cmd_fit(cfg: RunConfig) -> dict:
    """Fit the inflow model from the flow CSV and write ``model.json``."""
    if cfg.data is None:
        raise ConfigError("config has no 'data' path")
    if not Path(cfg.data).exists():
        raise ConfigError(f"data file not found: {cfg.data}")
    df = read_flow_csv(cfg.data)
    annual = monthly_to_annual(df)
    scheme = build_discretization(cfg.dam, cfg.use_capacity_after_release)
    seq = discretize_inflows(annual.to_numpy(), scheme)
    pmf = fit_inflow_pmf(annual.to_numpy(), scheme)
    diag = independence_diagnostic(seq, seed=cfg.seed) if seq.size >= 10 else None
    out = {
        "model": cfg.model,
        "dam": cfg.dam.to_config(),
        "discretization": scheme.to_dict(),
        "annual_inflow_hm3": {str(k): float(v) for k, v in annual.items()},
        "inflow_sequence": seq.tolist(),
        "inflow_counts": inflow_counts(annual.to_numpy(), scheme).tolist(),
        "pmf": {"states": list(scheme.inflow_labels()), "rows": [pmf.p.tolist()]},
        "diagnostics": {"independence": diag.to_dict() if diag else {"method": "too short", "testable": False}},
    }
    if cfg.model == "markov":
        P_y, flagged = fit_inflow_markov(seq, scheme.n_inflow)
        out["P_y"] = P_y.to_dict()
        out["unobserved_rows"] = [P_y.states[i] for i in flagged]
    if cfg.model == "continuous":
        G = InflowCdf.from_interval_pmf(pmf, cfg.dam.c0)
        out["inflow_cdf"] = {"atom0": G.atom0, "knots_hm3": G.knots.tolist(), "values": G.values.tolist()}
    if {"storage_hm3", "outflow_hm3"} <= set(df.columns) and not df[["storage_hm3", "outflow_hm3"]].isna().any().any():
        res = balance_residual_series(df)
        (cfg.output_dir / "curves").mkdir(parents=True, exist_ok=True)
        res.to_csv(cfg.output_dir / "curves" / "balance_residual.csv")
        out["diagnostics"]["balance_residual_final_hm3"] = float(res.values[-1])
    out = _clean(out)
    _dump(out, cfg.output_dir / "model.json")
    return out


# -- model loading ------------------------------------------------------------

@dataclass
class LoadedModel:
    kind: str
    dam: DamSpec
    scheme: DiscretizationScheme
    pmf: InflowPmf
    joint: JointChain | None = None
    semi: SemiInfiniteDam | None = None
    continuous: ContinuousDam | None = None


def load_model(path) -> LoadedModel:
    """Rebuild the model objects from ``model.json``.

    Raises
    ------
    ConfigError
        If the file is missing or not JSON.
    InvalidModelError
        If its content does not describe a valid model.
    """
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(d)


def model_from_dict(d: dict) -> LoadedModel:
    try:
        kind = d["model"]
        if kind not in MODEL_KINDS:
            raise InvalidModelError(f"unknown model kind {kind!r}")
        dam = DamSpec.from_config(d["dam"])
        scheme = DiscretizationScheme.from_dict(d["discretization"])
        pmf = InflowPmf(np.asarray(d["pmf"]["rows"], dtype=float).reshape(-1))
        m = LoadedModel(kind, dam, scheme, pmf)
        if kind == "iid":
            m.joint = build_joint_iid(pmf, scheme.C)
        elif kind == "markov":
            m.joint = build_joint_lloyd(TransitionMatrix.from_dict(d["P_y"]), scheme.C)
        elif kind == "semi-infinite":
            m.semi = SemiInfiniteDam(pmf)
        else:
            c = d.get("inflow_cdf")
            G = (
                InflowCdf(c["atom0"], c["knots_hm3"], c["values"])
                if c
                else InflowCdf.from_interval_pmf(pmf, dam.c0)
            )
            m.continuous = ContinuousDam(G, dam)
        return m
    except InvalidModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModelError(f"invalid model description: {exc}") from exc


# -- analyze ------------------------------------------------------------------

def _section(fn):
    """Run one analysis block; a model-specific failure is reported, not fatal."""
    try:
        return fn()
    except ReservoirMarkovError as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}


def default_partition(C: int) -> ResiliencePartition | None:
    """Interior states perfect, both extremes interrupted (the four-state case-study choice)."""
    if C < 3:
        return None
    lab = storage_labels(C)
    return ResiliencePartition(lab[1:-1], (), (lab[0], lab[-1]))


def _partition(cfg: RunConfig, C: int) -> ResiliencePartition | None:
    if cfg.partition:
        return ResiliencePartition.from_dict(cfg.partition)
    return default_partition(C)


def _analyze_finite(cfg: RunConfig, m: LoadedModel, curves_dir: Path) -> dict:
    J = m.joint
    labels = J.storage_labels()
    start = cfg.start if cfg.start in labels else labels[min(1, J.C - 1)]
    empty = dep.EmptyClass(cfg.empty_class, cfg.z_safe)
    values = m.scheme.storage_values()
    z_safe = cfg.z_safe or labels[empty.safe_index(J)]
    out: dict = {"model": m.kind, "storage_states": list(labels), "start": start}
    out["storage_values_hm3"] = values.tolist()
    if m.kind == "iid":
        P = build_transition_matrix(m.pmf, J.C)
        out["transition_matrix"] = P.to_dict()
    else:
        P = None
        out["transition_matrix"] = J.matrix.to_dict()

    def stationary():
        pi, pi_z, pi_y = joint_stationary(J)
        res = {"pi_z": pi_z.to_dict(), "pi_y": pi_y.to_dict()}
        if P is not None:
            res["pi_z_recursive"] = _section(lambda: stationary_recursive(m.pmf, J.C).to_dict())
        res["mean_storage_units"] = mean_storage(pi_z)
        res["mean_storage_hm3"] = mean_storage(pi_z, values)
        res["long_run_availability"] = dep.long_run_availability(J, empty)
        res["long_run_safety"] = dep.safety_level(J, start, math.inf, z_safe)
        res["overflow_loss_units"] = dep.joint_overflow_loss_rate(J)
        res["overflow_loss_hm3"] = res["overflow_loss_units"] * m.dam.c0
        if P is not None:
            wb = water_balance_residual(m.pmf, J.C, pi_z)
            res["water_balance"] = wb.__dict__
            res["clt_variance_units"] = clt_variance(P, pi_z)
        else:
            res["clt_variance_units"] = clt_variance(J.matrix, pi, J.storage_of().astype(float))
        return res

    out["stationary"] = _section(stationary)
    out["mtte"] = _section(lambda: dep.mtte(J, start, empty))
    out["mtto"] = _section(lambda: dep.mtto(J, start))
    part = _partition(cfg, J.C)
    if part is not None:
        out["partition"] = part.to_dict()
        out["resistant_resilience"] = _section(lambda: resistant_resilience(J, part, start))
        out["recovery_resilience"] = _section(lambda: recovery_resilience(J, part, start))
    curves = {}
    if start not in [labels[i] for i in empty.resolve(J)]:
        curves["reliability"] = dep.reliability_curve(J, start, cfg.horizon, empty)
    curves["availability"] = dep.availability_curve(J, start, cfg.horizon, empty)
    curves["safety"] = dep.safety_curve(J, start, cfg.horizon, z_safe)
    curves["expected_storage"] = dep.expected_storage_curve(J, start, cfg.horizon, values)
    curves_dir.mkdir(parents=True, exist_ok=True)
    for name, s in curves.items():
        s.to_csv(curves_dir / f"{name}.csv")
    out["curves"] = {name: s.to_dict() for name, s in curves.items()}
    out["z_safe"] = z_safe
    return out


def _analyze_semi(cfg: RunConfig, m: LoadedModel) -> dict:
    holds, b1 = stability_condition(m.pmf)
    out = {"model": m.kind, "stable": holds, "B1": b1, "drift": drift(m.pmf)}
    if holds:
        sol = stationary_solution(m.pmf)
        out["pi0"] = sol.pi0
        out["pi"] = sol.pi.tolist()
        out["tail_mass_bound"] = sol.tail_mass_bound
        out["clt"] = _section(lambda: clt_semi_infinite(m.pmf).__dict__)
    return out


def _analyze_continuous(cfg: RunConfig, m: LoadedModel, curves_dir: Path) -> dict:
    c = m.continuous
    n0, delta = doeblin_certificate(c.inflow, c.spec)
    F = stationary_cdf(c.inflow, c.spec, grid_size=cfg.grid_size)
    curves_dir.mkdir(parents=True, exist_ok=True)
    F.to_csv(curves_dir / "stationary_cdf.csv")
    return {
        "model": m.kind,
        "doeblin": {"n0": n0, "delta": delta},
        "mean_storage_hm3": F.mean(),
        "atom_zero": F.atom_zero,
        "atom_top": F.atom_top,
        "iterations": F.iterations,
        "fixed_point_residual": F.residual,
        "grid_size": cfg.grid_size,
    }


def cmd_analyze(cfg: RunConfig) -> dict:
    m = load_model(cfg.output_dir / "model.json")
    curves_dir = cfg.output_dir / "curves"
    if m.joint is not None:
        out = _analyze_finite(cfg, m, curves_dir)
    elif m.semi is not None:
        out = _analyze_semi(cfg, m)
    else:
        out = _analyze_continuous(cfg, m, curves_dir)
    out = _clean(out)
    _dump(out, cfg.output_dir / "analysis.json")
    return out


# -- simulate -----------------------------------------------------------------

def _sim_settings(cfg: RunConfig) -> dict:
    s = {"n_paths": 20000, "n": 5, "horizon": 200, "clt_paths": 20000, "clt_horizon": 5000, "workers": 1}
    s.update(cfg.simulate)
    return s


def _finite_checks(cfg: RunConfig, m: LoadedModel, s: dict) -> list[dict]:
    """Pairs of (analytic value, Monte Carlo estimate) for every metric of a finite dam."""
    J = m.joint
    labels = J.storage_labels()
    start = cfg.start if cfg.start in labels else labels[min(1, J.C - 1)]
    empty = dep.EmptyClass(cfg.empty_class, cfg.z_safe)
    z_safe = cfg.z_safe or labels[empty.safe_index(J)]
    n = int(s["n"])
    seed = cfg.seed
    sim = SimConfig(seed, int(s["n_paths"]), int(s["horizon"]), int(s["workers"]))
    clt = SimConfig(seed, int(s["clt_paths"]), int(s["clt_horizon"]), int(s["workers"]))
    common = {"z0": start, "empty": list(empty.empty_states)}
    items = []

    def add(name, analytic_fn, metric, cfg_, **params):
        try:
            a = float(analytic_fn())
        except ReservoirMarkovError as exc:
            items.append({"metric": name, "skipped": f"{type(exc).__name__}: {exc}"})
            return
        est, se = estimate_metric(metric, J, cfg_, **params)
        items.append({"metric": name, "analytic": a, "estimate": est, "se": se})

    occ = n_step_distribution(J.matrix, J.start_vector(J.storage_index(start)), n).mass
    occ_z = np.bincount(J.storage_of(), weights=occ, minlength=J.C)
    for i, lab in enumerate(labels):
        add(f"occupancy[{lab}](n={n})", lambda i=i: occ_z[i], "occupancy", sim, z0=start, n=n, state=i)
    if start not in empty.empty_states:
        add(f"reliability(n={n})", lambda: dep.reliability_curve(J, start, n, empty)[n], "reliability", sim, n=n, **common)
    add(f"availability(n={n})", lambda: dep.availability_curve(J, start, n, empty)[n], "availability", sim, n=n, **common)
    add(f"safety(n={n})", lambda: dep.safety_level(J, start, n, z_safe), "safety", sim, n=n, z_safe=z_safe, z0=start)
    add("mtte", lambda: dep.mtte(J, start, empty), "mtte", sim, **common)
    add("mtto", lambda: dep.mtto(J, start), "mtto", sim, z0=start)
    add("loss_rate", lambda: dep.joint_overflow_loss_rate(J), "loss_rate", sim)
    part = _partition(cfg, J.C)
    if part is not None:
        add("resistant_resilience", lambda: resistant_resilience(J, part, start), "resistant_resilience", sim, z0=start, partition=part)
        add("recovery_resilience", lambda: recovery_resilience(J, part, start), "recovery_resilience", sim, z0=start, partition=part)

    def clt_exact():
        pi, _, _ = joint_stationary(J)
        return clt_variance(J.matrix, pi, J.storage_of().astype(float))

    add("clt_variance", clt_exact, "clt_variance", clt)
    return items


def _semi_checks(cfg: RunConfig, m: LoadedModel, s: dict) -> list[dict]:
    dam = m.semi
    n = int(s["n"])
    sim = SimConfig(cfg.seed, int(s["n_paths"]), int(s["horizon"]), int(s["workers"]))
    clt = SimConfig(cfg.seed, int(s["clt_paths"]), int(s["clt_horizon"]), int(s["workers"]))
    items = []
    N = 2 + n * dam.inflow.K + 2
    z0 = 1
    occ = n_step_distribution(truncated_matrix(dam.inflow, N), np.eye(N)[z0], n).mass
    for i in range(min(4, N)):
        est, se = estimate_metric("occupancy", dam, sim, z0=z0, n=n, state=i)
        items.append({"metric": f"occupancy[{i}](n={n})", "analytic": float(occ[i]), "estimate": est, "se": se})
    try:
        a = clt_semi_infinite(dam.inflow).sigma2
        est, se = estimate_metric("clt_variance", dam, clt)
        items.append({"metric": "clt_variance(functional)", "analytic": a, "estimate": est, "se": se})
    except ReservoirMarkovError as exc:
        items.append({"metric": "clt_variance(functional)", "skipped": f"{type(exc).__name__}: {exc}"})
    return items


def _continuous_checks(cfg: RunConfig, m: LoadedModel, s: dict) -> list[dict]:
    c = m.continuous
    F = stationary_cdf(c.inflow, c.spec, grid_size=cfg.grid_size)
    sim = SimConfig(cfg.seed, int(s["n_paths"]), int(s["horizon"]), int(s["workers"]))
    z = final_states(c, 0.0, sim)
    N = z.size
    items = []
    mean, se = float(z.mean()), float(z.std(ddof=1) / math.sqrt(N))
    items.append({"metric": "mean_storage_hm3", "analytic": F.mean(), "estimate": mean, "se": se})
    for name, a, hit in (
        ("atom_zero", F.atom_zero, z <= 0.0),
        ("atom_top", F.atom_top, z >= c.spec.top),
    ):
        p = float(hit.mean())
        items.append({"metric": name, "analytic": a, "estimate": p, "se": math.sqrt(p * (1 - p) / N)})
    return items


def judge(items: list[dict], k: float = 3.0) -> list[dict]:
    """Mark each comparison as within ``k`` standard errors (exact match required when SE is zero)."""
    for it in items:
        if "skipped" in it:
            continue
        diff = abs(it["estimate"] - it["analytic"])
        se = it["se"]
        it["z"] = diff / se if se > 0 else (0.0 if diff <= 1e-12 else math.inf)
        it["within_3se"] = bool(diff <= k * se + 1e-12)
    return items


def cmd_simulate(cfg: RunConfig, check: bool = False) -> tuple[dict, bool]:
    m = load_model(cfg.output_dir / "model.json")
    s = _sim_settings(cfg)
    if m.joint is not None:
        items = _finite_checks(cfg, m, s)
    elif m.semi is not None:
        items = _semi_checks(cfg, m, s)
    else:
        items = _continuous_checks(cfg, m, s)
    items = judge(items)
    ok = all(it.get("within_3se", True) for it in items)
    out = _clean({"model": m.kind, "seed": cfg.seed, "settings": s, "metrics": items, "all_within_3se": ok})
    _dump(out, cfg.output_dir / "estimates.json")
    return out, ok


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reservoir-markov", description=__doc__.splitlines()[0].replace("``", ""))
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("fit", "fit the inflow model from monthly flow records"),
        ("analyze", "compute stationary law, dependability and resilience metrics"),
        ("simulate", "Monte Carlo estimates of every metric"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--model", choices=MODEL_KINDS, help="inflow model kind (fit)")
        p.add_argument("--out", help="output directory")
        if name == "simulate":
            p.add_argument("--check", action="store_true", help="exit 1 if any analytic value is outside 3 SE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "model": args.model, "output_dir": args.out}
    if args.out is not None:
        overrides["output_dir"] = str(Path(args.out).resolve())
    try:
        cfg = RunConfig.load(args.config, overrides)
        if args.command == "fit":
            cmd_fit(cfg)
        elif args.command == "analyze":
            cmd_analyze(cfg)
        else:
            _, ok = cmd_simulate(cfg, args.check)
            if args.check and not ok:
                print("check failed: some analytic values are outside 3 SE; see estimates.json", file=sys.stderr)
                return EXIT_ANALYSIS
    except (ConfigError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ReservoirMarkovError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
