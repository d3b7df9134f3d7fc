"""Scenario configuration, figure-style runs and CSV emission.

A scenario bundles the parameter table, the user kind, the SINR threshold
(dB at this boundary, linear everywhere else), a velocity list and the
simulation budget.  Each ``run_*`` function computes the analytical curve
and its Monte Carlo counterpart and writes a CSV pair; the CSV layout is
x / y_analysis / y_sim / sim_ci_halfwidth split across the two files
(analysis columns in one, simulation columns in the other), each with
enough header metadata to rerun the curve exactly.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .aerial import AerialSuccessContext, meta_curve_aerial
from .channel import ENVIRONMENTS, SystemParams, table1
from .correlation import correlation_coefficient, handover_probability, paoi_cdf
from .correlation import build_joint_grid
from .ground import GroundSuccessContext, meta_curve
from .simulate import (
    estimate_joint_and_correlation,
    estimate_meta,
    estimate_paoi,
)

__all__ = [
    "ConfigError",
    "Scenario",
    "CurveSeries",
    "load_scenario",
    "write_curve_pair",
    "run_meta",
    "run_correlation",
    "run_joint",
    "run_paoi",
]

#: Velocity list (m per unit time) used by the figure-style sweeps.
DEFAULT_VELOCITIES = (0.0, 25.0, 50.0, 100.0, 200.0, 400.0)


class ConfigError(ValueError):
    """Malformed configuration file or option set."""


@dataclass
class Scenario:
    """One reproducible experiment: parameters, thresholds, budget, flags."""

    name: str = "suburban"
    kind: str = "aerial"                  # ground | aerial
    environment: str = "suburban"
    theta_db: float = 0.0
    velocities: tuple = DEFAULT_VELOCITIES
    arrival_rate: float = 0.5
    trials: int = 20000
    seed: int = 1
    out: str = "out"
    mode: str = "cell"                    # typical-user mode of the oracle
    tolerance: float | None = None        # optional analysis-vs-sim gate
    # printed-form toggles (comparison runs; corrected forms by default)
    printed_serving_pdf: bool = False
    printed_kappa: bool = False
    theorem_integrand: bool = False
    printed_truncation: bool = False
    params: SystemParams | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("ground", "aerial"):
            raise ConfigError(f"kind must be ground|aerial, got {self.kind!r}")
        if self.environment not in ENVIRONMENTS and self.environment != "custom":
            raise ConfigError(f"unknown environment {self.environment!r}")
        if self.params is None:
            env = self.environment if self.environment != "custom" else "suburban"
            self.params = table1(
                env,
                sinr_threshold=10.0 ** (self.theta_db / 10.0),
                arrival_rate=self.arrival_rate,
            )

    @property
    def theta(self) -> float:
        return 10.0 ** (self.theta_db / 10.0)

    def fingerprint(self) -> str:
        body = repr(sorted(self.__dict__.items(), key=lambda kv: kv[0]))
        return hashlib.sha256(body.encode()).hexdigest()[:16]

    def with_(self, **changes) -> "Scenario":
        changes.setdefault("params", None)
        return replace(self, **changes)


@dataclass
class CurveSeries:
    """One labeled curve with the metadata needed to reproduce it."""

    x_label: str
    y_label: str
    x: np.ndarray
    y: np.ndarray
    ci: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Configuration file
# ---------------------------------------------------------------------------

_SYSTEM_KEYS = {
    "bs_density": float, "ue_density": float, "tx_power": float, "noise": float,
    "ground_alpha": float, "los_alpha": float, "nlos_alpha": float,
    "los_m": int, "nlos_m": int, "altitude": float,
    "handover_delay": float, "pdf_step": float, "velocity": float,
}
_SYSTEM_DB_KEYS = {"los_eta_db": "los_eta", "nlos_eta_db": "nlos_eta"}


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    """Parse a sectioned key-value scenario file; CLI overrides win.

    Sections: ``[scenario]`` for run settings (name, kind, environment,
    theta_db, velocities, arrival_rate, trials, seed, out, mode,
    tolerance, printed-form flags), ``[system]`` for parameter-table
    fields (dB inputs use the ``*_db`` keys and are converted here).
    """
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    sc: dict = {}
    sys_kwargs: dict = {}
    try:
        if cp.has_section("scenario"):
            s = cp["scenario"]
            for key in ("name", "kind", "environment", "out", "mode"):
                if key in s:
                    sc[key] = s.get(key)
            for key in ("theta_db", "arrival_rate", "tolerance"):
                if key in s:
                    sc[key] = s.getfloat(key)
            for key in ("trials", "seed"):
                if key in s:
                    sc[key] = s.getint(key)
            if "velocities" in s:
                sc["velocities"] = tuple(
                    float(v) for v in s.get("velocities").replace(",", " ").split()
                )
            for key in ("printed_serving_pdf", "printed_kappa",
                        "theorem_integrand", "printed_truncation"):
                if key in s:
                    sc[key] = s.getboolean(key)
        if cp.has_section("system"):
            s = cp["system"]
            for key, cast in _SYSTEM_KEYS.items():
                if key in s:
                    sys_kwargs[key] = cast(s.get(key))
            for db_key, lin_key in _SYSTEM_DB_KEYS.items():
                if db_key in s:
                    sys_kwargs[lin_key] = 10.0 ** (s.getfloat(db_key) / 10.0)
            if "env_a" in s and "env_b" in s:
                sys_kwargs["env_a"] = s.getfloat("env_a")
                sys_kwargs["env_b"] = s.getfloat("env_b")
                sc.setdefault("environment", "custom")
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc
    sc.update(overrides or {})
    scenario = Scenario(**sc)
    if sys_kwargs:
        env = scenario.environment
        if env != "custom":
            a, b = ENVIRONMENTS[env]
            sys_kwargs.setdefault("env_a", a)
            sys_kwargs.setdefault("env_b", b)
        scenario.params = SystemParams(
            sinr_threshold=scenario.theta,
            arrival_rate=scenario.arrival_rate,
            **sys_kwargs,
        )
    return scenario


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def write_curve_pair(stem, analysis: CurveSeries, sim: CurveSeries):
    """Write <stem>_analysis.csv and <stem>_sim.csv (byte-stable layout)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for series, suffix, cols in (
        (analysis, "_analysis.csv", ("x", "y_analysis")),
        (sim, "_sim.csv", ("x", "y_sim", "sim_ci_halfwidth")),
    ):
        path = stem.parent / (stem.name + suffix)
        lines = [f"# {k}={series.metadata[k]}" for k in sorted(series.metadata)]
        lines.append(f"# version={__version__}")
        lines.append(f"# x_label={series.x_label}")
        lines.append(f"# y_label={series.y_label}")
        lines.append(",".join(cols))
        for i in range(len(series.x)):
            row = [_fmt(series.x[i]), _fmt(series.y[i])]
            if len(cols) == 3:
                row.append(_fmt(series.ci[i] if series.ci is not None else 0.0))
            lines.append(",".join(row))
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return tuple(paths)


def _meta_pair(sc: Scenario):
    meta = {
        "scenario": sc.name,
        "fingerprint": sc.fingerprint(),
        "seed": sc.seed,
        "trials": sc.trials,
        "kind": sc.kind,
        "environment": sc.environment,
        "theta_db": sc.theta_db,
    }
    return meta


# ---------------------------------------------------------------------------
# Figure-style runs
# ---------------------------------------------------------------------------

def _gamma_lattice(sc: Scenario) -> np.ndarray:
    d = sc.params.pdf_step
    n = int(round(1.0 / d))
    return np.linspace(d, 1.0 - d, n - 1)


def run_meta(sc: Scenario):
    """Meta distribution, analysis vs simulation, on the reliability lattice."""
    gammas = _gamma_lattice(sc)
    if sc.kind == "ground":
        ctx = GroundSuccessContext(sc.params, sc.theta)
        y = meta_curve(ctx, gammas)
    else:
        ctx = AerialSuccessContext(sc.params, sc.theta)
        y = meta_curve_aerial(ctx, gammas, printed=sc.printed_kappa)
    outs, _ = estimate_meta(sc.params, sc.kind, sc.theta, gammas, sc.trials,
                            sc.seed, sc.mode)
    meta = _meta_pair(sc)
    analysis = CurveSeries("gamma", "meta_distribution", gammas, np.asarray(y),
                           metadata=meta)
    sim = CurveSeries(
        "gamma", "meta_distribution", gammas,
        np.array([o.estimate for o in outs]),
        np.array([o.ci_halfwidth for o in outs]),
        metadata=meta,
    )
    return analysis, sim


def run_correlation(sc: Scenario):
    """Correlation coefficient versus velocity, analysis vs simulation."""
    v = np.asarray(sc.velocities, dtype=float)
    t = 1.0 / sc.arrival_rate
    ya = np.array([correlation_coefficient(sc.params, sc.kind, vi) for vi in v])
    ys = np.empty_like(ya)
    ci = np.empty_like(ya)
    for i, vi in enumerate(v):
        if vi == 0.0 and sc.kind == "ground":
            ys[i], ci[i] = 1.0, 0.0
            continue
        est = estimate_joint_and_correlation(
            sc.params, sc.kind, sc.theta, vi, t, 0.5, 0.5, sc.trials,
            sc.seed + i, sc.mode,
        )
        ys[i], ci[i] = est.rho.estimate, est.rho.ci_halfwidth
    meta = _meta_pair(sc)
    return (
        CurveSeries("velocity", "correlation", v, ya, metadata=meta),
        CurveSeries("velocity", "correlation", v, ys, ci, metadata=meta),
    )


def run_joint(sc: Scenario, gamma0: float = 0.5, gamma1: float = 0.5):
    """Joint survival P(Ps(t0) > g0, Ps(t1) > g1) versus velocity."""
    v = np.asarray(sc.velocities, dtype=float)
    t = 1.0 / sc.arrival_rate
    ya = np.empty_like(v)
    ys = np.empty_like(v)
    ci = np.empty_like(v)
    for i, vi in enumerate(v):
        pv = sc.params.with_(velocity=vi)
        ph = 0.0 if vi == 0.0 else handover_probability(pv, t, serving_law="cell")
        acc = 0.0
        for branch, w in (("no_handover", 1.0 - ph), ("handover", ph)):
            if w == 0.0:
                continue
            grid = build_joint_grid(pv, sc.kind, vi, t, branch)
            i0 = int(np.searchsorted(grid.gammas, gamma0))
            i1 = int(np.searchsorted(grid.gammas, gamma1))
            acc += w * grid.survival[i0, i1]
        ya[i] = acc
        est = estimate_joint_and_correlation(
            sc.params, sc.kind, sc.theta, vi, t, gamma0, gamma1, sc.trials,
            sc.seed + i, sc.mode,
        )
        ys[i], ci[i] = est.joint.estimate, est.joint.ci_halfwidth
    meta = _meta_pair(sc)
    meta.update({"gamma0": gamma0, "gamma1": gamma1})
    return (
        CurveSeries("velocity", "joint_survival", v, ya, metadata=meta),
        CurveSeries("velocity", "joint_survival", v, ys, ci, metadata=meta),
    )


def run_paoi(sc: Scenario, q: float = 0.6):
    """PAoI percentile versus velocity, analysis vs simulation."""
    v = np.asarray(sc.velocities, dtype=float)
    ya = np.empty_like(v)
    ys = np.empty_like(v)
    ci = np.empty_like(v)
    for i, vi in enumerate(v):
        res = paoi_cdf(sc.params, sc.kind, vi, sc.arrival_rate, percentiles=(q,))
        ya[i] = res.percentiles[q]
        ests, _, _ = estimate_paoi(
            sc.params, sc.kind, sc.theta, vi, sc.arrival_rate, sc.trials,
            sc.seed + i, (q,), sc.mode,
        )
        ys[i], ci[i] = ests[q].estimate, ests[q].ci_halfwidth
    meta = _meta_pair(sc)
    meta.update({"percentile": q})
    return (
        CurveSeries("velocity", f"paoi_p{int(q * 100)}", v, ya, metadata=meta),
        CurveSeries("velocity", f"paoi_p{int(q * 100)}", v, ys, ci, metadata=meta),
    )
