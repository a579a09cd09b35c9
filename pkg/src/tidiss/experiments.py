"""Declarative experiment runners producing CSV result tables."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import ExperimentConfig, IsotropicCfg, QOMECfg, build_dissipator
from .diagnostics import (RATE_COLUMNS, energy_rate_check, population_constraint_residual,
                          position_diffusion_check, RateReport)
from .dissipators import (DissipatorSpec, OptimalExp, QOMESpec, clip_profile, doppler_fit,
                          drift_hamiltonian, gamma_en, isotropic_jumps, matched_amplitude,
                          optimal_profile, qome_jumps, spec_jump_operators)
from .fock import UnitSystem, build_canonical_operators, build_hamiltonian
from .liouvillian import (CONVERGENCE_STEP, converged_steady_state, dissipator_superop,
                          hamiltonian_superop)
from .thermo import bures_distance, thermal_state

log = logging.getLogger(__name__)


class ExperimentError(ValueError):
    pass


@dataclass
class ResultTable:
    columns: tuple
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def select(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def to_csv(self, timestamp: str | None = None) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}: {v}\n")
        for msg in self.failures:
            buf.write(f"# failed: {msg}\n")
        stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        buf.write(f"# generated: {stamp}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    def write(self, prefix, plots: bool = False) -> list[Path]:
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        out = prefix.with_name(prefix.name + ".csv")
        out.write_text(self.to_csv(), encoding="utf-8")
        paths = [out]
        if plots and self.metadata.get("plot"):
            svg = prefix.with_name(prefix.name + ".svg")
            plot_table(self, svg)
            paths.append(svg)
        return paths


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# shared numerics


def match_rates(profile: OptimalExp, kappa: float, theta: float, units: UnitSystem = UnitSystem(),
                n_jumps: int = 1, rate: float = 1.0) -> float:
    """QOME ``Gamma`` with the same energy relaxation rate as the TI model.

    Equates ``n_jumps * rate * (c^2/w) gamma_en(theta, theta)`` with ``2 Gamma w``.
    """
    g = gamma_en(kappa, profile.lam, theta, units)
    if g == 0:
        raise ExperimentError("translation-invariant rate vanishes (kappa = 0); nothing to match")
    return n_jumps * rate * profile.c**2 * g / (2 * units.omega**2)


@dataclass(frozen=True)
class SteadyPoint:
    bures: float
    converged: bool
    residual: float
    gap: float
    bures_change: float


def _steady_vs_thermal(make_l: Callable[[int], object], make_h: Callable[[int], np.ndarray],
                       theta: float, dim: int) -> SteadyPoint:
    cs = converged_steady_state(make_l, dim)
    db = bures_distance(cs.rho, thermal_state(make_h(dim), theta))
    return SteadyPoint(db, cs.converged, cs.result.residual_norm, cs.result.spectral_gap, cs.bures_change)


class _Model:
    """Per-dimension cache of Hamiltonian and dissipator superoperators."""

    def __init__(self, units, jumps_fn, displacement=0.0, drift=None):
        self.units = units
        self.jumps_fn = jumps_fn
        self.displacement = displacement
        self.drift = drift
        self._ops, self._diss = {}, {}

    def ops(self, d):
        if d not in self._ops:
            self._ops[d] = build_canonical_operators(self.units, d)
        return self._ops[d]

    def h(self, d, displacement=None):
        dx = self.displacement if displacement is None else displacement
        ops = self.ops(d)
        return build_hamiltonian(ops, self.units, dx) + drift_hamiltonian(self.drift, ops)

    def diss(self, d):
        if d not in self._diss:
            self._diss[d] = dissipator_superop(self.jumps_fn(self.ops(d)), d)
        return self._diss[d]

    def generator(self, d, rate=1.0, displacement=None):
        return hamiltonian_superop(self.h(d, displacement)) + self.diss(d).scaled(rate)


def _ti_model(units, kappa, profile, drift=None):
    return _Model(units, lambda ops: spec_jump_operators(
        DissipatorSpec(isotropic_jumps(kappa, profile)), ops), drift=drift)


def _run_point(fn, key):
    try:
        return fn(), None
    except Exception as exc:  # failed rows never abort a sweep
        log.warning("row %s failed: %s", key, exc)
        return None, f"{key}: {type(exc).__name__}: {exc}"


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _metadata(cfg: ExperimentConfig, plot=None) -> dict:
    meta = {
        "tidiss": __version__,
        "experiment": cfg.experiment,
        "config": cfg.echo(),
        "dims": f"{cfg.dim} (convergence check at {cfg.dim + CONVERGENCE_STEP})",
    }
    if plot:
        meta["plot"] = plot
    return meta


def _collect(columns, cfg, groups, plot=None) -> ResultTable:
    table = ResultTable(tuple(columns), metadata=_metadata(cfg, plot))
    for rows, failures in groups:
        table.rows.extend(rows)
        table.failures.extend(failures)
    return table


# ---------------------------------------------------------------------------
# fig 1a: error vs equilibrium displacement


def _fig1a_task(args):
    cfg, model, theta, kappa, gamma = args
    u = cfg.units
    dx_grid = cfg.grid("dx0")
    rows, fails = [], []
    try:
        if model == "TI":
            prof = optimal_profile(theta, kappa, u, matched_amplitude(kappa, theta, u))
            m = _ti_model(u, kappa, prof)
            rate = gamma
        else:
            prof = optimal_profile(theta, kappa, u, matched_amplitude(kappa, theta, u))
            g_q = match_rates(prof, kappa, theta, u, n_jumps=2, rate=gamma)
            m = _Model(u, lambda ops: qome_jumps(QOMESpec(g_q, theta), ops, u))
            rate = 1.0
    except Exception as exc:
        for dx in dx_grid:
            rows.append({"model": model, "theta": theta, "dx0": dx, "bures": math.nan, "converged": False})
            fails.append(f"{model} theta={theta} dx0={dx}: {exc}")
        return rows, fails
    for dx in dx_grid:
        pt, err = _run_point(lambda: _steady_vs_thermal(
            lambda d: m.generator(d, rate, dx), lambda d: m.h(d, dx), theta, cfg.dim),
            f"{model} theta={theta} dx0={dx}")
        rows.append({"model": model, "theta": theta, "dx0": dx,
                     "bures": pt.bures if pt else math.nan, "converged": pt.converged if pt else False})
        if err:
            fails.append(err)
    return rows, fails


def run_fig1a(cfg: ExperimentConfig) -> ResultTable:
    """Bures error of TI and QOME steady states against displaced thermal states."""
    gamma = cfg.grid("gamma")[0]
    tasks = [(cfg, model, th, cfg.kappa, gamma) for model in ("TI", "QOME") for th in cfg.grid("theta")]
    groups = _map(_fig1a_task, tasks, cfg.workers)
    return _collect(("model", "theta", "dx0", "bures", "converged"), cfg, groups,
                    plot="x=dx0;series=model,theta")


# ---------------------------------------------------------------------------
# fig 1b: error vs temperature


def _fig1b_task(args):
    cfg, kappa, gamma = args
    u = cfg.units
    rows, fails = [], []
    for th in cfg.grid("theta"):
        def point():
            prof = optimal_profile(th, kappa, u, matched_amplitude(kappa, th, u))
            m = _ti_model(u, kappa, prof)
            return _steady_vs_thermal(lambda d: m.generator(d, gamma), m.h, th, cfg.dim)
        pt, err = _run_point(point, f"kappa={kappa} theta={th}")
        rows.append({"kappa": kappa, "theta": th, "bures": pt.bures if pt else math.nan,
                     "converged": pt.converged if pt else False})
        if err:
            fails.append(err)
    return rows, fails


def run_fig1b(cfg: ExperimentConfig) -> ResultTable:
    """Bures error of the TI steady state against temperature for several ``kappa``."""
    gamma = cfg.grid("gamma")[0]
    groups = _map(_fig1b_task, [(cfg, k, gamma) for k in cfg.grid("kappa")], cfg.workers)
    return _collect(("kappa", "theta", "bures", "converged"), cfg, groups, plot="x=theta;series=kappa")


# ---------------------------------------------------------------------------
# fig 2a: zero-temperature accuracy for optimal, clipped and Doppler profiles

FIG2A_VARIANTS = ("optimal", "clipped", "doppler")


def fig2a_profile(variant: str, kappa: float, units: UnitSystem, theta: float = 0.0):
    prof = optimal_profile(theta, kappa, units, matched_amplitude(kappa, theta, units))
    if variant == "optimal":
        return prof
    if variant == "clipped":
        return clip_profile(prof, kappa)
    if variant == "doppler":
        return doppler_fit(prof)
    raise ExperimentError(f"unknown fig2a variant {variant!r}")


def _fig2a_task(args):
    cfg, variant, kappa = args
    u = cfg.units
    theta = cfg.theta
    rows, fails = [], []
    try:
        m = _ti_model(u, kappa, fig2a_profile(variant, kappa, u, theta))
    except Exception as exc:
        m, setup_err = None, exc
    for g in cfg.grid("gamma"):
        if m is None:
            pt, err = None, f"{variant} kappa={kappa} Gamma={g}: {setup_err}"
        else:
            pt, err = _run_point(lambda: _steady_vs_thermal(
                lambda d: m.generator(d, g), m.h, theta, cfg.dim), f"{variant} kappa={kappa} Gamma={g}")
        rows.append({"variant": variant, "kappa": kappa, "Gamma": g,
                     "bures": pt.bures if pt else math.nan, "converged": pt.converged if pt else False})
        if err:
            fails.append(err)
    return rows, fails


def run_fig2a(cfg: ExperimentConfig) -> ResultTable:
    """Bures error at ``theta`` (default 0) over ``kappa`` and ``Gamma`` for three profiles."""
    tasks = [(cfg, v, k) for v in FIG2A_VARIANTS for k in cfg.grid("kappa")]
    groups = _map(_fig2a_task, tasks, cfg.workers)
    return _collect(("variant", "kappa", "Gamma", "bures", "converged"), cfg, groups,
                    plot="x=kappa;series=variant,Gamma")


# ---------------------------------------------------------------------------
# generic runs driven by the configured dissipator


def _require_dissipator(cfg):
    if cfg.dissipator is None:
        raise ExperimentError(f"experiment '{cfg.experiment}' needs a [dissipator] table")
    return cfg.dissipator


def _model_for(cfg, spec, displacement=0.0):
    u = cfg.units
    if isinstance(spec, QOMESpec):
        return _Model(u, lambda ops: qome_jumps(spec, ops, u), displacement), 1.0
    return _Model(u, lambda ops: spec_jump_operators(DissipatorSpec(spec.jumps), ops),
                  displacement, spec.drift), spec.overall_rate


def run_steady(cfg: ExperimentConfig) -> ResultTable:
    dcfg = _require_dissipator(cfg)
    theta = dcfg.theta if isinstance(dcfg, QOMECfg) else cfg.theta
    spec = build_dissipator(dcfg, theta, cfg.units)
    m, rate = _model_for(cfg, spec)
    pt, err = _run_point(lambda: _steady_vs_thermal(lambda d: m.generator(d, rate), m.h, theta, cfg.dim),
                         "steady")
    row = {"model": dcfg.model, "theta": theta, "bures": math.nan, "residual": math.nan,
           "gap": math.nan, "dim": cfg.dim, "converged": False}
    if pt:
        row.update(bures=pt.bures, residual=pt.residual, gap=pt.gap, converged=pt.converged)
    return _collect(("model", "theta", "bures", "residual", "gap", "dim", "converged"), cfg,
                    [([row], [err] if err else [])])


def _sweep_task(args):
    cfg, kappa, gamma, theta, dx = args
    dcfg = cfg.dissipator
    key = f"kappa={kappa} Gamma={gamma} theta={theta} dx0={dx}"

    def point():
        th = dcfg.theta if isinstance(dcfg, QOMECfg) else theta
        spec = build_dissipator(dcfg, th, cfg.units, kappa=None if isinstance(dcfg, QOMECfg) else kappa,
                                rate=gamma)
        m, rate = _model_for(cfg, spec, dx)
        return _steady_vs_thermal(lambda d: m.generator(d, rate), m.h, th, cfg.dim)

    pt, err = _run_point(point, key)
    row = {"kappa": kappa, "Gamma": gamma, "theta": theta, "dx0": dx,
           "bures": pt.bures if pt else math.nan, "converged": pt.converged if pt else False}
    return [row], [err] if err else []


def run_sweep(cfg: ExperimentConfig) -> ResultTable:
    dcfg = _require_dissipator(cfg)
    default_rate = dcfg.Gamma if isinstance(dcfg, QOMECfg) else dcfg.rate
    default_kappa = getattr(dcfg, "kappa", cfg.kappa)
    g = cfg.grids
    kappas = g.kappa or [default_kappa]
    gammas = g.gamma or [default_rate]
    thetas = g.theta or [cfg.theta]
    dxs = g.dx0 or [0.0]
    tasks = [(cfg, k, gm, th, dx) for k in kappas for gm in gammas for th in thetas for dx in dxs]
    groups = _map(_sweep_task, tasks, cfg.workers)
    return _collect(("kappa", "Gamma", "theta", "dx0", "bures", "converged"), cfg, groups)


def run_diagnose(cfg: ExperimentConfig) -> ResultTable:
    """Rate identities for the configured translation-invariant dissipator."""
    dcfg = _require_dissipator(cfg)
    if isinstance(dcfg, QOMECfg):
        raise ExperimentError("diagnose applies to translation-invariant dissipators only")
    u = cfg.units
    theta = cfg.theta
    spec = build_dissipator(dcfg, theta, u)
    reports: list[RateReport] = []
    fails: list[str] = []

    def add(fn, key):
        r, err = _run_point(fn, key)
        if r is not None:
            reports.extend(r if isinstance(r, list) else [r])
        if err:
            fails.append(err)

    add(lambda: position_diffusion_check(spec, theta, cfg.dim, u), "position_diffusion")

    def population():
        ops = build_canonical_operators(u, cfg.dim)
        h = build_hamiltonian(ops)
        alphas = (0.25, 0.5, 1.0, 2.0)
        res = population_constraint_residual(spec, h, theta, alphas, ops)
        return [RateReport(f"population_residual(alpha={a:g})", 0.0, float(r), cfg.dim, True)
                for a, r in zip(alphas, res)]

    add(population, "population_constraint")

    if isinstance(dcfg, IsotropicCfg) and dcfg.profile.kind == "optimal":
        prof = spec.jumps[0].profile
        for tp in cfg.grids.theta or [0.0, theta, max(2 * theta, 1.0)]:
            add(lambda tp=tp: energy_rate_check(prof, dcfg.kappa, tp, theta, u, cfg.dim, isotropic=True),
                f"energy_rate theta'={tp}")

    table = ResultTable(RATE_COLUMNS, metadata=_metadata(cfg), failures=fails)
    table.rows = [r.row() for r in reports]
    return table


RUNNERS = {
    "fig1a": run_fig1a,
    "fig1b": run_fig1b,
    "fig2a": run_fig2a,
    "steady": run_steady,
    "diagnose": run_diagnose,
    "sweep": run_sweep,
}


def run(cfg: ExperimentConfig) -> ResultTable:
    return RUNNERS[cfg.experiment](cfg)


# ---------------------------------------------------------------------------
# plots


def plot_table(table: ResultTable, path) -> None:
    """Multi-series line chart described by the table's ``plot`` metadata."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = dict(part.split("=", 1) for part in table.metadata["plot"].split(";"))
    xkey = spec["x"]
    skeys = spec["series"].split(",")
    series: dict[tuple, list] = {}
    for r in table.rows:
        series.setdefault(tuple(r[k] for k in skeys), []).append((r[xkey], r["bures"]))
    plt.rcParams["svg.hashsalt"] = "tidiss"
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, pts in series.items():
        pts.sort()
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=", ".join(f"{k}={v}" for k, v in zip(skeys, key)))
    ax.set_xlabel(xkey)
    ax.set_ylabel("Bures distance")
    ax.set_yscale("log")
    ax.legend(fontsize="x-small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
