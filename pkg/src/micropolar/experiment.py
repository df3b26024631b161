"""Bootstrap-instability experiment: seed the growing mode, integrate, report timescales."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nonlin as nl
from .lindyn import GrowingMode, build_growing_mode
from .params import PhysicalParams, require_oblong

DEFAULT_THETA_FACTOR = 0.05


def embedding_constant(radius: int = 40) -> float:
    """C with sup|f| <= C ||f||_{H^4} on the torus (lattice sum of <k>^-8), including a tail bound."""
    ax = np.arange(-radius, radius + 1, dtype=float)
    k2 = ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2
    s = float(np.sum((1.0 + k2) ** -4))
    # integral bound for |k| > radius: 4 pi r^-5 / 5
    s += 4.0 * math.pi * radius ** -5 / 5.0
    return math.sqrt(s / nl.VOLUME)


def small_energy_delta(p: PhysicalParams) -> float:
    jinv = 1.0 / min(p.lambda_, p.nu)
    return min(0.5, 1.0 / (2.0 * embedding_constant() * jinv))


def default_theta(p: PhysicalParams) -> float:
    return DEFAULT_THETA_FACTOR * small_energy_delta(p)


@dataclass
class ExperimentConfig:
    n: int = 16
    dt: float = 1e-3
    iota: float = 1e-4
    horizon_factor: float = 2.0
    theta_emp: float | None = None
    diagnostics_stride: int = 100
    fast_path: bool = True


@dataclass
class ExperimentLog:
    config: dict
    eta_star: float
    k_star: tuple
    theta_emp: float
    t_instability: float
    horizon: float
    records: list = field(default_factory=list)
    exit_reason: str = "horizon reached"
    t_final: float = 0.0
    t_escape: float | None = None
    t_linear_analog: float | None = None
    t_smallness_analog: float | None = None
    escaped_at_t_instability: bool | None = None
    norm_at_t_instability: float | None = None
    initial_norm: float = 0.0
    norm_at_escape: float | None = None
    max_ed_residual: float = 0.0
    max_mean_u_drift: float = 0.0
    max_div_u: float = 0.0
    final_spectrum_drift: float = 0.0
    dominance_min: float = math.inf
    dominance_max: float = -math.inf
    steps: int = 0
    final_state: object = field(default=None, repr=False)

    def summary(self) -> dict:
        keys = ("eta_star", "theta_emp", "t_instability", "horizon", "exit_reason", "t_final",
                "t_escape", "t_linear_analog", "t_smallness_analog", "escaped_at_t_instability",
                "norm_at_t_instability", "initial_norm", "norm_at_escape", "max_ed_residual",
                "max_mean_u_drift", "max_div_u", "final_spectrum_drift", "dominance_min",
                "dominance_max", "steps")
        out = {k: getattr(self, k) for k in keys}
        out["k_star"] = list(self.k_star)
        out["config"] = dict(self.config)
        return out


def initial_state(grid: nl.SpectralGrid, mode: GrowingMode, iota: float) -> nl.StateField:
    """iota * Z0 with Z0 the growing mode (a embedded symmetrically in J), ||Z0||_{L^2} = 1."""
    z = nl.state_from_growing_vector(grid, mode.k_star, mode.v_star, 1.0)
    nrm = math.sqrt(nl.split_norm_sq(grid, z.z))
    z.z *= iota / nrm
    return z


def _horizontal_norms(grid, zh):
    wb = math.sqrt(grid.norm_sq(zh[3:5]))
    a = math.sqrt(grid.norm_sq(zh[list(nl.A_COMPS)]))
    return wb + a


def run_bootstrap_experiment(p: PhysicalParams, iota: float = 1e-4, horizon_factor: float = 2.0,
                             config: ExperimentConfig | None = None, mode: GrowingMode | None = None,
                             initial: nl.StateField | None = None, stop_on_escape: bool = False,
                             on_record=None) -> ExperimentLog:
    require_oblong(p)
    cfg = config or ExperimentConfig(iota=iota, horizon_factor=horizon_factor)
    cfg.iota, cfg.horizon_factor = iota, horizon_factor
    mode = build_growing_mode(p) if mode is None else mode
    eta = mode.eta_star
    theta = cfg.theta_emp if cfg.theta_emp is not None else default_theta(p)
    grid = nl.SpectralGrid(cfg.n)
    t_i = math.log(theta / iota) / eta if iota > 0 else math.inf
    horizon = cfg.horizon_factor * t_i if iota > 0 else 1.0
    log = ExperimentLog(config=cfg.__dict__.copy(), eta_star=eta, k_star=mode.k_star, theta_emp=theta,
                        t_instability=t_i, horizon=horizon)
    z = initial if initial is not None else initial_state(grid, mode, iota)
    n_steps = int(math.ceil(horizon / cfg.dt - 1e-9))
    prev = nl.diagnostics(p, z)
    log.initial_norm = prev.norm_l2
    log.records.append(prev)
    if on_record:
        on_record(prev)
    i_half = int(math.floor(0.5 * t_i / cfg.dt + 1e-9)) if iota > 0 else 0
    i_ti = int(round(t_i / cfg.dt)) if iota > 0 else -1

    def track(rec, i):
        log.max_ed_residual = max(log.max_ed_residual, rec.ed_residual)
        log.max_mean_u_drift = max(log.max_mean_u_drift, rec.mean_u_drift)
        log.max_div_u = max(log.max_div_u, rec.div_u_max)
        if iota > 0:
            lin = iota * math.exp(eta * rec.t)
            if i <= i_half:
                ratio = rec.norm_l2 / lin
                log.dominance_min = min(log.dominance_min, ratio)
                log.dominance_max = max(log.dominance_max, ratio)
            if log.t_linear_analog is None and _horizontal_norms(grid, z.z) > 2.0 * lin:
                log.t_linear_analog = rec.t
        if log.t_smallness_analog is None and rec.norm_h4 >= theta:
            log.t_smallness_analog = rec.t
        if log.t_escape is None and rec.norm_l2 > 0.5 * theta:
            log.t_escape = rec.t
            log.norm_at_escape = rec.norm_l2
        if i == i_ti:
            log.norm_at_t_instability = rec.norm_l2
            log.escaped_at_t_instability = rec.norm_l2 > 0.5 * theta

    track(prev, 0)
    last = prev
    for i in range(1, n_steps + 1):
        try:
            znew = nl.step(p, z, cfg.dt, fast=cfg.fast_path)
        except nl.SmallEnergyViolation as exc:
            log.exit_reason = f"small-energy exit: {exc}"
            break
        except nl.NonFiniteState as exc:
            log.exit_reason = f"aborted: {exc}"
            break
        z = znew
        rec = nl.diagnostics(p, z, prev)
        track(rec, i)
        prev = rec
        last = rec
        log.steps = i
        if i % cfg.diagnostics_stride == 0 or i == n_steps:
            log.records.append(rec)
            if on_record:
                on_record(rec)
        if stop_on_escape and log.t_escape is not None:
            log.exit_reason = "escaped"
            break
    if log.records[-1] is not last:
        log.records.append(last)
    log.t_final = z.t
    log.final_spectrum_drift = last.spectrum_drift
    log.final_state = z
    return log


@dataclass
class TrajectoryLog:
    records: list
    exit_reason: str
    t_final: float
    final_state: object = field(default=None, repr=False)

    def summary(self) -> dict:
        last = self.records[-1]
        return {"exit_reason": self.exit_reason, "t_final": self.t_final,
                "max_ed_residual": max(r.ed_residual for r in self.records),
                "final_e_ins": last.e_ins, "final_norm_l2": last.norm_l2,
                "final_spectrum_drift": last.spectrum_drift}


def run_trajectory(p: PhysicalParams, z: nl.StateField, dt: float, t_end: float,
                   stride: int = 1, fast_path: bool = True) -> TrajectoryLog:
    """Integrate from z to t_end recording diagnostics every `stride` steps (any shape regime)."""
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    prev = nl.diagnostics(p, z)
    records = [prev]
    reason = "horizon reached"
    max_ed = 0.0
    for i in range(1, n_steps + 1):
        try:
            z = nl.step(p, z, dt, fast=fast_path)
        except nl.SmallEnergyViolation as exc:
            reason = f"small-energy exit: {exc}"
            break
        except nl.NonFiniteState as exc:
            reason = f"aborted: {exc}"
            break
        rec = nl.diagnostics(p, z, prev)
        max_ed = max(max_ed, rec.ed_residual)
        prev = rec
        if i % stride == 0 or i == n_steps:
            # carry the worst residual since the previous stored row
            rec_out = rec if rec.ed_residual >= max_ed else _with_residual(rec, max_ed)
            records.append(rec_out)
            max_ed = 0.0
    return TrajectoryLog(records, reason, z.t, z)


def _with_residual(rec, value):
    from dataclasses import replace
    return replace(rec, ed_residual=value)

