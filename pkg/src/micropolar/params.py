"""Physical parameters, derived constants and the two equilibrium families."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

SPECTRUM_RTOL = 1e-10

# 2x2 rotation generator, R v = v^perp
ROT2 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class PhysicalParams:
    lambda_: float
    nu: float
    mu: float
    kappa: float
    alpha: float
    beta: float
    gamma: float
    tau: float

    def as_dict(self) -> dict:
        # exact external key names
        return {"lambda": self.lambda_, "nu": self.nu, "mu": self.mu, "kappa": self.kappa,
                "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "tau": self.tau}

    def replace(self, **kw) -> "PhysicalParams":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return PhysicalParams(**vals)


PARAM_KEYS = ("lambda", "nu", "mu", "kappa", "alpha", "beta", "gamma", "tau")

# single zero-mode maximiser (k* = 0)
ZERO_MODE_PRESET = PhysicalParams(3.2, 0.6, 4.3, 3.3, 0.9, 6.8, 0.4, 4.4)
# maximiser at a nonzero lattice point
FINITE_K_PRESET = PhysicalParams(3.6, 1.2, 2.4, 0.4, 5.3, 3.1, 1.7, 20.0)
# lambda < nu, everything else as the zero-mode preset
OBLATE_PRESET = ZERO_MODE_PRESET.replace(lambda_=1.0, nu=1.5)

PRESETS = {"zero-mode": ZERO_MODE_PRESET, "finite-k": FINITE_K_PRESET, "oblate": OBLATE_PRESET}


def params_from_mapping(m) -> PhysicalParams:
    missing = [k for k in PARAM_KEYS if k not in m]
    if missing:
        raise KeyError("missing parameter keys: " + ", ".join(missing))
    v = [float(m[k]) for k in PARAM_KEYS]
    return PhysicalParams(*v)


def validate(p: PhysicalParams) -> list[str]:
    """Return the violated admissibility inequalities (empty list when admissible)."""
    bad = []
    vals = [p.lambda_, p.nu, p.mu, p.kappa, p.alpha, p.beta, p.gamma, p.tau]
    if not all(math.isfinite(v) for v in vals):
        bad.append("finite")
    if not p.mu > 0:
        bad.append("mu>0")
    if not p.kappa > 0:
        bad.append("kappa>0")
    if not p.alpha + 4.0 * p.beta / 3.0 > 0:
        bad.append("alpha+4beta/3>0")
    if not p.beta + p.gamma > 0:
        bad.append("beta+gamma>0")
    if not p.nu > 0:
        bad.append("nu>0")
    if not 2.0 * p.lambda_ > p.nu:
        bad.append("2lambda>nu")
    if not p.tau > 0:
        bad.append("tau>0")
    return bad


def require_admissible(p: PhysicalParams) -> None:
    bad = validate(p)
    if bad:
        raise ValueError("inadmissible parameters: " + ", ".join(bad))


@dataclass(frozen=True)
class DerivedConstants:
    mu_tilde: float
    alpha_tilde: float
    gamma_tilde: float
    d: float
    phi: float
    c: float
    s: Optional[float]
    c_sigma: float

    @property
    def s_defined(self) -> bool:
        return self.s is not None


def derive_constants(p: PhysicalParams) -> DerivedConstants:
    mu_t = p.mu + p.kappa / 2.0
    al_t = p.alpha + 4.0 * p.beta / 3.0
    ga_t = p.beta + p.gamma
    d = p.tau / (2.0 * p.kappa)
    ratio = 1.0 - p.nu / p.lambda_
    # phi is real only when lambda > nu; clipped to 0 otherwise
    phi = math.sqrt(ratio) * d if ratio > 0 else 0.0
    c = (p.nu / p.lambda_ - 1.0) * d
    s = -d / math.sqrt(p.lambda_ - p.nu) if p.lambda_ > p.nu else None
    c_sigma = phi * phi * p.lambda_ / min(al_t, ga_t)
    return DerivedConstants(mu_t, al_t, ga_t, d, phi, c, s, c_sigma)


def classify_shape(p: PhysicalParams) -> str:
    if p.lambda_ > p.nu:
        return "oblong"
    if p.lambda_ < p.nu:
        return "oblate"
    return "isotropic-degenerate"


def require_oblong(p: PhysicalParams) -> None:
    require_admissible(p)
    if not p.lambda_ > p.nu:
        raise ValueError(f"requires lambda > nu (shape is {classify_shape(p)})")


@dataclass(frozen=True)
class EquilibriumState:
    omega_eq: np.ndarray
    j_eq: np.ndarray
    u_eq: np.ndarray
    p_eq: float = 0.0


def equilibrium(p: PhysicalParams) -> EquilibriumState:
    d = p.tau / (2.0 * p.kappa)
    return EquilibriumState(
        omega_eq=np.array([0.0, 0.0, d]),
        j_eq=np.diag([p.lambda_, p.lambda_, p.nu]),
        u_eq=np.zeros(3),
    )


@dataclass(frozen=True)
class HomogeneousState:
    """A spatially constant full state (u, p, omega, J)."""
    u: np.ndarray
    p: float
    omega: np.ndarray
    J: np.ndarray


def rotation2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def check_jbar_spectrum(p: PhysicalParams, jbar0) -> np.ndarray:
    jb = np.asarray(jbar0, dtype=float)
    if jb.shape != (2, 2) or not np.allclose(jb, jb.T, rtol=0, atol=SPECTRUM_RTOL * abs(p.lambda_)):
        raise ValueError("jbar0 must be a symmetric 2x2 matrix")
    ev = np.sort(np.linalg.eigvalsh(0.5 * (jb + jb.T)))
    want = np.sort([p.lambda_, p.nu])
    if np.max(np.abs(ev - want) / np.abs(want)) > SPECTRUM_RTOL:
        raise ValueError(f"jbar0 spectrum {ev} differs from {{lambda, nu}} = {want}")
    return jb


def energetic_equilibrium(p: PhysicalParams, jbar0, t: float) -> HomogeneousState:
    """Orbit J(t) = e^{t d R} jbar0 e^{-t d R} (+) lambda with u = 0, omega = omega_eq."""
    require_oblong(p)
    jb = check_jbar_spectrum(p, jbar0)
    d = p.tau / (2.0 * p.kappa)
    r = rotation2(d * t)
    J = np.zeros((3, 3))
    J[:2, :2] = r @ jb @ r.T
    J[2, 2] = p.lambda_
    return HomogeneousState(np.zeros(3), 0.0, np.array([0.0, 0.0, d]), J)


def energetic_equilibrium_rate(p: PhysicalParams, jbar0, t: float) -> np.ndarray:
    """d/dt of the orbit: d [R, Jbar(t)] (+) 0."""
    st = energetic_equilibrium(p, jbar0, t)
    d = p.tau / (2.0 * p.kappa)
    jb = st.J[:2, :2]
    out = np.zeros((3, 3))
    out[:2, :2] = d * (ROT2 @ jb - jb @ ROT2)
    return out


def orbit_period(p: PhysicalParams) -> float:
    return 4.0 * math.pi * p.kappa / p.tau


def default_jbar0(p: PhysicalParams, angle: float = 0.3) -> np.ndarray:
    """diag(nu, lambda) rotated by a fixed angle; the orbit then has J33 = lambda."""
    r = rotation2(angle)
    return r @ np.diag([p.nu, p.lambda_]) @ r.T
