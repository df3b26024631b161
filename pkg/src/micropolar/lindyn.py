"""Linear dynamics of the (u, omega, a) block as Fourier multipliers on truncated fields."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import eigen
from .params import PhysicalParams, derive_constants, require_oblong
from .spectral import MaxModeResult, find_max_unstable
from .symbol import build_bhat, build_m, build_q

VOLUME = (2.0 * math.pi) ** 3


def mode_axis(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, 1.0 / n).astype(int)


@dataclass
class LinearField:
    """Fourier coefficients c[comp, i, j, l] of an 8-component field on a mode cube
    (fft ordering), f(x) = sum_k c_k e^{i k.x}."""
    coeffs: np.ndarray

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def wavenumbers(self) -> np.ndarray:
        ax = mode_axis(self.n)
        return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)

    def copy(self) -> "LinearField":
        return LinearField(self.coeffs.copy())


def zero_field(n: int) -> LinearField:
    return LinearField(np.zeros((8, n, n, n), dtype=complex))


def _flat_k(field: LinearField) -> np.ndarray:
    return field.wavenumbers().reshape(-1, 3).astype(float)


def bracket_weight(kflat: np.ndarray, r: float) -> np.ndarray:
    return (1.0 + np.einsum("ni,ni->n", kflat, kflat)) ** r


def hr_norm(field: LinearField, r: float = 0.0, comps=slice(None)) -> float:
    c = field.coeffs[comps].reshape(field.coeffs[comps].shape[0], -1)
    w = bracket_weight(_flat_k(field), r)
    return math.sqrt(VOLUME * float(np.sum(w * np.sum(np.abs(c) ** 2, axis=0))))


def divergence_max(field: LinearField) -> float:
    k = field.wavenumbers().reshape(-1, 3)
    u = field.coeffs[:3].reshape(3, -1)
    return float(np.max(np.abs(np.einsum("ni,in->n", k, u))))


def reality_defect(field: LinearField) -> float:
    c = field.coeffs
    flipped = np.conj(np.roll(c[:, ::-1, ::-1, ::-1], 1, axis=(1, 2, 3)))
    return float(np.max(np.abs(c - flipped)))


_PROP_CACHE: dict = {}


def _propagators(p: PhysicalParams, n: int, t: float) -> np.ndarray:
    key = (p, n, float(t))
    hit = _PROP_CACHE.get(key)
    if hit is None:
        ax = mode_axis(n)
        ks = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3).astype(float)
        hit = scipy.linalg.expm(t * build_bhat(p, ks))
        if len(_PROP_CACHE) > 32:
            _PROP_CACHE.clear()
        _PROP_CACHE[key] = hit
    return hit


def semigroup_apply(p: PhysicalParams, field: LinearField, t: float) -> LinearField:
    """Multiply every mode by e^{t Bhat_k}."""
    if t < 0:
        raise ValueError("semigroup is only defined for t >= 0")
    e = _propagators(p, field.n, t)
    c = field.coeffs.reshape(8, -1)
    out = np.einsum("nij,jn->in", e, c)
    return LinearField(out.reshape(field.coeffs.shape))


def leray(field: LinearField) -> LinearField:
    k = field.wavenumbers().reshape(-1, 3).astype(float)
    k2 = np.einsum("ni,ni->n", k, k)
    u = field.coeffs[:3].reshape(3, -1)
    kd = np.einsum("ni,in->n", k, u)
    safe = np.where(k2 > 0, k2, 1.0)
    u = u - k.T * (kd / safe)
    out = field.coeffs.copy()
    out[:3] = u.reshape(field.coeffs[:3].shape)
    return LinearField(out)


def random_field(n: int, rng: np.random.Generator, decay: float = 1.0) -> LinearField:
    """Real-valued, divergence-free random field with spectrally decaying amplitudes."""
    c = rng.normal(size=(8, n, n, n)) + 1j * rng.normal(size=(8, n, n, n))
    f = LinearField(c)
    k = f.wavenumbers().reshape(-1, 3)
    c = c * np.exp(-decay * np.einsum("ni,ni->n", k, k)).reshape(1, n, n, n) ** 0.5
    f = LinearField(c)
    flipped = np.conj(np.roll(c[:, ::-1, ::-1, ::-1], 1, axis=(1, 2, 3)))
    f = LinearField(0.5 * (c + flipped))
    f = leray(f)
    f.coeffs[:3, 0, 0, 0] = 0.0
    return f


def e_lin(p: PhysicalParams, field: LinearField) -> float:
    """Integral of 1/2|u|^2 + 1/2 J_eq w.w - 1/2 d^2/(lambda-nu) |a|^2 (exact, via Parseval)."""
    dc = derive_constants(p)
    c = field.coeffs.reshape(8, -1)
    jd = np.array([p.lambda_, p.lambda_, p.nu])
    dens = (0.5 * np.sum(np.abs(c[:3]) ** 2)
            + 0.5 * np.sum(jd[:, None] * np.abs(c[3:6]) ** 2)
            - 0.5 * dc.d ** 2 / (p.lambda_ - p.nu) * np.sum(np.abs(c[6:8]) ** 2))
    return VOLUME * float(dens)


def dissipation_modes(p: PhysicalParams, k: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-mode dissipation density for coefficient columns u, w (3, n) at wavenumbers k (n, 3).

    The curl(w) weight is gamma, which makes the transverse spin rate beta + gamma as in the equations."""
    ik = 1j * k.T                                       # (3, n)
    gu = ik[:, None, :] * u[None, :, :]                 # (d_i u_j)
    gw = ik[:, None, :] * w[None, :, :]
    du = gu + np.swapaxes(gu, 0, 1)
    dw = gw + np.swapaxes(gw, 0, 1)
    divw = np.einsum("iin->n", gw)
    d0w = dw - (2.0 / 3.0) * divw[None, None, :] * np.eye(3)[:, :, None]
    curlu = np.cross(ik.T, u.T).T
    curlw = np.cross(ik.T, w.T).T
    rel = 0.5 * curlu - w
    return (0.5 * p.mu * np.sum(np.abs(du) ** 2, axis=(0, 1))
            + 2.0 * p.kappa * np.sum(np.abs(rel) ** 2, axis=0)
            + p.alpha * np.abs(divw) ** 2
            + 0.5 * p.beta * np.sum(np.abs(d0w) ** 2, axis=(0, 1))
            + p.gamma * np.sum(np.abs(curlw) ** 2, axis=0))


def dissipation(p: PhysicalParams, field: LinearField) -> float:
    k = _flat_k(field)
    c = field.coeffs.reshape(8, -1)
    return VOLUME * float(np.sum(dissipation_modes(p, k, c[:3], c[3:6])))


@dataclass
class GrowingMode:
    k_star: tuple
    w_star: complex
    v_star: np.ndarray          # unit eigenvector of Bhat_{k*}
    y_star: np.ndarray          # eigenvector of M_{k*}
    residual: float
    search: MaxModeResult

    @property
    def eta_star(self) -> float:
        return self.w_star.real

    def field(self, n: int, t: float = 0.0, amplitude: float = 1.0) -> LinearField:
        """Y(t) = v* e^{w* t + i k*.x} + conj on an n-mode cube."""
        f = zero_field(n)
        ax = mode_axis(n)
        idx = tuple(int(np.where(ax == kk)[0][0]) for kk in self.k_star)
        nidx = tuple(int(np.where(ax == -kk)[0][0]) for kk in self.k_star)
        coef = amplitude * self.v_star * np.exp(self.w_star * t)
        f.coeffs[(slice(None),) + idx] += coef
        f.coeffs[(slice(None),) + nidx] += np.conj(coef)
        return f

    def to_dict(self) -> dict:
        return {
            "k_star": list(self.k_star),
            "w_star": {"re": self.w_star.real, "im": self.w_star.imag},
            "eta_star": self.eta_star,
            "v_star": [{"re": z.real, "im": z.imag} for z in self.v_star],
            "residual": self.residual,
            "maximizers": [list(k) for k in self.search.maximizers],
        }


def build_growing_mode(p: PhysicalParams, search: MaxModeResult | None = None) -> GrowingMode:
    require_oblong(p)
    search = find_max_unstable(p) if search is None else search
    if not search.found:
        raise ValueError("no unstable lattice mode found")
    k = np.array(search.k_star, dtype=float)
    pairs = eigen.eig(build_m(p, k))
    j = int(np.argmin(np.abs(pairs.values - search.w_star)))
    w = complex(pairs.values[j])
    y = pairs.vectors[:, j]
    _, qbar = build_q(p, k)
    v = qbar @ y
    v = eigen.normalize_vector(v)
    b = build_bhat(p, k)
    res = float(np.linalg.norm(b @ v - w * v) / max(np.linalg.norm(b, 2), 1e-300))
    if res > 1e-9:
        raise ValueError(f"eigenvector residual {res:.3e} too large (defective eigenvalue?)")
    return GrowingMode(tuple(int(x) for x in search.k_star), w, v, y, res, search)


def real_space_snapshot(field: LinearField, grid_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the field on a grid_n^3 grid; returns (points (M, 3), values (M, 8))."""
    x = 2.0 * math.pi * np.arange(grid_n) / grid_n
    pts = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    k = field.wavenumbers().reshape(-1, 3)
    c = field.coeffs.reshape(8, -1)
    nz = np.nonzero(np.any(c != 0, axis=0))[0]
    phase = np.exp(1j * pts @ k[nz].T.astype(float))
    vals = (phase @ c[:, nz].T).real
    return pts, vals


def negative_direction_witness(p: PhysicalParams, n: int = 3) -> LinearField:
    """A constant pure-a field, which has E_lin < 0 whenever lambda > nu."""
    f = zero_field(n)
    f.coeffs[6, 0, 0, 0] = 1.0
    return f
