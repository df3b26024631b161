"""Pseudo-spectral Fourier-Galerkin solver for the full system in perturbation form.

State layout: 12 components (u1, u2, u3, w1, w2, w3, J11, J12, J13, J22, J23, J33),
all perturbations of the rest state, stored only on the dealiased modes of an
rfft grid ("packed" layout, shape (12, n_modes)).  Coefficients are normalised so
that f(x) = sum_k f_k e^{i k.x}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft
import scipy.linalg

from .params import PhysicalParams, derive_constants, require_admissible
from .spectral import worker_count

VOLUME = (2.0 * math.pi) ** 3
U, W, JS = slice(0, 3), slice(3, 6), slice(6, 12)
# (row, col) of the six stored symmetric components
SYM_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SYM_OF = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])
A_COMPS = (8, 10)       # J13, J23
JBAR_COMPS = (6, 7, 9)  # J11, J12, J22
SMALL_ENERGY_LIMIT = 0.5


class SmallEnergyViolation(RuntimeError):
    pass


class NonFiniteState(RuntimeError):
    pass


# ---------------------------------------------------------------- grid

class SpectralGrid:
    """N^3 physical grid, rfft storage, 2/3-rule mode set |k_i| <= N // 3."""

    def __init__(self, n: int):
        if n < 4 or n % 2:
            raise ValueError("grid size must be an even integer >= 4")
        self.n = n
        self.nz = n // 2 + 1
        self.kmax = n // 3
        kx = np.fft.fftfreq(n, 1.0 / n).astype(int)
        kz = np.arange(self.nz)
        ii, jj, ll = np.meshgrid(np.arange(n), np.arange(n), kz, indexing="ij")
        k = np.stack([kx[ii], kx[jj], ll], axis=-1).reshape(-1, 3)
        keep = np.all(np.abs(k) <= self.kmax, axis=1)
        flat = np.flatnonzero(keep)
        # mean mode first, then in storage order
        k = k[flat]
        self.flat_index = flat
        self.k = k
        self.kf = k.astype(float)
        self.k2 = np.einsum("ni,ni->n", self.kf, self.kf)
        self.n_modes = len(k)
        assert not np.any(k[0])
        # Parseval weights: modes with kz > 0 stand for themselves and their conjugate
        self.weight = np.where(k[:, 2] == 0, 1.0, 2.0)
        # kz = 0 plane: conjugate partner index
        lookup = {tuple(v): i for i, v in enumerate(k)}
        self.mirror = np.array([lookup.get((-a, -b, 0), -1) if c == 0 else -1 for a, b, c in k])
        self.plane = np.flatnonzero(k[:, 2] == 0)
        x = 2.0 * math.pi * np.arange(n) / n
        self.x = x

    @property
    def shape(self):
        return (self.n, self.n, self.nz)

    def scatter(self, packed: np.ndarray) -> np.ndarray:
        out = np.zeros((packed.shape[0], self.n * self.n * self.nz), dtype=complex)
        out[:, self.flat_index] = packed
        return out.reshape((packed.shape[0],) + self.shape)

    def gather(self, full: np.ndarray) -> np.ndarray:
        return full.reshape(full.shape[0], -1)[:, self.flat_index]

    def to_physical(self, packed: np.ndarray) -> np.ndarray:
        full = self.scatter(packed)
        n3 = self.n ** 3
        return scipy.fft.irfftn(full * n3, s=(self.n,) * 3, axes=(-3, -2, -1), workers=worker_count())

    def to_spectral(self, phys: np.ndarray) -> np.ndarray:
        full = scipy.fft.rfftn(phys, axes=(-3, -2, -1), workers=worker_count()) / self.n ** 3
        return self.symmetrize(self.gather(full))

    def symmetrize(self, packed: np.ndarray) -> np.ndarray:
        """Impose f(-k) = conj f(k) exactly on the kz = 0 plane."""
        pl = self.plane
        mi = self.mirror[pl]
        packed[:, pl] = 0.5 * (packed[:, pl] + np.conj(packed[:, mi]))
        return packed

    def reality_defect(self, packed: np.ndarray) -> float:
        pl = self.plane
        return float(np.max(np.abs(packed[:, pl] - np.conj(packed[:, self.mirror[pl]])), initial=0.0))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Real L^2 inner product of packed fields (components summed)."""
        return VOLUME * float(np.sum(self.weight * np.real(a * np.conj(b))))

    def norm_sq(self, a: np.ndarray, r: float = 0.0) -> float:
        w = self.weight * (1.0 + self.k2) ** r if r else self.weight
        return VOLUME * float(np.sum(w * np.abs(a) ** 2))

    def mode_index(self, k) -> int:
        k = tuple(int(x) for x in k)
        if k[2] < 0:
            raise ValueError("use the kz >= 0 representative")
        hits = np.flatnonzero(np.all(self.k == np.array(k), axis=1))
        if not len(hits):
            raise ValueError(f"mode {k} not in the dealiased set")
        return int(hits[0])


# ---------------------------------------------------------------- state

@dataclass
class StateField:
    grid: SpectralGrid
    z: np.ndarray            # (12, n_modes) complex, perturbation coefficients
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def u(self):
        return self.z[U]

    @property
    def omega(self):
        return self.z[W]

    @property
    def j(self):
        return self.z[JS]

    def copy(self) -> "StateField":
        return StateField(self.grid, self.z.copy(), self.t)

    def is_homogeneous(self) -> bool:
        return not np.any(self.z[:, 1:])


def zero_state(grid: SpectralGrid) -> StateField:
    return StateField(grid, np.zeros((12, grid.n_modes), dtype=complex))


def sym_to_mat(j6):
    """(6, ...) symmetric components -> (3, 3, ...)."""
    return j6[_SYM_OF]


def mat_to_sym(m):
    return np.stack([m[r, c] for r, c in SYM_INDEX])


def jeq_diag(p: PhysicalParams) -> np.ndarray:
    return np.array([p.lambda_, p.lambda_, p.nu])


def omega_eq(p: PhysicalParams) -> np.ndarray:
    return np.array([0.0, 0.0, derive_constants(p).d])


# ---------------------------------------------------------------- pointwise kernels

def _bc(v, like):
    """Broadcast a constant 3-vector to a component-first field shape."""
    return np.asarray(v).reshape((3,) + (1,) * (like.ndim - 1))


def cross(a, b):
    if a.shape == b.shape:
        out = np.empty_like(a)
    else:
        out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


def matvec(m, v):
    return np.einsum("ij...,j...->i...", m, v)


def spin(w):
    """Skew matrix field Omega with Omega v = w x v."""
    z = np.zeros_like(w[0])
    return np.stack([np.stack([z, -w[2], w[1]]),
                     np.stack([w[2], z, -w[0]]),
                     np.stack([-w[1], w[0], z])])


def commutator(a, b):
    return np.einsum("ik...,kj...->ij...", a, b) - np.einsum("ik...,kj...->ij...", b, a)


def pointwise_norm2(m):
    """Operator 2-norm of a (3, 3, ...) matrix field, pointwise."""
    flat = np.moveaxis(m.reshape(3, 3, -1), -1, 0)
    return np.linalg.norm(flat, 2, axis=(1, 2)).reshape(m.shape[2:])


def m_inverse(a, check: bool = True):
    """Pointwise (I + a)^-1 for a (3, 3, ...) field, via the adjugate."""
    a = np.asarray(a, dtype=float)
    if check:
        nrm = pointwise_norm2(a)
        if np.any(nrm >= 1.0):
            raise SmallEnergyViolation(f"pointwise norm {float(nrm.max()):.6g} >= 1")
    m = a + np.eye(3).reshape((3, 3) + (1,) * (a.ndim - 2))
    inv = np.empty_like(m)
    inv[0, 0] = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    inv[0, 1] = m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]
    inv[0, 2] = m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]
    inv[1, 0] = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    inv[1, 1] = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    inv[1, 2] = m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]
    inv[2, 0] = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    inv[2, 1] = m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]
    inv[2, 2] = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    det = m[0, 0] * inv[0, 0] + m[0, 1] * inv[1, 0] + m[0, 2] * inv[2, 0]
    return inv / det


def _pointwise(p, w, jm, fdiff):
    """Pointwise part of the angular-momentum and microinertia nonlinearities.

    w: (3, ...) perturbation spin, jm: (3, 3, ...) perturbation inertia,
    fdiff: (3, ...) differential linear terms kappa curl u + (at - gt) grad div w + gt lap w.
    Returns (X, NJ) with X = (I + A)^-1 (A F + Q) and NJ = [Omega, J].
    """
    jd = jeq_diag(p)
    d = derive_constants(p).d
    jeq_w = _bc(jd, w) * w
    a = jm / jd.reshape((1, 3) + (1,) * (w.ndim - 1))          # J J_eq^-1
    jw = matvec(jm, w)
    j_weq = d * jm[:, 2]                                      # J w_eq
    # w x J_eq w_eq + w_eq x J w_eq + w_eq x J_eq w, with w_eq = d e3
    flin = fdiff - 2.0 * p.kappa * w - (p.nu * d * _cross_e3(w) - d * _cross_e3(j_weq)
                                        - d * _cross_e3(jeq_w))
    q = cross(w, jw + jeq_w + j_weq) - d * _cross_e3(jw)
    x = matvec(m_inverse(a, check=False), matvec(a, flin) + q)
    nj = commutator(spin(w), jm)
    return x, nj


def _cross_e3(v):
    """v x e3."""
    out = np.zeros_like(v)
    out[0] = v[1]
    out[1] = -v[0]
    return out


# ---------------------------------------------------------------- spectral operators

def leray_project(u: np.ndarray, k: np.ndarray) -> np.ndarray:
    """(I - k k / |k|^2) u per mode; k = 0 untouched.  u: (3, n) packed, k: (n, 3)."""
    kf = np.asarray(k, dtype=float)
    k2 = np.einsum("ni,ni->n", kf, kf)
    safe = np.where(k2 > 0, k2, 1.0)
    kd = np.einsum("ni,in->n", kf, u)
    return u - kf.T * (kd / safe)


def _ik(grid):
    return 1j * grid.kf.T        # (3, n)


def _fdiff_hat(p, grid, zh):
    dc = derive_constants(p)
    ik = _ik(grid)
    uh, wh = zh[U], zh[W]
    curl = cross(ik, uh)
    divw = np.sum(ik * wh, axis=0)
    return (p.kappa * curl + (dc.alpha_tilde - dc.gamma_tilde) * ik * divw
            - dc.gamma_tilde * grid.k2 * wh)


def _physical_state(grid, zh):
    return grid.to_physical(zh)


def raw_nonlinearity(p: PhysicalParams, grid: SpectralGrid, zh: np.ndarray, fast: bool = True):
    """(N1, N2, N3) in packed layout, N2 before division by J_eq; velocity part not projected."""
    out = np.zeros_like(zh)
    if fast and not np.any(zh[:, 1:]):
        # spatially constant state: no derivatives, no advection, single point
        z0 = zh[:, 0].real
        w = z0[W].reshape(3, 1)
        jm = sym_to_mat(z0[JS].reshape(6, 1))
        x, nj = _pointwise(p, w, jm, np.zeros((3, 1)))
        out[W, 0] = -x[:, 0]
        out[JS, 0] = mat_to_sym(nj)[:, 0]
        return out
    fd = _fdiff_hat(p, grid, zh)
    phys = grid.to_physical(np.concatenate([zh, fd]))
    u, w, j6, fdp = phys[U], phys[W], phys[JS], phys[12:15]
    jm = sym_to_mat(j6)
    x, nj = _pointwise(p, w, jm, fdp)
    # divergence-form advection (u is divergence free): (u.grad) f = div(u f)
    uu = np.stack([u[a] * u[b] for a in range(3) for b in range(3)])
    uw = np.stack([u[a] * w[b] for a in range(3) for b in range(3)])
    uj = np.stack([u[a] * j6[b] for a in range(3) for b in range(6)])
    fields = np.concatenate([uu, uw, uj, x, mat_to_sym(nj)])
    sp = grid.to_spectral(fields)
    ik = _ik(grid)
    uuh = sp[0:9].reshape(3, 3, -1)
    uwh = sp[9:18].reshape(3, 3, -1)
    ujh = sp[18:36].reshape(3, 6, -1)
    xh, njh = sp[36:39], sp[39:45]
    jd = jeq_diag(p)
    out[U] = -np.einsum("an,abn->bn", ik, uuh)
    out[W] = -jd[:, None] * np.einsum("an,abn->bn", ik, uwh) - xh
    out[JS] = njh - np.einsum("an,abn->bn", ik, ujh)
    return out


def nonlinear_tendency(p, grid, zh, fast=True, k=None):
    """D^-1 P N(Z): the nonlinear contribution to dZ/dt.  k overrides the mode list when zh
    holds only a leading subset of the columns (used by the homogeneous path)."""
    nl = raw_nonlinearity(p, grid, zh, fast)
    nl[W] /= jeq_diag(p)[:, None]
    nl[U] = leray_project(nl[U], grid.k[: zh.shape[1]] if k is None else k)
    return nl


def nonlinearity(p: PhysicalParams, z: StateField, check: bool = True) -> StateField:
    """N(Z) = (N1, N2, N3) with N2 in its undivided form."""
    if check:
        inside, _ = small_energy_check(p, z)
        if not inside:
            raise SmallEnergyViolation("state outside the small-energy regime")
    return StateField(z.grid, raw_nonlinearity(p, z.grid, z.z), z.t)


def small_energy_check(p: PhysicalParams, z: StateField) -> tuple[bool, float]:
    """Inside iff max_x ||J(x) J_eq^-1||_2 <= 1/2; returns (inside, margin)."""
    if z.is_homogeneous():
        j6 = z.z[JS, 0].real.reshape(6, 1)
    else:
        j6 = z.grid.to_physical(z.z[JS])
    a = sym_to_mat(j6) / jeq_diag(p).reshape((1, 3) + (1,) * (j6.ndim - 1))
    val = float(np.max(pointwise_norm2(a)))
    return val <= SMALL_ENERGY_LIMIT, SMALL_ENERGY_LIMIT - val


# ---------------------------------------------------------------- linear part

def linear_action(p: PhysicalParams, k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linearised dynamics applied to coefficient columns x (12, n) at wavenumbers k (n, 3)."""
    dc = derive_constants(p)
    kf = np.asarray(k, dtype=float)
    ik = 1j * kf.T
    k2 = np.einsum("ni,ni->n", kf, kf)
    jd = jeq_diag(p)
    weq = _bc(omega_eq(p), x[W])
    u = leray_project(x[U], kf)
    w = x[W]
    jm = sym_to_mat(x[JS])
    out = np.zeros_like(x, dtype=complex)
    out[U] = -dc.mu_tilde * k2 * u + leray_project(p.kappa * cross(ik, w), kf)
    rhs_w = (p.kappa * cross(ik, u) - 2.0 * p.kappa * w
             + (dc.alpha_tilde - dc.gamma_tilde) * ik * np.sum(ik * w, axis=0)
             - dc.gamma_tilde * k2 * w
             - (cross(w, _bc(jd, w) * weq) + cross(weq, matvec(jm, weq)) + cross(weq, _bc(jd, w) * w)))
    out[W] = rhs_w / jd[:, None]
    jeq_m = np.diag(jd).reshape(3, 3, 1)
    out[JS] = mat_to_sym(commutator(spin(weq * np.ones_like(w.real)), jm) + commutator(spin(w), jeq_m))
    return out


def linear_symbol(p: PhysicalParams, k: np.ndarray) -> np.ndarray:
    """(n, 12, 12) per-mode matrices of the linearised operator."""
    kf = np.atleast_2d(np.asarray(k, dtype=float))
    n = kf.shape[0]
    out = np.zeros((n, 12, 12), dtype=complex)
    for j in range(12):
        e = np.zeros((12, n), dtype=complex)
        e[j] = 1.0
        out[:, :, j] = linear_action(p, kf, e).T
    return out


def linear_rhs(p, grid, zh):
    return np.einsum("nij,jn->in", _symbol_cache(p, grid), zh)


_SYM_CACHE: dict = {}
_EXP_CACHE: dict = {}


def _symbol_cache(p, grid):
    key = (p, grid.n)
    if key not in _SYM_CACHE:
        _SYM_CACHE[key] = linear_symbol(p, grid.k)
    return _SYM_CACHE[key]


def propagator(p: PhysicalParams, grid: SpectralGrid, h: float) -> np.ndarray:
    """exp(h L_k) on every dealiased mode, kz = 0 plane made exactly conjugate-symmetric."""
    key = (p, grid.n, float(h))
    hit = _EXP_CACHE.get(key)
    if hit is not None:
        return hit
    e = scipy.linalg.expm(h * _symbol_cache(p, grid))
    pl = grid.plane
    mi = grid.mirror[pl]
    for i, m in zip(pl, mi):
        if m < i:
            e[i] = np.conj(e[m])
        elif m == i:
            e[i] = e[i].real
    if len(_EXP_CACHE) > 16:
        _EXP_CACHE.clear()
    _EXP_CACHE[key] = e
    return e


def _apply(e, zh):
    return np.einsum("nij,jn->in", e, zh)


def rhs(p: PhysicalParams, z: StateField, nonlinear: bool = True) -> StateField:
    """dZ/dt = L Z + D^-1 P N(Z)."""
    require_admissible(p)
    d = linear_rhs(p, z.grid, z.z)
    if nonlinear:
        d = d + nonlinear_tendency(p, z.grid, z.z)
    return StateField(z.grid, d, z.t)


# ---------------------------------------------------------------- stepping

def _rk3(p, g, eh, e2, z0, dt, nonlinear, fast):
    if not nonlinear:
        return _apply(eh, z0)
    n1 = nonlinear_tendency(p, g, z0, fast)
    z2 = _apply(e2, z0 + 0.5 * dt * n1)
    n2 = nonlinear_tendency(p, g, z2, fast)
    e_n1 = _apply(eh, n1)
    e2n2 = _apply(e2, n2)
    ez0 = _apply(eh, z0)
    z3 = ez0 - dt * e_n1 + 2.0 * dt * e2n2
    n3 = nonlinear_tendency(p, g, z3, fast)
    return ez0 + (dt / 6.0) * (e_n1 + 4.0 * e2n2 + n3)


def step(p: PhysicalParams, z: StateField, dt: float, nonlinear: bool = True,
         check_energy: bool = True, fast: bool = True) -> StateField:
    """One integrating-factor RK3 step (Kutta coefficients); the whole linear part is exact."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if check_energy:
        inside, margin = small_energy_check(p, z)
        if not inside:
            raise SmallEnergyViolation(f"small-energy exit at t={z.t:.17g} (margin {margin:.3e})")
    g = z.grid
    eh = propagator(p, g, dt)
    e2 = propagator(p, g, 0.5 * dt)
    z0 = z.z
    if fast and not np.any(z0[:, 1:]):
        # spatially constant state stays constant: advance the mean mode alone
        znew = np.zeros_like(z0)
        znew[:, :1] = _rk3(p, g, eh[:1], e2[:1], z0[:, :1], dt, nonlinear, True)
    else:
        znew = _rk3(p, g, eh, e2, z0, dt, nonlinear, fast)
    g.symmetrize(znew)
    znew[:, 0] = znew[:, 0].real
    if not np.all(np.isfinite(znew)):
        raise NonFiniteState(f"non-finite state after step from t={z.t:.17g}")
    return StateField(g, znew, z.t + dt)


# ---------------------------------------------------------------- pressure

def reconstruct_pressure(p: PhysicalParams, z: StateField) -> np.ndarray:
    """Packed zero-mean pressure perturbation with grad p = (I - P) N1."""
    n1 = raw_nonlinearity(p, z.grid, z.z)[U]
    k = z.grid.kf
    k2 = z.grid.k2
    safe = np.where(k2 > 0, k2, 1.0)
    # i k p = k (k.N1)/|k|^2  =>  p = -i k.N1 / |k|^2
    ph = -1j * np.einsum("ni,in->n", k, n1) / safe
    ph[0] = 0.0
    return ph


# ---------------------------------------------------------------- diagnostics

@dataclass
class DiagnosticsRecord:
    t: float
    e_rel: float
    dissipation: float
    ed_residual: float
    e_ins: float
    unstable_term: float
    spectrum_drift: float
    mean_u_drift: float
    div_u_max: float
    norm_l2: float
    norm_h4: float
    e_shift: float = field(default=0.0, repr=False)   # E_rel minus its equilibrium value

    FIELDS = ("t", "e_rel", "dissipation", "ed_residual", "e_ins", "unstable_term",
              "spectrum_drift", "mean_u_drift", "div_u_max", "norm_l2", "norm_h4")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def _split_weights():
    wts = np.ones(12)
    wts[7] = 2.0
    return wts


def split_norm_sq(grid: SpectralGrid, zh: np.ndarray, r: float = 0.0) -> float:
    """||u||^2 + ||w||^2 + ||a||^2 + ||Jbar||_F^2 + ||J33||^2: each product of inertia J13, J23
    counted once (as a), the horizontal one J12 twice (Frobenius)."""
    w = grid.weight * (1.0 + grid.k2) ** r if r else grid.weight
    return VOLUME * float(np.sum(_split_weights()[:, None] * w * np.abs(zh) ** 2))


def _dissipation_modes(p, k, u, w):
    from .lindyn import dissipation_modes
    return dissipation_modes(p, k, u, w)


def dissipation_value(p: PhysicalParams, grid: SpectralGrid, zh: np.ndarray) -> float:
    dens = _dissipation_modes(p, grid.kf, zh[U], zh[W])
    return VOLUME * float(np.sum(grid.weight * dens))


def energy_shift(p: PhysicalParams, grid: SpectralGrid, zh: np.ndarray, phys=None) -> float:
    """E_rel - E_eq = int 1/2|u|^2 + 1/2 (J_eq + J) w.w - 1/2 J33 d^2."""
    d = derive_constants(p).d
    if not np.any(zh[:, 1:]):
        z0 = zh[:, 0].real
        w = z0[W]
        jm = sym_to_mat(z0[JS])
        dens = (0.5 * z0[U] @ z0[U] + 0.5 * w @ (jeq_diag(p) * w) + 0.5 * w @ jm @ w
                - 0.5 * z0[11] * d * d)
        return VOLUME * float(dens)
    if phys is None:
        phys = grid.to_physical(zh)
    u, w, j6 = phys[U], phys[W], phys[JS]
    jm = sym_to_mat(j6)
    dens = (0.5 * np.sum(u * u, axis=0) + 0.5 * np.sum(_bc(jeq_diag(p), w) * w * w, axis=0)
            + 0.5 * np.sum(w * matvec(jm, w), axis=0) - 0.5 * j6[5] * d * d)
    return VOLUME * float(np.mean(dens))


def equilibrium_energy(p: PhysicalParams) -> float:
    return -0.5 * p.nu * derive_constants(p).d ** 2 * VOLUME


def spectrum_drift(p: PhysicalParams, grid: SpectralGrid, zh: np.ndarray) -> float:
    if not np.any(zh[:, 1:]):
        j6 = zh[JS, 0].real.reshape(6, 1)
    else:
        j6 = grid.to_physical(zh[JS]).reshape(6, -1)
    full = sym_to_mat(j6) + np.diag(jeq_diag(p))[:, :, None]
    ev = np.linalg.eigvalsh(np.moveaxis(full, -1, 0))
    ref = np.sort(jeq_diag(p))
    return float(np.max(np.abs(ev - ref)))


def diagnostics(p: PhysicalParams, z: StateField, prev: DiagnosticsRecord | None = None) -> DiagnosticsRecord:
    g, zfull = z.grid, z.z
    homog = not np.any(zfull[:, 1:])
    m = 1 if homog else g.n_modes
    zh, kf, wt, k2 = zfull[:, :m], g.kf[:m], g.weight[:m], g.k2[:m]
    es = energy_shift(p, g, zfull)
    dis = VOLUME * float(np.sum(wt * _dissipation_modes(p, kf, zh[U], zh[W])))
    e_rel = equilibrium_energy(p) + es
    resid = 0.0
    if prev is not None and z.t != prev.t:
        dt = z.t - prev.t
        err = abs((es - prev.e_shift) / dt + 0.5 * (dis + prev.dissipation))
        resid = err / (abs(e_rel) + dis + 1.0)
    dc = derive_constants(p)
    a = zh[list(A_COMPS)]
    wb = zh[3:5]
    e_ins = VOLUME * float(np.sum(wt * (np.abs(wb) ** 2 + np.abs(a) ** 2)))
    wperp = np.stack([-wb[1], wb[0]])
    bterm = (2.0 * (p.lambda_ - p.nu) + dc.d ** 2) * VOLUME * float(np.sum(wt * np.real(wperp * np.conj(a))))
    div = float(np.max(np.abs(np.einsum("ni,in->n", kf, zh[U]))))
    cw = _split_weights()[:, None]
    l2 = VOLUME * float(np.sum(cw * wt * np.abs(zh) ** 2))
    h4 = VOLUME * float(np.sum(cw * wt * (1.0 + k2) ** 4 * np.abs(zh) ** 2))
    return DiagnosticsRecord(
        t=z.t, e_rel=e_rel, dissipation=dis, ed_residual=resid, e_ins=e_ins,
        unstable_term=bterm, spectrum_drift=spectrum_drift(p, g, zfull),
        mean_u_drift=float(np.linalg.norm(zh[U, 0])), div_u_max=div,
        norm_l2=math.sqrt(l2), norm_h4=math.sqrt(h4), e_shift=es)


# ---------------------------------------------------------------- construction helpers

def state_from_growing_vector(grid: SpectralGrid, k_star, v8: np.ndarray, amplitude: float) -> StateField:
    """Perturbation amplitude * (v e^{ik.x} + conj) with a embedded as J13, J23."""
    z = zero_state(grid)
    k = np.array(k_star, dtype=int)
    v = np.asarray(v8, dtype=complex)
    if k[2] < 0:
        k, v = -k, np.conj(v)
    idx = grid.mode_index(k)
    col = np.zeros(12, dtype=complex)
    col[:6] = v[:6]
    col[8], col[10] = v[6], v[7]
    col *= amplitude
    if idx == 0:
        z.z[:, 0] = 2.0 * col.real
    else:
        z.z[:, idx] = col
        mi = grid.mirror[idx]
        if mi >= 0:
            z.z[:, mi] = np.conj(col)
    return z


def state_from_homogeneous(p: PhysicalParams, grid: SpectralGrid, omega, jfull) -> StateField:
    """Constant state (u = 0, spin omega, inertia jfull) as a perturbation of the rest state."""
    z = zero_state(grid)
    z.z[W, 0] = np.asarray(omega, dtype=float) - omega_eq(p)
    z.z[JS, 0] = mat_to_sym(np.asarray(jfull, dtype=float) - np.diag(jeq_diag(p)))
    return z


def random_state(grid: SpectralGrid, rng: np.random.Generator, amplitude: float,
                 kmax: int | None = None, decay: float = 0.5) -> StateField:
    """Real, divergence-free, zero-mean-velocity random low-mode perturbation."""
    k = grid.kf
    kmax = grid.kmax if kmax is None else kmax
    zh = rng.normal(size=(12, grid.n_modes)) + 1j * rng.normal(size=(12, grid.n_modes))
    zh *= np.exp(-decay * grid.k2)[None, :]
    zh[:, np.any(np.abs(grid.k) > kmax, axis=1)] = 0.0
    zh[U] = leray_project(zh[U], k)
    zh[U, 0] = 0.0
    zh[:, 0] = zh[:, 0].real
    grid.symmetrize(zh)
    nrm = math.sqrt(split_norm_sq(grid, zh))
    return StateField(grid, zh * (amplitude / nrm))


# ---------------------------------------------------------------- checkpoints

def dump_checkpoint(p: PhysicalParams, z: StateField) -> str:
    head = ["# micropolar-checkpoint v1",
            "# params " + " ".join(f"{k}={v:.17g}" for k, v in p.as_dict().items()),
            f"# N={z.n} t={z.t:.17g} n_modes={z.grid.n_modes}",
            "# columns: k1 k2 k3 then (re im) for u1 u2 u3 w1 w2 w3 J11 J12 J13 J22 J23 J33"]
    lines = head
    for i, k in enumerate(z.grid.k):
        vals = " ".join(f"{c.real:.17g} {c.imag:.17g}" for c in z.z[:, i])
        lines.append(f"{k[0]} {k[1]} {k[2]} {vals}")
    return "\n".join(lines) + "\n"


def load_checkpoint(text: str) -> tuple[PhysicalParams, StateField]:
    from .params import params_from_mapping
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# micropolar-checkpoint"):
        raise ValueError("not a checkpoint")
    pmap = dict(tok.split("=") for tok in lines[1].split()[2:])
    p = params_from_mapping({k: float(v) for k, v in pmap.items()})
    meta = dict(tok.split("=") for tok in lines[2].lstrip("# ").split())
    grid = SpectralGrid(int(meta["N"]))
    z = zero_state(grid)
    z.t = float(meta["t"])
    for ln in lines[4:]:
        if not ln.strip():
            continue
        parts = ln.split()
        idx = grid.mode_index([int(x) for x in parts[:3]])
        v = np.array([float(x) for x in parts[3:]])
        z.z[:, idx] = v[0::2] + 1j * v[1::2]
    return p, z
