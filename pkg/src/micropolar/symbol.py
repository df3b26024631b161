"""Fourier symbols of the (u, omega, a) block of the linearisation.

Component order of the 8-vectors is (u1, u2, u3, w1, w2, w3, a1, a2).
All builders accept a single wavenumber (shape (3,)) or a stack (shape (n, 3));
the stacked forms are what the lattice scans and the solvers use.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import PhysicalParams, derive_constants, require_admissible, require_oblong

R22 = np.array([[0.0, -1.0], [1.0, 0.0]])
R23 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])
R32 = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 0.0]])
R33 = np.zeros((3, 3))
R33[:2, :2] = R22
I23 = np.eye(2, 3)
I32 = np.eye(3, 2)

KINDS = ("Bhat", "M", "S", "A", "Q", "Qbar")


def _as_stack(k):
    k = np.asarray(k, dtype=float)
    single = k.ndim == 1
    return np.atleast_2d(k), single


def _unstack(m, single):
    return m[0] if single else m


def cross_matrix(k):
    """Matrix K with K v = k x v."""
    ks, single = _as_stack(k)
    out = np.zeros(ks.shape[:1] + (3, 3))
    out[:, 0, 1], out[:, 0, 2] = -ks[:, 2], ks[:, 1]
    out[:, 1, 0], out[:, 1, 2] = ks[:, 2], -ks[:, 0]
    out[:, 2, 0], out[:, 2, 1] = -ks[:, 1], ks[:, 0]
    return _unstack(out, single)


def proj_parallel(k):
    ks, single = _as_stack(k)
    k2 = np.einsum("ni,ni->n", ks, ks)
    safe = np.where(k2 > 0, k2, 1.0)
    out = ks[:, :, None] * ks[:, None, :] / safe[:, None, None]
    out[k2 == 0] = 0.0
    return _unstack(out, single)


def proj_perp(k):
    return np.eye(3) - proj_parallel(k)


def _jeq_diag(p):
    return np.array([p.lambda_, p.lambda_, p.nu])


def build_bhat(p: PhysicalParams, k):
    """Complex 8x8 symbol acting on Fourier coefficients of (u, omega, a)."""
    require_admissible(p)
    dc = derive_constants(p)
    ks, single = _as_stack(k)
    n = ks.shape[0]
    k2 = np.einsum("ni,ni->n", ks, ks)[:, None, None]
    ppar = np.atleast_3d(proj_parallel(ks)).reshape(n, 3, 3)
    pperp = np.eye(3) - ppar
    ikx = 1j * np.asarray(cross_matrix(ks)).reshape(n, 3, 3)
    jinv = np.diag(1.0 / _jeq_diag(p))
    d = dc.d

    b = np.zeros((n, 8, 8), dtype=complex)
    b[:, :3, :3] = -dc.mu_tilde * k2 * pperp
    b[:, :3, 3:6] = p.kappa * ikx
    b[:, 3:6, :3] = jinv @ (p.kappa * ikx) @ pperp
    b[:, 3:6, 3:6] = (-2.0 * p.kappa * jinv
                      - dc.alpha_tilde * k2 * (jinv @ ppar)
                      - dc.gamma_tilde * k2 * (jinv @ pperp)
                      - (1.0 - p.nu / p.lambda_) * d * R33)
    b[:, 3:6, 6:8] = -(d * d / p.lambda_) * R32
    b[:, 6:8, 3:6] = (p.lambda_ - p.nu) * R23
    b[:, 6:8, 6:8] = d * R22
    return _unstack(b, single)


def transverse_map(k):
    """T(k) = i k x / |k|, with T(0) = 0."""
    ks, single = _as_stack(k)
    nk = np.sqrt(np.einsum("ni,ni->n", ks, ks))
    safe = np.where(nk > 0, nk, 1.0)
    t = 1j * np.asarray(cross_matrix(ks)).reshape(-1, 3, 3) / safe[:, None, None]
    return _unstack(t, single)


def build_q(p: PhysicalParams, k):
    """Return (Q_k, Qbar_k); their product is the projection onto the complement of V_k."""
    require_oblong(p)
    dc = derive_constants(p)
    ks, single = _as_stack(k)
    n = ks.shape[0]
    t = np.asarray(transverse_map(ks)).reshape(n, 3, 3)
    sq = np.sqrt(_jeq_diag(p))
    q = np.zeros((n, 8, 8), dtype=complex)
    qb = np.zeros((n, 8, 8), dtype=complex)
    q[:, :3, :3] = t
    qb[:, :3, :3] = t
    q[:, 3:6, 3:6] = np.diag(sq)
    qb[:, 3:6, 3:6] = np.diag(1.0 / sq)
    q[:, 6:8, 6:8] = dc.s * R22
    qb[:, 6:8, 6:8] = (-1.0 / dc.s) * R22
    return _unstack(q, single), _unstack(qb, single)


def build_m(p: PhysicalParams, k):
    """Real 8x8 matrix M_k from its closed block form."""
    require_oblong(p)
    dc = derive_constants(p)
    ks, single = _as_stack(k)
    n = ks.shape[0]
    k2 = np.einsum("ni,ni->n", ks, ks)
    kk = ks[:, :, None] * ks[:, None, :]
    nk = np.sqrt(k2)
    eye = np.eye(3)
    jm = np.diag(1.0 / np.sqrt(_jeq_diag(p)))
    trans = k2[:, None, None] * eye - kk          # |k|^2 I - k (x) k

    m = np.zeros((n, 8, 8))
    m[:, :3, :3] = -dc.mu_tilde * trans
    # kappa/|k| (|k|^2 I - k k) = kappa |k| P_perp; finite (zero) at k = 0
    bblk = p.kappa * nk[:, None, None] * np.asarray(proj_perp(ks)).reshape(n, 3, 3) @ jm
    m[:, :3, 3:6] = bblk
    m[:, 3:6, :3] = np.swapaxes(bblk, 1, 2)
    inner = (2.0 * p.kappa * eye + (dc.alpha_tilde - dc.gamma_tilde) * kk
             + dc.gamma_tilde * k2[:, None, None] * eye)
    m[:, 3:6, 3:6] = -jm @ inner @ jm + dc.c * R33
    m[:, 3:6, 6:8] = dc.phi * I32
    m[:, 6:8, 3:6] = dc.phi * I23
    m[:, 6:8, 6:8] = dc.d * R22
    return _unstack(m, single)


def build_m_product(p: PhysicalParams, k):
    """M_k as the product Q_k Bhat_k Qbar_k (cross-check of build_m)."""
    q, qb = build_q(p, k)
    prod = q @ build_bhat(p, k) @ qb
    return prod


def build_s(p: PhysicalParams, k):
    m = build_m(p, k)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def build_a(p: PhysicalParams):
    require_oblong(p)
    dc = derive_constants(p)
    a = np.zeros((8, 8))
    a[3:6, 3:6] = dc.c * R33
    a[6:8, 6:8] = dc.d * R22
    return a


def quad_form_s(p: PhysicalParams, k, y) -> float:
    """y.S_k y by direct evaluation."""
    s = build_s(p, k)
    y = np.asarray(y, dtype=float)
    return float(y @ s @ y)


def quad_form_s_terms(p: PhysicalParams, k, y) -> float:
    """The same quadratic form written as the dissipative sum plus the single indefinite coupling."""
    dc = derive_constants(p)
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    v, th, b = y[:3], y[3:6], y[6:8]
    k2 = float(k @ k)
    ppar = proj_parallel(k)
    pperp = np.eye(3) - ppar
    vp = pperp @ v
    eta = th / np.sqrt(_jeq_diag(p))
    t1 = -p.mu * k2 * (vp @ vp)
    w = 0.5 * np.sqrt(k2) * vp - eta
    t2 = -2.0 * p.kappa * (w @ w)
    ep, eq_ = ppar @ eta, pperp @ eta
    t3 = -dc.alpha_tilde * k2 * (ep @ ep)
    t4 = -dc.gamma_tilde * k2 * (eq_ @ eq_)
    t5 = 2.0 * dc.phi * (th[:2] @ b)
    return float(t1 + t2 + t3 + t4 + t5)


def kernel_vector(k):
    """(k, 0, 0) spanning V_k."""
    v = np.zeros(8)
    v[:3] = np.asarray(k, dtype=float)
    return v


def complement_basis(k):
    """Orthonormal real basis (8 x m) of the complement of V_k (m = 7, or 5 at k = 0)."""
    k = np.asarray(k, dtype=float)
    if not np.any(k):
        basis = np.zeros((8, 5))
        basis[3:, :] = np.eye(5)
        return basis
    u, _, _ = np.linalg.svd(k.reshape(3, 1))
    basis = np.zeros((8, 7))
    basis[:3, :2] = u[:, 1:]
    basis[3:, 2:] = np.eye(5)
    return basis


@dataclass(frozen=True)
class SymbolMatrix:
    kind: str
    k: tuple
    entries: np.ndarray


def symbol_matrix(kind: str, p: PhysicalParams, k) -> SymbolMatrix:
    k = np.asarray(k, dtype=float)
    if kind == "Bhat":
        e = build_bhat(p, k)
    elif kind == "M":
        e = build_m(p, k)
    elif kind == "S":
        e = build_s(p, k)
    elif kind == "A":
        e = build_a(p)
    elif kind in ("Q", "Qbar"):
        e = build_q(p, k)[0 if kind == "Q" else 1]
    else:
        raise ValueError(f"unknown symbol kind {kind!r}; expected one of {KINDS}")
    return SymbolMatrix(kind, tuple(float(x) for x in k), np.array(e))


def dump_matrix(sm: SymbolMatrix) -> str:
    """Row-major plain text, 17 significant digits; complex entries as 're im' pairs."""
    e = sm.entries
    cplx = np.iscomplexobj(e)
    head = "# kind={} k={} shape={}x{} dtype={}".format(
        sm.kind, ",".join(f"{x:.17g}" for x in sm.k), e.shape[0], e.shape[1],
        "complex" if cplx else "real")
    lines = [head]
    for row in e:
        if cplx:
            lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
        else:
            lines.append(" ".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def load_matrix(text: str) -> SymbolMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    meta = dict(tok.split("=", 1) for tok in lines[0].lstrip("# ").split())
    rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    arr = np.array(rows)
    if meta["dtype"] == "complex":
        arr = arr[:, 0::2] + 1j * arr[:, 1::2]
    k = tuple(float(x) for x in meta["k"].split(","))
    return SymbolMatrix(meta["kind"], k, arr)
