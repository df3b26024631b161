"""Spectra of M_k: bound checks, the lattice search for the fastest-growing mode,
large-|k| eigenvalue tracking and matrix-exponential bounds."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import eigen
from .eigen import EigenPairs, eig  # noqa: F401  (re-exported)
from .params import PhysicalParams, classify_shape, derive_constants, require_admissible, require_oblong
from .symbol import build_bhat, build_m, build_s, complement_basis

BOUND_TOL = 1e-9
TIE_TOL = 1e-9
OBLATE_FALLBACK_RADIUS = 20.0
EPS = np.finfo(float).eps


class BoundViolation(AssertionError):
    pass


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MICROPOLAR_THREADS", "1")))
    except ValueError:
        return 1


def roundoff_floor(norm: float) -> float:
    """Absolute slack for comparing computed eigenvalues of a matrix of 2-norm `norm`."""
    return 64.0 * EPS * norm


@dataclass
class SpectrumReport:
    k: tuple
    eigenpairs: EigenPairs
    max_re: float
    max_abs_im: float
    max_sigma_s: float
    bound_re: float
    bound_im: float
    bound_s: float
    flags: dict

    @property
    def values(self):
        return self.eigenpairs.values


def s_bound(p: PhysicalParams, k) -> float:
    dc = derive_constants(p)
    k2 = float(np.dot(k, k))
    return dc.phi if k2 == 0 else min(dc.phi, dc.c_sigma / k2)


def spectrum_at(p: PhysicalParams, k, strict: bool = True) -> SpectrumReport:
    require_oblong(p)
    dc = derive_constants(p)
    k = np.asarray(k, dtype=float)
    m = build_m(p, k)
    pairs = eig(m)
    smax = float(np.linalg.eigvalsh(build_s(p, k))[-1])
    w = pairs.values
    max_re, max_im = float(np.max(w.real)), float(np.max(np.abs(w.imag)))
    floor = BOUND_TOL + roundoff_floor(np.linalg.norm(m, 2))
    b_re, b_im, b_s = dc.phi, math.sqrt(7.0) * dc.d, s_bound(p, k)
    flags = {
        "re_le_phi": bool(max_re <= b_re + floor),
        "im_le_sqrt7_d": bool(max_im <= b_im + floor),
        "s_le_bound": bool(smax <= b_s + floor),
        "re_le_sigma_s": bool(max_re <= smax + floor),
        "residuals_ok": bool(np.all(pairs.residuals <= 1e-9)),
    }
    rep = SpectrumReport(tuple(k.tolist()), pairs, max_re, max_im, smax, b_re, b_im, b_s, flags)
    if strict and not all(flags.values()):
        bad = [f for f, ok in flags.items() if not ok]
        raise BoundViolation(f"spectral bound violated at k={k.tolist()}: {bad}")
    return rep


# --- bulk spectra -------------------------------------------------------------

def nontrivial_eigvals_batch(p: PhysicalParams, ks) -> np.ndarray:
    """Eigenvalues of the symbol restricted to the complement of V_k, for a stack of k.

    lambda > nu: M_k (real); otherwise Bhat_k compressed to V_k^perp.  Returns a
    (n, 8) complex array, padded with -inf real parts where V_k removal shrinks the block.
    """
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    out = np.full((ks.shape[0], 8), -np.inf + 0j)
    if p.lambda_ > p.nu:
        vals = np.linalg.eigvals(build_m(p, ks))
        # drop the structural zero(s) carried by V_k
        zero = ~np.any(ks != 0, axis=1)
        for i in range(ks.shape[0]):
            v = vals[i]
            nz = 3 if zero[i] else 1
            drop = np.argsort(np.abs(v))[:nz]
            keep = np.setdiff1d(np.arange(8), drop)
            out[i, :len(keep)] = v[keep]
        return out
    b = build_bhat(p, ks)
    for i in range(ks.shape[0]):
        u = complement_basis(ks[i])
        c = u.T @ b[i] @ u
        v = np.linalg.eigvals(c)
        out[i, :len(v)] = v
    return out


def max_growth_batch(p: PhysicalParams, ks) -> np.ndarray:
    """Largest real part over all eigenvalues of M_k (lambda > nu) for a stack of k."""
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    if p.lambda_ > p.nu:
        return np.max(np.linalg.eigvals(build_m(p, ks)).real, axis=1)
    return np.max(nontrivial_eigvals_batch(p, ks).real, axis=1)


# --- lattice search -------------------------------------------------------------

def lattice_shells(lo_sq: int, hi_sq: int):
    """Yield (n, points) for lo_sq <= n <= hi_sq, points with |k|^2 = n in lexicographic order."""
    r = int(math.isqrt(hi_sq))
    ax = np.arange(-r, r + 1)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    sq = np.einsum("ni,ni->n", g, g)
    keep = (sq >= lo_sq) & (sq <= hi_sq)
    g, sq = g[keep], sq[keep]
    # meshgrid 'ij' order is lexicographic already; a stable sort by |k|^2 keeps it
    order = np.argsort(sq, kind="stable")
    g, sq = g[order], sq[order]
    bounds = np.searchsorted(sq, np.arange(lo_sq, hi_sq + 2))
    for j, n in enumerate(range(lo_sq, hi_sq + 1)):
        pts = g[bounds[j]:bounds[j + 1]]
        if len(pts):
            yield n, pts


def _shell_segments(limit_sq: int, first: int = 16):
    lo, hi = 0, min(first, limit_sq)
    while lo <= limit_sq:
        yield from lattice_shells(lo, hi)
        lo, hi = hi + 1, min(4 * hi + 4, limit_sq)


@dataclass
class MaxModeResult:
    found: bool
    k_star: Optional[tuple]
    w_star: Optional[complex]
    eta_star: Optional[float]
    search_radius_used: float
    certificate: dict
    maximizers: list = field(default_factory=list)
    shape: str = "oblong"
    points_scanned: int = 0

    def to_dict(self) -> dict:
        w = self.w_star
        return {
            "found": self.found,
            "shape": self.shape,
            "k_star": list(self.k_star) if self.k_star is not None else None,
            "w_star": None if w is None else {"re": w.real, "im": w.imag},
            "eta_star": self.eta_star,
            "search_radius_used": self.search_radius_used,
            "points_scanned": self.points_scanned,
            "maximizers": [list(k) for k in self.maximizers],
            "certificate": self.certificate,
        }


def _shell_growth(p, pts):
    return max_growth_batch(p, pts.astype(float))


def find_max_unstable(p: PhysicalParams, guard: float = 0.0, fallback_radius: float = OBLATE_FALLBACK_RADIUS,
                      max_radius: float = 128.0, threads: Optional[int] = None) -> MaxModeResult:
    """Exhaustive shell-by-shell scan of Z^3 for the eigenvalue with largest real part.

    With lambda > nu the scan stops after shell n once C_sigma/(n+1) < eta_best - guard:
    every later shell has max Re sigma(M_k) <= max sigma(S_k) <= C_sigma/|k|^2.
    Without that certificate (lambda <= nu) the scan covers |k| <= fallback_radius.
    """
    require_admissible(p)
    shape = classify_shape(p)
    if shape == "isotropic-degenerate":
        raise ValueError("lambda = nu: degenerate microinertia, no spectral search")
    dc = derive_constants(p)
    threads = worker_count() if threads is None else threads
    certified = shape == "oblong"
    limit_sq = int(math.floor((max_radius if certified else fallback_radius) ** 2))

    best_eta = -math.inf
    records = []          # (eta, n, k)
    last_n = -1
    stop_reason = "radius limit"
    scanned = 0
    shells = _shell_segments(limit_sq)
    batch = max(1, threads) * 4
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        done = False
        while not done:
            chunk = []
            for item in shells:
                chunk.append(item)
                if len(chunk) == batch:
                    break
            if not chunk:
                break
            if pool is not None:
                results = list(pool.map(lambda s: _shell_growth(p, s[1]), chunk))
            else:
                results = [_shell_growth(p, s[1]) for s in chunk]
            # sequential reduction in shell order: identical for any thread count
            for (n, pts), etas in zip(chunk, results):
                scanned += len(pts)
                last_n = n
                for kk, e in zip(pts, etas):
                    records.append((float(e), n, tuple(int(x) for x in kk)))
                    if e > best_eta:
                        best_eta = float(e)
                if certified and best_eta > 0 and dc.c_sigma / (n + 1) < best_eta - guard:
                    stop_reason = "certified"
                    done = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    radius = math.sqrt(max(last_n, 0))
    cert = {
        "kind": "C_sigma/|k|^2 bound" if certified else "none (fallback radius)",
        "c_sigma": dc.c_sigma,
        "guard": guard,
        "last_shell_sq": last_n,
        "next_shell_bound": dc.c_sigma / (last_n + 1) if certified else None,
        "holds": stop_reason == "certified",
        "stop_reason": stop_reason,
    }
    if not best_eta > BOUND_TOL:
        return MaxModeResult(False, None, None, None, radius, cert, [], shape, scanned)

    ties = [(n, k) for e, n, k in records if e >= best_eta - TIE_TOL]
    ties.sort()
    n_star, k_star = ties[0]
    w_star = _w_star(p, np.array(k_star, float))
    cert["eta_star"] = w_star.real
    return MaxModeResult(True, k_star, w_star, float(w_star.real), radius, cert,
                         [k for _, k in ties], shape, scanned)


def _w_star(p, k):
    """Eigenvalue of largest real part at k (the Im >= 0 member of its pair), from the dense QR solver."""
    if p.lambda_ > p.nu:
        vals = eig(build_m(p, k)).values
    else:
        u = complement_basis(k)
        vals = eig(u.T @ build_bhat(p, k) @ u).values
    top = vals[0].real
    cands = [w for w in vals if abs(w.real - top) <= TIE_TOL * max(1.0, abs(top))]
    return complex(max(cands, key=lambda w: w.imag))


# --- large-|k| trajectory of the slow eigenvalue --------------------------------

@dataclass
class TrajectoryReport:
    direction: tuple
    rhos: list
    z: list
    dist_to_id: list
    monotone: bool
    re_positive: bool
    conj_present: bool
    ambiguous: list


def trajectory_z(p: PhysicalParams, direction, rhos) -> TrajectoryReport:
    require_oblong(p)
    d = derive_constants(p).d
    dvec = np.asarray(direction, dtype=float)
    dvec = dvec / np.linalg.norm(dvec)
    target = 1j * d
    zs, dist, amb = [], [], []
    conj_ok = True
    prev = None
    for rho in rhos:
        vals = eig(build_m(p, rho * dvec)).values
        ref = target if prev is None else prev
        pool_ = [w for w in vals if w.imag > 0]
        if prev is None:
            pool_ = [w for w in pool_ if w.real > 0] or pool_
        dd = sorted((abs(w - ref), i) for i, w in enumerate(pool_))
        if len(dd) > 1 and dd[1][0] - dd[0][0] <= 1e-9 * max(1.0, dd[0][0]):
            amb.append(float(rho))
        z = pool_[dd[0][1]]
        conj_ok &= bool(np.min(np.abs(vals - np.conj(z))) <= 1e-8 * max(1.0, abs(z)))
        zs.append(complex(z))
        dist.append(float(abs(z - target)))
        prev = z
    mono = all(b < a for a, b in zip(dist, dist[1:]))
    return TrajectoryReport(tuple(dvec.tolist()), [float(r) for r in rhos], zs, dist, mono,
                            all(z.real > 0 for z in zs), conj_ok, amb)


# --- matrix exponential bounds ---------------------------------------------------

def matexp(m, t: float = 1.0):
    """e^{t m} by scaling and squaring with Pade approximants."""
    return scipy.linalg.expm(t * np.asarray(m))


@dataclass
class ExpoBoundReport:
    c_fit: float
    violations_symmetric: int
    max_ratio_symmetric: float
    cases: int
    tail_ok: bool


def verify_expo_bound(p: PhysicalParams, k_set, t_grid, eta_star: float) -> ExpoBoundReport:
    """||e^{tM}|| <= e^{t max sigma(S)} for each case, and the fitted C in C (1+t^8) e^{eta* t}."""
    require_oblong(p)
    dc = derive_constants(p)
    ks = np.atleast_2d(np.asarray(k_set, dtype=float))
    c_fit, worst, bad, n = 0.0, 0.0, 0, 0
    tail_ok = True
    k_s = math.sqrt(dc.c_sigma / eta_star) if eta_star > 0 else math.inf
    for k in ks:
        m = build_m(p, k)
        smax = float(np.linalg.eigvalsh(build_s(p, k))[-1])
        for t in t_grid:
            nrm = float(np.linalg.norm(matexp(m, t), 2))
            lim = math.exp(t * smax)
            ratio = nrm / lim
            worst = max(worst, ratio)
            if nrm > lim * (1.0 + BOUND_TOL) + BOUND_TOL:
                bad += 1
            c_fit = max(c_fit, nrm / ((1.0 + t ** 8) * math.exp(eta_star * t)))
            if np.linalg.norm(k) >= k_s and nrm > math.exp(eta_star * t) * (1.0 + BOUND_TOL):
                tail_ok = False
            n += 1
    return ExpoBoundReport(c_fit, bad, worst, n, tail_ok)


def gershgorin_disks(m):
    m = np.asarray(m)
    centers = np.diag(m).copy()
    radii = np.sum(np.abs(m), axis=1) - np.abs(centers)
    return centers, radii


def gershgorin_bound(m) -> float:
    c, r = gershgorin_disks(m)
    return float(np.max(np.abs(c) + r))


def in_gershgorin_union(m, values, tol=1e-9) -> bool:
    c, r = gershgorin_disks(m)
    return all(np.any(np.abs(w - c) <= r + tol * max(1.0, abs(w))) for w in values)


def imag_bound_frobenius(m) -> float:
    """sqrt(n-1) ||antisym(m)||_F, bounding |Im sigma(m)| for real m."""
    m = np.asarray(m, dtype=float)
    a = 0.5 * (m - m.T)
    return math.sqrt(m.shape[0] - 1) * float(np.linalg.norm(a, "fro"))
