"""Characteristic polynomial of M_k and its large-|k| structure."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import eigen
from .params import PhysicalParams, derive_constants, require_oblong
from .symbol import build_m

SCALE_THRESHOLD = 100.0
_SPLIT = 134217729.0  # 2**27 + 1


# error-free transformations, vectorised
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_matmul(a, hi, lo):
    """a @ (hi + lo) in double-double, a an ordinary double matrix."""
    n = a.shape[0]
    s = np.zeros((n, n))
    comp = np.zeros((n, n))
    for l in range(n):
        p, e = _two_prod(a[:, l:l + 1], hi[l:l + 1, :])
        s, t = _two_sum(s, p)
        comp += t + e + a[:, l:l + 1] * lo[l:l + 1, :]
    return _two_sum(s, comp)


def _dd_trace(hi, lo):
    s, comp = 0.0, 0.0
    for x in np.diag(hi):
        s, t = _two_sum(s, x)
        comp += t
    comp += float(np.sum(np.diag(lo)))
    return _two_sum(s, comp)


def faddeev_leverrier(a) -> np.ndarray:
    """Monic characteristic polynomial coefficients [1, c1, ..., cn] of a real matrix,
    so that det(xI - a) = sum_j c_j x^(n-j)."""
    hi, lo = faddeev_leverrier_dd(a)
    return hi + lo


def faddeev_leverrier_dd(a) -> tuple[np.ndarray, np.ndarray]:
    """Same coefficients as a double-double pair (hi, lo)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    coeffs = [(1.0, 0.0)]
    hi = np.zeros((n, n))
    lo = np.zeros((n, n))
    c_hi, c_lo = 1.0, 0.0
    for k in range(1, n + 1):
        # M_k = a M_{k-1} + c_{k-1} I
        hi, lo = _dd_matmul(a, hi, lo) if k > 1 else (np.zeros((n, n)), np.zeros((n, n)))
        d_hi, d_lo = _two_sum(np.diag(hi).copy(), c_hi)
        d_lo = d_lo + np.diag(lo) + c_lo
        hi = hi.copy()
        lo = lo.copy()
        np.fill_diagonal(hi, d_hi)
        np.fill_diagonal(lo, d_lo)
        # c_k = -tr(a M_k) / k
        p_hi, p_lo = _dd_matmul(a, hi, lo)
        t_hi, t_lo = _dd_trace(p_hi, p_lo)
        q = -t_hi / k
        # remainder of the division, kept in the low word
        ph, pl = _two_prod(q, float(k))
        r = ((-t_hi - ph) - pl - t_lo) / k
        c_hi, c_lo = _two_sum(q, r)
        coeffs.append((c_hi, c_lo))
    out = np.array(coeffs)
    return out[:, 0].copy(), out[:, 1].copy()


@dataclass(frozen=True)
class CharPoly:
    coeffs: np.ndarray           # [1, c1..c8], det(xI - M) = sum c_j x^(8-j)
    k: tuple
    scale: float = 1.0           # polynomial was computed for M / scale
    scaled_coeffs: np.ndarray = field(default=None, repr=False)
    scaled_lo: np.ndarray = field(default=None, repr=False)   # low words of scaled_coeffs

    def __call__(self, x):
        return np.polyval(self.coeffs, x)


def char_poly(p: PhysicalParams, k) -> CharPoly:
    require_oblong(p)
    k = np.asarray(k, dtype=float)
    m = build_m(p, k)
    nk = float(np.linalg.norm(k))
    # a power of two near |k|^2 keeps the scaling exact
    scale = 2.0 ** round(math.log2(nk * nk)) if nk > SCALE_THRESHOLD else 1.0
    sc, lo = _two_sum(*faddeev_leverrier_dd(m / scale))
    n = len(sc) - 1
    coeffs = sc * scale ** np.arange(n + 1)
    return CharPoly(coeffs, tuple(float(x) for x in k), scale, sc, lo)


def companion(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    c = c / c[0]
    n = len(c) - 1
    mat = np.zeros((n, n))
    mat[0, :] = -c[1:]
    mat[1:, :-1] = np.eye(n - 1)
    return mat


def poly_roots(cp: CharPoly) -> np.ndarray:
    """Roots from the companion matrix of the (scaled) polynomial, via the dense QR solver."""
    sc = cp.scaled_coeffs if cp.scaled_coeffs is not None else cp.coeffs
    # exact trailing zero coefficients are structural roots at 0
    nz = len(sc)
    trailing = 0
    while trailing < nz - 1 and sc[nz - 1 - trailing] == 0.0:
        trailing += 1
    core = sc[:nz - trailing]
    roots = eigen.eigvals(companion(core)) if len(core) > 1 else np.zeros(0, complex)
    if cp.scaled_lo is not None and len(roots) > 1:
        roots = aberth_polish(core, cp.scaled_lo[:nz - trailing], roots)
    roots = np.concatenate([roots * cp.scale, np.zeros(trailing, complex)])
    order = sorted(range(len(roots)), key=lambda i: eigen.order_key(roots[i]))
    return roots[order]


def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    return _two_sum(s, e + al + bl)


def _dd_mul_d(ah, al, b):
    p, e = _two_prod(ah, b)
    return _two_sum(p, e + al * b)


def _horner_dd(hi, lo, z):
    """p(z) for complex double z with double-double coefficients; returns a complex double."""
    zr, zi = z.real, z.imag
    rh, rl = np.full(z.shape, hi[0]), np.full(z.shape, lo[0])
    ih, il = np.zeros(z.shape), np.zeros(z.shape)
    for ch, cl in zip(hi[1:], lo[1:]):
        a = _dd_mul_d(rh, rl, zr)
        b = _dd_mul_d(ih, il, -zi)
        c = _dd_mul_d(rh, rl, zi)
        d = _dd_mul_d(ih, il, zr)
        rh, rl = _dd_add(*_dd_add(*a, *b), ch, cl)
        ih, il = _dd_add(*c, *d)
    return (rh + rl) + 1j * (ih + il)


def aberth_polish(hi, lo, z0, iters: int = 40) -> np.ndarray:
    """Simultaneous Aberth-Ehrlich refinement of all roots, residuals in double-double.

    Rounding the coefficients to double moves clustered roots by ~sqrt(eps); evaluating
    the polynomial with its low words recovers them.
    """
    n = len(z0)
    dcoef = np.polyder(hi)
    # tiny asymmetric nudge so conjugate estimates of two close real roots can separate
    z = z0 * (1.0 + 1e-9 * (np.arange(n) + 1)) + 1e-12j * (np.arange(n) + 1)
    for _ in range(iters):
        ratio = _horner_dd(hi, lo, z) / np.polyval(dcoef, z)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        step = ratio / (1.0 - ratio * np.sum(inv, axis=1))
        z = z - step
        if np.all(np.abs(step) <= 1e-17 * np.maximum(1.0, np.abs(z))):
            break
    # snap numerically real roots onto the axis
    tol = 1e-13 * np.maximum(1.0, np.abs(z))
    z = np.where(np.abs(z.imag) <= tol, z.real + 0j, z)
    return z


@dataclass(frozen=True)
class DiskCount:
    count: int
    ambiguous: bool
    closest_gap: float


def count_roots_in_disk(cp: CharPoly, radius: float, tol: float = 1e-8) -> DiskCount:
    if not radius > 0:
        raise ValueError("radius must be positive")
    r = np.abs(poly_roots(cp))
    gap = float(np.min(np.abs(r - radius))) if math.isfinite(radius) else math.inf
    return DiskCount(int(np.sum(r < radius)), gap <= tol, gap)


@dataclass(frozen=True)
class LeadingCoefficients:
    c0: float
    c10: float
    c20: float
    c11: float          # equals C21
    c21: float
    c12: float
    c22: float

    def all_positive(self) -> bool:
        return all(v > 0 for v in (self.c0, self.c10, self.c20, self.c11, self.c21, self.c12, self.c22))


def leading_constants(p: PhysicalParams) -> LeadingCoefficients:
    require_oblong(p)
    dc = derive_constants(p)
    mt, at, gt, phi = dc.mu_tilde, dc.alpha_tilde, dc.gamma_tilde, dc.phi
    lam, nu, kap = p.lambda_, p.nu, p.kappa
    w = p.alpha + 5.0 * p.beta / 3.0 + p.gamma
    c0 = mt * mt * at * gt * gt / (nu * lam * lam)
    c10 = w * gt * mt * mt * phi / (nu * lam)
    c20 = 2.0 * at * gt * mt * phi / (nu * lam)
    c11 = 2.0 * kap * mt * gt * (2.0 * p.mu * at + mt * gt) / (nu * lam * lam)
    c12 = mt * gt * (2.0 * at * gt + mt * (w * lam + at * nu)) / (nu * lam * lam)
    c22 = 2.0 * mt * gt * (at * gt + mt * (at * lam + gt * nu / 2.0)) / (nu * lam * lam)
    return LeadingCoefficients(c0, c10, c20, c11, c11, c12, c22)


def r5_coeffs(p: PhysicalParams, knorm: float) -> np.ndarray:
    """Coefficients (highest power of x first, degree 8) of C0 x (x^2 + d^2) |k|^10."""
    c0 = leading_constants(p).c0
    d = derive_constants(p).d
    out = np.zeros(9)
    out[8 - 3] = c0 * knorm ** 10
    out[8 - 1] = c0 * d * d * knorm ** 10
    return out


@dataclass
class LadderReport:
    direction: tuple
    rhos: list
    # per x-power j: sequence of coefficient / rho^10
    normalized: dict
    extrapolated: dict
    predicted: dict
    rel_error: dict
    observed_order: dict
    warnings: list


def verify_leading_term(p: PhysicalParams, direction, rhos=(10.0, 20.0, 40.0, 80.0)) -> LadderReport:
    """Fit the rho^10 part of each x-monomial along rho * direction and compare with r_5."""
    require_oblong(p)
    dvec = np.asarray(direction, dtype=float)
    dvec = dvec / np.linalg.norm(dvec)
    lc = leading_constants(p)
    d = derive_constants(p).d
    predicted = {3: lc.c0, 2: 0.0, 1: lc.c0 * d * d}
    rhos = [float(r) for r in rhos]
    seqs = {j: [] for j in predicted}
    warnings = []
    for rho in rhos:
        cp = char_poly(p, rho * dvec)
        for j in predicted:
            seqs[j].append(cp.coeffs[8 - j] / rho ** 10)
    ratio = rhos[1] / rhos[0]
    extrap, rel, order = {}, {}, {}
    for j, seq in seqs.items():
        seq = np.array(seq)
        # Richardson for an O(rho^-2) leading error
        f = ratio ** 2
        rich = (f * seq[1:] - seq[:-1]) / (f - 1.0)
        extrap[j] = float(rich[-1])
        ref = predicted[j]
        scale = abs(ref) if ref != 0 else abs(predicted[3])
        rel[j] = abs(extrap[j] - ref) / scale
        diffs = np.abs(np.diff(seq))
        if len(diffs) >= 2 and diffs[-1] > 0 and diffs[-2] > 0:
            order[j] = float(np.log(diffs[-2] / diffs[-1]) / np.log(ratio))
        else:
            order[j] = float("nan")
    if rhos[-1] > 1e4:
        warnings.append("ladder reaches |k| > 1e4; coefficient fit may be ill-conditioned")
    return LadderReport(tuple(dvec.tolist()), rhos, {j: list(map(float, s)) for j, s in seqs.items()},
                        extrap, predicted, rel, order, warnings)


def subleading_coeffs(p: PhysicalParams, direction, rhos=(20.0, 40.0, 80.0, 160.0)) -> dict:
    """Numerically extracted rho^8 coefficients of x^2, x^3, x^4 along a direction (after removing r5)."""
    dvec = np.asarray(direction, dtype=float)
    dvec = dvec / np.linalg.norm(dvec)
    out = {}
    seqs = {2: [], 3: [], 4: []}
    for rho in rhos:
        cp = char_poly(p, rho * dvec)
        rest = cp.coeffs - r5_coeffs(p, rho)
        for j in seqs:
            seqs[j].append(rest[8 - j] / rho ** 8)
    for j, seq in seqs.items():
        seq = np.array(seq)
        rich = (4.0 * seq[1:] - seq[:-1]) / 3.0
        out[j] = float(rich[-1])
    return out


def predicted_subleading(p: PhysicalParams, horizontal_fraction: float) -> dict:
    """rho^8 coefficients of x^2, x^3, x^4 predicted by r_4 with |kbar|^2 = f rho^2, k3^2 = (1-f) rho^2."""
    lc = leading_constants(p)
    d = derive_constants(p).d
    f = horizontal_fraction
    t1 = {2: -lc.c10 + lc.c12 * d * d, 3: lc.c11, 4: lc.c12}
    t2 = {2: -lc.c20 + lc.c22 * d * d, 3: lc.c21, 4: lc.c22}
    return {j: f * t1[j] + (1.0 - f) * t2[j] for j in (2, 3, 4)}


def export_csv_rows(polys) -> str:
    lines = ["k1,k2,k3," + ",".join(f"c{j}" for j in range(9))]
    for cp in polys:
        lines.append(",".join(f"{x:.17g}" for x in (*cp.k, *cp.coeffs)))
    return "\n".join(lines) + "\n"
