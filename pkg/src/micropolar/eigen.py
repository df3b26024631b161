"""Small dense nonsymmetric eigensolver.

Balancing, Householder reduction to Hessenberg form, then single-shift complex QR
with Wilkinson shifts and deflation; eigenvectors come from back substitution on
the triangular Schur factor.  Aimed at matrices of order <= ~16.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = np.finfo(float).eps


class EigenConvergenceError(RuntimeError):
    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


@dataclass
class EigenPairs:
    values: np.ndarray          # (n,) complex
    vectors: np.ndarray         # (n, n) complex, column j pairs with values[j]
    residuals: np.ndarray       # ||A v - w v|| / ||A||


def balance(a):
    """Diagonal similarity scaling by powers of two (Parlett-Reinsch)."""
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    dscale = np.ones(n)
    radix = 2.0
    converged = False
    while not converged:
        converged = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g, f, s = r / radix, 1.0, c + r
            while c < g:
                f *= radix
                c *= radix * radix
            g = r * radix
            while c > g:
                f /= radix
                c /= radix * radix
            if (c + r) / f < 0.95 * s:
                converged = False
                dscale[i] *= f
                a[i, :] /= f
                a[:, i] *= f
    return a, dscale


def hessenberg(a):
    """Return (H, Q) with a = Q H Q^H, H upper Hessenberg, Q unitary."""
    h = np.array(a, dtype=complex)
    n = h.shape[0]
    q = np.eye(n, dtype=complex)
    for j in range(n - 2):
        x = h[j + 1:, j].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        x0 = x[0]
        phase = x0 / abs(x0) if x0 != 0 else 1.0
        v = x
        v[0] = x0 + phase * alpha
        v /= np.linalg.norm(v)
        h[j + 1:, :] -= 2.0 * np.outer(v, v.conj() @ h[j + 1:, :])
        h[:, j + 1:] -= 2.0 * np.outer(h[:, j + 1:] @ v, v.conj())
        q[:, j + 1:] -= 2.0 * np.outer(q[:, j + 1:] @ v, v.conj())
        h[j + 2:, j] = 0.0
    return h, q


def _givens(a, b):
    # unitary G = [[c, s], [-conj(s), c]] with G @ [a, b] = [r, 0], c real
    if b == 0:
        return 1.0, 0.0 + 0.0j
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    na = abs(a)
    r = np.hypot(na, abs(b))
    c = na / r
    s = (a / na) * np.conj(b) / r
    return c, s


def _wilkinson(h, lo, hi):
    a, b = h[hi - 1, hi - 1], h[hi - 1, hi]
    c, d = h[hi, hi - 1], h[hi, hi]
    # centred form avoids cancellation when the two eigenvalues nearly coincide
    half = 0.5 * (a - d)
    disc = np.sqrt(half * half + b * c)
    mid = 0.5 * (a + d)
    e1, e2 = mid + disc, mid - disc
    return e1 if abs(e1 - d) < abs(e2 - d) else e2


def schur(a, max_sweeps_per_n: int = 30):
    """Complex Schur form a = Z T Z^H via shifted QR on the Hessenberg form."""
    h, z = hessenberg(a)
    n = h.shape[0]
    cap = max_sweeps_per_n * n
    sweeps = 0
    hi = n - 1
    stall = 0
    anorm = max(np.abs(h).max(), np.finfo(float).tiny)
    while hi > 0:
        # locate the active unreduced block [lo, hi]
        lo = hi
        while lo > 0:
            sub = abs(h[lo, lo - 1])
            if sub <= EPS * (abs(h[lo, lo]) + abs(h[lo - 1, lo - 1])) or sub <= EPS * EPS * anorm:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            stall = 0
            continue
        if sweeps >= cap:
            raise EigenConvergenceError(f"QR did not converge in {cap} sweeps",
                                        np.diag(h)[hi + 1:].copy())
        sweeps += 1
        stall += 1
        if stall % 11 == 10:
            # exceptional shift to break cycles
            mu = h[hi, hi] + 0.75 * abs(h[hi, hi - 1]) * (0.6 + 0.8j)
        else:
            mu = _wilkinson(h, lo, hi)
        # one explicit shifted QR step on the active block, applied to full rows/cols
        for i in range(lo, hi + 1):
            h[i, i] -= mu
        rots = []
        for i in range(lo, hi):
            c, s = _givens(h[i, i], h[i + 1, i])
            g = np.array([[c, s], [-np.conj(s), c]])
            h[i:i + 2, i:] = g @ h[i:i + 2, i:]
            rots.append(g)
        for i, g in zip(range(lo, hi), rots):
            gh = g.conj().T
            top = min(i + 2, hi) + 1
            h[:top, i:i + 2] = h[:top, i:i + 2] @ gh
            z[:, i:i + 2] = z[:, i:i + 2] @ gh
        for i in range(lo, hi + 1):
            h[i, i] += mu
    return np.triu(h), z, sweeps


def _triangular_vectors(t):
    n = t.shape[0]
    vecs = np.zeros((n, n), dtype=complex)
    small = EPS * max(np.abs(t).max(), np.finfo(float).tiny)
    for j in range(n):
        x = np.zeros(n, dtype=complex)
        x[j] = 1.0
        lam = t[j, j]
        for i in range(j - 1, -1, -1):
            den = t[i, i] - lam
            if abs(den) < small:
                den = small
            x[i] = -(t[i, i + 1:j + 1] @ x[i + 1:j + 1]) / den
        vecs[:, j] = x
    return vecs


def normalize_vector(v):
    """Unit Euclidean norm, first nonzero component made real positive."""
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    mag = np.abs(v)
    idx = int(np.argmax(mag > 1e-12 * mag.max()))
    out = v * (np.conj(v[idx]) / abs(v[idx]))
    out[idx] = abs(v[idx])
    return out


def order_key(w):
    return (-w.real, -w.imag)


def pair_conjugates(vals, tol=1e-11):
    """For real input: snap near-conjugate pairs to exact conjugates, near-real to real."""
    vals = vals.copy()
    n = len(vals)
    used = np.zeros(n, bool)
    scale = max(1.0, np.abs(vals).max())
    for i in range(n):
        if used[i]:
            continue
        used[i] = True
        best, bd = -1, np.inf
        for j in range(n):
            if not used[j]:
                dist = abs(vals[j] - np.conj(vals[i]))
                if dist < bd:
                    best, bd = j, dist
        if best >= 0 and bd <= tol * scale and abs(vals[i].imag) > bd:
            used[best] = True
            re = 0.5 * (vals[i].real + vals[best].real)
            im = 0.5 * (abs(vals[i].imag) + abs(vals[best].imag))
            im = im if vals[i].imag > 0 else -im
            vals[i], vals[best] = complex(re, im), complex(re, -im)
        elif abs(vals[i].imag) <= tol * scale:
            vals[i] = complex(vals[i].real, 0.0)
    return vals


def eigvals(a, do_balance: bool = True):
    a = np.asarray(a)
    real_input = not np.iscomplexobj(a)
    b = balance(a)[0] if do_balance else np.array(a, dtype=complex)
    t, _, _ = schur(b)
    vals = np.diag(t).copy()
    if real_input:
        vals = pair_conjugates(vals)
    order = sorted(range(len(vals)), key=lambda i: order_key(vals[i]))
    return vals[order]


def eig(a, do_balance: bool = True) -> EigenPairs:
    """Eigenpairs ordered by real part descending, then imaginary part descending."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries")
    real_input = not np.iscomplexobj(a)
    ac = np.array(a, dtype=complex)
    if do_balance:
        b, dscale = balance(ac)
    else:
        b, dscale = ac, np.ones(a.shape[0])
    t, z, _ = schur(b)
    vals = np.diag(t).copy()
    vecs = dscale[:, None] * (z @ _triangular_vectors(t))
    if real_input:
        snapped = pair_conjugates(vals)
    else:
        snapped = vals
    anorm = max(np.linalg.norm(ac, 2), np.finfo(float).tiny)
    out_v = np.zeros_like(vecs)
    res = np.zeros(len(vals))
    for j in range(len(vals)):
        v = normalize_vector(vecs[:, j])
        out_v[:, j] = v
        res[j] = np.linalg.norm(ac @ v - snapped[j] * v) / anorm
    order = sorted(range(len(vals)), key=lambda i: order_key(snapped[i]))
    return EigenPairs(snapped[order], out_v[:, order], res[order])
