"""Randomised suite that checks every proven bound and structural identity numerically."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import charpoly as cp
from . import eigen
from . import lindyn as ld
from . import nonlin as nl
from . import spectral as sp
from .params import (PhysicalParams, derive_constants, default_jbar0, energetic_equilibrium,
                     energetic_equilibrium_rate, ZERO_MODE_PRESET, FINITE_K_PRESET)
from .symbol import build_a, build_bhat, build_m, build_m_product, build_s, kernel_vector, quad_form_s, quad_form_s_terms

TOL = 1e-9


def random_params(rng: np.random.Generator, lo: float = 0.1, hi: float = 10.0) -> PhysicalParams:
    """Log-uniform admissible parameters with lambda > nu."""
    v = np.exp(rng.uniform(math.log(lo), math.log(hi), 8))
    v[0] = v[1] * (1.0 + rng.uniform(0.01, 3.0))
    return PhysicalParams(*(float(x) for x in v))


def random_wavenumber(rng: np.random.Generator, kmax: float = 1e3) -> np.ndarray:
    """Integer lattice point of log-uniform length up to kmax (occasionally 0 or on an axis)."""
    u = rng.uniform()
    if u < 0.02:
        return np.zeros(3)
    r = math.exp(rng.uniform(0.0, math.log(kmax)))
    k = rng.normal(size=3)
    k *= r / np.linalg.norm(k)
    if u < 0.1:
        k[:2] = 0.0
    k = np.round(k)
    while np.linalg.norm(k) > kmax:
        k = np.trunc(k * 0.999)
    return k


@dataclass
class CheckResult:
    name: str
    cases: int
    violations: int
    worst: float
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def bound_checks(cases: int, rng: np.random.Generator) -> list[CheckResult]:
    """Real-part, symmetric-part, imaginary-part, exponential and Gershgorin bounds on random (p, k)."""
    names = ("real part <= phi", "max sigma(S_k) <= min(phi, C_sigma/|k|^2)", "|Im| <= sqrt7 d",
             "||e^{tM}|| <= e^{t max sigma(S)}", "|Im| <= sqrt(n-1)||antisym||_F", "Gershgorin containment",
             "eigen residual")
    stats = {n: [0, -math.inf] for n in names}
    ts = (0.5, 3.0)
    for _ in range(cases):
        p = random_params(rng)
        k = random_wavenumber(rng)
        dc = derive_constants(p)
        m = build_m(p, k)
        mn = float(np.linalg.norm(m, 2))
        floor = TOL + sp.roundoff_floor(mn)
        pairs = eigen.eig(m)
        w = pairs.values
        smax = float(np.linalg.eigvalsh(build_s(p, k))[-1])
        checks = {
            names[0]: float(np.max(w.real)) - dc.phi,
            names[1]: smax - sp.s_bound(p, k),
            names[2]: float(np.max(np.abs(w.imag))) - math.sqrt(7.0) * dc.d,
            names[4]: float(np.max(np.abs(w.imag))) - sp.imag_bound_frobenius(m),
        }
        worst_exp = -math.inf
        for t in ts:
            nrm = float(np.linalg.norm(scipy.linalg.expm(t * m), 2))
            worst_exp = max(worst_exp, (nrm - math.exp(t * smax)) / max(1.0, math.exp(t * smax)))
        checks[names[3]] = worst_exp
        c, r = sp.gershgorin_disks(m)
        gap = max(float(np.min(np.abs(z - c) - r)) for z in w)
        checks[names[5]] = gap
        allowed = {n: floor for n in checks}
        checks[names[6]] = float(np.max(pairs.residuals))
        allowed[names[6]] = 1e-9
        for n, excess in checks.items():
            st = stats[n]
            if excess > allowed[n]:
                st[0] += 1
            st[1] = max(st[1], excess)
    return [CheckResult(n, cases, v, worst) for n, (v, worst) in stats.items()]


def symbol_identities(cases: int, rng: np.random.Generator) -> list[CheckResult]:
    prod_bad, prod_worst = 0, 0.0
    quad_bad, quad_worst = 0, 0.0
    ker_bad, ker_worst = 0, 0.0
    for _ in range(cases):
        p = random_params(rng)
        k = random_wavenumber(rng, 50.0)
        m = build_m(p, k)
        diff = float(np.max(np.abs(m - build_m_product(p, k)))) / max(1.0, float(np.max(np.abs(m))))
        prod_worst = max(prod_worst, diff)
        prod_bad += diff > 1e-12
        y = rng.normal(size=8)
        a, b = quad_form_s(p, k, y), quad_form_s_terms(p, k, y)
        e = abs(a - b) / max(1.0, abs(a))
        quad_worst = max(quad_worst, e)
        quad_bad += e > 1e-10
        kv = build_bhat(p, k) @ kernel_vector(k)
        e = float(np.max(np.abs(kv)))
        ker_worst = max(ker_worst, e)
        ker_bad += e > 1e-12 * max(1.0, float(np.dot(k, k)))
    a = build_a(ZERO_MODE_PRESET)
    return [CheckResult("closed form equals similarity product", cases, prod_bad, prod_worst),
            CheckResult("quadratic form decomposition", cases, quad_bad, quad_worst),
            CheckResult("kernel direction annihilated", cases, ker_bad, ker_worst),
            CheckResult("antisymmetric part is skew", 1, int(np.max(np.abs(a + a.T)) > 0), float(np.max(np.abs(a + a.T))))]


def charpoly_checks(cases: int, rng: np.random.Generator) -> list[CheckResult]:
    bad, worst = 0, 0.0
    for _ in range(cases):
        p = random_params(rng)
        k = random_wavenumber(rng, 1e3)
        m = build_m(p, k)
        a = np.sort_complex(eigen.eigvals(m))
        b = cp.poly_roots(cp.char_poly(p, k))
        scale = max(1.0, float(np.linalg.norm(m, 2)))
        e = max(float(np.min(np.abs(b - z))) for z in a) / scale
        worst = max(worst, e)
        bad += e > 1e-6
    out = [CheckResult("eigensolver vs companion roots", cases, bad, worst)]
    ladder_bad, ladder_worst = 0, 0.0
    count_bad = 0
    for p in (ZERO_MODE_PRESET, FINITE_K_PRESET):
        rep = cp.verify_leading_term(p, [0.0, 0.0, 1.0])
        ladder_worst = max(ladder_worst, rep.rel_error[3])
        ladder_bad += rep.rel_error[3] > 1e-2
        d = derive_constants(p).d
        for r in (50.0, 100.0, 500.0):
            dc_ = cp.count_roots_in_disk(cp.char_poly(p, [0.0, 0.0, r]), 2.0 * d)
            count_bad += dc_.count != 3
    out.append(CheckResult("leading constant from ladder (1%)", 2, ladder_bad, ladder_worst))
    out.append(CheckResult("three roots in the disk of radius 2d", 6, count_bad, float(count_bad)))
    return out


def trajectory_checks() -> list[CheckResult]:
    rhos = [10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0]
    bad, worst = 0, 0.0
    for p in (ZERO_MODE_PRESET, FINITE_K_PRESET):
        rep = sp.trajectory_z(p, [0.0, 0.0, 1.0], rhos)
        worst = max(worst, rep.dist_to_id[-1])
        bad += not (rep.dist_to_id[-1] < 1e-2 and rep.monotone and rep.re_positive and rep.conj_present)
    return [CheckResult("slow eigenvalue tends to i d", 2, bad, worst)]


def lindyn_checks(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    bad, worst = 0, 0.0
    for p in (ZERO_MODE_PRESET, FINITE_K_PRESET):
        gm = ld.build_growing_mode(p)
        n = 2 * max(1, max(abs(x) for x in gm.k_star)) + 1
        y0 = gm.field(n, 0.0)
        evolved = {t: ld.semigroup_apply(p, y0, t) for t in (0.5, 1.0, 2.0)}
        for r in (0, 1, 2):
            base = ld.hr_norm(y0, r)
            for t, yt in evolved.items():
                e = abs(ld.hr_norm(yt, r) / base - math.exp(gm.eta_star * t))
                e /= math.exp(gm.eta_star * t)
                worst = max(worst, e)
                bad += e > 1e-10
    out.append(CheckResult("exact exponential growth of the growing mode", 18, bad, worst))
    p = ZERO_MODE_PRESET
    f = ld.random_field(5, rng)
    a = ld.semigroup_apply(p, ld.semigroup_apply(p, f, 0.3), 0.45)
    b = ld.semigroup_apply(p, f, 0.75)
    comp = float(np.max(np.abs(a.coeffs - b.coeffs))) / float(np.max(np.abs(b.coeffs)))
    out.append(CheckResult("semigroup composition", 1, int(comp > 1e-9), comp))
    g = f
    div = 0.0
    for _ in range(20):
        g = ld.semigroup_apply(p, g, 0.1)
        div = max(div, ld.divergence_max(g))
    out.append(CheckResult("incompressibility propagated", 20, int(div > 1e-12), div))
    return out


def nonlin_checks(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    g = nl.SpectralGrid(8)
    p = ZERO_MODE_PRESET
    z = nl.zero_state(g)
    n0 = float(np.max(np.abs(nl.rhs(p, z).z)))
    out.append(CheckResult("rest state is a fixed point", 1, int(n0 != 0.0), n0))
    worst = 0.0
    for pp in (ZERO_MODE_PRESET, FINITE_K_PRESET):
        jb = default_jbar0(pp)
        for t in (0.0, 0.37, 1.9):
            st = energetic_equilibrium(pp, jb, t)
            zz = nl.state_from_homogeneous(pp, g, st.omega, st.J)
            r = nl.rhs(pp, zz).z
            want = energetic_equilibrium_rate(pp, jb, t)
            e = max(float(np.max(np.abs(nl.sym_to_mat(r[nl.JS, 0].real) - want))),
                    float(np.max(np.abs(r[:6]))), float(np.max(np.abs(r[:, 1:]))))
            worst = max(worst, e)
    out.append(CheckResult("rotating-axis orbit solves the equations", 6, int(worst > 1e-9), worst))
    u = nl.random_state(g, rng, 1.0).z[nl.U]
    once = nl.leray_project(u, g.k)
    twice = nl.leray_project(once, g.k)
    e = float(np.max(np.abs(once - twice)))
    out.append(CheckResult("projection idempotent", 1, int(e > 1e-14), e))
    a = 0.4 * rng.normal(size=(3, 3, 50))
    a /= nl.pointwise_norm2(a)[None, None, :] / 0.4
    inv = nl.m_inverse(a)
    resid = np.einsum("ij...,jk...->ik...", a + np.eye(3)[:, :, None], inv) - np.eye(3)[:, :, None]
    e = float(np.max(np.abs(resid)))
    bound = float(np.max(nl.pointwise_norm2(inv))) - 1.0 / 0.6
    out.append(CheckResult("pointwise inverse residual and norm bound", 50,
                           int(e > 1e-13 or bound > 1e-12), max(e, bound)))
    # dissipation is nonnegative and the energy identity holds over a short nonlinear run
    z = nl.random_state(g, rng, 1e-2)
    prev = nl.diagnostics(p, z)
    worst_ed, neg = 0.0, 0
    for _ in range(10):
        z = nl.step(p, z, 1e-3)
        rec = nl.diagnostics(p, z, prev)
        worst_ed = max(worst_ed, rec.ed_residual)
        neg += rec.dissipation < 0
        prev = rec
    out.append(CheckResult("energy-dissipation balance", 10, int(worst_ed > 1e-5 or neg > 0), worst_ed))
    return out


def run_suite(seed: int = 0, bound_cases: int = 10_000, poly_cases: int = 1000,
              symbol_cases: int = 1000) -> dict:
    rng = np.random.default_rng(seed)
    sections = {}
    timing = {}
    for name, fn in (("symbol", lambda: symbol_identities(symbol_cases, rng)),
                     ("spectral", lambda: bound_checks(bound_cases, rng) + trajectory_checks()),
                     ("charpoly", lambda: charpoly_checks(poly_cases, rng)),
                     ("lindyn", lambda: lindyn_checks(rng)),
                     ("nonlin", lambda: nonlin_checks(rng))):
        t0 = time.perf_counter()
        sections[name] = fn()
        timing[name] = time.perf_counter() - t0
    ok = all(c.ok for cs in sections.values() for c in cs)
    report = {
        "seed": seed,
        "ok": ok,
        "sections": {name: [{"name": c.name, "cases": c.cases, "violations": c.violations,
                             "worst": c.worst, "ok": c.ok} for c in cs]
                     for name, cs in sections.items()},
    }
    return {"report": report, "timing": timing}
