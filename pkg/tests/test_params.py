import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from micropolar.params import (FINITE_K_PRESET, OBLATE_PRESET, PARAM_KEYS, ZERO_MODE_PRESET,
                               PhysicalParams, check_jbar_spectrum, classify_shape, default_jbar0,
                               derive_constants, energetic_equilibrium, energetic_equilibrium_rate,
                               equilibrium, orbit_period, params_from_mapping, require_oblong,
                               rotation2, validate)

from conftest import params_strategy


def test_zero_mode_preset_values():
    # published parameter set of the zero-mode example
    assert ZERO_MODE_PRESET.as_dict() == {"lambda": 3.2, "nu": 0.6, "mu": 4.3, "kappa": 3.3,
                                          "alpha": 0.9, "beta": 6.8, "gamma": 0.4, "tau": 4.4}
    assert FINITE_K_PRESET.as_dict() == {"lambda": 3.6, "nu": 1.2, "mu": 2.4, "kappa": 0.4,
                                         "alpha": 5.3, "beta": 3.1, "gamma": 1.7, "tau": 20.0}


def test_validate_examples():
    assert validate(ZERO_MODE_PRESET) == []
    assert validate(ZERO_MODE_PRESET.replace(mu=0.0)) == ["mu>0"]
    assert validate(ZERO_MODE_PRESET.replace(nu=7.0)) == ["2lambda>nu"]
    assert "finite" in validate(ZERO_MODE_PRESET.replace(tau=math.nan))


@pytest.mark.parametrize("field,bad,label", [
    ("kappa", 0.0, "kappa>0"), ("tau", -1.0, "tau>0"), ("nu", 0.0, "nu>0"),
    ("alpha", -10.0, "alpha+4beta/3>0"), ("gamma", -7.0, "beta+gamma>0"),
])
def test_validate_each_constraint(field, bad, label):
    assert label in validate(ZERO_MODE_PRESET.replace(**{field: bad}))


def test_derived_constants_zero_mode():
    dc = derive_constants(ZERO_MODE_PRESET)
    assert dc.d == pytest.approx(4.4 / 6.6, abs=1e-15)
    assert dc.phi == pytest.approx(math.sqrt(1 - 0.6 / 3.2) * 4.4 / 6.6, rel=1e-15)
    assert dc.phi == pytest.approx(0.600925, abs=1e-6)
    assert dc.c_sigma == pytest.approx(0.160494, abs=1e-6)
    assert dc.c == pytest.approx((0.6 / 3.2 - 1) * 4.4 / 6.6, rel=1e-15)
    assert dc.mu_tilde == pytest.approx(5.95)
    assert dc.alpha_tilde == pytest.approx(0.9 + 4 * 6.8 / 3)
    assert dc.gamma_tilde == pytest.approx(7.2)
    assert dc.s == pytest.approx(-dc.d / math.sqrt(2.6))


def test_oblate_constants_flagged():
    dc = derive_constants(OBLATE_PRESET)
    assert dc.s is None and not dc.s_defined
    assert dc.phi == 0.0
    with pytest.raises(ValueError):
        require_oblong(OBLATE_PRESET)


def test_classify_shape():
    assert classify_shape(ZERO_MODE_PRESET) == "oblong"
    assert classify_shape(ZERO_MODE_PRESET.replace(lambda_=1.0, nu=1.5)) == "oblate"
    assert classify_shape(ZERO_MODE_PRESET.replace(lambda_=1.0, nu=1.0)) == "isotropic-degenerate"


def test_equilibrium_examples():
    eq = equilibrium(ZERO_MODE_PRESET)
    np.testing.assert_allclose(eq.omega_eq, [0, 0, 4.4 / 6.6], rtol=1e-15)
    np.testing.assert_array_equal(eq.j_eq, np.diag([3.2, 3.2, 0.6]))
    eq2 = equilibrium(ZERO_MODE_PRESET.replace(tau=8.8))
    np.testing.assert_allclose(eq2.omega_eq, 2 * eq.omega_eq, rtol=1e-15)
    np.testing.assert_array_equal(eq2.j_eq, eq.j_eq)
    assert not np.any(eq.u_eq) and eq.p_eq == 0.0


def test_params_from_mapping_requires_all_keys():
    with pytest.raises(KeyError):
        params_from_mapping({"lambda": 1.0})
    p = params_from_mapping(ZERO_MODE_PRESET.as_dict())
    assert p == ZERO_MODE_PRESET
    assert tuple(ZERO_MODE_PRESET.as_dict()) == PARAM_KEYS


def test_energetic_equilibrium_examples():
    p = ZERO_MODE_PRESET
    jb = default_jbar0(p)
    st0 = energetic_equilibrium(p, jb, 0.0)
    np.testing.assert_allclose(st0.J[:2, :2], jb, atol=1e-15)
    assert st0.J[2, 2] == p.lambda_
    stp = energetic_equilibrium(p, jb, orbit_period(p))
    np.testing.assert_allclose(stp.J, st0.J, atol=1e-13)
    diag = np.diag([p.lambda_, p.nu])
    for t in (0.1, 2.7, 11.0):
        ev = np.sort(np.linalg.eigvalsh(energetic_equilibrium(p, diag, t).J))
        np.testing.assert_allclose(ev, np.sort([p.lambda_, p.nu, p.lambda_]), rtol=1e-14)
        s = energetic_equilibrium(p, jb, t)
        assert not np.any(s.u) and s.p == 0.0
        np.testing.assert_allclose(s.omega, equilibrium(p).omega_eq)


def test_energetic_equilibrium_rejects_wrong_spectrum():
    with pytest.raises(ValueError):
        check_jbar_spectrum(ZERO_MODE_PRESET, np.diag([1.0, 2.0]))
    with pytest.raises(ValueError):
        check_jbar_spectrum(ZERO_MODE_PRESET, np.array([[3.2, 1.0], [0.0, 0.6]]))


def test_orbit_rate_matches_finite_difference():
    p = FINITE_K_PRESET
    jb = default_jbar0(p, 1.1)
    h = 1e-6
    for t in (0.0, 0.4, 3.0):
        fd = (energetic_equilibrium(p, jb, t + h).J - energetic_equilibrium(p, jb, t - h).J) / (2 * h)
        np.testing.assert_allclose(energetic_equilibrium_rate(p, jb, t), fd, atol=1e-7)


@given(params_strategy(), st.floats(min_value=0.0, max_value=50.0), st.floats(min_value=0.0, max_value=6.3))
def test_orbit_preserves_spectrum(p, t, angle):
    jb = rotation2(angle) @ np.diag([p.nu, p.lambda_]) @ rotation2(angle).T
    ev = np.sort(np.linalg.eigvalsh(energetic_equilibrium(p, jb, t).J))
    np.testing.assert_allclose(ev, np.sort([p.nu, p.lambda_, p.lambda_]), rtol=1e-12)


@given(params_strategy())
def test_derived_constants_consistent(p):
    dc = derive_constants(p)
    assert validate(p) == []
    assert dc.phi > 0 and dc.c < 0 and dc.s < 0
    assert dc.phi ** 2 == pytest.approx((1 - p.nu / p.lambda_) * dc.d ** 2, rel=1e-12)
    assert dc.s ** 2 * (p.lambda_ - p.nu) == pytest.approx(dc.d ** 2, rel=1e-12)
    assert isinstance(p, PhysicalParams)
