import math

import numpy as np
import pytest
from scipy import integrate

from rootembed import (Atom, DiffusionSpec, ProbabilityMeasure, Uniform, a_set, c_star, potential_fn,
                       sample_measure, validate_sigma)
from rootembed.errors import InvalidMeasure, ViolatesEllipticity, ViolatesLipschitz

from conftest import D0, D1, NON_UI_MU, PM1


def test_potential_of_point_mass():
    assert D0.potential(2.0) == -2.0


def test_potential_of_two_point_law_at_origin():
    # -max(|x|, 1) for the symmetric pair of atoms at +-1
    assert PM1.potential(0.0) == -1.0
    xs = np.linspace(-3, 3, 61)
    assert np.allclose(PM1.potential(xs), -np.maximum(np.abs(xs), 1.0), atol=1e-15)


def test_potential_of_uniform_matches_quadrature():
    u = ProbabilityMeasure.uniform(-1.0, 1.0)
    for x in (0.0, 0.3, -0.8, 1.7):
        ref, _ = integrate.quad(lambda y: -abs(y - x) * 0.5, -1.0, 1.0, points=[x], epsabs=1e-13)
        assert u.potential(x) == pytest.approx(ref, abs=1e-12)
    assert u.potential(0.0) == pytest.approx(-0.5, abs=1e-15)


def test_potential_fn_samples_breakpoints():
    pf = potential_fn(NON_UI_MU)
    assert list(pf.breakpoints) == [-1.0, 3.0]
    assert pf.values == pytest.approx([-2.0, -2.0])
    assert pf(1.0) == pytest.approx(-2.0)


def test_potential_csv(tmp_path):
    pf = potential_fn(PM1)
    pf.to_csv(tmp_path / "u.csv", [-2.0, 0.0, 2.0])
    rows = (tmp_path / "u.csv").read_text().splitlines()
    assert rows[0] == "x,U"
    assert [float(r.split(",")[1]) for r in rows[1:]] == [-2.0, -1.0, -2.0]


@pytest.mark.parametrize("comps", [
    (Atom(0.0, 0.5), Atom(1.0, 0.4)),
    (Atom(0.0, 1.5), Atom(1.0, -0.5)),
    (Uniform(1.0, 1.0, 1.0),),
    (Atom(math.inf, 1.0),),
    (),
])
def test_invalid_measures_rejected(comps):
    with pytest.raises(InvalidMeasure):
        ProbabilityMeasure(comps)


def test_mean_and_cdf():
    m = ProbabilityMeasure((Atom(-1.0, 0.25), Uniform(0.0, 2.0, 0.75)))
    assert m.mean == pytest.approx(0.5)
    assert m.cdf(-1.0) == pytest.approx(0.25)
    assert m.cdf(-1.0, left=True) == 0.0
    assert m.cdf(1.0) == pytest.approx(0.625)


def test_c_star_identical_laws():
    assert c_star(D0, D0) == 0.0


def test_c_star_shifted_point_mass():
    assert c_star(D0, D1) == 1.0


def test_c_star_non_ui_case_against_breakpoint_scan():
    # the difference of two atomic potentials is piecewise linear, so its sup
    # sits at a breakpoint or in a tail; scan those directly
    pts = np.array([-1.0, 0.0, 3.0, -1e6, 1e6])
    scan = float(np.max(NON_UI_MU.potential(pts) - D0.potential(pts)))
    assert scan == pytest.approx(1.0)
    assert c_star(D0, NON_UI_MU) == pytest.approx(scan, abs=1e-12)


def test_c_star_with_interior_maximum():
    # U_mu - U_nu for these two is smooth inside (-1, 1) with a peak off the breakpoints
    nu = ProbabilityMeasure((Uniform(-1.0, 1.0, 1.0),))
    mu = ProbabilityMeasure((Atom(0.5, 1.0),))
    xs = np.linspace(-3, 3, 600001)
    dense = float(np.max(mu.potential(xs) - nu.potential(xs)))
    assert c_star(nu, mu) == pytest.approx(dense, abs=1e-9)
    assert c_star(nu, mu) >= dense - 1e-15


def test_a_set_shifted_point_mass():
    A = a_set(D0, D1)
    assert A.finite_intervals == ((1.0, math.inf),)
    assert A.contains_plus_inf and not A.contains_minus_inf
    assert A.a_minus == 1.0 and A.a_plus == math.inf
    assert A.contains(5.0) and not A.contains(0.5)


def test_a_set_identical_laws_is_everything():
    A = a_set(PM1, PM1)
    assert A.finite_intervals == ((-math.inf, math.inf),)
    assert A.contains_plus_inf and A.contains_minus_inf
    assert A.a_minus == -math.inf and A.a_plus == math.inf


def test_a_set_two_point_to_origin():
    A = a_set(PM1, D0)
    assert A.finite_intervals == ((0.0, 0.0),)
    assert A.a_minus == 0.0 == A.a_plus
    assert not A.contains_plus_inf and not A.contains_minus_inf


def test_sigma_constant_passes():
    rep = validate_sigma(DiffusionSpec.constant(1.0, K=2.0))
    assert rep.passed and not rep.notes


def test_sigma_zero_violates_ellipticity():
    s = DiffusionSpec.table([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], K=2.0)
    with pytest.raises(ViolatesEllipticity):
        validate_sigma(s)
    rep = validate_sigma(s, raise_on_failure=False)
    assert not rep.passed and rep.ellipticity_violations == [(0.0, 0.0)]


def test_sigma_steep_table_violates_lipschitz():
    s = DiffusionSpec.table([0.0, 0.1], [0.6, 1.6], K=2.0)
    with pytest.raises(ViolatesLipschitz):
        validate_sigma(s)


def test_sigma_table_interpolates_and_holds_flat():
    s = DiffusionSpec.table([0.0, 1.0], [1.0, 1.5], K=2.0)
    assert s(0.5) == pytest.approx(1.25)
    assert s(-4.0) == 1.0 and s(9.0) == 1.5
    assert validate_sigma(s).notes


def test_sample_point_mass():
    assert np.all(sample_measure(D0, 1000, seed=3) == 0.0)


def test_sample_two_point_frequency():
    n = 100_000
    v = sample_measure(PM1, n, seed=4)
    assert set(np.unique(v)) == {-1.0, 1.0}
    p = np.mean(v == 1.0)
    assert abs(p - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_sample_uniform_mean():
    n = 100_000
    v = sample_measure(ProbabilityMeasure.uniform(-1, 1), n, seed=5)
    assert v.min() >= -1 and v.max() <= 1
    assert abs(v.mean()) <= 3 * math.sqrt(1 / 3 / n)


def test_sample_is_reproducible():
    a = sample_measure(PM1, 50, seed=9)
    b = sample_measure(PM1, 50, seed=9)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_measure(PM1, 50, seed=10))
