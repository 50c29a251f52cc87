import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupledvi import orlicz as oz

SPECS = [oz.power(1.5), oz.power(2.0), oz.power(3.0), oz.hencky(1.5), oz.hencky(2.0), oz.hencky(3.0)]


def test_constructors_reject_bad_parameters():
    with pytest.raises(ValueError):
        oz.power(1.0)
    with pytest.raises(ValueError):
        oz.hencky(0.5)
    with pytest.raises(ValueError):
        oz.tabulated([1.0, 0.5], [1.0, 2.0])


def test_power_values():
    assert oz.eval_phi(oz.power(3.0), 2.0) == pytest.approx(4.0, rel=1e-14)
    assert oz.eval_big_phi(oz.power(2.0), 3.0) == pytest.approx(4.5, rel=1e-12)
    assert oz.eval_big_phi(oz.power(3.0), 0.0) == 0.0


def test_phi_is_odd_and_big_phi_even():
    spec = oz.hencky(2.0)
    t = np.array([0.3, 1.7, 25.0])
    np.testing.assert_allclose(oz.eval_phi(spec, -t), -oz.eval_phi(spec, t))
    np.testing.assert_allclose(oz.eval_big_phi(spec, -t), oz.eval_big_phi(spec, t))


def test_hencky_big_phi_matches_quadrature():
    from scipy.integrate import quad
    spec = oz.hencky(2.0)
    for t in (0.1, 1.0, 7.0):
        ref, _ = quad(lambda s: float(oz.eval_phi(spec, s)), 0.0, t, epsabs=1e-14, epsrel=1e-13)
        assert oz.eval_big_phi(spec, t) == pytest.approx(ref, rel=1e-10)


def test_phi_inverse_examples():
    assert oz.phi_inverse(oz.power(3.0), 4.0) == pytest.approx(2.0, abs=1e-9)
    assert oz.phi_inverse(oz.hencky(2.0), 0.585786) == pytest.approx(1.0, abs=1e-6)
    spec = oz.hencky(2.0)
    assert oz.eval_phi(spec, oz.phi_inverse(spec, 0.585786)) == pytest.approx(0.585786, abs=1e-9)


def test_complementary_value_examples():
    assert oz.complementary_value(oz.power(2.0), 1.0) == pytest.approx(0.5, abs=1e-12)
    assert oz.complementary_value(oz.power(3.0), 4.0) == pytest.approx(16.0 / 3.0, rel=1e-9)
    for spec in SPECS:
        assert oz.complementary_value(spec, 0.0) == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 3.5])
def test_power_indices_equal_exponent(p):
    lo, hi = oz.index_bounds(oz.power(p))
    assert lo == pytest.approx(p, abs=1e-9) and hi == pytest.approx(p, abs=1e-9)


@pytest.mark.parametrize("gamma", [1.5, 2.0, 3.0])
def test_hencky_indices(gamma):
    lo, hi = oz.index_bounds(oz.hencky(gamma), np.logspace(-4, 4, 801))
    assert lo == pytest.approx(gamma, abs=1e-3) and hi == pytest.approx(2 * gamma, abs=1e-3)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_complementary_indices_are_conjugate(p):
    q = p / (p - 1.0)
    lo, hi = oz.index_bounds(oz.complementary(oz.power(p)))
    assert lo == pytest.approx(q, abs=1e-6) and hi == pytest.approx(q, abs=1e-6)


def test_conjugate_index_report_flags_standard_pairing():
    rep = oz.conjugate_index_report(oz.hencky(2.0))
    assert rep.standard_gap < 5e-2
    assert rep.supported == "standard"
    assert oz.conjugate_index_report(oz.power(3.0)).supported == "both"


def test_degenerate_generator_detected():
    with pytest.raises(ValueError):
        oz.index_bounds(oz.power(2.0), [0.0, 1.0])


def test_delta2_constant():
    assert oz.delta2_constant(oz.power(3.0)) == pytest.approx(8.0, rel=1e-9)
    for spec in SPECS:
        _, hi = oz.index_bounds(spec)
        assert oz.delta2_constant(spec) <= 2.0 ** hi + 1e-9


def test_luxemburg_examples():
    assert oz.luxemburg_norm([1.0], [1.0], oz.power(2.0)) == pytest.approx(1 / np.sqrt(2), abs=1e-8)
    assert oz.luxemburg_norm(np.ones(4), np.full(4, 0.25), oz.power(2.0)) == pytest.approx(1 / np.sqrt(2), abs=1e-8)
    assert oz.luxemburg_norm(np.zeros(3), np.ones(3), oz.power(2.0)) == 0.0
    with pytest.raises(ValueError):
        oz.luxemburg_norm([1.0], [-1.0], oz.power(2.0))


fields = st.integers(1, 12).flatmap(lambda k: st.tuples(
    st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=k, max_size=k),
    st.lists(st.floats(1e-2, 10.0), min_size=k, max_size=k)))


@settings(max_examples=60, deadline=None)
@given(fields, st.sampled_from(SPECS))
def test_luxemburg_unit_ball_and_homogeneity(field, spec):
    v, w = (np.array(a) for a in field)
    if np.max(np.abs(v)) < 1e-6:
        return
    k = oz.luxemburg_norm(v, w, spec)
    assert w @ oz.eval_big_phi(spec, np.abs(v) / k) == pytest.approx(1.0, abs=1e-8)
    assert oz.luxemburg_norm(2 * v, w, spec) == pytest.approx(2 * k, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1e3), st.floats(0.0, 1e3), st.sampled_from(SPECS))
def test_young_inequality(t, s, spec):
    rhs = oz.eval_big_phi(spec, t) + oz.complementary_value(spec, s)
    assert t * s <= rhs * (1 + 1e-8) + 1e-12


@settings(max_examples=60, deadline=None)
@given(fields, fields, st.sampled_from(SPECS))
def test_holder_with_constant_two(fa, fb, spec):
    u, w = (np.array(a) for a in fa)
    v = np.resize(np.array(fb[0]), u.size)
    if not np.any(u) or not np.any(v):
        return
    conj = oz.complementary(spec)
    lhs = w @ np.abs(u * v)
    assert lhs <= 2 * oz.luxemburg_norm(u, w, spec) * oz.luxemburg_norm(v, w, conj) * (1 + 1e-10)


def test_growth_compare_examples():
    p2, p3 = oz.power(2.0), oz.power(3.0)
    assert oz.growth_compare(p2, p3, "essentially_faster").verdict == "pass"
    rep = oz.growth_compare(p2, p2, "dominates")
    assert rep.verdict == "pass" and rep.k == 1.0
    assert oz.growth_compare(p2, p2, "essentially_faster").verdict == "fail"
    rep = oz.growth_compare(p3, p2, "dominates")
    assert rep.verdict == "fail" and rep.witness_t is not None
    with pytest.raises(ValueError):
        oz.growth_compare(p2, p3, "bogus")


def test_sobolev_conjugate_examples():
    rep = oz.sobolev_conjugate(oz.power(2.0), 3)
    assert rep.divergent and rep.conjugate is not None
    lo, hi = oz.index_bounds(rep.conjugate, np.logspace(0, 2, 41))
    assert lo == pytest.approx(6.0, abs=2e-2) and hi == pytest.approx(6.0, abs=2e-2)
    rep = oz.sobolev_conjugate(oz.power(2.0), 2)
    assert rep.divergent and rep.classification == "logarithmic"
    t = np.logspace(-3, 12, 200)
    slow = oz.tabulated(t, t ** 9.0)  # Phi^{-1}(s) ~ s^(1/10)
    assert not oz.sobolev_conjugate(slow, 2).divergent


def test_tabulated_roundtrip(tmp_path):
    t = np.logspace(-2, 2, 30)
    spec = oz.tabulated(t, t ** 1.5)
    oz.save_tabulated(spec, tmp_path / "phi.txt")
    again = oz.load_tabulated(tmp_path / "phi.txt")
    np.testing.assert_array_equal(again.table_t, spec.table_t)
    assert oz.eval_big_phi(again, 3.0) == pytest.approx(3.0 ** 2.5 / 2.5, rel=1e-6)
    with pytest.raises(oz.RangeError):
        oz.eval_phi(spec, 1e3)


def test_sobolev_rejects_small_dimension():
    with pytest.raises(ValueError):
        oz.sobolev_conjugate(oz.power(2.0), 1)
