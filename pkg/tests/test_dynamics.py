import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewfork import base_flow as bf
from skewfork import dynamics as dy
from skewfork.errors import BlowUp, ConfigInvalid, NotCoercive, SymbolicDriver

from conftest import CUBIC, autonomous, cos_t, periodic, sin_t

TOL = 1e-9


def random_periodic(a2c, a2s, a1c, lam):
    return periodic(a2=bf.TrigSeries(0.0, [[a2c]], [[a2s]]), a1=cos_t(amp=a1c)), lam


family_params = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.0, 1.0),
                          st.floats(-1.0, 1.0))


class TestRhs:
    def test_pitchfork_value(self):
        assert dy.rhs(CUBIC.with_params(lam=1.0), autonomous(), 0.0, 2.0) == pytest.approx(-6.0)

    def test_quadratic_term(self):
        assert dy.rhs(CUBIC.with_params(lam=-0.5), autonomous(a2=2.0), 0.0, 1.0) == pytest.approx(0.5)

    @given(st.floats(-100, 100))
    def test_zero_is_invariant(self, t):
        d = periodic(a2=sin_t(0.3), a1=cos_t())
        assert dy.rhs(CUBIC.with_params(lam=0.7, mu=-0.2), d, t, 0.0) == 0.0

    def test_symbolic_rejected(self):
        d = bf.Driver.from_table(bf.MeasureTable(1, {"a1": (0.0,)}, {"a1": (0.0, 0.0)}))
        with pytest.raises(SymbolicDriver):
            dy.rhs(CUBIC, d, 0.0, 1.0)


class TestRhsX:
    def test_pitchfork_equilibrium(self):
        assert dy.rhs_x(CUBIC.with_params(lam=1.0), autonomous(), 0.0, 1.0) == pytest.approx(-2.0)

    def test_linearization_at_zero(self):
        d = periodic(a1=cos_t())
        t = 0.8
        assert dy.rhs_x(CUBIC.with_params(lam=0.3), d, t, 0.0) == pytest.approx(math.cos(t) + 0.3)

    def test_middle_root(self):
        x = 1 - math.sqrt(2) / 2
        v = dy.rhs_x(CUBIC.with_params(lam=-0.5), autonomous(a2=2.0), 0.0, x)
        assert v == pytest.approx(-3 * x * x + 4 * x - 0.5, rel=1e-14)
        assert v == pytest.approx(0.414, abs=1e-3)

    @settings(max_examples=200)
    @given(family_params, st.floats(0, 50), st.floats(-2, 2))
    def test_matches_central_differences(self, params, t, x):
        d, lam = random_periodic(*params)
        fam = CUBIC.with_params(lam=lam, mu=0.1)
        h = 1e-5 * max(1.0, abs(x))
        fd = (dy.rhs(fam, d, t, x + h) - dy.rhs(fam, d, t, x - h)) / (2 * h)
        exact = dy.rhs_x(fam, d, t, x)
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))

    def test_general_h_adds_terms(self):
        d = periodic(a1=cos_t(), c=sin_t())
        fam = dy.Family(dy.GeneralH(h=dy.HTerm("0.1*c*x", (2.0, 0.2, 0.1))))
        t, x = 0.9, 0.7
        h, hx = 0.1 * math.sin(t) * x, 0.1 * math.sin(t)
        expected = -3 * x * x + math.cos(t) + hx * x**3 + 3 * h * x * x
        assert dy.rhs_x(fam, d, t, x) == pytest.approx(expected, rel=1e-13)
        assert dy.rhs(fam, d, t, x) == pytest.approx((-1 + h) * x**3 + math.cos(t) * x, rel=1e-13)


class TestHTerm:
    def test_must_vanish_at_zero(self):
        with pytest.raises(ValueError):
            dy.HTerm("1 + x")

    def test_certificate_spot_check(self):
        d = periodic(c=sin_t())
        assert dy.HTerm("0.1*c*x", (2.0, 0.2, 0.1)).check_certificate(d)
        assert not dy.HTerm("0.1*c*x", (2.0, 0.1, 0.1)).check_certificate(d)


class TestFlowMap:
    def test_analytic_cubic_decay(self):
        x = dy.flow_map(CUBIC, autonomous(), 0.0, 1.0, 1.0, TOL)
        assert x == pytest.approx(1 / math.sqrt(3), abs=1e-8)

    def test_same_time_returns_start(self):
        assert dy.flow_map(CUBIC, autonomous(), 2.0, 0.37, 2.0, TOL) == 0.37

    def test_linear_test_mode(self):
        fam = dy.Family(dy.Cubic(), lam=0.5, linear_test_mode=True)
        assert dy.flow_map(fam, autonomous(), 0.0, 1.0, 2.0, 1e-11) == pytest.approx(math.e, rel=1e-9)

    def test_periodic_linear_closed_form(self):
        fam = dy.Family(dy.Cubic(), lam=0.2, linear_test_mode=True)
        x = dy.flow_map(fam, periodic(a1=cos_t()), 0.0, 1.0, 3.0, 1e-11)
        assert x == pytest.approx(math.exp(math.sin(3.0) + 0.6), rel=1e-9)

    def test_zero_stays_zero(self):
        assert dy.flow_map(CUBIC.with_params(lam=2.0), periodic(a1=cos_t()), 0.0, 0.0, -50.0, TOL) == 0.0

    def test_backward_blow_up(self):
        with pytest.raises(BlowUp) as err:
            dy.flow_map(CUBIC.with_params(lam=-1.0), autonomous(), 0.0, 0.5, -100.0, TOL)
        assert err.value.t_escape < 0

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            dy.flow_map(CUBIC, autonomous(), 0.0, 1.0, 1.0, 0.0)

    @settings(max_examples=200)
    @given(family_params, st.floats(-3, 3), st.floats(0, 10), st.floats(0.01, 5), st.floats(0.01, 5))
    def test_cocycle(self, params, x0, t0, s, t):
        d, lam = random_periodic(*params)
        fam = CUBIC.with_params(lam=lam)
        tol = 1e-8
        direct = dy.flow_map(fam, d, t0, x0, t0 + s + t, tol)
        mid = dy.flow_map(fam, d, t0, x0, t0 + s, tol)
        composed = dy.flow_map(fam, d, t0 + s, mid, t0 + s + t, tol)
        assert abs(direct - composed) <= 10 * tol * max(1.0, abs(direct))

    @settings(max_examples=200)
    @given(family_params, st.floats(-3, 3), st.floats(1e-3, 1.0), st.floats(0.1, 20))
    def test_fiber_monotone(self, params, x0, gap, t1):
        d, lam = random_periodic(*params)
        fam = CUBIC.with_params(lam=lam)
        tol = 1e-10
        lo = dy.flow_map(fam, d, 0.0, x0, t1, tol)
        hi = dy.flow_map(fam, d, 0.0, x0 + gap, t1, tol)
        # both orbits may merge into the attractor to roundoff, hence the slack
        assert lo < hi + 10 * tol


class TestDissipativity:
    @pytest.mark.parametrize("lam,a2,floor", [(1.0, 0.0, 1.0), (0.0, 2.0, 2.0), (-1.0, 0.0, 1.0)])
    def test_validates(self, lam, a2, floor):
        d = autonomous(a2=a2)
        rho = dy.dissipativity_radius(CUBIC, d, lam=lam)
        assert rho >= floor
        fam = CUBIC.with_params(lam=lam)
        assert dy.rhs(fam, d, 0.0, rho) < 0 < dy.rhs(fam, d, 0.0, -rho)

    def test_periodic_validation(self):
        d = periodic(a2=sin_t(0.5), a1=cos_t())
        rho = dy.dissipativity_radius(CUBIC, d, lam=0.3)
        t = np.linspace(0, 2 * math.pi, 2001)
        fam = CUBIC.with_params(lam=0.3)
        assert np.all(dy.rhs(fam, d, t, rho) < 0) and np.all(dy.rhs(fam, d, t, -rho) > 0)

    def test_nonpositive_leading_coefficient(self):
        with pytest.raises(NotCoercive):
            dy.dissipativity_radius(CUBIC, autonomous(a3=-1.0))

    def test_general_form_needs_certificate(self):
        fam = dy.Family(dy.GeneralH(h=dy.HTerm("0.1*x")))
        with pytest.raises(NotCoercive):
            dy.dissipativity_radius(fam, autonomous())


class TestFamilyJson:
    def test_round_trip(self):
        fam = dy.Family(dy.GeneralH(h=dy.HTerm("0.1*c*x", (2.0, 0.2, 0.1))), lam=0.5, mu=-1.0)
        assert dy.family_from_json(dy.family_to_json(fam)) == fam

    def test_unknown_form(self):
        with pytest.raises(ConfigInvalid) as err:
            dy.family_from_json({"form": "quartic"})
        assert err.value.path == "family.form"

    def test_missing_h_expression(self):
        with pytest.raises(ConfigInvalid) as err:
            dy.family_from_json({"form": "general", "h": {}})
        assert err.value.path == "family.h.expression"
