import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twofluid.closure import (ClosureParams, closure_derivatives, closure_residual,
                              omega_coefficients, pressure, recover_phases, solve_z, z_bracket)
from twofluid.errors import DomainError, InvariantError, SingularityError, SolverError

GOLDEN = (1 + math.sqrt(5)) / 2

density = st.floats(min_value=0.0, max_value=50.0, allow_nan=False)
exponents = st.tuples(st.floats(1.05, 4.0), st.floats(1.0, 3.0)).map(
    lambda ab: (ab[0] * ab[1], ab[0]))  # (gamma_plus, gamma_minus) with ratio >= 1


def quadratic_root(R, Q):
    return (R + np.sqrt(R * R + 4 * Q)) / 2


class TestParams:
    def test_gamma_is_ratio(self):
        assert ClosureParams(3.0, 1.5).gamma == 2.0

    @pytest.mark.parametrize("kw", [dict(gamma_plus=1.2, gamma_minus=1.5),
                                    dict(gamma_plus=2.0, gamma_minus=1.0),
                                    dict(mu=0.0), dict(mu=1.0, nu=-1.0)])
    def test_rejects_inadmissible(self, kw):
        with pytest.raises(DomainError):
            ClosureParams(**kw)


class TestSolveZ:
    def test_pure_minus_phase(self):
        assert solve_z(0.0, 1.0, ClosureParams(3.0, 1.5)) == 1.0

    @pytest.mark.parametrize("gp,gm", [(3.0, 1.5), (2.0, 1.4), (7.0, 1.4)])
    def test_pure_plus_phase(self, gp, gm):
        assert solve_z(1.0, 0.0, ClosureParams(gp, gm)) == 1.0

    def test_golden_ratio(self, params):
        assert solve_z(1.0, 1.0, params) == pytest.approx(GOLDEN, rel=1e-14)

    def test_vectorised_matches_scalar(self, params, rng):
        R, Q = rng.uniform(0, 5, (2, 40))
        Z = solve_z(R, Q, params)
        assert np.allclose(Z, [solve_z(r, q, params) for r, q in zip(R, Q)], rtol=0, atol=0)

    def test_quadratic_closed_form(self, params, rng):
        R, Q = rng.uniform(1e-6, 10, (2, 5000))
        assert np.max(abs(solve_z(R, Q, params) / quadratic_root(R, Q) - 1)) < 1e-13

    def test_cancellation_regime(self, params):
        # Z - R cancels almost completely; the scaled residual test must still pass
        Z = solve_z(532.0, 8e-7, params)
        assert Z >= 532.0 and Z == pytest.approx(quadratic_root(532.0, 8e-7), rel=1e-14)

    @pytest.mark.parametrize("R,Q", [(-1.0, 1.0), (1.0, -0.1), (0.0, 0.0), (np.nan, 1.0)])
    def test_domain_errors(self, params, R, Q):
        with pytest.raises(DomainError):
            solve_z(R, Q, params)

    def test_bracket_contains_root_for_large_mass(self, params):
        # pure minus phase with R + Q = 3: Z = 3^(1/3) lies below R + Q over 2
        lo, hi = z_bracket(0.0, 3.0, ClosureParams(6.0, 2.0).gamma)
        assert lo <= 3.0 ** (1 / 3) <= hi

    def test_budget_exhaustion_reports_bracket(self, params):
        with pytest.raises(SolverError) as info:
            solve_z(1.0, 1.0, params, tol=1e-300, max_iter=1)
        lo, hi = info.value.bracket
        assert lo <= GOLDEN <= hi

    @settings(max_examples=300, deadline=None)
    @given(R=density, Q=density, g=exponents)
    def test_bracket_and_residual(self, R, Q, g):
        if R + Q < 1e-8:
            return
        p = ClosureParams(*g)
        Z = solve_z(R, Q, p)
        lo, hi = z_bracket(R, Q, p.gamma)
        assert lo * (1 - 1e-12) <= Z <= hi * (1 + 1e-12)
        assert Z >= R
        assert abs(closure_residual(Z, R, Q, p.gamma)) <= 1e-12 * max(1.0, Q, Z**p.gamma)

    @settings(max_examples=200, deadline=None)
    @given(R=st.floats(0.01, 20), Q=st.floats(0.01, 20), dR=st.floats(1e-3, 1.0),
           dQ=st.floats(1e-3, 1.0))
    def test_monotone_in_both_arguments(self, R, Q, dR, dQ):
        p = ClosureParams(3.0, 1.5)
        Z = solve_z(R, Q, p)
        assert solve_z(R + dR, Q, p) > Z
        assert solve_z(R, Q + dQ, p) > Z


class TestDerivatives:
    def test_sqrt_branch(self):
        _, dQ = closure_derivatives(1.0, 0.0, ClosureParams(3.0, 1.5))
        assert dQ == pytest.approx(0.5)

    @pytest.mark.parametrize("gp,gm", [(3.0, 1.5), (5.0, 1.2)])
    def test_unit_point(self, gp, gm):
        dR, _ = closure_derivatives(1.0, 1.0, ClosureParams(gp, gm))
        assert dR == pytest.approx(1.0, rel=1e-15)

    def test_golden_point(self, params):
        dR, dQ = closure_derivatives(GOLDEN, 1.0, params)
        assert dR == pytest.approx(GOLDEN / (2 * GOLDEN - 1), rel=1e-14)
        assert dR == pytest.approx(0.7236067977, rel=1e-9)
        assert dQ == pytest.approx(1 / (2 * GOLDEN - 1), rel=1e-14)

    def test_matches_central_differences(self, params):
        R, Q, h = 0.7, 1.3, 1e-5
        dR, dQ = closure_derivatives(solve_z(R, Q, params), R, params)
        fdR = (solve_z(R + h, Q, params) - solve_z(R - h, Q, params)) / (2 * h)
        fdQ = (solve_z(R, Q + h, params) - solve_z(R, Q - h, params)) / (2 * h)
        assert fdR == pytest.approx(dR, rel=1e-8) and fdQ == pytest.approx(dQ, rel=1e-8)

    def test_singular_at_zero(self, params):
        with pytest.raises(SingularityError):
            closure_derivatives(0.0, 0.0, params)
        with pytest.raises(SingularityError):
            omega_coefficients(0.0, 0.0, params)

    @settings(max_examples=300, deadline=None)
    @given(R=density, Q=density, g=exponents)
    def test_bounds(self, R, Q, g):
        if R + Q < 1e-6:
            return
        p = ClosureParams(*g)
        Z = solve_z(R, Q, p)
        dR, dQ = closure_derivatives(Z, R, p)
        slack = 1e-12
        assert 1 / p.gamma - slack <= dR <= 1 + slack
        zg = Z ** (p.gamma - 1)
        assert 1 / (p.gamma * zg) * (1 - slack) <= dQ <= 1 / zg * (1 + slack)


class TestOmega:
    def test_unit_point(self, params):
        assert omega_coefficients(1.0, 1.0, params) == pytest.approx((1.0, 1.0))

    def test_hand_values(self, params):
        assert omega_coefficients(2.0, 0.0, params) == pytest.approx((2.0, 1.0), rel=1e-15)

    def test_golden_point(self, params):
        w1, w2 = omega_coefficients(GOLDEN, 1.0, params)
        dR, dQ = closure_derivatives(GOLDEN, 1.0, params)
        assert w1 == pytest.approx(GOLDEN**3 / (2 * GOLDEN - 1), rel=1e-14)
        assert w1 == pytest.approx(GOLDEN**2 * dR, rel=1e-14)
        assert w2 == pytest.approx(GOLDEN**2 * dQ, rel=1e-14)

    def test_pressure_chain_rule(self, params):
        # omega_i are the partial derivatives of p(R, Q) = Z(R, Q)^gamma_plus
        R, Q, h = 0.4, 2.1, 1e-5
        p = lambda r, q: pressure(solve_z(r, q, params), params)
        w1, w2 = omega_coefficients(solve_z(R, Q, params), R, params)
        gp = params.gamma_plus
        # d p / d R = gamma_plus Z^(gamma_plus - 1) dZ/dR = gamma_plus * omega1
        assert (p(R + h, Q) - p(R - h, Q)) / (2 * h) == pytest.approx(gp * w1, rel=1e-8)
        assert (p(R, Q + h) - p(R, Q - h)) / (2 * h) == pytest.approx(gp * w2, rel=1e-8)


class TestRecoverPhases:
    def test_minus_vacuum(self, params):
        pt = recover_phases(1.0, 0.0, 1.0, params)
        assert pt.alpha == 1.0 and pt.rho_plus == 1.0 and pt.p == 1.0
        assert pt.minus_vacuum and math.isnan(pt.rho_minus)

    def test_pure_minus(self, params):
        pt = recover_phases(0.0, 1.0, 1.0, params)
        assert pt.alpha == 0.0 and pt.p == 1.0 and pt.rho_minus == 1.0

    def test_mixed_pressure_equilibrium(self, params):
        Z = solve_z(1.0, 1.0, params)
        pt = recover_phases(1.0, 1.0, Z, params)
        assert pt.alpha == pytest.approx(2 / (1 + math.sqrt(5)), rel=1e-14)
        assert pt.p == pytest.approx(Z**3, rel=1e-14)
        assert pt.rho_minus**params.gamma_minus == pytest.approx(pt.p, rel=1e-12)
        assert pt.rho_plus**params.gamma_plus == pytest.approx(pt.p, rel=1e-12)

    def test_alpha_above_one(self, params):
        with pytest.raises(InvariantError):
            recover_phases(2.0, 0.0, 1.0, params)
