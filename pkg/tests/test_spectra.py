import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twofluid.closure import ClosureParams
from twofluid.errors import DomainError
from twofluid.grid import Grid
from twofluid.linear_core import resolvent_operator
from twofluid.spectra import (SectorSpec, decay_spectrum, derivative_matrices, generator_matrix,
                              resolvent_norms, sweep_sector, sweep_sup, symbol_norms)
from twofluid.state import LinearCoeffs


@pytest.fixture
def periodic_coeffs(params):
    g = Grid(32, periodic=True)
    return g, LinearCoeffs.constant(g, 1.0, 1.0, params)


class TestSector:
    def test_samples_inside(self):
        spec = SectorSpec()
        assert len(spec.samples) == 16 * 9
        assert all(spec.contains(l) for l in spec.samples)
        assert min(abs(spec.samples)) == pytest.approx(1.0)

    def test_outside_points(self):
        spec = SectorSpec(epsilon=np.pi / 4)
        assert not spec.contains(0.5)
        assert not spec.contains(2 * np.exp(1j * (np.pi - 0.1)))
        assert spec.contains(-2 + 2.01j)

    def test_bad_parameters(self):
        with pytest.raises(DomainError):
            SectorSpec(epsilon=2.0)
        with pytest.raises(DomainError):
            SectorSpec(lambda0=1e4)

    def test_sweep_refuses_outside_sample(self, periodic_coeffs):
        g, c = periodic_coeffs
        with pytest.raises(DomainError):
            sweep_sector(g, c, SectorSpec(samples=np.array([0.1 + 0j])))


class TestNorms:
    def test_power_iteration_matches_dense_svd(self, params):
        g = Grid(12)
        c = LinearCoeffs.constant(g, 1.0, 0.5, params)
        lam = 4 * np.exp(1.2j)
        op = resolvent_operator(g, c, lam)
        free = ~g.boundary_mask.ravel()
        Binv = np.linalg.inv(op.matrix.toarray())[:, free]
        D1, D2 = derivative_matrices(g)
        want = (abs(lam) * np.linalg.norm(Binv, 2),
                abs(lam) ** 0.5 * np.linalg.norm(D1.toarray() @ Binv, 2),
                np.linalg.norm(D2.toarray() @ Binv, 2))
        got = resolvent_norms(g, c, lam)
        assert np.allclose(got, want, rtol=1e-4)

    @pytest.mark.parametrize("lam", [1.0, 3j, 10 * np.exp(2.3j), 500 * np.exp(-2.2j)])
    def test_periodic_symbol(self, periodic_coeffs, lam):
        g, c = periodic_coeffs
        got = resolvent_norms(g, c, lam)
        want = symbol_norms(g, c, lam)
        assert np.allclose(got, want, rtol=1e-2)

    def test_symbol_requires_periodic(self, params, grid1):
        with pytest.raises(DomainError):
            symbol_norms(grid1, LinearCoeffs.constant(grid1, 1, 1, params), 1.0)

    def test_large_lambda_bounded(self, periodic_coeffs):
        g, c = periodic_coeffs
        # lam |B(lam)| tends to 1/rho = 1/2 for large real lam
        assert symbol_norms(g, c, 1e8)[0] == pytest.approx(0.5, rel=1e-3)

    def test_sup_stable_under_refinement(self, periodic_coeffs):
        g, c = periodic_coeffs
        s16 = sweep_sup(sweep_sector(g, c, SectorSpec(n_radii=16, n_rays=5)))
        s32 = sweep_sup(sweep_sector(g, c, SectorSpec(n_radii=32, n_rays=5)))
        assert np.allclose(s16, s32, rtol=0.05)

    @settings(max_examples=20, deadline=None)
    @given(r=st.floats(1.0, 1e3), theta=st.floats(-2.3, 2.3))
    def test_symbol_norms_finite(self, r, theta):
        g = Grid(16, periodic=True)
        c = LinearCoeffs.constant(g, 1.0, 1.0, ClosureParams(3.0, 1.5, 1.0, 0.0))
        vals = symbol_norms(g, c, r * np.exp(1j * theta))
        assert all(np.isfinite(vals)) and all(v >= 0 for v in vals)


class TestDecaySpectrum:
    def test_generator_matches_implicit_step(self, params, rng):
        # one implicit Euler step of the eliminated solver equals (I - dt G)^{-1}
        from twofluid.linear_core import eliminate_density, linear_step
        from twofluid.state import RhsBundle
        g = Grid(9)
        c = LinearCoeffs.constant(g, 1.0, 0.6, params)
        G = generator_matrix(g, c)
        assert G.shape == (8 + 8 + 7,) * 2
        dt = 0.05
        s, e = rng.standard_normal((2, 8))
        v = g.zero_boundary(rng.standard_normal((1, 9)))
        x = np.linalg.solve(np.eye(23) - dt * G, np.concatenate([s, e, v[0, 1:-1]]))
        s1, e1, v1 = linear_step(eliminate_density(g, c, dt), s, e, v, RhsBundle.zeros(g))
        assert np.allclose(np.concatenate([s1, e1, v1[0, 1:-1]]), x, atol=1e-12)

    def test_beta_positive_and_conserved_count(self, params):
        g = Grid(17)
        ds = decay_spectrum(g, LinearCoeffs.constant(g, 1.0, 1.0, params))
        assert ds.beta_hat > 0
        assert int(ds.conserved.sum()) == g.n_cells + 1
        assert np.all(ds.eigenvalues.real <= 1e-9)

    def test_refinement(self, params):
        betas = []
        for n in (33, 65):
            g = Grid(n)
            betas.append(decay_spectrum(g, LinearCoeffs.constant(g, 1.0, 1.0, params)).beta_hat)
        assert abs(betas[0] - betas[1]) / betas[1] < 0.02

    def test_lowest_mode_formula(self, params):
        # the slowest motion is the lowest sine mode; its rate solves the 3x3 symbol
        g = Grid(33)
        c = LinearCoeffs.constant(g, 1.0, 1.0, params)
        h = g.spacing[0]
        s2 = 4 * np.sin(np.pi * h / 2) ** 2 / h**2
        cc = float(c.omega1[0]) + float(c.omega2[0])
        # rho z^2 + mu s2 z + c s2 = 0 with rho = 2
        roots = np.roots([2.0, params.mu * s2, cc * s2])
        ds = decay_spectrum(g, c)
        assert ds.beta_hat == pytest.approx(-max(roots.real), rel=1e-8)

    def test_viscosity_trend(self):
        # underdamped below critical viscosity (rate grows with mu), overdamped above
        # it (rate falls like 1/mu): more viscosity does not always decay faster
        g = Grid(33)
        h = g.spacing[0]
        betas = []
        for mu in (0.5, 1.0, 2.0, 4.0):
            p = ClosureParams(3.0, 1.5, mu, 0.0)
            c = LinearCoeffs.constant(g, 1.0, 1.0, p)
            cc = float(c.omega1[0]) + float(c.omega2[0])
            # slowest root over every discrete sine mode
            want = min(-max(np.roots([2.0, mu * s2, cc * s2]).real)
                       for s2 in 4 * np.sin(np.pi * np.arange(1, 32) * h / 2) ** 2 / h**2)
            betas.append(decay_spectrum(g, c).beta_hat)
            assert betas[-1] == pytest.approx(want, rel=1e-8)
        assert betas[1] > betas[0] and betas[3] < betas[2] < betas[1]

    def test_periodic_refused(self, periodic_coeffs):
        g, c = periodic_coeffs
        with pytest.raises(DomainError):
            decay_spectrum(g, c)
