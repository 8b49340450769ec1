import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twofluid.errors import ShapeError
from twofluid.grid import Grid, diff_ops, read_csv


def sin_field(g):
    x = g.mesh()
    return np.prod(np.sin(np.pi * x), axis=0)


class TestConstruction:
    @pytest.mark.parametrize("shape", [2, (3, 2), (3, 3, 3)])
    def test_rejects_bad_shapes(self, shape):
        with pytest.raises(ShapeError):
            Grid(shape)

    def test_cells_between_nodes(self):
        g = Grid((5, 7), lower=(0, -1), upper=(2, 1))
        assert g.cell_shape == (4, 6)
        assert g.spacing == (0.5, 1 / 3)
        assert g.boundary_mask.sum() == 2 * 5 + 2 * 7 - 4

    def test_periodic_has_no_boundary(self):
        g = Grid(8, periodic=True)
        assert not g.boundary_mask.any() and g.cell_shape == (8,)


class TestOperators:
    def test_grad_of_constant(self):
        g = Grid((6, 5))
        assert np.all(np.abs(g.grad(np.full(g.shape, 3.0))) < 1e-12)

    def test_laplacian_of_square_is_exact(self):
        g = Grid(11)
        x = g.axes()[0]
        assert np.allclose(g.laplacian(x**2), 2.0, atol=1e-10)

    def test_div_grad_matches_laplacian(self):
        errs, lap = [], []
        for n in (17, 33, 65):
            g = Grid(n)
            f = sin_field(g)
            exact = -np.pi**2 * f
            # composed one-sided stencils are only first order at the two outer layers
            dg = g.div(g.grad(f))
            errs.append(np.max(abs(dg - exact)[2:-2]))
            lap.append(np.max(abs(g.laplacian(f) - exact)))
        for e in (errs, lap):
            assert np.log2(e[0] / e[1]) > 1.8 and np.log2(e[1] / e[2]) > 1.8

    @pytest.mark.parametrize("name", ["grad", "div", "laplacian", "grad_div"])
    def test_second_order_2d(self, name):
        def field(g):
            x, y = g.mesh()
            return np.stack([np.sin(x) * np.cos(2 * y), np.exp(x * y)])

        def exact(g):
            x, y = g.mesh()
            u, v = np.sin(x) * np.cos(2 * y), np.exp(x * y)
            ux, uy = np.cos(x) * np.cos(2 * y), -2 * np.sin(x) * np.sin(2 * y)
            vx, vy = y * v, x * v
            if name == "grad":
                return np.stack([ux, uy])
            if name == "div":
                return ux + vy
            uxx, uyy, uxy = -u, -4 * u, -2 * np.cos(x) * np.sin(2 * y)
            vxx, vyy, vxy = y * y * v, x * x * v, (1 + x * y) * v
            if name == "laplacian":
                return np.stack([uxx + uyy, vxx + vyy])
            return np.stack([uxx + vxy, uxy + vyy])

        errs = []
        for n in (9, 17, 33):
            g = Grid((n, n))
            f = field(g)[0] if name == "grad" else field(g)
            want = exact(g)
            errs.append(np.max(abs(diff_ops(g, f, name) - want)))
        assert np.log2(errs[-2] / errs[-1]) > 1.8

    def test_staggered_pair_is_exact_on_linear_and_quadratic(self):
        g = Grid(9)
        x = g.axes()[0]
        xc = g.cell_axes()[0]
        assert np.allclose(g.cell_div((x**2)[None]), 2 * xc, atol=1e-12)
        assert np.allclose(g.cell_grad(xc**2)[0], 2 * x, atol=1e-12)

    def test_unknown_operator(self):
        with pytest.raises(ValueError):
            diff_ops(Grid(5), np.zeros(5), "curl")

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            Grid(5).laplacian(np.zeros(6))

    def test_batched_leading_axes(self, rng):
        g = Grid((5, 6))
        v = rng.standard_normal((3, 2, 5, 6))
        out = g.vector_hessian(v)
        assert out.shape == (3, 2, 2, 2, 5, 6)
        assert np.allclose(out[1], g.vector_hessian(v[1]))

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**32 - 1))
    def test_linearity(self, a, b, seed):
        r = np.random.default_rng(seed)
        g = Grid((6, 5))
        f, h = r.standard_normal((2, 2) + g.shape)
        for op in (g.grad_div, g.laplacian, g.vector_grad, g.cell_div):
            lhs = op(a * f + b * h)
            assert np.allclose(lhs, a * op(f) + b * op(h), atol=1e-9 * (1 + abs(lhs).max()))

    def test_dirichlet_zero_is_preserved(self, rng):
        g = Grid((6, 7))
        v = g.zero_boundary(rng.standard_normal((2,) + g.shape))
        assert np.all(v[:, g.boundary_mask] == 0)
        assert np.all(g.zero_boundary(g.grad_div(v))[:, g.boundary_mask] == 0)


class TestQuadrature:
    def test_constant(self):
        assert Grid(11).integrate(np.ones(11)) == pytest.approx(1.0, rel=1e-15)

    def test_linear_is_exact(self):
        g = Grid(11)
        assert g.integrate(g.axes()[0]) == pytest.approx(0.5, rel=1e-15)

    def test_sine_second_order(self):
        errs = [abs(Grid(n).integrate(np.sin(np.pi * Grid(n).axes()[0])) - 2 / np.pi)
                for n in (11, 21, 41)]
        assert np.log2(errs[0] / errs[1]) == pytest.approx(2, abs=0.1)

    def test_cells_and_weights(self):
        g = Grid((5, 9), upper=(2.0, 3.0))
        assert g.integrate(np.ones(g.cell_shape)) == pytest.approx(6.0)
        assert g.integrate(np.ones(g.shape), weight=np.full(g.shape, 2.0)) == pytest.approx(12.0)


def test_csv_round_trip(tmp_path, rng):
    g = Grid((4, 3))
    v = rng.standard_normal((2,) + g.shape)
    f = rng.standard_normal(g.shape)
    path = tmp_path / "f.csv"
    g.to_csv(path, {"u": v, "p": f})
    cols = read_csv(path)
    assert list(cols) == ["index", "x0", "x1", "u_0", "u_1", "p"]
    assert np.array_equal(cols["u_1"], v[1].ravel())
    assert np.array_equal(cols["p"], f.ravel())
