import numpy as np
import pytest

from fraccoeff import GAMMA_STAR, GammaDomainError
from riesz_op import (
    GridMismatchError,
    GridSpec,
    RieszOperator,
    SizeGuardError,
    StateField,
    SymmetricToeplitz,
    apply_A,
    apply_riesz_formula,
    assemble_dense_1d,
    dense_A,
    eigenvalue_bound,
    eigenvalue_bound_label,
    energy_stability_tau_bound,
    infinity_norm_B,
    spectral_radius_B,
    symbol_bound,
)


class TestGridSpec:
    def test_derived_sizes(self):
        grid = GridSpec(M=20, d=2)
        assert grid.h == 0.05
        assert grid.n == 19
        assert grid.shape == (19, 19)
        assert grid.size == 361
        assert grid.cell_volume == pytest.approx(0.0025)

    def test_nodes_are_interior(self):
        grid = GridSpec(M=8, a=-1.0, b=1.0)
        nodes = grid.nodes()
        assert nodes.size == 7
        assert nodes[0] == pytest.approx(-0.75)
        assert nodes[-1] == pytest.approx(0.75)

    def test_mesh_is_lexicographic(self):
        grid = GridSpec(M=4, d=2)
        x, y = grid.mesh()
        assert list(x[:3]) == [0.25, 0.25, 0.25]
        assert list(y[:3]) == [0.25, 0.5, 0.75]

    @pytest.mark.parametrize("kwargs", [{"M": 3}, {"M": 10, "d": 4}, {"M": 10, "a": 1.0, "b": 1.0}, {"M": 10.5}])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            GridSpec(**kwargs)

    def test_from_h(self):
        assert GridSpec.from_h(0.01).M == 100
        assert GridSpec.from_h(1 / 32).M == 32
        with pytest.raises(ValueError):
            GridSpec.from_h(0.3)

    @pytest.mark.parametrize("h", [5.0, 2.5, 0.0, -0.1])
    def test_from_h_rejects_steps_wider_than_the_domain(self, h):
        with pytest.raises(ValueError, match=f"h={h}"):
            GridSpec.from_h(h)


class TestStateField:
    def test_size_checked(self, small_grid):
        with pytest.raises(GridMismatchError):
            StateField(small_grid, np.zeros(small_grid.size + 1))

    def test_non_finite_rejected(self, small_grid):
        values = np.zeros(small_grid.size)
        values[3] = np.nan
        with pytest.raises(ValueError):
            StateField(small_grid, values)

    def test_norms(self, small_grid):
        field = StateField(small_grid, np.full(small_grid.size, -0.5))
        assert field.max_norm() == 0.5
        assert field.l2_norm() == pytest.approx(np.sqrt(0.25 * small_grid.n * small_grid.h))

    def test_inner_needs_same_grid(self, small_grid):
        other = GridSpec(M=16)
        with pytest.raises(GridMismatchError):
            StateField.zeros(small_grid).inner(StateField.zeros(other))


class TestSymmetricToeplitz:
    @pytest.mark.parametrize("n, embed", [(31, 64), (32, 64), (33, 128), (1, 2)])
    def test_embedding_size(self, n, embed):
        assert SymmetricToeplitz(np.arange(1.0, n + 1)).embed_size == embed

    def test_fft_matches_dense(self, rng):
        toeplitz = SymmetricToeplitz(rng.standard_normal(37))
        x = rng.standard_normal((5, 37))
        np.testing.assert_allclose(
            toeplitz.along_axis(x, 1, "fft"), toeplitz.along_axis(x, 1, "dense"), rtol=1e-12, atol=1e-12
        )

    def test_dense_is_read_only_and_symmetric(self):
        toeplitz = SymmetricToeplitz(np.array([4.0, -1.0, 0.5]))
        assert np.array_equal(toeplitz.dense, toeplitz.dense.T)
        with pytest.raises(ValueError):
            toeplitz.dense[0, 0] = 1.0

    def test_dense_size_guard(self):
        with pytest.raises(SizeGuardError):
            SymmetricToeplitz(np.ones(5000)).dense

    def test_unknown_path(self):
        with pytest.raises(ValueError):
            SymmetricToeplitz(np.ones(4)).along_axis(np.ones(4), 0, "sparse")


class TestRieszOperator:
    def test_rejects_subunit_order(self, small_grid):
        with pytest.raises(GammaDomainError):
            RieszOperator.build(small_grid, 0.5, 0.1)

    def test_rejects_negative_epsilon(self, small_grid):
        with pytest.raises(ValueError):
            RieszOperator.build(small_grid, 1.5, -0.1)

    def test_scale(self):
        op = RieszOperator.build(GridSpec(M=16), 1.5, 0.1)
        assert op.scale == pytest.approx(0.01 * 16**1.5)

    def test_dense_entries(self, small_grid):
        op = RieszOperator.build(small_grid, 1.3, 0.2)
        K = assemble_dense_1d(op)
        assert K.shape == (31, 31)
        assert K[0, 0] == op.coeffs[0]
        assert K[4, 1] == K[1, 4] == op.coeffs[3]
        np.testing.assert_allclose(dense_A(op), op.scale * K)

    @pytest.mark.parametrize("gamma", [1.1, 1.47, 1.5, 2.0])
    def test_positive_definite(self, small_grid, gamma):
        eigenvalues = np.linalg.eigvalsh(dense_A(RieszOperator.build(small_grid, gamma, 0.1)))
        assert eigenvalues[0] > 0.0

    @pytest.mark.parametrize("M", [16, 32, 64, 256])
    def test_paths_agree(self, rng, M):
        grid = GridSpec(M=M)
        op = RieszOperator.build(grid, 1.7, 0.3)
        v = StateField(grid, rng.standard_normal(grid.size))
        fft, dense = apply_A(op, v, "fft").values, apply_A(op, v, "dense").values
        assert np.max(np.abs(fft - dense)) <= 1e-12 * np.max(np.abs(dense))

    def test_apply_checks_grid(self, small_grid):
        op = RieszOperator.build(small_grid, 1.7, 0.3)
        with pytest.raises(GridMismatchError):
            apply_A(op, StateField.zeros(GridSpec(M=16)))


class TestKroneckerSum:
    def test_rank_one_consistency(self, square_grid, rng):
        op2 = RieszOperator.build(square_grid, 1.5, 0.1)
        op1 = RieszOperator.build(GridSpec(M=32), 1.5, 0.1)
        u, v = rng.standard_normal(31), rng.standard_normal(31)
        expected = np.outer(op1.matvec(u), v) + np.outer(u, op1.matvec(v))
        np.testing.assert_allclose(op2.matvec(np.outer(u, v).ravel()), expected.ravel(), rtol=1e-11, atol=1e-11)

    def test_matches_explicit_kronecker_sum(self, rng):
        grid = GridSpec(M=12, d=2)
        op = RieszOperator.build(grid, 1.2, 0.5)
        A1 = dense_A(op)
        eye = np.eye(grid.n)
        A2 = np.kron(A1, eye) + np.kron(eye, A1)
        x = rng.standard_normal(grid.size)
        np.testing.assert_allclose(op.matvec(x, "dense"), A2 @ x, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(op.matvec(x, "fft"), A2 @ x, rtol=1e-11, atol=1e-11)

    def test_symmetric(self, square_grid, rng):
        op = RieszOperator.build(square_grid, 1.8, 0.2)
        u = StateField(square_grid, rng.standard_normal(square_grid.size))
        v = StateField(square_grid, rng.standard_normal(square_grid.size))
        left, right = apply_A(op, u).inner(v), u.inner(apply_A(op, v))
        assert abs(left - right) <= 1e-12 * max(1.0, abs(left))

    def test_three_dimensions(self, rng):
        grid = GridSpec(M=8, d=3)
        op = RieszOperator.build(grid, 1.6, 0.3)
        x = rng.standard_normal(grid.size)
        np.testing.assert_allclose(op.matvec(x, "fft"), op.matvec(x, "dense"), rtol=1e-11, atol=1e-11)


class TestRieszFormula:
    def test_gamma_two_is_second_derivative_away_from_boundary(self):
        M = 40
        x = np.linspace(0.0, 1.0, M + 1)
        samples = np.sin(np.pi * x)
        samples[[0, -1]] = 0.0
        approx = apply_riesz_formula(2.0, 1.0 / M, samples)
        exact = -np.pi**2 * np.sin(np.pi * x[1:-1])
        np.testing.assert_allclose(approx[2:-2], exact[2:-2], rtol=0.0, atol=1e-7)

    def test_gamma_two_sixth_order_rate(self):
        errors = []
        for M in (10, 20, 40):
            x = np.linspace(0.0, 1.0, M + 1)
            samples = np.sin(np.pi * x)
            samples[[0, -1]] = 0.0
            approx = apply_riesz_formula(2.0, 1.0 / M, samples)
            # nodes whose seven-point stencil stays inside [0, 1]
            errors.append(np.max(np.abs(approx - (-np.pi**2) * np.sin(np.pi * x[1:-1]))[2:-2]))
        assert errors[-1] == pytest.approx(4.132310e-9, rel=1e-3)
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        np.testing.assert_allclose(orders, [5.98339, 5.99598], atol=5e-3)

    def test_paths_agree(self):
        x = np.linspace(0.0, 1.0, 41)
        samples = (x * (1 - x)) ** 4
        np.testing.assert_allclose(
            apply_riesz_formula(0.7, 1 / 40, samples, "dense"),
            apply_riesz_formula(0.7, 1 / 40, samples, "fft"),
            rtol=1e-11,
            atol=1e-14,
        )

    def test_endpoints_must_vanish(self):
        with pytest.raises(ValueError, match="vanish"):
            apply_riesz_formula(1.5, 0.1, np.ones(11))

    def test_rejects_gamma_one(self):
        with pytest.raises(GammaDomainError):
            apply_riesz_formula(1.0, 0.1, np.zeros(11))


class TestBounds:
    @pytest.mark.parametrize("gamma", [1.2, GAMMA_STAR - 0.01, GAMMA_STAR + 0.01, 1.9, 2.0])
    @pytest.mark.parametrize("M", [16, 32, 64])
    def test_gerschgorin_dominates_spectrum(self, M, gamma):
        op = RieszOperator.build(GridSpec(M=M), gamma, 0.1)
        largest = np.linalg.eigvalsh(dense_A(op))[-1]
        assert largest <= eigenvalue_bound(op) * (1 + 1e-12)
        assert largest <= symbol_bound(op) * (1 + 1e-12)

    def test_two_dimensional_bound(self, square_grid):
        op2 = RieszOperator.build(square_grid, 1.5, 0.1)
        op1 = RieszOperator.build(GridSpec(M=32), 1.5, 0.1)
        assert eigenvalue_bound(op2) == pytest.approx(2 * eigenvalue_bound(op1))
        assert eigenvalue_bound_label(op1) == "gerschgorin"
        assert eigenvalue_bound_label(op2) != "gerschgorin"

    def test_energy_tau_bound_formula(self, small_grid):
        op = RieszOperator.build(small_grid, 1.5, 0.1)
        lam = eigenvalue_bound(op)
        assert energy_stability_tau_bound(op) == pytest.approx(4.0 / (1.0 + np.sqrt(1.0 + 8.0 * lam)))

    @pytest.mark.parametrize("gamma, expected", [(1.2, 0.43557), (1.5, 0.21257), (1.8, 0.096908)])
    def test_energy_tau_bound_values(self, gamma, expected):
        op = RieszOperator.build(GridSpec.from_h(0.01), gamma, 0.1)
        assert energy_stability_tau_bound(op) == pytest.approx(expected, rel=1e-4)

    @pytest.mark.parametrize("tau", [0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 10.0])
    def test_B_is_a_contraction(self, small_grid, tau):
        op = RieszOperator.build(small_grid, 1.6, 0.2)
        lam = np.linalg.eigvalsh(dense_A(op))
        expected = np.max(np.abs(1 - 0.5 * tau * lam) / (1 + 0.5 * tau * lam))
        rho = spectral_radius_B(op, tau)
        assert rho == pytest.approx(expected, rel=1e-10)
        assert rho < 1.0

    def test_infinity_norm_can_exceed_one(self):
        op = RieszOperator.build(GridSpec.from_h(0.01), 1.2, 0.1)
        assert abs(infinity_norm_B(op, 1.0) - 1.37) < 0.01

    def test_infinity_norm_needs_one_dimension(self, square_grid):
        with pytest.raises(ValueError):
            infinity_norm_B(RieszOperator.build(square_grid, 1.5, 0.1), 0.5)

    def test_spectral_size_guard(self):
        op = RieszOperator.build(GridSpec(M=1024), 1.5, 0.1)
        with pytest.raises(SizeGuardError):
            spectral_radius_B(op, 0.5)
