import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from madelung_strain import grid as g
from madelung_strain import madelung as md
from madelung_strain.errors import ConfigurationError, DimensionError
from madelung_strain.grid import Grid, ScalarField, sample

X = sp.symbols("x")


def state(grid, R, S=None, V=None, **kw):
    zero = lambda *c: 0 * c[0]  # noqa: E731
    kw.setdefault("stationary", grid.time_axis is None)
    return md.WaveState(sample(grid, R), sample(grid, S or zero), sample(grid, V) if V else None, **kw)


def gaussian(*c):
    return np.exp(-0.5 * sum(x * x for x in c))


@pytest.fixture(scope="module")
def gauss1d_oracle():
    R = sp.exp(-X**2 / 2)
    vq = sp.simplify(-sp.diff(R, X, 2) / (2 * R))
    fq = sp.simplify(-sp.diff(vq, X))
    return sp.lambdify(X, vq), sp.lambdify(X, fq)


class TestDecompose:
    def test_real_constant(self, line):
        w = md.decompose(sample(line, lambda x: 1 + 0 * x), sample(line, lambda x: 0 * x), stationary=True)
        assert np.all(w.R.values == 1.0) and np.all(w.S.values == 0.0)

    def test_real_gaussian(self, line):
        w = md.decompose(sample(line, gaussian), sample(line, lambda x: 0 * x), stationary=True)
        np.testing.assert_allclose(w.R.values[w.support], gaussian(line.coords()[0])[w.support])
        assert np.all(w.S.values[w.support] == 0.0)

    def test_phase_sign(self, line):
        hbar = 0.7
        w = md.decompose(sample(line, np.cos), sample(line, np.sin), hbar=hbar, stationary=True)
        x = line.coords()[0]
        S = w.S.values - w.S.values[100]
        np.testing.assert_allclose(S, -hbar * x, atol=1e-12)
        assert w.warnings == ()

    def test_unwrap_warning_at_vortex(self):
        # x + iy winds once around the origin, so no sweep order removes every jump
        G = Grid.euclidean((21, 21), 0.1, (-1.05, -1.05))
        w = md.decompose(sample(G, lambda x, y: x), sample(G, lambda x, y: y), stationary=True)
        assert any("unwrap" in m for m in w.warnings)


class TestQuantumPotential:
    def test_constant(self, line):
        assert g.sup_norm(md.quantum_potential(state(line, lambda x: 2 + 0 * x))) == 0.0

    def test_gaussian_against_oracle(self, line, gauss1d_oracle):
        vq_exact, _ = gauss1d_oracle
        vq = md.quantum_potential(state(line, gaussian))
        x = line.coords()[0]
        assert abs(vq.values[100] - 0.5) < 10 * line.h**2
        m = vq.mask
        exact = vq_exact(x[m])
        assert np.all(np.abs(vq.values[m] - exact) < 10 * line.h**2 * (1 + np.abs(exact)))

    def test_sine_bump(self):
        k = 2.0
        G = Grid.euclidean((101,), 0.01, 0.3)
        vq = md.quantum_potential(state(G, lambda x: np.sin(k * x)))
        np.testing.assert_allclose(vq.values[vq.mask], k * k / 2, atol=10 * G.h**2)

    @settings(max_examples=10, deadline=None)
    @given(hbar=st.floats(0.2, 3.0), mass=st.floats(0.2, 3.0))
    def test_scales_with_hbar_squared_over_mass(self, hbar, mass):
        G = Grid.euclidean((41,), 0.1, -2.0)
        base = md.quantum_potential(state(G, gaussian)).values
        scaled = md.quantum_potential(state(G, gaussian, hbar=hbar, mass=mass)).values
        m = np.isfinite(base)
        np.testing.assert_allclose(scaled[m], base[m] * hbar**2 / mass, rtol=1e-12, atol=1e-14)


class TestQuantumForce:
    def test_gaussian(self, line, gauss1d_oracle):
        _, fq_exact = gauss1d_oracle
        f = md.quantum_force(state(line, gaussian))
        i = 120  # x = 1
        assert abs(f.values[i, 0] - fq_exact(1.0)) < 10 * line.h**2
        assert abs(fq_exact(1.0) - 1.0) < 1e-14

    def test_exponential_density_is_force_free(self, line):
        f = md.quantum_force(state(line, lambda x: np.exp(0.3 * x)))
        assert g.sup_norm(f) < 1e-10


class TestStress:
    def test_constant_density(self, cube):
        assert g.sup_norm(md.stress_tensor(state(cube, lambda x, y, z: 1.5 + 0 * x))) == 0.0

    def test_gaussian_perfect_fluid(self, cube):
        a = 1.0
        s = md.stress_tensor(state(cube, lambda x, y, z: np.exp(-0.5 * a * (x * x + y * y + z * z))))
        rho = np.exp(-a * sum(c * c for c in cube.mesh()))
        expect = -(a / 2) * rho[..., None, None] * np.eye(3)
        np.testing.assert_allclose(s.values[s.mask], expect[s.mask], atol=1e-12)
        assert abs(s.values[16, 16, 16, 0, 0] + 0.5) < 1e-12

    def test_shear_density(self):
        G = Grid.euclidean((21, 21), 0.05, (-0.5, -0.5))
        s = md.stress_tensor(state(G, lambda x, y: np.exp(0.5 * x * y)))
        rho = np.exp(G.mesh()[0] * G.mesh()[1])
        np.testing.assert_allclose(s.values[..., 0, 1][s.mask], rho[s.mask] / 4, rtol=1e-10)

    def test_two_forms_agree(self, cube):
        sf = md.stress_tensor_forms(state(cube, gaussian))
        assert sf.relative_mismatch <= sf.tolerance

    def test_needs_spatial_grid(self):
        G = Grid.euclidean((7, 9), 0.1, time_axis=True)
        with pytest.raises(DimensionError):
            md.stress_tensor(state(G, lambda t, x: 1 + 0 * x))


class TestMeanPressure:
    def test_gaussian_center(self, cube):
        pf = md.mean_pressure_forms(state(cube, lambda x, y, z: np.exp(-0.5 * (x * x + y * y + z * z))))
        assert abs(pf.trace_form.values[16, 16, 16] - 0.5) < 1e-12
        assert abs(pf.amplitude_form.values[16, 16, 16] - 0.5) < 10 * cube.h**2
        assert all(v <= pf.tolerance for v in pf.mismatches.values())

    def test_harmonic_log_density(self, cube):
        p = md.mean_pressure(state(cube, lambda x, y, z: np.exp(0.5 * (x * x - y * y))))
        assert g.sup_norm(p) < 1e-10

    def test_needs_three_dimensions(self):
        G = Grid.euclidean((9, 9), 0.1)
        with pytest.raises(DimensionError):
            md.mean_pressure(state(G, lambda x, y: 1 + 0 * x))

    def test_kinetic_term_nonnegative(self, cube):
        pf = md.mean_pressure_forms(state(cube, lambda x, y, z: np.exp(-x * x + 0.3 * y)))
        assert np.all(pf.kinetic_term.values[pf.kinetic_term.mask] >= 0)


class TestEquilibrium:
    def test_symbolic_identity(self):
        # the stress divergence equals rho f_q identically (checked in closed form)
        R = sp.Function("R")(X)
        sigma = (1 / sp.Integer(4)) * R**2 * sp.diff(sp.log(R**2), X, 2)
        vq = -sp.diff(R, X, 2) / (2 * R)
        assert sp.simplify(sp.diff(sigma, X) - R**2 * (-sp.diff(vq, X))) == 0
        rhs = (R * sp.diff(R, X, 3) - sp.diff(R, X) * sp.diff(R, X, 2)) / 2
        assert sp.simplify(sp.diff(sigma, X) - rhs) == 0

    def test_constant_density(self, cube):
        assert g.sup_norm(md.equilibrium_residual(state(cube, lambda x, y, z: 1 + 0 * x))) == 0.0

    @pytest.mark.parametrize("dim", [1, 3])
    def test_second_order(self, dim):
        coarse = Grid.euclidean((17,) * dim, 0.3, (-2.4,) * dim)
        errs = [md.equilibrium_residual(state(G, gaussian)) for G in (coarse, coarse.refined())]
        order = g.convergence_order(*errs)
        assert 1.8 <= order <= 2.2


class TestFieldEquations:
    def test_real_stationary_state(self, cube):
        rep = md.field_equation_residuals(state(cube, gaussian))
        assert rep.summary["continuity"]["sup"] == 0.0
        assert rep.summary["vorticity_dynamic"]["sup"] == 0.0

    def test_free_particle(self):
        p, m = 1.3, 1.0
        G = Grid.euclidean((9, 41), 0.05, (0.0, -1.0), time_axis=True)
        w = state(G, lambda t, x: 1 + 0 * x, lambda t, x: p * x - p * p / (2 * m) * t)
        rep = md.field_equation_residuals(w)
        assert rep.summary["hamilton_jacobi"]["sup"] < 1e-10
        assert rep.summary["continuity"]["sup"] < 1e-10

    def test_oscillator_ground_state(self):
        G = Grid.euclidean((7, 121), 0.05, (0.0, -3.0), time_axis=True)
        w = state(G, lambda t, x: np.exp(-x * x / 2), lambda t, x: -0.5 * t + 0 * x, lambda t, x: 0.5 * x * x + 0 * t)
        hj = md.field_equation_residuals(w).hj_residual
        assert g.sup_norm(hj) < 10 * G.h**2

    def test_static_grid_must_declare_stationary(self, line):
        with pytest.raises(ConfigurationError, match="stationary"):
            md.field_equation_residuals(state(line, gaussian, stationary=False))


class TestLagrangian:
    def test_free_particle_vanishes(self):
        p = 0.8
        G = Grid.euclidean((9, 41), 0.05, (0.0, -1.0), time_axis=True)
        L = md.lagrangian_density(state(G, lambda t, x: 1 + 0 * x, lambda t, x: p * x - p * p / 2 * t))
        assert g.sup_norm(L) < 1e-10

    def test_oscillator_against_oracle(self):
        G = Grid.euclidean((7, 121), 0.05, (0.0, -3.0), time_axis=True)
        w = state(G, lambda t, x: np.exp(-x * x / 2), lambda t, x: -0.5 * t + 0 * x, lambda t, x: 0.5 * x * x + 0 * t)
        L = md.lagrangian_density(w)
        # -rho (S_t + V + (1/8)|d rho|^2 / rho^2) with rho = exp(-x^2): -rho (x^2 - 1/2 + x^2/2)... evaluated symbolically
        rho = sp.exp(-X**2)
        expr = -rho * (-sp.Rational(1, 2) + X**2 / 2 + sp.diff(rho, X) ** 2 / (8 * rho**2))
        f = sp.lambdify(X, expr)
        for x0, i in ((0.0, 60), (1.0, 80)):
            assert abs(L.values[3, i] - f(x0)) < 10 * G.h**2


class TestSupport:
    def test_floor_masks_tails(self, line):
        w = state(line, lambda x: np.exp(-4 * x * x))
        assert not w.support.all()
        assert np.all(w.R.values[w.support] > md.AMPLITUDE_FLOOR)

    def test_negative_amplitude_rejected(self, line):
        with pytest.raises(ConfigurationError):
            md.WaveState(sample(line, lambda x: x), sample(line, lambda x: 0 * x), stationary=True)
