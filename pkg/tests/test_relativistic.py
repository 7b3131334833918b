import numpy as np
import pytest
import sympy as sp

from madelung_strain import grid as g
from madelung_strain import madelung as md
from madelung_strain import relativistic as rl
from madelung_strain.errors import DimensionError, EmptySupportError, NormalizationError
from madelung_strain.grid import CovectorField, Grid, ScalarField, sample

K = np.array([np.sqrt(1.25), 0.5, 0.0, 0.0])  # eta(k, k) = 1 = k0^2 for m0 = hbar = c = 1


@pytest.fixture(scope="module")
def box4():
    return Grid.lorentzian((17, 17, 9, 9), 0.1)


def plane_wave(grid, k=K, R=1.0, **kw):
    return rl.RelWaveState(sample(grid, lambda *x: R + 0 * x[0]),
                           sample(grid, lambda *x: k[0] * x[0] - sum(k[i] * x[i] for i in range(1, 4))), **kw)


def u_rest(grid):
    return CovectorField(grid, np.broadcast_to([1.0, 0, 0, 0], grid.shape + (4,)).copy())


class TestKleinGordon:
    def test_on_shell(self, box4):
        re, im = rl.kg_residual(plane_wave(box4))
        assert max(g.sup_norm(re), g.sup_norm(im)) <= 10 * box4.h**2

    def test_off_shell_detected(self, box4):
        k = K.copy()
        k[0] = np.sqrt(2.25)  # eta(k, k) = k0^2 + 1
        re, im = rl.kg_residual(plane_wave(box4, k))
        resid = np.hypot(re.values, im.values)[re.mask]
        np.testing.assert_allclose(resid, 1.0, atol=10 * box4.h**2)

    def test_vacuum_masked(self, box4):
        s = rl.RelWaveState(sample(box4, lambda *x: np.where(x[1] > 0.5, 1.0, 0.0)), sample(box4, lambda *x: 0 * x[0]))
        re, _ = rl.kg_residual(s)
        assert not re.mask[:, box4.coords()[1] < 0.4].any()

    def test_second_order(self):
        # amplitude modulated wave: not an exact stencil case
        coarse = Grid.lorentzian((9, 9, 9, 9), 0.2)
        k = np.array([1.3, 0.4, 0.3, 0.0])

        def resid(G):
            s = rl.RelWaveState(sample(G, lambda *x: 1 + 0 * x[0]),
                                sample(G, lambda *x: k[0] * x[0] - k[1] * x[1] - k[2] * x[2]),
                                m0=float(np.sqrt(k[0] ** 2 - k[1] ** 2 - k[2] ** 2)))
            re, im = rl.kg_residual(s)
            return ScalarField(G, np.hypot(re.values, im.values), re.mask)

        order = g.convergence_order(resid(coarse), resid(coarse.refined()))
        assert 1.8 <= order <= 2.2


class TestFieldResiduals:
    def test_on_shell(self, box4):
        rep = rl.rel_field_residuals(plane_wave(box4))
        assert rep.summary["continuity"]["sup"] < 1e-10
        assert rep.summary["mass_shell"]["sup"] < 1e-10

    def test_no_wave(self, box4):
        s = rl.RelWaveState(sample(box4, lambda *x: 1 + 0 * x[0]), sample(box4, lambda *x: 0 * x[0]), m0=2.0)
        rep = rl.rel_field_residuals(s)
        assert rep.summary["continuity"]["sup"] == 0.0
        np.testing.assert_allclose(rep.mass_shell_residual.values[rep.mass_shell_residual.mask], -4.0)

    def test_dispersion_rescaling(self, box4):
        s = plane_wave(box4, hbar=0.5, m0=2.0, k=K * 4)
        d = rl.dispersion_residual(s)
        m = rl.rel_field_residuals(s).mass_shell_residual
        np.testing.assert_allclose(s.hbar**2 * d.values[d.mask], m.values[d.mask], rtol=1e-12, atol=1e-12)


class TestEffectiveMass:
    def test_constant_amplitude(self, box4):
        em = rl.effective_mass(plane_wave(box4, m0=1.7))
        assert np.all(em.mass.values[em.mass.mask] == 1.7)
        assert not em.has_tachyonic

    def test_exponential_amplitude(self):
        # R = exp(kappa x0) has box(R)/R = kappa^2; hbar^2 mu / c^2 = 0.19 m0^2 gives m = 0.9 m0
        G = Grid.lorentzian((9, 9, 9, 9), 0.05)
        kappa = np.sqrt(0.19)
        em = rl.effective_mass(rl.RelWaveState(sample(G, lambda *x: np.exp(kappa * x[0])), sample(G, lambda *x: 0 * x[0])))
        np.testing.assert_allclose(em.mass.values[em.mass.mask], 0.9, atol=10 * G.h**2)

    def test_tachyonic_flag(self):
        G = Grid.lorentzian((9, 9, 9, 9), 0.05)
        em = rl.effective_mass(rl.RelWaveState(sample(G, lambda *x: np.exp(1.5 * x[0])), sample(G, lambda *x: 0 * x[0])))
        assert em.has_tachyonic and em.mass.n_valid == 0


class TestStress:
    def test_constant_density(self, box4):
        assert g.sup_norm(rl.rel_stress_tensor(plane_wave(box4))) == 0.0

    def test_static_embedding(self):
        G4 = Grid.lorentzian((7, 17, 17, 17), 0.15, (0.0, -1.2, -1.2, -1.2))
        G3 = Grid.euclidean((17, 17, 17), 0.15, (-1.2,) * 3)
        f = lambda x, y, z: np.exp(-0.5 * (x * x + y * y + z * z))  # noqa: E731
        s = rl.RelWaveState(sample(G4, lambda t, x, y, z: f(x, y, z)), sample(G4, lambda t, x, y, z: -t))
        w = md.WaveState(sample(G3, f), sample(G3, lambda x, y, z: 0 * x), stationary=True)
        rel = rl.rel_stress_tensor(s).values[3]
        nr = md.stress_tensor(w).values
        m = np.isfinite(nr[..., 0, 0]) & np.isfinite(rel[..., 0, 0])
        np.testing.assert_allclose(rel[m][:, 1:, 1:], nr[m], rtol=1e-12, atol=1e-15)
        assert np.all(rel[m][:, 0, :] == 0.0)

    def test_mixed_shear(self):
        G = Grid.lorentzian((9, 9), 0.05)
        s = rl.RelWaveState(sample(G, lambda t, x: np.exp(0.5 * t * x)), sample(G, lambda t, x: 0 * t))
        sig = rl.rel_stress_tensor(s)
        rho = np.exp(G.mesh()[0] * G.mesh()[1])
        np.testing.assert_allclose(sig.values[..., 0, 1][sig.mask], rho[sig.mask] / 4, rtol=1e-10)


class TestEnergyMomentum:
    def test_vacuum_rejected(self, box4):
        with pytest.raises(EmptySupportError):
            rl.RelWaveState(sample(box4, lambda *x: 0 * x[0]), sample(box4, lambda *x: 0 * x[0]))

    def test_plane_wave_divergence(self, box4):
        s = plane_wave(box4)
        u = CovectorField(box4, np.broadcast_to(K * np.array([1, -1, -1, -1]), box4.shape + (4,)).copy())
        em = rl.energy_momentum_tensor(s, u)
        assert g.sup_norm(em.divergence) < 1e-10

    def test_unit_check(self, box4):
        u = CovectorField(box4, np.broadcast_to([1.1, 0, 0, 0], box4.shape + (4,)).copy())
        with pytest.raises(NormalizationError):
            rl.energy_momentum_tensor(plane_wave(box4), u)

    def test_static_gaussian_matches_equilibrium(self):
        G = Grid.lorentzian((9, 21, 21, 21), 0.15, (0.0, -1.5, -1.5, -1.5))
        f = lambda x, y, z: np.exp(-0.5 * (x * x + y * y + z * z))  # noqa: E731
        s = rl.RelWaveState(sample(G, lambda t, x, y, z: f(x, y, z)), sample(G, lambda t, x, y, z: -t))
        em = rl.energy_momentum_tensor(s, u_rest(G))
        # oracle: d_nu T^{i nu} = -d_j sigma_ij = -rho f_q^i for the static Gaussian, f_q = x
        x = G.mesh()
        rho = f(x[1], x[2], x[3]) ** 2
        m = em.divergence.mask
        for i in (1, 2, 3):
            assert np.max(np.abs(em.divergence.values[..., i][m] + rho[m] * x[i][m])) < 10 * G.h**2


class TestMeanPressure:
    def test_constant_density(self, box4):
        assert g.sup_norm(rl.rel_mean_pressure(plane_wave(box4))) == 0.0

    def test_forms_agree_and_static_value(self):
        G = Grid.lorentzian((9, 17, 17, 17), 0.15, (0.0, -1.2, -1.2, -1.2))
        s = rl.RelWaveState(sample(G, lambda t, x, y, z: np.exp(-0.5 * (x * x + y * y + z * z))),
                            sample(G, lambda t, x, y, z: -t))
        pf = rl.rel_mean_pressure_forms(s)
        assert pf.mismatches["trace-box"] <= pf.tolerance
        assert pf.mismatches["trace-amplitude"] <= pf.tolerance
        # static Gaussian: sigma_ij = -(1/2) rho delta_ij, eta-trace = +3/2 rho, so pi_bar = -(3/8) rho
        assert abs(pf.trace_form.values[4, 8, 8, 8] + 3 / 8) < 1e-12

    def test_needs_four_dimensions(self):
        G = Grid.lorentzian((9, 9), 0.1)
        with pytest.raises(DimensionError):
            rl.rel_mean_pressure(rl.RelWaveState(sample(G, lambda *x: 1 + 0 * x[0]), sample(G, lambda *x: 0 * x[0])))


class TestLagrangian:
    def test_on_shell_plane_wave(self, box4):
        L = rl.rel_lagrangian(plane_wave(box4, R=2.0))
        np.testing.assert_allclose(L.values[L.mask], -4.0, rtol=1e-12)

    def test_symbolic_static_gaussian(self):
        t, x = sp.symbols("t x")
        R = sp.exp(-x**2 / 2)
        S = -t
        L = -(sp.diff(R, t) ** 2 - sp.diff(R, x) ** 2) / 2 - R**2 / 2 * ((sp.diff(S, t) ** 2 - sp.diff(S, x) ** 2) + 1)
        f = sp.lambdify((t, x), L)
        G = Grid.lorentzian((9, 41), 0.05, (0.0, -1.0))
        s = rl.RelWaveState(sample(G, lambda t, x: np.exp(-x * x / 2)), sample(G, lambda t, x: -t))
        num = rl.rel_lagrangian(s)
        tt, xx = G.mesh()
        m = num.mask
        assert np.max(np.abs(num.values[m] - f(tt[m], xx[m]))) < 10 * G.h**2
