import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from madelung_strain import wire as w
from madelung_strain.errors import AlignmentError, ConfigurationError, FrameDegeneracyError, SamplingError
from madelung_strain.grid import Grid, sample

R, PITCH = 3.0, 4.0  # c = 5: Frenet curvature 0.12, torsion 0.16


@pytest.fixture(scope="module")
def helix_rates():
    c = w.helix(R, PITCH, 2000, pad=2)
    return w.strain_rates(w.frenet_frame(c))


class TestCurves:
    def test_rejects_bad_shapes(self):
        with pytest.raises(SamplingError):
            w.SampledCurve(np.zeros((5, 2)))
        with pytest.raises(SamplingError):
            w.SampledCurve(np.zeros((3, 3)))

    def test_rejects_repeated_point(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 0, 0], [2, 0, 0]], float)
        with pytest.raises(SamplingError, match="coincide"):
            w.SampledCurve(pts)

    def test_segment_resample(self):
        pts = np.array([[0, 0, 0], [0.1, 0, 0], [1.5, 0, 0], [2.0, 0, 0]], float)
        out = w.arclength_resample(w.SampledCurve(pts), 11)
        np.testing.assert_allclose(out.points[:, 0], np.linspace(0, 2, 11), atol=1e-12)
        assert out.length == pytest.approx(2.0)

    def test_circle_resample(self):
        t = np.sort(np.random.default_rng(3).uniform(0, 2 * np.pi, 400))
        t = np.concatenate([[0.0], t, [2 * np.pi]])
        c = w.SampledCurve(np.stack([2 * np.cos(t), 2 * np.sin(t), 0 * t], axis=1))
        out = w.arclength_resample(c, 500)
        assert abs(out.length - 4 * np.pi) <= 1e-5
        assert out.spacing_deviation() < 1e-4
        out.uniform_step()

    def test_helix_length(self):
        c = w.helix(R, PITCH, 2000)
        assert c.length == pytest.approx(10 * np.pi, rel=1e-12)
        assert c.chord_length == pytest.approx(10 * np.pi, rel=1e-5)

    def test_nonuniform_step_rejected(self):
        c = w.SampledCurve(np.eye(3)[[0, 1, 2, 0]] + np.arange(4)[:, None], [0, 1, 3, 4])
        with pytest.raises(SamplingError):
            c.uniform_step()

    def test_csv_roundtrip(self, tmp_path):
        c = w.helix(1.0, 0.5, 20)
        p = tmp_path / "curve.csv"
        np.savetxt(p, np.column_stack([c.s, c.points]), delimiter=",", header="s,x,y,z", comments="")
        back = w.load_curve_csv(p)
        np.testing.assert_allclose(back.points, c.points)
        np.testing.assert_allclose(back.s, c.s)


class TestFrenet:
    def test_helix_closed_form(self):
        c = w.helix(R, PITCH, 2000, pad=1)
        f = w.frenet_frame(c)
        np.testing.assert_allclose(f.frames, w.helix_frenet(R, PITCH, f.s), atol=1e-4)
        assert f.flag == "frenet"

    def test_planar_binormal(self):
        c = w.arclength_resample(w.helix(2.0, 1e-9, 50).rotated(np.eye(3)), 200)
        pts = c.points.copy()
        pts[:, 2] = 0.0
        f = w.frenet_frame(w.SampledCurve(pts, c.s))
        np.testing.assert_allclose(np.abs(f.e3[:, 2]), 1.0, atol=1e-10)

    def test_straight_line_degenerate(self):
        s = np.linspace(0, 1, 20)
        c = w.SampledCurve(np.stack([s, 2 * s, 0 * s], axis=1) / np.sqrt(5), s)
        with pytest.raises(FrameDegeneracyError) as err:
            w.frenet_frame(c)
        assert "supply frames" in str(err.value)

    def test_non_orthonormal_supplied(self):
        with pytest.raises(ConfigurationError):
            w.AdaptedFrame(np.broadcast_to(2 * np.eye(3), (5, 3, 3)), np.arange(5.0))


class TestRates:
    def test_helix_values(self, helix_rates):
        np.testing.assert_allclose(helix_rates.kappa, -0.12, atol=1e-5)
        np.testing.assert_allclose(helix_rates.lam, 0.0, atol=1e-8)
        np.testing.assert_allclose(helix_rates.tau, 0.16, atol=1e-5)
        np.testing.assert_allclose(helix_rates.bending(), 0.12, atol=1e-5)
        assert helix_rates.rate_asymmetry < 1e-5

    def test_constant_frames_have_zero_rates(self):
        F = np.broadcast_to(Rotation.from_euler("xyz", [0.3, -1, 2]).as_matrix(), (9, 3, 3))
        sr = w.strain_rates(w.AdaptedFrame(F, np.linspace(0, 1, 9)))
        assert np.all(sr.vector() == 0.0)

    def test_rate_matrix_layouts(self):
        sr = w.StrainRates.constant([0.0, 1.0], kappa=1, lam=2, tau=3)
        W = sr.rate_matrix()[0]
        np.testing.assert_array_equal(W, [[0, -1, 2], [1, 0, 3], [-2, -3, 0]])
        np.testing.assert_array_equal(sr.omega_matrix()[0], [[0, -2, 1], [2, 0, -3], [-1, 3, 0]])

    def test_reconstruction(self, helix_rates):
        init = w.helix_frenet(R, PITCH, helix_rates.s[:1])[0]
        s, F = w.reconstruct_frames(helix_rates, init)
        np.testing.assert_allclose(F, w.helix_frenet(R, PITCH, s), atol=1e-4)

    def test_misaligned_lengths(self):
        with pytest.raises(AlignmentError):
            w.StrainRates(np.zeros(3), np.zeros(3), np.zeros(4), np.arange(3.0))

    @pytest.mark.parametrize("angles", [(0.4, -1.1, 2.5), (np.pi / 2, 0, 0), (0.01, 0.02, -3.0)])
    def test_rotation_invariance(self, angles):
        Q = Rotation.from_euler("zyx", angles).as_matrix()
        c = w.helix(R, PITCH, 200, pad=2)
        a = w.strain_rates(w.frenet_frame(c)).vector()
        b = w.strain_rates(w.frenet_frame(c.rotated(Q, (1.0, -2.0, 0.5)))).vector()
        np.testing.assert_allclose(a, b, atol=1e-9)


class TestCoupleStress:
    def test_linear_law(self):
        sr = w.StrainRates.constant(np.linspace(0, 1, 5), kappa=1, lam=1, tau=1)
        M = w.wire_couple_stress(sr, np.diag([2.0, 3.0, 5.0]))
        np.testing.assert_array_equal(M.values, np.broadcast_to([2.0, 3.0, 5.0], (5, 3)))

    @pytest.mark.parametrize("A", [np.ones((2, 2)), [[1, 2, 0], [0, 1, 0], [0, 0, 1]], -np.eye(3)])
    def test_bad_stiffness(self, A):
        with pytest.raises(ConfigurationError):
            w.StiffnessMatrix(A)

    def test_virtual_work_constant(self):
        s = np.linspace(0, 1, 11)
        M = w.wire_couple_stress(w.StrainRates.constant(s, kappa=1), np.eye(3))
        assert w.virtual_work(M, w.StrainRates.constant(s, kappa=1)) == pytest.approx(1.0)

    def test_virtual_work_helix(self, helix_rates):
        M = w.wire_couple_stress(helix_rates, np.eye(3))
        assert helix_rates.s[0] == pytest.approx(0.0, abs=1e-12)
        assert w.virtual_work(M, helix_rates) == pytest.approx(10 * np.pi * 0.04, rel=1e-5)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
    def test_virtual_work_bilinear_symmetric(self, u, v):
        s = np.linspace(0, 2, 7)
        A = np.array([[2.0, 0.5, 0], [0.5, 1.0, 0.1], [0, 0.1, 3.0]])
        a, b = w.StrainRates.constant(s, *u), w.StrainRates.constant(s, *v)
        assert w.virtual_work(w.wire_couple_stress(a, A), b) == pytest.approx(
            w.virtual_work(w.wire_couple_stress(b, A), a), abs=1e-12)

    def test_alignment_error(self):
        M = w.wire_couple_stress(w.StrainRates.constant(np.linspace(0, 1, 5)), np.eye(3))
        with pytest.raises(AlignmentError):
            w.virtual_work(M, w.StrainRates.constant(np.linspace(0, 1.1, 5)))


class TestPlate:
    COEFFS = dict(A=2.0, B=1.5, C=0.8, a=0.1, b=0.2, c=0.3)

    @pytest.mark.parametrize("fn, hess", [
        (lambda x, y: 0.5 * x * x, (1.0, 0.0, 0.0)),
        (lambda x, y: x * y, (0.0, 0.0, 1.0)),
        (lambda x, y: 0.5 * (x * x + y * y), (1.0, 1.0, 0.0)),
    ])
    def test_closed_forms(self, fn, hess):
        G = Grid.euclidean((11, 11), 0.1, (-0.5, -0.5))
        pc = w.plate_couple_stress(sample(G, fn), self.COEFFS)
        zxx, zyy, zxy = hess
        k = self.COEFFS
        expect = {
            "K": k["A"] * zxx + k["c"] * zyy + k["b"] * zxy,
            "Lam": k["c"] * zxx + k["B"] * zyy + k["a"] * zxy,
            "Pi": 0.5 * (k["b"] * zxx + k["a"] * zyy + k["C"] * zxy),
        }
        for name, val in expect.items():
            f = getattr(pc, name)
            np.testing.assert_allclose(f.values[f.mask], val, atol=1e-10)

    def test_needs_plane(self):
        from madelung_strain.errors import DimensionError

        G = Grid.euclidean((5, 5, 5), 0.1)
        with pytest.raises(DimensionError):
            w.plate_couple_stress(sample(G, lambda *x: 0 * x[0]), {})
