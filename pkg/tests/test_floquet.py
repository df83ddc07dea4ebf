import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from kelvinds.flowcore import BaseFlowSpec, DomainError, UsageError, base_flow_matrix
from kelvinds.floquet import direction, monodromy, orientation_scan, wavevector_period

CIRC = base_flow_matrix(BaseFlowSpec.elliptic(1, 1))
ELL = base_flow_matrix(BaseFlowSpec.elliptic(1.5, 1))
TILT = direction(np.pi / 3, 0.4)


def dop853_monodromy(A, k0, nu, T):
    """Independent oracle: integrate each basis vector with DOP853 along the exact k(t)."""
    def f(t, v):
        k = expm(-A.T * t) @ k0
        k2 = k @ k
        return -nu * k2 * v - A @ v + 2 * k * (k @ A @ v) / k2

    cols = [solve_ivp(f, (0, T), e, method="DOP853", rtol=1e-12, atol=1e-14).y[:, -1] for e in np.eye(3)]
    return np.array(cols).T


class TestPeriod:
    def test_circular(self):
        assert wavevector_period(CIRC, [1, 0, 0]) == pytest.approx(2 * np.pi, rel=1e-14)

    def test_elliptic_4_1(self):
        A = base_flow_matrix(BaseFlowSpec.elliptic(4, 1))
        assert wavevector_period(A, [1, 0, 0]) == pytest.approx(np.pi, rel=1e-14)

    @pytest.mark.parametrize("spec", [BaseFlowSpec.plane_strain(1), BaseFlowSpec.shear(1), BaseFlowSpec.elliptic(1, -1)], ids=str)
    def test_aperiodic(self, spec):
        assert wavevector_period(base_flow_matrix(spec), [1, 0.3, 0.2]) is None

    def test_neutral_axis_has_no_period(self):
        assert wavevector_period(CIRC, [0, 0, 2]) is None

    def test_period_matches_orbit(self):
        k0 = np.array([0.3, -0.7, 0.2])
        T = wavevector_period(ELL, k0)
        np.testing.assert_allclose(expm(-ELL.T * T) @ k0, k0, atol=1e-13)


class TestMonodromy:
    def test_circular_inviscid_neutral(self):
        r = monodromy(CIRC, [1, 0, 0.6], 0.0, 256)
        assert abs(r.growth_rate) <= 1e-8
        np.testing.assert_allclose(np.abs(r.multipliers), 1.0, atol=1e-8)

    def test_antisymmetric_unit_multipliers(self):
        A = base_flow_matrix(BaseFlowSpec.rotation(2.0))
        r = monodromy(A, [0.2, 0.9, -0.4], 0.0, 256)
        np.testing.assert_allclose(np.abs(r.multipliers), 1.0, atol=1e-8)

    def test_viscous_circular(self):
        r = monodromy(CIRC, [1, 0, 0], 1.0, 512)
        assert r.growth_rate == pytest.approx(-1.0, abs=1e-7)

    def test_against_dop853_oracle(self):
        r = monodromy(ELL, TILT, 0.05, 1024)
        ref = dop853_monodromy(ELL, TILT, 0.05, r.period)
        np.testing.assert_allclose(r.monodromy.real, ref, atol=1e-9)
        assert not r.monodromy.imag.any()

    def test_determinant_unimodular_inviscid(self):
        r = monodromy(ELL, TILT, 0.0, 512)
        assert abs(abs(np.linalg.det(r.monodromy)) - 1.0) <= 1e-7

    def test_compressive_direction_multiplier_is_one(self):
        # k(T) = k0 and k.v is conserved, so k0 is a left eigenvector with multiplier 1
        r = monodromy(ELL, TILT, 0.0, 512)
        np.testing.assert_allclose(TILT @ r.monodromy.real, TILT, atol=1e-9)

    def test_elliptic_tilt_is_unstable(self):
        assert monodromy(ELL, TILT, 0.0, 512).growth_rate > 0.0

    def test_converged_at_512(self):
        a = monodromy(ELL, TILT, 0.0, 512).growth_rate
        b = monodromy(ELL, TILT, 0.0, 1024).growth_rate
        assert abs(a - b) <= 1e-6

    @pytest.mark.parametrize("c", [0.1, 3.7, 250.0])
    def test_wavevector_scale_invariance(self, c):
        a = monodromy(ELL, TILT, 0.0, 256).growth_rate
        b = monodromy(ELL, c * TILT, 0.0, 256).growth_rate
        assert abs(a - b) <= 1e-9

    def test_errors(self):
        with pytest.raises(DomainError):
            monodromy(base_flow_matrix(BaseFlowSpec.plane_strain(1)), [1, 1, 0], 0.0, 64)
        with pytest.raises(UsageError):
            monodromy(CIRC, [1, 0, 0], 0.0, 16)


class TestScan:
    def test_circular_all_zero(self):
        s = orientation_scan(CIRC, 0.0, 6, 5, steps_per_period=128)
        assert np.all(np.abs(s.growth_rate) <= 1e-8)

    def test_elliptic_has_unstable_direction(self):
        s = orientation_scan(ELL, 0.0, 32, 32)
        assert s.max_growth > 0.0
        th, _ = s.argmax_direction
        # instability lives off the axis and off the plane of the flow
        assert 0.1 < th < np.pi - 0.1 and abs(th - np.pi / 2) > 0.1

    def test_strong_viscosity_damps_everything(self):
        s = orientation_scan(ELL, 10.0, 6, 6, steps_per_period=512)
        assert np.all(s.growth_rate < 0.0)

    def test_matches_pointwise_monodromy(self):
        s = orientation_scan(ELL, 0.0, 3, 4, k_magnitude=2.0, steps_per_period=128)
        i, j = 1, 2
        r = monodromy(ELL, 2.0 * direction(s.theta[i], s.phi[j]), 0.0, 128)
        assert s.growth_rate[i, j] == pytest.approx(r.growth_rate, abs=1e-13)

    def test_grid_and_errors(self):
        with pytest.raises(UsageError):
            orientation_scan(ELL, 0.0, 1, 4)
        with pytest.raises(DomainError):
            orientation_scan(base_flow_matrix(BaseFlowSpec.shear(1)), 0.0, 4, 4)

    def test_exports(self, tmp_path):
        s = orientation_scan(ELL, 0.0, 4, 3, steps_per_period=64)
        s.to_csv(tmp_path / "scan.csv")
        s.write_summary(tmp_path / "scan.json")
        lines = (tmp_path / "scan.csv").read_text().splitlines()
        assert lines[0] == "theta,phi,growth_rate"
        assert len(lines) == 13
        summary = json.loads((tmp_path / "scan.json").read_text())
        assert summary["max_growth"] == s.max_growth
        assert set(summary) == {"max_growth", "argmax_direction", "parameters"}
