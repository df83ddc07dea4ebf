import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kelvinds.audit import random_incompressible_ensemble
from kelvinds.ds import (
    BallRestricted,
    DSFullSum,
    External,
    ModeEnsemble,
    convention_map_amplitude,
    convention_map_gradient,
    cross_scale_experiment,
    ds_rhs,
    evolve_ensemble,
    parse_closure,
    self_consistent_gradient,
)
from kelvinds.flowcore import BaseFlowSpec, ConsistencyError, UsageError, ValidationError, base_flow_matrix
from kelvinds.kelvin import KelvinMode, SimulationConfig, integrate_mode

ROT = base_flow_matrix(BaseFlowSpec.rotation(1))
SINGLE = ModeEnsemble([[0, 0, 1]], [[0.5j, 0, 0]])


def naive_gradient(ensemble):
    """A_mn = sum over explicit +/- members of i k_n v_m, by loops."""
    A = np.zeros((3, 3), dtype=complex)
    for k, v in zip(ensemble.k, ensemble.v):
        partner = -v if ensemble.point_symmetric else np.conj(v)
        for kk, vv in ((k, v), (-k, partner)):
            for m in range(3):
                for n in range(3):
                    A[m, n] += 1j * kk[n] * vv[m]
    return A


class TestEnsemble:
    def test_rejects_equal_and_opposite_wavevectors(self):
        with pytest.raises(ValidationError):
            ModeEnsemble([[1, 0, 0], [1, 0, 0]], [[0, 1j, 0], [0, 0, 1j]])
        with pytest.raises(ValidationError):
            ModeEnsemble([[1, 0, 0], [-1, 0, 0]], [[0, 1j, 0], [0, 0, 1j]])

    def test_rejects_real_parts_when_point_symmetric(self):
        with pytest.raises(ValidationError):
            ModeEnsemble([[1, 0, 0]], [[0, 1 + 1j, 0]])
        ModeEnsemble([[1, 0, 0]], [[0, 1 + 1j, 0]], point_symmetric=False)

    def test_rejects_compressible(self):
        with pytest.raises(ValidationError):
            ModeEnsemble([[1, 0, 0]], [[1j, 0, 0]])

    def test_json_roundtrip(self, tmp_path, rng):
        for ps in (True, False):
            e = random_incompressible_ensemble(5, rng, point_symmetric=ps)
            path = tmp_path / f"e{ps}.json"
            path.write_text(json.dumps(e.to_dict()))
            back = ModeEnsemble.from_json(path)
            assert back.point_symmetric == ps
            np.testing.assert_array_equal(back.k, e.k)
            np.testing.assert_array_equal(back.v, e.v)

    @pytest.mark.parametrize(
        "doc",
        [{"modes": [{"v_im": [0, 1, 0]}]}, {"point_symmetric": True, "modes": [{"k": [1, 0, 0], "v_re": [0, 1, 0]}]}],
    )
    def test_json_malformed(self, doc):
        with pytest.raises(ValidationError):
            ModeEnsemble.from_dict(doc)


class TestGradient:
    def test_empty(self):
        e = ModeEnsemble.from_modes([])
        np.testing.assert_array_equal(self_consistent_gradient(e, DSFullSum()), np.zeros((3, 3)))

    def test_single_pair_hand_value(self):
        A = self_consistent_gradient(SINGLE, DSFullSum())
        expected = np.zeros((3, 3))
        expected[0, 2] = -1.0
        np.testing.assert_array_equal(A, expected)

    def test_matches_naive_loop(self, rng):
        for ps in (True, False):
            e = random_incompressible_ensemble(7, rng, point_symmetric=ps)
            ref = naive_gradient(e)
            assert np.max(np.abs(ref.imag)) <= 1e-13
            np.testing.assert_allclose(self_consistent_gradient(e, DSFullSum()), ref.real, rtol=1e-13, atol=1e-13)

    def test_ds_convention_is_minus_gradient_at_origin(self, rng):
        # A_DS_mn = -dv_n/dx_m at x = 0 for v(x) = sum over the full set of v e^{ik.x}
        e = random_incompressible_ensemble(4, rng)
        K, V = e.full_set()
        A_ds = -np.einsum("jm,jn->mn", 1j * K, V)  # -dv_n/dx_m
        np.testing.assert_allclose(convention_map_gradient(self_consistent_gradient(e, DSFullSum())), A_ds.real, atol=1e-13)

    def test_ball_restricted_excludes_small_scales(self):
        low = KelvinMode([1, 0, 0], [0, 1j, 0])
        high = KelvinMode([0, 10, 0], [0, 0, 2j])
        e = ModeEnsemble.from_modes([low, high])
        ball = BallRestricted(0.1)
        np.testing.assert_array_equal(self_consistent_gradient(e, ball, target=low.k), np.zeros((3, 3)))
        only_low = self_consistent_gradient(ModeEnsemble.from_modes([low]), DSFullSum())
        np.testing.assert_array_equal(self_consistent_gradient(e, ball, target=high.k), only_low)

    def test_ball_needs_target(self):
        with pytest.raises(UsageError):
            self_consistent_gradient(SINGLE, BallRestricted(0.1))

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.2, 1.5])
    def test_ball_radius_validated(self, rho):
        with pytest.raises(ValidationError):
            BallRestricted(rho)

    def test_external_returns_stored(self):
        np.testing.assert_array_equal(self_consistent_gradient(SINGLE, External(ROT)), ROT)

    def test_symmetry_violation_detected(self):
        bad = ModeEnsemble([[0, 0, 1]], [[0.5 + 0.5j, 0, 0]], point_symmetric=True, check=False)
        with pytest.raises(ConsistencyError):
            self_consistent_gradient(bad, DSFullSum())

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 15), st.booleans())
    def test_trace_free(self, seed, n, ps):
        e = random_incompressible_ensemble(n, np.random.default_rng(seed), point_symmetric=ps)
        for closure, target in ((DSFullSum(), None), (BallRestricted(0.7), e.k[0] * 3)):
            A = self_consistent_gradient(e, closure, target)
            assert abs(np.trace(A)) <= 1e-13 * max(np.linalg.norm(A), 1e-300)

    def test_parse_closure(self):
        assert parse_closure("ds") == DSFullSum()
        assert parse_closure("ball:0.2") == BallRestricted(0.2)
        np.testing.assert_array_equal(parse_closure("external", BaseFlowSpec.rotation(1)).A, ROT)
        with pytest.raises(UsageError):
            parse_closure("external")


class TestConventionMaps:
    def test_gradient(self):
        A = base_flow_matrix(BaseFlowSpec.plane_strain(2.0))
        np.testing.assert_array_equal(convention_map_gradient(A), np.diag([-2.0, 2.0, -0.0]))

    def test_amplitude(self):
        np.testing.assert_array_equal(convention_map_amplitude([0, 1j, 0]), [0, 1, 0])

    def test_involution_and_order_four(self, rng):
        A = rng.normal(size=(3, 3))
        assert np.array_equal(convention_map_gradient(convention_map_gradient(A)), A)
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        w = v
        for _ in range(4):
            w = convention_map_amplitude(w)
        assert np.array_equal(w, v)


class TestDsRhs:
    def test_external_zero(self, rng):
        e = random_incompressible_ensemble(5, rng)
        dK, dV = ds_rhs(e, 0.0, External(np.zeros((3, 3))))
        assert not dK.any() and not dV.any()

    def test_single_pair_no_self_distortion(self):
        dK, dV = ds_rhs(SINGLE, 0.3, DSFullSum())
        np.testing.assert_array_equal(dK, 0.0)
        np.testing.assert_allclose(dV, -0.3 * SINGLE.v, atol=1e-16)


class TestEvolve:
    CFG = SimulationConfig(dt=1e-3, t_end=1.0, sample_every=10)

    def test_external_reduces_to_kelvin_bitwise(self):
        mode = KelvinMode.solenoidal([0.3, 0.8, 0.5], [1j, 0.2, -0.4j])
        single = integrate_mode(mode, ROT, self.CFG)
        ens = evolve_ensemble(ModeEnsemble(mode.k[None], mode.v[None], False), 0.0, External(ROT), self.CFG)
        assert np.array_equal(single.t, ens.t)
        assert np.array_equal(single.k, ens.k[:, 0])
        assert np.array_equal(single.v, ens.v[:, 0])

    @pytest.mark.parametrize("closure", [DSFullSum(), BallRestricted(0.5), External(ROT)], ids=str)
    def test_point_symmetry_and_incompressibility(self, closure, rng):
        e = random_incompressible_ensemble(6, rng)
        e = ModeEnsemble(e.k, 0.05 * e.v)
        tr = evolve_ensemble(e, 0.0, closure, self.CFG)
        assert np.max(tr.max_real_part) <= 1e-10
        assert np.max(tr.max_defect) <= 1e-10
        assert np.max(np.abs(tr.trace)) <= 1e-13 * max(1.0, np.max(np.abs(tr.A)))

    def test_energy_conserved_under_antisymmetric_external(self, rng):
        e = random_incompressible_ensemble(5, rng)
        tr = evolve_ensemble(e, 0.0, External(base_flow_matrix(BaseFlowSpec.rotation(0.8))),
                             SimulationConfig(dt=1e-3, t_end=10.0, sample_every=100))
        np.testing.assert_allclose(tr.total_energy, tr.total_energy[0], rtol=1e-8)

    def test_constant_external_is_admissible(self):
        tr = evolve_ensemble(SINGLE, 0.0, External(ROT), self.CFG)
        assert np.max(tr.admissibility_defect()) <= 1e-12

    def test_ball_gradients_are_per_mode(self, rng):
        e = random_incompressible_ensemble(3, rng)
        tr = evolve_ensemble(e, 0.0, BallRestricted(0.5), SimulationConfig(dt=1e-2, t_end=0.1))
        assert tr.A.shape == (tr.t.size, 3, 3, 3)

    def test_csv_export(self, tmp_path, rng):
        e = random_incompressible_ensemble(2, rng)
        tr = evolve_ensemble(e, 0.0, DSFullSum(), SimulationConfig(dt=1e-2, t_end=0.1))
        files = tr.to_csv(tmp_path)
        assert [f.name for f in files] == ["mode_000.csv", "mode_001.csv", "gradient.csv"]
        header = (tmp_path / "gradient.csv").read_text().splitlines()[0].split(",")
        assert header[:10] == ["t"] + [f"A{m}{n}" for m in "123" for n in "123"]

    def test_deterministic(self, rng):
        e = random_incompressible_ensemble(4, rng)
        a = evolve_ensemble(e, 0.01, DSFullSum(), self.CFG)
        b = evolve_ensemble(e, 0.01, DSFullSum(), self.CFG)
        assert np.array_equal(a.v, b.v) and np.array_equal(a.A, b.A)


class TestCrossScale:
    LOW = KelvinMode.solenoidal([1.0, 0.0, 0.0], [0.0, 0.1j, 0.05j])
    HIGH = KelvinMode.solenoidal([0.0, 6.0, 8.0], [0.1j, 0.04j, 0.03j])
    CFG = SimulationConfig(dt=1e-3, t_end=1.0, sample_every=10)

    def test_zero_high_amplitude(self):
        r = cross_scale_experiment(self.LOW, self.HIGH, 0.0, 0.0, self.CFG)
        assert r.trajectory_deviation == 0.0 and r.ball_deviation == 0.0

    def test_small_scale_distorts_large_scale(self):
        r = cross_scale_experiment(self.LOW, self.HIGH, 1.0, 0.0, self.CFG)
        assert r.trajectory_deviation > 0.0
        assert r.ball_deviation == 0.0
        assert r.scale_ratio == 10.0
        assert r.gradient_contribution_split["high"] == pytest.approx(10 * r.gradient_contribution_split["low"])

    def test_scale_separation_required(self):
        close = KelvinMode.solenoidal([0.0, 3.0, 0.0], [1j, 0, 0])
        with pytest.raises(UsageError):
            cross_scale_experiment(self.LOW, close, 1.0, 0.0, self.CFG)
