import numpy as np
import pytest
from numpy.testing import assert_allclose

from lebid.domain import ZohInput
from lebid.errors import ValidationError
from lebid.lti_sim import (
    SecondOrderPlant,
    StateSpace,
    plant_to_ss,
    simulate_noiseless,
    true_impulse,
    zoh_discretize,
)

from oracles import taylor_expm

BENCH_PLANT = SecondOrderPlant(m=0.05, d=0.2, k=1.0)

integrator = StateSpace(A=[[0.0]], B=[1.0], C=[1.0])


class TestPlantToSs:
    def test_undamped_oscillator_has_unit_imaginary_poles(self):
        ss = plant_to_ss(SecondOrderPlant(m=1.0, d=0.0, k=1.0))
        eig = np.sort_complex(np.linalg.eigvals(ss.A))
        assert_allclose(eig, [-1j, 1j], atol=1e-12)

    def test_benchmark_plant_poles_match_characteristic_polynomial(self):
        ss = plant_to_ss(BENCH_PLANT)
        eig = np.sort_complex(np.linalg.eigvals(ss.A))
        expected = np.sort_complex(np.roots([0.05, 0.2, 1.0]))
        assert_allclose(eig, expected, rtol=1e-12)

    def test_dc_gain_is_inverse_stiffness(self):
        for m, d, k in [(1.0, 1.0, 1.0), (0.05, 0.2, 1.0), (2.0, 0.3, 5.0)]:
            ss = plant_to_ss(SecondOrderPlant(m=m, d=d, k=k))
            dc = ss.C @ np.linalg.solve(-ss.A, ss.B)
            assert_allclose(dc, 1.0 / k, rtol=1e-12)

    def test_nonpositive_parameters_rejected(self):
        with pytest.raises(ValidationError):
            SecondOrderPlant(m=0.0, d=0.2, k=1.0)
        with pytest.raises(ValidationError):
            SecondOrderPlant(m=1.0, d=-0.1, k=1.0)
        with pytest.raises(ValidationError):
            SecondOrderPlant(m=1.0, d=0.2, k=0.0)


class TestZohDiscretize:
    def test_zero_step_is_identity(self):
        ss = plant_to_ss(BENCH_PLANT)
        Ad, Bd = zoh_discretize(ss, 0.0)
        assert_allclose(Ad, np.eye(2), atol=0)
        assert_allclose(Bd, np.zeros(2), atol=0)

    def test_pure_integrator_closed_form(self):
        Ad, Bd = zoh_discretize(integrator, 0.37)
        assert_allclose(Ad, [[1.0]], rtol=1e-15)
        assert_allclose(Bd, [0.37], rtol=1e-15)

    def test_matches_taylor_series_oracle(self):
        # independent oracle: 30-term power series of the augmented matrix
        ss = plant_to_ss(BENCH_PLANT)
        step = 0.1
        M = np.zeros((3, 3))
        M[:2, :2] = ss.A
        M[:2, 2] = ss.B
        E = taylor_expm(M * step, terms=30)
        Ad, Bd = zoh_discretize(ss, step)
        assert_allclose(Ad, E[:2, :2], rtol=1e-12, atol=1e-15)
        assert_allclose(Bd, E[:2, 2], rtol=1e-12, atol=1e-15)

    def test_semigroup_property(self):
        ss = plant_to_ss(BENCH_PLANT)
        Ad1, _ = zoh_discretize(ss, 0.05)
        Ad2, _ = zoh_discretize(ss, 0.10)
        assert np.max(np.abs(Ad1 @ Ad1 - Ad2)) < 1e-10

    def test_negative_step_rejected(self):
        with pytest.raises(ValidationError):
            zoh_discretize(integrator, -0.1)


class TestSimulateNoiseless:
    def test_zero_input_gives_zero_output(self):
        ss = plant_to_ss(BENCH_PLANT)
        u = ZohInput(delta_u=1.0, amplitudes=(0.0, 0.0, 0.0))
        x = simulate_noiseless(ss, u, 0.1, 25)
        assert_allclose(x, np.zeros(26), atol=0)

    def test_unit_step_into_integrator_is_a_ramp(self):
        u = ZohInput(delta_u=1.0, amplitudes=(1.0,) * 5)
        x = simulate_noiseless(integrator, u, 0.25, 20)
        assert_allclose(x, 0.25 * np.arange(21), rtol=1e-14)

    def test_step_response_reaches_dc_gain(self):
        ss = plant_to_ss(BENCH_PLANT)
        u = ZohInput(delta_u=30.0, amplitudes=(1.0,))
        x = simulate_noiseless(ss, u, 0.1, 300)
        assert abs(x[-1] - 1.0) < 1e-3  # 1/k with k=1, well past the transient

    def test_invariant_to_grid_subdivision(self):
        ss = plant_to_ss(BENCH_PLANT)
        u = ZohInput(delta_u=1.0, amplitudes=(1.0, -2.0, 0.5))
        coarse = simulate_noiseless(ss, u, 0.1, 30)
        fine = simulate_noiseless(ss, u, 0.02, 150)
        assert np.max(np.abs(coarse - fine[::5])) < 1e-10

    def test_incommensurate_grid_rejected(self):
        ss = plant_to_ss(BENCH_PLANT)
        u = ZohInput(delta_u=1.0, amplitudes=(1.0,))
        with pytest.raises(ValidationError):
            simulate_noiseless(ss, u, 0.3, 10)


class TestTrueImpulse:
    def test_value_at_zero_is_cb(self):
        ss = plant_to_ss(BENCH_PLANT)
        assert true_impulse(ss, 0.0) == pytest.approx(float(ss.C @ ss.B), abs=0)

    def test_integrator_impulse_is_constant_one(self):
        t = np.array([0.0, 0.5, 2.0, 10.0])
        assert_allclose(true_impulse(integrator, t), np.ones(4), rtol=1e-14)

    def test_causality_before_zero(self):
        ss = plant_to_ss(BENCH_PLANT)
        assert true_impulse(ss, -0.5) == 0.0

    def test_matches_narrow_pulse_simulation(self):
        # independent oracle: response to a unit-area pulse of width eps,
        # compared at the pulse centroid shift eps/2
        ss = plant_to_ss(BENCH_PLANT)
        eps = 1e-4
        u = ZohInput(delta_u=eps, amplitudes=(1.0 / eps,))
        n_steps = round(1.0 / eps)
        x = simulate_noiseless(ss, u, eps, n_steps)
        assert abs(x[-1] - true_impulse(ss, 1.0 - eps / 2)) < 1e-6

    def test_stable_plant_impulse_decays(self):
        ss = plant_to_ss(BENCH_PLANT)
        t = np.linspace(0.0, 5.0, 501)
        g = true_impulse(ss, t)
        slowest_tc = 1.0 / np.min(-np.real(np.linalg.eigvals(ss.A)))
        g_late = abs(true_impulse(ss, 10.0 * slowest_tc))
        assert g_late < 1e-3 * np.max(np.abs(g))
