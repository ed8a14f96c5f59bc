import numpy as np
import pytest

import monotrack as mt

DEMO_X0_A = (0.1, -0.2, 0.1, 0.1, 0.0)
DEMO_X0_B = (0.6, 0.2, 0.2, -0.2, 1.0)


def diagonal_plant_and_gain():
    """Closed loop diag(-1, -2) with identity error output, via zero gain."""
    sys = mt.LtiSystem(np.diag([-1.0, -2.0]), np.eye(2), np.eye(2), np.zeros((2, 2)))
    fb = mt.FeedbackResult(
        F=np.zeros((2, 2)),
        x_ss=np.zeros(2),
        u_ss=np.zeros(2),
        V=np.eye(2),
        W=np.zeros((2, 2)),
        closed_loop_spectrum=(complex(-2.0), complex(-1.0)),
        assigned_modes={0: -1.0, 1: -2.0},
        delta=(0, 1),
        column_modes=(-1.0, -2.0),
    )
    return sys, fb


class TestSimulate:
    def test_zero_initial_error_stays_zero(self, demo_system, demo_feedback):
        trace = mt.simulate(demo_system, demo_feedback, demo_feedback.x_ss)
        assert np.max(np.abs(trace.epsilon)) <= 1e-12

    def test_demo_trace_is_single_mode_per_output(self, demo_system, demo_feedback):
        trace = mt.simulate(demo_system, demo_feedback, DEMO_X0_A)
        modes = (-1.0, -2.0, -1.0)
        for k in range(3):
            eps0 = trace.epsilon[k, 0]
            expected = eps0 * np.exp(modes[k] * trace.times)
            scale = max(np.abs(trace.epsilon[k]))
            assert np.max(np.abs(trace.epsilon[k] - expected)) <= 1e-6 * scale

    def test_diagonal_closed_form(self):
        sys, fb = diagonal_plant_and_gain()
        x0 = np.array([0.7, -0.4])
        trace = mt.simulate(sys, fb, x0, horizon=5.0, num_samples=100)
        for k, lam in enumerate((-1.0, -2.0)):
            expected = x0[k] * np.exp(lam * trace.times)
            assert np.max(np.abs(trace.epsilon[k] - expected)) <= 1e-10

    def test_discrete_iteration(self):
        sys = mt.LtiSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]], mt.TimeDomain.DISCRETE)
        fb = mt.FeedbackResult(
            F=np.zeros((1, 1)),
            x_ss=np.zeros(1),
            u_ss=np.zeros(1),
            V=np.eye(1),
            W=np.zeros((1, 1)),
            closed_loop_spectrum=(complex(0.5),),
            assigned_modes={0: 0.5},
            delta=(0,),
            column_modes=(0.5,),
        )
        trace = mt.simulate(sys, fb, [1.0], num_samples=20)
        assert np.allclose(trace.epsilon[0], 0.5 ** trace.times)

    def test_unstable_closed_loop_rejected(self):
        sys = mt.LtiSystem([[1.0]], [[1.0]], [[1.0]], [[0.0]])
        fb = mt.FeedbackResult(
            F=np.zeros((1, 1)),
            x_ss=np.zeros(1),
            u_ss=np.zeros(1),
            V=np.eye(1),
            W=np.zeros((1, 1)),
            closed_loop_spectrum=(complex(1.0),),
            assigned_modes={0: -1.0},
            delta=(0,),
            column_modes=(-1.0,),
        )
        with pytest.raises(mt.UnstableClosedLoop):
            mt.simulate(sys, fb, [1.0])

    def test_epsilon_consistent_with_output_map(self, demo_system, demo_feedback):
        trace = mt.simulate(demo_system, demo_feedback, DEMO_X0_B)
        out_map = demo_system.C + demo_system.D @ demo_feedback.F
        assert np.max(np.abs(trace.epsilon - out_map @ trace.xi)) <= 1e-12
        assert trace.times[0] == 0.0


class TestCheckMonotonic:
    def test_single_decay_is_monotone(self):
        sys, fb = diagonal_plant_and_gain()
        trace = mt.simulate(sys, fb, [1.0, 0.5], horizon=6.0, num_samples=200)
        assert mt.check_monotonic(trace) == ["monotone", "monotone"]

    def test_two_mode_sign_change_detected(self):
        # eps(t) = exp(-t) - 2 exp(-2t) crosses zero at t = ln 2.
        times = np.linspace(0.0, 5.0, 300)
        eps = np.exp(-times) - 2.0 * np.exp(-2.0 * times)
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 300)), epsilon=eps.reshape(1, -1),
            domain=mt.TimeDomain.CONTINUOUS,
        )
        assert mt.check_monotonic(trace) == ["not_monotone"]

    def test_zero_output_reported_instantaneous(self):
        times = np.linspace(0.0, 1.0, 50)
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 50)), epsilon=np.zeros((1, 50)),
            domain=mt.TimeDomain.CONTINUOUS,
        )
        assert mt.check_monotonic(trace) == ["instantaneous"]


class TestCheckRate:
    def test_faster_mode_passes(self):
        times = np.linspace(0.0, 8.0, 200)
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 200)),
            epsilon=np.exp(-2.0 * times).reshape(1, -1),
            domain=mt.TimeDomain.CONTINUOUS,
        )
        assert mt.check_rate(trace, mt.RateSpec(-1.0)) == [True]

    def test_slower_mode_fails(self):
        times = np.linspace(0.0, 8.0, 200)
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 200)),
            epsilon=np.exp(-0.5 * times).reshape(1, -1),
            domain=mt.TimeDomain.CONTINUOUS,
        )
        assert mt.check_rate(trace, mt.RateSpec(-1.0)) == [False]

    def test_demo_modes_meet_unit_rate(self, demo_system, demo_feedback):
        trace = mt.simulate(demo_system, demo_feedback, DEMO_X0_A)
        assert mt.check_rate(trace, mt.RateSpec(-1.0)) == [True, True, True]

    def test_rate_spec_domain_validation(self):
        with pytest.raises(ValueError):
            mt.RateSpec(0.5).validate(mt.TimeDomain.CONTINUOUS)
        with pytest.raises(ValueError):
            mt.RateSpec(-1.0).validate(mt.TimeDomain.DISCRETE)


class TestFitSingleMode:
    def test_demo_fits_assigned_modes(self, demo_system, demo_feedback):
        trace = mt.simulate(demo_system, demo_feedback, DEMO_X0_A)
        fits = mt.fit_single_mode(trace)
        expected = (-1.0, -2.0, -1.0)
        for fit, lam in zip(fits, expected):
            assert not fit.instantaneous
            assert abs(fit.lambda_hat - lam) <= 1e-6
            assert fit.relative_residual <= 1e-6

    def test_two_mode_output_rejected(self):
        times = np.linspace(0.0, 6.0, 200)
        eps = np.exp(-times) + np.exp(-3.0 * times)
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 200)), epsilon=eps.reshape(1, -1),
            domain=mt.TimeDomain.CONTINUOUS,
        )
        fit = mt.fit_single_mode(trace)[0]
        assert fit.relative_residual > 1e-2

    def test_zero_output_skipped(self):
        times = np.linspace(0.0, 1.0, 20)
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 20)), epsilon=np.zeros((1, 20)),
            domain=mt.TimeDomain.CONTINUOUS,
        )
        fit = mt.fit_single_mode(trace)[0]
        assert fit.instantaneous and fit.lambda_hat is None

    def test_too_few_samples_raises(self):
        times = np.linspace(0.0, 1.0, 4)
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 4)), epsilon=np.ones((1, 4)),
            domain=mt.TimeDomain.CONTINUOUS,
        )
        with pytest.raises(mt.InsufficientData):
            mt.fit_single_mode(trace)

    def test_discrete_power_fit(self):
        times = np.arange(40, dtype=float)
        eps = 0.8 * 0.6 ** times
        trace = mt.SimulationTrace(
            times=times, xi=np.zeros((1, 40)), epsilon=eps.reshape(1, -1),
            domain=mt.TimeDomain.DISCRETE,
        )
        fit = mt.fit_single_mode(trace)[0]
        assert abs(fit.lambda_hat - 0.6) <= 1e-9
        assert abs(fit.gamma_hat - 0.8) <= 1e-9


class TestStructuralInvariants:
    def test_superposition(self, demo_system, demo_feedback):
        rng = np.random.default_rng(17)
        x1, x2 = rng.normal(size=5), rng.normal(size=5)
        a, b = 0.6, -1.3
        xss = demo_feedback.x_ss
        combined = mt.simulate(demo_system, demo_feedback, xss + a * x1 + b * x2, horizon=4.0, num_samples=100)
        first = mt.simulate(demo_system, demo_feedback, xss + x1, horizon=4.0, num_samples=100)
        second = mt.simulate(demo_system, demo_feedback, xss + x2, horizon=4.0, num_samples=100)
        recombined = a * first.epsilon + b * second.epsilon
        assert np.max(np.abs(combined.epsilon - recombined)) <= 1e-9

    def test_stabilisability_directions_invisible(self, demo_system, demo_zeros, demo_feedback):
        vg = mt.vstar_g(demo_system, zeros=demo_zeros)
        for k in range(vg.dim):
            x0 = demo_feedback.x_ss + vg.V[:, k]
            trace = mt.simulate(demo_system, demo_feedback, x0, horizon=4.0, num_samples=100)
            assert np.max(np.abs(trace.epsilon)) <= 1e-9

    def test_monotone_and_single_mode_from_many_initial_states(self, demo_system, demo_feedback):
        rng = np.random.default_rng(23)
        for _ in range(20):
            x0 = rng.normal(size=5)
            trace = mt.simulate(demo_system, demo_feedback, x0)
            verdicts = mt.check_monotonic(trace)
            assert all(v in ("monotone", "instantaneous") for v in verdicts)
            fits = mt.fit_single_mode(trace)
            for j, fit in enumerate(fits):
                if fit.instantaneous or abs(fit.gamma_hat) <= 1e-9:
                    continue
                assert fit.relative_residual <= 1e-6
                assert abs(fit.lambda_hat - demo_feedback.assigned_modes[j]) <= 1e-5


class TestExport:
    def test_csv_wide_format(self, tmp_path, demo_system, demo_feedback):
        trace = mt.simulate(demo_system, demo_feedback, DEMO_X0_A, horizon=1.0, num_samples=5)
        path = tmp_path / "trace.csv"
        mt.trace_to_csv(trace, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,eps_1,eps_2,eps_3,xi_1,xi_2,xi_3,xi_4,xi_5"
        assert len(lines) == 6

    def test_csv_long_format(self, tmp_path, demo_system, demo_feedback):
        trace = mt.simulate(demo_system, demo_feedback, DEMO_X0_A, horizon=1.0, num_samples=3)
        path = tmp_path / "trace_long.csv"
        mt.trace_to_csv(trace, path, long_format=True)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,series,value"
        assert len(lines) == 1 + 3 * (3 + 5)

    def test_json_round_trip_fields(self, demo_system, demo_feedback):
        import json

        trace = mt.simulate(demo_system, demo_feedback, DEMO_X0_A, horizon=1.0, num_samples=3)
        payload = json.loads(mt.trace_to_json(trace))
        assert payload["domain"] == "continuous"
        assert len(payload["times"]) == 3
