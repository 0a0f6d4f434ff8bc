import dataclasses
import json
import math

import numpy as np
import pytest

from modechar.chain import builtin_dataset
from modechar.fitting import FitOptions, fit_timescan
from modechar.hamsim import SimOptions
from modechar.planner import (
    ProtocolPlan,
    TimingOverheads,
    delta_omega_min,
    plan_basic,
    plan_improved,
    run_protocol,
    scan_size,
    tau_for_delta_omega,
)

TWO_PI = 2 * math.pi
FAST = SimOptions(substep_fraction=0.002)


class TestBounds:
    def test_reference_point(self):
        # tau = 3.61 ms and 3e4 shots resolve about 12 Hz
        got = delta_omega_min(3.61e-3, 30000) / TWO_PI
        assert got == pytest.approx(11.886, abs=0.01)
        assert 11.5 <= got <= 12.5

    def test_vanishes_for_infinite_shots(self):
        # the bound falls off as shots^(-1/4), approaching zero
        v4, v8, v12 = (delta_omega_min(1e-3, 10**p) for p in (4, 8, 12))
        assert v4 > v8 > v12
        assert v8 / v12 == pytest.approx(10.0, rel=1e-3)
        assert v4 / v8 == pytest.approx(10.0, rel=2e-2)

    def test_inverse_in_tau(self):
        a = delta_omega_min(1e-3, 5000)
        b = delta_omega_min(2e-3, 5000)
        assert a == pytest.approx(2 * b, rel=1e-12)

    def test_tau_reference_point(self):
        assert tau_for_delta_omega(TWO_PI * 100, 10**4) == pytest.approx(
            0.57e-3, rel=0.01
        )
        # just under the fixed-duration cap of the reference plan
        assert tau_for_delta_omega(TWO_PI * 12, 3 * 10**4) == pytest.approx(
            3.576e-3, rel=1e-3
        )

    def test_round_trip_identity(self):
        for tau in (5e-4, 3.61e-3):
            for shots in (100, 30000):
                dw = delta_omega_min(tau, shots)
                assert tau_for_delta_omega(dw, shots) == pytest.approx(
                    tau, rel=1e-12
                )

    def test_strictly_decreasing(self):
        taus = np.geomspace(1e-4, 1e-2, 12)
        vals = [delta_omega_min(t, 1000) for t in taus]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        shots = [10, 100, 1000, 10000]
        vals = [delta_omega_min(1e-3, s) for s in shots]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestScanSize:
    def test_reference_values(self):
        assert scan_size(TWO_PI * 1e3, TWO_PI * 100) == 5
        assert scan_size(TWO_PI * 1e3, TWO_PI * 11.8833) == 43
        assert scan_size(TWO_PI * 1e3, TWO_PI * 500) == 1

    def test_uses_unrounded_bound(self):
        got = scan_size(TWO_PI * 1e3, delta_omega_min(3.6108e-3, 30000))
        assert got == 43


class TestPlans:
    def test_basic_reference_plan(self):
        plan = plan_basic(builtin_dataset(5), TWO_PI * 7e3, 30000, TWO_PI * 1e3)
        assert plan.cycle_freq == pytest.approx(7.86e-3, abs=5e-6)
        assert plan.m_delta == 43
        assert plan.total_time == pytest.approx(1.11e4, rel=0.005)
        assert plan.delta_omega >= delta_omega_min(plan.tau_freq_scan, 30000) * (
            1 - 1e-12
        )

    def test_improved_reference_plan(self):
        plan = plan_improved(
            builtin_dataset(5), TWO_PI * 10e3, 500, 20, TWO_PI * 100, TWO_PI * 1e3
        )
        assert plan.cycle_freq == pytest.approx(4.82e-3, abs=5e-6)
        assert plan.shots_freq == 10000  # defaults to m_t * shots_time
        assert plan.m_delta == 5
        assert float(np.mean(plan.cycle_times)) == pytest.approx(6.90e-3, abs=5e-6)
        assert plan.total_time == pytest.approx(586.0, rel=0.005)

    def test_total_time_identity(self):
        for plan in (
            plan_basic(builtin_dataset(4), TWO_PI * 5e3, 2000, TWO_PI * 500),
            plan_improved(
                builtin_dataset(4), TWO_PI * 8e3, 100, 10, TWO_PI * 50, TWO_PI * 800
            ),
        ):
            assert plan.recompute_total() == plan.total_time

    def test_linearity_in_plan_fields(self):
        plan = plan_basic(builtin_dataset(5), TWO_PI * 7e3, 30000, TWO_PI * 1e3)
        doubled_shots = dataclasses.replace(plan, shots_freq=2 * plan.shots_freq)
        assert doubled_shots.recompute_total() == pytest.approx(
            2 * plan.total_time, rel=1e-12
        )
        no_overhead = dataclasses.replace(
            plan, overheads=TimingOverheads(0.0, 0.0, 0.0)
        )
        stretched = dataclasses.replace(
            no_overhead, tau_freq_scan=3 * no_overhead.tau_freq_scan
        )
        assert stretched.recompute_total() == pytest.approx(
            3 * no_overhead.recompute_total(), rel=1e-12
        )

    def test_single_timestamp_degenerates(self):
        plan = plan_improved(
            builtin_dataset(3), TWO_PI * 10e3, 100, 1, TWO_PI * 100, TWO_PI * 500
        )
        assert plan.m_t == 1 and len(plan.timestamps) == 1
        expected = plan.m_delta * plan.shots_freq * plan.cycle_freq + (
            3 * 100 * plan.cycle_times[0]
        )
        assert plan.total_time == pytest.approx(expected, rel=1e-12)

    def test_json_round_trip(self):
        plan = plan_improved(
            builtin_dataset(5), TWO_PI * 10e3, 500, 20, TWO_PI * 100, TWO_PI * 1e3
        )
        payload = json.loads(plan.to_json())
        assert payload["kind"] == "improved"
        assert payload["m_delta"] == 5
        assert payload["total_time_s"] == pytest.approx(plan.total_time)
        assert payload["mean_cycle_time_s"] == pytest.approx(6.90e-3, abs=5e-6)


class TestRunProtocol:
    @pytest.fixture(scope="class")
    def small_plan(self):
        # 12 timestamps keep the fastest pair safely below the sampling
        # limit (about five population oscillations over the full scan)
        cfg = builtin_dataset(3).with_rabi(TWO_PI * 10e3)
        plan = plan_improved(
            cfg, TWO_PI * 10e3, 50, 12, TWO_PI * 150, TWO_PI * 900
        )
        return cfg, plan

    def test_seed_determinism(self, small_plan):
        cfg, plan = small_plan
        a = run_protocol(cfg, plan, seed=7, opts=FAST)
        b = run_protocol(cfg, plan, seed=7, opts=FAST)
        for ta, tb in zip(a.time_scans, b.time_scans):
            for pair in ta.values:
                np.testing.assert_array_equal(ta.values[pair], tb.values[pair])
        assert a.mode_freq_est == b.mode_freq_est

    def test_single_shot_gives_binary_outcomes(self, small_plan):
        cfg, _ = small_plan
        plan = plan_improved(cfg, TWO_PI * 10e3, 1, 5, TWO_PI * 150, TWO_PI * 900)
        run = run_protocol(cfg, plan, seed=3, opts=FAST, perfect_frequencies=True)
        for tr in run.time_scans:
            for vals in tr.values.values():
                assert set(np.unique(vals)).issubset({0.0, 1.0})

    def test_infinite_shot_limit_matches_direct_fit(self, small_plan):
        cfg, plan = small_plan
        run = run_protocol(
            cfg, plan, seed=0, opts=FAST, perfect_frequencies=True, sample=False
        )
        values, assignments = {}, {}
        for tr in run.time_scans:
            values.update(tr.values)
            assignments.update(tr.assignments)
        from modechar.trace import PopulationTrace

        data = PopulationTrace(
            kind="time",
            grid=run.time_scans[0].grid,
            values=values,
            assignments=assignments,
        )
        res = fit_timescan(
            data,
            cfg,
            FitOptions(eta_init=cfg.eta * 1.05, model="m2", insensitive="hold"),
        )
        mask = np.abs(cfg.eta) > 1e-4
        # truth is the full simulator, the fit model is approximate: the
        # residual bias is the model error, well below a percent here
        rel = np.abs((res.eta_est - cfg.eta) / cfg.eta)[mask]
        assert float(rel.max()) < 5e-3

    def test_frequency_scan_recovers_modes(self, small_plan):
        # coarse enough resolution that the scan duration stays inside every
        # probe's first population lobe, so each lineshape peaks on resonance
        cfg, _ = small_plan
        plan = plan_improved(cfg, TWO_PI * 10e3, 400, 5, TWO_PI * 400, TWO_PI * 2400)
        assert plan.m_delta == 3
        run = run_protocol(cfg, plan, seed=1, opts=FAST)
        assert len(run.freq_scans) == 1
        # the scan assignment avoids the chain's node pair
        scan_pairs = set(run.freq_scans[0].values)
        assert (2, 2) not in scan_pairs
        for k in (1, 2, 3):
            est = run.mode_freq_est[k]
            assert abs(est - float(cfg.mode_freq[k - 1])) <= plan.delta_omega

    def test_basic_protocol_collects_single_points(self, small_plan):
        cfg, _ = small_plan
        plan = plan_basic(cfg, TWO_PI * 7e3, 500, TWO_PI * 100)
        run = run_protocol(cfg, plan, seed=5, opts=FAST, perfect_frequencies=True)
        assert run.single_points is not None
        assert len(run.single_points.grid) == 1
        expected_pairs = {(j, k) for j in (1, 2, 3) for k in (1, 2, 3)}
        assert set(run.single_points.values) == expected_pairs
