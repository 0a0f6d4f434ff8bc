"""Acceptance suite: every reference target at its stated tolerance.

One criterion per test (criterion 8 is split into its separately checkable
clauses); each records a PASS/FAIL line printed in the terminal summary.
The heavy criteria (5, 7, 9) simulate the five-ion chain in full and run for
tens of minutes on first execution; their ground-truth traces are cached
under .cache/modechar, so reruns are quick.

Known red: the two-round-convergence clause of criterion 8.  The iterative
fitter contracts context errors by about 1e-2 per round, so reaching the
1e-6 stopping tolerance from guesses 20% off truth takes four to five
rounds; two rounds land within ~2e-5 relative of the fixed point (ample for
the protocol's 1e-3 targets) but cannot satisfy the literal stop rule.
"""

import math

import numpy as np
import pytest

from conftest import record_criterion
from modechar.campaigns import (
    campaign_accuracy,
    campaign_shot_noise,
    campaign_sign,
    campaign_spacing,
    campaign_table1,
    scan_times,
    truth_timescan,
)
from modechar.chain import (
    ChainConfig,
    assignment_schedule,
    builtin_dataset,
    resonant_tones,
)
from modechar.fitting import FitOptions, fit_timescan
from modechar.hamsim import SimOptions, convergence_report, propagate
from modechar.physics import TwoLevelParams, bsb_rabi, two_level_population
from modechar.planner import delta_omega_min, tau_for_delta_omega

TWO_PI = 2 * math.pi


def _loglog_slope(xs, ys):
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


class TestCriterion1:
    def test_reference_resource_table(self):
        rows, (basic, improved) = campaign_table1()
        checks = {
            "T_basic": abs(basic.total_time - 1.11e4) / 1.11e4 <= 0.005,
            "T_improved": abs(improved.total_time - 586.0) / 586.0 <= 0.005,
            "cycle_basic_7.86ms": abs(basic.cycle_freq - 7.86e-3) <= 5e-6,
            "cycle_freq_4.82ms": abs(improved.cycle_freq - 4.82e-3) <= 5e-6,
            "mean_cycle_6.90ms": abs(float(np.mean(improved.cycle_times)) - 6.90e-3)
            <= 5e-6,
            "m_delta_basic_43": basic.m_delta == 43,
            "m_delta_improved_5": improved.m_delta == 5,
        }
        detail = (
            f"T0={basic.total_time:.1f}s T={improved.total_time:.2f}s "
            f"M0={basic.m_delta} M={improved.m_delta}"
        )
        ok = all(checks.values())
        record_criterion(1, "reference resource table", ok, detail)
        assert ok, {k: v for k, v in checks.items() if not v}


class TestCriterion2:
    def test_frequency_resolution_bounds(self):
        dw = delta_omega_min(3.61e-3, 30000) / TWO_PI
        tau = tau_for_delta_omega(TWO_PI * 100, 10**4)
        ok_dw = 11.5 <= dw <= 12.5
        ok_tau = abs(tau - 0.57e-3) / 0.57e-3 <= 0.01
        record_criterion(
            2,
            "shot-noise frequency-resolution bounds",
            ok_dw and ok_tau,
            f"d_omega={dw:.3f}Hz tau={tau * 1e3:.4f}ms",
        )
        assert ok_dw and ok_tau


class TestCriterion3:
    def test_single_pair_oracle_equivalence(self):
        from modechar.chain import DriveTone

        cfg = ChainConfig(
            num_ions=1,
            num_modes=1,
            mode_freq=np.array([TWO_PI * 3.0e6]),
            eta=np.array([[0.05]]),
            qubit_rabi=np.array([TWO_PI * 10e3]),
            nbar=0.0,
        )
        om_eff = bsb_rabi(float(cfg.qubit_rabi[0]), 0.05, 0)
        worst = 0.0
        for dfact in (0.0, 1.0, 2.0):
            delta = dfact * om_eff
            tone = DriveTone(1, cfg.mode_freq[0] + delta, cfg.qubit_rabi[0])
            times = np.linspace(0.05, 5.0, 41) * math.pi / om_eff
            res = propagate(cfg, [tone], (0,), times)
            ref = [two_level_population(TwoLevelParams(om_eff, delta, t)) for t in times]
            worst = max(worst, float(np.max(np.abs(res.populations[:, 0] - ref))))
        ok = worst <= 1e-6
        record_criterion(
            3, "engine matches two-level closed form", ok, f"max err={worst:.2e}"
        )
        assert ok


class TestCriterion4:
    def test_unitarity_and_convergence(self):
        results = {}
        # three-ion chain at shipped defaults
        cfg3 = builtin_dataset(3).with_rabi(TWO_PI * 10e3)
        tones3 = resonant_tones(cfg3, assignment_schedule(cfg3)[0])
        rows = {
            r["variant"]: r
            for r in convergence_report(cfg3, tones3, scan_times(cfg3, TWO_PI * 10e3))
        }
        results["n3_halving"] = rows["substep_half"]["max_pop_delta"]
        results["n3_norm"] = rows["reference"]["norm_drift"]
        # five-ion chain at the refinement level that meets the bound (the
        # first-Magnus error scales as the sub-step fraction squared)
        cfg5 = builtin_dataset(5).with_rabi(TWO_PI * 10e3)
        tones5 = resonant_tones(cfg5, assignment_schedule(cfg5)[0])
        times5 = scan_times(cfg5, TWO_PI * 10e3)
        frac = 2e-4
        pops, norms = {}, {}
        for f in (frac, frac / 2):
            res = propagate(
                cfg5, tones5, (0,) * 5, times5, SimOptions(substep_fraction=f)
            )
            pops[f], norms[f] = res.populations, res.norms
        results["n5_halving"] = float(np.max(np.abs(pops[frac] - pops[frac / 2])))
        results["n5_norm"] = float(
            max(np.max(np.abs(n - 1)) for n in norms.values())
        )
        ok = all(v <= 1e-6 for v in results.values())
        record_criterion(
            4,
            "norm preservation and sub-step convergence",
            ok,
            " ".join(f"{k}={v:.2e}" for k, v in results.items()),
        )
        assert ok, results


@pytest.mark.slow
class TestCriterion5:
    def test_model_accuracy_ordering_and_scaling(self):
        grid = [2.0, 5.0, 10.0]
        rows = campaign_accuracy(
            builtin_dataset(5),
            grid,
            ["baseline", "m1", "m2", "m3", "m4", "m5"],
        )
        err = {}
        for r in rows:
            assert r["error"] == "", f"fit failed: {r}"
            err[(r["model"], r["omega0_khz"])] = r["mean_rel_error"]
        checks = {}
        for om in grid:
            checks[f"order@{om}"] = (
                err[("baseline", om)] > err[("m1", om)] > err[("m2", om)]
            )
        checks["baseline_plateau"] = 7e-3 / 2 <= err[("baseline", 2.0)] <= 7e-3 * 2
        checks["m1_plateau"] = 4e-4 / 2 <= err[("m1", 2.0)] <= 4e-4 * 2
        slopes = {}
        for model in ("m2", "m3", "m4", "m5"):
            slopes[model] = _loglog_slope(grid, [err[(model, om)] for om in grid])
            checks[f"slope_{model}"] = 1.7 <= slopes[model] <= 2.3
        ok = all(checks.values())
        detail = (
            f"baseline@2kHz={err[('baseline', 2.0)]:.2e} m1@2kHz={err[('m1', 2.0)]:.2e} "
            + " ".join(f"s_{m}={s:.2f}" for m, s in slopes.items())
        )
        record_criterion(5, "model accuracy ordering and scaling", ok, detail)
        assert ok, {k: v for k, v in checks.items() if not v}


@pytest.mark.slow
class TestCriterion6:
    def test_sign_discrimination(self):
        rows = campaign_sign()
        times = sorted({r["t_s"] for r in rows})

        def trace(sign, source):
            sel = {r["t_s"]: r for r in rows if r["eta11_sign"] == sign and r["source"] == source}
            return np.array([sel[t]["population"] for t in times])

        full_p, full_m = trace(1, "fullsim"), trace(-1, "fullsim")
        model_p, model_m = trace(1, "m4"), trace(-1, "m4")
        sigma = np.sqrt(
            np.maximum(full_p * (1 - full_p), full_m * (1 - full_m)) / 1000
        )
        separated = int(np.sum(np.abs(full_p - full_m) > 5 * sigma))
        dev = max(
            float(np.max(np.abs(model_p - full_p))),
            float(np.max(np.abs(model_m - full_m))),
        )
        ok = separated >= 3 and dev < 0.05
        record_criterion(
            6,
            "two-tone sign discrimination",
            ok,
            f"separated {separated}/20 stamps, model dev {dev:.3f}",
        )
        assert ok, (separated, dev)


@pytest.mark.slow
class TestCriterion7:
    def test_shot_noise_scaling_and_protocol_gap(self):
        cfg = builtin_dataset(5).with_rabi(TWO_PI * 10e3)
        shots = [10**3, 10**4, 10**5]
        rows = campaign_shot_noise(
            cfg, TWO_PI * 10e3, shots, replicas=50, seed=202
        )
        unc = {(r["kind"], r["total_shots"]): r["mean_rel_uncertainty"] for r in rows}
        slope = _loglog_slope(shots, [unc[("improved", s)] for s in shots])
        ok_slope = -0.55 <= slope <= -0.45
        ok_gap = all(unc[("improved", s)] < unc[("basic", s)] for s in shots)
        ok = ok_slope and ok_gap
        record_criterion(
            7,
            "shot-noise scaling and protocol comparison",
            ok,
            f"slope={slope:.3f} improved<basic at all shots={ok_gap}",
        )
        assert ok, (slope, unc)


def _random_offset_inits(cfg, rng):
    """Initial guesses uniformly within 20% of truth (random per pair)."""
    factors = 1.0 + 0.2 * (2 * rng.random(cfg.eta.shape) - 1)
    return cfg.eta * factors


@pytest.mark.slow
class TestCriterion8:
    @pytest.fixture(scope="class")
    def fitted(self):
        cfg = builtin_dataset(5).with_rabi(TWO_PI * 10e3)
        truth = truth_timescan(cfg, TWO_PI * 10e3)
        inits = _random_offset_inits(cfg, np.random.default_rng(88))
        opts = FitOptions(eta_init=inits, model="m2", insensitive="hold")
        res = fit_timescan(truth, cfg, opts)
        return cfg, truth, inits, res

    def test_converges_and_recovers(self, fitted):
        cfg, truth, inits, res = fitted
        mask = np.abs(cfg.eta) >= 1e-4
        rel = np.abs((res.eta_est - cfg.eta) / cfg.eta)[mask]
        ok = res.converged and float(rel.max()) < 5e-3
        record_criterion(
            "8a",
            "iterative fit converges from 20%-off guesses",
            ok,
            f"rounds={res.rounds_used} max rel err={rel.max():.2e}",
        )
        assert ok

    def test_two_round_convergence(self, fitted):
        # Known red; see the module docstring and the decisions record.  The
        # round-to-round contraction of context errors is ~1e-2, so the 1e-6
        # stop rule cannot be met after two sweeps from 20%-off guesses.
        cfg, truth, inits, res = fitted
        ok = res.converged and res.rounds_used <= 2
        record_criterion(
            "8b",
            "convergence within two rounds at 1e-6 tolerance",
            ok,
            f"rounds={res.rounds_used}",
        )
        assert ok, (
            f"rounds_used={res.rounds_used}: two Jacobi sweeps land ~2e-5 "
            "relative from the fixed point, above the 1e-6 stop tolerance"
        )

    def test_result_invariant_to_solve_order(self, fitted):
        import modechar.fitting as fitting_mod

        cfg, truth, inits, res = fitted
        opts = FitOptions(eta_init=inits, model="m2", insensitive="hold")
        original = fitting_mod.thread_map

        def reversed_map(fn, items, workers=None):
            items = list(items)
            return [fn(it) for it in reversed(items)][::-1]

        fitting_mod.thread_map = reversed_map
        try:
            out = fit_timescan(truth, cfg, opts)
        finally:
            fitting_mod.thread_map = original
        ok = bool(
            np.array_equal(out.eta_est, res.eta_est)
            and np.array_equal(out.delta_est, res.delta_est)
        )
        record_criterion(
            "8c", "fit result independent of pair-solve order", ok, ""
        )
        assert ok


@pytest.mark.slow
class TestCriterion9:
    def test_spacing_power_law(self):
        rows = campaign_spacing(factors=(0.5, 1.0, 2.0), omega0_khz=10.0)
        spacings = [r["mean_spacing_khz"] for r in rows]
        errors = [r["mean_rel_error"] for r in rows]
        above_floor = all(e > 3e-5 for e in errors)
        slope = _loglog_slope(spacings, errors)
        ok = above_floor and -2.3 <= slope <= -1.7
        record_criterion(
            9,
            "error versus mode-spacing power law",
            ok,
            f"slope={slope:.2f} errors={['%.2e' % e for e in errors]}",
        )
        assert ok, (slope, errors)
