import json
import math

import numpy as np
import pytest

from modechar.chain import (
    Assignment,
    ChainConfig,
    DriveTone,
    assignment_schedule,
    builtin_dataset,
    load_config,
    resonant_tones,
    tau_max,
)

TWO_PI = 2 * math.pi


def _valid_raw(n=3):
    cfg = builtin_dataset(n)
    return {
        "num_ions": n,
        "num_modes": n,
        "mode_freq_mhz": list(cfg.mode_freq / TWO_PI / 1e6),
        "eta": [list(row) for row in cfg.eta],
        "qubit_rabi_khz": [10.0] * n,
        "nbar": 0.05,
        "p_th": 1e-4,
        "eps_eta": 1e-4,
        "ref_coupling": 0.0176,
    }


class TestBuiltinDatasets:
    def test_three_ion_reference_values(self):
        cfg = builtin_dataset(3)
        assert cfg.mode_freq[0] / TWO_PI == pytest.approx(2.9574e6)
        assert cfg.eta[1, 1] == pytest.approx(-2.77e-6)

    def test_five_ion_reference_values(self):
        cfg = builtin_dataset(5)
        assert cfg.eta[0, 0] == pytest.approx(0.0119)
        assert cfg.eta[1, 1] == pytest.approx(-0.0705)

    def test_seven_ion_node(self):
        cfg = builtin_dataset(7)
        assert cfg.eta[3, 1] == pytest.approx(-9.10e-5)
        assert abs(cfg.eta[3, 1]) < cfg.eps_eta

    def test_defaults(self):
        cfg = builtin_dataset(4)
        assert (cfg.nbar, cfg.p_th, cfg.eps_eta) == (0.05, 1e-4, 1e-4)
        assert cfg.ref_coupling == 0.0176
        np.testing.assert_allclose(cfg.qubit_rabi, TWO_PI * 10e3)

    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
    def test_all_sizes_valid(self, n):
        cfg = builtin_dataset(n)
        assert cfg.num_ions == cfg.num_modes == n
        assert np.all(np.diff(cfg.mode_freq) > 0)
        assert np.all(np.abs(cfg.eta) < 1)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            builtin_dataset(8)


class TestConfigValidation:
    def test_round_trip(self, tmp_path):
        raw = _valid_raw(5)
        path = tmp_path / "chain.json"
        path.write_text(json.dumps(raw))
        cfg = load_config(path)
        assert cfg.num_ions == cfg.num_modes == 5
        np.testing.assert_allclose(cfg.eta, builtin_dataset(5).eta)
        np.testing.assert_allclose(cfg.qubit_rabi, TWO_PI * 10e3)

    def test_decreasing_mode_freq_rejected(self, tmp_path):
        raw = _valid_raw()
        raw["mode_freq_mhz"] = raw["mode_freq_mhz"][::-1]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ValueError, match="mode_freq not increasing"):
            load_config(path)

    def test_large_eta_rejected(self, tmp_path):
        raw = _valid_raw()
        raw["eta"][0][0] = 1.5
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ValueError, match="Lamb-Dicke"):
            load_config(path)

    def test_parse_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="parse"):
            load_config(path)

    def test_missing_field(self, tmp_path):
        raw = _valid_raw()
        del raw["eta"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ValueError, match="eta"):
            load_config(path)

    def test_arrays_are_immutable(self):
        cfg = builtin_dataset(3)
        with pytest.raises(ValueError):
            cfg.eta[0, 0] = 0.5


class TestAssignment:
    def test_identity_first_substep(self):
        sched = assignment_schedule(builtin_dataset(3))
        assert sched[0].probe_ion_of_mode == {1: 1, 2: 2, 3: 3}

    def test_second_substep_cyclic(self):
        sched = assignment_schedule(builtin_dataset(3))
        assert sched[1].probe_ion_of_mode == {1: 2, 2: 3, 3: 1}

    @pytest.mark.parametrize("n", [3, 5, 7])
    def test_latin_square(self, n):
        sched = assignment_schedule(builtin_dataset(n))
        assert len(sched) == n
        seen = set()
        for a in sched:
            ions = list(a.probe_ion_of_mode.values())
            assert sorted(ions) == list(range(1, n + 1))  # bijection per substep
            seen.update(a.pairs())
        assert len(seen) == n * n  # all pairs exactly once

    def test_rectangular_chain_rejected(self):
        cfg = builtin_dataset(3)
        bad = ChainConfig(
            num_ions=3,
            num_modes=2,
            mode_freq=cfg.mode_freq[:2],
            eta=cfg.eta[:, :2],
            qubit_rabi=cfg.qubit_rabi,
        )
        with pytest.raises(ValueError, match="num_modes == num_ions"):
            assignment_schedule(bad)

    def test_duplicate_ion_rejected(self):
        with pytest.raises(ValueError, match="same ion"):
            Assignment(probe_ion_of_mode={1: 2, 2: 2})

    def test_lookups(self):
        a = Assignment(probe_ion_of_mode={1: 2, 2: 3, 3: 1}, substep=2)
        assert a.ion_of(2) == 3
        assert a.mode_of(1) == 3
        assert a.ion_of(9) is None


class TestTauMax:
    def test_reference_values(self):
        cfg = builtin_dataset(5)
        assert tau_max(cfg, TWO_PI * 7e3) == pytest.approx(7.2216e-3, rel=1e-4)
        assert tau_max(cfg, TWO_PI * 14e3) == pytest.approx(3.6108e-3, rel=1e-4)
        assert tau_max(cfg, TWO_PI * 10e3) == pytest.approx(5.0551e-3, rel=1e-4)

    def test_inverse_scaling_in_omega(self):
        cfg = builtin_dataset(4)
        for c in (0.5, 2.0, 7.3):
            assert tau_max(cfg, c * 1e4) == pytest.approx(
                tau_max(cfg, 1e4) / c, rel=1e-12
            )

    def test_rejects_nonpositive_omega(self):
        with pytest.raises(ValueError):
            tau_max(builtin_dataset(3), 0.0)


class TestTones:
    def test_resonant_tones_follow_assignment(self):
        cfg = builtin_dataset(3)
        sched = assignment_schedule(cfg)
        tones = resonant_tones(cfg, sched[1], detuning={2: 100.0})
        by_ion = {t.ion: t for t in tones}
        # substep 2: mode 1 -> ion 2, mode 2 -> ion 3, mode 3 -> ion 1
        assert by_ion[2].detuning_from_qubit == pytest.approx(cfg.mode_freq[0])
        assert by_ion[3].detuning_from_qubit == pytest.approx(cfg.mode_freq[1] + 100.0)
        assert by_ion[1].detuning_from_qubit == pytest.approx(cfg.mode_freq[2])

    def test_tone_defaults(self):
        t = DriveTone(ion=1, detuning_from_qubit=1e6, rabi=1e4)
        assert t.phase == 0.0
        with pytest.raises(ValueError):
            DriveTone(ion=0, detuning_from_qubit=1e6, rabi=1e4)
