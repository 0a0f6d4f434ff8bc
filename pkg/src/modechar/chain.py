"""Physical scenario data for an ion chain.

Holds the Lamb-Dicke matrix, mode frequencies, drive amplitudes and
thermal/threshold settings; ships reference mode-parameter tables for
chains of 3..7 ions; builds the mode-to-ion assignment schedule of the
parallel characterization protocols.

Unit conventions: all angular frequencies are rad/s internally.  JSON
config files carry plain frequencies (mode_freq_mhz in MHz,
qubit_rabi_khz in kHz); the 2*pi is applied on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ChainConfig",
    "DriveTone",
    "Assignment",
    "load_config",
    "builtin_dataset",
    "assignment_schedule",
    "tau_max",
    "resonant_tones",
]

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class ChainConfig:
    """Immutable description of one ion chain and its probe settings.

    eta[j, k] is the signed Lamb-Dicke parameter of ion j and mode k
    (0-based array indices; the public ion/mode labels used in traces and
    CSV output are 1-based).  ref_coupling is the lumped wavevector/mass
    factor that sets the longest probe duration via tau_max().
    """

    num_ions: int
    num_modes: int
    mode_freq: np.ndarray      # (N',) rad/s, strictly increasing
    eta: np.ndarray            # (N, N') dimensionless, signed
    qubit_rabi: np.ndarray     # (N,) rad/s
    nbar: float = 0.05
    p_th: float = 1e-4
    eps_eta: float = 1e-4
    ref_coupling: float = 0.0176
    name: str = "custom"

    def __post_init__(self):
        mode_freq = np.asarray(self.mode_freq, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        qubit_rabi = np.asarray(self.qubit_rabi, dtype=float)
        object.__setattr__(self, "mode_freq", mode_freq)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "qubit_rabi", qubit_rabi)
        if self.num_ions < 1 or self.num_modes < 1:
            raise ValueError("num_ions and num_modes must be positive")
        if mode_freq.shape != (self.num_modes,):
            raise ValueError("mode_freq length does not match num_modes")
        if eta.shape != (self.num_ions, self.num_modes):
            raise ValueError("eta shape does not match (num_ions, num_modes)")
        if qubit_rabi.shape != (self.num_ions,):
            raise ValueError("qubit_rabi length does not match num_ions")
        if np.any(mode_freq <= 0):
            raise ValueError("mode_freq must be positive")
        if np.any(np.diff(mode_freq) <= 0):
            raise ValueError("mode_freq not increasing")
        if np.any(qubit_rabi < 0):
            raise ValueError("qubit_rabi must be nonnegative")
        if np.any(np.abs(eta) >= 1):
            raise ValueError("eta out of Lamb-Dicke range (|eta| must be < 1)")
        if not (0 < self.p_th <= 1):
            raise ValueError("p_th must be in (0, 1]")
        if self.eps_eta <= 0:
            raise ValueError("eps_eta must be positive")
        if self.nbar < 0:
            raise ValueError("nbar must be nonnegative")
        for arr in (mode_freq, eta, qubit_rabi):
            arr.setflags(write=False)

    def with_rabi(self, omega0: float) -> "ChainConfig":
        """Copy with every ion's qubit Rabi frequency set to omega0 (rad/s)."""
        return replace(self, qubit_rabi=np.full(self.num_ions, float(omega0)))

    def with_eta(self, eta: np.ndarray) -> "ChainConfig":
        """Copy with a replacement Lamb-Dicke matrix."""
        return replace(self, eta=np.array(eta, dtype=float))


@dataclass(frozen=True)
class DriveTone:
    """One addressed laser tone.

    ion is the 1-based ion label; detuning_from_qubit is the tone frequency
    minus that ion's qubit frequency (rad/s).  Qubit frequencies themselves
    never appear: every observable depends only on this difference.
    """

    ion: int
    detuning_from_qubit: float   # rad/s
    rabi: float                  # rad/s
    phase: float = 0.0

    def __post_init__(self):
        if self.ion < 1:
            raise ValueError("ion labels are 1-based")


@dataclass(frozen=True)
class Assignment:
    """Map from probed modes to probing ions for one protocol substep.

    probe_ion_of_mode maps 1-based mode labels to 1-based ion labels and may
    be partial (a mode without an entry is not probed in this substep).
    """

    probe_ion_of_mode: dict = field(default_factory=dict)
    substep: int = 1

    def __post_init__(self):
        ions = list(self.probe_ion_of_mode.values())
        if len(set(ions)) != len(ions):
            raise ValueError("assignment maps two modes to the same ion")

    def ion_of(self, mode: int):
        return self.probe_ion_of_mode.get(mode)

    def mode_of(self, ion: int):
        for k, j in self.probe_ion_of_mode.items():
            if j == ion:
                return k
        return None

    def pairs(self):
        """(ion, mode) pairs probed in this substep, mode-ordered."""
        return [(j, k) for k, j in sorted(self.probe_ion_of_mode.items())]


# Reference mode parameters for equidistant chains of 3..7 ions in a typical
# surface trap, with N' = N radial modes ordered by increasing frequency.
# Frequencies are plain MHz; eta rows are ions, columns are modes.
#
# Chain-5 note: sign-discrimination examples elsewhere quote
# eta[2,1] = -0.0521 for this chain; the tabulated -0.0526 is used here.
_BUILTIN = {
    3: {
        "mode_freq_mhz": [2.9574, 3.0542, 3.1222],
        "eta": [
            [-0.0457, 0.0776, 0.0625],
            [0.0909, -2.77e-6, 0.0629],
            [-0.0457, -0.0776, 0.0625],
        ],
    },
    4: {
        "mode_freq_mhz": [2.9467, 3.0263, 3.0894, 3.1333],
        "eta": [
            [0.0239, 0.0551, 0.0735, 0.0542],
            [-0.0753, -0.0552, 0.0234, 0.0541],
            [0.0753, -0.0552, -0.0234, 0.0541],
            [-0.0239, 0.0551, -0.0735, 0.0542],
        ],
    },
    5: {
        "mode_freq_mhz": [2.9526, 3.0155, 3.0687, 3.1115, 3.1407],
        "eta": [
            [0.0119, 0.0335, -0.0586, 0.0694, 0.0486],
            [-0.0526, -0.0705, 0.0307, 0.0330, 0.0482],
            [0.0814, 1.66e-5, 0.0569, 1.12e-5, 0.0481],
            [-0.0526, 0.0705, 0.0307, -0.0330, 0.0483],
            [0.0119, -0.0335, -0.0586, -0.0694, 0.0487],
        ],
    },
    6: {
        "mode_freq_mhz": [2.9444, 2.9983, 3.0465, 3.0881, 3.1225, 3.1443],
        "eta": [
            [-0.00603, -0.0192, 0.0395, -0.0592, -0.0658, 0.0453],
            [0.0338, 0.0624, -0.0591, 0.0146, -0.0375, 0.0439],
            [-0.0711, -0.0433, -0.0314, 0.0473, -0.0123, 0.0432],
            [0.0711, -0.0432, 0.0314, 0.0473, 0.0122, 0.0432],
            [-0.0338, 0.0624, 0.0591, 0.0146, 0.0375, 0.0439],
            [0.00603, -0.0192, -0.0395, -0.0592, 0.0658, 0.0453],
        ],
    },
    7: {
        "mode_freq_mhz": [2.9444, 2.9880, 3.0295, 3.0679, 3.1020, 3.1312, 3.1471],
        "eta": [
            [-0.00341, -0.0113, -0.0253, -0.0431, -0.0577, 0.0627, 0.0440],
            [0.0216, 0.0478, 0.0623, 0.0466, 0.00367, 0.0396, 0.0407],
            [-0.0552, -0.0612, -0.0100, 0.0443, 0.0375, 0.0193, 0.0389],
            [0.0738, -9.10e-5, -0.0538, 5.40e-5, 0.0486, 1.10e-5, 0.0383],
            [-0.0551, 0.0612, -0.0102, -0.0443, 0.0376, -0.0193, 0.0389],
            [0.0216, -0.0477, 0.0623, -0.0467, 0.00373, -0.0396, 0.0407],
            [-0.00339, 0.0113, -0.0252, 0.0430, -0.0577, -0.0627, 0.0440],
        ],
    },
}


def builtin_dataset(n: int, omega0_khz: float = 10.0) -> ChainConfig:
    """Bundled mode parameters for an n-ion chain (n in 3..7).

    All ions get the same qubit Rabi frequency 2*pi*omega0_khz kHz; campaigns
    normally override it per run.
    """
    if n not in _BUILTIN:
        raise ValueError(f"no builtin dataset for n={n}; available: 3..7")
    data = _BUILTIN[n]
    return ChainConfig(
        num_ions=n,
        num_modes=n,
        mode_freq=TWO_PI * 1e6 * np.array(data["mode_freq_mhz"]),
        eta=np.array(data["eta"]),
        qubit_rabi=np.full(n, TWO_PI * 1e3 * omega0_khz),
        name=f"builtin-{n}",
    )


def load_config(path) -> ChainConfig:
    """Read and validate a chain configuration from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config parse error in {path}: {exc}") from exc
    required = ["num_ions", "num_modes", "mode_freq_mhz", "eta", "qubit_rabi_khz"]
    for key in required:
        if key not in raw:
            raise ValueError(f"config missing required field '{key}'")
    return ChainConfig(
        num_ions=int(raw["num_ions"]),
        num_modes=int(raw["num_modes"]),
        mode_freq=TWO_PI * 1e6 * np.array(raw["mode_freq_mhz"], dtype=float),
        eta=np.array(raw["eta"], dtype=float),
        qubit_rabi=TWO_PI * 1e3 * np.array(raw["qubit_rabi_khz"], dtype=float),
        nbar=float(raw.get("nbar", 0.05)),
        p_th=float(raw.get("p_th", 1e-4)),
        eps_eta=float(raw.get("eps_eta", 1e-4)),
        ref_coupling=float(raw.get("ref_coupling", 0.0176)),
        name=str(raw.get("name", "custom")),
    )


def assignment_schedule(config: ChainConfig) -> list:
    """Cyclic substeps pairing every ion with every mode exactly once.

    Substep s maps mode k to ion ((k + s - 2) mod N) + 1, so substep 1 is the
    identity map and the N substeps tile all N*N' pairs (a Latin square).
    Requires N' = N, the common laser-alignment case.
    """
    if config.num_modes != config.num_ions:
        raise ValueError("assignment schedule requires num_modes == num_ions")
    n = config.num_ions
    return [
        Assignment(
            probe_ion_of_mode={k: ((k + s - 2) % n) + 1 for k in range(1, n + 1)},
            substep=s,
        )
        for s in range(1, n + 1)
    ]


def tau_max(config: ChainConfig, omega0: float) -> float:
    """Longest probe timestamp: 2.5 sqrt(N) / (omega0 * ref_coupling).

    Scales so the slowest center-of-mass sideband completes about five
    population oscillations regardless of chain size and drive strength.
    """
    if omega0 <= 0:
        raise ValueError("omega0 must be positive")
    return 2.5 * math.sqrt(config.num_ions) / (omega0 * config.ref_coupling)


def resonant_tones(
    config: ChainConfig,
    assignment: Assignment,
    detuning=None,
    omega0: float | None = None,
) -> list:
    """One tone per probing ion, parked at its assigned mode plus a detuning.

    detuning maps 1-based mode labels to rad/s offsets (default all zero);
    omega0 overrides the per-ion Rabi amplitudes from the config.
    """
    detuning = detuning or {}
    tones = []
    for k, j in sorted(assignment.probe_ion_of_mode.items()):
        rabi = float(config.qubit_rabi[j - 1]) if omega0 is None else float(omega0)
        tones.append(
            DriveTone(
                ion=j,
                detuning_from_qubit=float(config.mode_freq[k - 1])
                + float(detuning.get(k, 0.0)),
                rabi=rabi,
            )
        )
    return tones
