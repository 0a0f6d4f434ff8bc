"""Resource math and execution of the two characterization protocols.

The basic protocol measures every pair at one fixed duration, folding the
coupling information into a single population per pair, so its frequency
scan must resolve the modes very finely.  The improved protocol adds a time
scan, which separates coupling (oscillation frequency) from detuning
(frequency and amplitude) and tolerates a much coarser frequency scan.
Total experiment times follow

    T_basic    = M_delta * S * cycle + (N' - 1) * S * cycle
    T_improved = M_delta * S_delta * cycle_delta + N' * S_t * sum_i cycle_i

with cycle = drive duration + cooling + state preparation + detection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .chain import Assignment, ChainConfig, assignment_schedule, tau_max
from .hamsim import SimOptions, simulate_truth
from .trace import PopulationTrace

__all__ = [
    "TimingOverheads",
    "ProtocolPlan",
    "ProtocolRun",
    "delta_omega_min",
    "tau_for_delta_omega",
    "scan_size",
    "plan_basic",
    "plan_improved",
    "run_protocol",
]

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class TimingOverheads:
    """Per-shot cycle overheads in seconds."""

    cooling: float = 4e-3
    state_prep: float = 1e-4
    detection: float = 1.5e-4

    def __post_init__(self):
        if min(self.cooling, self.state_prep, self.detection) < 0:
            raise ValueError("overheads must be nonnegative")

    @property
    def total(self) -> float:
        return self.cooling + self.state_prep + self.detection


def delta_omega_min(tau: float, shots: int) -> float:
    """Smallest mode-frequency uncertainty resolvable by a scan point.

    The population drop between a resonant point and one detuned by the
    returned amount exceeds the binomial shot noise of `shots` repetitions
    at drive duration tau.
    """
    if tau <= 0 or shots < 1:
        raise ValueError("tau must be positive and shots >= 1")
    angle = math.pi - math.asin(math.sqrt(shots / (1 + shots)))
    return (2 / tau) * math.sqrt(angle**2 - (math.pi / 2) ** 2)


def tau_for_delta_omega(delta_omega: float, shots: int) -> float:
    """Drive duration at which a scan resolves delta_omega; inverse of
    delta_omega_min in tau."""
    if delta_omega <= 0:
        raise ValueError("delta_omega must be positive")
    angle = math.pi - math.asin(math.sqrt(shots / (1 + shots)))
    return (2 / delta_omega) * math.sqrt(angle**2 - (math.pi / 2) ** 2)


def scan_size(delta_omega_prior: float, delta_omega: float) -> int:
    """Number of scan detunings covering the prior width at spacing
    2*delta_omega (the unrounded bound; result rounded up)."""
    if delta_omega_prior <= 0 or delta_omega <= 0:
        raise ValueError("frequencies must be positive")
    ratio = delta_omega_prior / (2 * delta_omega)
    # absorb float representation error before taking the ceiling
    return int(math.ceil(round(ratio, 9)))


@dataclass(frozen=True)
class ProtocolPlan:
    """Scan sizes, shot counts and cycle times of one protocol run."""

    kind: str                      # "basic" | "improved"
    num_modes: int
    omega0: float                  # rad/s
    shots_freq: int                # S^(0) or S_delta
    shots_time: int | None         # S_t (improved only)
    m_delta: int
    m_t: int | None
    tau_freq_scan: float           # drive duration of the frequency scan
    timestamps: tuple              # improved: the M_t scan durations
    delta_omega: float             # rad/s resolution of the frequency scan
    prior_width: float             # rad/s
    overheads: TimingOverheads
    total_time: float

    @property
    def cycle_freq(self) -> float:
        return self.tau_freq_scan + self.overheads.total

    @property
    def cycle_times(self) -> tuple:
        return tuple(t + self.overheads.total for t in self.timestamps)

    def recompute_total(self) -> float:
        """The stated experiment-time arithmetic on this plan's own fields."""
        if self.kind == "basic":
            return (
                self.m_delta * self.shots_freq * self.cycle_freq
                + (self.num_modes - 1) * self.shots_freq * self.cycle_freq
            )
        return self.m_delta * self.shots_freq * self.cycle_freq + (
            self.num_modes * self.shots_time * sum(self.cycle_times)
        )

    def scan_offsets(self) -> np.ndarray:
        """Centered frequency-scan offsets at spacing 2*delta_omega."""
        return (np.arange(self.m_delta) - (self.m_delta - 1) / 2) * (
            2 * self.delta_omega
        )

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "num_modes": self.num_modes,
            "omega0_rad_s": self.omega0,
            "shots_freq": self.shots_freq,
            "shots_time": self.shots_time,
            "m_delta": self.m_delta,
            "m_t": self.m_t,
            "tau_freq_scan_s": self.tau_freq_scan,
            "cycle_freq_s": self.cycle_freq,
            "timestamps_s": list(self.timestamps),
            "mean_cycle_time_s": (
                float(np.mean(self.cycle_times)) if self.timestamps else None
            ),
            "delta_omega_rad_s": self.delta_omega,
            "prior_width_rad_s": self.prior_width,
            "overheads_s": {
                "cooling": self.overheads.cooling,
                "state_prep": self.overheads.state_prep,
                "detection": self.overheads.detection,
            },
            "total_time_s": self.total_time,
        }
        return json.dumps(payload, indent=2)


def plan_basic(
    config: ChainConfig,
    omega0: float,
    shots: int,
    prior_width: float,
    overheads: TimingOverheads | None = None,
) -> ProtocolPlan:
    """Size the fixed-duration protocol.

    The drive duration is half the longest time-scan timestamp; the
    frequency resolution is then pinned by shot noise at that duration, and
    the scan size follows from the prior width.
    """
    if config.num_modes != config.num_ions:
        raise ValueError("protocol planning assumes num_modes == num_ions")
    overheads = overheads or TimingOverheads()
    tau0 = tau_max(config, omega0) / 2
    d_omega = delta_omega_min(tau0, shots)
    m_delta = scan_size(prior_width, d_omega)
    plan = ProtocolPlan(
        kind="basic",
        num_modes=config.num_modes,
        omega0=omega0,
        shots_freq=shots,
        shots_time=None,
        m_delta=m_delta,
        m_t=None,
        tau_freq_scan=tau0,
        timestamps=(),
        delta_omega=d_omega,
        prior_width=prior_width,
        overheads=overheads,
        total_time=0.0,
    )
    return _with_total(plan)


def plan_improved(
    config: ChainConfig,
    omega0: float,
    shots_time: int,
    m_t: int,
    delta_omega: float,
    prior_width: float,
    overheads: TimingOverheads | None = None,
    shots_freq: int | None = None,
) -> ProtocolPlan:
    """Size the time-scan protocol.

    delta_omega is a free choice here (the time scan tolerates detuning);
    the frequency-scan duration is the shortest that resolves it.  By
    default the frequency scan spends as many shots as one full time scan.
    """
    if config.num_modes != config.num_ions:
        raise ValueError("protocol planning assumes num_modes == num_ions")
    overheads = overheads or TimingOverheads()
    if shots_freq is None:
        shots_freq = m_t * shots_time
    tau_delta = tau_for_delta_omega(delta_omega, shots_freq)
    t_max = tau_max(config, omega0)
    timestamps = tuple(i * t_max / m_t for i in range(1, m_t + 1))
    m_delta = scan_size(prior_width, delta_omega)
    plan = ProtocolPlan(
        kind="improved",
        num_modes=config.num_modes,
        omega0=omega0,
        shots_freq=shots_freq,
        shots_time=shots_time,
        m_delta=m_delta,
        m_t=m_t,
        tau_freq_scan=tau_delta,
        timestamps=timestamps,
        delta_omega=delta_omega,
        prior_width=prior_width,
        overheads=overheads,
        total_time=0.0,
    )
    return _with_total(plan)


def _with_total(plan: ProtocolPlan) -> ProtocolPlan:
    import dataclasses

    return dataclasses.replace(plan, total_time=plan.recompute_total())


@dataclass
class ProtocolRun:
    """Synthetic measured dataset from executing a plan against a simulator."""

    plan: ProtocolPlan
    freq_scans: list                  # per substep: detuning-scan traces
    mode_freq_est: dict               # mode -> estimated absolute frequency
    time_scans: list                  # improved: per substep sampled traces
    single_points: PopulationTrace | None  # basic: sampled P(tau0) per pair
    seed: int


def run_protocol(
    config: ChainConfig,
    plan: ProtocolPlan,
    seed: int,
    opts: SimOptions | None = None,
    perfect_frequencies: bool = False,
    truth_provider=None,
    sample: bool = True,
) -> ProtocolRun:
    """Execute a plan against simulated truth with binomial shot sampling.

    Step one scans the drive detuning around each mode (skipped under
    perfect_frequencies); step two runs the time scan (improved) or the
    fixed-duration measurement substeps (basic).  truth_provider may replace
    the simulator call, e.g. with a cached wrapper; it receives
    (assignment, detuning_map, times) and returns a PopulationTrace.
    sample=False returns exact populations (infinite-shot limit).
    """
    opts = opts or SimOptions()
    rng = np.random.default_rng(seed)
    schedule = assignment_schedule(config)

    def truth(assignment, detuning, times):
        if truth_provider is not None:
            return truth_provider(assignment, detuning, times)
        return simulate_truth(
            config, assignment, times, opts, detuning=detuning, omega0=plan.omega0
        )

    freq_scans = []
    mode_freq_est = {}
    if perfect_frequencies:
        for k in range(1, config.num_modes + 1):
            mode_freq_est[k] = float(config.mode_freq[k - 1])
    else:
        from .fitting import estimate_mode_freq

        offsets = plan.scan_offsets()
        # scan through an assignment whose probes all sit off-node; an ion at
        # a node of its assigned mode sees no peak at any detuning
        assignment = schedule[0]
        for cand in schedule:
            if all(
                abs(config.eta[j - 1, k - 1]) >= config.eps_eta
                for k, j in cand.probe_ion_of_mode.items()
            ):
                assignment = cand
                break
        per_pair = {
            pair: np.empty(len(offsets))
            for pair in [(j, k) for k, j in sorted(assignment.probe_ion_of_mode.items())]
        }
        for i, off in enumerate(offsets):
            det = {k: float(off) for k in assignment.probe_ion_of_mode}
            tr = truth(assignment, det, np.array([plan.tau_freq_scan]))
            if sample:
                tr = tr.sample(plan.shots_freq, rng, seed=seed)
            for pair, vals in tr.values.items():
                per_pair[pair][i] = vals[0]
        scan = PopulationTrace(
            kind="detuning",
            grid=offsets,
            values=per_pair,
            assignments={p: assignment for p in per_pair},
            shots=plan.shots_freq if sample else None,
            sampled=sample,
            seed=seed,
        )
        freq_scans.append(scan)
        for k, (off_est, _) in estimate_mode_freq(scan).items():
            mode_freq_est[k] = float(config.mode_freq[k - 1]) + off_est

    # residual detuning map seen by step two when frequencies are imperfect
    det_est = {
        k: mode_freq_est[k] - float(config.mode_freq[k - 1])
        for k in mode_freq_est
    }

    time_scans = []
    single_points = None
    if plan.kind == "improved":
        times = np.array(plan.timestamps)
        for assignment in schedule:
            tr = truth(assignment, det_est, times)
            if sample:
                tr = tr.sample(plan.shots_time, rng, seed=seed)
            time_scans.append(tr)
    else:
        values = {}
        assignments = {}
        times = np.array([plan.tau_freq_scan])
        for assignment in schedule:
            tr = truth(assignment, det_est, times)
            if sample:
                tr = tr.sample(plan.shots_freq, rng, seed=seed)
            values.update(tr.values)
            assignments.update(tr.assignments)
        single_points = PopulationTrace(
            kind="time",
            grid=times,
            values=values,
            assignments=assignments,
            shots=plan.shots_freq if sample else None,
            sampled=sample,
            seed=seed,
        )
    return ProtocolRun(
        plan=plan,
        freq_scans=freq_scans,
        mode_freq_est=mode_freq_est,
        time_scans=time_scans,
        single_points=single_points,
        seed=seed,
    )
