"""Predictors of bright-state populations under parallel sideband probing.

Six models of increasing fidelity for the population of an ion probing its
assigned mode while every other mode is probed in parallel:

  baseline  bare two-level pair, ground state, spectators ignored
  m1        spectator wavepacket (Debye-Waller) reduction at zero temperature
  m2        m1 averaged over the thermal phonon ensemble
  m3        m2 with the spectator reduction following the spectators' own
            sideband flip-flop in time (stepped two-level integration)
  m4        probed mode plus its frequency-neighbor modes and their probing
            ions propagated exactly; remaining modes as static reduction
  m5        m4 with the outside reduction factors time-dependent as in m3

All models expose a per-pair curve as a function of the pair's own coupling
eta and detuning, holding every other parameter at externally supplied
context values; the iterative fitter relies on exactly that split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .chain import Assignment, ChainConfig
from .hamsim import SimOptions, _build_sector_system, _offsets_for, _run_kernel
from .physics import TwoLevelParams, bsb_rabi, dw_average, dw_single, two_level_population
from .thermal import PhononEnsemble, enumerate_configs
from .trace import PopulationTrace

__all__ = [
    "ModelId",
    "PredictionRequest",
    "predict",
    "pair_model",
    "nn_predict",
    "tddw_factor",
]

TWO_PI = 2 * math.pi


class ModelId(str, Enum):
    BASELINE = "baseline"
    M1_DW = "m1"
    M2_THERMAL = "m2"
    M3_TDDW = "m3"
    M4_NN = "m4"
    M5_TDDW_NN = "m5"

    @classmethod
    def parse(cls, name) -> "ModelId":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(
                f"unknown model {name!r}; choose from "
                + ", ".join(m.value for m in cls)
            ) from None


NN_MODELS = (ModelId.M4_NN, ModelId.M5_TDDW_NN)


@dataclass(frozen=True)
class PredictionRequest:
    """One prediction task: which pairs, on which grid, with which model."""

    config: ChainConfig
    assignment: Assignment
    times: np.ndarray
    model: ModelId = ModelId.M2_THERMAL
    detuning: dict = field(default_factory=dict)   # mode -> rad/s
    model_dt: float | None = None
    nn_window: int = 1
    ensemble: PhononEnsemble | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "model", ModelId.parse(self.model))
        if np.any(times < 0) or np.any(np.diff(times) < 0):
            raise ValueError("times must be nonnegative ascending")
        for k in self.detuning:
            if not (1 <= k <= self.config.num_modes):
                raise ValueError(f"detuning given for unknown mode {k}")


def tddw_factor(eta_spectator: float, n: int, probe: TwoLevelParams) -> float:
    """Spectator reduction factor while its probing ion drives it.

    probe carries the probing ion's effective Rabi frequency and detuning on
    the spectator mode and the elapsed time; the factor interpolates between
    the n and n+1 wavepacket reductions with the probing ion's bright
    probability.
    """
    p = two_level_population(probe)
    return (1 - p) * dw_single(eta_spectator, n) + p * dw_single(eta_spectator, n + 1)


def _default_model_dt(config: ChainConfig) -> float:
    return TWO_PI * 0.002 / float(np.max(config.qubit_rabi))


def _check_model_dt(config: ChainConfig, context_eta, model_dt: float):
    max_eff = float(np.max(np.abs(config.qubit_rabi[:, None] * context_eta)))
    if max_eff > 0 and model_dt > 0.01 * TWO_PI / max_eff:
        raise ValueError(
            f"model_dt {model_dt:.3e} s too coarse; must be <= "
            f"{0.01 * TWO_PI / max_eff:.3e} s (1% of the fastest pair cycle)"
        )


def _probe_eta(context_eta, assignment: Assignment, mode: int) -> float:
    ion = assignment.ion_of(mode)
    return float(context_eta[ion - 1, mode - 1]) if ion is not None else 0.0


def _ensemble_for(config, model: ModelId, ensemble):
    if model in (ModelId.BASELINE, ModelId.M1_DW):
        return PhononEnsemble(configs=[((0,) * config.num_modes, 1.0)])
    if ensemble is not None:
        return ensemble
    return enumerate_configs(config.nbar, config.num_modes, config.p_th)


def _spectator_flip_params(config, context_eta, assignment, detuning, mode: int, n: int):
    """(prefactor, rate) of the probing ion's bright probability on a mode."""
    ion = assignment.ion_of(mode)
    if ion is None:
        return 0.0, 1.0
    om_p = bsb_rabi(
        float(config.qubit_rabi[ion - 1]), float(context_eta[ion - 1, mode - 1]), n
    )
    d_p = float(detuning.get(mode, 0.0))
    x2 = om_p * om_p + d_p * d_p / 4
    if x2 == 0.0:
        return 0.0, 1.0
    return om_p * om_p / x2, math.sqrt(x2)


def pair_model(
    config: ChainConfig,
    assignment: Assignment,
    pair: tuple,
    model,
    times,
    *,
    context_eta=None,
    detuning=None,
    ensemble: PhononEnsemble | None = None,
    model_dt: float | None = None,
    nn_window: int = 1,
):
    """Build f(eta, delta) -> predicted populations for one probed pair.

    context_eta holds the couplings of every other pair (defaults to the
    config matrix); detuning maps modes to their drive offsets.  Everything
    that does not depend on the pair's own (eta, delta) is precomputed here,
    so the returned closure is cheap inside least-squares loops.
    """
    model = ModelId.parse(model)
    j, k = pair
    if assignment.ion_of(k) != j:
        raise ValueError(f"pair {pair} is not probed in this assignment")
    context_eta = config.eta if context_eta is None else np.asarray(context_eta, float)
    detuning = detuning or {}
    times = np.asarray(times, dtype=float)
    om_j = float(config.qubit_rabi[j - 1])
    eps = config.eps_eta
    ens = _ensemble_for(config, model, ensemble)
    nvecs = [nvec for nvec, _ in ens.configs]
    weights = np.array([w for _, w in ens.configs])
    spectators = [kp for kp in range(1, config.num_modes + 1) if kp != k]

    if model in (ModelId.BASELINE, ModelId.M1_DW, ModelId.M2_THERMAL):
        # static spectator reduction per phonon config (unity for baseline)
        red = np.ones(len(nvecs))
        if model is not ModelId.BASELINE:
            for c, nvec in enumerate(nvecs):
                for kp in spectators:
                    red[c] *= dw_average(
                        float(context_eta[j - 1, kp - 1]),
                        _probe_eta(context_eta, assignment, kp),
                        nvec[kp - 1],
                        eps,
                    )
        n_of_pair = np.array([nvec[k - 1] for nvec in nvecs])

        def curve(eta, delta):
            om = np.array([bsb_rabi(om_j, eta, int(n)) for n in n_of_pair]) * red
            x2 = om * om + delta * delta / 4
            x2 = np.where(x2 == 0.0, 1.0, x2)
            pref = weights * om * om / x2
            return pref @ np.sin(np.sqrt(x2)[:, None] * times[None, :]) ** 2

        return curve

    if model is ModelId.M3_TDDW:
        dt = model_dt if model_dt is not None else _default_model_dt(config)
        _check_model_dt(config, context_eta, dt)
        n_cfg, n_spec = len(nvecs), len(spectators)
        spec_dn = np.empty((n_cfg, n_spec))
        spec_dnp1 = np.empty((n_cfg, n_spec))
        spec_pref = np.empty((n_cfg, n_spec))
        spec_x = np.empty((n_cfg, n_spec))
        for c, nvec in enumerate(nvecs):
            for s, kp in enumerate(spectators):
                n_kp = nvec[kp - 1]
                spec_dn[c, s] = dw_single(float(context_eta[j - 1, kp - 1]), n_kp)
                spec_dnp1[c, s] = dw_single(float(context_eta[j - 1, kp - 1]), n_kp + 1)
                spec_pref[c, s], spec_x[c, s] = _spectator_flip_params(
                    config, context_eta, assignment, detuning, kp, n_kp
                )
        n_of_pair = [int(nvec[k - 1]) for nvec in nvecs]

        def curve(eta, delta):
            base = np.array([bsb_rabi(om_j, eta, n) for n in n_of_pair])
            out = np.empty((n_cfg, len(times)))
            _kernels.tddw_two_level_batch(
                base, float(delta), spec_dn, spec_dnp1, spec_pref, spec_x,
                times, dt, out,
            )
            return weights @ out

        return curve

    # nearest-neighbor models: exact propagation of the mode window
    lo = max(1, k - nn_window)
    hi = min(config.num_modes, k + nn_window)
    modes = list(range(lo, hi + 1))
    for kp in modes:
        if assignment.ion_of(kp) is None:
            raise ValueError(
                f"model {model.value} needs an assigned probe for mode {kp}"
            )
    ions = [assignment.ion_of(kp) for kp in modes]
    dt = model_dt if model_dt is not None else _default_model_dt(config)
    _check_model_dt(config, context_eta, dt)

    def curve(eta, delta):
        eta_ctx = context_eta.copy()
        eta_ctx[j - 1, k - 1] = eta
        det = dict(detuning)
        det[k] = delta
        tones = [
            (ion, float(config.mode_freq[kp - 1]) + det.get(kp, 0.0),
             float(config.qubit_rabi[ion - 1]))
            for ion, kp in zip(ions, modes)
        ]
        return nn_predict(
            config,
            probed_ion=j,
            ions=ions,
            modes=modes,
            tones=tones,
            times=times,
            ensemble=ens,
            context_eta=eta_ctx,
            assignment=assignment,
            detuning=det,
            tddw=model is ModelId.M5_TDDW_NN,
            model_dt=dt,
        )

    return curve


def nn_predict(
    config: ChainConfig,
    probed_ion: int,
    ions: list,
    modes: list,
    tones: list,
    times,
    ensemble: PhononEnsemble,
    context_eta=None,
    assignment: Assignment | None = None,
    detuning=None,
    tddw: bool = False,
    model_dt: float | None = None,
    levels: int = 4,
) -> np.ndarray:
    """Ensemble-averaged population of one ion in a reduced ion/mode window.

    ions and modes are 1-based chain labels defining the simulated window;
    tones are (ion, mu, rabi) triples (an ion may carry several).  Modes
    outside the window act through per-ion reduction factors, static by
    default or following the spectators' flip-flop when tddw is set.
    """
    context_eta = config.eta if context_eta is None else np.asarray(context_eta, float)
    detuning = detuning or {}
    assignment = assignment or Assignment(probe_ion_of_mode={})
    times = np.asarray(times, dtype=float)
    sub_eta = context_eta[np.ix_([i - 1 for i in ions], [m - 1 for m in modes])]
    sub_freq = config.mode_freq[[m - 1 for m in modes]]
    ion_pos = {ion: i for i, ion in enumerate(ions)}
    sub_tones = [(ion_pos[ion], mu, rabi) for ion, mu, rabi in tones]
    outside = [m for m in range(1, config.num_modes + 1) if m not in modes]
    dt = model_dt if model_dt is not None else _default_model_dt(config)
    cutoff = float(config.mode_freq.min()) / 2

    # phonon configs sharing a window/sector propagate as one batched call;
    # their outside-mode reduction factors differ per batch column
    batches = {}
    for nvec, w in ensemble.configs:
        n_sub = tuple(int(nvec[m - 1]) for m in modes)
        key = (tuple(_offsets_for(n_sub)), sum(n_sub))
        batches.setdefault(key, []).append((nvec, n_sub, w))

    avg = np.zeros(len(times))
    for (offsets, total), members in batches.items():
        system = _build_sector_system(
            sub_eta, sub_freq, sub_tones,
            np.array(offsets, dtype=np.int64), total, levels, cutoff,
        )
        n_groups, n_out, n_b = len(system.grp_nu), len(outside), len(members)
        env_dn = np.ones((n_groups, n_out, n_b))
        env_dnp1 = np.ones((n_groups, n_out, n_b))
        env_pref = np.zeros((n_groups, n_out, n_b))
        env_x = np.ones((n_groups, n_out, n_b))
        psi = np.zeros((system.dim, n_b), dtype=np.complex128)
        weights = np.empty(n_b)
        for b, (nvec, n_sub, w) in enumerate(members):
            psi[system.state_pos(0, n_sub), b] = 1.0
            weights[b] = w
            for g, (_, sub_ion, _, _) in enumerate(system.groups):
                ion = ions[sub_ion - 1]
                for o, m_out in enumerate(outside):
                    n_m = int(nvec[m_out - 1])
                    eta_sp = float(context_eta[ion - 1, m_out - 1])
                    if tddw:
                        env_dn[g, o, b] = dw_single(eta_sp, n_m)
                        env_dnp1[g, o, b] = dw_single(eta_sp, n_m + 1)
                        env_pref[g, o, b], env_x[g, o, b] = _spectator_flip_params(
                            config, context_eta, assignment, detuning, m_out, n_m
                        )
                    else:
                        env_dn[g, o, b] = dw_average(
                            eta_sp,
                            _probe_eta(context_eta, assignment, m_out),
                            n_m,
                            config.eps_eta,
                        )
        pops = np.zeros((len(times), len(ions), n_b))
        norms = np.zeros((len(times), n_b))
        _kernels.propagate_substeps_percol(
            psi, system.src, system.dst, system.amp, system.grp_ptr, system.grp_nu,
            env_dn, env_dnp1, env_pref, env_x,
            times, float(dt), 5, system.qmask, len(ions), pops, norms,
        )
        avg += pops[:, ion_pos[probed_ion], :] @ weights
    return avg


def predict(req: PredictionRequest) -> PopulationTrace:
    """Populations of every probed pair of the request's assignment."""
    values = {}
    assignments = {}
    for k, j in sorted(req.assignment.probe_ion_of_mode.items()):
        curve = pair_model(
            req.config,
            req.assignment,
            (j, k),
            req.model,
            req.times,
            detuning=req.detuning,
            ensemble=req.ensemble,
            model_dt=req.model_dt,
            nn_window=req.nn_window,
        )
        vals = curve(
            float(req.config.eta[j - 1, k - 1]), float(req.detuning.get(k, 0.0))
        )
        if np.any(vals < -1e-9) or np.any(vals > 1.0 + 1e-9):
            raise AssertionError(f"model {req.model} left [0,1] for pair {(j, k)}")
        values[(j, k)] = np.clip(vals, 0.0, 1.0)
        assignments[(j, k)] = req.assignment
    return PopulationTrace(
        kind="time", grid=req.times, values=values, assignments=assignments
    )
