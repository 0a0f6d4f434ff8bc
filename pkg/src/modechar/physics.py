"""Closed-form single-pair blue-sideband physics.

Laguerre polynomials, sideband Rabi frequencies at finite phonon number,
Debye-Waller reduction factors, and the driven two-level evolution of one
(ion, mode) pair.  All angular frequencies are in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TwoLevelParams",
    "laguerre",
    "bsb_rabi",
    "dw_single",
    "dw_average",
    "two_level_population",
    "two_level_unitary",
]


@dataclass(frozen=True)
class TwoLevelParams:
    """Parameters of one resonance: effective Rabi frequency, detuning, duration."""

    eff_rabi: float       # rad/s
    detuning: float       # rad/s
    duration: float       # s

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")


def laguerre(n: int, alpha: int, x: float) -> float:
    """Generalized Laguerre polynomial L_n^alpha(x) by the three-term recurrence.

    The recurrence (k+1) L_{k+1} = (2k+1+alpha-x) L_k - (k+alpha) L_{k-1}
    is numerically stable for the small orders used here (n <= ~10),
    unlike the closed form with factorials.
    """
    if n < 0:
        raise ValueError("order n must be >= 0")
    if n == 0:
        return 1.0
    lkm1 = 1.0
    lk = 1.0 + alpha - x
    for k in range(1, n):
        lkm1, lk = lk, ((2 * k + 1 + alpha - x) * lk - (k + alpha) * lkm1) / (k + 1)
    return lk


def bsb_rabi(omega_j: float, eta: float, n: int) -> float:
    """Blue-sideband Rabi frequency between |0,n> and |1,n+1>.

    Magnitude convention: the relative sign of eta only enters through
    multi-mode matrix elements in the full simulator.
    """
    if n < 0:
        raise ValueError("phonon number n must be >= 0")
    e2 = eta * eta
    return omega_j * abs(eta / math.sqrt(n + 1) * math.exp(-e2 / 2) * laguerre(n, 1, e2))


def dw_single(eta: float, n: int) -> float:
    """Debye-Waller factor D(n) = exp(-eta^2/2) L_n(eta^2) of one spectator mode."""
    e2 = eta * eta
    ln = laguerre(n, 0, e2)
    if ln <= 0.0:
        raise ValueError(
            f"outside magnitude-factor regime: L_{n}({e2:.3g}) = {ln:.3g} <= 0"
        )
    return math.exp(-e2 / 2) * ln


def dw_average(
    eta_spectator: float, eta_probe_of_spectator: float, n: int, eps_eta: float
) -> float:
    """Average DW factor of a spectator mode that is itself being probed.

    While the spectator's own probing ion drives it, the mode spends half
    the time with one extra phonon; if that ion sits at a node the mode is
    never excited and the plain D(n) applies.
    """
    if abs(eta_probe_of_spectator) >= eps_eta:
        return 0.5 * (dw_single(eta_spectator, n) + dw_single(eta_spectator, n + 1))
    return dw_single(eta_spectator, n)


def two_level_population(p: TwoLevelParams) -> float:
    """Bright-state probability after driving |0,n> <-> |1,n+1> for a time t."""
    om, dl, t = p.eff_rabi, p.detuning, p.duration
    x2 = om * om + dl * dl / 4
    if x2 == 0.0:
        return 0.0
    return (om * om / x2) * math.sin(math.sqrt(x2) * t) ** 2


def two_level_unitary(p: TwoLevelParams) -> np.ndarray:
    """2x2 evolution operator on the (|0,n>, |1,n+1>) pair.

    Returns [[u11, u12], [-conj(u12), conj(u11)]]; unitary to ~1e-15.
    """
    om, dl, t = p.eff_rabi, p.detuning, p.duration
    x = math.sqrt(om * om + dl * dl / 4)
    if x == 0.0:
        sinc = t          # sin(x t)/x -> t
        cosx = 1.0
    else:
        sinc = math.sin(x * t) / x
        cosx = math.cos(x * t)
    ph = complex(math.cos(dl * t / 2), -math.sin(dl * t / 2))
    u11 = ph * complex(cosx, dl / 2 * sinc)
    u12 = ph * om * sinc
    return np.array([[u11, u12], [-np.conj(u12), np.conj(u11)]], dtype=np.complex128)
