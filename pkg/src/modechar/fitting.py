"""Mode-parameter estimation from measured population traces.

The full coupling matrix is fitted by an iterative routine: each round
freezes every pair's coupling at the previous round's estimate, then
re-fits every (ion, mode) pair independently as a two-parameter least
squares in (eta, delta).  Rounds repeat until no coupling moves by more
than conv_eps.  Pair fits within a round are independent (Jacobi-style
updates), so results do not depend on solve order and the round can run
in parallel.

Also here: single-point inversion for the fixed-duration protocol and
peak-based mode-frequency estimation from detuning scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import thread_map
from .chain import ChainConfig
from .models import ModelId, NN_MODELS, pair_model
from .trace import PopulationTrace

__all__ = [
    "FitOptions",
    "FitResult",
    "InsensitivePairError",
    "InversionResult",
    "fit_timescan",
    "fit_pair",
    "invert_single_point",
    "estimate_mode_freq",
]


class InsensitivePairError(ValueError):
    """Populations of a pair never rise above the sensitivity floor."""

    def __init__(self, pair, ceiling):
        self.pair = pair
        super().__init__(
            f"insensitive pair {pair}: all populations below {ceiling} "
            "(coupling at or near a node)"
        )


@dataclass
class FitOptions:
    eta_init: np.ndarray = None        # (N, N') initial coupling guesses
    model: ModelId = ModelId.M2_THERMAL
    conv_eps: float = 1e-6
    max_rounds: int = 10
    max_iter: int = 40                 # Gauss-Newton iterations per pair fit
    solver_tol: float = 1e-14          # relative residual-improvement floor
    allow_sign_fit: bool = False       # free sign (meaningful for NN models)
    fix_delta: bool = False            # hold detuning at 0 (known frequencies)
    model_dt: float | None = None
    insensitive: str = "raise"         # "raise" | "hold"
    min_population: float = 0.02

    def __post_init__(self):
        self.model = ModelId.parse(self.model)
        if self.eta_init is not None:
            self.eta_init = np.array(self.eta_init, dtype=float)
        if self.conv_eps <= 0 or self.max_rounds < 1:
            raise ValueError("conv_eps must be > 0 and max_rounds >= 1")
        if self.insensitive not in ("raise", "hold"):
            raise ValueError("insensitive must be 'raise' or 'hold'")


@dataclass
class FitResult:
    eta_est: np.ndarray
    delta_est: np.ndarray
    rounds_used: int
    converged: bool
    rss: dict = field(default_factory=dict)     # pair -> residual sum of squares
    flags: dict = field(default_factory=dict)   # pair -> diagnostic string


def _gauss_newton(resid, x0, scales, max_iter, solver_tol, steps=None, lo=None):
    """Damped Gauss-Newton with finite-difference Jacobian.

    resid maps a parameter vector to the residual vector.  scales set the
    movement scale per parameter; steps the finite-difference increments
    (defaults to 1e-6 of scale); lo optional lower bounds (steps switch to
    forward differences at a bound, and iterates are projected onto it).
    Columns are equilibrated before the normal-equation solve, and a
    numerically dead column (a parameter the data does not constrain) is
    held for that iteration.  Returns (x, rss, flag).
    """
    x = np.array(x0, dtype=float)
    scales = np.asarray(scales, dtype=float)
    steps = 1e-6 * scales if steps is None else np.asarray(steps, dtype=float)
    lo = np.full_like(x, -np.inf) if lo is None else np.asarray(lo, dtype=float)
    r = resid(x)
    rss = float(r @ r)
    flag = ""
    for _ in range(max_iter):
        jac = np.empty((len(r), len(x)))
        for p in range(len(x)):
            h = max(abs(x[p]) * 1e-6, steps[p])
            xp = x.copy()
            xp[p] += h
            xm = x.copy()
            if x[p] - h >= lo[p]:
                xm[p] -= h
                jac[:, p] = (resid(xp) - resid(xm)) / (2 * h)
            else:
                jac[:, p] = (resid(xp) - r) / h
        colnorm = np.sqrt((jac**2).sum(axis=0))
        if not np.all(np.isfinite(colnorm)):
            flag = "singular_jacobian"
            break
        active = colnorm > 1e-12 * max(float(colnorm.max()), 1e-300)
        if not active.any():
            flag = "singular_jacobian"
            break
        ja = jac[:, active] / colnorm[active]
        a = ja.T @ ja
        g = ja.T @ r
        if np.linalg.cond(a) > 1e12:
            flag = "singular_jacobian"
            break
        step = np.zeros_like(x)
        step[active] = -np.linalg.solve(a, g) / colnorm[active]
        alpha = 1.0
        improved = False
        for _ in range(25):
            x_new = np.maximum(x + alpha * step, lo)
            r_new = resid(x_new)
            rss_new = float(r_new @ r_new)
            if rss_new < rss:
                improved = True
                break
            alpha /= 2
        if not improved:
            break
        moved = np.max(np.abs(x_new - x) / np.maximum(np.abs(x), scales))
        gain = (rss - rss_new) / max(rss, 1e-300)
        x, r, rss = x_new, r_new, rss_new
        if moved < 1e-12 or gain < solver_tol:
            break
    return x, rss, flag


def _golden_section(fun, lo, hi, tol=1e-12, max_iter=200):
    """Minimize a unimodal scalar function on [lo, hi]."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) < tol * (1 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (a + b) / 2


def fit_pair(times, pops, curve, eta0, opts: FitOptions, pair=(0, 0)):
    """Least-squares fit of one pair's (eta, delta) to its population trace.

    curve is the model closure from pair_model; eta0 the initial coupling
    guess.  The detuning is fitted through its square (it enters the
    two-level response only quadratically, so the magnitude is what the
    data constrains); delta_est is reported as a magnitude.  For the
    sign-blind models the fitted eta keeps the sign of eta0.
    Returns (eta, delta, rss, flag).
    """
    times = np.asarray(times, dtype=float)
    pops = np.asarray(pops, dtype=float)
    if len(np.unique(times)) < 3:
        raise ValueError("insufficient distinct points: need >= 3 timestamps")
    if np.max(pops) < opts.min_population:
        raise InsensitivePairError(pair, opts.min_population)

    eta_scale = max(abs(eta0), 1e-4)
    # a trace of length t resolves detunings of order pi/t
    dsq_scale = (math.pi / max(times.max(), 1e-12)) ** 2

    # coarse-to-fine in time: the coupling sets an oscillation frequency, so
    # the full trace has side minima spaced ~pi/(Omega t_max) in eta; seeding
    # from a fit of the early quarter (4x wider basin) keeps offset guesses
    # of tens of percent inside the right basin
    stages = [slice(None)]
    if len(times) >= 8:
        stages.insert(0, slice(0, max(3, len(times) // 4)))

    eta_fit = eta0
    if opts.fix_delta:
        for stage in stages:
            def resid(x, stage=stage):
                return curve(x[0], 0.0)[stage] - pops[stage]

            x, rss, flag = _gauss_newton(
                resid, [eta_fit], [eta_scale], opts.max_iter, opts.solver_tol
            )
            eta_fit = float(x[0])
        delta_fit = 0.0
    else:
        dsq_fit = 0.0
        for stage in stages:
            def resid(x, stage=stage):
                return curve(x[0], math.sqrt(x[1]))[stage] - pops[stage]

            x, rss, flag = _gauss_newton(
                resid,
                [eta_fit, dsq_fit],
                [eta_scale, dsq_scale],
                opts.max_iter,
                opts.solver_tol,
                steps=[eta_scale * 1e-6, dsq_scale * 1e-3],
                lo=[-math.inf, 0.0],
            )
            eta_fit, dsq_fit = float(x[0]), max(float(x[1]), 0.0)
        delta_fit = math.sqrt(dsq_fit)

    if flag == "singular_jacobian":
        # one-dimensional rescue: coupling magnitude on a narrow bracket
        # around the initial guess, detuning pinned at zero
        def rss1(u):
            d = curve(u, 0.0) - pops
            return float(d @ d)

        u0 = abs(eta0) if eta0 != 0 else eta_scale
        eta_fit = _golden_section(rss1, 0.8 * u0, 1.25 * u0)
        delta_fit = 0.0
        rss = rss1(eta_fit)
        flag = "golden_fallback"

    if not (opts.allow_sign_fit and opts.model in NN_MODELS):
        sign = math.copysign(1.0, eta0) if eta0 != 0 else math.copysign(1.0, eta_fit)
        eta_fit = sign * abs(eta_fit)
    return eta_fit, delta_fit, rss, flag


def fit_timescan(data: PopulationTrace, config: ChainConfig, opts: FitOptions) -> FitResult:
    """Iterative whole-matrix fit of couplings (and detunings) to time scans.

    data must hold a trace for every pair to be fitted, each at least three
    distinct timestamps, with its measurement assignment attached.  Round r
    evaluates every pair's model with all other couplings frozen at round
    r-1 and solves the pairs independently.
    """
    if data.kind != "time":
        raise ValueError("fit_timescan needs a time-scan trace")
    if opts.eta_init is None:
        raise ValueError("FitOptions.eta_init is required")
    pairs = data.pairs()
    if not pairs:
        raise ValueError("empty trace")

    eta_ctx = opts.eta_init.copy()
    delta_ctx = np.zeros_like(eta_ctx)
    rss = {}
    flags = {}
    converged = False
    rounds_used = 0
    def solve_one(pair):
        j, k = pair
        assignment = data.assignments[pair]
        det_ctx = {
            kp: float(delta_ctx[assignment.ion_of(kp) - 1, kp - 1])
            for kp in assignment.probe_ion_of_mode
        }
        curve = pair_model(
            config,
            assignment,
            pair,
            opts.model,
            data.grid,
            context_eta=eta_ctx,
            detuning=det_ctx,
            model_dt=opts.model_dt,
        )
        try:
            return fit_pair(
                data.grid,
                data.values[pair],
                curve,
                float(eta_ctx[j - 1, k - 1]),
                opts,
                pair=pair,
            )
        except InsensitivePairError:
            if opts.insensitive == "raise":
                raise
            return None

    for r in range(1, opts.max_rounds + 1):
        rounds_used = r
        eta_new = eta_ctx.copy()
        delta_new = delta_ctx.copy()
        for (j, k), solved in zip(pairs, thread_map(solve_one, pairs)):
            if solved is None:
                flags[(j, k)] = "insensitive_held"
                continue
            eta_fit, delta_fit, rss_jk, flag = solved
            eta_new[j - 1, k - 1] = eta_fit
            delta_new[j - 1, k - 1] = delta_fit
            rss[(j, k)] = rss_jk
            if flag:
                flags[(j, k)] = flag
        moved = float(np.max(np.abs(eta_new - eta_ctx)))
        eta_ctx, delta_ctx = eta_new, delta_new
        if moved <= opts.conv_eps:
            converged = True
            break
    return FitResult(
        eta_est=eta_ctx,
        delta_est=delta_ctx,
        rounds_used=rounds_used,
        converged=converged,
        rss=rss,
        flags=flags,
    )


@dataclass(frozen=True)
class InversionResult:
    eta: float
    sensitivity: float    # |dP/d eta| at the solution


def invert_single_point(
    pop: float,
    tau0: float,
    curve,
    eta0: float,
    guard=(0.02, 0.98),
) -> InversionResult:
    """Solve P(tau0; eta) = pop on the monotone branch containing eta0.

    curve is a pair_model closure; the detuning is pinned at zero (a single
    population cannot constrain coupling and detuning at once).  The sign of
    the result is inherited from eta0.
    """
    if not (guard[0] < pop < guard[1]):
        raise ValueError(
            f"insensitive operating point: population {pop:.3g} outside "
            f"({guard[0]}, {guard[1]})"
        )
    u0 = abs(eta0)
    if u0 == 0:
        raise ValueError("eta0 must be nonzero to select a branch")

    def p_of(u):
        return float(curve(u, 0.0)[0])

    # locate the monotone branch of P(|eta|) that contains |eta0|
    grid = np.linspace(0.0, 2.5 * u0, 801)
    vals = np.array([p_of(u) for u in grid])
    slopes = np.sign(np.diff(vals))
    slopes[slopes == 0] = 1
    turns = [i + 1 for i in range(len(slopes) - 1) if slopes[i] != slopes[i + 1]]
    bounds = [0] + turns + [len(grid) - 1]
    i0 = int(np.argmin(np.abs(grid - u0)))
    lo_i, hi_i = bounds[0], bounds[-1]
    for a_i, b_i in zip(bounds, bounds[1:]):
        if a_i <= i0 <= b_i:
            lo_i, hi_i = a_i, b_i
            break
    u_lo, u_hi = float(grid[lo_i]), float(grid[hi_i])
    p_lo, p_hi = p_of(u_lo), p_of(u_hi)
    if not (min(p_lo, p_hi) <= pop <= max(p_lo, p_hi)):
        raise ValueError(
            f"no root on the monotone branch around |eta0|={u0:.4g}: "
            f"branch spans [{p_lo:.4g}, {p_hi:.4g}], target {pop:.4g}"
        )
    rising = p_hi >= p_lo
    for _ in range(200):
        mid = (u_lo + u_hi) / 2
        if (p_of(mid) < pop) == rising:
            u_lo = mid
        else:
            u_hi = mid
        if u_hi - u_lo < 1e-14 * (1 + u_hi):
            break
    u = (u_lo + u_hi) / 2
    h = max(u, 1e-6) * 1e-5
    sens = abs(p_of(u + h) - p_of(max(u - h, 0.0))) / (2 * h)
    return InversionResult(eta=math.copysign(u, eta0), sensitivity=sens)


def estimate_mode_freq(scan: PopulationTrace, noise_floor: float = 0.0) -> dict:
    """Peak position of each mode's detuning scan, parabolically refined.

    Returns {mode: (detuning_estimate, uncertainty)} with the uncertainty
    set to half the grid spacing.  Raises if a scan shows no resolvable
    peak above noise_floor.
    """
    if scan.kind != "detuning":
        raise ValueError("estimate_mode_freq needs a detuning-scan trace")
    grid = scan.grid
    if len(grid) < 3:
        raise ValueError("need at least 3 detunings per mode")
    spacing = float(np.mean(np.diff(grid)))
    out = {}
    for (j, k), vals in sorted(scan.values.items()):
        if float(np.max(vals) - np.min(vals)) <= noise_floor:
            raise ValueError(f"peak not resolved for mode {k} (flat scan)")
        i = int(np.argmax(vals))
        if 0 < i < len(grid) - 1:
            denom = vals[i - 1] - 2 * vals[i] + vals[i + 1]
            shift = 0.0 if denom == 0 else 0.5 * (vals[i - 1] - vals[i + 1]) / denom
            shift = float(np.clip(shift, -0.5, 0.5))
        else:
            shift = 0.0
        out[k] = (float(grid[i] + shift * spacing), abs(spacing) / 2)
    return out
