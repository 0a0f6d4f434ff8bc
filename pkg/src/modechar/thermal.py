"""Thermal initial-state handling.

The modes are assumed thermal with a common mean phonon number nbar; the
per-mode distribution is the geometric (Bose-Einstein) law
p(n) = nbar^n / (1+nbar)^(n+1).  Multi-mode phonon vectors are either
enumerated exhaustively above a probability threshold or sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PhononEnsemble",
    "thermal_pmf",
    "enumerate_configs",
    "ensemble_average",
    "sample_configs",
]


@dataclass(frozen=True)
class PhononEnsemble:
    """Weighted list of initial phonon-number vectors.

    configs: list of (nvec, weight) with nvec a tuple of ints.  Weights are
    positive and sum to at most 1 (the thermal tail may be truncated).
    source is "enumerated" or "sampled".
    """

    configs: list = field(default_factory=list)
    source: str = "enumerated"

    def __post_init__(self):
        for nvec, w in self.configs:
            if w <= 0:
                raise ValueError(f"nonpositive weight {w} for config {nvec}")
        total = self.total_weight()
        if total > 1 + 1e-12:
            raise ValueError(f"weights sum to {total} > 1")

    def total_weight(self) -> float:
        return float(sum(w for _, w in self.configs))

    def __len__(self) -> int:
        return len(self.configs)


def thermal_pmf(nbar: float, n: int) -> float:
    """Probability of phonon number n in a thermal state with mean nbar."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if n < 0:
        raise ValueError("n must be >= 0")
    if nbar == 0.0:
        return 1.0 if n == 0 else 0.0
    return nbar**n / (1 + nbar) ** (n + 1)


def enumerate_configs(
    nbar: float, num_modes: int, p_th: float, max_configs: int = 10**6
) -> PhononEnsemble:
    """All phonon vectors whose product probability exceeds p_th.

    Depth-first search with per-prefix pruning; valid because the pmf is
    strictly decreasing in n, so extending any prefix with larger phonon
    numbers can only lower the product.
    """
    if not (0 < p_th <= 1):
        raise ValueError("p_th must be in (0, 1]")
    if num_modes < 1:
        raise ValueError("num_modes must be >= 1")

    p0 = thermal_pmf(nbar, 0)
    configs = []

    def walk(prefix, w):
        rem = num_modes - len(prefix)
        if rem == 0:
            configs.append((tuple(prefix), w))
            if len(configs) > max_configs:
                raise RuntimeError(
                    f"enumeration exceeded {max_configs} configs; "
                    "raise p_th or use sample_configs"
                )
            return
        n = 0
        while True:
            wn = w * thermal_pmf(nbar, n)
            if wn * p0 ** (rem - 1) <= p_th:
                break
            prefix.append(n)
            walk(prefix, wn)
            prefix.pop()
            n += 1

    walk([], 1.0)
    return PhononEnsemble(configs=configs, source="enumerated")


def ensemble_average(ensemble: PhononEnsemble, per_config) -> float:
    """Weighted sum of per-config values over the ensemble.

    per_config is a mapping or callable from phonon vector to a value.
    """
    get = per_config.__getitem__ if hasattr(per_config, "__getitem__") else per_config
    total = 0.0
    for nvec, w in ensemble.configs:
        try:
            v = get(nvec)
        except (KeyError, IndexError) as exc:
            raise KeyError(f"missing per-config value for {nvec}") from exc
        total += w * v
    return total


def sample_configs(
    nbar: float, num_modes: int, count: int, seed: int
) -> PhononEnsemble:
    """Draw count i.i.d. phonon vectors and return them with multiplicity weights."""
    if count <= 0:
        raise ValueError("count must be > 0")
    rng = np.random.default_rng(seed)
    if nbar == 0.0:
        draws = np.zeros((count, num_modes), dtype=np.int64)
    else:
        # geometric law with support {0, 1, ...}: p(n) = (1-q) q^n, q = nbar/(1+nbar)
        q = nbar / (1 + nbar)
        u = rng.random((count, num_modes))
        draws = np.floor(np.log1p(-u) / np.log(q)).astype(np.int64)
    uniq, counts = np.unique(draws, axis=0, return_counts=True)
    configs = [
        (tuple(int(n) for n in nvec), c / count) for nvec, c in zip(uniq, counts)
    ]
    return PhononEnsemble(configs=configs, source="sampled")
