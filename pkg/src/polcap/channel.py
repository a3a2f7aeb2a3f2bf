"""Collective depolarization of photon pairs in a birefringent fiber.

Three channel pictures are provided:

* ``twirl_exact`` -- both photons see the same Haar-random unitary.  The
  output is the Werner-type state ``F*P_s + (1-F)*P_t/3`` where ``F`` is the
  singlet weight of the input.
* ``twirl_monte_carlo`` -- sampled average over ``U x U'`` with ``U'`` a
  slightly decorrelated copy of ``U``.
* ``scramble_single_use`` -- independent scrambling of each photon, which
  leaves nothing but the maximally mixed state.

Decorrelation model
-------------------
``U' = U @ dU`` where ``dU`` is a Brownian rotation on SU(2): the heat-kernel
distribution whose small-angle limit is ``exp(-i w.sigma/2)`` with each
Cartesian component of the rotation vector ``w`` Gaussian with standard
deviation ``s``.  Here ``s = decorrelation_angle_std * min(1,
pulse_separation / coherence_time)``.  Writing the SU(2) element as
``cos(a) - i sin(a) n.sigma`` (``a`` is half the Poincare-sphere rotation
angle), ``a`` has density on ``[0, pi]``::

    p(a) ~ sin(a) * sum_k (a + 2 pi k) * exp(-2 (a + 2 pi k)^2 / s^2)
         ~ sin(a) * sum_n n sin(n a) exp(-(n^2 - 1) s^2 / 8)

The image sum is used for small ``s`` and the character series for large
``s``, where the image terms cancel catastrophically.

Unlike a wrapped Gaussian angle this tends to the Haar measure as ``s``
grows, so large ``s`` reproduces independent scrambling of the two photons.
The mean singlet weight retained by a singlet input is
``(1 + 3 exp(-s^2)) / 4``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .qstate import (
    SINGLET_PROJECTOR,
    TRIPLET_PROJECTOR,
    TwoQubitState,
    as_state,
    haar_su2,
    singlet_fidelity,
)

REGIMES = ("exact-twirl", "monte-carlo")
# Sample indices are split into fixed blocks; each block has its own seed so
# that sums are identical for any number of worker threads.
MC_BLOCK = 4096
# above this std the half-angle density uses the character series
SERIES_SWITCH_STD = 2.0


class ChannelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelModel:
    regime: str = "exact-twirl"
    coherence_time: float = 1e-3
    pulse_separation: float = 6e-9
    decorrelation_angle_std: float = 0.0
    mc_samples: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ChannelConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if not self.coherence_time > 0:
            raise ChannelConfigError("coherence_time must be > 0")
        if not self.pulse_separation >= 0:
            raise ChannelConfigError("pulse_separation must be >= 0")
        if not self.decorrelation_angle_std >= 0:
            raise ChannelConfigError("decorrelation_angle_std must be >= 0")
        if int(self.mc_samples) != self.mc_samples or self.mc_samples < 1:
            raise ChannelConfigError("mc_samples must be a positive integer")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ChannelConfigError("rng_seed must be a 64-bit unsigned integer")

    @property
    def effective_angle_std(self) -> float:
        ratio = min(1.0, self.pulse_separation / self.coherence_time)
        return self.decorrelation_angle_std * ratio


@dataclass(frozen=True, eq=False)
class TwirlResult:
    state: TwoQubitState
    singlet_weight: float
    sample_count: int


def _werner(f: float) -> np.ndarray:
    return f * SINGLET_PROJECTOR + (1.0 - f) * TRIPLET_PROJECTOR / 3.0


def twirl_exact(rho) -> TwirlResult:
    """Average over all collective unitaries ``U x U`` with Haar ``U``."""
    f = singlet_fidelity(rho)
    return TwirlResult(TwoQubitState(_werner(f)), f, 1)


def scramble_single_use(rho) -> TwoQubitState:
    """Independent Haar scrambling of each photon; always the maximally mixed state."""
    as_state(rho)
    return TwoQubitState(np.eye(4) / 4)


def brownian_half_angle_density(grid: np.ndarray, angle_std: float) -> np.ndarray:
    """Unnormalized density of the SU(2) half-angle for a Brownian rotation."""
    s2 = float(angle_std) ** 2
    if angle_std > SERIES_SWITCH_STD:
        # character expansion: sum_n n sin(n a) exp(-(n^2 - 1) s^2 / 8)
        nmax = int(np.ceil(np.sqrt(8.0 * 50.0 / s2 + 1.0))) + 2
        n = np.arange(1, nmax + 1)[:, None]
        series = np.sum(n * np.sin(n * grid[None, :]) * np.exp(-(n**2 - 1) * s2 / 8.0), axis=0)
    else:
        # image sum, rapidly convergent for narrow distributions
        kmax = int(np.ceil(angle_std / (2 * np.pi) * 6)) + 2
        k = np.arange(-kmax, kmax + 1)[:, None]
        shifted = grid[None, :] + 2 * np.pi * k
        series = np.sum(shifted * np.exp(-2.0 * shifted**2 / s2), axis=0)
    return np.clip(np.sin(grid) * series, 0.0, None)


def _half_angle_sampler(angle_std: float, n_grid: int = 8193):
    top = min(np.pi, 12.0 * angle_std)
    grid = np.linspace(0.0, top, n_grid)
    pdf = brownian_half_angle_density(grid, angle_std)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))))
    cdf /= cdf[-1]
    return lambda u: np.interp(u, cdf, grid)


def brownian_su2(rng: np.random.Generator, size: int, angle_std: float, sampler=None) -> np.ndarray:
    """Draw ``size`` SU(2) matrices from the Brownian-rotation distribution."""
    if angle_std == 0:
        return np.broadcast_to(np.eye(2, dtype=complex), (size, 2, 2)).copy()
    sampler = sampler or _half_angle_sampler(angle_std)
    a = sampler(rng.random(size))
    n = rng.standard_normal((size, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    c, s = np.cos(a), np.sin(a)
    out = np.empty((size, 2, 2), dtype=complex)
    out[:, 0, 0] = c - 1j * s * n[:, 2]
    out[:, 0, 1] = -1j * s * n[:, 0] - s * n[:, 1]
    out[:, 1, 0] = -1j * s * n[:, 0] + s * n[:, 1]
    out[:, 1, 1] = c + 1j * s * n[:, 2]
    return out


def _block_sum(rho: np.ndarray, seed: int, block: int, size: int, angle_std: float, sampler) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    u1 = haar_su2(rng, size)
    if angle_std > 0:
        u2 = u1 @ brownian_su2(rng, size, angle_std, sampler)
    else:
        u2 = u1
    k = np.einsum("nij,nkl->nikjl", u1, u2).reshape(size, 4, 4)
    out = np.einsum("nab,bc,ndc->ad", k, rho, k.conj(), optimize=True)
    return out


def twirl_monte_carlo(rho, model: ChannelModel, workers: int = 1) -> TwirlResult:
    """Sampled average of ``(U x U') rho (U x U')^dag`` over ``model.mc_samples`` draws.

    Results depend only on ``model.rng_seed`` and ``model.mc_samples``, not
    on ``workers``.
    """
    if model.regime != "monte-carlo":
        raise ChannelConfigError(f"twirl_monte_carlo needs regime 'monte-carlo', got {model.regime!r}")
    m = as_state(rho).matrix
    n = int(model.mc_samples)
    std = model.effective_angle_std
    sampler = _half_angle_sampler(std) if std > 0 else None
    blocks = [(b, min(MC_BLOCK, n - b * MC_BLOCK)) for b in range((n + MC_BLOCK - 1) // MC_BLOCK)]

    def run(item):
        b, size = item
        return _block_sum(m, int(model.rng_seed), b, size, std, sampler)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(run, blocks))
    else:
        partial = [run(item) for item in blocks]
    total = np.zeros((4, 4), dtype=complex)
    for p in partial:
        total += p
    avg = total / n
    state = TwoQubitState._unchecked(avg)
    return TwirlResult(state, singlet_fidelity(state), n)


def apply_channel(rho, model: ChannelModel, workers: int = 1) -> TwirlResult:
    if model.regime == "exact-twirl":
        return twirl_exact(rho)
    return twirl_monte_carlo(rho, model, workers=workers)
