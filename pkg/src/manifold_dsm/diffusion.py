"""Variance-exploding forward process, training targets, and reverse sampler.

The forward process adds Gaussian noise of growing scale, x_t = x0 + sigma_t
eps.  Training regresses a network against a residual target:

* plain denoising (DSM): target (x0 - xt)/sigma, loss ||sigma f - target||^2;
* base-score-adapted (MAD): the known uniform-measure score is subtracted, so
  the network only learns the correction delta = s - s_base, with target
  (x0 - xt)/sigma - sigma s_base(xt, sigma).

Both residual targets are built here so the identity dsm - mad =
sigma s_base holds arithmetically, not just in exact math.

Sampling integrates the reverse SDE with predictor-only Euler-Maruyama over a
descending geometric sigma grid, stepping x by (sigma_i^2 - sigma_{i+1}^2)
score(x, sigma_i) plus matched noise; g^2 dt telescopes to sigma^2
differences so no time variable appears anywhere.  Drift statistics (how far
samples land from the manifold) are recorded before any terminal projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basescore import base_score
from .errors import TrainingDivergedError
from .geometry import DiscreteSet, Manifold, project

__all__ = [
    "NoiseSchedule",
    "TrainTarget",
    "DriftStats",
    "SampleBatch",
    "perturb",
    "dsm_target",
    "mad_target",
    "reverse_sample",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Descending geometric noise grid sigma_max = s_1 > ... > s_N = sigma_min."""

    sigma_min: float
    sigma_max: float
    num_scales: int
    sigmas: np.ndarray

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.num_scales < 2:
            raise ValueError("need at least 2 noise scales")
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.shape != (self.num_scales,):
            raise ValueError("sigmas length must equal num_scales")
        if s[0] != self.sigma_max or s[-1] != self.sigma_min:
            raise ValueError("sigmas must run from sigma_max down to sigma_min")
        ratios = s[1:] / s[:-1]
        if np.any(ratios >= 1.0) or np.max(np.abs(ratios - ratios[0])) > 1e-12:
            raise ValueError("sigmas must be strictly descending with constant ratio")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def geometric(cls, sigma_min: float, sigma_max: float, num_scales: int) -> "NoiseSchedule":
        sigmas = np.geomspace(sigma_max, sigma_min, num_scales)
        # geomspace endpoints can miss the exact inputs by an ulp
        sigmas[0] = sigma_max
        sigmas[-1] = sigma_min
        return cls(float(sigma_min), float(sigma_max), int(num_scales), sigmas)


@dataclass(frozen=True)
class TrainTarget:
    """One regression target: the vector inside the norm of the active loss."""

    x0: np.ndarray
    xt: np.ndarray
    sigma: np.ndarray
    residual_target: np.ndarray


@dataclass(frozen=True)
class DriftStats:
    """Pre-projection distance-to-manifold summary of a sample batch."""

    mean: float
    max: float


@dataclass(frozen=True)
class SampleBatch:
    samples: np.ndarray
    drift: DriftStats
    projected: bool


def perturb(x0, sigma, rng: np.random.Generator) -> np.ndarray:
    """x0 + sigma * eps with standard normal eps; sigma = 0 returns x0 exactly."""
    x0 = np.asarray(x0, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0.0):
        raise ValueError("sigma must be nonnegative")
    eps = rng.standard_normal(x0.shape)
    return x0 + sigma[..., None] * eps if sigma.ndim else x0 + sigma * eps


def _residual(x0, xt, sigma):
    x0 = np.asarray(x0, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if x0.shape != xt.shape:
        raise ValueError("x0 and xt shapes must match")
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0.0):
        raise ValueError("sigma must be positive")
    sig = sigma[..., None] if sigma.ndim else sigma
    return x0, xt, sigma, sig, (x0 - xt) / sig


def dsm_target(x0, xt, sigma) -> TrainTarget:
    """Denoising target (x0 - xt)/sigma; loss term ||sigma f(xt) - target||^2."""
    x0, xt, sigma, _, res = _residual(x0, xt, sigma)
    return TrainTarget(x0=x0, xt=xt, sigma=sigma, residual_target=res)


def mad_target(x0, xt, sigma, manifold: Manifold) -> TrainTarget:
    """Correction target (x0 - xt)/sigma - sigma * s_base(xt, sigma)."""
    x0, xt, sigma, sig, res = _residual(x0, xt, sigma)
    res = res - sig * base_score(xt, sigma, manifold)
    return TrainTarget(x0=x0, xt=xt, sigma=sigma, residual_target=res)


def _drift(x: np.ndarray, manifold: Manifold) -> DriftStats:
    if x.shape[0] == 0:
        return DriftStats(mean=float("nan"), max=float("nan"))
    if isinstance(manifold, DiscreteSet):
        d = np.min(np.linalg.norm(x[:, None, :] - manifold.points, axis=-1), axis=1)
    else:
        d = np.abs(1.0 - np.linalg.norm(x, axis=1))
    return DriftStats(mean=float(np.mean(d)), max=float(np.max(d)))


def reverse_sample(
    score_field: Callable[[np.ndarray, float], np.ndarray],
    schedule: NoiseSchedule,
    n: int,
    manifold: Manifold,
    rng: np.random.Generator,
    project_final: bool = False,
) -> SampleBatch:
    """Integrate the reverse SDE from sigma_max down to sigma_min.

    Starts at x ~ Normal(0, sigma_max^2 I) and applies, for each consecutive
    pair (s_i, s_{i+1}), the Euler-Maruyama step

        x <- x + (s_i^2 - s_{i+1}^2) score_field(x, s_i)
               + sqrt(s_i^2 - s_{i+1}^2) eps.

    Noise is drawn as one (n, dim) block per step in sample order; any future
    batch-parallel split must keep that layout for results to be unchanged.
    Drift statistics are recorded before the optional terminal projection.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    dim = manifold.ambient_dim
    x = schedule.sigma_max * rng.standard_normal((n, dim))
    s = schedule.sigmas
    if n > 0:
        for i in range(schedule.num_scales - 1):
            sc = np.asarray(score_field(x, float(s[i])), dtype=np.float64)
            if sc.shape != x.shape or not np.all(np.isfinite(sc)):
                bad = 0.0 if sc.shape != x.shape else float(
                    np.linalg.norm(x[~np.all(np.isfinite(sc), axis=1)][0])
                )
                raise TrainingDivergedError(
                    f"non-finite score at sigma={s[i]:g} (state norm {bad:g})",
                    sigma=float(s[i]),
                    state_norm=bad,
                )
            dv = float(s[i] ** 2 - s[i + 1] ** 2)
            x = x + dv * sc + np.sqrt(dv) * rng.standard_normal((n, dim))
        if not np.all(np.isfinite(x)):
            raise TrainingDivergedError(
                f"non-finite state after the final step at sigma={s[-1]:g}",
                sigma=float(s[-1]),
            )
    drift = _drift(x, manifold)
    if project_final:
        x = project(x, manifold)
    return SampleBatch(samples=x, drift=drift, projected=bool(project_final))
