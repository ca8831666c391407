"""Noise schedules and the analytic diffusion process operations.

All schedule tables are float64 numpy arrays indexed by 1-based timestep t,
i.e. ``betas[t - 1]`` is the variance added at step t. The image-valued
operations only multiply by scalar coefficients, so they accept numpy arrays
and torch tensors alike.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTimestep, InvalidSchedule, InvalidTimestep


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    kind: str
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise InvalidSchedule("betas must be a nonempty 1-D vector")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise InvalidSchedule("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    @property
    def T(self):
        return int(self.betas.size)

    def _check_t(self, t):
        if not 1 <= t <= self.T:
            raise InvalidTimestep(f"t={t} outside [1, {self.T}]")

    def beta(self, t):
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t):
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t):
        # alpha_bar(0) == 1 by convention (no noise added yet)
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def posterior_sigma(self, t):
        """Reverse-step noise scale: sigma_t^2 = beta_t (1-abar_{t-1}) / (1-abar_t)."""
        self._check_t(t)
        ab_t = self.alpha_bar(t)
        ab_prev = self.alpha_bar(t - 1)
        if ab_t >= 1.0:
            return 0.0
        return math.sqrt(self.beta(t) * (1.0 - ab_prev) / (1.0 - ab_t))


def build_schedule(T, kind="linear", beta_min=1e-4, beta_max=0.02):
    """Construct the beta/alpha/alpha_bar tables for T timesteps."""
    if T < 1:
        raise InvalidSchedule(f"T must be >= 1, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise InvalidSchedule(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    if kind == "linear":
        betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    elif kind == "cosine":
        # squared-cosine alpha_bar profile, betas clipped into the valid range
        s = 0.008
        steps = np.arange(T + 1, dtype=np.float64)
        f = np.cos((steps / T + s) / (1.0 + s) * math.pi / 2.0) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], beta_min, 0.999)
    else:
        raise InvalidSchedule(f"unknown schedule kind: {kind!r}")
    return NoiseSchedule(betas=betas, kind=kind)


def forward_step(x_prev, t, sched, noise):
    """One forward corruption step: sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) eps."""
    beta = sched.beta(t)
    return math.sqrt(1.0 - beta) * x_prev + math.sqrt(beta) * noise


def forward_marginal(x0, t, sched, noise):
    """Closed-form corruption of x0 at step t: sqrt(abar_t) x0 + sqrt(1-abar_t) eps."""
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * noise


def predict_x0(x_t, t, eps_hat, sched, clamp=True):
    """Invert the marginal: (x_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t).

    The result is clamped to the model intensity range [-1, 1] unless
    ``clamp=False`` (tests exercise the pre-clamp algebraic identity).
    """
    ab = sched.alpha_bar(t)
    if ab <= 0.0:
        raise DegenerateTimestep(f"alpha_bar({t}) = 0")
    x0 = (x_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)
    if clamp:
        x0 = x0.clip(-1.0, 1.0) if isinstance(x0, np.ndarray) else x0.clamp(-1.0, 1.0)
    return x0


def reverse_step(x_t, t, eps_hat, sched, noise=None):
    """One ancestral reverse step; at t=1 the noise term is dropped."""
    sched._check_t(t)
    beta = sched.beta(t)
    alpha = sched.alpha(t)
    ab = sched.alpha_bar(t)
    mu = (x_t - beta / math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(alpha)
    if t == 1 or noise is None:
        return mu
    return mu + sched.posterior_sigma(t) * noise


def strided_timesteps(T, steps):
    """Evenly spaced decreasing subsequence of {1..T} of length ``steps``."""
    ts = np.linspace(T, 1, steps)
    ts = np.unique(np.rint(ts).astype(int))[::-1]
    return [int(t) for t in ts]
