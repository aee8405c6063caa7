"""Noise schedules, forward diffusion, guided noise prediction, and ancestral sampling.

The multi-condition guidance algebra lives here in two interchangeable
spaces: scores combine as base + lam*g1 + (1-lam)*g2, and the equivalent
noise-space form subtracts sqrt(1 - alpha_bar_t)-scaled gradients from the
predicted noise. An analytic Gaussian world provides closed-form scores,
noise predictions, and posteriors, so guided sampling is verifiable end to
end against exact answers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeMismatchError

# Reference schedule: 2000 steps, linear 1e-6 -> 1e-2. The desk-scale default
# rescales both endpoints by (2000 / T) so the terminal alpha_bar is preserved.
REFERENCE_STEPS = 2000
REFERENCE_BETA_START = 1e-6
REFERENCE_BETA_END = 1e-2

GUIDANCE_MODES = ("lambda_blend", "gamma_pair")
VARIANCE_MODES = ("beta", "posterior")


@dataclass(frozen=True)
class NoiseSchedule:
    """beta_t, alpha_t = 1 - beta_t, and alpha_bar_t = prod(alpha_s) for t = 1..T."""

    steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def _index(self, t: int) -> int:
        if not 1 <= t <= self.steps:
            raise ParameterError(f"step t={t} outside 1..{self.steps}")
        return t - 1

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._index(t)])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._index(t)])

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[self._index(t)])

    def alpha_bar_prev(self, t: int) -> float:
        i = self._index(t)
        return float(self.alpha_bar[i - 1]) if i > 0 else 1.0


def make_linear_schedule(steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta ramp inclusive of both endpoints."""
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(steps=steps, beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def default_schedule(steps: int = 200) -> NoiseSchedule:
    """Desk-scale schedule with endpoints rescaled to keep the reference alpha_bar_T."""
    factor = REFERENCE_STEPS / steps
    return make_linear_schedule(steps, REFERENCE_BETA_START * factor, REFERENCE_BETA_END * factor)


@dataclass(frozen=True)
class GuidanceConfig:
    """Blending weights for two-condition guidance.

    lambda_blend reads lam and weights the gradients lam / (1 - lam);
    gamma_pair reads the independent weights gamma1 / gamma2.
    """

    mode: str = "gamma_pair"
    lam: float = 0.5
    gamma1: float = 0.0
    gamma2: float = 0.0

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ParameterError(f"guidance mode must be one of {GUIDANCE_MODES}, got {self.mode!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ParameterError("gamma weights must be >= 0")

    def weights(self) -> tuple[float, float]:
        if self.mode == "lambda_blend":
            return self.lam, 1.0 - self.lam
        return self.gamma1, self.gamma2


def _check_same_shape(*arrays: np.ndarray) -> None:
    first = arrays[0].shape
    for arr in arrays[1:]:
        if arr.shape != first:
            raise ShapeMismatchError(f"shape mismatch: {first} vs {arr.shape}")


def forward_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_same_shape(x0, eps)
    ab = sched.alpha_bar_at(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def score_from_noise(eps_hat: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Score = -eps_hat / sqrt(1 - alpha_bar_t)."""
    ab = sched.alpha_bar_at(t)
    return -np.asarray(eps_hat, dtype=np.float64) / math.sqrt(1.0 - ab)


def combine_scores_lambda(
    base: np.ndarray, grad_y1: np.ndarray, grad_y2: np.ndarray, lam: float
) -> np.ndarray:
    """base + lam * grad_y1 + (1 - lam) * grad_y2."""
    base = np.asarray(base, dtype=np.float64)
    grad_y1 = np.asarray(grad_y1, dtype=np.float64)
    grad_y2 = np.asarray(grad_y2, dtype=np.float64)
    _check_same_shape(base, grad_y1, grad_y2)
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    return base + lam * grad_y1 + (1.0 - lam) * grad_y2


def guided_noise_prediction(
    eps_theta: np.ndarray,
    grad_y1: np.ndarray,
    grad_y2: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    cfg: GuidanceConfig,
) -> np.ndarray:
    """Fold condition gradients into the predicted noise.

    eps' = eps_theta - w1 sqrt(1 - alpha_bar_t) grad_y1
                     - w2 sqrt(1 - alpha_bar_t) grad_y2
    with (w1, w2) = (lam, 1-lam) or (gamma1, gamma2) depending on the mode.
    """
    eps_theta = np.asarray(eps_theta, dtype=np.float64)
    grad_y1 = np.asarray(grad_y1, dtype=np.float64)
    grad_y2 = np.asarray(grad_y2, dtype=np.float64)
    _check_same_shape(eps_theta, grad_y1, grad_y2)
    w1, w2 = cfg.weights()
    root = math.sqrt(1.0 - sched.alpha_bar_at(t))
    return eps_theta - w1 * root * grad_y1 - w2 * root * grad_y2


def reverse_step(
    x_t: np.ndarray,
    eps_prime: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    variance: str = "beta",
) -> np.ndarray:
    """One ancestral step x_t -> x_{t-1}; deterministic at t = 1.

    variance="beta" adds beta_t noise (exact for unit-Gaussian data and the
    default here because the analytic-world acceptance checks require its
    accuracy at desk-scale step counts); "posterior" selects the smaller
    beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t).
    """
    if variance not in VARIANCE_MODES:
        raise ParameterError(f"variance must be one of {VARIANCE_MODES}, got {variance!r}")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_prime = np.asarray(eps_prime, dtype=np.float64)
    _check_same_shape(x_t, eps_prime)
    beta = sched.beta_at(t)
    ab = sched.alpha_bar_at(t)
    mean = (x_t - beta / math.sqrt(1.0 - ab) * eps_prime) / math.sqrt(sched.alpha_at(t))
    if t == 1:
        return mean
    if variance == "beta":
        var = beta
    else:
        var = beta * (1.0 - sched.alpha_bar_prev(t)) / (1.0 - ab)
    return mean + math.sqrt(var) * rng.standard_normal(x_t.shape)


def diffusion_loss(eps: np.ndarray, eps_hat: np.ndarray) -> float:
    """Mean squared error between true and predicted noise."""
    eps = np.asarray(eps, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    _check_same_shape(eps, eps_hat)
    return float(np.mean((eps - eps_hat) ** 2))


def trajectory_rng(seed: int, trajectory_index: int) -> np.random.Generator:
    """Counter-based per-trajectory generator; (seed, index) fixes the stream."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), int(trajectory_index)]))
    )


# ---------------------------------------------------------------------------
# Analytic Gaussian world: exact scores and posteriors for verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticGaussianWorld:
    """World with prior x0 ~ N(mu0, var0) and observations y = x0 + N(0, var_y).

    Parameters may be scalars or (for diagonal worlds) arrays that broadcast
    against the state. Everything about its diffusion is Gaussian, so the
    marginal score, the exact noise predictor, the observation score
    grad log p(y | x_t), and the Bayesian posterior all have closed forms.
    """

    mu0: float = 0.0
    var0: float = 1.0
    var_y: float = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.var0) <= 0) or np.any(np.asarray(self.var_y) <= 0):
            raise ParameterError("variances must be positive")

    def marginal(self, t: int, sched: NoiseSchedule):
        """Mean and variance of x_t = sqrt(ab) x0 + sqrt(1-ab) eps."""
        ab = sched.alpha_bar_at(t)
        return np.sqrt(ab) * self.mu0, ab * self.var0 + 1.0 - ab

    def exact_score(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        mean, var = self.marginal(t, sched)
        return -(np.asarray(x_t, dtype=np.float64) - mean) / var

    def exact_noise_prediction(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        ab = sched.alpha_bar_at(t)
        return -math.sqrt(1.0 - ab) * self.exact_score(x_t, t, sched)

    def observation_score(self, x_t: np.ndarray, y, t: int, sched: NoiseSchedule) -> np.ndarray:
        """grad_x log p(y | x_t), exact for the jointly Gaussian model."""
        ab = sched.alpha_bar_at(t)
        _, var_t = self.marginal(t, sched)
        gain = np.sqrt(ab) * self.var0 / var_t
        offset = (1.0 - ab) * self.mu0 / var_t
        resid_var = self.var0 * (1.0 - ab) / var_t + self.var_y
        x_t = np.asarray(x_t, dtype=np.float64)
        return gain * (y - gain * x_t - offset) / resid_var

    def posterior(self, y):
        """Mean and variance of x0 | y."""
        var = self.var0 * self.var_y / (self.var0 + self.var_y)
        mean = (self.var_y * self.mu0 + self.var0 * y) / (self.var0 + self.var_y)
        return mean, var

    def blended_posterior(self, y1, y2, lam: float):
        """Posterior targeted by lambda-blended guidance on two observations."""
        effective_y = lam * y1 + (1.0 - lam) * y2
        return self.posterior(effective_y)


def sample_terminal(
    world: AnalyticGaussianWorld,
    sched: NoiseSchedule,
    n_trajectories: int,
    rng: np.random.Generator,
    observations: tuple[float, ...] = (),
    cfg: GuidanceConfig | None = None,
    variance: str = "beta",
) -> np.ndarray:
    """Run full reverse chains with the exact noise predictor; returns x_0 draws.

    With no observations this samples the prior; with one or two observations
    the condition gradients flow through guided_noise_prediction, so the whole
    guidance algebra is on the tested path.
    """
    if len(observations) > 2:
        raise ParameterError("at most two observations are supported")
    x = rng.standard_normal(n_trajectories)
    zero = np.zeros_like(x)
    for t in range(sched.steps, 0, -1):
        eps = world.exact_noise_prediction(x, t, sched)
        if observations:
            grads = [world.observation_score(x, y, t, sched) for y in observations]
            if len(grads) == 1:
                grads.append(zero)
            eps = guided_noise_prediction(eps, grads[0], grads[1], t, sched, cfg or GuidanceConfig(mode="lambda_blend", lam=1.0))
        x = reverse_step(x, eps, t, sched, rng, variance=variance)
    return x
