"""Trainable noise predictors for desk-scale experiments.

ConditionalDenoiser is a two-layer convolutional model over the concatenation
of the noisy state, the conditioning image, and two timestep channels. It is
parameterized to predict the clean signal and converts that prediction to
noise analytically, which keeps toy-scale training well conditioned.
LinearDenoiser is the 1-D affine model used against closed-form oracles.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .diffusion import NoiseSchedule
from .errors import ParameterError


class ConditionalDenoiser:
    """eps_hat(x_t, y, t) for (3, H, W) images conditioned on a degraded image."""

    def __init__(self, width: int = 16, seed: int = 0):
        if width < 1:
            raise ParameterError(f"width must be >= 1, got {width}")
        self.width = width
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 77])))
        in_ch = 8  # x_t (3) + condition (3) + timestep features (2)
        self.w1 = Tensor(rng.normal(0.0, 1.0 / math.sqrt(in_ch * 9), (width, in_ch, 3, 3)), requires_grad=True)
        self.b1 = Tensor(np.zeros(width), requires_grad=True)
        self.w2 = Tensor(rng.normal(0.0, 1.0 / math.sqrt(width * 9), (3, width, 3, 3)), requires_grad=True)
        self.b2 = Tensor(np.zeros(3), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {
            "denoiser.w1": self.w1.data,
            "denoiser.b1": self.b1.data,
            "denoiser.w2": self.w2.data,
            "denoiser.b2": self.b2.data,
        }

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.w1.data = np.asarray(tensors["denoiser.w1"], dtype=np.float64)
        self.b1.data = np.asarray(tensors["denoiser.b1"], dtype=np.float64)
        self.w2.data = np.asarray(tensors["denoiser.w2"], dtype=np.float64)
        self.b2.data = np.asarray(tensors["denoiser.b2"], dtype=np.float64)

    def clean_graph(self, x_t: Tensor, condition: np.ndarray, t: int, sched: NoiseSchedule) -> Tensor:
        """Predicted clean signal x0_hat as an autodiff graph."""
        _, height, width = x_t.data.shape
        t_feat = np.empty((2, height, width))
        t_feat[0] = t / sched.steps
        t_feat[1] = sched.alpha_bar_at(t)
        stacked = ad.concat([x_t, Tensor(np.asarray(condition, dtype=np.float64)), Tensor(t_feat)], axis=0)
        hidden = ad.tanh(ad.conv2d(stacked, self.w1, self.b1, stride=1, padding=1))
        return ad.conv2d(hidden, self.w2, self.b2, stride=1, padding=1)

    def noise_graph(self, x_t: Tensor, condition: np.ndarray, t: int, sched: NoiseSchedule) -> Tensor:
        """eps_hat = (x_t - sqrt(alpha_bar) x0_hat) / sqrt(1 - alpha_bar)."""
        ab = sched.alpha_bar_at(t)
        x0_hat = self.clean_graph(x_t, condition, t, sched)
        return (x_t - math.sqrt(ab) * x0_hat) * (1.0 / math.sqrt(1.0 - ab))

    def __call__(self, x_t: np.ndarray, condition: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        return self.noise_graph(Tensor(np.asarray(x_t, dtype=np.float64)), condition, t, sched).data


class LinearDenoiser:
    """Scalar affine predictor eps_hat = a * x_t + b; ignores the condition."""

    def __init__(self, a: float = 0.0, b: float = 0.0):
        self.a = Tensor(np.array(a), requires_grad=True)
        self.b = Tensor(np.array(b), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.a, self.b]

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {"linear.a": self.a.data, "linear.b": self.b.data}

    def noise_graph(self, x_t: Tensor, condition, t: int, sched: NoiseSchedule) -> Tensor:
        return x_t * self.a + self.b

    def __call__(self, x_t: np.ndarray, condition, t: int, sched: NoiseSchedule) -> np.ndarray:
        return self.noise_graph(Tensor(np.asarray(x_t, dtype=np.float64)), condition, t, sched).data
