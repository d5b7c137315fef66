"""Noise schedules and the closed-form forward noising identity.

The forward process noises a clean latent ``z_0`` in one shot:

    z_t = sqrt(alpha_bar_t) * z_0 + sqrt(1 - alpha_bar_t) * eps

where ``alpha_bar_t`` is the running product of ``1 - beta_s`` for
``s <= t``. Schedules are precomputed once and treated as immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

SCHEDULE_KINDS = ("linear", "cosine")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step diffusion coefficients over ``num_steps`` timesteps."""

    num_steps: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    kind: str = "linear"
    beta_start: float = 0.0
    beta_end: float = 0.0

    def __len__(self) -> int:
        return self.num_steps


def make_noise_schedule(
    num_steps: int,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    kind: str = "linear",
) -> NoiseSchedule:
    """Build a noise schedule with strictly decreasing ``alpha_bars``.

    ``linear`` interpolates betas evenly from ``beta_start`` to
    ``beta_end``; ``cosine`` derives betas from a squared-cosine
    ``alpha_bar`` curve (the beta range arguments are validated but do
    not shape the cosine curve).
    """
    if not isinstance(num_steps, (int, np.integer)) or num_steps < 1:
        raise ParameterError(f"num_steps must be a positive integer, got {num_steps!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if kind not in SCHEDULE_KINDS:
        raise ParameterError(f"unknown schedule kind {kind!r}")

    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, num_steps, dtype=np.float64)
    else:
        # Squared-cosine alpha_bar curve; betas recovered from its ratios
        # and clipped away from 0 and 1 to keep every beta inside (0, 1).
        s = 0.008
        steps = np.arange(num_steps + 1, dtype=np.float64)
        f = np.cos((steps / num_steps + s) / (1 + s) * math.pi / 2) ** 2
        alpha_bar = f / f[0]
        betas = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
        betas = np.clip(betas, 1e-8, 0.999)

    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    schedule = NoiseSchedule(
        num_steps=int(num_steps),
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        kind=kind,
        beta_start=float(beta_start),
        beta_end=float(beta_end),
    )
    return schedule


def forward_diffuse(z_0, t: int, eps, schedule: NoiseSchedule):
    """Apply the closed-form forward process at timestep ``t``.

    Works elementwise, so numpy arrays and torch tensors both pass
    through unchanged in type. ``eps`` must match ``z_0``'s shape.
    """
    if tuple(z_0.shape) != tuple(eps.shape):
        raise ShapeError(f"eps shape {tuple(eps.shape)} != z_0 shape {tuple(z_0.shape)}")
    if not (0 <= int(t) < schedule.num_steps):
        raise ParameterError(f"timestep {t} outside [0, {schedule.num_steps})")
    a_bar = float(schedule.alpha_bars[int(t)])
    return math.sqrt(a_bar) * z_0 + math.sqrt(1.0 - a_bar) * eps
