"""Variance-preserving diffusion math: cosine schedule, v-prediction,
classifier-free guidance, additive conditioning and DPM-Solver (orders 1-2),
plus an analytic Gaussian-data denoiser to check the sampler against."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Mapping

import numpy as np

from .errors import DomainError, SepbenchError, ShapeError

LATENT_DIM = 128
LATENT_RATE = 40
T_MIN = 1e-3
T_MAX = 1.0 - 1e-3

CONDITIONS = ("text", "mixture", "imitation")

# (x_t, t, conditions or None) -> v-prediction of the same shape
Denoiser = Callable[[np.ndarray, float, "Mapping | None"], np.ndarray]


# ---------------------------------------------------------------------------
# schedule


def schedule_eval(t):
    """``(alpha, sigma, lambda)`` of the cosine VP schedule at ``t`` in [0, 1].

    ``lambda = log(alpha / sigma)`` is ``+inf`` at t=0 and ``-inf`` at t=1.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any((t_arr < 0) | (t_arr > 1)) or np.any(np.isnan(t_arr)):
        raise DomainError(f"t must lie in [0, 1], got {t}")
    alpha = np.where(t_arr == 1.0, 0.0, np.cos(0.5 * np.pi * t_arr))
    sigma = np.where(t_arr == 0.0, 0.0, np.cos(0.5 * np.pi * (1.0 - t_arr)))
    with np.errstate(divide="ignore"):
        lam = np.log(alpha) - np.log(sigma)
    if t_arr.ndim == 0:
        return float(alpha), float(sigma), float(lam)
    return alpha, sigma, lam


def inverse_lambda(lam):
    """Time at which the schedule reaches log-SNR ``lam``."""
    return 2.0 / np.pi * np.arctan(np.exp(-np.asarray(lam, dtype=np.float64)))


def time_grid(steps: int, kind: str = "time", t_max: float = T_MAX, t_min: float = T_MIN) -> np.ndarray:
    """Decreasing sampling times from ``t_max`` to ``t_min`` (``steps + 1`` points)."""
    if steps < 1:
        raise SepbenchError("need at least one step")
    if kind == "time":
        return np.linspace(t_max, t_min, steps + 1)
    if kind == "logsnr":
        lam = np.linspace(schedule_eval(t_max)[2], schedule_eval(t_min)[2], steps + 1)
        grid = inverse_lambda(lam)
        grid[0], grid[-1] = t_max, t_min
        return grid
    raise SepbenchError(f"unknown grid kind {kind!r}")


# ---------------------------------------------------------------------------
# v-prediction


def _check_shapes(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) > 1:
        raise ShapeError(f"shape mismatch: {sorted(shapes)}")


def v_from(x0, eps, t):
    _check_shapes(x0, eps)
    alpha, sigma, _ = schedule_eval(t)
    return alpha * np.asarray(eps) - sigma * np.asarray(x0)


def x0_from_v(x_t, v, t):
    _check_shapes(x_t, v)
    alpha, sigma, _ = schedule_eval(t)
    return alpha * np.asarray(x_t) - sigma * np.asarray(v)


def eps_from_v(x_t, v, t):
    _check_shapes(x_t, v)
    alpha, sigma, _ = schedule_eval(t)
    return sigma * np.asarray(x_t) + alpha * np.asarray(v)


# ---------------------------------------------------------------------------
# guidance and conditioning


@dataclass(frozen=True)
class GuidanceConfig:
    cfg_scale: float = 1.0
    drop_rate_text: float = 0.10
    drop_rate_mixture: float = 0.10
    drop_rate_imitation: float = 0.90

    def __post_init__(self):
        if self.cfg_scale < 0:
            raise SepbenchError("cfg_scale must be >= 0")
        for rate in (self.drop_rate_text, self.drop_rate_mixture, self.drop_rate_imitation):
            if not 0.0 <= rate <= 1.0:
                raise SepbenchError(f"drop rate {rate} is not a probability")

    @property
    def drop_rates(self) -> dict[str, float]:
        return {"text": self.drop_rate_text, "mixture": self.drop_rate_mixture,
                "imitation": self.drop_rate_imitation}


def cfg_combine(cond_out, uncond_out, cfg_scale: float):
    """``uncond + scale * (cond - uncond)``; scales 1 and 0 return a branch verbatim."""
    _check_shapes(cond_out, uncond_out)
    if cfg_scale == 1.0:
        return np.array(cond_out, copy=True)
    if cfg_scale == 0.0:
        return np.array(uncond_out, copy=True)
    cond_out, uncond_out = np.asarray(cond_out), np.asarray(uncond_out)
    return uncond_out + cfg_scale * (cond_out - uncond_out)


def sample_condition_mask(rng: np.random.Generator, cfg: GuidanceConfig = GuidanceConfig()) -> dict[str, bool]:
    """Independent keep (True) / drop (False) decision per condition."""
    rates = cfg.drop_rates
    u = rng.random(len(CONDITIONS))
    return {name: bool(u[i] >= rates[name]) for i, name in enumerate(CONDITIONS)}


@dataclass(frozen=True, eq=False)
class Projection:
    """Per-frame affine map ``c @ weight.T + bias`` (128 -> 128)."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, dim: int = LATENT_DIM) -> "Projection":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int = LATENT_DIM, bias: bool = True) -> "Projection":
        w = rng.standard_normal((dim, dim)) / math.sqrt(dim)
        return cls(w, rng.standard_normal(dim) * 0.1 if bias else np.zeros(dim))

    def __call__(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c) @ self.weight.T + self.bias


def check_latent(x: np.ndarray, name: str = "latent") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != LATENT_DIM:
        raise ShapeError(f"{name} must be T x {LATENT_DIM}, got {x.shape}")
    return x


def apply_additive_condition(noisy_latent, condition_latent, projection: Projection) -> np.ndarray:
    """Add the projected condition sequence to the noisy latent, frame by frame."""
    x = check_latent(noisy_latent, "noisy latent")
    c = check_latent(condition_latent, "condition latent")
    if x.shape != c.shape:
        raise ShapeError(f"latent lengths differ: {x.shape[0]} vs {c.shape[0]}")
    w = np.asarray(projection.weight)
    if w.shape != (LATENT_DIM, LATENT_DIM) or np.shape(projection.bias) != (LATENT_DIM,):
        raise ShapeError("projection must map 128 -> 128")
    return x + projection(c)


# ---------------------------------------------------------------------------
# analytic denoiser


@dataclass(frozen=True, eq=False)
class GaussianDataModel:
    """Data law ``x0 ~ N(mu, s**2)`` per dimension."""

    mu: float | np.ndarray = 0.0
    s: float | np.ndarray = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.s) <= 0):
            raise SepbenchError("s must be positive")

    def posterior(self, x_t, t):
        """Posterior means ``(E[x0 | x_t], E[eps | x_t])``."""
        alpha, sigma, _ = schedule_eval(t)
        x_t = np.asarray(x_t, dtype=np.float64)
        if np.ndim(t) == 0 and sigma == 0.0:
            return x_t.copy(), np.zeros_like(x_t)
        var = alpha * alpha * self.s * self.s + sigma * sigma
        x0 = (alpha * self.s * self.s * x_t + sigma * sigma * self.mu) / var
        eps = sigma * (x_t - alpha * self.mu) / var
        return x0, eps


def gaussian_denoiser(model: GaussianDataModel, x_t, t, conditions=None) -> np.ndarray:
    """Optimal v-prediction for Gaussian data (conditions are ignored)."""
    alpha, sigma, _ = schedule_eval(t)
    x0, eps = model.posterior(x_t, t)
    return alpha * eps - sigma * x0


class GaussianDenoiser:
    """:func:`gaussian_denoiser` bound to a model, usable as a :data:`Denoiser`."""

    def __init__(self, model: GaussianDataModel):
        self.model = model

    def __call__(self, x_t, t, conditions=None):
        return gaussian_denoiser(self.model, x_t, t, conditions)


# ---------------------------------------------------------------------------
# DPM-Solver


def guided_v(denoiser: Denoiser, x, t, conditions=None, guidance: GuidanceConfig | None = None):
    cond = denoiser(x, t, conditions)
    if guidance is None or conditions is None or guidance.cfg_scale == 1.0:
        return cond
    return cfg_combine(cond, denoiser(x, t, None), guidance.cfg_scale)


def _predict_eps(denoiser, x, t, conditions, guidance):
    return eps_from_v(x, guided_v(denoiser, x, t, conditions, guidance), t)


def _first_order(x_t, eps, alpha_t, alpha_s, sigma_s, h):
    return (alpha_s / alpha_t) * x_t - sigma_s * math.expm1(h) * eps


def dpm_solver_step(x_t, t: float, s: float, denoiser: Denoiser, order: int = 1, conditions=None,
                    guidance: GuidanceConfig | None = None) -> np.ndarray:
    """Advance ``x_t`` from time ``t`` down to ``s`` with DPM-Solver-1 or -2.

    Order 2 uses the log-SNR midpoint, costing two denoiser calls.
    """
    if order not in (1, 2):
        raise SepbenchError("order must be 1 or 2")
    x_t = np.asarray(x_t, dtype=np.float64)
    if s == t:
        return x_t.copy()
    if not 0.0 <= s < t <= 1.0:
        raise DomainError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    alpha_t, sigma_t, lam_t = schedule_eval(t)
    alpha_s, sigma_s, lam_s = schedule_eval(s)
    h = lam_s - lam_t
    if alpha_t == 0.0 or sigma_s == 0.0:
        if order == 2:
            raise DomainError("order-2 steps need 0 < s < t < 1")
        # the order-1 update in data-prediction form, finite at the endpoints
        v = guided_v(denoiser, x_t, t, conditions, guidance)
        return alpha_s * x0_from_v(x_t, v, t) + sigma_s * eps_from_v(x_t, v, t)
    eps_t = _predict_eps(denoiser, x_t, t, conditions, guidance)
    if order == 1:
        return _first_order(x_t, eps_t, alpha_t, alpha_s, sigma_s, h)
    u = float(inverse_lambda(lam_t + 0.5 * h))
    alpha_u, sigma_u, _ = schedule_eval(u)
    x_u = _first_order(x_t, eps_t, alpha_t, alpha_u, sigma_u, 0.5 * h)
    eps_u = _predict_eps(denoiser, x_u, u, conditions, guidance)
    return _first_order(x_t, eps_u, alpha_t, alpha_s, sigma_s, h)


def sample(denoiser: Denoiser, steps: int, order: int, rng: np.random.Generator, shape,
           conditions=None, guidance: GuidanceConfig | None = None, grid: str = "time") -> np.ndarray:
    """Draw ``x ~ N(0, I)`` at ``T_MAX`` and integrate down to ``T_MIN``."""
    x = rng.standard_normal(shape)
    return solve(denoiser, x, steps, order, conditions, guidance, grid)


def solve(denoiser: Denoiser, x: np.ndarray, steps: int, order: int, conditions=None,
          guidance: GuidanceConfig | None = None, grid: str = "time") -> np.ndarray:
    """Deterministic part of :func:`sample`, starting from a given noise draw."""
    ts = time_grid(steps, grid)
    for t, s in zip(ts[:-1], ts[1:]):
        x = dpm_solver_step(x, float(t), float(s), denoiser, order, conditions, guidance)
    return x


def wasserstein2_to_gaussian(samples, mu: float, std: float) -> float:
    """Quantile-coupling W2 distance between 1-D samples and ``N(mu, std**2)``."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    nd = NormalDist()
    q = np.fromiter((nd.inv_cdf((i + 0.5) / n) for i in range(n)), dtype=np.float64, count=n)
    return math.sqrt(float(np.mean((x - (mu + std * q)) ** 2)))
