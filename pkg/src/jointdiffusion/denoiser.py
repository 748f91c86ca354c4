"""Exact minimum-mean-square-error noise predictors for known data priors.

A denoiser is any callable ``(x_t, t, schedule) -> eps_hat`` returning a grid of
the same shape as ``x_t``. The priors here admit closed-form posteriors, so the
sampling pipeline can be checked against ground truth without a trained network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from jointdiffusion.grid import Grid
from jointdiffusion.schedule import NoiseSchedule


class Denoiser(Protocol):
    def __call__(self, x_t: Grid, t: int, schedule: NoiseSchedule) -> Grid: ...


def _signal_levels(t: int, schedule: NoiseSchedule) -> tuple[float, float]:
    abar = schedule.alpha_bar(t)
    if abar >= 1.0:
        raise ValueError(
            f"alpha_bar at t={t} is 1: there is no noise to predict; "
            "treat t=0 as the clean sample instead of calling the denoiser"
        )
    return abar, 1.0 - abar


def _eps_from_x0(x_t: Grid, x0_hat: Grid, abar: float, one_minus: float) -> Grid:
    return (x_t - math.sqrt(abar) * x0_hat) / math.sqrt(one_minus)


@dataclass(frozen=True)
class GmmPrior:
    """Per-pixel i.i.d. Gaussian mixture prior on x_0."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not (len(self.weights) == len(self.means) == len(self.stds) >= 1):
            raise ValueError("weights, means and stds need equal, non-zero length")
        if np.any(w <= 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"weights must be positive and sum to 1, got {self.weights}")
        if any(s <= 0 for s in self.stds):
            raise ValueError(f"stds must be positive, got {self.stds}")

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        k = rng.choice(len(self.weights), size=shape, p=np.asarray(self.weights))
        means = np.asarray(self.means)[k]
        stds = np.asarray(self.stds)[k]
        return means + stds * rng.standard_normal(shape)

    def posterior_mean(self, x_t: Grid, t: int, schedule: NoiseSchedule) -> Grid:
        abar, one_minus = _signal_levels(t, schedule)
        x = np.asarray(x_t, dtype=np.float64)[..., None]
        w = np.asarray(self.weights)
        m = np.asarray(self.means)
        s2 = np.asarray(self.stds) ** 2
        var = abar * s2 + one_minus
        log_lik = (
            np.log(w)
            - 0.5 * np.log(2 * np.pi * var)
            - 0.5 * (x - math.sqrt(abar) * m) ** 2 / var
        )
        # log-space responsibilities: likelihoods are extremely peaked near t=0
        gamma = np.exp(log_lik - logsumexp(log_lik, axis=-1, keepdims=True))
        precision = abar / one_minus + 1.0 / s2
        comp_mean = (math.sqrt(abar) / one_minus * x + m / s2) / precision
        return np.sum(gamma * comp_mean, axis=-1)

    def __call__(self, x_t: Grid, t: int, schedule: NoiseSchedule) -> Grid:
        return gmm_eps_predict(x_t, t, self, schedule)


def gmm_eps_predict(x_t: Grid, t: int, prior: GmmPrior,
                    schedule: NoiseSchedule) -> Grid:
    abar, one_minus = _signal_levels(t, schedule)
    x_t = np.asarray(x_t, dtype=np.float64)
    return _eps_from_x0(x_t, prior.posterior_mean(x_t, t, schedule), abar, one_minus)


def squared_exponential_kernel(n: int, length_scale: float) -> np.ndarray:
    """Unit-variance SE covariance between pixel coordinates 0..n-1 on one axis."""
    u = np.arange(n, dtype=np.float64)
    d = u[:, None] - u[None, :]
    return np.exp(-0.5 * (d / length_scale) ** 2)


def _eigh_psd(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, u = np.linalg.eigh(c)
    # round-off can leave tiny negative eigenvalues on a PSD kernel
    return np.clip(lam, 0.0, None), u


@dataclass(frozen=True)
class GpPrior:
    """Zero-mean Gaussian prior x_0 ~ N(0, C) over a fixed patch shape.

    ``C`` is held through its eigendecomposition. ``bases`` is either a single
    orthonormal matrix acting on the flattened patch, or a (row, column) pair
    whose Kronecker product is the basis; ``eigenvalues`` has the patch shape in
    both cases.
    """

    shape: tuple[int, int]
    bases: tuple[np.ndarray, ...]
    eigenvalues: np.ndarray = field(repr=False)

    @classmethod
    def from_covariance(cls, cov: np.ndarray, shape: tuple[int, int]) -> "GpPrior":
        h, w = shape
        cov = np.asarray(cov, dtype=np.float64)
        if cov.shape != (h * w, h * w):
            raise ValueError(f"covariance {cov.shape} does not match patch {shape}")
        lam, u = _eigh_psd(0.5 * (cov + cov.T))
        return cls((h, w), (u,), lam.reshape(h, w))

    @classmethod
    def squared_exponential(cls, shape: tuple[int, int],
                            length_scale: float = 8.0) -> "GpPrior":
        # the 2-D SE kernel factorizes over rows and columns
        h, w = shape
        lam_r, u_r = _eigh_psd(squared_exponential_kernel(h, length_scale))
        lam_c, u_c = _eigh_psd(squared_exponential_kernel(w, length_scale))
        return cls((h, w), (u_r, u_c), np.outer(lam_r, lam_c))

    def to_spectral(self, x: Grid) -> np.ndarray:
        if len(self.bases) == 1:
            flat = x.reshape(*x.shape[:-2], -1)
            return (flat @ self.bases[0]).reshape(x.shape)
        u_r, u_c = self.bases
        return u_r.T @ x @ u_c

    def from_spectral(self, y: np.ndarray) -> Grid:
        if len(self.bases) == 1:
            flat = y.reshape(*y.shape[:-2], -1)
            return (flat @ self.bases[0].T).reshape(y.shape)
        u_r, u_c = self.bases
        return u_r @ y @ u_c.T

    def basis(self) -> np.ndarray:
        """Dense orthonormal basis over the flattened patch (row-major)."""
        if len(self.bases) == 1:
            return self.bases[0]
        return np.kron(*self.bases)

    def covariance(self) -> np.ndarray:
        u = self.basis()
        return (u * self.eigenvalues.ravel()) @ u.T

    def sample(self, rng: np.random.Generator, batch: int | None = None) -> np.ndarray:
        shape = self.shape if batch is None else (batch, *self.shape)
        z = rng.standard_normal(shape)
        return self.from_spectral(np.sqrt(self.eigenvalues) * z)

    def posterior_mean(self, x_t: Grid, t: int, schedule: NoiseSchedule) -> Grid:
        abar, one_minus = _signal_levels(t, schedule)
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape[-2:] != self.shape:
            raise ValueError(f"input shape {x_t.shape[-2:]} != prior patch {self.shape}")
        lam = self.eigenvalues
        gain = math.sqrt(abar) * lam / (abar * lam + one_minus)
        return self.from_spectral(gain * self.to_spectral(x_t))

    def __call__(self, x_t: Grid, t: int, schedule: NoiseSchedule) -> Grid:
        return gp_eps_predict(x_t, t, self, schedule)


def gp_eps_predict(x_t: Grid, t: int, prior: GpPrior, schedule: NoiseSchedule) -> Grid:
    abar, one_minus = _signal_levels(t, schedule)
    x_t = np.asarray(x_t, dtype=np.float64)
    return _eps_from_x0(x_t, prior.posterior_mean(x_t, t, schedule), abar, one_minus)


def zero_eps(x_t: Grid, t: int, schedule: NoiseSchedule | None = None) -> Grid:
    """Predicts no noise at all; isolates the injected-noise statistics of a step."""
    return np.zeros_like(np.asarray(x_t, dtype=np.float64))

