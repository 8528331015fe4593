"""Forward corruption process.

Given a clean signal x0, the corrupted state at time t is Gaussian with
mean H_t x0 and covariance Sigma_t, where

    H_t     = A+ A + alpha_t (I - A+ A)
    Sigma_t = gamma_t A+ Sigma A+^T + beta_t (I - A+ A)

Production corruption always uses the one-shot `forward_sample` (exact and
O(1) in time).  The Euler-Maruyama simulator here exists to verify the
consistency between those closed-form marginals and the underlying SDE

    dx = dlog(alpha)/dt (I - A+ A) x dt + G_t dw,
    G_t G_t^T = dgamma/dt A+ Sigma A+^T + gnull_sq (I - A+ A),

and is never part of a production path.  Sigma_t is materialized only by
`analytic_marginal`, for test-scale oracles; no core routine inverts it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linop
from .errors import DivergenceError, NumericalError
from .linop import LinearSystem
from .oracle import GaussianBelief, MAX_DENSE_DIM
from .schedule import ScheduleCoeffs, ScheduleSpec, evaluate


@dataclass
class ProcessState:
    """A signal-space vector (or batch of them) with its timestep."""

    x: np.ndarray
    t: float


@dataclass(frozen=True)
class DriftDiffusion:
    """Matrix-free drift and diffusion actions at one time.

    apply_F annihilates range-space vectors: the drift acts only on the
    null space.  The two half-diffusion maps produce the range and null
    noise contributions from independent standard normal draws.
    """

    apply_F: Callable[[np.ndarray], np.ndarray]
    apply_GGT_half_range: Callable[[np.ndarray], np.ndarray]
    apply_GGT_half_null: Callable[[np.ndarray], np.ndarray]


def forward_sample(sys: LinearSystem, coeffs: ScheduleCoeffs, x0, rng) -> ProcessState:
    """One-shot draw of the corrupted state at coeffs.t.

    Noise order is fixed for reproducibility: the measurement-space draw
    eps (range noise) comes first, then the signal-space draw eps' (null
    noise).  Leading axes of x0 are treated as a batch.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    rng_part = linop.project_range(sys, x0)
    null_part = x0 - rng_part
    eps = rng.standard_normal(x0.shape[:-1] + (sys.m,))
    eps_null = rng.standard_normal(x0.shape)
    x_t = (
        rng_part
        + coeffs.alpha * null_part
        + np.sqrt(coeffs.gamma) * sys.apply_pinv(sys.noise_scale(eps))
        + np.sqrt(coeffs.beta) * (eps_null - linop.project_range(sys, eps_null))
    )
    return ProcessState(x=x_t, t=coeffs.t)


def mean_apply(sys: LinearSystem, coeffs: ScheduleCoeffs, x) -> np.ndarray:
    """Action of the marginal mean map H_t."""
    rng_part = linop.project_range(sys, x)
    return rng_part + coeffs.alpha * (np.asarray(x, dtype=np.float64) - rng_part)


def mean_matrix(sys: LinearSystem, coeffs: ScheduleCoeffs) -> np.ndarray:
    """Dense H_t (test-scale only)."""
    if sys.d > MAX_DENSE_DIM:
        raise NumericalError(f"dense mean map limited to d <= {MAX_DENSE_DIM}")
    return mean_apply(sys, coeffs, np.eye(sys.d)).T


def covariance_matrix(sys: LinearSystem, coeffs: ScheduleCoeffs) -> np.ndarray:
    """Dense Sigma_t (test-scale only)."""
    if sys.d > MAX_DENSE_DIM:
        raise NumericalError(f"dense covariance limited to d <= {MAX_DENSE_DIM}")
    pinv_noise = sys.apply_pinv(sys.noise_scale(np.eye(sys.m))).T  # A+ S, d x m
    proj = linop.project_range(sys, np.eye(sys.d)).T
    null_proj = np.eye(sys.d) - proj
    cov = coeffs.gamma * pinv_noise @ pinv_noise.T + coeffs.beta * null_proj
    return 0.5 * (cov + cov.T)


def analytic_marginal(sys: LinearSystem, coeffs: ScheduleCoeffs, x0) -> GaussianBelief:
    """Closed-form Gaussian marginal of the corrupted state at coeffs.t."""
    x0 = np.asarray(x0, dtype=np.float64)
    return GaussianBelief(
        mean=mean_apply(sys, coeffs, x0),
        cov=covariance_matrix(sys, coeffs),
    )


def drift_diffusion(sys: LinearSystem, coeffs: ScheduleCoeffs) -> DriftDiffusion:
    """Operator bundle for the SDE at coeffs.t."""
    if coeffs.gnull_sq < -1e-12:
        raise NumericalError(
            f"negative null diffusion rate {coeffs.gnull_sq:.3e} at t={coeffs.t}"
        )
    gnull = np.sqrt(max(coeffs.gnull_sq, 0.0))
    dgamma = coeffs.dgamma_dt
    if dgamma < 0:
        raise NumericalError(f"negative range diffusion rate {dgamma:.3e} at t={coeffs.t}")
    root_dgamma = np.sqrt(dgamma)

    def apply_F(x):
        return coeffs.dlog_alpha_dt * linop.project_null(sys, x)

    def apply_GGT_half_range(eps):
        return root_dgamma * sys.apply_pinv(sys.noise_scale(eps))

    def apply_GGT_half_null(eps):
        return gnull * linop.project_null(sys, eps)

    return DriftDiffusion(apply_F, apply_GGT_half_range, apply_GGT_half_null)


def simulate_forward_sde(
    sys: LinearSystem,
    spec: ScheduleSpec,
    x0,
    n_steps: int,
    rng,
    exact_start: bool = True,
    checkpoint_times=None,
):
    """Euler-Maruyama integration of the forward SDE over the clipped interval.

    The state is seeded at t = eps2 with the exact closed-form marginal
    (the SDE's marginal claims only hold on the clipped interval, so the
    start must carry the eps2 marginal); pass ``exact_start=False`` to
    start from x0 itself.  With ``checkpoint_times`` given, returns
    (final_state, {time: state_array}) where each recorded time is the
    first grid point at or past the requested one.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64)
    t0, t1 = spec.t_min, spec.t_max
    dt = (t1 - t0) / n_steps

    if exact_start:
        state = forward_sample(sys, evaluate(spec, t0), x0, rng)
        x = state.x
    else:
        x = x0.copy()

    remaining = sorted(checkpoint_times) if checkpoint_times else []
    recorded = {}
    root_dt = np.sqrt(dt)
    for k in range(n_steps):
        t = t0 + k * dt
        dd = drift_diffusion(sys, evaluate(spec, t))
        eps = rng.standard_normal(x.shape[:-1] + (sys.m,))
        eps_null = rng.standard_normal(x.shape)
        x = (
            x
            + dt * dd.apply_F(x)
            + root_dt * (dd.apply_GGT_half_range(eps) + dd.apply_GGT_half_null(eps_null))
        )
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"forward SDE diverged at step {k} (t={t:.6f})", step=k, t=t
            )
        t_next = t0 + (k + 1) * dt
        while remaining and t_next >= remaining[0] - 1e-12:
            recorded[remaining.pop(0)] = x.copy()
    final = ProcessState(x=x, t=t1)
    if checkpoint_times:
        return final, recorded
    return final
