"""Analytic linear-Gaussian machinery.

Exact conjugate posteriors, exact conditional-expectation denoisers and
dense marginal scores for Gaussian priors.  These are the ground truth the
forward process, the reverse sampler and the trained network are validated
against.  All conditioning goes through the joint Gaussian with
eigendecomposition-based pseudo-inverses, so zero noise and rank-deficient
operators are handled without forming explicit precision matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linop
from .errors import CapacityError, DegeneratePosteriorError
from .linop import LinearSystem
from .schedule import ScheduleCoeffs, ScheduleSpec, evaluate

MAX_DENSE_DIM = 256
_PSD_TOL = 1e-10


@dataclass
class GaussianBelief:
    """Mean vector and dense symmetric PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[-1]
        if self.cov.shape != (d, d):
            raise ValueError(f"cov shape {self.cov.shape} != ({d}, {d})")
        scale = max(1.0, float(np.max(np.abs(self.cov))))
        if float(np.max(np.abs(self.cov - self.cov.T))) > _PSD_TOL * scale:
            raise ValueError("covariance is not symmetric within tolerance")
        evals = np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T))
        if float(np.min(evals)) < -_PSD_TOL * scale:
            raise ValueError(f"covariance has negative eigenvalue {np.min(evals):.3e}")


def _sym(mat):
    return 0.5 * (mat + mat.T)


def _psd_pinv(mat, tol=_PSD_TOL):
    """Pseudo-inverse of a symmetric PSD matrix via eigendecomposition.

    Returns (pinv, range_projector, is_singular).
    """
    sym = _sym(mat)
    evals, evecs = np.linalg.eigh(sym)
    scale = max(float(np.max(np.abs(evals))), 1.0)
    keep = evals > tol * scale
    inv = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
    pinv = (evecs * inv) @ evecs.T
    proj = (evecs * keep.astype(float)) @ evecs.T
    return pinv, proj, bool(np.any(~keep))


def _require_dense_scale(d):
    if d > MAX_DENSE_DIM:
        raise CapacityError(f"dense Gaussian algebra limited to d <= {MAX_DENSE_DIM}, got {d}")


def gaussian_posterior(prior: GaussianBelief, sys: LinearSystem, y: np.ndarray) -> GaussianBelief:
    """Conjugate posterior of x given y = A x + noise under a Gaussian prior.

    Conditioning uses the joint Gaussian of (x, y) so that singular noise
    covariances and rank-deficient A stay first-class.  If the observation
    has mass outside the range of the marginal observation covariance, the
    model cannot have produced it and a degenerate-posterior error names
    the offending directions.
    """
    _require_dense_scale(sys.d)
    y = np.asarray(y, dtype=np.float64)
    a = linop.materialize(sys)
    s_half = linop.materialize_noise_half(sys)
    sigma = s_half @ s_half.T

    cross = prior.cov @ a.T                      # cov(x, y), d x m
    obs_cov = _sym(a @ prior.cov @ a.T + sigma)  # cov(y), m x m
    obs_pinv, obs_proj, singular = _psd_pinv(obs_cov)

    resid = y - a @ prior.mean
    if singular:
        off_range = resid - obs_proj @ resid
        norm = float(np.linalg.norm(off_range))
        if norm > 1e-8 * max(1.0, float(np.linalg.norm(resid))):
            idx = np.argsort(-np.abs(off_range))[:3]
            raise DegeneratePosteriorError(
                "observation incompatible with singular model; "
                f"largest off-range components at measurement indices {idx.tolist()}"
            )

    gain = cross @ obs_pinv
    mean = prior.mean + gain @ resid
    cov = _sym(prior.cov - gain @ cross.T)
    return GaussianBelief(mean=mean, cov=cov)


def _marginal_pieces(prior: GaussianBelief, sys: LinearSystem, coeffs: ScheduleCoeffs):
    """Dense (H, marginal mean, marginal covariance) of the corrupted state."""
    from . import forward

    h = forward.mean_matrix(sys, coeffs)
    sigma_t = forward.covariance_matrix(sys, coeffs)
    marg_mean = h @ prior.mean
    marg_cov = _sym(h @ prior.cov @ h.T + sigma_t)
    return h, marg_mean, marg_cov


def oracle_denoiser(prior: GaussianBelief, sys: LinearSystem, coeffs):
    """Exact conditional-expectation denoiser E[x0 | x_t] for a Gaussian prior.

    ``coeffs`` may be a ScheduleCoeffs (gain fixed at that time; the
    returned function ignores its time argument) or a ScheduleSpec (the
    gain is computed at each requested time and cached).  The returned
    function is affine in x_t and vectorized over leading axes.
    """
    _require_dense_scale(sys.d)

    def gain_at(c: ScheduleCoeffs):
        h, marg_mean, marg_cov = _marginal_pieces(prior, sys, c)
        pinv, _, _ = _psd_pinv(marg_cov)
        gain = prior.cov @ h.T @ pinv
        offset = prior.mean - gain @ marg_mean
        return gain, offset

    if isinstance(coeffs, ScheduleCoeffs):
        gain, offset = gain_at(coeffs)

        def denoise(x_t, t=None):
            return np.asarray(x_t, dtype=np.float64) @ gain.T + offset

        return denoise

    if isinstance(coeffs, ScheduleSpec):
        spec = coeffs
        cache: dict = {}

        def denoise(x_t, t):
            key = float(t)
            if key not in cache:
                cache[key] = gain_at(evaluate(spec, key))
            gain, offset = cache[key]
            return np.asarray(x_t, dtype=np.float64) @ gain.T + offset

        return denoise

    raise TypeError(f"coeffs must be ScheduleCoeffs or ScheduleSpec, got {type(coeffs)}")


def dense_score(
    prior: GaussianBelief,
    sys: LinearSystem,
    coeffs: ScheduleCoeffs,
    x_t: np.ndarray,
    return_restricted_flag: bool = False,
):
    """Exact score of the Gaussian marginal of the corrupted state.

    When the marginal covariance is singular the score is restricted to its
    range via the pseudo-inverse; pass ``return_restricted_flag=True`` to
    learn whether that happened.
    """
    _require_dense_scale(sys.d)
    _, marg_mean, marg_cov = _marginal_pieces(prior, sys, coeffs)
    pinv, _, singular = _psd_pinv(marg_cov)
    x_t = np.asarray(x_t, dtype=np.float64)
    score = -(x_t - marg_mean) @ pinv.T
    if return_restricted_flag:
        return score, singular
    return score
