"""Linear measurement-system algebra.

A measurement system maps a signal x in R^d to an observation
y = A x + S e, where A is the m x d system response matrix, S is a square
root of the noise covariance (S S^T = Sigma) and e is standard Gaussian.
The Moore-Penrose pseudoinverse A+ splits the signal space into the range
component A+ A x, which survives measurement, and the null component
(I - A+ A) x, which is annihilated by A.

All downstream math consumes operators through closures (`apply`,
`apply_transpose`, `apply_pinv`, `noise_scale`) so structured systems never
materialize dense matrices in the hot path.  Dense matrices appear only at
construction time (for the SVD) and in test oracles.  Every closure is
vectorized over leading axes: inputs of shape (..., d) map to (..., m) and
vice versa.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DimensionError, InvalidCovarianceError, NumericalError

# Relative singular-value cutoff for generic pseudoinverses.  Structured
# operators with a prescribed spectrum (e.g. threshold-truncated SVD) carry
# their own absolute threshold instead.
DEFAULT_CUTOFF = 1e-12

SigmaHalf = Union[float, np.ndarray]


@dataclass(frozen=True)
class LinearSystem:
    """A measurement model exposed as matrix-free operator applications.

    Attributes
    ----------
    m, d:
        Measurement and signal dimensions.
    apply, apply_transpose, apply_pinv:
        Actions of A, A^T and A+.  Vectorized over leading axes.
    noise_scale:
        Action of the covariance square root S on a measurement-space
        vector; the zero function when the system is noiseless.
    kind:
        One of dense, mask, avgpool, truncated_svd, fourier_mask,
        linearized.
    sigma_half:
        Backing representation of S: a scalar s meaning s * I, or a dense
        m x m factor.  Used by `whiten` and by dense test oracles.
    meta:
        Construction details (stored spectrum, masks, seeds) for
        diagnostics; never consumed by the core math.
    """

    m: int
    d: int
    apply: Callable[[np.ndarray], np.ndarray]
    apply_transpose: Callable[[np.ndarray], np.ndarray]
    apply_pinv: Callable[[np.ndarray], np.ndarray]
    noise_scale: Callable[[np.ndarray], np.ndarray]
    kind: str
    sigma_half: SigmaHalf = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def noise_is_zero(self) -> bool:
        if isinstance(self.sigma_half, np.ndarray):
            return not np.any(self.sigma_half)
        return float(self.sigma_half) == 0.0


def _check_last_axis(x, n, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n:
        raise DimensionError(f"{what}: expected last axis {n}, got shape {x.shape}")
    return x


def pseudoinverse(a: np.ndarray, cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``cutoff * sigma_max`` are treated as zero;
    the remaining ones are reciprocated.  The all-zero matrix maps to the
    all-zero pseudoinverse.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if not np.all(np.isfinite(a)):
        raise DimensionError("pseudoinverse: non-finite entries")
    if cutoff < 0:
        raise ValueError("pseudoinverse: cutoff must be >= 0")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD failed to converge for {a.shape[0]}x{a.shape[1]} matrix"
        ) from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    inv = np.where(s > cutoff * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def penrose_residuals(a: np.ndarray, a_pinv: np.ndarray) -> dict:
    """Max absolute residual of each of the four Penrose identities."""
    apa = a @ a_pinv @ a
    pap = a_pinv @ a @ a_pinv
    aap = a @ a_pinv
    paa = a_pinv @ a
    return {
        "A A+ A = A": float(np.max(np.abs(apa - a))),
        "A+ A A+ = A+": float(np.max(np.abs(pap - a_pinv))),
        "(A A+)^T = A A+": float(np.max(np.abs(aap - aap.T))),
        "(A+ A)^T = A+ A": float(np.max(np.abs(paa - paa.T))),
    }


def project_range(sys: LinearSystem, x: np.ndarray) -> np.ndarray:
    """Component of x that survives measurement: A+ (A x)."""
    x = _check_last_axis(x, sys.d, "project_range")
    return sys.apply_pinv(sys.apply(x))


def project_null(sys: LinearSystem, x: np.ndarray) -> np.ndarray:
    """Component of x annihilated by A: x - A+ A x."""
    x = _check_last_axis(x, sys.d, "project_null")
    return x - sys.apply_pinv(sys.apply(x))


def pseudoinverse_reconstruction(sys: LinearSystem, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares signal estimate A+ y."""
    y = _check_last_axis(y, sys.m, "pseudoinverse_reconstruction")
    return sys.apply_pinv(y)


def _sigma_half_matrix(sigma_half: SigmaHalf, m: int) -> np.ndarray:
    if isinstance(sigma_half, np.ndarray):
        if sigma_half.shape != (m, m):
            raise DimensionError(
                f"sigma_half: expected ({m}, {m}), got {sigma_half.shape}"
            )
        return sigma_half.astype(np.float64)
    return float(sigma_half) * np.eye(m)


def make_noise_scale(sigma_half: SigmaHalf, m: int):
    if isinstance(sigma_half, np.ndarray):
        s = _sigma_half_matrix(sigma_half, m)

        def noise_scale(eps):
            eps = _check_last_axis(eps, m, "noise_scale")
            return eps @ s.T

        return noise_scale
    scale = float(sigma_half)

    def noise_scale(eps):
        eps = _check_last_axis(eps, m, "noise_scale")
        return scale * eps

    return noise_scale


def build_dense_system(
    a: np.ndarray,
    sigma_half: SigmaHalf = 0.0,
    kind: str = "dense",
    cutoff: float = DEFAULT_CUTOFF,
    meta: dict | None = None,
) -> LinearSystem:
    """Back every LinearSystem closure with dense multiplies.

    The pseudoinverse is computed once at construction via SVD.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    m, d = a.shape
    if isinstance(sigma_half, np.ndarray) and sigma_half.shape != (m, m):
        raise DimensionError(
            f"build_dense_system: sigma_half shape {sigma_half.shape} != ({m}, {m})"
        )
    a_pinv = pseudoinverse(a, cutoff)

    def apply(x):
        return _check_last_axis(x, d, "apply") @ a.T

    def apply_transpose(y):
        return _check_last_axis(y, m, "apply_transpose") @ a

    def apply_pinv(y):
        return _check_last_axis(y, m, "apply_pinv") @ a_pinv.T

    return LinearSystem(
        m=m,
        d=d,
        apply=apply,
        apply_transpose=apply_transpose,
        apply_pinv=apply_pinv,
        noise_scale=make_noise_scale(sigma_half, m),
        kind=kind,
        sigma_half=sigma_half,
        meta=dict(meta or {}),
    )


def identity_system(d: int, sigma_half: SigmaHalf = 0.0) -> LinearSystem:
    return build_dense_system(np.eye(d), sigma_half=sigma_half)


def materialize(sys: LinearSystem) -> np.ndarray:
    """Dense A, recovered by applying the operator to basis vectors."""
    return sys.apply(np.eye(sys.d)).T


def materialize_pinv(sys: LinearSystem) -> np.ndarray:
    """Dense A+, recovered column by column."""
    return sys.apply_pinv(np.eye(sys.m)).T


def materialize_noise_half(sys: LinearSystem) -> np.ndarray:
    """Dense covariance square root S."""
    return sys.noise_scale(np.eye(sys.m)).T


def _inv_sqrt_psd(sigma: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric (Sigma+)^(1/2) for a PSD matrix; errors on negative spectra."""
    sym = 0.5 * (sigma + sigma.T)
    evals, evecs = np.linalg.eigh(sym)
    scale = max(1.0, float(np.max(np.abs(evals))))
    if np.min(evals) < -tol * scale:
        raise InvalidCovarianceError(
            f"covariance has negative eigenvalue {np.min(evals):.3e}"
        )
    evals = np.clip(evals, 0.0, None)
    inv_root = np.where(evals > tol * scale, 1.0 / np.sqrt(np.where(evals > 0, evals, 1.0)), 0.0)
    return (evecs * inv_root) @ evecs.T


def whiten(sys: LinearSystem) -> LinearSystem:
    """Rescale the system so the measurement noise is isotropic.

    For scalar noise s * I the operator closures are wrapped in place
    (A' = A / s, A'+ = s A+); a dense covariance factor triggers a dense
    rebuild with A' = (Sigma+)^(1/2) A.  A noiseless system is returned
    unchanged: there is nothing to whiten.
    """
    if sys.noise_is_zero:
        return sys
    if isinstance(sys.sigma_half, np.ndarray):
        sigma = sys.sigma_half @ sys.sigma_half.T
        w = _inv_sqrt_psd(sigma)
        a_white = w @ materialize(sys)
        return build_dense_system(a_white, sigma_half=1.0, kind=sys.kind, meta=sys.meta)

    s = float(sys.sigma_half)
    if s < 0:
        raise InvalidCovarianceError(f"negative scalar noise scale {s}")
    inner_apply = sys.apply
    inner_transpose = sys.apply_transpose
    inner_pinv = sys.apply_pinv

    def apply(x):
        return inner_apply(x) / s

    def apply_transpose(y):
        return inner_transpose(y) / s

    def apply_pinv(y):
        return s * inner_pinv(y)

    return LinearSystem(
        m=sys.m,
        d=sys.d,
        apply=apply,
        apply_transpose=apply_transpose,
        apply_pinv=apply_pinv,
        noise_scale=make_noise_scale(1.0, sys.m),
        kind=sys.kind,
        sigma_half=1.0,
        meta=dict(sys.meta),
    )
