"""Desk-scale benchmark measurement systems, perturbations and metrics.

Four operator families over flattened side x side grayscale images in
[0, 1] (d = side^2):

  inpainting - square diagonal 0/1 mask, its own pseudoinverse, noiseless.
  superres   - k x k block-mean pooling; the pseudoinverse is k^2 A^T,
               i.e. nearest-neighbor replication.
  ct         - dense U D V^T with random orthogonal factors and a synthetic
               decaying spectrum exp(-i / latent_dim); singular values below
               the absolute threshold tau are zeroed; scalar noise.
  mri        - realified orthonormal Fourier rows masked by frequency: the
               lambda1 percent lowest frequencies kept deterministically,
               lambda2 percent of all frequencies sampled from the rest;
               scalar noise.  Orthonormal rows make A+ = A^T.

`perturb_system` rebuilds the deployment-time system with modified
parameters and returns a measurement generator, while any trained model
keeps its training-time system embedded; this is the misspecification
protocol.  Poisson measurement noise is available as an evaluation-only
generator and is never embedded.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError
from .linop import LinearSystem, make_noise_scale

TASKS = ("inpainting", "superres", "ct", "mri")


@dataclass(frozen=True)
class TaskSpec:
    task: str
    image_side: int = 8
    mask_fraction: float = 0.5     # inpainting: fraction of pixels removed
    factor: int = 4                # superres pooling factor
    tau: float = 0.05              # ct absolute singular-value threshold
    sigma1_sq: float = 1e-4        # ct noise variance
    latent_dim: int = 16           # ct spectrum decay scale
    lambda1_pct: float = 16.0      # mri: percent of lowest frequencies kept
    lambda2_pct: float = 30.0      # mri: percent of frequencies sampled from the rest
    sigma2_sq: float = 5.0         # mri noise variance
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.image_side < 1:
            raise ValueError("image_side must be >= 1")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0, 1]")
        if self.task == "superres" and self.image_side % self.factor != 0:
            raise ValueError(
                f"pooling factor {self.factor} does not divide side {self.image_side}"
            )
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not (0.0 <= self.lambda1_pct <= 100.0 and 0.0 <= self.lambda2_pct <= 100.0):
            raise ValueError("lambda percentages must lie in [0, 100]")
        if self.lambda1_pct + self.lambda2_pct > 100.0:
            raise ValueError("lambda1 + lambda2 select more than 100% of frequencies")

    @property
    def d(self) -> int:
        return self.image_side * self.image_side


def build_system(spec: TaskSpec) -> LinearSystem:
    if spec.task == "inpainting":
        return _inpainting_system(spec)
    if spec.task == "superres":
        return _superres_system(spec)
    if spec.task == "ct":
        return _ct_system(spec)
    return _mri_system(spec)


def _inpainting_system(spec: TaskSpec) -> LinearSystem:
    d = spec.d
    rng = np.random.default_rng(spec.seed)
    n_masked = int(round(spec.mask_fraction * d))
    mask = np.ones(d)
    mask[rng.permutation(d)[:n_masked]] = 0.0

    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != d:
            raise DimensionError(f"apply: expected last axis {d}, got {x.shape}")
        return x * mask

    return LinearSystem(
        m=d,
        d=d,
        apply=apply,
        apply_transpose=apply,
        apply_pinv=apply,
        noise_scale=make_noise_scale(0.0, d),
        kind="mask",
        sigma_half=0.0,
        meta={"mask": mask},
    )


def _superres_system(spec: TaskSpec) -> LinearSystem:
    side, k = spec.image_side, spec.factor
    d = side * side
    low = side // k
    m = low * low

    def pool(x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != d:
            raise DimensionError(f"apply: expected last axis {d}, got {x.shape}")
        lead = x.shape[:-1]
        img = x.reshape(lead + (low, k, low, k))
        return img.mean(axis=(-3, -1)).reshape(lead + (m,))

    def replicate(y, scale):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != m:
            raise DimensionError(f"expected last axis {m}, got {y.shape}")
        lead = y.shape[:-1]
        img = y.reshape(lead + (low, 1, low, 1)) * np.ones((1, k, 1, k))
        return scale * img.reshape(lead + (d,))

    return LinearSystem(
        m=m,
        d=d,
        apply=pool,
        apply_transpose=lambda y: replicate(y, 1.0 / (k * k)),
        apply_pinv=lambda y: replicate(y, 1.0),
        noise_scale=make_noise_scale(0.0, m),
        kind="avgpool",
        sigma_half=0.0,
        meta={"factor": k},
    )


def _random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _ct_system(spec: TaskSpec) -> LinearSystem:
    d = spec.d
    tau = spec.tau
    rng = np.random.default_rng(spec.seed)
    u = _random_orthogonal(d, rng)
    v = _random_orthogonal(d, rng)
    spectrum = np.exp(-np.arange(d) / float(spec.latent_dim))
    s = np.where(spectrum >= tau, spectrum, 0.0)
    s_inv = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), 0.0)

    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != d:
            raise DimensionError(f"apply: expected last axis {d}, got {x.shape}")
        return ((x @ v) * s) @ u.T

    def apply_transpose(y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != d:
            raise DimensionError(f"apply_transpose: expected last axis {d}, got {y.shape}")
        return ((y @ u) * s) @ v.T

    def apply_pinv(y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != d:
            raise DimensionError(f"apply_pinv: expected last axis {d}, got {y.shape}")
        return ((y @ u) * s_inv) @ v.T

    sigma_half = math.sqrt(spec.sigma1_sq)
    return LinearSystem(
        m=d,
        d=d,
        apply=apply,
        apply_transpose=apply_transpose,
        apply_pinv=apply_pinv,
        noise_scale=make_noise_scale(sigma_half, d),
        kind="truncated_svd",
        sigma_half=sigma_half,
        meta={"spectrum": spectrum, "spectrum_truncated": s, "tau": tau},
    )


def _fourier_labels(side):
    """Canonical frequency labels sorted by wrapped magnitude.

    Each label is (mag, fu, fv, u, v, self_conjugate); conjugate frequency
    pairs appear once, under their lexicographically smaller member.
    """
    labels = []
    for u in range(side):
        for v in range(side):
            cu, cv = (-u) % side, (-v) % side
            if (cu, cv) < (u, v):
                continue  # the conjugate partner owns this pair
            fu, fv = min(u, side - u), min(v, side - v)
            mag = math.hypot(fu, fv)
            labels.append((mag, fu, fv, u, v, (cu, cv) == (u, v)))
    labels.sort()
    return labels


def _fourier_rows(side, u, v, self_conj):
    """Real orthonormal row(s) realizing one canonical frequency."""
    p = np.arange(side)
    phase = -2.0 * np.pi * (np.add.outer(u * p, v * p)) / side
    complex_row = (np.cos(phase) + 1j * np.sin(phase)).reshape(-1) / side
    if self_conj:
        return [complex_row.real]
    return [math.sqrt(2.0) * complex_row.real, math.sqrt(2.0) * complex_row.imag]


def _mri_system(spec: TaskSpec) -> LinearSystem:
    side = spec.image_side
    lambda1 = spec.lambda1_pct
    sigma_sq = spec.sigma2_sq
    labels = _fourier_labels(side)
    n_labels = len(labels)
    n_low = int(round(lambda1 / 100.0 * n_labels))
    n_rand = int(round(spec.lambda2_pct / 100.0 * n_labels))
    if n_low + n_rand > n_labels:
        raise ValueError("lambda1 + lambda2 select more than 100% of frequencies")

    # the random subset is the prefix of one seeded permutation, skipping the
    # deterministic low block: uniform without replacement, and nearly the
    # same rows survive when lambda1 is perturbed (the mask does not reshuffle)
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n_labels)
    sampled = [int(i) for i in perm if i >= n_low][:n_rand]
    keep = sorted(set(range(n_low)) | set(sampled))

    rows = []
    for idx in keep:
        _, _, _, u, v, self_conj = labels[idx]
        rows.extend(_fourier_rows(side, u, v, self_conj))
    a = np.asarray(rows)
    m = a.shape[0]

    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != side * side:
            raise DimensionError(f"apply: expected last axis {side * side}, got {x.shape}")
        return x @ a.T

    def apply_transpose(y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != m:
            raise DimensionError(f"apply_transpose: expected last axis {m}, got {y.shape}")
        return y @ a

    sigma_half = math.sqrt(sigma_sq)
    return LinearSystem(
        m=m,
        d=side * side,
        apply=apply,
        apply_transpose=apply_transpose,
        apply_pinv=apply_transpose,  # orthonormal rows
        noise_scale=make_noise_scale(sigma_half, m),
        kind="fourier_mask",
        sigma_half=sigma_half,
        meta={"n_low_labels": n_low, "n_labels_kept": len(keep), "rows": a},
    )


@dataclass(frozen=True)
class Perturbation:
    """Deployment-time parameter shifts for the misspecification protocol."""

    lambda1: Optional[float] = None
    tau: Optional[float] = None
    noise_var: Optional[float] = None
    noise_model: str = "gaussian"
    poisson_i0: Optional[float] = None

    def __post_init__(self):
        if self.noise_model not in ("gaussian", "poisson"):
            raise ValueError(f"unknown noise model {self.noise_model!r}")
        if self.noise_model == "poisson" and (self.poisson_i0 is None or self.poisson_i0 <= 0):
            raise ValueError("poisson noise requires intensity > 0")

    def label(self) -> str:
        parts = []
        if self.lambda1 is not None:
            parts.append(f"lambda1={self.lambda1:g}")
        if self.tau is not None:
            parts.append(f"tau={self.tau:g}")
        if self.noise_var is not None:
            parts.append(f"noise_var={self.noise_var:g}")
        if self.noise_model == "poisson":
            parts.append(f"poisson_i0={self.poisson_i0:g}")
        return ";".join(parts) if parts else "none"


def perturb_system(spec: TaskSpec, pert: Perturbation):
    """(deployment system, measurement generator) for a perturbed model.

    The generator draws y from the perturbed forward model; callers sample
    with their unchanged checkpoint and embedded training-time system.
    """
    deploy_spec = spec
    if pert.lambda1 is not None:
        if spec.task != "mri":
            raise ValueError("lambda1 perturbation applies to the mri task only")
        deploy_spec = dataclasses.replace(deploy_spec, lambda1_pct=pert.lambda1)
    if pert.tau is not None:
        if spec.task != "ct":
            raise ValueError("tau perturbation applies to the ct task only")
        deploy_spec = dataclasses.replace(deploy_spec, tau=pert.tau)
    if pert.noise_var is not None:
        if spec.task == "ct":
            deploy_spec = dataclasses.replace(deploy_spec, sigma1_sq=pert.noise_var)
        elif spec.task == "mri":
            deploy_spec = dataclasses.replace(deploy_spec, sigma2_sq=pert.noise_var)
        else:
            raise ValueError("noise_var perturbation needs a noisy task (ct or mri)")

    deployed = build_system(deploy_spec)

    if pert.noise_model == "poisson":
        intensity = float(pert.poisson_i0)

        def generate(x0, rng):
            rate = intensity * np.exp(-deployed.apply(x0))
            return rng.poisson(rate).astype(np.float64)

    else:

        def generate(x0, rng):
            clean = deployed.apply(x0)
            eps = rng.standard_normal(clean.shape)
            return clean + deployed.noise_scale(eps)

    return deployed, generate


# ---------------------------------------------------------------------------
# reconstruction metrics

PSNR_CAP_DB = 100.0


def psnr(x, ref) -> float:
    """Peak signal-to-noise ratio in dB with peak value 1.0, capped at 100."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError(f"psnr: shape mismatch {x.shape} vs {ref.shape}")
    mse = float(np.mean((x - ref) ** 2))
    floor = 10.0 ** (-PSNR_CAP_DB / 10.0)
    return 10.0 * math.log10(1.0 / max(mse, floor))


def ssim(x, ref, window: int = 8, c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> float:
    """Mean local structural similarity with a uniform window, peak 1.0."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError(f"ssim: shape mismatch {x.shape} vs {ref.shape}")
    side = int(round(math.sqrt(x.size)))
    if side * side != x.size:
        raise DimensionError(f"ssim: {x.size} values do not form a square image")
    if window > side:
        raise DimensionError(f"ssim: window {window} larger than image side {side}")
    a = x.reshape(side, side)
    b = ref.reshape(side, side)

    from numpy.lib.stride_tricks import sliding_window_view

    wa = sliding_window_view(a, (window, window)).reshape(-1, window * window)
    wb = sliding_window_view(b, (window, window)).reshape(-1, window * window)
    mu_a = wa.mean(axis=1)
    mu_b = wb.mean(axis=1)
    var_a = wa.var(axis=1)
    var_b = wb.var(axis=1)
    cov = (wa * wb).mean(axis=1) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# toy datasets

def sample_gaussian(n, mean, cov, rng):
    mean = np.asarray(mean, dtype=np.float64)
    d = mean.shape[0]
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 0:
        cov = float(cov) * np.eye(d)
    if n == 0:
        return np.zeros((0, d))
    return rng.multivariate_normal(mean, cov, size=n, method="cholesky")


def sample_gaussian_mixture(n, weights, means, covs, rng):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("mixture weights must be non-negative and sum to 1")
    if len(means) != weights.size or len(covs) != weights.size:
        raise ValueError("mixture weights, means and covs must align")
    d = np.asarray(means[0]).shape[0]
    if n == 0:
        return np.zeros((0, d))
    counts = rng.multinomial(n, weights)
    chunks = [
        sample_gaussian(c, means[k], covs[k], rng) for k, c in enumerate(counts) if c
    ]
    data = np.concatenate(chunks, axis=0)
    return data[rng.permutation(n)]


def blob_images(n, side, rng):
    """Random narrow-bump images normalized to [0, 1].

    Bump widths sit near the pixel scale so the spectrum spreads well past
    the lowest frequencies; frequency-masked operators then lose real
    information when measurement rows are dropped.
    """
    if n == 0:
        return np.zeros((0, side * side))
    grid = np.arange(side, dtype=np.float64)
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    out = np.zeros((n, side, side))
    for i in range(n):
        for _ in range(rng.integers(3, 7)):
            cy, cx = rng.uniform(0, side - 1, size=2)
            width = rng.uniform(0.075 * side, 0.2 * side)
            amp = rng.uniform(0.4, 1.0)
            out[i] += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width * width))
        lo, hi = out[i].min(), out[i].max()
        out[i] = (out[i] - lo) / max(hi - lo, 1e-12)
    return out.reshape(n, side * side)


def field_prior(side: int, scale: float = 3.0, amp: float = 0.1, mean: float = 0.5):
    """Band-limited Gaussian random-field image prior.

    Each realified Fourier coefficient is independent with variance
    amp * exp(-(|f| / scale)^2): smooth textures whose energy decays
    across the low-to-mid frequency band, so every row of a frequency
    mask in that band carries real information.  Returns (mean vector,
    covariance matrix).
    """
    labels = _fourier_labels(side)
    rows = []
    variances = []
    for mag, _, _, u, v, self_conj in labels:
        fr = _fourier_rows(side, u, v, self_conj)
        rows.extend(fr)
        variances.extend([amp * math.exp(-((mag / scale) ** 2))] * len(fr))
    basis = np.asarray(rows)           # d x d orthonormal
    var = np.asarray(variances)
    cov = (basis.T * var) @ basis
    return np.full(side * side, mean), 0.5 * (cov + cov.T)


def sample_field(n, side, rng, scale: float = 3.0, amp: float = 0.1, mean: float = 0.5):
    mu, cov = field_prior(side, scale=scale, amp=amp, mean=mean)
    if n == 0:
        return np.zeros((0, side * side))
    evals, evecs = np.linalg.eigh(cov)
    half = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return mu + rng.standard_normal((n, side * side)) @ half.T


def make_toy_dataset(kind: str, n: int, seed: int = 0, **params) -> np.ndarray:
    """Reproducible draws; returns an (n, d) array."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        return sample_gaussian(n, params["mean"], params.get("cov", 1.0), rng)
    if kind == "field":
        return sample_field(
            n,
            params["side"],
            rng,
            scale=params.get("scale", 3.0),
            amp=params.get("amp", 0.1),
            mean=params.get("mean", 0.5),
        )
    if kind == "gaussian_mixture":
        return sample_gaussian_mixture(
            n, params["weights"], params["means"], params["covs"], rng
        )
    if kind == "image_blobs":
        return blob_images(n, params["side"], rng)
    raise ValueError(f"unknown dataset kind {kind!r}")
