"""Per-window MVDR beamforming with speech-speech-noise interference
factorization and output gain adjustment."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, ShapeError

EPS = 1e-10
DIAGONAL_LOADING = 1e-6
EMPTY_TARGET_TOL = 1e-12


@dataclass
class SpatialCovariance:
    """Per-frequency Hermitian covariance matrices, shape (bins, J, J)."""

    matrices: np.ndarray
    window_index: int = 0
    kind: str = "target"

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.complex128)
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ShapeError("covariance matrices must be (bins, J, J)")

    @property
    def channel_count(self):
        return self.matrices.shape[1]


@dataclass
class BeamformerWeights:
    """Complex weight vectors, shape (bins, J), for one output channel."""

    weights: np.ndarray
    window_index: int = 0


def sig_cov(window_data, mask, window_index=0, kind="target"):
    """Spatial covariance of the masked signal.

    window_data: (J, frames, bins) complex; mask: (frames, bins) in [0, 1].
    Per frequency: Phi_f = sum_t (m x)(m x)^H / max(sum_t m^2, eps), i.e. the
    mask is applied to the signal before the outer product. An empty mask
    yields zero matrices.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != window_data.shape[1:]:
        raise ShapeError("mask must align with window frames x bins")
    mx = mask[np.newaxis] * window_data  # (J, T, F)
    num = np.einsum("jtf,ktf->fjk", mx, np.conj(mx))
    denom = np.maximum(np.sum(mask**2, axis=0), EPS)  # (F,)
    return SpatialCovariance(
        matrices=num / denom[:, np.newaxis, np.newaxis],
        window_index=window_index,
        kind=kind,
    )


def principal_component(cov):
    """Rank-1 reduction of a covariance: lambda_max v v^H per frequency.

    Used to denoise the target covariance before the MVDR solve: the masked
    estimate of a (near) point source is rank-1 plus estimation noise, and
    keeping only the principal eigenpair removes most of that noise.
    """
    _require_hermitian(cov.matrices, "target")
    vals, vecs = np.linalg.eigh(cov.matrices)
    scaled = vecs[:, :, -1] * np.sqrt(np.maximum(vals[:, -1:], 0.0))
    return SpatialCovariance(
        matrices=scaled[:, :, np.newaxis] * np.conj(scaled[:, np.newaxis, :]),
        window_index=cov.window_index,
        kind=cov.kind,
    )


def _require_hermitian(matrices, name):
    scale = max(float(np.max(np.abs(matrices), initial=0.0)), 1.0)
    err = float(np.max(np.abs(matrices - np.conj(np.swapaxes(matrices, -1, -2)))))
    if err > 1e-8 * scale:
        raise ContractViolationError(f"{name} covariance is not Hermitian (err {err:g})")


def mvdr_weights(target, interference, reference_index, loading=DIAGONAL_LOADING):
    """Minimum-variance distortionless-response weights per frequency.

    w_f = (Psi_f^-1 Phi_f e) / tr(Psi_f^-1 Phi_f) with e selecting the
    reference channel; Psi is diagonally loaded by `loading` * tr/J for
    invertibility. Frequencies whose trace normalizer is below the
    empty-target tolerance get zero weights.
    """
    phi = target.matrices
    psi = interference.matrices
    if phi.shape != psi.shape:
        raise ShapeError("target and interference covariance shapes differ")
    _require_hermitian(phi, "target")
    _require_hermitian(psi, "interference")
    bins_, j, _ = psi.shape
    trace_psi = np.real(np.trace(psi, axis1=1, axis2=2))
    load = loading * np.maximum(trace_psi, EPS) / j
    psi_loaded = psi + load[:, np.newaxis, np.newaxis] * np.eye(j)
    z = np.linalg.solve(psi_loaded, phi)  # (F, J, J) = Psi^-1 Phi
    numerator = z[:, :, reference_index]
    denominator = np.trace(z, axis1=1, axis2=2)
    weights = np.zeros((bins_, j), dtype=np.complex128)
    active = np.abs(denominator) >= EMPTY_TARGET_TOL
    weights[active] = numerator[active] / denominator[active, np.newaxis]
    return BeamformerWeights(weights=weights, window_index=target.window_index)


def ssn_interference(other_target, noise):
    """Interference covariance as other talker plus background noise."""
    if other_target.matrices.shape != noise.matrices.shape:
        raise ShapeError("covariance shapes differ")
    return SpatialCovariance(
        matrices=other_target.matrices + noise.matrices,
        window_index=other_target.window_index,
        kind="interference",
    )


def apply_weights(weights, window_data):
    """y[t, f] = w_f^H x[:, t, f]."""
    return np.einsum("fj,jtf->tf", np.conj(weights.weights), window_data)


def gain_adjust(beamformed, mask, ref_mag):
    """Cap the output magnitude by the masked reference magnitude.

    Per bin: y <- y * min(1, (m |x_R| + eps) / (|y| + eps)). Never increases
    magnitude and never alters phase; suppresses beamformer leakage in bins
    the mask marks as silent.
    """
    mask = np.asarray(mask, dtype=np.float64)
    ref_mag = np.asarray(ref_mag, dtype=np.float64)
    if beamformed.shape != mask.shape or mask.shape != ref_mag.shape:
        raise ShapeError("beamformed output, mask and reference must align")
    cap = (mask * ref_mag + EPS) / (np.abs(beamformed) + EPS)
    return beamformed * np.minimum(1.0, cap)


def beamform_window(
    window_data,
    mask_set,
    reference_index,
    window_index=0,
    interference_mode="ssn",
):
    """Beamform one window into two output channels.

    window_data: (J, frames, bins) complex slice of the mixture.
    interference_mode "ssn" uses Psi_i = Phi_other + Phi_noise; mode
    "complement" uses sig_cov with the 1 - m_i mask (ablation baseline).
    Returns (2, frames, bins) complex.
    """
    phi = [
        sig_cov(window_data, mask_set.speech[i], window_index, kind=f"target{i}")
        for i in range(2)
    ]
    ref_mag = np.abs(window_data[reference_index])
    out = np.empty((2,) + window_data.shape[1:], dtype=np.complex128)
    if interference_mode == "ssn":
        phi_noise = sig_cov(window_data, mask_set.noise, window_index, kind="noise")
        psis = [ssn_interference(phi[1], phi_noise), ssn_interference(phi[0], phi_noise)]
    elif interference_mode == "complement":
        psis = [
            sig_cov(window_data, 1.0 - mask_set.speech[i], window_index, kind="interference")
            for i in range(2)
        ]
    else:
        raise ValueError(f"unknown interference_mode {interference_mode!r}")
    for i in range(2):
        w = mvdr_weights(principal_component(phi[i]), psis[i], reference_index)
        y = apply_weights(w, window_data)
        out[i] = gain_adjust(y, mask_set.speech[i], ref_mag)
    return out
