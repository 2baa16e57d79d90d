"""NMSE, pilot-overhead closed forms, and effective sum-rate.

The sum-rate path needs a concrete transmission design; we use per-column
phase alignment on the aggregate estimated cascade plus zero-forcing at
the BS. Simple, deterministic, and pluggable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baselines import SchemeId


@dataclass(frozen=True)
class MetricsRecord:
    scheme: SchemeId
    k_users: int
    snr_db: float
    seed: int
    nmse: float
    pilot_overhead: int
    effective_sum_rate: float
    coherence_slots: int
    training_slots: int
    flags: str = ""

    def __post_init__(self):
        if not 0 <= self.training_slots <= self.coherence_slots:
            raise ValueError("training slots must lie in [0, coherence]")


def nmse(h_hat: np.ndarray, h_true: np.ndarray) -> float:
    """Sum of squared Frobenius errors over sum of true channel energies."""
    h_hat = np.asarray(h_hat)
    h_true = np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ValueError("estimate and ground truth shapes differ")
    denom = np.sum(np.abs(h_true) ** 2)
    if denom == 0:
        raise ValueError("NMSE undefined for all-zero ground truth")
    return float(np.sum(np.abs(h_hat - h_true) ** 2) / denom)


def pilot_overhead(scheme: SchemeId, k_users: int, m_bs: int, n_irs: int,
                   n_til: int | None = None,
                   kappa: float = math.inf) -> int:
    """Closed-form training slots per coherence block.

    kappa divides the anchor phase across the blocks that reuse it;
    kappa=inf gives the amortized figure. n_til defaults to the full
    surface when not given.
    """
    if min(k_users, m_bs, n_irs) < 1:
        raise ValueError("dimensions must be positive")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    if n_til is None:
        n_til = n_irs
    anchor = 0 if math.isinf(kappa) else math.ceil(n_irs / kappa)
    scheme = SchemeId(scheme)
    if scheme is SchemeId.PROPOSED:
        return anchor + math.ceil(k_users * n_til / m_bs)
    if scheme is SchemeId.PROPOSED_NO_VR:
        return anchor + math.ceil(k_users * n_irs / m_bs)
    if scheme is SchemeId.COMMON:
        return n_irs + math.ceil((k_users - 1) * n_irs / m_bs)
    return k_users * n_irs


def design_beamforming(h_hats: np.ndarray, noise_var: float,
                       p_u: float = 1.0):
    """Reflection phases and BS precoder from channel estimates.

    phi aligns each column of the user-aggregated estimate; W zero-forces
    the resulting effective channels with every column at power p_u,
    falling back to matched filtering when they are rank-deficient.
    noise_var is accepted for interface symmetry; this design ignores it.
    """
    h_hats = np.asarray(h_hats)
    if not np.abs(h_hats).any():
        raise ValueError("cannot design beamforming from all-zero estimates")
    k_users = h_hats.shape[0]
    agg = h_hats.sum(axis=(0, 1))
    phi = np.where(np.abs(agg) > 0, np.exp(-1j * np.angle(agg)), 1.0)
    g = np.stack([h @ phi for h in h_hats], axis=1)   # M x K effective
    if np.linalg.matrix_rank(g) < k_users:
        w = g.copy()
    else:
        try:
            w = g @ np.linalg.inv(g.conj().T @ g)
            if not np.all(np.isfinite(w)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            w = g.copy()
    norms = np.linalg.norm(w, axis=0)
    scale = np.divide(math.sqrt(p_u), norms, out=np.zeros_like(norms),
                      where=norms > 0)
    return phi, w * scale[None, :]


def sinr_per_user(h_true: np.ndarray, phi: np.ndarray, w: np.ndarray,
                  noise_var: float) -> np.ndarray:
    """SINR on the TRUE channels under the given reflection and precoder."""
    k_users = h_true.shape[0]
    g = np.stack([h @ phi for h in h_true], axis=1)   # M x K true effective
    gains = np.abs(g.conj().T @ w) ** 2               # (k, k') beam powers
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return signal / (interference + noise_var)


def effective_sum_rate(h_true: np.ndarray, phi: np.ndarray, w: np.ndarray,
                       coherence_slots: int, training_slots: int,
                       noise_var: float) -> float:
    """(1 - T_e/T) sum_k log2(1 + SINR_k), SINR on ground-truth channels."""
    if training_slots > coherence_slots:
        raise ValueError("training cannot exceed the coherence block")
    s = sinr_per_user(h_true, phi, w, noise_var)
    return float((1 - training_slots / coherence_slots)
                 * np.log2(1 + s).sum())
