"""Benchmark estimators run against the same channel realizations.

Three reference schemes: per-user DFT training (error-optimal, huge
overhead), common-channel scaling against a typical user (breaks when
visibility masks differ across users), and the anchor pipeline without
the visibility-reduction step.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .channel import ChannelRealization
from .estimation import (
    PINV_CUTOFF,
    EstimationError,
    EstimationOutput,
    PilotPlan,
    SvdSolver,
    build_xi,
    dft_reflection_matrix,
    estimate_anchor,
    pilot_symbols,
    run_proposed,
    simulate_step1,
    simulate_step3,
)


class SchemeId(str, Enum):
    PROPOSED = "proposed"
    PROPOSED_NO_VR = "proposed_no_vr"
    COMMON = "common"
    DFT = "dft"

    def __str__(self) -> str:  # CSV-friendly
        return self.value


def estimate_dft_scheme(realization: ChannelRealization, p_u: float,
                        noise_var: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Each user alone trains all N elements with the DFT schedule.

    K*N slots total; LS per user is the same inversion as the anchor
    estimate. No visibility structure is used.
    """
    n = realization.n_irs
    phi1 = dft_reflection_matrix(n)
    out = np.empty_like(realization.h_users)
    for k in range(realization.n_users):
        y = simulate_step1(realization.h_users[k], phi1, p_u, noise_var, rng)
        out[k] = estimate_anchor(y, phi1, p_u)
    return out


def estimate_common_channel_scheme(realization: ChannelRealization,
                                   plan: PilotPlan,
                                   rng: np.random.Generator) -> np.ndarray:
    """Typical-user training plus full-length scaling for the others.

    User 0 trains alone for N slots; users 1..K-1 then transmit
    simultaneously for ceil((K-1)N/M) slots and are modeled as
    H_k = Hhat_0 diag(lam_k) over the full surface. Columns where the
    typical-user estimate is exactly zero cannot carry a ratio; their
    scaling entries are pinned to zero and excluded from the solve.
    """
    k_users, m, n = realization.h_users.shape
    sigma2 = plan.noise_var
    phi1 = dft_reflection_matrix(n)
    y = simulate_step1(realization.h_users[0], phi1, plan.p_u, sigma2, rng)
    h0_hat = estimate_anchor(y, phi1, plan.p_u)
    if not np.abs(h0_hat).any():
        raise EstimationError(
            "typical user's cascaded channel estimate is identically zero")
    out = np.zeros_like(realization.h_users)
    out[0] = h0_hat
    if k_users == 1:
        return out

    keep = np.flatnonzero(np.abs(h0_hat).sum(axis=0) > 0)
    n_slots = math.ceil((k_users - 1) * n / m)
    patterns = dft_reflection_matrix(n)[:, np.arange(n_slots) % n].T.copy()
    pilots = pilot_symbols(k_users - 1, n_slots)
    y3 = simulate_step3(realization.h_users[1:], patterns, pilots,
                        plan.p_u, sigma2, rng)
    xi = build_xi(h0_hat[:, keep], patterns[:, keep], pilots)
    sol, _ = SvdSolver(xi, y3 / math.sqrt(plan.p_u)).at(PINV_CUTOFF)
    lam = np.zeros((k_users - 1, n), dtype=complex)
    lam[:, keep] = sol.reshape(k_users - 1, keep.size)
    out[1:] = h0_hat[None, :, :] * lam[:, None, :]
    return out


def estimate_proposed_no_vr(realization: ChannelRealization, plan: PilotPlan,
                            rng: np.random.Generator,
                            step1_rng: np.random.Generator | None = None,
                            ) -> EstimationOutput:
    """Anchor pipeline with the support pinned to all N columns."""
    return run_proposed(realization, plan, rng, step1_rng=step1_rng,
                        forced_omega=np.arange(realization.n_irs))
