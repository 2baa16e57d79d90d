"""Ground-truth channel synthesis: LoS near-field gains, visibility masks,
and the cascaded per-user matrices.

All phases come from exact per-element path lengths, so spherical-wavefront
curvature is present whenever the geometry puts terminals inside the
Rayleigh distance. The BS-IRS matrix is masked by a BS-side visibility
mask V_G, each user's reflected vector by its own mask v_k; the anchor is
never masked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SystemGeometry


@dataclass(frozen=True)
class VRConfig:
    rho_bs: float = 128.0 / 480.0
    rho_user: float = 0.25
    bs_mode: str = "column"    # column | block | entry
    user_mode: str = "block"   # block | random


@dataclass
class ChannelRealization:
    """One draw of channels + masks; estimators consume this read-only."""

    g: np.ndarray          # (M, N) masked BS-IRS channel
    v_g: np.ndarray        # (M, N) 0/1
    r_users: np.ndarray    # (K, N) masked IRS-user channels
    v_users: np.ndarray    # (K, N) 0/1
    r_anchor: np.ndarray   # (N,) unmasked
    h_users: np.ndarray    # (K, M, N) cascaded
    h_anchor: np.ndarray   # (M, N) cascaded

    @property
    def m_bs(self) -> int:
        return self.g.shape[0]

    @property
    def n_irs(self) -> int:
        return self.g.shape[1]

    @property
    def n_users(self) -> int:
        return self.r_users.shape[0]


def los_entry(d, wavelength: float):
    """Free-space LoS gain: amplitude wavelength/(4 pi d), phase -2 pi d / wavelength.

    `d` may be a scalar or an array; every distance must be positive.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("LoS distance must be positive")
    amp = wavelength / (4.0 * np.pi * d)
    out = amp * np.exp(-2j * np.pi * d / wavelength)
    return complex(out) if out.ndim == 0 else out


def synth_full_channel(geometry: SystemGeometry):
    """Unmasked G (M x N), anchor vector r_a (N,), user vectors (K, N).

    The BS-IRS entries carry geometry.bs_link_gain on top of the isotropic
    free-space amplitude; reflected links are pure free space.
    """
    irs = geometry.irs_positions
    d_bs = np.linalg.norm(
        geometry.bs_positions[:, None, :] - irs[None, :, :], axis=2)
    g_unmasked = geometry.bs_link_gain * los_entry(d_bs, geometry.wavelength)
    d_anchor = np.linalg.norm(irs - geometry.anchor_position[None, :], axis=1)
    r_anchor = los_entry(d_anchor, geometry.wavelength)
    d_users = np.linalg.norm(
        geometry.user_positions[:, None, :] - irs[None, :, :], axis=2)
    r_users = los_entry(d_users, geometry.wavelength)
    return g_unmasked, r_anchor, r_users


def _pick_block(nx: int, ny: int, target: int, rng: np.random.Generator):
    """Rectangular w x h sub-grid whose area is as close to target as possible."""
    best = None
    for w in range(1, nx + 1):
        for h in range(1, ny + 1):
            err = abs(w * h - target)
            if best is None or err < best[0]:
                best = (err, w, h)
    _, w, h = best
    x0 = int(rng.integers(0, nx - w + 1))
    y0 = int(rng.integers(0, ny - h + 1))
    mask = np.zeros(nx * ny)
    for iy in range(y0, y0 + h):
        mask[iy * nx + x0: iy * nx + x0 + w] = 1.0
    return mask


def _pick_subset(n: int, count: int, rng: np.random.Generator):
    mask = np.zeros(n)
    mask[rng.choice(n, size=count, replace=False)] = 1.0
    return mask


def gen_vr_masks(geometry: SystemGeometry, vr_config: VRConfig,
                 rng: np.random.Generator):
    """Draw the BS-side mask V_G and one mask vector per user.

    Visible counts hit round(rho * N) exactly for column/random/entry modes
    and within one element for block mode. The BS mask is drawn first, then
    users in order, so a fixed rng state reproduces the masks bit-exactly.
    """
    m, n = geometry.m_bs, geometry.n_irs
    if not (0 < vr_config.rho_bs <= 1) or not (0 < vr_config.rho_user <= 1):
        raise ValueError("visible fractions must lie in (0, 1]")
    n_vis = max(1, int(round(vr_config.rho_bs * n)))
    if vr_config.bs_mode == "column":
        cols = _pick_subset(n, n_vis, rng)
        v_g = np.tile(cols, (m, 1))
    elif vr_config.bs_mode == "block":
        cols = _pick_block(geometry.nx, geometry.ny, n_vis, rng)
        v_g = np.tile(cols, (m, 1))
    elif vr_config.bs_mode == "entry":
        flat = _pick_subset(m * n, max(1, int(round(vr_config.rho_bs * m * n))),
                            rng)
        v_g = flat.reshape(m, n)
    else:
        raise ValueError(f"unknown BS mask mode {vr_config.bs_mode!r}")

    t_user = max(1, int(round(vr_config.rho_user * n)))
    v_users = np.zeros((geometry.n_users, n))
    for k in range(geometry.n_users):
        if vr_config.user_mode == "block":
            v_users[k] = _pick_block(geometry.nx, geometry.ny, t_user, rng)
        elif vr_config.user_mode == "random":
            v_users[k] = _pick_subset(n, t_user, rng)
        else:
            raise ValueError(f"unknown user mask mode {vr_config.user_mode!r}")
        if not v_users[k].any():
            raise ValueError(f"user {k} has an empty visibility region")
    return v_g, v_users


def apply_masks_and_cascade(g_unmasked, r_anchor, r_users_unmasked,
                            v_g, v_users) -> ChannelRealization:
    """Hadamard-apply the masks and form H_k = G diag(r_k), H_a = G diag(r_a)."""
    g_unmasked = np.asarray(g_unmasked)
    if g_unmasked.shape != np.shape(v_g):
        raise ValueError("G and V_G shapes differ")
    if np.shape(r_users_unmasked) != np.shape(v_users):
        raise ValueError("user channel and mask shapes differ")
    g = g_unmasked * v_g
    r_users = np.asarray(r_users_unmasked) * v_users
    h_users = g[None, :, :] * r_users[:, None, :]
    h_anchor = g * np.asarray(r_anchor)[None, :]
    return ChannelRealization(
        g=g, v_g=np.asarray(v_g, dtype=float),
        r_users=r_users, v_users=np.asarray(v_users, dtype=float),
        r_anchor=np.asarray(r_anchor),
        h_users=h_users, h_anchor=h_anchor)


def realize_channel(geometry: SystemGeometry, vr_config: VRConfig,
                    rng: np.random.Generator) -> ChannelRealization:
    """Convenience wrapper: synthesize, draw masks, cascade."""
    g0, r_a, r_u = synth_full_channel(geometry)
    v_g, v_users = gen_vr_masks(geometry, vr_config, rng)
    return apply_masks_and_cascade(g0, r_a, r_u, v_g, v_users)


def dump_realization(realization: ChannelRealization, path):
    """Columnar text dump for debugging.

    Sections: `G m n re im vis` for the BS-IRS matrix, `R k n re im vis`
    for user vectors, `A n re im` for the anchor vector.
    """
    r = realization
    with open(path, "w") as f:
        f.write("# section indices re im vis\n")
        for mm in range(r.m_bs):
            for nn in range(r.n_irs):
                f.write(f"G {mm} {nn} {r.g[mm, nn].real:.17g} "
                        f"{r.g[mm, nn].imag:.17g} {int(r.v_g[mm, nn])}\n")
        for k in range(r.n_users):
            for nn in range(r.n_irs):
                f.write(f"R {k} {nn} {r.r_users[k, nn].real:.17g} "
                        f"{r.r_users[k, nn].imag:.17g} "
                        f"{int(r.v_users[k, nn])}\n")
        for nn in range(r.n_irs):
            f.write(f"A {nn} {r.r_anchor[nn].real:.17g} "
                    f"{r.r_anchor[nn].imag:.17g}\n")
