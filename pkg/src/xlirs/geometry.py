"""Array and node geometry.

Positions are 3-D points in meters. The BS is a half-wavelength ULA along
the x axis; the IRS is a uniform rectangular grid in the x-z plane with
row-major element indexing n = iy * nx + ix. Users are drawn uniformly in
a horizontal disc, one fresh draw per Monte-Carlo trial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GeometryConfig:
    wavelength: float = 0.03
    m_bs: int = 128
    nx: int = 20
    ny: int = 24
    element_spacing: float | None = None  # None -> half wavelength
    bs_center: tuple = (100.0, 0.0, 20.0)
    irs_center: tuple = (0.0, 0.0, 50.0)
    anchor_position: tuple = (20.0, 20.0, 50.0)
    n_users: int = 8
    user_disc_center: tuple = (0.0, 20.0, 0.0)
    user_disc_radius: float = 100.0
    user_height: float = 0.0
    # amplitude gain on the BS-IRS link (antenna gains and link-budget
    # normalization folded together); 1.0 keeps pure isotropic free space
    bs_link_gain: float = 1.0

    @property
    def spacing(self) -> float:
        return self.element_spacing if self.element_spacing is not None \
            else 0.5 * self.wavelength


@dataclass(frozen=True)
class SystemGeometry:
    """Resolved positions for one realization."""

    wavelength: float
    bs_positions: np.ndarray      # (M, 3)
    irs_positions: np.ndarray     # (N, 3), row-major grid order
    nx: int
    ny: int
    element_spacing: float
    user_positions: np.ndarray    # (K, 3)
    anchor_position: np.ndarray   # (3,)
    bs_link_gain: float = 1.0

    @property
    def m_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def n_irs(self) -> int:
        return self.irs_positions.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.element_spacing <= 0:
            raise ValueError("element spacing must be positive")
        if self.bs_link_gain <= 0:
            raise ValueError("BS link gain must be positive")
        if self.n_irs != self.nx * self.ny:
            raise ValueError(
                f"IRS grid mismatch: {self.n_irs} positions for "
                f"{self.nx}x{self.ny} grid")
        # zero TX-RX separation would produce an infinite path gain
        for other in (self.bs_positions, self.user_positions,
                      self.anchor_position.reshape(1, 3)):
            d = np.linalg.norm(
                self.irs_positions[:, None, :] - other[None, :, :], axis=2)
            if not np.all(d > 0):
                raise ValueError("zero distance between an IRS element and "
                                 "a terminal")


def _ula_positions(m: int, spacing: float, center) -> np.ndarray:
    offsets = (np.arange(m) - (m - 1) / 2.0) * spacing
    pos = np.tile(np.asarray(center, dtype=float), (m, 1))
    pos[:, 0] += offsets
    return pos


def _grid_positions(nx: int, ny: int, spacing: float, center) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    ix = (np.arange(nx) - (nx - 1) / 2.0) * spacing
    iy = (np.arange(ny) - (ny - 1) / 2.0) * spacing
    # row-major: n = iy*nx + ix, elements sweep x fastest, z per row
    xx, zz = np.meshgrid(ix, iy)
    pos = np.zeros((nx * ny, 3))
    pos[:, 0] = c[0] + xx.ravel()
    pos[:, 1] = c[1]
    pos[:, 2] = c[2] + zz.ravel()
    return pos


def build_geometry(config: GeometryConfig, rng: np.random.Generator) -> SystemGeometry:
    """Lay out all arrays; user positions are drawn from `rng`.

    Identical (config, rng state) pairs produce bit-identical geometry.
    """
    if config.m_bs < 1 or config.nx < 1 or config.ny < 1:
        raise ValueError("array dimensions must be at least 1")
    if config.n_users < 1:
        raise ValueError("need at least one user")
    bs = _ula_positions(config.m_bs, 0.5 * config.wavelength, config.bs_center)
    irs = _grid_positions(config.nx, config.ny, config.spacing,
                          config.irs_center)
    # uniform over the disc: radius ~ R*sqrt(u) gives uniform area density
    c = np.asarray(config.user_disc_center, dtype=float)
    radii = config.user_disc_radius * np.sqrt(rng.uniform(size=config.n_users))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=config.n_users)
    users = np.zeros((config.n_users, 3))
    users[:, 0] = c[0] + radii * np.cos(angles)
    users[:, 1] = c[1] + radii * np.sin(angles)
    users[:, 2] = config.user_height
    return SystemGeometry(
        wavelength=config.wavelength,
        bs_positions=bs,
        irs_positions=irs,
        nx=config.nx,
        ny=config.ny,
        element_spacing=config.spacing,
        user_positions=users,
        anchor_position=np.asarray(config.anchor_position, dtype=float),
        bs_link_gain=config.bs_link_gain,
    )


def distance(a, b) -> float:
    """Euclidean distance between two points."""
    return float(np.linalg.norm(np.asarray(a, dtype=float)
                                - np.asarray(b, dtype=float)))


def rayleigh_distance(d_r: float, d_other: float, wavelength: float) -> float:
    """Near-field boundary 2*(D_R + D)^2 / wavelength for two apertures."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    if d_r < 0 or d_other < 0:
        raise ValueError("apertures must be nonnegative")
    return 2.0 * (d_r + d_other) ** 2 / wavelength
