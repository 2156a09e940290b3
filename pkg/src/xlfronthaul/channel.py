"""Geometry and random channel generation.

Access links are correlated Rayleigh (local scattering correlation), fronthaul
links are correlated Rician with a Kronecker NLoS part. Every array is a
horizontal uniform linear array along the x axis.
"""

from dataclasses import dataclass, field
import math

import numpy as np


@dataclass(frozen=True)
class SystemDims:
    L: int  # subarrays
    N: int  # antennas per subarray
    M: int  # CPU antennas
    K: int  # UEs

    def __post_init__(self):
        for name in ("L", "N", "M", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class LayoutConfig:
    """Deployment layout in meters.

    The subarray grid lies in the vertical plane y = ``array_y``, columns are
    centred on ``array_x_center`` and rows start at ``z_min``.
    """

    grid_spacing: float = 10.0
    array_x_center: float = 100.0
    array_y: float = 200.0
    z_min: float = 10.0
    cpu_position: tuple = (100.0, 200.0, 90.0)
    area_min: tuple = (0.0, 0.0)
    area_max: tuple = (200.0, 200.0)
    ue_height: float = 0.0  # 10 m below the lowest subarray row
    grid_shape: tuple | None = None  # (rows, cols); None -> most square factorisation of L

    def __post_init__(self):
        if self.grid_spacing <= 0:
            raise ValueError("grid_spacing must be positive")
        if not all(hi > lo for lo, hi in zip(self.area_min, self.area_max)):
            raise ValueError("UE drop region is empty")


@dataclass(frozen=True)
class ChannelConfig:
    asd_azimuth: float = 15.0  # degrees
    asd_elevation: float = 15.0  # degrees
    rician_k_factor: float = 10.0  # dB
    bandwidth: float = 50e6  # Hz
    noise_figure: float = 3.0  # dB
    pathloss_ref_db: float = -30.5
    pathloss_exponent_db_per_decade: float = 36.7
    shadowing_std: float = 0.0  # dB
    carrier_spacing: float = 0.5  # element spacing in wavelengths
    grid_points: int = 101  # per angle axis in the correlation quadrature
    seed: int = 0

    def __post_init__(self):
        if self.asd_azimuth <= 0 or self.asd_elevation <= 0:
            raise ValueError("angular spreads must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.shadowing_std < 0:
            raise ValueError("shadowing_std must be nonnegative")
        if self.grid_points < 100:
            raise ValueError("grid_points must be >= 100")


@dataclass
class Geometry:
    subarray_positions: np.ndarray  # (L, 3)
    cpu_position: np.ndarray  # (3,)
    ue_positions: np.ndarray  # (K, 3)
    subarray_offsets: np.ndarray = field(default=None)  # (N, 3) in wavelengths
    cpu_offsets: np.ndarray = field(default=None)  # (M, 3) in wavelengths


@dataclass
class ChannelRealization:
    h: np.ndarray  # (K, L, N) access channels h_kl
    G: np.ndarray  # (L, M, N) fronthaul channels G_l

    @property
    def dims(self) -> SystemDims:
        K, L, N = self.h.shape
        return SystemDims(L=L, N=N, M=self.G.shape[1], K=K)

    def H(self, l: int) -> np.ndarray:
        """Access channel matrix [h_1l ... h_Kl] of subarray ``l`` (N x K)."""
        return self.h[:, l, :].T


def ula_offsets(n: int, spacing: float = 0.5) -> np.ndarray:
    """Element offsets (in wavelengths) of an n-element ULA along x, centred."""
    offsets = np.zeros((n, 3))
    offsets[:, 0] = (np.arange(n) - (n - 1) / 2) * spacing
    return offsets


def _grid_shape(L: int) -> tuple:
    rows = int(math.isqrt(L))
    while L % rows:
        rows -= 1
    return rows, L // rows


def build_geometry(dims: SystemDims, layout: LayoutConfig = LayoutConfig(),
                   rng: np.random.Generator | int | None = None,
                   carrier_spacing: float = 0.5) -> Geometry:
    rows, cols = layout.grid_shape or _grid_shape(dims.L)
    if rows * cols != dims.L:
        raise ValueError(f"grid {rows}x{cols} does not hold L={dims.L} subarrays")
    s = layout.grid_spacing
    xs = layout.array_x_center + (np.arange(cols) - (cols - 1) / 2) * s
    zs = layout.z_min + np.arange(rows) * s
    zz, xx = np.meshgrid(zs, xs, indexing="ij")
    sub = np.column_stack([xx.ravel(), np.full(dims.L, layout.array_y), zz.ravel()])

    rng = np.random.default_rng(rng)
    lo, hi = np.asarray(layout.area_min, float), np.asarray(layout.area_max, float)
    ue_xy = lo + (hi - lo) * rng.random((dims.K, 2))
    ue = np.column_stack([ue_xy, np.full(dims.K, layout.ue_height)])

    return Geometry(
        subarray_positions=sub,
        cpu_position=np.asarray(layout.cpu_position, float),
        ue_positions=ue,
        subarray_offsets=ula_offsets(dims.N, carrier_spacing),
        cpu_offsets=ula_offsets(dims.M, carrier_spacing),
    )


def noise_power(bandwidth: float, noise_figure: float) -> float:
    """Thermal noise power in watts for ``bandwidth`` Hz and a noise figure in dB."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    dbm = -174 + 10 * np.log10(bandwidth) + noise_figure
    return 10 ** ((dbm - 30) / 10)


def path_loss(distance, config: ChannelConfig = ChannelConfig(),
              rng: np.random.Generator | None = None):
    """Large-scale gain (linear) at ``distance`` meters; vectorised over distance."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    gain_db = config.pathloss_ref_db - config.pathloss_exponent_db_per_decade * np.log10(d)
    if config.shadowing_std > 0:
        if rng is None:
            raise ValueError("shadowing requires a random generator")
        gain_db = gain_db + config.shadowing_std * rng.standard_normal(d.shape)
    gain = 10 ** (gain_db / 10)
    return float(gain) if gain.ndim == 0 else gain


def direction_angles(src, dst) -> tuple:
    """Azimuth and elevation (radians) of ``dst`` as seen from ``src``."""
    d = np.asarray(dst, float) - np.asarray(src, float)
    return math.atan2(d[1], d[0]), math.atan2(d[2], math.hypot(d[0], d[1]))


def _unit_directions(azimuth, elevation):
    azimuth, elevation = np.broadcast_arrays(azimuth, elevation)
    return np.stack([np.cos(elevation) * np.cos(azimuth),
                     np.cos(elevation) * np.sin(azimuth),
                     np.sin(elevation)], axis=-1)


def steering_vector(offsets: np.ndarray, azimuth, elevation) -> np.ndarray:
    """Unit-modulus array response; trailing axis indexes antennas."""
    u = _unit_directions(azimuth, elevation)
    return np.exp(2j * np.pi * (u @ offsets.T))


def local_scattering_correlation(offsets: np.ndarray, azimuth: float, elevation: float,
                                 asd_azimuth: float, asd_elevation: float,
                                 grid_points: int = 101) -> np.ndarray:
    """Spatial correlation E{a a^H} with Gaussian angular deviations.

    ASDs are in degrees. The expectation is evaluated on a product grid over
    +-4 standard deviations with normalised Gaussian weights.
    """
    if asd_azimuth <= 0 or asd_elevation <= 0:
        raise ValueError("angular spreads must be positive")
    n = offsets.shape[0]
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    sa, se = np.deg2rad(asd_azimuth), np.deg2rad(asd_elevation)
    t = np.linspace(-4, 4, grid_points)
    w = np.exp(-t ** 2 / 2)
    w /= w.sum()
    az, el = np.meshgrid(azimuth + sa * t, elevation + se * t, indexing="ij")
    weights = np.outer(w, w).ravel()
    A = steering_vector(offsets, az.ravel(), el.ravel())  # (G, n)
    R = (A.T * weights) @ A.conj()
    R = (R + R.conj().T) / 2
    np.fill_diagonal(R, 1.0)
    return R


def psd_sqrt(R: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Hermitian square root of a PSD matrix; rejects clearly indefinite input."""
    vals, vecs = np.linalg.eigh(R)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -tol * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {vals.min():.3e})")
    # eigenvalues at round-off level are zeroed so rank-deficient R stays rank-deficient
    vals = np.where(vals > 10 * np.finfo(float).eps * R.shape[0] * scale, vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric standard complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def sample_access_channel(R: np.ndarray, beta: float, rng: np.random.Generator,
                          size: int | None = None) -> np.ndarray:
    """Draw h = sqrt(beta) R^(1/2) z; ``size`` draws stacked along axis 0."""
    root = psd_sqrt(R)
    n = R.shape[0]
    z = complex_normal(rng, (n,) if size is None else (size, n))
    return np.sqrt(beta) * (z @ root.T)


def sample_fronthaul_channel(geometry: Geometry, l: int, beta: float, k_factor_db: float,
                             R_cpu: np.ndarray, R_sub: np.ndarray,
                             rng: np.random.Generator) -> np.ndarray:
    """Rician fronthaul matrix from subarray ``l`` to the CPU (M x N).

    ``k_factor_db = inf`` gives the pure line-of-sight channel.
    """
    sub, cpu = geometry.subarray_positions[l], geometry.cpu_position
    a_cpu = steering_vector(geometry.cpu_offsets, *direction_angles(cpu, sub))
    a_sub = steering_vector(geometry.subarray_offsets, *direction_angles(sub, cpu))
    los = np.outer(a_cpu, a_sub)
    if np.isinf(k_factor_db):
        return np.sqrt(beta) * los
    kr = 10 ** (k_factor_db / 10)
    Z = complex_normal(rng, los.shape)
    nlos = psd_sqrt(R_cpu) @ Z @ psd_sqrt(R_sub).T
    return np.sqrt(beta) * (np.sqrt(kr / (1 + kr)) * los + np.sqrt(1 / (1 + kr)) * nlos)


def generate_realization(geometry: Geometry, config: ChannelConfig,
                         rng: np.random.Generator) -> ChannelRealization:
    """One draw of every access and fronthaul channel for a fixed geometry."""
    sub = geometry.subarray_positions
    ue = geometry.ue_positions
    L, K = sub.shape[0], ue.shape[0]
    N, M = geometry.subarray_offsets.shape[0], geometry.cpu_offsets.shape[0]
    asd = (config.asd_azimuth, config.asd_elevation)

    dist_access = np.linalg.norm(ue[:, None, :] - sub[None, :, :], axis=-1)
    beta_access = path_loss(dist_access, config, rng)
    dist_front = np.linalg.norm(sub - geometry.cpu_position, axis=-1)
    beta_front = path_loss(dist_front, config, rng)

    h = np.empty((K, L, N), dtype=complex)
    for k in range(K):
        for l in range(L):
            R = local_scattering_correlation(geometry.subarray_offsets,
                                             *direction_angles(sub[l], ue[k]), *asd,
                                             grid_points=config.grid_points)
            h[k, l] = sample_access_channel(R, beta_access[k, l], rng)

    G = np.empty((L, M, N), dtype=complex)
    for l in range(L):
        R_cpu = local_scattering_correlation(geometry.cpu_offsets,
                                             *direction_angles(geometry.cpu_position, sub[l]),
                                             *asd, grid_points=config.grid_points)
        R_sub = local_scattering_correlation(geometry.subarray_offsets,
                                             *direction_angles(sub[l], geometry.cpu_position),
                                             *asd, grid_points=config.grid_points)
        G[l] = sample_fronthaul_channel(geometry, l, beta_front[l], config.rician_k_factor,
                                        R_cpu, R_sub, rng)
    return ChannelRealization(h=h, G=G)


def iid_realization(dims: SystemDims, rng: np.random.Generator,
                    access_gain: float = 1.0, fronthaul_gain: float = 1.0) -> ChannelRealization:
    """Unstructured i.i.d. Rayleigh realization, for validation on tiny systems."""
    h = np.sqrt(access_gain) * complex_normal(rng, (dims.K, dims.L, dims.N))
    G = np.sqrt(fronthaul_gain) * complex_normal(rng, (dims.L, dims.M, dims.N))
    return ChannelRealization(h=h, G=G)
