"""Physical-layer quantities for one fixed channel realization.

Shapes follow ``ChannelRealization``: h is (K, L, N), G is (L, M, N), the
precoders P are stacked as (L, N, N) and effective channels b as (K, L, M).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import ChannelRealization, complex_normal


@dataclass(frozen=True)
class HardwareProfile:
    kappa_ac: float = 0.95
    kappa_frt: float = 0.95
    noise_power: float = 3.98e-13  # watts
    p_ue_max: float = 0.2  # watts
    p_frt_max: float = 10.0  # watts

    def __post_init__(self):
        for name in ("kappa_ac", "kappa_frt"):
            kappa = getattr(self, name)
            if not 0 < kappa <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {kappa}")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.p_ue_max <= 0 or self.p_frt_max <= 0:
            raise ValueError("power limits must be positive")

    @property
    def c(self) -> float:
        return self.kappa_ac * self.kappa_frt

    def with_kappa(self, kappa_ac: float, kappa_frt: float) -> "HardwareProfile":
        return HardwareProfile(kappa_ac, kappa_frt, self.noise_power, self.p_ue_max, self.p_frt_max)


@dataclass
class Allocation:
    p: np.ndarray  # (K,) UE powers in watts
    alpha: np.ndarray  # (L,) fronthaul amplification coefficients

    def copy(self) -> "Allocation":
        return Allocation(self.p.copy(), self.alpha.copy())


@dataclass
class EffectiveChannels:
    b: np.ndarray  # (K, L, M) per-subarray effective channels
    g: np.ndarray  # (K, M) aggregated effective channels


def access_distortion_cov(p, H_l: np.ndarray, kappa_ac: float) -> np.ndarray:
    """Diagonal access-side distortion covariance of one subarray (N x N)."""
    power = np.abs(H_l) ** 2 @ np.asarray(p, float)
    return np.diag((1 - kappa_ac) * power).astype(complex)


def fronthaul_distortion_cov(p, P_l: np.ndarray, H_l: np.ndarray, kappa_frt: float,
                             noise_power: float) -> np.ndarray:
    """Diagonal fronthaul distortion covariance of one subarray, before the alpha^2 factor."""
    PH = P_l @ H_l
    power = np.abs(PH) ** 2 @ np.asarray(p, float) + noise_power * np.sum(np.abs(P_l) ** 2, axis=1)
    return np.diag((1 - kappa_frt) * power).astype(complex)


def _normalise_phases(U: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Per-column phase factors that make the first nonzero entry real nonnegative."""
    phases = np.ones(U.shape[1], dtype=complex)
    for j in range(U.shape[1]):
        col = U[:, j]
        idx = np.flatnonzero(np.abs(col) > tol * max(1.0, np.abs(col).max()))
        if idx.size:
            z = col[idx[0]]
            phases[j] = np.conj(z) / abs(z)
    return phases


def bi_svd_precoder(G_l: np.ndarray, H_l: np.ndarray) -> np.ndarray:
    """Unitary precoder V_G U_H^H from full SVDs of the fronthaul and access channels.

    Left singular vectors are rotated so that their first nonzero entry is real
    and nonnegative; the paired right singular vectors of G get the same
    rotation, and right singular vectors of G outside its row space are
    normalised directly.
    """
    U_G, s_G, Vh_G = np.linalg.svd(G_l, full_matrices=True)
    U_H, _, _ = np.linalg.svd(H_l, full_matrices=True)

    V_G = Vh_G.conj().T
    phases = np.ones(V_G.shape[1], dtype=complex)
    r = s_G.size
    phases[:r] = _normalise_phases(U_G[:, :r])
    phases[r:] = _normalise_phases(V_G[:, r:])
    V_G = V_G * phases
    U_H = U_H * _normalise_phases(U_H)
    return V_G @ U_H.conj().T


def bi_svd_precoders(realization: ChannelRealization) -> np.ndarray:
    L = realization.G.shape[0]
    return np.stack([bi_svd_precoder(realization.G[l], realization.H(l)) for l in range(L)])


def effective_channels(realization: ChannelRealization, P: np.ndarray, alpha) -> EffectiveChannels:
    GP = realization.G @ P  # (L, M, N)
    b = np.einsum("lmn,kln->klm", GP, realization.h)
    g = np.einsum("l,klm->km", np.asarray(alpha, float), b)
    return EffectiveChannels(b=b, g=g)


def noise_distortion_covariance(realization: ChannelRealization, P: np.ndarray,
                                allocation: Allocation, hw: "HardwareProfile") -> np.ndarray:
    """The part of every R_k that does not depend on k (M x M).

    Amplified access distortion and noise, amplified fronthaul distortion and
    CPU noise.
    """
    G, h = realization.G, realization.h
    M = G.shape[1]
    p = np.asarray(allocation.p, float)
    a2 = np.asarray(allocation.alpha, float) ** 2
    sigma2 = hw.noise_power
    GP = G @ P
    Ph = np.einsum("lnm,klm->lkn", P, h)
    d_ac = (1 - hw.kappa_ac) * np.einsum("k,kln->ln", p, np.abs(h) ** 2)
    d_frt = (1 - hw.kappa_frt) * (np.einsum("k,lkn->ln", p, np.abs(Ph) ** 2)
                                  + sigma2 * np.sum(np.abs(P) ** 2, axis=2))
    Q = np.einsum("lmn,ln,lkn->mk", GP, a2[:, None] * hw.kappa_frt * (d_ac + sigma2), GP.conj())
    Q += np.einsum("lmn,ln,lkn->mk", G, a2[:, None] * d_frt, G.conj())
    Q += sigma2 * np.eye(M)
    return (Q + Q.conj().T) / 2


def interference_covariances(realization: ChannelRealization, P: np.ndarray,
                             allocation: Allocation, hw: HardwareProfile,
                             eff: EffectiveChannels | None = None) -> np.ndarray:
    """R_k for every UE, stacked as (K, M, M)."""
    if eff is None:
        eff = effective_channels(realization, P, allocation.alpha)
    Q = noise_distortion_covariance(realization, P, allocation, hw)
    g = eff.g
    weighted = hw.c * allocation.p[:, None, None] * (g[:, :, None] * g[:, None, :].conj())
    K = g.shape[0]
    R = np.empty((K,) + Q.shape, dtype=complex)
    for k in range(K):
        # summed over i != k directly: subtracting from the total can break PSD-ness
        R[k] = Q + weighted[np.arange(K) != k].sum(axis=0)
        R[k] = (R[k] + R[k].conj().T) / 2
    return R


def interference_covariance(k: int, realization: ChannelRealization, P: np.ndarray,
                            allocation: Allocation, hw: HardwareProfile) -> np.ndarray:
    return interference_covariances(realization, P, allocation, hw)[k]


def sinr_and_se(g_k: np.ndarray, R_k: np.ndarray, p_k: float, hw: HardwareProfile,
                prelog: float = 1.0) -> tuple:
    """SINR with the distortion-aware optimal combiner, and SE = prelog*log2(1+SINR)."""
    x = cho_solve(cho_factor(R_k), g_k)
    sinr = max(0.0, hw.c * p_k * float(np.real(np.vdot(g_k, x))))
    return sinr, prelog * np.log2(1 + sinr)


def evaluate_sinr(realization: ChannelRealization, P: np.ndarray, allocation: Allocation,
                  hw: HardwareProfile) -> np.ndarray:
    """SINR of every UE under ``allocation``."""
    eff = effective_channels(realization, P, allocation.alpha)
    R = interference_covariances(realization, P, allocation, hw, eff)
    return np.array([sinr_and_se(eff.g[k], R[k], allocation.p[k], hw)[0]
                     for k in range(eff.g.shape[0])])


def spectral_efficiency(realization: ChannelRealization, P: np.ndarray, allocation: Allocation,
                        hw: HardwareProfile, prelog: float = 1.0) -> np.ndarray:
    return prelog * np.log2(1 + evaluate_sinr(realization, P, allocation, hw))


def fronthaul_power(alpha_l: float, P_l: np.ndarray, H_l: np.ndarray, p, noise_power: float) -> float:
    """Fronthaul transmit power of one subarray."""
    PH = P_l @ H_l
    signal = float(np.sum(np.abs(PH) ** 2 @ np.asarray(p, float)))
    return alpha_l ** 2 * (signal + noise_power * float(np.sum(np.abs(P_l) ** 2)))


def forwarding_power(realization: ChannelRealization, P: np.ndarray, p, noise_power: float) -> np.ndarray:
    """Per-subarray forwarded power at unit amplification, psi_l."""
    L = P.shape[0]
    return np.array([fronthaul_power(1.0, P[l], realization.H(l), p, noise_power) for l in range(L)])


def precoded_gains(realization: ChannelRealization, P: np.ndarray) -> np.ndarray:
    """xi[l, k] = ||P_l h_kl||^2."""
    Ph = np.einsum("lnm,klm->lkn", P, realization.h)
    return np.sum(np.abs(Ph) ** 2, axis=-1)


def fixed_baseline_allocation(realization: ChannelRealization, P: np.ndarray,
                              hw: HardwareProfile) -> Allocation:
    """Maximum UE power with each subarray amplifying up to its fronthaul power limit."""
    K = realization.h.shape[0]
    p = np.full(K, hw.p_ue_max)
    psi = forwarding_power(realization, P, p, hw.noise_power)
    return Allocation(p=p, alpha=np.sqrt(hw.p_frt_max / psi))


def simulate_signal_samples(realization: ChannelRealization, P: np.ndarray,
                            allocation: Allocation, hw: HardwareProfile, n_samples: int,
                            rng: np.random.Generator) -> tuple:
    """Empirical mean and covariance of the CPU received signal.

    Symbols, distortions and noises are drawn sample by sample and pushed
    through the two-slot AF chain; used as an oracle for the closed-form
    covariances.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    h, G = realization.h, realization.G
    K, L, N = h.shape
    M = G.shape[1]
    sigma2 = hw.noise_power
    p = np.asarray(allocation.p, float)

    s = complex_normal(rng, (n_samples, K))
    y = np.sqrt(sigma2) * complex_normal(rng, (n_samples, M))
    for l in range(L):
        H_l = realization.H(l)
        d_ac = np.real(np.diag(access_distortion_cov(p, H_l, hw.kappa_ac)))
        d_frt = np.real(np.diag(fronthaul_distortion_cov(p, P[l], H_l, hw.kappa_frt, sigma2)))
        eta_ac = np.sqrt(d_ac) * complex_normal(rng, (n_samples, N))
        n_ac = np.sqrt(sigma2) * complex_normal(rng, (n_samples, N))
        y_l = np.sqrt(hw.kappa_ac) * (s * np.sqrt(p)) @ H_l.T + eta_ac + n_ac
        eta_frt = allocation.alpha[l] * np.sqrt(d_frt) * complex_normal(rng, (n_samples, N))
        y_tilde = np.sqrt(hw.kappa_frt) * allocation.alpha[l] * y_l @ P[l].T + eta_frt
        y += y_tilde @ G[l].T

    mean = y.mean(axis=0)
    cov = (y.T @ y.conj()) / n_samples
    return mean, cov
