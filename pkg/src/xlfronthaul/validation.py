"""Random tiny instances and the invariant suite behind ``xlfronthaul validate``."""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, SystemDims, complex_normal
from .system import (Allocation, HardwareProfile, access_distortion_cov, bi_svd_precoders,
                     effective_channels, evaluate_sinr, fixed_baseline_allocation,
                     fronthaul_distortion_cov, fronthaul_power, interference_covariances)
from .wmmse import WmmseOptions, combiners_and_mses, wmmse_optimize


@dataclass
class Instance:
    realization: ChannelRealization
    P: np.ndarray
    hw: HardwareProfile
    allocation: Allocation


def random_instance(rng: np.random.Generator, max_dim: int = 8, dims: SystemDims | None = None,
                    kappa_range=(0.9, 1.0)) -> Instance:
    """Random realization with per-link gains spread over 30 dB and unit noise.

    The allocation is a random feasible point: uniform powers in [0, p_max]
    and amplification at a random fraction of each fronthaul limit.
    """
    if dims is None:
        dims = SystemDims(*(int(v) for v in rng.integers(1, max_dim + 1, size=4)))
    K, L, N, M = dims.K, dims.L, dims.N, dims.M
    access_gain = 10 ** rng.uniform(-1.5, 1.5, size=(K, L, 1))
    front_gain = 10 ** rng.uniform(-1.5, 1.5, size=(L, 1, 1))
    h = np.sqrt(access_gain) * complex_normal(rng, (K, L, N))
    G = np.sqrt(front_gain) * complex_normal(rng, (L, M, N))
    realization = ChannelRealization(h=h, G=G)
    hw = HardwareProfile(kappa_ac=float(rng.uniform(*kappa_range)),
                         kappa_frt=float(rng.uniform(*kappa_range)),
                         noise_power=1.0, p_ue_max=1.0, p_frt_max=10.0)
    P = bi_svd_precoders(realization)
    p = rng.uniform(0, hw.p_ue_max, size=K)
    psi = np.array([fronthaul_power(1.0, P[l], realization.H(l), p, hw.noise_power)
                    for l in range(L)])
    alpha = np.sqrt(hw.p_frt_max / psi) * rng.uniform(0.2, 1.0, size=L)
    return Instance(realization, P, hw, Allocation(p=p, alpha=alpha))


def check_mse_identity(inst: Instance) -> float:
    """max_k |e_k (1 + SINR_k) - 1| under MMSE combining."""
    _, e = combiners_and_mses(inst.realization, inst.P, inst.allocation, inst.hw)
    sinr = evaluate_sinr(inst.realization, inst.P, inst.allocation, inst.hw)
    return float(np.max(np.abs(e * (1 + sinr) - 1)))


def check_unitarity(inst: Instance) -> float:
    N = inst.P.shape[1]
    return float(max(np.linalg.norm(P @ P.conj().T - np.eye(N)) for P in inst.P))


def check_covariances(inst: Instance) -> dict:
    """Worst-case figures for R_k and the distortion covariances."""
    real, P, hw, alloc = inst.realization, inst.P, inst.hw, inst.allocation
    R = interference_covariances(real, P, alloc, hw)
    herm = max(np.abs(Rk - Rk.conj().T).max() for Rk in R)
    min_eig = min(np.linalg.eigvalsh(Rk)[0] for Rk in R)
    offdiag, neg = 0.0, 0.0
    for l in range(P.shape[0]):
        H_l = real.H(l)
        for D in (access_distortion_cov(alloc.p, H_l, hw.kappa_ac),
                  fronthaul_distortion_cov(alloc.p, P[l], H_l, hw.kappa_frt, hw.noise_power)):
            offdiag = max(offdiag, np.abs(D - np.diag(np.diag(D))).max())
            neg = max(neg, -np.real(np.diag(D)).min(), np.abs(np.imag(np.diag(D))).max())
    return {"hermitian": float(herm), "min_eig_over_noise": float(min_eig / hw.noise_power),
            "offdiag": float(offdiag), "negative_diag": float(neg)}


def check_descent(inst: Instance, options: WmmseOptions | None = None) -> tuple:
    """(largest block-to-block increase, converged, iterations) of one WMMSE run."""
    opts = options or WmmseOptions()
    _, trace = wmmse_optimize(inst.realization, inst.P, inst.hw, opts)
    values = np.array([v for label, v in trace.blocks if label != "init"])
    rise = float(np.max(np.diff(values), initial=-np.inf))
    return rise, trace.converged, trace.iterations


def run_suite(n_trials: int = 20, seed: int = 0) -> list:
    """Invariant checks on random tiny systems; returns (name, passed, detail) tuples."""
    rng = np.random.default_rng(seed)
    instances = [random_instance(rng, max_dim=4) for _ in range(n_trials)]
    results = []

    worst = max(check_mse_identity(i) for i in instances)
    results.append(("mse identity e*(1+SINR)=1", worst <= 1e-9, f"max error {worst:.2e}"))

    worst = max(check_unitarity(i) for i in instances)
    results.append(("precoders unitary", worst <= 1e-10, f"max ||PP^H-I||_F {worst:.2e}"))

    cov = [check_covariances(i) for i in instances]
    min_eig = min(c["min_eig_over_noise"] for c in cov)
    results.append(("R_k >= noise floor", min_eig >= 1 - 1e-9, f"min eig / sigma^2 {min_eig:.12f}"))
    bad = max(max(c["offdiag"], c["negative_diag"]) for c in cov)
    results.append(("distortion covariances diagonal, nonnegative", bad == 0.0, f"worst {bad:.2e}"))

    leftover = 0.0
    for inst in instances:
        for l in range(inst.P.shape[0]):
            H_l = inst.realization.H(l)
            leftover = max(leftover,
                           np.abs(access_distortion_cov(inst.allocation.p, H_l, 1.0)).max(),
                           np.abs(fronthaul_distortion_cov(inst.allocation.p, inst.P[l], H_l, 1.0,
                                                           inst.hw.noise_power)).max())
    results.append(("kappa = 1 removes distortion", leftover == 0.0, f"max entry {leftover:.2e}"))

    descent = [check_descent(i) for i in instances[:10]]
    rise = max(d[0] for d in descent)
    results.append(("WMMSE objective monotone", rise <= 1e-7, f"largest increase {rise:.2e}"))
    conv = sum(d[1] for d in descent)
    results.append(("WMMSE converged within cap", conv == len(descent), f"{conv}/{len(descent)}"))

    tight = 0.0
    for inst in instances:
        base = fixed_baseline_allocation(inst.realization, inst.P, inst.hw)
        for l in range(inst.P.shape[0]):
            pf = fronthaul_power(base.alpha[l], inst.P[l], inst.realization.H(l), base.p,
                                 inst.hw.noise_power)
            tight = max(tight, abs(pf / inst.hw.p_frt_max - 1))
    results.append(("baseline fronthaul power tight", bool(tight <= 1e-9), f"max rel. gap {tight:.2e}"))

    g_err = 0.0
    for inst in instances:
        eff = effective_channels(inst.realization, inst.P, inst.allocation.alpha)
        direct = np.einsum("l,lmn,lnj,klj->km", inst.allocation.alpha, inst.realization.G,
                           inst.P, inst.realization.h)
        g_err = max(g_err, float(np.abs(eff.g - direct).max() / np.abs(direct).max()))
    results.append(("effective channel recomputation", g_err <= 1e-12, f"max rel. error {g_err:.2e}"))
    return results
