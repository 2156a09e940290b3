"""Alternating WMMSE optimisation of UE powers and fronthaul amplification.

Each outer iteration updates, in order, the MMSE combiners, the MSE weights,
the UE powers (a separable QCQP in q = sqrt(p)) and the amplification
coefficients (a box-constrained QP). Every block update is an exact block
minimisation of sum_k (w_k e_k - ln w_k), so the objective is monotone.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import ChannelRealization
from .qpsolve import BoxQp, KktReport, SeparableQcqp, solve_box_qp, solve_separable_qcqp
from .system import (Allocation, HardwareProfile, effective_channels, fixed_baseline_allocation,
                     interference_covariances, precoded_gains)

log = logging.getLogger(__name__)


@dataclass
class WmmseOptions:
    max_iter: int = 200
    tol: float = 1e-6  # relative change of the objective between outer iterations
    solver_tol: float = 1e-10
    solver_max_iter: int = 10_000
    init: Allocation | None = None  # None -> fixed baseline
    record_blocks: bool = True


@dataclass
class WmmseState:
    v: np.ndarray  # (K, M) combiners
    w: np.ndarray  # (K,) weights
    e: np.ndarray  # (K,) MSEs
    allocation: Allocation
    objective: float
    iteration: int = 0


@dataclass
class UePowerSubproblem:
    A: np.ndarray  # (K,)
    B: np.ndarray  # (K,)
    xi: np.ndarray  # (L, K) precoded access gains ||P_l h_kl||^2
    alpha: np.ndarray  # (L,)
    noise_forward: np.ndarray  # (L,) sigma^2 tr(P_l P_l^H)
    p_ue_max: float
    p_frt_max: float

    def objective(self, q) -> float:
        q = np.asarray(q, float)
        return float(np.sum(self.A * q ** 2 - 2 * self.B * q))


@dataclass
class AlphaSubproblem:
    H: np.ndarray  # (L, L) real symmetric PSD
    f: np.ndarray  # (L,)
    psi: np.ndarray  # (L,) forwarded power at unit amplification
    upper: np.ndarray  # (L,) sqrt(p_frt_max / psi)

    def objective(self, alpha) -> float:
        alpha = np.asarray(alpha, float)
        return float(alpha @ self.H @ alpha - 2 * self.f @ alpha)


@dataclass
class WmmseTrace:
    """Objective after every block update plus per-iteration summaries."""

    blocks: list = field(default_factory=list)  # (label, objective)
    outer: list = field(default_factory=list)  # objective after each v/w update
    sum_se: list = field(default_factory=list)  # bit/s/Hz after each v/w update
    reports: list = field(default_factory=list)  # (label, KktReport)
    iterations: int = 0
    converged: bool = False
    message: str = ""


def mmse_combiner(g_k: np.ndarray, R_k: np.ndarray, rho_k: float) -> np.ndarray:
    """Distortion-aware LMMSE receiver (R_k + rho g g^H)^-1 sqrt(rho) g."""
    if rho_k <= 0:
        return np.zeros_like(g_k)
    S = R_k + rho_k * np.outer(g_k, g_k.conj())
    return np.sqrt(rho_k) * cho_solve(cho_factor(S), g_k)


def mse(v_k: np.ndarray, g_k: np.ndarray, R_k: np.ndarray, rho_k: float) -> float:
    vg = np.vdot(v_k, g_k)
    quad = np.real(np.vdot(v_k, R_k @ v_k)) + rho_k * abs(vg) ** 2
    return float(1 - 2 * np.sqrt(rho_k) * np.real(vg) + quad)


def optimal_weights(e) -> np.ndarray:
    e = np.asarray(e, float)
    if np.any(e <= 0):
        raise ValueError(f"MSE values must be positive, got min {e.min():.3e}")
    return 1 / e


def weighted_mse_objective(w, e) -> float:
    w = np.asarray(w, float)
    return float(np.sum(w * np.asarray(e, float) - np.log(w)))


def all_mses(v: np.ndarray, realization: ChannelRealization, P: np.ndarray,
             allocation: Allocation, hw: HardwareProfile) -> np.ndarray:
    eff = effective_channels(realization, P, allocation.alpha)
    R = interference_covariances(realization, P, allocation, hw, eff)
    rho = hw.c * allocation.p
    return np.array([mse(v[k], eff.g[k], R[k], rho[k]) for k in range(len(rho))])


def combiners_and_mses(realization: ChannelRealization, P: np.ndarray, allocation: Allocation,
                       hw: HardwareProfile) -> tuple:
    """MMSE combiners for ``allocation`` and the MSEs they achieve."""
    eff = effective_channels(realization, P, allocation.alpha)
    R = interference_covariances(realization, P, allocation, hw, eff)
    rho = hw.c * allocation.p
    K = len(rho)
    v = np.stack([mmse_combiner(eff.g[k], R[k], rho[k]) for k in range(K)])
    e = np.array([mse(v[k], eff.g[k], R[k], rho[k]) for k in range(K)])
    return v, e


def _projections(v: np.ndarray, realization: ChannelRealization, P: np.ndarray) -> tuple:
    """G_l^H v_k and P_l^H G_l^H v_k, each shaped (K, L, N)."""
    Gv = np.einsum("lmn,km->kln", realization.G.conj(), v)
    PGv = np.einsum("lmn,klm->kln", P.conj(), Gv)
    return Gv, PGv


def assemble_ue_power_subproblem(state: WmmseState, realization: ChannelRealization,
                                 P: np.ndarray, hw: HardwareProfile) -> UePowerSubproblem:
    """Coefficients of sum_k w_k e_k as a separable quadratic in q = sqrt(p)."""
    v, w, alpha = state.v, state.w, state.allocation.alpha
    c = hw.c
    a2 = alpha ** 2
    eff = effective_channels(realization, P, alpha)
    Ph = np.einsum("lnm,klm->kln", P, realization.h)
    Gv, PGv = _projections(v, realization, P)

    vg = v.conj() @ eff.g.T  # vg[j, k] = v_j^H g_k
    K = vg.shape[0]
    interference = c * np.abs(vg) ** 2 * (1 - np.eye(K))
    access = hw.kappa_frt * (1 - hw.kappa_ac) * np.einsum(
        "l,jln,kln->jk", a2, np.abs(PGv) ** 2, np.abs(realization.h) ** 2)
    fronthaul = (1 - hw.kappa_frt) * np.einsum("l,jln,kln->jk", a2, np.abs(Gv) ** 2, np.abs(Ph) ** 2)
    phi = interference + access + fronthaul

    own = np.diag(vg)
    A = w * c * np.abs(own) ** 2 + w @ phi
    B = w * np.sqrt(c) * np.real(own)
    xi = precoded_gains(realization, P)
    noise_forward = hw.noise_power * np.sum(np.abs(P) ** 2, axis=(1, 2))
    return UePowerSubproblem(A=np.maximum(A, 0.0), B=B, xi=xi, alpha=alpha.copy(),
                             noise_forward=noise_forward, p_ue_max=hw.p_ue_max,
                             p_frt_max=hw.p_frt_max)


def update_ue_powers(sub: UePowerSubproblem, tol: float = 1e-10, max_iter: int = 10_000,
                     p_prev=None) -> tuple:
    """Solve the q-QCQP; returns (p, KktReport).

    Solved in q / sqrt(p_ue_max) so the box is [0, 1]. If ``p_prev`` is given
    and scores better on the subproblem objective, it is kept.
    """
    s = np.sqrt(sub.p_ue_max)
    a2 = sub.alpha ** 2
    d = sub.p_frt_max - a2 * sub.noise_forward
    d = np.maximum(d, 1e-12 * sub.p_frt_max)
    problem = SeparableQcqp(a=sub.A * s ** 2, b=sub.B * s, upper=np.ones_like(sub.A),
                            c=a2[:, None] * sub.xi * s ** 2, d=d)
    x, report = solve_separable_qcqp(problem, tol=tol, max_iter=max_iter)
    q = x * s
    if p_prev is not None:
        q_prev = np.sqrt(np.asarray(p_prev, float))
        if sub.objective(q_prev) < sub.objective(q):
            q = q_prev
    return q ** 2, report


def assemble_alpha_subproblem(state: WmmseState, realization: ChannelRealization,
                              P: np.ndarray, hw: HardwareProfile) -> AlphaSubproblem:
    """Coefficients of sum_k w_k e_k as the real quadratic a'Ha - 2f'a in alpha."""
    v, w, p = state.v, state.w, state.allocation.p
    c = hw.c
    sigma2 = hw.noise_power
    eff = effective_channels(realization, P, np.ones(P.shape[0]))
    t = np.einsum("km,ilm->kil", v.conj(), eff.b)  # t[k, i, l] = v_k^H b_il

    f = np.real(np.einsum("k,kl->l", w * np.sqrt(c * p), t[np.arange(len(w)), np.arange(len(w))]))
    outer = np.einsum("k,i,kil,kim->lm", w, p, t, t.conj())

    Ph = np.einsum("lnm,klm->kln", P, realization.h)
    d_ac = (1 - hw.kappa_ac) * np.einsum("k,kln->ln", p, np.abs(realization.h) ** 2)
    d_frt = (1 - hw.kappa_frt) * (np.einsum("k,kln->ln", p, np.abs(Ph) ** 2)
                                  + sigma2 * np.sum(np.abs(P) ** 2, axis=2))
    Gv, PGv = _projections(v, realization, P)
    delta = (hw.kappa_frt * np.einsum("kln,ln->kl", np.abs(PGv) ** 2, d_ac + sigma2)
             + np.einsum("kln,ln->kl", np.abs(Gv) ** 2, d_frt))

    H = c * np.real(outer) + np.diag(w @ delta)
    H = (H + H.T) / 2
    xi = precoded_gains(realization, P)
    psi = xi @ p + sigma2 * np.sum(np.abs(P) ** 2, axis=(1, 2))
    return AlphaSubproblem(H=H, f=f, psi=psi, upper=np.sqrt(hw.p_frt_max / psi))


def update_alpha(sub: AlphaSubproblem, tol: float = 1e-10, max_iter: int = 10_000,
                 alpha_prev=None) -> tuple:
    """Solve the box QP in alpha; returns (alpha, KktReport).

    Solved in alpha / upper so the box is [0, 1]; warm-started at ``alpha_prev``
    (clipped into the new box), which is kept if it scores better.
    """
    s = sub.upper
    problem = BoxQp(Q=s[:, None] * sub.H * s[None, :], b=s * sub.f, lower=0.0, upper=1.0)
    x0 = None if alpha_prev is None else np.clip(np.asarray(alpha_prev, float) / s, 0, 1)
    x, report = solve_box_qp(problem, tol=tol, max_iter=max_iter, x0=x0)
    alpha = x * s
    if alpha_prev is not None:
        prev = np.clip(np.asarray(alpha_prev, float), 0, s)
        if sub.objective(prev) < sub.objective(alpha):
            alpha = prev
    return alpha, report


def _sum_se(e) -> float:
    return float(-np.sum(np.log2(e)))


def wmmse_optimize(realization: ChannelRealization, P: np.ndarray, hw: HardwareProfile,
                   options: WmmseOptions | None = None) -> tuple:
    """Run the alternating algorithm; returns (Allocation, WmmseTrace).

    The allocation returned is the last one whose combiners and weights were
    refreshed, so ``trace.outer[-1]`` equals K - sum_k ln(1 + SINR_k) for it.
    """
    opts = options or WmmseOptions()
    alloc = (opts.init.copy() if opts.init is not None
             else fixed_baseline_allocation(realization, P, hw))
    K = realization.h.shape[0]
    trace = WmmseTrace()
    w = np.ones(K)
    v = np.zeros((K, realization.G.shape[1]), dtype=complex)
    if opts.record_blocks:
        trace.blocks.append(("init", weighted_mse_objective(w, all_mses(v, realization, P, alloc, hw))))

    for it in range(opts.max_iter + 1):
        v, e = combiners_and_mses(realization, P, alloc, hw)
        if opts.record_blocks:
            trace.blocks.append(("v", weighted_mse_objective(w, e)))
        try:
            w = optimal_weights(e)
        except ValueError as exc:
            trace.message = f"weight update failed at iteration {it}: {exc}"
            log.warning(trace.message)
            break
        obj = weighted_mse_objective(w, e)
        if opts.record_blocks:
            trace.blocks.append(("w", obj))
        trace.outer.append(obj)
        trace.sum_se.append(_sum_se(e))
        if it > 0:
            change = abs(trace.outer[-1] - trace.outer[-2])
            if change <= opts.tol * max(abs(obj), 1.0):
                trace.converged = True
                break
        if it == opts.max_iter:
            break

        trace.iterations = it + 1
        state = WmmseState(v=v, w=w, e=e, allocation=alloc, objective=obj, iteration=it)
        sub_q = assemble_ue_power_subproblem(state, realization, P, hw)
        p, rep = update_ue_powers(sub_q, opts.solver_tol, opts.solver_max_iter, p_prev=alloc.p)
        trace.reports.append(("q", rep))
        alloc = Allocation(p=p, alpha=alloc.alpha)
        if opts.record_blocks:
            trace.blocks.append(("q", weighted_mse_objective(w, all_mses(v, realization, P, alloc, hw))))

        state.allocation = alloc
        sub_a = assemble_alpha_subproblem(state, realization, P, hw)
        alpha, rep = update_alpha(sub_a, opts.solver_tol, opts.solver_max_iter, alpha_prev=alloc.alpha)
        trace.reports.append(("alpha", rep))
        alloc = Allocation(p=alloc.p, alpha=alpha)
        if opts.record_blocks:
            trace.blocks.append(("alpha", weighted_mse_objective(w, all_mses(v, realization, P, alloc, hw))))

    if not trace.converged and not trace.message:
        trace.message = f"no convergence within {opts.max_iter} iterations"
    return alloc, trace
