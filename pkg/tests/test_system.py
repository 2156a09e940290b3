import numpy as np
import pytest

from xlfronthaul.channel import ChannelRealization, SystemDims, iid_realization
from xlfronthaul.system import (Allocation, HardwareProfile, access_distortion_cov,
                                bi_svd_precoder, bi_svd_precoders, effective_channels,
                                evaluate_sinr, fixed_baseline_allocation, fronthaul_distortion_cov,
                                fronthaul_power, interference_covariance, interference_covariances,
                                precoded_gains, simulate_signal_samples, sinr_and_se,
                                spectral_efficiency)
from xlfronthaul.validation import random_instance


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.mark.parametrize("kappa", [0.0, -0.1, 1.5])
def test_hardware_profile_rejects_bad_kappa(kappa):
    with pytest.raises(ValueError):
        HardwareProfile(kappa_ac=kappa)


def test_access_distortion_examples():
    H = np.array([[1.0 + 0j]])
    np.testing.assert_allclose(access_distortion_cov([2.0], H, 0.5), [[1.0]])
    rng = np.random.default_rng(0)
    H = crandn(rng, 3, 2)
    assert np.all(access_distortion_cov([1.0, 2.0], H, 1.0) == 0)
    D1 = access_distortion_cov([1.0, 2.0], H, 0.9)
    D2 = access_distortion_cov([2.0, 4.0], H, 0.9)
    np.testing.assert_allclose(D2, 2 * D1)
    assert np.all(D1 == np.diag(np.diag(D1)))


def test_fronthaul_distortion_examples():
    rng = np.random.default_rng(1)
    P = np.linalg.qr(crandn(rng, 4, 4))[0]
    H = crandn(rng, 4, 3)
    np.testing.assert_allclose(fronthaul_distortion_cov(np.zeros(3), P, H, 0.9, 1.0),
                               0.1 * np.eye(4), atol=1e-15)
    assert np.all(fronthaul_distortion_cov([1, 2, 3], P, H, 1.0, 1.0) == 0)
    for _ in range(20):
        D = fronthaul_distortion_cov(rng.uniform(0, 1, 3), crandn(rng, 4, 4), crandn(rng, 4, 3),
                                     0.8, 0.3)
        assert np.all(np.real(np.diag(D)) >= 0)
        assert np.all(D == np.diag(np.diag(D)))


def test_bi_svd_identity():
    np.testing.assert_allclose(bi_svd_precoder(np.eye(3), np.eye(3)), np.eye(3), atol=1e-15)


@pytest.mark.parametrize("M, N, K", [(4, 4, 2), (2, 4, 3), (6, 3, 5), (1, 2, 1), (3, 1, 2)])
def test_bi_svd_unitary_and_aligned(M, N, K):
    rng = np.random.default_rng(M * 100 + N * 10 + K)
    G, H = crandn(rng, M, N), crandn(rng, N, K)
    P = bi_svd_precoder(G, H)
    assert np.linalg.norm(P @ P.conj().T - np.eye(N)) <= 1e-10
    # the rotation maps the access singular basis onto the fronthaul one
    U_H = np.linalg.svd(H)[0]
    V_G = np.linalg.svd(G)[2].conj().T
    T = V_G.conj().T @ P @ U_H
    np.testing.assert_allclose(np.abs(T), np.eye(N), atol=1e-10)


def test_bi_svd_reconstruction_identity():
    # with the phase convention applied to the returned factors, V_G^H P U_H = I
    rng = np.random.default_rng(5)
    G, H = crandn(rng, 4, 4), crandn(rng, 4, 2)
    P = bi_svd_precoder(G, H)
    U_G, _, Vh_G = np.linalg.svd(G)
    U_H = np.linalg.svd(H)[0]
    ph_G = np.conj(U_G[0]) / np.abs(U_G[0])
    ph_H = np.conj(U_H[0]) / np.abs(U_H[0])
    V_G = Vh_G.conj().T * ph_G
    np.testing.assert_allclose(V_G.conj().T @ P @ (U_H * ph_H), np.eye(4), atol=1e-12)


def test_bi_svd_deterministic():
    rng = np.random.default_rng(8)
    G, H = crandn(rng, 5, 4), crandn(rng, 4, 3)
    np.testing.assert_array_equal(bi_svd_precoder(G, H), bi_svd_precoder(G.copy(), H.copy()))


def _random_case(seed, dims=SystemDims(L=3, N=2, M=3, K=2)):
    rng = np.random.default_rng(seed)
    real = iid_realization(dims, rng)
    P = bi_svd_precoders(real)
    alloc = Allocation(p=rng.uniform(0.1, 1, dims.K), alpha=rng.uniform(0.1, 1, dims.L))
    hw = HardwareProfile(0.9, 0.93, 0.5, 1.0, 10.0)
    return real, P, alloc, hw


def test_effective_channels():
    real, P, alloc, hw = _random_case(0)
    assert np.all(effective_channels(real, P, np.zeros(3)).g == 0)
    eff = effective_channels(real, P, alloc.alpha)
    direct = np.zeros_like(eff.g)
    for k in range(real.h.shape[0]):
        for l in range(real.G.shape[0]):
            direct[k] += alloc.alpha[l] * real.G[l] @ P[l] @ real.h[k, l]
    np.testing.assert_allclose(eff.g, direct, rtol=0, atol=1e-12)
    np.testing.assert_allclose(eff.g, np.einsum("l,klm->km", alloc.alpha, eff.b), atol=1e-15)

    one = ChannelRealization(h=real.h[:, :1], G=real.G[:1])
    e1 = effective_channels(one, P[:1], [2.0])
    np.testing.assert_allclose(e1.g, 2 * e1.b[:, 0])


def test_interference_covariance_special_cases():
    real, P, alloc, _ = _random_case(1, SystemDims(L=2, N=3, M=3, K=1))
    hw = HardwareProfile(1.0, 1.0, 0.7, 1.0, 10.0)
    R = interference_covariance(0, real, P, alloc, hw)
    expected = 0.7 * np.eye(3, dtype=complex)
    for l in range(2):
        GP = real.G[l] @ P[l]
        expected += 0.7 * alloc.alpha[l] ** 2 * GP @ GP.conj().T
    np.testing.assert_allclose(R, expected, atol=1e-12)

    real, P, alloc, hw = _random_case(2)
    zero = Allocation(p=alloc.p, alpha=np.zeros(3))
    for Rk in interference_covariances(real, P, zero, hw):
        np.testing.assert_allclose(Rk, hw.noise_power * np.eye(3), atol=1e-15)


def test_interference_covariance_psd():
    rng = np.random.default_rng(3)
    for _ in range(50):
        inst = random_instance(rng)
        R = interference_covariances(inst.realization, inst.P, inst.allocation, inst.hw)
        for Rk in R:
            assert np.array_equal(Rk, Rk.conj().T)
            eig = np.linalg.eigvalsh(Rk - inst.hw.noise_power * np.eye(Rk.shape[0]))
            assert eig[0] >= -1e-9 * inst.hw.noise_power


def test_covariance_matches_signal_oracle():
    real, P, alloc, hw = _random_case(4, SystemDims(L=2, N=2, M=2, K=2))
    _, C = simulate_signal_samples(real, P, alloc, hw, 200_000, np.random.default_rng(0))
    eff = effective_channels(real, P, alloc.alpha)
    R0 = interference_covariance(0, real, P, alloc, hw)
    expected = R0 + hw.c * alloc.p[0] * np.outer(eff.g[0], eff.g[0].conj())
    assert np.linalg.norm(C - expected) / np.linalg.norm(expected) < 0.02


def test_signal_oracle_noise_only():
    real, P, alloc, hw = _random_case(5)
    silent = Allocation(p=np.zeros(2), alpha=np.zeros(3))
    mean, C = simulate_signal_samples(real, P, silent, hw, 100_000, np.random.default_rng(1))
    assert np.linalg.norm(C - hw.noise_power * np.eye(3)) / (hw.noise_power * np.sqrt(3)) < 0.02
    assert np.abs(mean).max() < 0.02
    with pytest.raises(ValueError):
        simulate_signal_samples(real, P, silent, hw, 0, np.random.default_rng(1))


def test_signal_oracle_ideal_hardware():
    real, P, alloc, _ = _random_case(6, SystemDims(L=2, N=2, M=2, K=2))
    hw = HardwareProfile(1.0, 1.0, 0.5, 1.0, 10.0)
    _, C = simulate_signal_samples(real, P, alloc, hw, 200_000, np.random.default_rng(2))
    eff = effective_channels(real, P, alloc.alpha)
    expected = hw.noise_power * np.eye(2, dtype=complex)
    for l in range(2):
        GP = real.G[l] @ P[l]
        expected += hw.noise_power * alloc.alpha[l] ** 2 * GP @ GP.conj().T
    expected += np.einsum("k,km,kn->mn", alloc.p, eff.g, eff.g.conj())
    assert np.linalg.norm(C - expected) / np.linalg.norm(expected) < 0.02


def test_sinr_silent_ue():
    real, P, alloc, hw = _random_case(7)
    eff = effective_channels(real, P, alloc.alpha)
    R = interference_covariance(0, real, P, alloc, hw)
    assert sinr_and_se(eff.g[0], R, 0.0, hw) == (0.0, 0.0)


def test_sinr_scalar_reduction():
    g, h, p, alpha, sigma2 = 0.8 - 0.3j, 1.1 + 0.7j, 0.6, 1.7, 0.2
    real = ChannelRealization(h=np.array([[[h]]]), G=np.array([[[g]]]))
    P = bi_svd_precoders(real)
    hw = HardwareProfile(1.0, 1.0, sigma2, 1.0, 10.0)
    sinr = evaluate_sinr(real, P, Allocation(p=np.array([p]), alpha=np.array([alpha])), hw)[0]
    expected = p * alpha ** 2 * abs(g) ** 2 * abs(h) ** 2 / (sigma2 * (1 + alpha ** 2 * abs(g) ** 2))
    assert sinr == pytest.approx(expected, rel=1e-12)


def test_prelog_scales_se():
    real, P, alloc, hw = _random_case(8)
    np.testing.assert_allclose(spectral_efficiency(real, P, alloc, hw, prelog=0.5),
                               0.5 * spectral_efficiency(real, P, alloc, hw))


def test_sinr_monotone_in_kappa():
    rng = np.random.default_rng(9)
    for _ in range(30):
        inst = random_instance(rng)
        sinr = {}
        for kac in (0.9, 0.95, 1.0):
            for kfr in (0.9, 0.95, 1.0):
                sinr[kac, kfr] = evaluate_sinr(inst.realization, inst.P, inst.allocation,
                                               inst.hw.with_kappa(kac, kfr))
        for kac in (0.9, 0.95):
            for kfr in (0.9, 0.95, 1.0):
                nxt = {0.9: 0.95, 0.95: 1.0}[kac]
                assert np.all(sinr[nxt, kfr] >= sinr[kac, kfr] * (1 - 1e-12))
        for kac in (0.9, 0.95, 1.0):
            assert np.all(sinr[kac, 1.0] >= sinr[kac, 0.95] * (1 - 1e-12))
            assert np.all(sinr[kac, 0.95] >= sinr[kac, 0.9] * (1 - 1e-12))


def test_sinr_vanishes_with_amplification():
    real, P, alloc, hw = _random_case(10)
    prev = np.inf
    for c in (1.0, 1e-2, 1e-4, 1e-6):
        scaled = Allocation(p=alloc.p, alpha=c * alloc.alpha)
        s = evaluate_sinr(real, P, scaled, hw).max()
        assert s < prev
        prev = s
    assert prev < 1e-9


def test_fronthaul_power_examples():
    rng = np.random.default_rng(11)
    P = np.linalg.qr(crandn(rng, 4, 4))[0]
    H = crandn(rng, 4, 3)
    p = rng.uniform(0, 1, 3)
    assert fronthaul_power(0.0, P, H, p, 1.0) == 0.0
    assert fronthaul_power(2.0, P, H, np.zeros(3), 1.0) == pytest.approx(16.0, rel=1e-14)
    xi = np.sum(np.abs(P @ H) ** 2, axis=0)
    assert fronthaul_power(1.5, P, H, p, 0.3) == pytest.approx(
        1.5 ** 2 * (xi @ p) + 1.5 ** 2 * 0.3 * 4, rel=1e-12)


def test_precoded_gains_match_definition():
    real, P, _, _ = _random_case(12)
    xi = precoded_gains(real, P)
    for l in range(3):
        for k in range(2):
            assert xi[l, k] == pytest.approx(np.linalg.norm(P[l] @ real.h[k, l]) ** 2, rel=1e-13)


def test_fixed_baseline():
    real, P, _, hw = _random_case(13)
    base = fixed_baseline_allocation(real, P, hw)
    np.testing.assert_array_equal(base.p, hw.p_ue_max)
    for l in range(3):
        pf = fronthaul_power(base.alpha[l], P[l], real.H(l), base.p, hw.noise_power)
        assert pf == pytest.approx(hw.p_frt_max, rel=1e-9)
    hw2 = HardwareProfile(hw.kappa_ac, hw.kappa_frt, hw.noise_power, hw.p_ue_max, 2 * hw.p_frt_max)
    np.testing.assert_allclose(fixed_baseline_allocation(real, P, hw2).alpha,
                               np.sqrt(2) * base.alpha, rtol=1e-14)
