import numpy as np
import pytest

from hybridvmc.estimators import (SampleBatch, estimate, importance_weights, local_energy)
from hybridvmc.exact import ground_state, to_dense
from hybridvmc.hybrid import TableWavefunction
from hybridvmc.nets import enumerate_configs
from hybridvmc.pauli import Hamiltonian, PauliString, bits_to_codes, build_afh_chain

from helpers import dense_state, fd_state_derivatives, make_hybrid, rayleigh


def enumeration_batch(wf, H):
    """Every configuration once, with weights omega = B * P(s) so that w = P(s)."""
    configs = enumerate_configs(wf.n_qubits)
    ev = wf.evaluate(configs, np.arange(len(configs)))
    psi_sq = np.exp(2 * ev.log_psi.log_modulus)
    P = psi_sq / psi_sq.sum()
    B = len(configs)
    e_loc = local_energy(configs, H, wf)
    return SampleBatch(configs, np.ones(B), ev.log_p, ev.amp_sq, e_loc, ev.o_rows,
                       weights=B * P), P


def test_importance_weights():
    np.testing.assert_allclose(importance_weights([1.0, 3.0]), [0.5, 1.5])
    np.testing.assert_array_equal(importance_weights(np.full(5, 0.3)), np.ones(5))
    w = importance_weights([1.0, 2.0], counts=[3, 1])
    assert np.dot([3, 1], w) / 4 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        importance_weights([1.0, 0.0])


def test_identity_local_energy(rng):
    wf = make_hybrid(rng=rng)
    I = Hamiltonian(4, [(1.0, PauliString.identity(4))])
    np.testing.assert_allclose(local_energy(enumerate_configs(4), I, wf), 1.0, atol=1e-15)


def test_eigenstate_local_energy_constant():
    H = build_afh_chain(4)
    E, v = ground_state(to_dense(H))
    wf = TableWavefunction(v)
    configs = enumerate_configs(4)
    support = configs[np.abs(v[bits_to_codes(configs)]) > 1e-8]
    np.testing.assert_allclose(local_energy(support, H, wf), E, atol=1e-10)


def test_enumerated_energy_equals_rayleigh_quotient(rng):
    H = build_afh_chain(4)
    wf = make_hybrid(rng=rng)
    configs = enumerate_configs(4)
    e_loc = local_energy(configs, H, wf)
    psi = dense_state(wf)
    P = np.abs(psi[bits_to_codes(configs)]) ** 2 / np.sum(np.abs(psi) ** 2)
    assert abs(P @ e_loc.real - rayleigh(to_dense(H), psi)) <= 1e-8


def test_eigenstate_fixture_variance_and_force():
    H = build_afh_chain(4)
    E, v = ground_state(to_dense(H))
    wf = TableWavefunction(v)
    configs = enumerate_configs(4)
    support = configs[np.abs(v[bits_to_codes(configs)]) > 1e-8]
    B = 1000
    counts = np.random.default_rng(3).multinomial(B, np.abs(v[bits_to_codes(support)]) ** 2)
    keep = counts > 0
    bits = support[keep]
    ev = wf.evaluate(bits, np.arange(len(bits)))
    batch = SampleBatch(bits, counts[keep], ev.log_p, ev.amp_sq, local_energy(bits, H, wf),
                        ev.o_rows)
    out = estimate(batch)
    assert out.energy == pytest.approx(E, abs=1e-10)
    assert out.variance <= 1e-10
    assert np.max(np.abs(out.grad)) <= 1e-8


def test_enumeration_matches_dense_force_and_fisher(rng):
    H = build_afh_chain(3)
    wf = make_hybrid(n=3, rng=rng, d=4, h=2, hidden=(6,))
    batch, _ = enumeration_batch(wf, H)
    out = estimate(batch)
    D = to_dense(H)
    psi = dense_state(wf)
    dpsi = fd_state_derivatives(wf)
    norm = np.vdot(psi, psi).real
    # dE/dW from the dense Rayleigh quotient
    grad = 2 * (dpsi.conj().T @ (D @ psi) / norm - rayleigh(D, psi) * dpsi.conj().T @ psi / norm).real
    # quantum geometric tensor, real part
    ov = dpsi.conj().T @ psi / norm
    S = (dpsi.conj().T @ dpsi / norm - np.outer(ov, ov.conj())).real
    assert out.energy == pytest.approx(rayleigh(D, psi), abs=1e-10)
    np.testing.assert_allclose(out.grad, grad, atol=1e-8)
    np.testing.assert_allclose(out.fisher, S, atol=1e-8)


def test_fisher_factor_reproduces_fisher(rng):
    H = build_afh_chain(4)
    wf = make_hybrid(rng=rng)
    batch, _ = enumeration_batch(wf, H)
    out = estimate(batch)
    Y = out.fisher_factor
    np.testing.assert_allclose(Y.T @ Y, out.fisher, atol=1e-12)
    assert np.max(np.abs(out.fisher - out.fisher.T)) <= 1e-10
    assert np.linalg.eigvalsh(out.fisher).min() >= -1e-10


def test_identical_samples_give_zero_covariances(rng):
    wf = make_hybrid(rng=rng)
    H = build_afh_chain(4)
    bits = enumerate_configs(4)[[6]]
    ev = wf.evaluate(bits, [0])
    batch = SampleBatch(bits, [50], ev.log_p, ev.amp_sq, local_energy(bits, H, wf), ev.o_rows)
    out = estimate(batch)
    assert np.all(out.grad == 0)
    assert np.all(out.fisher == 0)
    assert out.variance == 0


def test_counts_equal_expanded_batch(rng):
    wf = make_hybrid(rng=rng)
    H = build_afh_chain(4)
    bits = enumerate_configs(4)[[1, 6, 9]]
    counts = np.array([3, 1, 2])
    ev = wf.evaluate(bits, np.arange(3))
    e = local_energy(bits, H, wf)
    grouped = estimate(SampleBatch(bits, counts, ev.log_p, ev.amp_sq, e, ev.o_rows))
    rep = np.repeat(np.arange(3), counts)
    expanded = estimate(SampleBatch(bits[rep], np.ones(6), ev.log_p[rep], ev.amp_sq[rep], e[rep],
                                    ev.o_rows[rep]))
    for a, b in [(grouped.energy, expanded.energy), (grouped.variance, expanded.variance)]:
        assert a == pytest.approx(b, rel=1e-12)
    np.testing.assert_allclose(grouped.grad, expanded.grad, atol=1e-12)
    np.testing.assert_allclose(grouped.fisher, expanded.fisher, atol=1e-12)


def test_weights_mean_one_and_batch_size_guard(rng):
    wf = make_hybrid(rng=rng, circuit_scale=1.0)
    wf.amp.coeffs = np.ones(4)
    bits = enumerate_configs(4)
    ev = wf.evaluate(bits, np.arange(16))
    batch = SampleBatch(bits, np.arange(1, 17), ev.log_p, ev.amp_sq, np.zeros(16), ev.o_rows)
    assert np.dot(batch.counts, batch.weights) / batch.size == pytest.approx(1.0, abs=1e-14)
    single = SampleBatch(bits[:1], [1], ev.log_p[:1], ev.amp_sq[:1], np.zeros(1), ev.o_rows[:1])
    with pytest.raises(ValueError):
        estimate(single)


def test_local_energy_rejects_zero_amplitude():
    H = build_afh_chain(4)
    v = np.zeros(16)
    v[3] = 1.0
    with pytest.raises(ValueError):
        local_energy(np.array([[0, 0, 0, 0]]), H, TableWavefunction(v))


def test_fisher_factor_compression_is_exact(rng):
    # repeated configurations with varying circuit columns, as in shot mode
    U, k, P, var = 5, 40, 30, [3, 7, 11]
    base = rng.normal(size=(U, P)) + 1j * rng.normal(size=(U, P))
    groups = np.repeat(np.arange(U), k)
    o = base[groups].copy()
    o[:, var] += 0.1 * (rng.normal(size=(U * k, 3)) + 1j * rng.normal(size=(U * k, 3)))
    configs = ((np.arange(U)[:, None] >> np.arange(3)) & 1)[groups]
    B = U * k
    batch = SampleBatch(configs, np.ones(B), np.zeros(B), rng.uniform(0.5, 2, B),
                        rng.normal(size=B) + 0j, o)
    out = estimate(batch)
    Y = out.fisher_factor
    assert Y.shape[0] < 2 * B
    np.testing.assert_allclose(Y.T @ Y, out.fisher, atol=1e-10)
