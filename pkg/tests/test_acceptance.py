"""Acceptance criteria, one test per criterion (heavy ones marked ``slow``).

Every test records a one-line verdict that ``conftest.py`` prints in the
terminal summary, then asserts it.  Run just this file with

    pytest tests/test_acceptance.py -v          # everything (hours)
    pytest tests/test_acceptance.py -m "not slow"   # the quick criteria
"""
from math import comb, exp

import numpy as np
import pytest

from hybridvmc import experiments
from hybridvmc.circuit import CircuitParams, CircuitSpec, f_value, param_shift_grad
from hybridvmc.cli import main as cli_main
from hybridvmc.driver import build_wavefunction, preset, read_log, run, vmc_step
from hybridvmc.estimators import SampleBatch, estimate, local_energy
from hybridvmc.exact import ground_state, residual, to_dense
from hybridvmc.hybrid import BLOCKS, TableWavefunction
from hybridvmc.nets import SymmetryMask, Transformer, TransformerConfig, enumerate_configs
from hybridvmc.pauli import (FermionicOperatorList, Hamiltonian, bits_to_codes,
                             build_afh_chain, connected, jordan_wigner, save_hamiltonian)

from conftest import sample_hamiltonians
from helpers import dense_state, make_hybrid, rayleigh, record


def _max_rel_fd(wf, bits, eps=1e-5):
    o = wf.o_vector(bits)
    w0 = wf.get_vector()
    worst = 0.0
    for i in range(len(w0)):
        w = w0.copy()
        w[i] += eps
        wf.set_vector(w)
        a = wf.log_psi(bits)
        w[i] -= 2 * eps
        wf.set_vector(w)
        b = wf.log_psi(bits)
        wf.set_vector(w0)
        fd = (a.log_modulus - b.log_modulus + 1j * (a.arg - b.arg)) / (2 * eps)
        worst = max(worst, np.max(np.abs(fd - o[:, i])) / max(np.max(np.abs(fd)), 1e-3))
    return worst


# -- 1 ----------------------------------------------------------------------------------
def test_c01_oracle_correctness():
    lines, ok = [], True
    for H, target in ((build_afh_chain(2, periodic=False), -3.0), (build_afh_chain(4), -8.0)):
        D = to_dense(H)
        E, v = ground_state(D)
        good = abs(E - target) <= 1e-10 and residual(D, E, v) <= 1e-8
        ok &= good
        lines.append(f"E={E:.12f} (want {target})")
    worst = 0.0
    for H in sample_hamiltonians():
        D = to_dense(H)
        for code in range(2 ** H.n_qubits):
            s = tuple((code >> q) & 1 for q in range(H.n_qubits))
            row = np.zeros(2 ** H.n_qubits, complex)
            for t, m in connected(s, H):
                row[bits_to_codes(np.array([t]))[0]] += m
            worst = max(worst, np.max(np.abs(row - D[code])))
    ok &= worst <= 1e-10
    lines.append(f"max |connected - dense| = {worst:.1e}")
    assert record(1, ok, ", ".join(lines))


# -- 2 ----------------------------------------------------------------------------------
@pytest.mark.parametrize("nq,d,h,T,hidden,want", [
    (6, 3, 1, 1, "16,8", (179, 256)),
    (6, 8, 4, 2, None, (1802,)),
    (7, 4, 2, 1, "16,8", (290, 272)),
])
def test_c02_parameter_counts(capsys, nq, d, h, T, hidden, want):
    argv = ["param-count", "--nq", str(nq), "--d", str(d), "--h", str(h), "--T", str(T)]
    if hidden:
        argv += ["--phase-hidden", hidden]
    assert cli_main(argv) == 0
    got = tuple(int(x) for x in capsys.readouterr().out.split())
    assert record(2, got == want, f"N_q={nq},d={d},T={T}: {got}"), got


# -- 3 ----------------------------------------------------------------------------------
def test_c03_gradient_fidelity():
    configs = enumerate_configs(4)
    worst = 0.0
    for k in range(20):
        rng = np.random.default_rng(100 + k)
        wf = make_hybrid(n=4, layers=2, d=4, h=2, rng=rng, share_theta=bool(k % 2),
                         tanh_a=0.8 if k % 3 == 0 else None)
        worst = max(worst, _max_rel_fd(wf, configs[rng.choice(16, 3, replace=False)]))
    shift_worst = 0.0
    rng = np.random.default_rng(7)
    for _ in range(5):
        spec = CircuitSpec(4, 2, "full")
        params = CircuitParams.small_random(spec, rng, 2.0)
        s = tuple(rng.integers(0, 2, 4))
        g = param_shift_grad(spec, params, s)
        for idx in np.ndindex(*spec.theta_shape):
            p, m = params.copy(), params.copy()
            p.theta[idx] += 1e-5
            m.theta[idx] -= 1e-5
            fd = (f_value(spec, p, s)[0] - f_value(spec, m, s)[0]) / 2e-5
            shift_worst = max(shift_worst, abs(fd - g[idx]))
    ok = worst <= 1e-6 and shift_worst <= 1e-8
    assert record(3, ok, f"O vs FD rel err {worst:.1e} over 20 instances, "
                         f"shift vs FD {shift_worst:.1e}")


# -- 4 ----------------------------------------------------------------------------------
def test_c04_normalization_and_masking():
    rng = np.random.default_rng(4)
    worst = 0.0
    for n in (2, 3, 4):
        tr = Transformer(TransformerConfig(n, 4, 2, 1), rng)
        tr.set_vector(tr.get_vector() + 0.5 * rng.normal(size=tr.n_params()))
        worst = max(worst, abs(np.exp(tr.log_prob(enumerate_configs(n))).sum() - 1))
    supports = []
    for n_o, up, dn in ((2, 1, 1), (2, 2, 0), (3, 1, 1), (3, 2, 1)):
        mask = SymmetryMask(True, n_o, up, dn)
        tr = Transformer(TransformerConfig(2 * n_o, 4, 2, 1), rng)
        tr.set_vector(tr.get_vector() + 0.5 * rng.normal(size=tr.n_params()))
        configs = enumerate_configs(2 * n_o)
        p = np.zeros(len(configs))
        ok_rows = mask.contains(configs)
        p[ok_rows] = np.exp(tr.log_prob(configs[ok_rows], mask))
        worst = max(worst, abs(p.sum() - 1))
        supports.append(int(np.count_nonzero(p > 0)) == comb(n_o, up) * comb(n_o, dn))
    mask = SymmetryMask(True, 3, 2, 1)
    tr = Transformer(TransformerConfig(6, 4, 2, 1), rng)
    s = tr.sample(100_000, mask, rng)
    respects = bool(np.all(s[:, 0::2].sum(1) == 2) and np.all(s[:, 1::2].sum(1) == 1))
    ok = worst <= 1e-10 and all(supports) and respects
    assert record(4, ok, f"|sum p - 1| <= {worst:.1e}, supports {supports}, "
                         f"1e5 masked samples valid: {respects}")


# -- 5 ----------------------------------------------------------------------------------
def test_c05_estimator_consistency():
    H = build_afh_chain(4)
    D = to_dense(H)
    wf = make_hybrid(n=4, layers=2, rng=np.random.default_rng(5))
    configs = enumerate_configs(4)
    psi = dense_state(wf)
    P = np.abs(psi) ** 2 / np.sum(np.abs(psi) ** 2)
    exact = rayleigh(D, psi)
    enum_err = abs(P[bits_to_codes(configs)] @ local_energy(configs, H, wf).real - exact)

    hits = 0
    for seed in range(100):
        rs, rm = np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])
        est = vmc_step(wf, H, 1000, BLOCKS, None, rs, rm).est
        hits += abs(est.energy - exact) <= 3 * est.std_error

    E, v = ground_state(D)
    table = TableWavefunction(v)
    support = configs[np.abs(v[bits_to_codes(configs)]) > 1e-8]
    counts = np.random.default_rng(3).multinomial(1000, np.abs(v[bits_to_codes(support)]) ** 2)
    bits = support[counts > 0]
    ev = table.evaluate(bits, np.arange(len(bits)))
    out = estimate(SampleBatch(bits, counts[counts > 0], ev.log_p, ev.amp_sq,
                               local_energy(bits, H, table), ev.o_rows))
    force = np.max(np.abs(out.grad))
    ok = enum_err <= 1e-8 and hits >= 95 and out.variance <= 1e-10 and force <= 1e-8
    assert record(5, ok, f"enum vs Rayleigh {enum_err:.1e}, {hits}/100 within 3 sigma, "
                         f"eigenstate var {out.variance:.1e} |F| {force:.1e}")


# -- 6 ----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c06_sample_size_trend(tmp_path):
    res = experiments.sample_size_grid(tmp_path, sizes=(100, 1000, 10_000), seeds=range(10))
    err = [experiments.median(res[b], "abs_error") for b in (100, 1000, 10_000)]
    sem = [experiments.median(res[b], "std_error") for b in (100, 1000, 10_000)]
    ok = err[0] > err[1] > err[2] and sem[0] > sem[1] > sem[2] and err[2] <= 1e-2
    assert record(6, ok, "median |dE| " + " > ".join(f"{e:.2e}" for e in err)
                  + ", median std err " + " > ".join(f"{s:.2e}" for s in sem))


# -- 7 ----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c07_chain_scaling(tmp_path):
    res = experiments.chain_scaling(tmp_path, sizes=range(2, 9), seeds=range(10))
    med = {n: experiments.median(r, "rel_error") for n, r in res.items()}
    ok = all(m <= 1e-3 for m in med.values())
    assert record(7, ok, "median rel err " + " ".join(f"{n}:{m:.1e}" for n, m in med.items()))


# -- 8 ----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c08_sequential_layers(tmp_path):
    res = experiments.sequential_layers(tmp_path, layers=(0, 1, 2, 3, 4), seeds=range(3))
    pre = [r["rel_error"] for r in res["pretrain"]]
    zero = [r["rel_error"] for r in res[0]]
    gain0 = float(np.median([p / z for p, z in zip(pre, zero)]))
    med = [experiments.median(res[nl], "rel_error") for nl in (1, 2, 3, 4)]
    ok = gain0 < 2 and med[3] <= 5e-4 and all(a > b for a, b in zip(med, med[1:]))
    assert record(8, ok, f"pretrained {np.median(pre):.1e}, N_l=0 gain x{gain0:.2f}, "
                         "N_l=1..4 " + " ".join(f"{m:.1e}" for m in med))


# -- 9 ----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c09_hybrid_vs_nqs(tmp_path):
    res = experiments.hybrid_vs_nqs(tmp_path, seeds=range(5))
    hyb = experiments.median(res["hybrid"], "rel_error")
    nqs = experiments.median(res["nqs"], "rel_error")
    ok = hyb <= 3e-3 and nqs >= 1e-2
    assert record(9, ok, f"hybrid {hyb:.2e} (<= 3e-3), network-only {nqs:.2e} (>= 1e-2)")


# -- 10 ---------------------------------------------------------------------------------
def toy_molecule(n_orbitals=3, eps=(-1.1, 0.25, 0.7), hop=0.15, U=0.5, J=0.05):
    """Small Hubbard-like model: orbital energies, hopping, on-site and exchange terms.

    Spin-orbital ``2p`` is orbital ``p`` spin up, ``2p + 1`` spin down.
    """
    one, two = [], []
    for p in range(n_orbitals):
        for s in (0, 1):
            one.append((2 * p + s, 2 * p + s, eps[p]))
            for q in range(n_orbitals):
                if q != p:
                    one.append((2 * p + s, 2 * q + s, -hop / (1 + abs(p - q))))
    for p in range(n_orbitals):
        a, b = 2 * p, 2 * p + 1
        two += [(a, b, b, a, U), (b, a, a, b, U)]
    for p in range(n_orbitals):
        for q in range(n_orbitals):
            if p != q:  # pair hopping c+_{p up} c+_{p dn} c_{q dn} c_{q up}
                two += [(2 * p, 2 * p + 1, 2 * q + 1, 2 * q, J),
                        (2 * p + 1, 2 * p, 2 * q, 2 * q + 1, J)]
    return jordan_wigner(FermionicOperatorList(one, two), 2 * n_orbitals)


def test_c10_jordan_wigner_two_orbital_spectrum():
    # number + hopping on 2 spin-orbitals: single-particle levels e0, e1 mix via t
    e0, e1, t = 0.3, -0.7, 0.4
    H = jordan_wigner(FermionicOperatorList([(0, 0, e0), (1, 1, e1), (0, 1, t), (1, 0, t)]), 2)
    lo, hi = np.linalg.eigvalsh(np.array([[e0, t], [t, e1]]))
    want = np.sort([0.0, lo, hi, lo + hi])  # vacuum, one particle, both
    got = np.linalg.eigvalsh(to_dense(H))
    ok = np.allclose(got, want, atol=1e-12)
    assert record(10, ok, f"2-orbital JW spectrum {np.round(got, 6).tolist()}")


@pytest.mark.slow
def test_c10_chemistry_pipeline(tmp_path):
    H = toy_molecule()
    path = tmp_path / "toy.pauli"
    save_hamiltonian(H, path)
    E, v = ground_state(to_dense(H))
    errors = []
    for seed in range(3):
        s = run(preset("fig5-lih", hamiltonian=str(path), seed=seed,
                       out_dir=str(tmp_path / f"s{seed}")))
        errors.append(s["final_abs_error"])
        if errors[-1] <= 2e-3:
            break
    ok = min(errors) <= 2e-3
    assert record(10, ok, f"6-qubit toy molecule E_g={E:.6f}, |dE| per seed "
                          + " ".join(f"{e:.1e}" for e in errors))


# -- 11 ---------------------------------------------------------------------------------
def test_c11_variance_control(tmp_path):
    a = 0.25
    cfg = preset("fig6-afh7", hamiltonian="afh:4", tanh_a=a, batch_size=2000, shots=500,
                 eta_init=0.05, eta_min=0.01, n_iters=60, out_dir=str(tmp_path / "tanh"))
    run(cfg)
    max_w = read_log(tmp_path / "tanh" / "log.csv")["max_weight"]
    bounded = bool(np.all(max_w <= exp(4 * a)))

    dev = []
    H = build_afh_chain(7)
    for seed in range(10):
        cfg = preset("fig6-afh7", seed=seed)
        ss = np.random.SeedSequence(seed).spawn(3)
        rng_init, rng_s, rng_m = (np.random.default_rng(x) for x in ss)
        wf = build_wavefunction(cfg, 7, rng_init)
        step = vmc_step(wf, H, cfg.batch_size, BLOCKS, cfg.shots, rng_s, rng_m)
        dev.append(float(np.max(np.abs(step.batch.weights - 1))))
    ok = bounded and max(dev) <= 0.1
    assert record(11, ok, f"tanh a={a}: max omega {max_w.max():.3f} <= e^4a={exp(4 * a):.3f} "
                          f"over {len(max_w)} iters; small init max|omega-1| {max(dev):.1e}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-rA"]))
