"""Builders and dense oracles shared by the test modules."""
import numpy as np

from hybridvmc.circuit import CircuitParams, CircuitSpec
from hybridvmc.hybrid import HybridWavefunction
from hybridvmc.nets import PhaseNet, SymmetryMask, Transformer, TransformerConfig, enumerate_configs
from hybridvmc.pauli import bits_to_codes


def make_hybrid(n=4, layers=2, ent="full", rng=None, scale=0.3, circuit_scale=0.5,
                share_theta=False, tanh_a=None, mask=SymmetryMask(), d=4, h=2, T=1,
                hidden=(16,)):
    """Hybrid state with generic (non-init) parameters so no ReLU sits on a kink."""
    rng = rng if rng is not None else np.random.default_rng(0)
    tr = Transformer(TransformerConfig(n, d, h, T), rng)
    pn = PhaseNet(n, hidden, rng)
    spec = CircuitSpec(n, layers, ent)
    wf = HybridWavefunction(tr, pn, spec, CircuitParams.small_random(spec, rng, circuit_scale),
                            CircuitParams.small_random(spec, rng, circuit_scale),
                            share_theta=share_theta, tanh_a=tanh_a, mask=mask)
    sizes = wf.block_sizes()
    noise = np.concatenate([scale * rng.normal(size=sizes["transformer"]),
                            scale * rng.normal(size=sizes["phase_net"]),
                            np.zeros(sizes["amp_circuit"] + sizes["phase_circuit"])])
    wf.set_vector(wf.get_vector() + noise)
    return wf


def dense_state(wf, configs=None):
    """Unnormalized amplitude vector over all basis states (zero outside the mask)."""
    n = wf.n_qubits
    configs = enumerate_configs(n) if configs is None else configs
    lp = wf.log_psi(configs)
    psi = np.zeros(2 ** n, complex)
    ok = lp.valid
    psi[bits_to_codes(configs[ok])] = np.exp(lp.log_modulus[ok] + 1j * lp.arg[ok])
    return psi


def rayleigh(D, psi):
    return float((np.vdot(psi, D @ psi) / np.vdot(psi, psi)).real)


def fd_state_derivatives(wf, eps=1e-6):
    """Columns d psi / d W_i by central differences of the dense state vector."""
    w0 = wf.get_vector()
    cols = []
    for i in range(len(w0)):
        w = w0.copy()
        w[i] += eps
        wf.set_vector(w)
        plus = dense_state(wf)
        w[i] -= 2 * eps
        wf.set_vector(w)
        minus = dense_state(wf)
        cols.append((plus - minus) / (2 * eps))
    wf.set_vector(w0)
    return np.array(cols).T


# criterion number -> (passed, detail); filled by test_acceptance, printed by conftest
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ok, prev = ACCEPTANCE.get(criterion, (True, ""))
    ACCEPTANCE[criterion] = (ok and bool(passed), f"{prev}; {detail}" if prev else detail)
    return bool(passed)
