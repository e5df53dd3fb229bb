"""Hybrid quantum-neural variational Monte Carlo.

A Transformer amplitude and a feed-forward phase network are multiplied by
the readouts of two simulated parameterized circuits; energies are minimized
with importance-weighted Monte Carlo estimators and stochastic
reconfiguration or Adam.
"""
from .circuit import CircuitParams, CircuitSpec
from .exact import ground_state, residual, to_dense
from .hybrid import BLOCKS, HybridWavefunction, TableWavefunction
from .nets import PhaseNet, SymmetryMask, Transformer, TransformerConfig
from .pauli import Hamiltonian, PauliString, build_afh_chain, connected, jordan_wigner

__version__ = "0.1.0"
