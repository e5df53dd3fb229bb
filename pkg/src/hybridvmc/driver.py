"""Run configuration, presets and the VMC training loop.

One iteration:

1. draw ``B`` configurations from the Transformer (grouped into distinct
   configurations with multiplicities);
2. evaluate the hybrid wavefunction on the samples and on every configuration
   connected to them by ``H`` (circuits run exactly or with ``M`` shots);
3. form importance weights, local energies and ``O`` rows on the active
   parameter blocks;
4. assemble the energy, force and Fisher estimators;
5. update the active blocks with stochastic reconfiguration or Adam.
"""
from __future__ import annotations

import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import CircuitParams, CircuitSpec
from .estimators import SampleBatch, estimate, local_energy_from_evaluation
from .exact import MAX_DENSE_QUBITS, ground_state, to_dense
from .hybrid import BLOCKS, CIRCUIT_BLOCKS, NQS_BLOCKS, HybridWavefunction
from .nets import PhaseNet, SymmetryMask, Transformer, TransformerConfig
from .optim import Adam, Schedule, cosine_lr, schedule_blocks, sr_step
from .pauli import (Hamiltonian, MERGE_TOL, bits_to_codes, build_afh_chain, codes_to_bits,
                    load_hamiltonian)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

LOG_VERSION = "hybridvmc-log v1"
SUMMARY_VERSION = 1
LOG_COLUMNS = ("iter", "energy", "energy_imag", "variance", "std_error", "rel_error",
               "max_weight", "grad_inf", "lr", "n_active", "n_unique")
BLOCK_ALIASES = {"all": BLOCKS, "nqs": NQS_BLOCKS, "circuits": CIRCUIT_BLOCKS}


class RunError(RuntimeError):
    """A training iteration failed; ``checkpoint`` holds the state before it."""

    def __init__(self, msg, iteration: int, checkpoint: Path | None):
        super().__init__(f"iteration {iteration}: {msg} (state saved to {checkpoint})")
        self.iteration, self.checkpoint = iteration, checkpoint


@dataclass
class RunConfig:
    """Every knob of a run.  Defaults follow the LiH hyperparameter table."""

    hamiltonian: str = "afh:4"
    embed_dim: int = 3
    n_heads: int = 1
    n_blocks: int = 1
    phase_hidden: list = field(default_factory=lambda: [16, 8])
    use_circuits: bool = True
    n_layers: int = 4
    entanglement: str = "full"
    share_theta: bool = False
    tanh_a: float = 0.0               # 0 disables the bounded amplitude
    init_scale: float = 0.01
    mask_orbitals: int = 0            # 0 disables particle-number masking
    n_up: int = 0
    n_down: int = 0
    batch_size: int = 10_000
    shots: int = 10_000               # 0 means exact expectation values
    shot_noise: str = "multinomial"   # or "normal": moment-matched Gaussian readout
    optimizer: str = "adam"
    eta_init: float = 5e-3
    eta_min: float = 5e-4
    sr_eps: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.95
    n_iters: int = 3000
    plan: list = field(default_factory=list)   # [[blocks, iters], ...]; empty = joint
    seed: int = 0
    out_dir: str = "runs/default"
    checkpoint_every: int = 0         # 0 writes only the final checkpoint
    init_from: str = ""               # checkpoint whose matching blocks seed the run
    exact_energy: float | None = None

    # -- validation ---------------------------------------------------------------
    def validate(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (the variance needs two samples)")
        if self.shots < 0:
            raise ValueError("shots must be >= 0 (0 selects exact expectation values)")
        if self.shot_noise not in ("multinomial", "normal"):
            raise ValueError(f"shot_noise must be 'multinomial' or 'normal', got {self.shot_noise!r}")
        if self.optimizer not in ("sr", "adam"):
            raise ValueError(f"optimizer must be 'sr' or 'adam', got {self.optimizer!r}")
        if self.n_iters < 1:
            raise ValueError("n_iters must be positive")
        if self.tanh_a < 0:
            raise ValueError("tanh_a must be >= 0")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")
        if self.sr_eps < 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("invalid optimizer constants")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        Schedule(self.eta_init, self.eta_min, self.n_iters)
        TransformerConfig(1, self.embed_dim, self.n_heads, self.n_blocks)
        if not self.phase_hidden or any(int(w) < 1 for w in self.phase_hidden):
            raise ValueError("phase_hidden needs at least one positive width")
        if self.use_circuits:
            CircuitSpec(1, self.n_layers, self.entanglement)
        self.block_plan()

    def block_plan(self) -> list[tuple[str, ...]]:
        plan = self.plan or [["all", self.n_iters]]
        expanded = []
        for blocks, span in plan:
            names = [blocks] if isinstance(blocks, str) else list(blocks)
            resolved = []
            for b in names:
                resolved += list(BLOCK_ALIASES.get(b, (b,)))
            if not self.use_circuits:
                resolved = [b for b in resolved if b not in CIRCUIT_BLOCKS]
            expanded.append((resolved, int(span)))
        return schedule_blocks(expanded, self.n_iters)

    def mask(self) -> SymmetryMask:
        if self.mask_orbitals == 0:
            return SymmetryMask()
        return SymmetryMask(True, self.mask_orbitals, self.n_up, self.n_down)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_toml(cls, path) -> "RunConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


# -- presets ------------------------------------------------------------------------
def _fig2(**kw):
    return dict(hamiltonian="afh:4", embed_dim=8, n_heads=4, n_blocks=2, phase_hidden=[16],
                n_layers=2, entanglement="full", batch_size=1000, shots=1000,
                optimizer="sr", eta_init=0.05, eta_min=0.005, n_iters=300, **kw)


PRESETS = {
    "fig2-grid": _fig2(shot_noise="normal"),
    "fig3-scaling": dict(hamiltonian="afh:6", embed_dim=8, n_heads=4, n_blocks=2,
                         phase_hidden=[16], n_layers=2, entanglement="linear",
                         batch_size=1000, shots=1000, shot_noise="normal", optimizer="sr",
                         eta_init=0.05, eta_min=0.005, n_iters=300),
    "fig4-sequential": dict(hamiltonian="afh:10", embed_dim=4, n_heads=2, n_blocks=1,
                            phase_hidden=[16], n_layers=4, entanglement="full",
                            batch_size=10_000, shots=0, optimizer="sr",
                            eta_init=0.05, eta_min=0.005, n_iters=600,
                            plan=[["nqs", 300], ["circuits", 300]]),
    "fig5-lih": dict(hamiltonian="", embed_dim=3, n_heads=1, n_blocks=1, phase_hidden=[16, 8],
                     n_layers=4, entanglement="full", batch_size=10_000, shots=10_000,
                     shot_noise="normal", optimizer="adam", eta_init=5e-3, eta_min=5e-4,
                     beta2=0.95,
                     n_iters=3000),
    "fig6-afh7": dict(hamiltonian="afh:7", embed_dim=4, n_heads=2, n_blocks=1,
                      phase_hidden=[16, 8], n_layers=4, entanglement="full",
                      batch_size=10_000, shots=10_000, shot_noise="normal",
                      optimizer="adam", eta_init=5e-3, eta_min=5e-4, n_iters=3000),
    "nqs-baseline": dict(hamiltonian="afh:7", embed_dim=4, n_heads=2, n_blocks=1,
                         phase_hidden=[16, 8], use_circuits=False, batch_size=10_000,
                         shots=0, optimizer="adam", eta_init=5e-3, eta_min=5e-4,
                         beta2=0.99, n_iters=3000),
}


def preset(name: str, **overrides) -> RunConfig:
    """Named experiment configuration; keyword overrides replace preset values."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    d = dict(PRESETS[name])
    d.update(overrides)
    cfg = RunConfig.from_dict(d)
    if name == "fig5-lih" and not cfg.hamiltonian:
        raise ValueError("fig5-lih needs a 6-qubit Pauli Hamiltonian file (--hamiltonian); "
                         "see README for the expected provenance")
    return cfg


# -- construction ---------------------------------------------------------------------
def build_hamiltonian(source: str) -> Hamiltonian:
    """``afh:N`` (periodic), ``afh:N:open``, or a path to a Hamiltonian file."""
    if source.startswith("afh:"):
        parts = source.split(":")
        periodic = not (len(parts) > 2 and parts[2] == "open")
        return build_afh_chain(int(parts[1]), periodic=periodic)
    if not source:
        raise ValueError("no Hamiltonian given")
    return load_hamiltonian(source)


def build_wavefunction(cfg: RunConfig, n_qubits: int, rng: np.random.Generator):
    tr = Transformer(TransformerConfig(n_qubits, cfg.embed_dim, cfg.n_heads, cfg.n_blocks), rng)
    pn = PhaseNet(n_qubits, tuple(int(w) for w in cfg.phase_hidden), rng)
    spec = amp = phase = None
    if cfg.use_circuits:
        spec = CircuitSpec(n_qubits, cfg.n_layers, cfg.entanglement)
        amp = CircuitParams.small_random(spec, rng, cfg.init_scale)
        phase = CircuitParams.small_random(spec, rng, cfg.init_scale)
    return HybridWavefunction(tr, pn, spec, amp, phase, share_theta=cfg.share_theta,
                              tanh_a=cfg.tanh_a or None, mask=cfg.mask())


def oracle_energy(cfg: RunConfig, H: Hamiltonian) -> float | None:
    if cfg.exact_energy is not None:
        return float(cfg.exact_energy)
    if H.n_qubits > MAX_DENSE_QUBITS:
        return None
    return ground_state(to_dense(H))[0]


# -- one iteration ----------------------------------------------------------------------
@dataclass
class StepResult:
    est: object
    batch: SampleBatch
    n_unique: int


def vmc_step(wf: HybridWavefunction, H: Hamiltonian, batch_size: int, blocks,
             shots: int | None, rng_sample, rng_shots, noise: str = "multinomial") -> StepResult:
    """Sample, evaluate and estimate; does not update parameters.

    Without shot noise repeated samples are identical, so the batch is kept
    as distinct configurations with counts.  In shot mode every sample
    is its own execution: it and each of its connected configurations run
    their circuits with fresh shots, so the batch has one row per sample.
    """
    n = wf.n_qubits
    bits, counts, _ = wf.transformer.sample_counts(batch_size, wf.mask, rng_sample)
    n_unique = len(counts)
    per_sample = shots is not None and wf.has_circuits
    if per_sample:
        bits, counts = np.repeat(bits, counts, axis=0), np.ones(batch_size, dtype=np.int64)
    codes = bits_to_codes(bits)
    targets, elems = H.connected_batch(codes)
    keep = np.abs(elems) >= MERGE_TOL
    keep &= wf.mask.contains(codes_to_bits(targets, n).reshape(-1, n)).reshape(targets.shape)
    if not per_sample:
        table = np.unique(np.concatenate([codes, targets[keep]]))
        s_index = np.searchsorted(table, codes)
        t_index = np.where(keep, np.searchsorted(table, targets), -1)
    else:
        table = np.concatenate([codes, targets[keep]])
        s_index = np.arange(len(codes))
        t_index = np.full(targets.shape, -1)
        t_index[keep] = len(codes) + np.arange(int(keep.sum()))
    ev = wf.evaluate(codes_to_bits(table, n), s_index, shots, rng_shots, blocks, noise)
    lp = ev.log_psi
    e_loc = local_energy_from_evaluation(bits, targets, elems, lp.log_modulus, lp.arg,
                                         t_index, s_index)
    shared = None
    if per_sample:
        # network columns come first and depend on the configuration only
        sizes = wf.block_sizes()
        n_net = sum(sizes[b] for b in NQS_BLOCKS if b in blocks)
        shared = np.arange(ev.o_rows.shape[1]) < n_net
    batch = SampleBatch(bits, counts, ev.log_p[s_index], ev.amp_sq[s_index], e_loc, ev.o_rows,
                        shared_cols=shared)
    return StepResult(estimate(batch), batch, n_unique)


# -- checkpoints ------------------------------------------------------------------------
def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def save_checkpoint(path: Path, wf: HybridWavefunction, iteration: int, opt_state: dict,
                    rngs: dict, cfg: RunConfig) -> Path:
    path = Path(path)
    arrays = {"params": wf.get_vector()}
    for k, v in opt_state.items():
        if isinstance(v, np.ndarray):
            arrays[f"opt_{k}"] = v
    header = {
        "iteration": iteration,
        "layout": wf.layout_signature(),
        "block_sizes": wf.block_sizes(),
        "share_theta": wf.share_theta,
        "tanh_a": wf.tanh_a,
        "opt": {k: v for k, v in opt_state.items() if not isinstance(v, np.ndarray)},
        "rng": {k: _rng_state(r) for k, r in rngs.items()},
        "config": cfg.to_dict(),
    }
    arrays["header"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        arrays = {k: z[k] for k in z.files if k != "header"}
    return header, arrays


def _init_from(wf: HybridWavefunction, path) -> None:
    """Copy every block whose size matches from a checkpoint."""
    header, arrays = load_checkpoint(path)
    vec, off = arrays["params"], 0
    mine = wf.block_sizes()
    for b in BLOCKS:
        size = header["block_sizes"][b]
        if size and size == mine[b]:
            wf.set_vector(vec[off:off + size], (b,))
        off += size


# -- the loop ---------------------------------------------------------------------------
def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def run(cfg: RunConfig, progress=None) -> dict:
    """Train and write ``log.csv``, ``timing.csv``, ``summary.json`` and checkpoints.

    Returns the summary dictionary.
    """
    cfg.validate()
    H = build_hamiltonian(cfg.hamiltonian)
    n = H.n_qubits
    cfg.mask().check_qubits(n)
    plan = cfg.block_plan()
    e_exact = oracle_energy(cfg, H)

    ss = np.random.SeedSequence(cfg.seed)
    rng_init, rng_sample, rng_shots = (np.random.default_rng(s) for s in ss.spawn(3))
    rngs = {"init": rng_init, "sample": rng_sample, "shots": rng_shots}
    wf = build_wavefunction(cfg, n, rng_init)
    if cfg.init_from:
        _init_from(wf, cfg.init_from)
    shots = cfg.shots or None
    schedule = Schedule(cfg.eta_init, cfg.eta_min, cfg.n_iters)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = open(out / "log.csv", "w")
    timing = open(out / "timing.csv", "w")
    log.write(f"# {LOG_VERSION}\n" + ",".join(LOG_COLUMNS) + "\n")
    timing.write("iter,wall_ms\n")

    adam, adam_blocks = None, None
    est = None
    history = []
    try:
        for it in range(cfg.n_iters):
            t0 = time.perf_counter()
            blocks = plan[it]
            lr = cosine_lr(schedule, it)
            try:
                step = vmc_step(wf, H, cfg.batch_size, blocks, shots, rng_sample, rng_shots,
                                cfg.shot_noise)
                est = step.est
                values = np.concatenate([[est.energy, est.variance, est.std_error,
                                          est.max_weight], est.grad])
                if not np.all(np.isfinite(values)):
                    raise FloatingPointError("non-finite estimator output")
                w = wf.get_vector(blocks)
                if cfg.optimizer == "sr":
                    w = sr_step(w, est.grad, eta=lr, eps=cfg.sr_eps, factor=est.fisher_factor)
                else:
                    if adam is None or adam_blocks != blocks:
                        adam, adam_blocks = Adam(len(w), cfg.beta1, cfg.beta2), blocks
                    w = adam.step(w, est.grad, lr)
                if not np.all(np.isfinite(w)):
                    raise FloatingPointError("non-finite parameter update")
            except (ValueError, FloatingPointError, ArithmeticError) as exc:
                ck = save_checkpoint(out / f"checkpoint-{it}-failed.npz", wf, it,
                                     adam.state_dict() if adam else {}, rngs, cfg)
                raise RunError(str(exc), it, ck) from exc
            wf.set_vector(w, blocks)
            rel = abs((est.energy - e_exact) / e_exact) if e_exact else None
            row = (it, est.energy, est.energy_imag, est.variance, est.std_error, rel,
                   est.max_weight, float(np.max(np.abs(est.grad), initial=0.0)), lr,
                   len(w), step.n_unique)
            log.write(",".join(_fmt(v) for v in row) + "\n")
            timing.write(f"{it},{(time.perf_counter() - t0) * 1e3:.3f}\n")
            history.append(est.energy)
            if progress is not None:
                progress(it, est, rel)
            if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint-{it + 1}.npz", wf, it + 1,
                                adam.state_dict() if adam else {}, rngs, cfg)
    finally:
        log.close()
        timing.close()

    save_checkpoint(out / f"checkpoint-{cfg.n_iters}.npz", wf, cfg.n_iters,
                    adam.state_dict() if adam else {}, rngs, cfg)
    final_rel = abs((est.energy - e_exact) / e_exact) if e_exact else None
    summary = {
        "schema": SUMMARY_VERSION,
        "final_energy": est.energy,
        "final_std_error": est.std_error,
        "final_variance": est.variance,
        "exact_energy": e_exact,
        "final_rel_error": final_rel,
        "final_abs_error": abs(est.energy - e_exact) if e_exact is not None else None,
        "n_qubits": n,
        "n_params": wf.n_params(),
        "block_sizes": wf.block_sizes(),
        "layout": wf.layout_signature(),
        "optimizer": cfg.optimizer,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def read_log(path) -> dict[str, np.ndarray]:
    """Columns of a ``log.csv`` as float arrays (empty cells become NaN)."""
    with open(path) as fh:
        first = fh.readline()
        if first.strip() != f"# {LOG_VERSION}":
            raise ValueError(f"unsupported log version line {first.strip()!r}")
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    cols = {}
    for j, name in enumerate(header):
        cols[name] = np.array([float(r[j]) if r[j] else math.nan for r in rows])
    return cols
