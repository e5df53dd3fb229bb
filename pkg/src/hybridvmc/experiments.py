"""Multi-seed sweeps behind the figure-level benchmarks.

Each function runs the driver several times under ``out_root`` and returns
plain dictionaries of final errors, so the same code backs the acceptance
suite and ad-hoc studies.  Runs are sequential; seeds are the only source of
variation between repetitions.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .driver import preset, run


def _final(summary: dict) -> dict:
    return {
        "energy": summary["final_energy"],
        "std_error": summary["final_std_error"],
        "abs_error": summary["final_abs_error"],
        "rel_error": summary["final_rel_error"],
    }


def sample_size_grid(out_root, sizes=(100, 1000, 10_000), seeds=range(10), **overrides) -> dict:
    """4-spin ring with B = M swept over ``sizes`` (the ``fig2-grid`` preset)."""
    out = {}
    for size in sizes:
        out[size] = [
            _final(run(preset("fig2-grid", batch_size=size, shots=size, seed=seed,
                              out_dir=str(Path(out_root) / f"B{size}-s{seed}"), **overrides)))
            for seed in seeds
        ]
    return out


def chain_scaling(out_root, sizes=range(2, 9), seeds=range(10), **overrides) -> dict:
    """Periodic chains of increasing length (the ``fig3-scaling`` preset)."""
    out = {}
    for n in sizes:
        out[n] = [
            _final(run(preset("fig3-scaling", hamiltonian=f"afh:{n}", seed=seed,
                              out_dir=str(Path(out_root) / f"n{n}-s{seed}"), **overrides)))
            for seed in seeds
        ]
    return out


def sequential_layers(out_root, layers=(0, 1, 2, 3, 4), seeds=range(3), pretrain_iters=300,
                      circuit_iters=300, circuit_eta=(0.3, 0.03), **overrides) -> dict:
    """Pre-train the networks once per seed, then optimize circuits of each depth.

    The circuit stage restarts the cosine schedule at ``circuit_eta``
    (start, end); only circuit blocks move, and their small initial
    coefficients need larger steps than the networks did.

    Returns ``{"pretrain": [...], N_l: [...]}`` with one record per seed.
    """
    base = preset("fig4-sequential", **overrides)
    out = {"pretrain": []}
    for seed in seeds:
        pre_dir = Path(out_root) / f"pre-s{seed}"
        pre = run(preset("fig4-sequential", use_circuits=False, seed=seed, out_dir=str(pre_dir),
                         n_iters=pretrain_iters, plan=[], **overrides))
        out["pretrain"].append(_final(pre))
        ckpt = pre_dir / f"checkpoint-{pretrain_iters}.npz"
        for nl in layers:
            s = run(preset("fig4-sequential", n_layers=nl, seed=seed, init_from=str(ckpt),
                           n_iters=circuit_iters, plan=[["circuits", circuit_iters]],
                           eta_init=circuit_eta[0], eta_min=circuit_eta[1],
                           out_dir=str(Path(out_root) / f"L{nl}-s{seed}"), **overrides))
            out.setdefault(nl, []).append(_final(s))
    out["hamiltonian"] = base.hamiltonian
    return out


def hybrid_vs_nqs(out_root, seeds=range(5), hamiltonian="afh:7", n_iters=None, **overrides) -> dict:
    """Hybrid (``fig6-afh7``) against the circuit-free ``nqs-baseline`` preset."""
    out = {"hybrid": [], "nqs": []}
    extra = {} if n_iters is None else {"n_iters": n_iters}
    for seed in seeds:
        for key, name in (("hybrid", "fig6-afh7"), ("nqs", "nqs-baseline")):
            s = run(preset(name, hamiltonian=hamiltonian, seed=seed,
                           out_dir=str(Path(out_root) / f"{key}-s{seed}"), **extra, **overrides))
            out[key].append(_final(s))
    return out


def median(records, key) -> float:
    return float(np.median([r[key] for r in records]))
