"""Command-line entry point: ``hybridvmc run | exact | param-count``."""
from __future__ import annotations

import argparse
import sys

from .driver import PRESETS, RunConfig, RunError, build_hamiltonian, preset, run
from .exact import ground_state, residual, to_dense
from .nets import TransformerConfig, param_count, phase_param_count


def _widths(text: str) -> list[int]:
    return [int(w) for w in text.split(",") if w.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridvmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train a wavefunction")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="TOML file with RunConfig keys")
    src.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory")
    r.add_argument("--hamiltonian", help="afh:N[:open] or a Hamiltonian file")
    r.add_argument("--iters", type=int, help="override n_iters (joint plans only)")
    r.add_argument("--every", type=int, default=50, help="progress line interval (0: silent)")

    e = sub.add_parser("exact", help="print the exact ground-state energy")
    e.add_argument("--hamiltonian", required=True)
    e.add_argument("--method", default="auto", choices=["auto", "eigh", "power"])

    c = sub.add_parser("param-count", help="print the Transformer parameter count")
    c.add_argument("--d", type=int, required=True, help="embedding dimension")
    c.add_argument("--h", type=int, default=1, help="number of heads")
    c.add_argument("--T", type=int, required=True, help="number of blocks")
    c.add_argument("--nq", type=int, required=True, help="number of qubits")
    c.add_argument("--phase-hidden", type=_widths,
                   help="also print the phase-network count, e.g. 16,8")
    return p


def _run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out:
        overrides["out_dir"] = args.out
    if args.hamiltonian:
        overrides["hamiltonian"] = args.hamiltonian
    if args.iters is not None:
        overrides["n_iters"] = args.iters
    if args.config:
        cfg = RunConfig.from_toml(args.config)
        cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    else:
        cfg = preset(args.preset, **overrides)

    def progress(it, est, rel):
        if args.every and it % args.every == 0:
            tail = f"  rel={rel:.3e}" if rel is not None else ""
            print(f"iter {it:5d}  E={est.energy:.8f} +- {est.std_error:.2e}{tail}", flush=True)

    summary = run(cfg, progress)
    line = f"final E={summary['final_energy']:.10f} +- {summary['final_std_error']:.2e}"
    if summary["exact_energy"] is not None:
        line += f"  exact={summary['exact_energy']:.10f}  rel={summary['final_rel_error']:.3e}"
    print(line)
    print(f"outputs in {cfg.out_dir}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "exact":
            D = to_dense(build_hamiltonian(args.hamiltonian))
            E, v = ground_state(D, args.method)
            print(f"{E:.12f}")
            print(f"residual {residual(D, E, v):.3e}", file=sys.stderr)
            return 0
        if args.command == "param-count":
            print(param_count(TransformerConfig(args.nq, args.d, args.h, args.T)))
            if args.phase_hidden:
                print(phase_param_count(args.nq, args.phase_hidden))
            return 0
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
