"""
Command-line entry point.

Subcommands
-----------
tomo        learn layer noise models for a set of circuits
per         error-reduced expectation values with zero-noise extrapolation
demo-tfim   end-to-end Trotterized Ising demo on the built-in simulator
overhead    sampling-overhead table

Exit codes: 0 success, 2 configuration error, 3 coverage or fit error,
4 executor error.
"""
import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .circuit import load_circuits, parse_dressed
from .exceptions import (
    CoverageError,
    DecompositionError,
    ExecutorError,
    FitError,
    NumericError,
)
from .per import PERMitigator, overhead
from .qpd import overhead_table
from .simulator import FileExecutor, NoiseSpec, SimulatorExecutor
from .tfim import (
    DEMO_STEPS,
    demo_noise_spec,
    exact_magnetization,
    magnetization_observables,
    trotter_circuit,
)
from .tomography import NoiseDataFrame, SparsePauliTomography

logger = logging.getLogger("pauliper")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_EXECUTOR = 4


class ConfigError(Exception):
    pass


# -- argument handling -------------------------------------------------------------


def _int_list(text):
    return [int(v) for v in text.replace(",", " ").split()]


def _float_list(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _add_common(parser, per=False, tomo=False):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--shots", type=int, default=1024)
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--noise-spec", help="planted noise for the simulator (JSON)")
    parser.add_argument(
        "--executor", default="sim", help="'sim' or 'files:<dir>' for an external runner"
    )
    if tomo:
        parser.add_argument("--samples", type=int, default=32, help="twirls per basis and depth")
        parser.add_argument("--single-samples", type=int, default=200)
        parser.add_argument("--depths", type=_int_list, default=[2, 4, 8, 16])
        parser.add_argument(
            "--connectivity", help="qubit pairs such as '0-1,1-2' (default: from circuits)"
        )
    if per:
        parser.add_argument("--noise-strengths", type=_float_list, default=[0.5, 1.0, 2.0])
        parser.add_argument("--per-samples", type=int, default=1000)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pauliper", description="Pauli noise learning and error reduction"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    tomo = sub.add_parser("tomo", help="learn sparse Pauli-Lindblad layer models")
    tomo.add_argument("circuits", help="circuits JSON file")
    _add_common(tomo, tomo=True)

    per = sub.add_parser("per", help="error-reduced expectation values")
    per.add_argument("circuits", help="circuits JSON file")
    per.add_argument("noise_model", help="noise_model.json written by 'tomo'")
    per.add_argument("observables", help="comma-separated Pauli labels, qubit 0 first")
    per.add_argument("--no-readout-mitigation", action="store_true")
    _add_common(per, per=True)

    demo = sub.add_parser("demo-tfim", help="Trotterized transverse-field Ising demo")
    demo.add_argument("--qubits", type=int, default=4)
    demo.add_argument("--steps", type=int, default=DEMO_STEPS)
    _add_common(demo, per=True, tomo=True)

    ovh = sub.add_parser("overhead", help="sampling overhead (gamma - xi (gamma - 1))**l")
    ovh.add_argument("--gamma", type=float, required=True)
    ovh.add_argument("--xi", type=_float_list, default=[0.0, 0.5, 0.8, 1.0])
    ovh.add_argument("--depth", type=_int_list, default=[1, 2, 4, 8])
    return parser


def _parse_connectivity(text):
    if not text:
        return None
    edges = []
    for item in text.replace(";", ",").split(","):
        a, b = item.strip().split("-")
        edges.append((int(a), int(b)))
    return edges


def _noise_spec(path):
    if path is None:
        return NoiseSpec()
    try:
        return NoiseSpec.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read noise spec {path}: {exc}") from None


def make_executor(args, noise=None, seed_offset=0):
    if args.shots < 1:
        raise ConfigError("--shots must be positive")
    if args.executor == "sim":
        if noise is None:
            noise = _noise_spec(args.noise_spec)
        return SimulatorExecutor(noise, shots=args.shots, seed=args.seed + seed_offset)
    if args.executor.startswith("files:"):
        return FileExecutor(args.executor[len("files:"):], shots=args.shots)
    raise ConfigError(f"unknown executor {args.executor!r}")


def _load_circuits(path):
    try:
        return load_circuits(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read circuits from {path}: {exc}") from None


def _fmt(value):
    return repr(float(value))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


# -- subcommands ---------------------------------------------------------------------


def _tomography(args, circuits, executor):
    tomo = SparsePauliTomography(
        executor=executor,
        connectivity=_parse_connectivity(getattr(args, "connectivity", None)),
        depths=args.depths,
        samples=args.samples,
        single_samples=args.single_samples,
        seed=args.seed,
    )
    return tomo.fit(circuits)


def cmd_tomo(args):
    circuits = _load_circuits(args.circuits)
    tomo = _tomography(args, circuits, make_executor(args))
    os.makedirs(args.out, exist_ok=True)
    tomo.noise_data_.dump(os.path.join(args.out, "noise_model.json"))
    _write_csv(
        os.path.join(args.out, "decays.csv"),
        ["layer_id", "term", "depth", "mean", "stderr", "spam", "decay"],
        tomo.decay_table(),
    )
    for lid, model in sorted(tomo.noise_data_.models.items()):
        print(f"layer {lid} ({model.layer}): {len(model.terms)} terms, "
              f"sum lambda = {model.total_rate:.6f}, residual = {tomo.residuals_[lid]:.3e}")
    return EXIT_OK


def _run_per(args, circuits, noise_data, observables, executor, readout=True):
    mit = PERMitigator(
        noise_data=noise_data,
        executor=executor,
        observables=observables,
        noise_strengths=args.noise_strengths,
        samples=args.per_samples,
        readout_mitigation=readout,
        seed=args.seed,
        # file executors answer one batch file per run
        batch_size=None if isinstance(executor, FileExecutor) else 500,
    )
    mit.fit(circuits)
    mit.predict()
    return mit


def _per_rows(mit):
    rows = []
    for ci, res in enumerate(mit.results_):
        for label, r in res.items():
            for xi, mean, se in r.points():
                rows.append((ci, label, float(xi), mean, se, r.fit.a, r.fit.b))
    return rows


def cmd_per(args):
    circuits = _load_circuits(args.circuits)
    try:
        noise_data = NoiseDataFrame.load(args.noise_model)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read noise model {args.noise_model}: {exc}") from None
    observables = [o.strip() for o in args.observables.split(",") if o.strip()]
    mit = _run_per(
        args, circuits, noise_data, observables, make_executor(args),
        readout=not args.no_readout_mitigation,
    )
    os.makedirs(args.out, exist_ok=True)
    extrapolated = len(mit.strengths_) > 1
    results = {
        "noise_strengths": mit.strengths_,
        "samples": args.per_samples,
        "seed": args.seed,
        "extrapolated": extrapolated,
        "bases": list(mit.bases_),
        "circuits": [
            {
                "index": ci,
                "overheads": {_fmt(xi): g for xi, g in sorted(ov.items())},
                "observables": [res[o.label].to_dict() for o in mit.observables_],
            }
            for ci, (res, ov) in enumerate(zip(mit.results_, mit.overheads()))
        ],
    }
    _write_json(os.path.join(args.out, "results.json"), results)
    _write_csv(
        os.path.join(args.out, "vzne.csv"),
        ["circuit", "observable", "xi", "mean", "stderr", "fit_a", "fit_b"],
        _per_rows(mit),
    )
    if not extrapolated:
        print("single noise strength: estimates are not extrapolated")
    for ci, res in enumerate(mit.results_):
        for o in mit.observables_:
            r = res[o.label]
            flag = " (flagged)" if r.fit.flagged else ""
            print(f"circuit {ci} {o.label}: {r.zero_noise:+.5f} +- {r.fit.stderr:.5f}{flag}")
    return EXIT_OK


def sample_budget(gammas):
    """``xi -> gamma**2``: samples per ``1/delta**2`` at each strength."""
    return {xi: g**2 for xi, g in gammas.items()}


def cmd_demo(args):
    n, steps = args.qubits, args.steps
    if n < 2:
        raise ConfigError("--qubits must be at least 2")
    if steps < 0:
        raise ConfigError("--steps must be non-negative")
    planted = _noise_spec(args.noise_spec) if args.noise_spec else demo_noise_spec(n, max(steps, 1))
    circuits = [trotter_circuit(n, k) for k in range(steps + 1)]
    exact = [exact_magnetization(c) for c in circuits]

    # learn the layer models from one Trotter step, which holds every layer
    tomo = _tomography(args, [circuits[min(1, steps)]], make_executor(args, planted, 1))
    noise_data = tomo.noise_data_
    observables = [o.label for o in magnetization_observables(n)]
    mit = _run_per(args, circuits, noise_data, observables, make_executor(args, planted, 2))

    os.makedirs(args.out, exist_ok=True)
    rows = []
    scatter = {}
    for inst, values in zip(mit.instances_, mit.instance_estimates_):
        scatter.setdefault((inst.circuit_index, inst.xi), []).append(
            float(np.mean(list(values.values())))
        )
    for k, res in enumerate(mit.results_):
        zs = [res[o] for o in observables]
        unmitigated = [r.mean(1.0) for r in zs] if 1.0 in zs[0].estimates else [np.nan] * n
        unmitigated_se = [r.stderr(1.0) for r in zs] if 1.0 in zs[0].estimates else [np.nan] * n
        mitigated = [r.zero_noise for r in zs]
        mitigated_se = [r.fit.stderr for r in zs]
        rows.append(
            (
                k,
                exact[k],
                float(np.mean(unmitigated)),
                float(np.sqrt(np.sum(np.square(unmitigated_se))) / n),
                float(np.mean(mitigated)),
                float(np.sqrt(np.sum(np.square(mitigated_se))) / n),
            )
            + tuple(float(m) for m in mitigated)
        )
    _write_csv(
        os.path.join(args.out, "magnetization.csv"),
        ["step", "exact", "unmitigated", "unmitigated_stderr", "mitigated", "mitigated_stderr"]
        + [f"mitigated_z{q}" for q in range(n)],
        rows,
    )
    _write_csv(
        os.path.join(args.out, "scatter.csv"),
        ["step", "xi", "sample", "estimate"],
        [
            (k, float(xi), i, float(v))
            for (k, xi), values in sorted(scatter.items())
            for i, v in enumerate(values)
        ],
    )
    _write_csv(
        os.path.join(args.out, "vzne.csv"),
        ["circuit", "observable", "xi", "mean", "stderr", "fit_a", "fit_b"],
        _per_rows(mit),
    )
    tomo.noise_data_.dump(os.path.join(args.out, "noise_model.json"))

    deepest = [layer.layer_id for layer in parse_dressed(circuits[-1]).clifford_layers()]
    # layers without a planted model are noiseless
    planted_models = [planted.models[lid] for lid in deepest if lid in planted.models]
    learned_models = [noise_data.models[lid] for lid in deepest]
    xis = sorted(set([0.0] + list(mit.strengths_)))
    planted_gamma = {xi: overhead(planted_models, xi) for xi in xis}
    learned_gamma = {xi: overhead(learned_models, xi) for xi in xis}
    per_budget = sum(planted_gamma[xi] ** 2 for xi in mit.strengths_)
    summary = {
        "qubits": n,
        "steps": steps,
        "noise_strengths": mit.strengths_,
        "per_samples": args.per_samples,
        "shots": args.shots,
        "seed": args.seed,
        "planted_overhead": {_fmt(xi): g for xi, g in planted_gamma.items()},
        "learned_overhead": {_fmt(xi): g for xi, g in learned_gamma.items()},
        "pec_samples_per_inverse_delta_squared": planted_gamma[0.0] ** 2,
        "per_samples_per_inverse_delta_squared": per_budget,
        "mean_abs_error_unmitigated": _mae(rows, 2),
        "mean_abs_error_mitigated": _mae(rows, 4),
    }
    _write_json(os.path.join(args.out, "summary.json"), summary)
    print(f"overhead at xi=0 after {steps} steps: {planted_gamma[0.0]:.3f} "
          f"(learned {learned_gamma[0.0]:.3f})")
    if 0.5 in planted_gamma:
        print(f"overhead at xi=0.5: {planted_gamma[0.5]:.3f} (learned {learned_gamma[0.5]:.3f})")
    print(f"PEC-equivalent samples: {planted_gamma[0.0] ** 2:.0f}/delta^2")
    strengths = ",".join(f"{xi:g}" for xi in mit.strengths_)
    print(f"PER samples at xi in {{{strengths}}}: {per_budget:.0f}/delta^2")
    print(f"mean |error| over steps 1-{steps}: unmitigated {summary['mean_abs_error_unmitigated']:.4f}, "
          f"mitigated {summary['mean_abs_error_mitigated']:.4f}")
    return EXIT_OK


def _mae(rows, column):
    errors = [abs(row[column] - row[1]) for row in rows if row[0] >= 1]
    return float(np.mean(errors)) if errors else 0.0


def cmd_overhead(args):
    if args.gamma < 1:
        raise ConfigError("--gamma must be at least 1")
    print("xi,depth,overhead")
    for xi, depth, value in overhead_table(args.gamma, args.xi, args.depth):
        print(f"{xi:g},{depth},{value:.6g}")
    return EXIT_OK


COMMANDS = {
    "tomo": cmd_tomo,
    "per": cmd_per,
    "demo-tfim": cmd_demo,
    "overhead": cmd_overhead,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ExecutorError as exc:
        print(f"executor error: {exc}", file=sys.stderr)
        return EXIT_EXECUTOR
    except (CoverageError, FitError, NumericError, DecompositionError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
