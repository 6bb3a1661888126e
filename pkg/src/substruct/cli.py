"""Command-line experiment runner.

Subcommands ``fidelity``, ``identify``, ``bench`` and ``export-matrices``
read a TOML experiment file and write CSV/JSON reports (plus PNG figures)
into an existing output directory.

Exit codes: 0 success, 1 usage or invalid configuration, 2 I/O, 3 TMCMC
did not converge.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cms_cb import cb_couple, cb_reduce
from .cms_dcb import dcb_couple, dcb_reduce
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, ConvergenceError
from .matrix_market import save_matrix
from .modal import generalized_eig, mac_matrix, match_modes, objective_j
from .model import build_tower_model, damaged_full_model, full_assemble, global_layout
from .reporting import write_csv, write_json
from .updating import (
    LikelihoodSpec,
    ModalLikelihood,
    posterior_summary,
    predict_modes,
    synthesize_data,
    tmcmc,
)

logger = logging.getLogger("substruct")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CONVERGENCE = 0, 1, 2, 3


def build_assemblies(config):
    """Tower substructures and the requested reduced assemblies at theta = 1."""
    lower, upper, interface = build_tower_model(config.tower)
    red = config.reduction
    assemblies = {}
    for method in red.methods:
        if method == "CB":
            assemblies[method] = cb_couple(cb_reduce(lower, red.modes_lower),
                                           cb_reduce(upper, red.modes_upper), interface)
        else:
            assemblies[method] = dcb_couple(dcb_reduce(lower, red.modes_lower),
                                            dcb_reduce(upper, red.modes_upper), interface)
    return lower, upper, interface, assemblies


def _output_dir(config):
    out = Path(config.output_dir)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory '{out}' does not exist")
    return out


def cmd_fidelity(config):
    """Per-mode eigenvalue error and MAC of each reduction vs the full model.

    Writes ``fidelity.csv`` with columns
    ``mode, cb_eig_err, dcb_eig_err, cb_mac, dcb_mac`` (blank for methods
    not run) and ``fidelity.png``.
    """
    out = _output_dir(config)
    lower, upper, interface, assemblies = build_assemblies(config)
    n = config.n_modes
    M, K = full_assemble(lower, upper, interface)
    full = generalized_eig(K, M, n, global_layout(lower, upper, interface).dof_labels)

    eig_err, mac_diag = {}, {}
    for method, assembly in assemblies.items():
        reduced = predict_modes(assembly, (1.0, 1.0), n)
        match = match_modes(full, reduced)
        reduced = reduced.take(match.permutation)
        eig_err[method] = np.abs(reduced.eigenvalues - full.eigenvalues) / full.eigenvalues
        mac_diag[method] = np.diag(mac_matrix(reduced.mode_shapes, full.mode_shapes))

    def col(table, method, i):
        return float(table[method][i]) if method in table else None

    rows = [(i + 1, col(eig_err, "CB", i), col(eig_err, "DCB", i), col(mac_diag, "CB", i),
             col(mac_diag, "DCB", i)) for i in range(n)]
    write_csv(out / "fidelity.csv", ["mode", "cb_eig_err", "dcb_eig_err", "cb_mac", "dcb_mac"], rows)
    if config.plots:
        from .plotting import fidelity_figure
        fidelity_figure(np.arange(1, n + 1), eig_err, mac_diag, out / "fidelity.png")
    return {"eig_err": eig_err, "mac_diag": mac_diag, "full_eigenvalues": full.eigenvalues}


def cmd_identify(config):
    """Identify the damage factors from synthetic full-model data.

    For each method writes ``<m>_samples.csv`` (every stage's particles),
    ``<m>_stage_clouds.csv`` (per-stage statistics), ``<m>_summary.json``
    and ``<m>_stages.png``.
    """
    out = _output_dir(config)
    lower, upper, interface, assemblies = build_assemblies(config)
    data = synthesize_data(lower, upper, interface, config.damage_truth, config.n_modes,
                           noise=config.noise, seed=config.seed)
    reports = {}
    for method, assembly in assemblies.items():
        spec = LikelihoodSpec(data, config.n_modes, config.beta_error, method)
        likelihood = ModalLikelihood(spec, assembly)
        start = time.perf_counter()
        result = tmcmc(config.prior, likelihood, config.tmcmc)
        wall = time.perf_counter() - start
        summary = posterior_summary(result.final)
        j_map = likelihood.objective(summary.map)

        tag = method.lower()
        n_par = result.final.theta.shape[1]
        theta_cols = [f"theta_{i + 1}" for i in range(n_par)]
        write_csv(
            out / f"{tag}_samples.csv",
            ["stage", *theta_cols, "log_prior", "log_likelihood"],
            ((s.index, *map(float, t), float(lp), float(ll))
             for s in result.stages for t, lp, ll in zip(s.theta, s.log_prior, s.log_likelihood)),
        )
        cloud_cols = [f"{c}_{stat}" for c in theta_cols for stat in ("mean", "std")]
        write_csv(
            out / f"{tag}_stage_clouds.csv",
            ["stage", "exponent", "acceptance_rate", "log_evidence_increment", *cloud_cols],
            ((s.index, float(s.exponent), float(s.acceptance_rate), float(s.log_evidence_increment),
              *[float(v) for i in range(n_par) for v in (s.theta[:, i].mean(), s.theta[:, i].std())])
             for s in result.stages),
        )
        report = {
            "method": method,
            "damage_truth": list(config.damage_truth),
            "posterior": summary.to_dict(),
            "final_j_at_map": j_map,
            "log_evidence": result.log_evidence,
            "exponents": result.exponents,
            "n_stages": len(result.stages) - 1,
            "likelihood_evaluations": likelihood.n_evaluations,
            "wall_time_s": wall,
            "seed": config.seed,
            "n_samples": config.tmcmc.n_samples,
        }
        write_json(out / f"{tag}_summary.json", report)
        if config.plots:
            from .plotting import stage_figure
            stage_figure(result, np.array(config.damage_truth), out / f"{tag}_stages.png")
        reports[method] = report
    return reports


def _round_sig(x, digits=3):
    if x == 0 or not math.isfinite(x):
        return x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def cmd_bench(config, iterations=None):
    """Mean wall time per likelihood evaluation, reduced vs full model.

    Writes ``bench.json``; ``speedup`` is ``full_time / reduced_time`` to
    three significant digits.
    """
    iterations = config.bench_iterations if iterations is None else int(iterations)
    if iterations < 1:
        raise ConfigurationError("bench iterations must be >= 1")
    out = _output_dir(config)
    lower, upper, interface, assemblies = build_assemblies(config)
    n = config.n_modes
    theta = config.damage_truth
    data = synthesize_data(lower, upper, interface, theta, n)
    layout = global_layout(lower, upper, interface)
    rng = np.random.default_rng(config.seed)
    thetas = [tuple(theta * np.exp(0.05 * rng.standard_normal(2))) for _ in range(iterations)]

    def full_eval(t):
        M, K = damaged_full_model(lower, upper, interface, t)
        model = generalized_eig(K, M, n + 4, layout.dof_labels)
        match = match_modes(data, model)
        return -objective_j(model.take(match.permutation), data, n) / (2.0 * config.beta_error**2)

    def timed(fn):
        fn(thetas[0])
        start = time.perf_counter()
        for t in thetas:
            fn(t)
        return (time.perf_counter() - start) / iterations

    full_time = timed(full_eval)
    report = {"iterations": iterations, "full_time_s": full_time, "methods": {}}
    for method, assembly in assemblies.items():
        spec = LikelihoodSpec(data, n, config.beta_error, method)
        reduced_time = timed(ModalLikelihood(spec, assembly))
        report["methods"][method] = {
            "reduced_time_s": reduced_time,
            "speedup": _round_sig(full_time / reduced_time, 3),
            "reduced_dofs": assembly.n_reduced,
        }
    report["full_dofs"] = layout.n_dofs
    write_json(out / "bench.json", report)
    return report


def cmd_export_matrices(config):
    """Write substructure, full and reduced matrices (at the damage truth) as .mtx files."""
    out = _output_dir(config)
    lower, upper, interface, assemblies = build_assemblies(config)
    written = []

    def put(name, matrix):
        path = out / f"{name}.mtx"
        save_matrix(matrix, path)
        written.append(path.name)

    for sub in (lower, upper):
        put(f"{sub.name}_M", sub.mass)
        put(f"{sub.name}_K", sub.stiffness)
    M, K = damaged_full_model(lower, upper, interface, config.damage_truth)
    put("full_M", M)
    put("full_K", K)
    for method, assembly in assemblies.items():
        system = assembly.at(config.damage_truth)
        put(f"{method.lower()}_M", system.mass)
        put(f"{method.lower()}_K", system.stiffness)
    return written


COMMANDS = {
    "fidelity": cmd_fidelity,
    "identify": cmd_identify,
    "bench": cmd_bench,
    "export-matrices": cmd_export_matrices,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="substruct", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", type=Path, help="TOML experiment file (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
        p.add_argument("--method", choices=["cb", "dcb", "both"], help="reduction method(s)")
        p.add_argument("--out", type=Path, help="existing output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "bench":
            p.add_argument("--iterations", type=int, help="evaluations timed per model")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = config.with_overrides(seed=args.seed, method=args.method, output_dir=args.out)
        kwargs = {}
        if args.command == "bench" and args.iterations is not None:
            kwargs["iterations"] = args.iterations
        result = COMMANDS[args.command](config, **kwargs)
    except ConfigurationError as exc:
        print(f"substruct: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"substruct: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        print(f"substruct: TMCMC did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    _print_result(args.command, result)
    return EXIT_OK


def _print_result(command, result):
    if command == "fidelity":
        for method in result["eig_err"]:
            print(f"{method}: max eigenvalue error {result['eig_err'][method].max():.3e}, "
                  f"min MAC {result['mac_diag'][method].min():.6f}")
    elif command == "identify":
        for method, rep in result.items():
            mean = ", ".join(f"{v:.4f}" for v in rep["posterior"]["mean"])
            print(f"{method}: posterior mean ({mean}), J at MAP {rep['final_j_at_map']:.3e}, "
                  f"{rep['n_stages']} stages")
    elif command == "bench":
        for method, rep in result["methods"].items():
            print(f"{method}: speedup {rep['speedup']} "
                  f"({result['full_time_s'] * 1e3:.3f} ms full vs {rep['reduced_time_s'] * 1e3:.3f} ms reduced)")
    else:
        print(f"wrote {len(result)} matrices")


if __name__ == "__main__":
    sys.exit(main())
