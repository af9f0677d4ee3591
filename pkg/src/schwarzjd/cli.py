"""Experiment harness: configuration, single runs, and parameter sweeps.

A run writes three artifacts into the output directory:

  trace.csv    per-iteration cluster Ritz values, stop norm, wall time
  final.csv    final eigenvalues with reference values where available
  summary.json effective configuration echo plus run statistics

``sweep`` repeats a run over a list of fine or coarse levels and aggregates
the final columns side by side, one column per level, with iteration count
and final stop norm rows at the bottom.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fem, oracle
from .eigensolver import ClusterSpec, SolverConfig, SolverReport, solve
from .errors import InvalidArgumentError, SchwarzJDError
from .mesh import DomainShape, build_decomposition, build_hierarchy

__all__ = ["ExperimentConfig", "run", "sweep", "fit_gamma", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


@dataclass
class ExperimentConfig:
    domain: str = "square"
    coarse: int = 3
    fine: int = 6
    overlap: float = 0.25
    m: int = 1
    M: int = 1
    tol: float = 1e-8
    max_iter: int = 200
    restart_dim: int | None = None
    shared_shift: bool = False
    lazy_refactor: float = 0.0
    output_dir: str = "."
    format: str = "csv"

    def interior_dofs(self, level: int) -> int:
        if self.domain == "square":
            return (2**level - 1) ** 2
        return (2 ** (level + 1) - 1) ** 2 - 4**level

    def validate(self) -> list[str]:
        errors = []
        if self.domain not in ("square", "lshape"):
            errors.append(f"domain must be 'square' or 'lshape', got {self.domain!r}")
        if self.coarse < 1:
            errors.append(f"coarse level must be >= 1, got {self.coarse}")
        if self.fine < self.coarse + 1:
            errors.append(
                f"fine level {self.fine} must exceed coarse level {self.coarse}"
            )
        if not 0.0 < self.overlap <= 0.5:
            errors.append(f"overlap ratio must lie in (0, 1/2], got {self.overlap}")
        elif self.fine >= self.coarse + 1 and self.overlap * 2 ** (self.fine - self.coarse) < 1.0 - 1e-12:
            errors.append("overlap is smaller than one fine layer")
        if not 1 <= self.m <= self.M:
            errors.append(f"need 1 <= m <= M, got m={self.m}, M={self.M}")
        elif self.domain in ("square", "lshape") and self.coarse >= 1:
            initial_dofs = self.interior_dofs(self.coarse + 1)
            if self.M > initial_dofs:
                errors.append(
                    f"M={self.M} exceeds the {initial_dofs} dofs of the initialization mesh"
                )
        if self.tol <= 0:
            errors.append(f"tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            errors.append(f"max_iter must be >= 1, got {self.max_iter}")
        if self.restart_dim is not None and self.restart_dim < 2 * self.M + 1:
            errors.append(f"restart_dim must be at least {2 * self.M + 1}")
        if self.lazy_refactor < 0:
            errors.append("lazy_refactor must be >= 0")
        if self.format not in ("csv", "json"):
            errors.append(f"format must be 'csv' or 'json', got {self.format!r}")
        return errors

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            tol=self.tol,
            max_iter=self.max_iter,
            overlap_ratio=self.overlap,
            restart_dim=self.restart_dim,
            shared_shift=self.shared_shift,
            lazy_refactor=self.lazy_refactor,
        )


def _run_solver(config: ExperimentConfig) -> tuple[SolverReport, fem.SparsePencil]:
    shape = DomainShape(config.domain)
    hier = build_hierarchy(shape, config.coarse, config.fine)
    pencil = fem.assemble(hier.fine)
    decomp = build_decomposition(hier, config.overlap)
    cluster = ClusterSpec(config.m, config.M)
    report = solve(hier, pencil, decomp, cluster, config.solver_config())
    return report, pencil


def fit_gamma(trace, discrete_values, first: int, last: int) -> float | None:
    """Geometric-mean reduction factor of the total cluster eigenvalue error.

    Ratios are taken between consecutive total errors from the second
    iteration on, skipping iterations whose error has decayed into roundoff
    (below 1e-10 of the summed reference values), where ratios are noise.
    """
    lam_h = np.asarray(discrete_values)[first - 1 : last]
    errors = [float(np.sum(rec.values - lam_h)) for rec in trace]
    floor = 1e-10 * float(np.sum(np.abs(lam_h)))
    ratios = []
    for k in range(2, len(errors)):
        if errors[k - 1] > floor and errors[k] > 0.0:
            ratios.append(errors[k] / errors[k - 1])
    if not ratios:
        return None
    return float(math.exp(np.mean(np.log(ratios))))


def _reference_values(config: ExperimentConfig, pencil, count: int):
    """(analytic, discrete) reference spectra where feasible, else None."""
    analytic = None
    if config.domain == "square":
        analytic = oracle.exact_square_eigenvalues(count).values
    discrete = None
    if pencil.n <= oracle.DENSE_DOF_LIMIT:
        discrete = oracle.dense_discrete_spectrum(pencil, count).values
    return analytic, discrete


def _trace_rows(report: SolverReport):
    head = ["k"] + [f"lambda_{i}" for i in range(report.cluster.first, report.cluster.last + 1)]
    head += ["stop_norm", "wall_ms"]
    rows = []
    for rec in report.trace:
        row = [str(rec.iteration)]
        row += [f"{v:.9f}" for v in rec.values]
        row += [f"{rec.stop_norm:.6e}", f"{rec.wall_ms:.3f}"]
        rows.append(row)
    return head, rows


def _final_rows(report: SolverReport, reference):
    head = ["i", "lambda", "oracle_lambda", "abs_err"]
    rows = []
    for idx, i in enumerate(range(report.cluster.first, report.cluster.last + 1)):
        lam = report.values[idx]
        if reference is not None:
            ref = reference[i - 1]
            rows.append([str(i), f"{lam:.9f}", f"{ref:.9f}", f"{abs(lam - ref):.6e}"])
        else:
            rows.append([str(i), f"{lam:.9f}", "", ""])
    return head, rows


def _write_table(path: Path, head, rows, fmt: str) -> None:
    if fmt == "csv":
        with open(path.with_suffix(".csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(head)
            writer.writerows(rows)
    else:
        payload = [dict(zip(head, row)) for row in rows]
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit status."""
    errors = config.validate()
    if errors:
        raise InvalidArgumentError("; ".join(errors))
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    report, pencil = _run_solver(config)
    analytic, discrete = _reference_values(config, pencil, config.M)
    reference = analytic if analytic is not None else discrete
    gamma = None
    if discrete is not None:
        gamma = fit_gamma(report.trace, discrete, config.m, config.M)

    head, rows = _trace_rows(report)
    _write_table(out / "trace", head, rows, config.format)
    head, rows = _final_rows(report, reference)
    _write_table(out / "final", head, rows, config.format)

    summary = {
        "config": dataclasses.asdict(config),
        "dof_count": pencil.n,
        "subdomain_count": report.subdomain_count,
        "iterations": report.iterations,
        "converged": report.converged,
        "stagnated": report.stagnated,
        "final_stop_norm": report.stop_norm,
        "gamma": gamma,
        "basis_dims": [rec.basis_dim for rec in report.trace],
        "timings_s": {k: round(v, 6) for k, v in report.timings.items()},
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")

    print(
        f"{config.domain} coarse={config.coarse} fine={config.fine} "
        f"cluster=({config.m},{config.M}): "
        f"{'converged' if report.converged else 'NOT converged'} "
        f"after {report.iterations} iterations, stop norm {report.stop_norm:.4e}"
    )
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def sweep(config: ExperimentConfig, vary_fine=None, vary_coarse=None) -> int:
    """Run one solve per varied level and aggregate the final columns side by side."""
    if bool(vary_fine) == bool(vary_coarse):
        raise InvalidArgumentError("exactly one non-empty list of fine or coarse levels is required")
    param = "fine" if vary_fine else "coarse"
    values = list(vary_fine or vary_coarse)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    columns = {}
    all_ok = True
    for v in values:
        label = f"{param}={v}"
        sub = dataclasses.replace(config, **{param: v, "output_dir": str(out / label)})
        try:
            code = run(sub)
            with open(out / label / "summary.json") as fh:
                summary = json.load(fh)
            final_path = out / label / f"final.{sub.format}"
            if sub.format == "csv":
                with open(final_path) as fh:
                    lams = [row[1] for row in list(csv.reader(fh))[1:]]
            else:
                with open(final_path) as fh:
                    lams = [row["lambda"] for row in json.load(fh)]
            columns[label] = {
                "lambdas": lams,
                "it": str(summary["iterations"]),
                "stop": f"{summary['final_stop_norm']:.6e}",
            }
            all_ok = all_ok and code == EXIT_OK
        except SchwarzJDError as exc:
            print(f"{label}: error: {exc}", file=sys.stderr)
            columns[label] = {"lambdas": None, "it": "error", "stop": str(exc)}
            all_ok = False

    labels = list(columns)
    head = ["index"] + labels
    rows = []
    for offset, i in enumerate(range(config.m, config.M + 1)):
        row = [f"lambda_{i}"]
        for label in labels:
            lams = columns[label]["lambdas"]
            row.append(lams[offset] if lams else "")
        rows.append(row)
    rows.append(["it."] + [columns[label]["it"] for label in labels])
    rows.append(["stop."] + [columns[label]["stop"] for label in labels])
    _write_table(out / "sweep", head, rows, config.format)
    return EXIT_OK if all_ok else EXIT_NOT_CONVERGED


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--domain", choices=["square", "lshape"])
    p.add_argument("--coarse", type=int, help="coarse mesh refinement level")
    p.add_argument("--fine", type=int, help="fine mesh refinement level")
    p.add_argument("--overlap", type=float, help="overlap width relative to subdomain size")
    p.add_argument("--m", type=int, help="first targeted eigenvalue index (1-based)")
    p.add_argument("--M", type=int, help="last targeted eigenvalue index (1-based)")
    p.add_argument("--tol", type=float, help="stopping tolerance on the residual stop norm")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--restart-dim", type=int, dest="restart_dim")
    p.add_argument("--shared-shift", action="store_const", const=True, dest="shared_shift",
                   help="use the single shift of the first cluster index for all corrections")
    p.add_argument("--lazy-refactor", type=float, dest="lazy_refactor",
                   help="reuse local factorizations while shifts move less than this")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--format", choices=["csv", "json"])


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    merged = {}
    if args.config:
        with open(args.config) as fh:
            file_values = json.load(fh)
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config file keys: {sorted(unknown)}")
        merged.update(file_values)
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    return ExperimentConfig(**merged)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="schwarzjd",
        description="Interior clustered Laplacian eigenvalues by a two-level "
        "additive Schwarz preconditioned block Jacobi-Davidson iteration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="single experiment")
    _add_common_flags(run_p)
    sweep_p = sub.add_parser("sweep", help="one run per varied mesh level")
    _add_common_flags(sweep_p)
    sweep_p.add_argument("--vary-fine", type=int, nargs="+", dest="vary_fine")
    sweep_p.add_argument("--vary-coarse", type=int, nargs="+", dest="vary_coarse")

    args = parser.parse_args(argv)
    try:
        config = _build_config(args)
        errors = config.validate()
        if errors:
            for e in errors:
                print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        if args.command == "run":
            return run(config)
        return sweep(config, vary_fine=args.vary_fine, vary_coarse=args.vary_coarse)
    except InvalidArgumentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchwarzJDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
