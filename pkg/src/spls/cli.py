"""Command line driver: refinement sweeps, stability estimates and mesh checks.

``spls run`` writes ``results.csv``, ``results.md``, ``convergence.svg`` and
``residuals.csv`` into ``--out``. Options may also come from a YAML file given
with ``--config``; flags on the command line take precedence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import mesh as meshmod
from .analysis import ConvergenceRow, convergence_rates, estimate_coercivity, estimate_infsup, flux_error
from .assembly import assemble_system
from .problems import PROBLEMS, ProblemSpec, make_problem
from .solvers import SolverConfig, spls_solve

log = logging.getLogger("spls")

DEFAULT_KAPPA = 0.2
CSV_COLUMNS = ("level", "h", "error", "rate", "iterations", "residual")


class StageError(RuntimeError):
    """Failure tagged with the pipeline stage it happened in."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ExperimentConfig:
    problem: str
    params: dict = field(default_factory=dict)
    levels: int = 1
    initial_n: Optional[int] = None
    refinement: str = "uniform"
    kappa: float = DEFAULT_KAPPA
    solver: SolverConfig = field(default_factory=SolverConfig)
    quad_degree: Optional[int] = None      # error quadrature, problem default if None
    out: Optional[Path] = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.levels < 1:
            raise ValueError("levels must be at least 1")
        if self.initial_n is not None and self.initial_n < 1:
            raise ValueError("initial_n must be positive")
        if self.refinement not in ("uniform", "graded"):
            raise ValueError("refinement must be 'uniform' or 'graded'")
        if self.refinement == "graded" and self.problem != "singular":
            raise ValueError("graded refinement is only available for the singular problem")
        if self.quad_degree is not None and not 4 <= self.quad_degree <= 6:
            raise ValueError("quad degree must lie in 4..6")


def default_initial_n(spec: ProblemSpec) -> int:
    return 2 if spec.dim == 3 else 4


@contextmanager
def _stage(name):
    """Re-raise anything but a StageError as one tagged ``name``."""
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


def level_meshes(spec: ProblemSpec, cfg: ExperimentConfig):
    """Yield the mesh of every level, refining the previous one."""
    n0 = cfg.initial_n or default_initial_n(spec)
    with _stage("mesh"):
        m = spec.make_mesh(n0)
    for level in range(1, cfg.levels + 1):
        yield level, m
        if level < cfg.levels:
            with _stage("mesh"):
                if cfg.refinement == "graded":
                    m = meshmod.graded_refine(m, m.find_vertex(spec.singular_point), cfg.kappa)
                else:
                    m = meshmod.uniform_refine(m)


def run_experiment(cfg: ExperimentConfig, reports: Optional[list] = None) -> list:
    """Solve on every level and return one :class:`ConvergenceRow` per level.

    The solver report of each level is appended to ``reports`` when a list is given.
    """
    with _stage("config"):
        spec = make_problem(cfg.problem, **cfg.params)
    quad = cfg.quad_degree or spec.error_quad
    errors, partial = [], []
    for level, m in level_meshes(spec, cfg):
        t0 = time.perf_counter()
        with _stage("assemble"):
            sys_ = assemble_system(m, spec, inner=cfg.solver.inner)
        with _stage("solve"):
            _, p, rep = spls_solve(sys_, cfg.solver)
        if not rep.converged:
            log.warning("level %d: not converged after %d iterations (residual %.3e)",
                        level, rep.iterations, rep.final_residual)
        with _stage("error"):
            space = sys_.W if cfg.solver.trial_mode == "projection" else sys_.V
            err = flux_error(m, spec.coefficient, spec.exact_flux, p, space, quad,
                             boundary_values=sys_.g)
        errors.append(err)
        partial.append((level, m.h(), err, rep.iterations, rep.final_residual))
        if reports is not None:
            reports.append(rep)
        log.info("level %d: %d test dofs, error %.4e, %d iterations, %.1fs",
                 level, sys_.V.ndofs, err, rep.iterations, time.perf_counter() - t0)
    with _stage("error"):
        rates = convergence_rates(errors)
    return [ConvergenceRow(level, h, e, r, it, res)
            for (level, h, e, it, res), r in zip(partial, rates)]


# -- output --------------------------------------------------------------------------

def _fmt_error(e: float, scientific: bool) -> str:
    return f"{e:.2e}" if scientific else f"{e:.3g}"


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.level, repr(r.h), repr(r.error), repr(r.rate), r.iterations,
                        repr(r.final_residual)])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [ConvergenceRow(int(d["level"]), float(d["h"]), float(d["error"]), float(d["rate"]),
                               int(d["iterations"]), float(d["residual"])) for d in rd]


def markdown_table(rows, scientific: bool = False) -> str:
    lines = ["| level | h | error | rate | it | residual |",
             "|---:|---:|---:|---:|---:|---:|"]
    for r in rows:
        lines.append(f"| {r.level} | {r.h:.4g} | {_fmt_error(r.error, scientific)} | "
                     f"{r.rate:.3f} | {r.iterations} | {r.final_residual:.2e} |")
    return "\n".join(lines) + "\n"


def parse_markdown_table(text: str) -> list:
    """Rows of a table written by :func:`markdown_table`, values as printed."""
    out = []
    for line in text.strip().splitlines()[2:]:
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        out.append(ConvergenceRow(int(cells[0]), float(cells[1]), float(cells[2]),
                                  float(cells[3]), int(cells[4]), float(cells[5])))
    return out


def write_plot(rows, path, title: str = "") -> None:
    """Log-log error against h with a slope-2 guide; one marker per level."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    h = np.array([r.h for r in rows])
    e = np.array([r.error for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    (data,) = ax.loglog(h, e, "o-", color="C0")
    data.set_gid("data-markers")
    ref = e[0] * (h / h[0]) ** 2
    (guide,) = ax.loglog(h, ref, "--", color="0.5")
    guide.set_gid("slope-2-reference")
    ax.text(h[-1], ref[-1], "  slope 2", color="0.4", va="center")
    ax.set_xlabel("h")
    ax.set_ylabel("flux error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "spls", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_outputs(rows, out_dir, title: str = "", scientific: bool = False,
                 histories: Optional[list] = None) -> dict:
    if not rows:
        raise ValueError("no rows to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "results.csv", "markdown": out / "results.md",
             "svg": out / "convergence.svg"}
    write_csv(rows, paths["csv"])
    paths["markdown"].write_text(markdown_table(rows, scientific))
    write_plot(rows, paths["svg"], title)
    if histories is not None:
        paths["residuals"] = out / "residuals.csv"
        with open(paths["residuals"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("level", "iteration", "residual"))
            for level, hist in enumerate(histories, start=1):
                for j, r in enumerate(hist):
                    w.writerow((level, j, repr(r)))
    return paths


# -- argument handling -----------------------------------------------------------------

_ALGORITHMS = {"u": "U", "ug": "UG", "ucg": "UCG"}
_TRIALS = {"projection": "projection", "noprojection": "no-projection"}
_RUN_KEYS = ("problem", "c", "k", "eps", "p", "levels", "initial_n", "refine", "kappa",
             "algorithm", "trial", "tol", "max_iter", "quad", "out")


def _problem_params(problem: str, opts: dict) -> dict:
    if problem == "intersecting":
        return {"c": opts["c"]} if opts.get("c") is not None else {"c": 1.0 / 3.0}
    if problem in ("singular", "cube"):
        return {"k": opts["k"]} if opts.get("k") is not None else {"k": 5.0}
    params = {"eps": opts["eps"] if opts.get("eps") is not None else 0.4}
    if opts.get("p") is not None:
        params["P"] = opts["p"]
    return params


def _load_config(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = set(data) - set(_RUN_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def config_from_options(opts: dict) -> ExperimentConfig:
    """Build a config from merged file and flag values (flags already applied)."""
    if not opts.get("problem"):
        raise ValueError("--problem is required")
    if opts.get("levels") is None:
        raise ValueError("--levels is required")
    solver = SolverConfig(
        variant=_ALGORITHMS[str(opts.get("algorithm") or "ucg").lower()],
        trial_mode=_TRIALS[str(opts.get("trial") or "projection").lower()],
        tol=float(opts["tol"]) if opts.get("tol") is not None else 1e-10,
        max_iter=int(opts["max_iter"]) if opts.get("max_iter") is not None else 20000,
    )
    return ExperimentConfig(
        problem=opts["problem"],
        params=_problem_params(opts["problem"], opts),
        levels=int(opts["levels"]),
        initial_n=opts.get("initial_n"),
        refinement=opts.get("refine") or "uniform",
        kappa=float(opts["kappa"]) if opts.get("kappa") is not None else DEFAULT_KAPPA,
        solver=solver,
        quad_degree=opts.get("quad"),
        out=Path(opts["out"]) if opts.get("out") else None,
    )


def _add_problem_args(p):
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--c", type=float, help="jump for the intersecting problem")
    p.add_argument("--k", type=float, help="jump for the singular and cube problems")
    p.add_argument("--eps", type=float, help="oscillation period")
    p.add_argument("--p", type=float, help="oscillation amplitude P (default 1.8)")
    p.add_argument("--initial-n", type=int, dest="initial_n")
    p.add_argument("--refine", choices=("uniform", "graded"))
    p.add_argument("--kappa", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress per level")
    parser = argparse.ArgumentParser(prog="spls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run a refinement sweep")
    run.add_argument("--config", type=Path, help="YAML file with the same keys as the flags")
    _add_problem_args(run)
    run.add_argument("--levels", type=int)
    run.add_argument("--algorithm", choices=sorted(_ALGORITHMS))
    run.add_argument("--trial", choices=sorted(_TRIALS))
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iter", type=int, dest="max_iter")
    run.add_argument("--quad", type=int, help="error quadrature degree (4..6)")
    run.add_argument("--out", type=Path)

    est = sub.add_parser("estimate", parents=[common], help="dense estimates of m_h and c_h")
    _add_problem_args(est)
    est.add_argument("--level", type=int, required=True)

    val = sub.add_parser("validate-mesh", parents=[common], help="check a mesh file")
    val.add_argument("file", type=Path)
    val.add_argument("--domain", choices=meshmod.DOMAIN_NAMES,
                     help="check boundary and subdomain tags against this domain")
    return parser


def _cmd_run(args) -> int:
    with _stage("config"):
        opts = _load_config(args.config) if args.config else {}
        flags = {k: getattr(args, k) for k in _RUN_KEYS if getattr(args, k, None) is not None}
        opts.update(flags)
        cfg = config_from_options(opts)
        if cfg.out is None:
            raise ValueError("--out is required")
    reports: list = []
    rows = run_experiment(cfg, reports)
    with _stage("output"):
        title = f"{cfg.problem} " + " ".join(f"{k}={v:g}" for k, v in cfg.params.items())
        paths = emit_outputs(rows, cfg.out, title, scientific=cfg.problem == "oscillatory",
                             histories=[r.residual_history for r in reports])
    sys.stdout.write(paths["markdown"].read_text())
    return 0


def _cmd_estimate(args) -> int:
    with _stage("config"):
        if not args.problem:
            raise ValueError("--problem is required")
        cfg = ExperimentConfig(args.problem, _problem_params(args.problem, vars(args)),
                               levels=args.level, initial_n=args.initial_n,
                               refinement=args.refine or "uniform",
                               kappa=args.kappa if args.kappa is not None else DEFAULT_KAPPA)
        spec = make_problem(cfg.problem, **cfg.params)
    *_, (level, m) = level_meshes(spec, cfg)
    with _stage("assemble"):
        sys_ = assemble_system(m, spec)
    with _stage("estimate"):
        m_h = estimate_infsup(sys_, "projection")
        m_h0 = estimate_infsup(sys_, "no-projection")
        c_h = estimate_coercivity(sys_)
    print(f"level {level}: {sys_.V.ndofs} test dofs")
    print(f"m_h   = {m_h:.10f}  (projection trial space)")
    print(f"m_h,0 = {m_h0:.10f}  (no-projection trial space, sqrt(a_min) = "
          f"{np.sqrt(spec.coefficient.a_min):.10f})")
    print(f"c_h   = {c_h:.10f}")
    return 0


def _cmd_validate(args) -> int:
    with _stage("mesh"):
        domain = meshmod.domain_by_name(args.domain) if args.domain else None
        m = meshmod.read_mesh(args.file, domain)
    with _stage("validate"):
        rep = meshmod.validate(m)
    if rep.ok:
        print(f"{args.file}: ok ({m.n_vertices} vertices, {m.n_cells} cells)")
        return 0
    for line in rep.lines():
        print(f"{args.file}: {line}")
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    handler = {"run": _cmd_run, "estimate": _cmd_estimate, "validate-mesh": _cmd_validate}
    try:
        return handler[args.command](args)
    except StageError as exc:
        print(f"spls: error {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
