"""Command-line front end.

    coupledvi [--config FILE] [--seed N] [--out DIR] [--tol X] [--trace] TASK [options]

Tasks: solve, probe, contact, oracle, orlicz.  Options may also come from the
``[run]`` section of the config file (same names, dashes or underscores);
command-line values win.  Exit status: 0 certified success, 2 counterexample
or non-convergence (reports are still written), 1 input error.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import logging
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__, kvtext, orlicz
from . import probes as pr
from . import solvers as so
from .fem import contact as fc
from .fem.mesh import MeshError, load_mesh, unit_square_mesh
from .problem_io import ProblemFileError, load_problem
from .system import FeasibilityError

log = logging.getLogger("coupledvi")

TASKS = ("solve", "probe", "contact", "oracle", "orlicz")
EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2

# every option with its default; the manifest echoes the resolved values
DEFAULTS = {
    "seed": 0,
    "out": "out",
    "tol": 1e-8,
    "trace": False,
    "problem": None,
    "solver": "extragrad",
    "max_iters": 100000,
    "r0": 1.0,
    "growth": 2.0,
    "max_rounds": 20,
    "resolution": 201,
    "box": None,
    "hypothesis": "C1",
    "samples": 200,
    "mesh": "unit_square:4",
    "phi": "power:2",
    "f2": "1.0",
    "g": "0.0",
    "h": "zero",
    "compare": None,
    "mode": "dominates",
    "sobolev_n": None,
}
_TYPES = {"seed": int, "tol": float, "max_iters": int, "r0": float, "growth": float, "max_rounds": int,
          "resolution": int, "samples": int, "sobolev_n": int}


class InputError(ValueError):
    pass


def _bool(text):
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def resolve_config(cli_values: dict, config_path=None) -> dict:
    """Merge defaults, the config file's [run] section and command-line values."""
    cfg = dict(DEFAULTS)
    cfg["task"] = None
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            cp.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise InputError(str(exc)) from None
        if cp.has_section("run"):
            for key, raw in cp.items("run"):
                key = key.replace("-", "_")
                if key not in cfg:
                    raise InputError(f"{path}: [run] unknown key {key!r}")
                cfg[key] = raw
    for key, val in cli_values.items():
        if val is not None:
            cfg[key] = val
    for key, typ in _TYPES.items():
        if cfg[key] is not None:
            try:
                cfg[key] = typ(cfg[key])
            except ValueError:
                raise InputError(f"option {key} = {cfg[key]!r} is not a valid {typ.__name__}") from None
    try:
        cfg["trace"] = _bool(cfg["trace"])
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if not cfg["task"]:
        raise InputError("missing task")
    cfg["task"] = {"orlicz-report": "orlicz", "orlicz_report": "orlicz"}.get(cfg["task"], cfg["task"])
    if cfg["task"] not in TASKS:
        raise InputError(f"unknown task {cfg['task']!r}; expected one of {', '.join(TASKS)}")
    return cfg


def parse_phi(text: str) -> orlicz.NFunctionSpec:
    kind, _, arg = text.partition(":")
    kind = kind.strip()
    try:
        if kind == "power":
            return orlicz.power(float(arg))
        if kind == "hencky":
            return orlicz.hencky(float(arg))
        if kind == "tabulated":
            return orlicz.load_tabulated(arg.strip())
    except (ValueError, OSError) as exc:
        raise InputError(f"phi {text!r}: {exc}") from None
    raise InputError(f"phi {text!r}: expected power:p, hencky:gamma or tabulated:path")


def parse_h(text: str) -> fc.HIntegrand:
    kind, _, arg = text.partition(":")
    try:
        return fc.HIntegrand(kind.strip(), float(arg) if arg else 1.0)
    except ValueError as exc:
        raise InputError(f"h {text!r}: {exc}") from None


def _mesh(text: str):
    if text.startswith("unit_square"):
        _, _, n = text.partition(":")
        try:
            return unit_square_mesh(int(n or 4))
        except ValueError as exc:
            raise InputError(f"mesh {text!r}: {exc}") from None
    return load_mesh(text)


def _boundary_values(text: str):
    """A constant, or a CSV file with one value per boundary node."""
    try:
        return float(text)
    except ValueError:
        pass
    path = Path(text)
    if not path.is_file():
        raise InputError(f"boundary data {text!r} is neither a number nor a file")
    return np.loadtxt(path, delimiter=",", ndmin=1)


def write_manifest(out: Path, cfg: dict, status: int, started: str) -> None:
    pairs = [("coupledvi_version", __version__), ("started", started), ("exit_status", status)]
    pairs += [(f"config.{k}", "none" if v is None else v) for k, v in sorted(cfg.items())]
    (out / "manifest.txt").write_text(kvtext.dumps(pairs))


# -- tasks -------------------------------------------------------------------

def _need_problem(cfg):
    if not cfg["problem"]:
        raise InputError(f"task {cfg['task']} needs --problem")
    return load_problem(cfg["problem"])


def _write_witness(out: Path, report) -> None:
    kvtext.write_csv(out / "witness.csv", ["inequality", "vector"],
                     [["1", report.witness1], ["2", report.witness2]])


def task_solve(cfg, out: Path) -> int:
    sys = _need_problem(cfg)
    solver, tol, seed = cfg["solver"], cfg["tol"], cfg["seed"]
    try:
        if solver == "brute":
            box = None
            if cfg["box"]:
                lo, hi = (float(x) for x in str(cfg["box"]).split(","))
                box = ((lo, hi), (lo, hi))
            outcome = so.brute_force(sys, resolution=cfg["resolution"], box=box, tol=tol)
        elif solver == "extragrad":
            outcome = so.extragradient(sys, max_iters=cfg["max_iters"], cert_tol=tol, seed=seed,
                                       trace=cfg["trace"])
        elif solver == "uzawa":
            if "a" not in sys.meta:
                raise InputError("uzawa needs a saddle-point problem (linear chi, bilinear B, K = whole space)")
            outcome = so.uzawa_sp(sys.meta["a"], sys.meta["b"], sys.f, sys.Lambda, max_iters=cfg["max_iters"],
                                  cert_tol=tol, seed=seed, trace=cfg["trace"])
        elif solver == "ball":
            outcome = so.ball_expansion(sys, R0=cfg["r0"], growth=cfg["growth"], max_rounds=cfg["max_rounds"],
                                        tol=tol, seed=seed, inner_options={"max_iters": cfg["max_iters"]})
        else:
            raise InputError(f"unknown solver {solver!r}; expected brute, extragrad, uzawa or ball")
    except so.NonCoerciveError as exc:
        lines = [("status", "non_coercive_suspect"), ("message", str(exc))]
        (out / "outcome.txt").write_text(kvtext.dumps(lines) + exc.probe.to_kv())
        if exc.outcome is not None:
            emit_plots(exc.outcome, out)
        return EXIT_FAIL
    except so.DivergenceError as exc:
        (out / "outcome.txt").write_text(kvtext.dumps([("status", "diverged"), ("message", str(exc))]))
        if exc.trace:
            _write_trace(out, exc.trace)
        return EXIT_FAIL
    except so.UnsupportedError as exc:
        raise InputError(str(exc)) from None
    (out / "outcome.txt").write_text(outcome.to_kv())
    _write_witness(out, outcome.report)
    emit_plots(outcome, out)
    return EXIT_OK if outcome.converged else EXIT_FAIL


def task_probe(cfg, out: Path) -> int:
    sys = _need_problem(cfg)
    status = EXIT_OK
    idents = [h.strip() for h in str(cfg["hypothesis"]).split(",") if h.strip()]
    for ident in idents:
        try:
            reports = pr.run_probe(sys, ident, samples=cfg["samples"], seed=cfg["seed"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
        for rep in reports:
            name = rep.hypothesis.replace(".", "_")
            (out / f"probe_{name}.txt").write_text(rep.to_kv())
            if rep.verdict == pr.COUNTEREXAMPLE:
                status = EXIT_FAIL
                kvtext.write_csv(out / f"witness_{name}.csv", ["name", "vector"],
                                 [[k, v] for k, v in rep.witness.items()])
    return status


def _fem(cfg) -> fc.FemProblem:
    try:
        return fc.FemProblem(_mesh(cfg["mesh"]), parse_phi(cfg["phi"]), parse_h(cfg["h"]),
                             _boundary_values(cfg["f2"]), _boundary_values(cfg["g"]))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _write_field(out: Path, mesh, values, name="field.csv") -> None:
    rows = [[i, x, y, u] for i, ((x, y), u) in enumerate(zip(mesh.nodes, values))]
    kvtext.write_csv(out / name, ["node", "x", "y", "u"], rows)


def task_contact(cfg, out: Path) -> int:
    fem = _fem(cfg)
    try:
        sol = fc.solve_contact(fem, R0=cfg["r0"], growth=cfg["growth"], max_rounds=cfg["max_rounds"],
                               tol=cfg["tol"], seed=cfg["seed"], inner_options={"max_iters": cfg["max_iters"]})
    except so.NonCoerciveError as exc:
        (out / "outcome.txt").write_text(kvtext.dumps([("status", "non_coercive_suspect"), ("message", str(exc))]))
        return EXIT_FAIL
    y = sol.ynodes
    comp = fc.complementarity_report(sol.u.values[y], sol.lam, sol.weights)
    (out / "outcome.txt").write_text(sol.outcome.to_kv() + kvtext.dumps(
        [("complementarity_gap", comp.gap), ("multipliers_feasible", comp.feasible)]))
    _write_field(out, fem.mesh, sol.u.values)
    kvtext.write_csv(out / "multipliers.csv", ["node", "lambda", "w", "g"],
                     [[int(i), l, w, fem.g_nodal[i]] for i, l, w in zip(y, sol.lam, sol.weights)])
    emit_plots(sol.outcome, out)
    return EXIT_OK if sol.outcome.converged else EXIT_FAIL


def task_oracle(cfg, out: Path) -> int:
    fem = _fem(cfg)
    field, history = fc.energy_oracle(fem, iters=cfg["max_iters"], return_history=True)
    _write_field(out, fem.mesh, field.values)
    kvtext.write_csv(out / "energy.csv", ["iteration", "J"], [[k, j] for k, j in enumerate(history)])
    monotone = bool(np.all(np.diff(history) <= 0))
    (out / "outcome.txt").write_text(kvtext.dumps(
        [("iterations", len(history) - 1), ("energy", history[-1]), ("energy_nonincreasing", monotone)]))
    return EXIT_OK if monotone else EXIT_FAIL


def task_orlicz(cfg, out: Path) -> int:
    spec = parse_phi(cfg["phi"])
    lo, hi = orlicz.index_bounds(spec)
    pairs = [("phi", spec.label()), ("index_lower", lo), ("index_upper", hi),
             ("delta2_constant", orlicz.delta2_constant(spec))]
    text = kvtext.dumps(pairs) + orlicz.conjugate_index_report(spec).to_kv()
    status = EXIT_OK
    if cfg["compare"]:
        rep = orlicz.growth_compare(spec, parse_phi(cfg["compare"]), cfg["mode"])
        text += rep.to_kv()
    if cfg["sobolev_n"]:
        sob = orlicz.sobolev_conjugate(spec, cfg["sobolev_n"])
        text += sob.to_kv()
        if sob.conjugate is not None:
            orlicz.save_tabulated(sob.conjugate, out / "sobolev_conjugate.csv")
    (out / "report.txt").write_text(text)
    return status


def _write_trace(out: Path, rows) -> None:
    width = len(rows[0])
    header = ["iteration", "step", "rho", "natural_residual"][:width]
    kvtext.write_csv(out / "trace.csv", header, rows)


def emit_plots(outcome: so.SolveOutcome, out) -> list[Path]:
    """Plot-ready CSV series for an outcome: iterate trace, radius history."""
    out = Path(out)
    written = []
    if outcome.solver == "ball" and outcome.trace:
        kvtext.write_csv(out / "radius.csv", ["radius", "size", "interiority_margin", "interior", "max_violation"],
                         [list(r) for r in outcome.trace])
        written.append(out / "radius.csv")
    elif outcome.trace:
        _write_trace(out, outcome.trace)
        written.append(out / "trace.csv")
        if len(outcome.trace[0]) >= 4:
            kvtext.write_csv(out / "residual.csv", ["iteration", "residual"],
                             [[r[0], r[3]] for r in outcome.trace])
            written.append(out / "residual.csv")
    return written


_HANDLERS = {"solve": task_solve, "probe": task_probe, "contact": task_contact,
             "oracle": task_oracle, "orlicz": task_orlicz}


def run(cfg: dict) -> int:
    """Execute a resolved config; always writes the manifest."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        status = _HANDLERS[cfg["task"]](cfg, out)
    except (InputError, ProblemFileError, MeshError, FeasibilityError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        status = EXIT_INPUT
    write_manifest(out, cfg, status, started)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coupledvi", description="Coupled variational inequality toolkit.")
    p.add_argument("--config", help="INI file with a [run] section")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--tol", type=float)
    p.add_argument("--trace", action="store_true", default=None)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="task")

    s = sub.add_parser("solve", help="solve a coupled system from a problem file")
    s.add_argument("--problem")
    s.add_argument("--solver", choices=["brute", "extragrad", "uzawa", "ball"])
    s.add_argument("--max-iters", dest="max_iters", type=int)
    s.add_argument("--r0", type=float)
    s.add_argument("--growth", type=float)
    s.add_argument("--max-rounds", dest="max_rounds", type=int)
    s.add_argument("--resolution", type=int)
    s.add_argument("--box", help="lo,hi confining unbounded sets for brute force")

    q = sub.add_parser("probe", help="probe hypotheses (H_chi2_i, H_B1, C1, ...)")
    q.add_argument("--problem")
    q.add_argument("--hypothesis", help="comma-separated identifiers")
    q.add_argument("--samples", type=int)

    for name, text in (("contact", "solve the discrete contact problem"),
                       ("oracle", "minimize the contact energy directly")):
        c = sub.add_parser(name, help=text)
        c.add_argument("--mesh", help="mesh file or unit_square:N")
        c.add_argument("--phi", help="power:p, hencky:gamma or tabulated:path")
        c.add_argument("--f2", help="traction on part 2 (constant or CSV)")
        c.add_argument("--g", help="friction bound on part 3 (constant or CSV)")
        c.add_argument("--h", help="zero, quadratic:c or abs:c")
        c.add_argument("--max-iters", dest="max_iters", type=int)
        if name == "contact":
            c.add_argument("--r0", type=float)
            c.add_argument("--growth", type=float)
            c.add_argument("--max-rounds", dest="max_rounds", type=int)

    o = sub.add_parser("orlicz", help="report on an N-function")
    o.add_argument("--phi")
    o.add_argument("--compare", help="second N-function for growth comparison")
    o.add_argument("--mode", choices=["dominates", "essentially_faster"])
    o.add_argument("--sobolev-n", dest="sobolev_n", type=int)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    values = {k: v for k, v in vars(args).items() if k != "config"}
    try:
        cfg = resolve_config(values, args.config)
    except InputError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
