"""Command-line front end.

Subcommands::

    genfrac op-eval   --op k|a|b --kernel NAME --alpha A --f EXPR [--p P --q Q]
    genfrac verify    --suite identities --n 512
    genfrac solve     PROBLEM.json --n 256
    genfrac reproduce example1 --alpha 0.5 --xi 1 --n 256
    genfrac reproduce example2 --kernel exponential --alpha 0.5 --xi 2 --n 512
    genfrac converge  --target kop-rl --alpha 0.5

Results go to ``--out PREFIX`` (``PREFIX.csv`` or ``PREFIX.json``) or to
stdout.  Exit codes: 0 success, 2 invalid input, 3 numerical failure,
4 identity check failed or hypothesis violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from genfrac import identities, specfun, variational, volterra
from genfrac.errors import (
    ConfigurationError,
    GenFracError,
    HypothesisViolationError,
    NumericalError,
    SchemaError,
    ValidationError,
)
from genfrac.expr import Expression
from genfrac.kernels import BUILTIN_KERNELS, cosine, exponential, kernel_from_config, riemann_liouville
from genfrac.operators import GridFunction, OperatorConfig, ParamSet, a_op, b_op, k_op

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IDENTITY = 4

COMMANDS = ("op-eval", "verify", "solve", "reproduce", "converge")
N_MIN, N_MAX = 16, 8192


@dataclass(frozen=True)
class RunConfig:
    command: str
    problem_file: Path | None = None
    grid_n: int = 256
    tolerances: dict[str, float] = field(default_factory=dict)
    output: Path | None = None
    format: str = "csv"

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise SchemaError(f"unknown command {self.command!r}; valid: {list(COMMANDS)}")
        if not N_MIN <= self.grid_n <= N_MAX:
            raise ValidationError(f"--n must lie in [{N_MIN}, {N_MAX}], got {self.grid_n}")
        if self.format not in ("csv", "json"):
            raise ValidationError(f"--format must be csv or json, got {self.format!r}")
        if self.output is not None:
            parent = self.output.parent if str(self.output.parent) else Path(".")
            if not parent.is_dir() or not os.access(parent, os.W_OK):
                raise ConfigurationError(f"output directory {str(parent)!r} is not writable")


def worker_count() -> int:
    raw = os.environ.get("GENFRAC_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"GENFRAC_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigurationError(f"GENFRAC_THREADS must be a positive integer, got {raw!r}")
    return value


# ---------------------------------------------------------------------------
# output


def _fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def render_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def render_json(doc: Any) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


@dataclass
class Output:
    header: list[str]
    rows: list[list[Any]]
    meta: dict[str, Any] = field(default_factory=dict)
    status: int = EXIT_OK

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return render_csv(self.header, self.rows)
        return render_json({**self.meta, "columns": self.header,
                            "rows": [dict(zip(self.header, r)) for r in self.rows]})


def _emit(out: Output, cfg: RunConfig, stdout) -> None:
    text = out.render(cfg.format)
    if cfg.output is None:
        stdout.write(text)
        return
    target = Path(f"{cfg.output}.{cfg.format}")
    target.write_text(text, newline="")


# ---------------------------------------------------------------------------
# commands


def _kernel(args: argparse.Namespace, default: str = "riemann_liouville") -> Any:
    name = args.kernel or default
    if name not in BUILTIN_KERNELS:
        raise SchemaError(f"unknown kernel {name!r}; valid names: {sorted(BUILTIN_KERNELS)}")
    return kernel_from_config({"name": name, "alpha": args.alpha})


def cmd_op_eval(args: argparse.Namespace, cfg: RunConfig) -> Output:
    doc: dict[str, Any] = {}
    if cfg.problem_file is not None:
        doc = _load_json(cfg.problem_file)
    op = doc.get("op", args.op)
    kernel = kernel_from_config(doc["kernel"]) if "kernel" in doc else _kernel(args)
    p = float(doc.get("p", args.p))
    q = float(doc.get("q", args.q))
    a, b = (float(x) for x in doc.get("domain", (args.a, args.b)))
    f_src = doc.get("f", args.f)
    f = Expression(f_src, ("t",))
    grid = GridFunction.from_function(lambda t: f(t=t), a, b, cfg.grid_n)
    P = ParamSet(a, b, p, q)
    opcfg = OperatorConfig.for_kernel(kernel)
    if op == "k":
        res = k_op(P, kernel, grid, opcfg)
    elif op == "a":
        res = a_op(P, kernel, grid, opcfg)
    elif op == "b":
        res = b_op(P, kernel, grid, None, opcfg)
    else:
        raise SchemaError(f"unknown operator {op!r}; valid: ['a', 'b', 'k']")
    rows = [[t, v, bool(m)] for t, v, m in zip(res.t, res.values, res.mask)]
    meta = {"op": op, "kernel": kernel.name, "alpha": kernel.order, "P": [a, b, p, q], "n": cfg.grid_n, "f": f_src}
    return Output(["t", "value", "mask"], rows, meta)


def _pset_label(P: ParamSet | None) -> str:
    if P is None:
        return ""
    return f"<{P.a:g},{P.b:g},{P.p:g},{P.q:g}>"


def cmd_verify(args: argparse.Namespace, cfg: RunConfig) -> Output:
    if args.suite != "identities":
        raise SchemaError(f"unknown suite {args.suite!r}; valid: ['identities']")
    cases = identities.default_cases()
    workers = max(1, min(worker_count(), len(cases)))
    n = cfg.grid_n
    if workers == 1:
        reports = [case.run_calibrated(n) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda c: c.run_calibrated(n), cases))
    rows = []
    failed = 0
    for case, rep in zip(cases, reports):
        lhs, rhs = rep.summary()
        rows.append([rep.name, rep.kernel, _pset_label(rep.pset), rep.grid_n, lhs, rhs,
                     rep.residual, rep.tol, rep.holds, case.expected])
        failed += rep.holds != case.expected
    header = ["name", "kernel", "P", "n", "lhs", "rhs", "residual", "tol", "holds", "expected"]
    return Output(header, rows, {"suite": args.suite, "n": n, "failed": failed},
                  EXIT_IDENTITY if failed else EXIT_OK)


def _load_json(path: Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {str(path)!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{str(path)!r} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{str(path)!r} must contain a JSON object")
    return doc


def cmd_solve(args: argparse.Namespace, cfg: RunConfig) -> Output:
    if cfg.problem_file is None:
        raise ConfigurationError("solve needs a problem file")
    prob = variational.problem_from_dict(_load_json(cfg.problem_file))
    tol = cfg.tolerances.get("solver", 1e-7)
    res = variational.solve(prob, cfg.grid_n, tol, args.max_iter)
    meta = {
        "lambda": res.lam,
        "el_residual": res.el_residual,
        "a_posteriori_residual": res.a_posteriori_residual,
        "constraint_residual": res.constraint_residual,
        "objective": res.objective,
        "iterations": res.iterations,
        "converged": res.converged,
        "gradient_norm": res.gradient_norm,
        "message": res.message,
        "n": cfg.grid_n,
    }
    rows = [[t, y] for t, y in zip(res.y.t, res.y.values)]
    status = EXIT_OK if res.converged else EXIT_NUMERICAL
    if cfg.format == "csv" and cfg.output is not None:
        # the summary goes next to the samples
        Path(f"{cfg.output}.result.json").write_text(render_json(meta))
    return Output(["t", "y"], rows, meta, status)


REPRODUCE_HEADER = ["t", "y_numeric", "y_closed_form", "abs_error"]


def _reproduce_rows(t, num, exact) -> list[list[float]]:
    return [[ti, yn, ye, abs(yn - ye)] for ti, yn, ye in zip(t, num, exact)]


def reproduce_example1(alpha: float, xi: float, n: int, tol: float = 1e-7) -> tuple[Output, variational.SolveResult]:
    prob = variational.example1_problem(alpha, xi)
    res = variational.solve_isoperimetric(prob, n, tol)
    exact = volterra.example1_series(alpha, xi, res.y.t)
    rows = _reproduce_rows(res.y.t, res.y.values, exact)
    meta = {
        "example": "example1", "alpha": alpha, "xi": xi, "n": n,
        "lambda": res.lam, "lambda_expected": 2 * xi, "converged": res.converged,
        "max_abs_error": max(r[3] for r in rows),
    }
    return Output(REPRODUCE_HEADER, rows, meta, EXIT_OK if res.converged else EXIT_NUMERICAL), res


def reproduce_example2(kernel_name: str, alpha: float, xi: float, n: int, method: str = "first-kind") -> Output:
    if kernel_name not in ("exponential", "cosine", "constant_one"):
        raise SchemaError(f"example2 supports kernels exponential, cosine, constant_one; got {kernel_name!r}")
    kernel = kernel_from_config({"name": kernel_name, "alpha": alpha})
    rhs = GridFunction.from_function(lambda t: (xi - 1.0) * t, 0.0, 1.0, n)
    if method == "first-kind":
        y = volterra.volterra_first_kind(kernel, rhs)
    elif method == "resolvent":
        spec = volterra.ResolventSpec(kernel, 1.0, n)
        y = volterra.reconstruct(spec, volterra.resolvent(spec), xi)
    else:
        raise SchemaError(f"unknown method {method!r}; valid: ['first-kind', 'resolvent']")
    exact = volterra.example2_closed_form(kernel_name, alpha, xi, y.t)
    rows = _reproduce_rows(y.t, y.values, exact)
    meta = {"example": "example2", "kernel": kernel_name, "alpha": alpha, "xi": xi, "n": n, "method": method,
            "max_abs_error": max(r[3] for r in rows)}
    return Output(REPRODUCE_HEADER, rows, meta)


def cmd_reproduce(args: argparse.Namespace, cfg: RunConfig) -> Output:
    if args.example == "example1":
        out, _ = reproduce_example1(args.alpha, args.xi, cfg.grid_n, cfg.tolerances.get("solver", 1e-7))
        return out
    return reproduce_example2(args.kernel or "exponential", args.alpha, args.xi, cfg.grid_n, args.method)


# ---------------------------------------------------------------------------
# convergence studies


@dataclass(frozen=True)
class ConvergenceStudy:
    target: str
    ns: tuple[int, ...]
    errors: tuple[float, ...]

    @property
    def pairwise_orders(self) -> tuple[float, ...]:
        e, n = self.errors, self.ns
        return tuple(math.log(e[i] / e[i + 1]) / math.log(n[i + 1] / n[i]) for i in range(len(e) - 1))

    @property
    def fitted_order(self) -> float:
        """Least-squares slope of ``-log(error)`` against ``log(n)``."""
        slope = np.polyfit(np.log(self.ns), np.log(self.errors), 1)[0]
        return float(-slope)


def _kop_error(kernel, f, exact, n: int) -> float:
    P = ParamSet(0.0, 1.0, 1.0, 0.0)
    grid = GridFunction.from_function(f, 0.0, 1.0, n)
    res = k_op(P, kernel, grid, OperatorConfig.for_kernel(kernel))
    return float(np.max(np.abs(res.values - exact(grid.t))))


def _ml(alpha: float, beta: float, z: np.ndarray) -> np.ndarray:
    p = specfun.MLParams(alpha, beta)
    return np.array([specfun.mittag_leffler(p, float(x)) for x in z])


CONVERGE_TARGETS = ("kop-rl", "kop-exp", "kop-cos", "example1")


def convergence_study(target: str, alpha: float, ns: Sequence[int] = (128, 256, 512, 1024)) -> ConvergenceStudy:
    """Max-norm errors against closed forms on a sequence of grids."""
    ns = tuple(int(n) for n in ns)
    errors = []
    for n in ns:
        if target == "kop-rl":
            # I^alpha exp = t^alpha E_{1, 1+alpha}(t)
            err = _kop_error(riemann_liouville(alpha), np.exp,
                             lambda t: t**alpha * _ml(1.0, 1.0 + alpha, t), n)
        elif target == "kop-exp":
            err = _kop_error(exponential(alpha), np.sin,
                             lambda t: (np.exp(alpha * t) - alpha * np.sin(t) - np.cos(t)) / (1 + alpha**2), n)
        elif target == "kop-cos":
            err = _kop_error(cosine(alpha), np.sin,
                             lambda t: (np.cos(alpha * t) - np.cos(t)) / (1 - alpha**2), n)
        elif target == "example1":
            _, res = reproduce_example1(alpha, 1.0, n)
            err = float(np.max(np.abs(res.y.values - volterra.example1_series(alpha, 1.0, res.y.t))))
        else:
            raise SchemaError(f"unknown target {target!r}; valid: {list(CONVERGE_TARGETS)}")
        errors.append(err)
    if min(errors) <= 0.0:
        raise NumericalError(f"zero error for target {target!r}: the closed form is reproduced exactly")
    return ConvergenceStudy(target, ns, tuple(errors))


def cmd_converge(args: argparse.Namespace, cfg: RunConfig) -> Output:
    ns = tuple(int(x) for x in args.ns.split(","))
    for n in ns:
        RunConfig("converge", grid_n=n)  # range check
    study = convergence_study(args.target, args.alpha, ns)
    orders = (None,) + study.pairwise_orders
    rows = [[n, 1.0 / n, e, o] for n, e, o in zip(study.ns, study.errors, orders)]
    meta = {"target": args.target, "alpha": args.alpha, "fitted_order": study.fitted_order}
    return Output(["n", "h", "error", "order"], rows, meta)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genfrac", description="Generalized fractional calculus toolkit.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=256, help="number of grid cells")
    common.add_argument("--alpha", type=float, default=0.5)
    common.add_argument("--beta", type=float, default=0.5)
    common.add_argument("--xi", type=float, default=1.0)
    common.add_argument("--kernel", default=None, help=f"one of {sorted(BUILTIN_KERNELS)}")
    common.add_argument("--tol", type=float, default=None, help="solver tolerance")
    common.add_argument("--out", default=None, help="output path prefix (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True)

    op = sub.add_parser("op-eval", parents=[common], help="apply a K, A or B operator to f(t)")
    op.add_argument("--op", choices=("k", "a", "b"), default="k")
    op.add_argument("--f", default="1", help="expression in t")
    op.add_argument("--p", type=float, default=1.0)
    op.add_argument("--q", type=float, default=0.0)
    op.add_argument("--a", type=float, default=0.0)
    op.add_argument("--b", type=float, default=1.0)
    op.add_argument("--config", default=None, help="JSON file with op, kernel, p, q, domain, f")

    ver = sub.add_parser("verify", parents=[common], help="run the identity suite")
    ver.add_argument("--suite", default="identities")

    sol = sub.add_parser("solve", parents=[common], help="solve a variational problem from JSON")
    sol.add_argument("problem", help="problem JSON file")
    sol.add_argument("--max-iter", type=int, default=5000)

    rep = sub.add_parser("reproduce", parents=[common], help="reproduce a closed-form example")
    rep.add_argument("example", choices=("example1", "example2"))
    rep.add_argument("--method", choices=("first-kind", "resolvent"), default="first-kind")

    conv = sub.add_parser("converge", parents=[common], help="convergence study against a closed form")
    conv.add_argument("--target", choices=CONVERGE_TARGETS, default="kop-rl")
    conv.add_argument("--ns", default="128,256,512,1024", help="comma-separated grid sizes")
    return parser


HANDLERS = {
    "op-eval": cmd_op_eval,
    "verify": cmd_verify,
    "solve": cmd_solve,
    "reproduce": cmd_reproduce,
    "converge": cmd_converge,
}


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        problem = getattr(args, "problem", None) or getattr(args, "config", None)
        tolerances = {"solver": args.tol} if args.tol is not None else {}
        cfg = RunConfig(
            command=args.command,
            problem_file=Path(problem) if problem else None,
            grid_n=args.n,
            tolerances=tolerances,
            output=Path(args.out) if args.out else None,
            format=args.format,
        )
        out = HANDLERS[args.command](args, cfg)
        _emit(out, cfg, stdout)
        return out.status
    except ValidationError as exc:
        stderr.write(f"genfrac: invalid input: {exc}\n")
        return EXIT_VALIDATION
    except NumericalError as exc:
        stderr.write(f"genfrac: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except HypothesisViolationError as exc:
        stderr.write(f"genfrac: hypothesis violated: {exc}\n")
        return EXIT_IDENTITY
    except GenFracError as exc:  # pragma: no cover - every error has a family
        stderr.write(f"genfrac: {exc}\n")
        return EXIT_NUMERICAL


def main(argv: Sequence[str] | None = None) -> None:
    try:
        code = run(argv)
        sys.stdout.flush()
    except BrokenPipeError:
        # output piped into a reader that closed early (e.g. head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = EXIT_OK
    sys.exit(code)
