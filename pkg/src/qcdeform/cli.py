"""Command-line experiment runner.

Exit codes: 0 when every checked contract holds, 2 on a contract violation,
3 on a precondition or usage error, 4 when an iteration fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import config
from .errors import (ContractViolation, DomainError, NonConvergenceError, PreconditionError, QCDeformError,
                     SolverInconsistencyError)
from .extremals import (bergman_perturb, hsz_bound, parseval_comparison, random_zero_free_polynomial, rows_to_csv,
                        sample_nonvanishing, series_kappa, sweep_margins, verify_bound)
from .series import PowerSeries

EXIT_OK, EXIT_CONTRACT, EXIT_PRECONDITION, EXIT_NONCONVERGENCE = 0, 2, 3, 4
MARGIN_TOL = 1e-9
COMMANDS = ("kappa", "sweep", "deform", "bergman-demo", "parseval")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class ExperimentConfig:
    command: str
    p: list = field(default_factory=lambda: [2.0])
    n: list = field(default_factory=lambda: [1])
    seed: int = 0
    eps: float = 0.0
    degree: int = config.DEFAULT_DEGREE
    R: float | None = None
    tol: float = config.NEWTON_TOL
    count: int = 100
    out: str | None = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise DomainError(f"unknown command {self.command!r}")
        if self.format not in ("json", "csv"):
            raise DomainError("format must be json or csv")
        if self.degree < 1 or self.degree > 1 << 14:
            raise DomainError("degree must lie in 1..16384")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.count < 1:
            raise DomainError("count must be >= 1")
        if self.eps < 0:
            raise DomainError("eps must be >= 0")
        if self.R is not None and not self.R > 0:
            raise DomainError("R must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p"] = [_p_repr(p) for p in self.p]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data["p"] = [_parse_p(str(p)) for p in data["p"]]
        return cls(**data)


def _parse_p(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if math.isnan(value):
        raise argparse.ArgumentTypeError("p must not be NaN")
    return value


def _p_repr(p: float):
    return "inf" if p == math.inf else p


def _emit(payload, cfg: ExperimentConfig, csv_text: str | None = None):
    if cfg.format == "csv" and csv_text is not None:
        text = csv_text
    else:
        payload = {"spec_version": config.SPEC_VERSION, "config": cfg.to_dict(), **payload}
        text = json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _clean(obj):
    """JSON-safe copy: complex -> [re, im], numpy scalars -> python, +-inf -> strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _table_csv(rows: list[dict], cols: list[str]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={config.CSV_SCHEMA_VERSION}\n")
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _p_repr(row.get(c)) if c == "p" else row.get(c) for c in cols})
    return buf.getvalue()


# ----------------------------------------------------------------------
# commands


def cmd_kappa(cfg: ExperimentConfig) -> int:
    n, p = int(cfg.n[0]), float(cfg.p[0])
    hsz_bound(p)
    k = series_kappa(n, p, cfg.degree)
    # the truncated extremal exceeds unit norm by the truncation error only
    report = verify_bound(k, n, p, norm_tol=1e-3)
    rows = [{"k": i, "re": c.real, "im": c.imag, "abs": abs(c)} for i, c in enumerate(k.coeffs)]
    payload = {"command": "kappa", "n": n, "p": _p_repr(p), "bound": report.bound,
               "c_n_abs": report.functional_value, "margin": report.margin, "coefficients": rows}
    _emit(payload, cfg, _table_csv(rows, ["k", "re", "im", "abs"]))
    return EXIT_OK if report.margin >= -MARGIN_TOL else EXIT_CONTRACT


def cmd_sweep(cfg: ExperimentConfig) -> int:
    rows = sweep_margins(cfg.p, [int(n) for n in cfg.n], cfg.count, cfg.seed, degree=min(cfg.degree, 24))
    min_margin = float(min(r["margin"] for r in rows))
    text = rows_to_csv(rows) + f"# summary min_margin={min_margin!r}\n"
    _emit({"command": "sweep", "rows": rows, "min_margin": min_margin}, cfg, text)
    return EXIT_OK if min_margin >= -MARGIN_TOL else EXIT_CONTRACT


def cmd_deform(cfg: ExperimentConfig) -> int:
    from .deform import DeformationProblem, newton_deform, replay, verify_deformation

    p, n = float(cfg.p[0]), int(cfg.n[0])
    f = sample_nonvanishing(cfg.seed, p, cfg.extra.get("style", "exp_of_series"), cfg.degree)
    d = np.zeros(n + 1, dtype=complex)
    d[n] = cfg.eps * complex(math.cos(cfg.extra.get("phase", math.pi / 2)),
                             math.sin(cfg.extra.get("phase", math.pi / 2)))
    problem = DeformationProblem(f, p, n, d, a=cfg.extra.get("a", 0.0), R=cfg.R,
                                 eps_budget=cfg.extra.get("budget", 1e-2))
    result = newton_deform(problem, tol=cfg.tol)
    corrupt = cfg.extra.get("corrupt_tau")
    if corrupt is not None:
        result = replay(problem, result.xi, result.tau * corrupt)
    payload = {"command": "deform", "problem": problem.to_dict(), "result": result.to_dict()}
    try:
        payload["contracts"] = verify_deformation(result, problem)
        code = EXIT_OK
    except ContractViolation as exc:
        payload["contracts"] = {"violated": exc.failing, "message": str(exc)}
        code = EXIT_CONTRACT
    _emit(payload, cfg)
    return code


def cmd_bergman_demo(cfg: ExperimentConfig) -> int:
    if cfg.extra.get("random"):
        poly = random_zero_free_polynomial(cfg.seed, 8)
    else:
        poly = PowerSeries([1.0])
    out = bergman_perturb(poly, cfg.eps)
    payload = {
        "command": "bergman-demo",
        "p_N": poly.to_dict(),
        "P": out["P"].to_dict(),
        "norm_before": out["norm_before"],
        "norm_after": out["norm_after"],
        "norm_before_sq": out["norm_before"] ** 2,
        "norm_after_sq": out["norm_after"] ** 2,
        "zero_free": out["zero_free"],
    }
    ok = out["zero_free"] and (cfg.eps == 0 or out["norm_after"] < out["norm_before"])
    if cfg.extra.get("linkage"):
        from .deform import a2_linkage

        payload["linkage"] = link = a2_linkage()
        ok = ok and link["increased"] and link["area_preserved"]
    _emit(payload, cfg, _table_csv([payload], ["norm_before_sq", "norm_after_sq", "zero_free"]))
    return EXIT_OK if ok else EXIT_CONTRACT


def cmd_parseval(cfg: ExperimentConfig) -> int:
    rows = [parseval_comparison(p, cfg.degree) for p in cfg.p]
    ok = all(r["inequality_holds"] for r in rows if r["p"] >= 2)
    for r in rows:
        r["p"] = _p_repr(r["p"])
    cols = ["p", "degree", "c1_sq", "tail_sq", "inequality_holds", "norm_h2", "norm_hp", "h2_exceeds_hp"]
    _emit({"command": "parseval", "rows": rows}, cfg, _table_csv(rows, cols))
    return EXIT_OK if ok else EXIT_CONTRACT


HANDLERS = {"kappa": cmd_kappa, "sweep": cmd_sweep, "deform": cmd_deform, "bergman-demo": cmd_bergman_demo,
            "parseval": cmd_parseval}


def default_parseval_grid() -> list:
    return [2.0 + 0.25 * i for i in range(57)] + [math.inf, 1.2, 1.5]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcdeform", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, degree=config.DEFAULT_DEGREE, fmt="json"):
        sp.add_argument("--degree", type=int, default=degree)
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default=fmt)

    sp = sub.add_parser("kappa", help="coefficients of the extremal kappa_{n,p} and its bound margin")
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--p", type=_parse_p, default=2.0)
    common(sp)

    sp = sub.add_parser("sweep", help="bound margins over seeded zero-free samples")
    sp.add_argument("--p", type=_parse_p, nargs="*", default=[2.0, 2.5, 4.0])
    sp.add_argument("--n", type=int, nargs="*", default=[2, 3, 5])
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    common(sp, degree=24, fmt="csv")

    sp = sub.add_parser("deform", help="coefficient deformation with the area norm held fixed")
    sp.add_argument("--p", type=_parse_p, default=2.0)
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--eps", type=float, default=1e-3, help="modulus of the target shift d_n")
    sp.add_argument("--phase", type=float, default=math.pi / 2, help="argument of d_n")
    sp.add_argument("--a", type=float, default=0.0, help="target change of the area p-norm")
    sp.add_argument("--budget", type=float, default=1e-2)
    sp.add_argument("--R", type=float, default=None)
    sp.add_argument("--tol", type=float, default=config.NEWTON_TOL)
    sp.add_argument("--corrupt-tau", type=float, default=None, help="replay with tau scaled by this factor")
    common(sp)

    sp = sub.add_parser("bergman-demo", help="Rouche perturbation lowering the A_2 norm")
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--random", action="store_true", help="use a seeded zero-free polynomial instead of 1")
    sp.add_argument("--linkage", action="store_true", help="also run the A_2 deformation witness")
    common(sp)

    sp = sub.add_parser("parseval", help="|c_1|^2 against the coefficient tail of kappa_{1,p}")
    sp.add_argument("--p", type=_parse_p, nargs="*", default=None)
    common(sp, degree=128)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cmd = args.command
    raw_p = getattr(args, "p", 2.0)
    p = raw_p if isinstance(raw_p, list) else [raw_p]
    if cmd == "parseval" and raw_p is None:
        p = default_parseval_grid()
    n = args.n if isinstance(getattr(args, "n", None), list) else [getattr(args, "n", 1)]
    extra = {}
    if cmd == "deform":
        extra = {"phase": args.phase, "a": args.a, "budget": args.budget, "corrupt_tau": args.corrupt_tau}
    if cmd == "bergman-demo":
        extra = {"random": args.random, "linkage": args.linkage}
    if not p:
        raise DomainError("empty p list")
    if not n:
        raise DomainError("empty n list")
    return ExperimentConfig(cmd, p, n, seed=getattr(args, "seed", 0), eps=getattr(args, "eps", 0.0),
                            degree=args.degree, R=getattr(args, "R", None), tol=getattr(args, "tol", config.NEWTON_TOL),
                            count=getattr(args, "count", 100), out=args.out, format=args.format, extra=extra)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config_from_args(args)
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"qcdeform: error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ContractViolation, SolverInconsistencyError) as exc:
        print(f"qcdeform: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except NonConvergenceError as exc:
        print(f"qcdeform: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (PreconditionError, DomainError, QCDeformError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"qcdeform: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
