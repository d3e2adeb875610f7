"""Command line entry point: ``fibershrink {verify,sweep,gauss-bonnet}``.

Exit codes: 0 pass, 1 verification failure, 2 usage error. Reports are
always written, also on failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, fibration
from .catalog import EXAMPLES, make_example
from .curvature import proof_suite, theorem_suite
from .errors import FiberShrinkError
from .reports import ResidualReport
from .submersion import projector_identity_suite
from .variation import variation_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    example: str
    seed: int
    tol: float
    eps: float | None = None
    eps_grid: list[float] = field(default_factory=list)
    n_points: int = 100
    n_probes: int = 10
    order: int = 12
    periodic_order: int = 4
    output: str | None = None
    fmt: str = "json"
    skip: list[str] = field(default_factory=list)


def parse_eps_grid(text: str) -> list[float]:
    """``start:end:geometric:count`` with both ends included, or a comma list."""
    if "," in text or ":" not in text:
        try:
            return [float(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise UsageError(f"bad eps list {text!r}") from exc
    parts = text.split(":")
    if len(parts) != 4 or parts[2] != "geometric":
        raise UsageError("eps grid must look like start:end:geometric:count")
    try:
        start, end, count = float(parts[0]), float(parts[1]), int(parts[3])
        return [float(e) for e in fibration.geometric_eps_grid(start, end, count)]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fibershrink", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, tol):
        sp.add_argument("--example", required=True, help=f"one of: {', '.join(EXAMPLES)}")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=tol)
        sp.add_argument("--output", "-o", default=None, help="report path (default: stdout)")
        sp.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")

    v = sub.add_parser("verify", help="run every identity suite at one eps")
    common(v, 1e-8)
    v.add_argument("--eps", type=float, default=0.5)
    v.add_argument("--points", type=int, default=100)
    v.add_argument("--skip", action="append", default=[], metavar="IDENTITY",
                   help="identity name to leave out of the pass/fail decision (still reported)")

    s = sub.add_parser("sweep", help="block norms and pushforward errors along an eps grid")
    common(s, 1e-10)
    s.add_argument("--eps-grid", default="0.5:0.99:geometric:8")
    s.add_argument("--points", type=int, default=20)
    s.add_argument("--probes", type=int, default=10)
    s.add_argument("--order", type=int, default=12)
    s.add_argument("--periodic-order", type=int, default=4)

    g = sub.add_parser("gauss-bonnet", help="integrate the Euler form over the whole chart")
    common(g, 1e-6)
    g.add_argument("--eps", type=float, default=None)
    g.add_argument("--order", type=int, default=32)
    g.add_argument("--periodic-order", type=int, default=8)
    return p


def config_from_args(args) -> RunConfig:
    if args.example not in EXAMPLES:
        raise UsageError(f"unknown example {args.example!r}; choose from {', '.join(EXAMPLES)}")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    cfg = RunConfig(args.command, args.example, args.seed, args.tol, output=args.output, fmt=args.fmt)
    if args.command == "verify":
        cfg.eps, cfg.n_points, cfg.skip = args.eps, args.points, list(args.skip)
        if cfg.eps >= 1:
            raise UsageError("verify needs eps < 1")
    elif args.command == "sweep":
        cfg.eps_grid = parse_eps_grid(args.eps_grid)
        cfg.n_points, cfg.n_probes = args.points, args.probes
        cfg.order, cfg.periodic_order = args.order, args.periodic_order
    else:
        cfg.eps, cfg.order, cfg.periodic_order = args.eps, args.order, args.periodic_order
    if cfg.n_points < 1:
        raise UsageError("--points must be positive")
    return cfg


# -- commands ---------------------------------------------------------------------


def cmd_verify(cfg: RunConfig) -> tuple[bool, dict]:
    spec = make_example(cfg.example)
    rng = np.random.default_rng(cfg.seed)
    points = spec.sample_points(rng, cfg.n_points)
    combined = ResidualReport(spec.name, cfg.seed)
    combined.extend(projector_identity_suite(spec, points, cfg.tol, cfg.seed), "projector.")
    combined.extend(variation_suite(spec, points, cfg.eps, cfg.tol, cfg.seed), "variation.")
    combined.extend(theorem_suite(spec, points, cfg.eps, cfg.tol, cfg.seed), "curvature.")
    if cfg.eps != 0.0:
        combined.extend(theorem_suite(spec, points, 0.0, cfg.tol, cfg.seed), "curvature_eps0.")
    combined.extend(proof_suite(spec, points, cfg.eps, cfg.tol, cfg.seed), "proof.")
    skip = set(cfg.skip)
    unknown = skip - set(combined.names)
    if unknown:
        raise UsageError(f"unknown identity names in --skip: {sorted(unknown)}")
    passed = all(e.passed for e in combined.entries if e.identity_name not in skip)
    result = combined.to_dict()
    result["pass"] = passed
    result["excluded"] = sorted(skip)
    return passed, result


def sweep_checks(res: fibration.SweepResult) -> dict[str, bool | None]:
    """Slope assertions: mixed blocks >= 0.9, diagonal corrections >= 1.8, pushforward >= 1 and decreasing."""
    checks: dict[str, bool | None] = {}
    for name, bound in (("offdiag_norm", 0.9), ("diag_corr_norm", 1.8), ("pushforward_err", 1.0)):
        fit = res.fits.get(name)
        if fit is None:
            checks[name] = None
        elif fit.flat:
            checks[name] = all(v is not None and abs(v) < fibration.FLAT_TOL for v in getattr(res, name))
        else:
            ok = fit.slope is not None and fit.slope >= bound
            if name == "pushforward_err":
                ok = ok and res.monotone_decreasing(name)
            checks[name] = bool(ok)
    return checks


def cmd_sweep(cfg: RunConfig) -> tuple[bool, dict, fibration.SweepResult]:
    spec = make_example(cfg.example)
    res = fibration.epsilon_sweep(
        spec, cfg.eps_grid, n_points=cfg.n_points, n_probes=cfg.n_probes,
        order=cfg.order, periodic_order=cfg.periodic_order, seed=cfg.seed,
    )
    checks = sweep_checks(res)
    passed = all(v is not False for v in checks.values())
    out = res.to_dict()
    out["checks"] = checks
    out["pass"] = passed
    return passed, out, res


def cmd_gauss_bonnet(cfg: RunConfig) -> tuple[bool, dict]:
    spec = make_example(cfg.example)
    if spec.n % 2:
        raise UsageError(f"{spec.name} is odd dimensional")
    if not spec.riemannian:
        raise UsageError(f"{spec.name} is not Riemannian; Euler forms are unsupported")
    if spec.euler_characteristic is None:
        raise UsageError(f"{spec.name} has no compact chart box to integrate over")
    if cfg.eps is not None and cfg.eps >= 1:
        raise UsageError("--eps must be below 1")
    value = fibration.euler_integral(spec, cfg.eps, cfg.order, cfg.periodic_order)
    chi = spec.euler_characteristic
    passed = abs(value - chi) < cfg.tol
    print(f"integral of Euler form over {spec.name} (eps={cfg.eps}): {value:.12f}; declared Euler characteristic {chi}", file=sys.stderr)
    return passed, {"integral": value, "euler_characteristic": chi, "error": abs(value - chi), "pass": passed}


def _write(cfg: RunConfig, text: str) -> None:
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def render_report(cfg: RunConfig, results: dict, timestamp: str | None = None) -> str:
    timestamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()
    config = {k: v for k, v in asdict(cfg).items() if k != "output"}
    doc = {
        "schema": SCHEMA_VERSION,
        "header": {"timestamp": timestamp, "version": __version__},
        "config": config,
        "results": results,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    cfg = None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if cfg.command == "verify":
            passed, results = cmd_verify(cfg)
            sweep = None
        elif cfg.command == "sweep":
            passed, results, sweep = cmd_sweep(cfg)
        else:
            passed, results = cmd_gauss_bonnet(cfg)
            sweep = None
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FiberShrinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if cfg is None:
            return EXIT_USAGE
        results = {"error": str(exc), "pass": False}
        _write(cfg, render_report(cfg, results))
        return EXIT_FAIL
    if cfg.fmt == "csv" and sweep is not None:
        _write(cfg, sweep.to_csv())
    else:
        _write(cfg, render_report(cfg, results))
    if not passed:
        print(f"{cfg.command} {cfg.example}: FAIL", file=sys.stderr)
    return EXIT_PASS if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
