"""Command-line entry points: ``nsbl simulate | verify | verify-inequalities | gronwall``.

Exit codes: 0 success, 1 suite failure, 2 usage or configuration error,
3 numerical breakdown (artifacts are still written).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BREAKDOWN = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


def package_versions() -> dict:
    out = {"nsbl": __version__, "python": platform.python_version()}
    for name in ("numpy", "scipy", "pyFFTW"):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    from ._workers import fft_backend
    out["fft_backend"] = fft_backend().__name__
    return out


@dataclass
class RunManifest:
    command: str
    config: dict | None = None
    seed: int | None = None
    versions: dict = field(default_factory=package_versions)
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)
    exit_status: int | None = None

    def finish(self, status: int):
        self.finished = _now()
        self.exit_status = status

    def write(self, path: str):
        from .diagnostics import _atomic_text
        if os.path.dirname(path):
            os.makedirs(os.path.dirname(path), exist_ok=True)
        _atomic_text(path, json.dumps(asdict(self), indent=2, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, float):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _clean(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


# ---------------------------------------------------------------- simulate

def load_run_config(path: str):
    """A config file, or a manifest whose ``config`` snapshot is replayed."""
    from .solver import ConfigError, SimConfig
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: malformed JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from None
    if isinstance(data, dict) and "command" in data and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    return SimConfig.from_dict(data)


def cmd_simulate(args) -> int:
    from dataclasses import replace

    from .diagnostics import summary
    from .solver import ConfigError, simulate

    try:
        cfg = load_run_config(args.config)
        out_dir = args.out_dir or cfg.out_dir or "nsbl-run"
        cfg = replace(cfg, out_dir=out_dir)
        os.makedirs(out_dir, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ConfigError(f"config.out_dir: {out_dir} is not writable")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = RunManifest("simulate", cfg.to_dict(), cfg.seed)

    def progress(n, t):
        if args.verbose and (n % max(1, cfg.steps // 20) == 0):
            print(f"step {n}/{cfg.steps} t={t:.6g}", file=sys.stderr)

    traj = simulate(cfg, progress=progress, write=False)
    from .diagnostics import write_outputs
    manifest.outputs = [os.path.basename(p) for p in write_outputs(traj, out_dir)]
    status = EXIT_BREAKDOWN if traj.breakdown else EXIT_OK
    print(json.dumps(_clean(summary(traj)), indent=2))
    if traj.breakdown:
        print(f"numerical breakdown at t={traj.breakdown['t']:.6g}: {traj.breakdown['reason']}",
              file=sys.stderr)
    manifest.finish(status)
    manifest.outputs.append("manifest.json")
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return status


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    from .suites import SUITES
    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_USAGE
    kwargs = {}
    if args.size is not None:
        if args.suite != "inequalities":
            print("error: --size applies to the inequalities suite only", file=sys.stderr)
            return EXIT_USAGE
        kwargs["size"] = args.size
    if args.seed is not None and args.suite in ("inequalities", "gronwall", "appendix"):
        kwargs["seed"] = args.seed
    manifest = RunManifest(f"verify {args.suite}", {"suite": args.suite, **kwargs}, args.seed)
    try:
        rep = SUITES[args.suite](**kwargs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(rep.table())
    print(f"suite {args.suite}: {'PASS' if rep.passed else 'FAIL'}")
    report = args.report or f"verify-{args.suite}.json"
    from .diagnostics import _atomic_text
    if os.path.dirname(report):
        os.makedirs(os.path.dirname(report), exist_ok=True)
    _atomic_text(report, json.dumps(rep.to_dict(), indent=2) + "\n")
    status = EXIT_OK if rep.passed else EXIT_FAIL
    manifest.outputs = [report]
    manifest.finish(status)
    manifest.write(_manifest_path(args.manifest, report))
    return status


def _manifest_path(explicit: str | None, report: str) -> str:
    if explicit:
        return explicit
    stem, _ = os.path.splitext(report)
    return stem + ".manifest.json"


def cmd_verify_inequalities(args) -> int:
    from .suites import inequality_rows
    try:
        rows = inequality_rows(args.size, args.seed, args.n, vector=args.vector)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["id", "q", "r", "n", "lhs", "rhs", "ratio", "pass"])
    failed = False
    for i, q, r, n, lhs, rhs, ratio, ok in rows:
        w.writerow([i, _cell(q), _cell(r), "" if n is None else n, repr(lhs), repr(rhs), repr(ratio),
                    "measured" if ok is None else ("true" if ok else "false")])
        failed |= ok is False
    status = EXIT_FAIL if failed else EXIT_OK
    if args.manifest:
        m = RunManifest("verify-inequalities", {"size": args.size, "n": args.n, "vector": args.vector},
                        args.seed)
        m.finish(status)
        m.write(args.manifest)
    return status


def _cell(x):
    if x is None:
        return ""
    return "inf" if x == math.inf else repr(float(x))


# ---------------------------------------------------------------- gronwall

ENGINES = {
    # name: (required flags, optional flags)
    "singular": ({"A", "B", "kappa", "T"}, set()),
    "generalized": ({"A", "term", "T"}, set()),
    "ode-envelope": ({"w0", "K", "alpha"}, {"t0"}),
    "integral-threshold": ({"w0", "B", "alpha", "kappa"}, {"t0", "lam"}),
}


def select_engine(given: set) -> str:
    """The unique engine whose required flags are all given and which accepts every given flag."""
    if not given:
        raise UsageError("no flags given; expected one of: "
                         + "; ".join(f"{k}: {' '.join(sorted(v[0]))}" for k, v in ENGINES.items()))
    fits = [k for k, (req, opt) in ENGINES.items() if req <= given and given <= req | opt]
    if len(fits) == 1:
        return fits[0]
    if len(fits) > 1:
        raise UsageError(f"ambiguous flag set {sorted(given)}: matches {fits}")
    near = [k for k, (req, opt) in ENGINES.items() if given <= req | opt]
    if near:
        missing = {k: sorted(ENGINES[k][0] - given) for k in near}
        raise UsageError(f"incomplete flag set {sorted(given)}; missing {missing}")
    raise UsageError(f"flag set {sorted(given)} does not select any engine")


def _parse_term(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--term expects B,a,b")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--term {text!r}: not numbers") from None


def cmd_gronwall(args) -> int:
    from . import gronwall as gw
    flags = ("A", "B", "kappa", "T", "w0", "K", "alpha", "t0", "lam", "term")
    given = {f for f in flags if getattr(args, f) is not None}
    try:
        engine = select_engine(given)
        if engine == "singular":
            res = gw.singular_gronwall_bound(args.A, args.B, args.kappa, args.T)
        elif engine == "generalized":
            res = gw.generalized_gronwall_bound(args.A, args.term, args.T)
        elif engine == "ode-envelope":
            res = gw.ode_blowup_envelope(args.w0, args.K, args.alpha, args.t0 or 0.0)
        else:
            res = gw.integral_blowup_threshold(args.w0, args.B, args.alpha, args.kappa,
                                               args.t0 or 0.0, args.lam)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: domain: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(res.to_dict(), indent=2))
    if args.manifest:
        m = RunManifest("gronwall", {k: getattr(args, k) for k in sorted(given)})
        m.finish(EXIT_OK)
        m.write(args.manifest)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsbl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nsbl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation from a JSON config (or a manifest)")
    s.add_argument("config")
    s.add_argument("--out-dir", help="overrides the config's out_dir")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a named property suite")
    v.add_argument("suite", help="exact | gronwall | inequalities | appendix")
    v.add_argument("--report", help="JSON report path (default verify-<suite>.json)")
    v.add_argument("--manifest", help="manifest path (default next to the report)")
    v.add_argument("--size", type=int, help="ensemble size (inequalities suite)")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify)

    q = sub.add_parser("verify-inequalities", help="CSV of inequality checks on random fields")
    q.add_argument("--size", type=int, default=10)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--n", type=int, default=32, help="grid points per axis")
    q.add_argument("--vector", action="store_true", help="use 3-component fields")
    q.add_argument("--manifest")
    q.set_defaults(func=cmd_verify_inequalities)

    g = sub.add_parser("gronwall", help="evaluate a Gronwall-type bound; prints JSON")
    for name in ("A", "B", "kappa", "T", "w0", "K", "alpha", "t0"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--term", type=_parse_term, action="append",
                   help="kernel term B,a,b for s^-a (t-s)^-b (repeatable)")
    g.add_argument("--manifest")
    g.set_defaults(func=cmd_gronwall)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
