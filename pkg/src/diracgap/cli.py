"""Command line front end: config ingestion, dispatch, result persistence.

One run is described by one config file (INI-style sections of key = value
pairs, schema below); command line flags only override file values, so the
file stays the canonical record of a run.  Every output file starts with a
comment header carrying the config hash, window and tolerances, and contains
no wall-clock data, so re-running an identical config reproduces the files
byte for byte.

Exit codes: 0 success, 1 usage or config error, 2 mathematical rejection or
non-convergence.

Config schema (sections and keys, defaults in brackets):

    [problem]
    kind        pure-coulomb | tabulated            (required)
    gamma       leading coefficient, pure-coulomb   (required for pure-coulomb)
    table       CSV path, tabulated                 (required for tabulated)
    gamma0 alpha0 gamma_inf alpha_inf               (required for tabulated)
    k           nonzero integer                     (required)
    mu_a        anomalous moment                    [0.0]

    [numerics]
    rtol [1e-10]  atol [1e-12]  delta [1e-4 * gap width]  eps [1e-3]
    lambda_min lambda_max lambda_points   scan grid       [-0.9, 0.999, 50]
    x_zero x_inf                          window overrides (optional)
    tol [1e-9]                            eigenvalue residual tolerance

    [output]
    dir         output directory          [.]  (env DIRACGAP_OUT overrides,
                                               flag --out overrides both)

    [spectrum]
    k           explicit level indices, space separated   (optional)

    [eigenfunction]
    k           level index               (required by the command)
    samples     [512]

    [accumulation]
    endpoint    upper | lower             [upper]
    schedule    space separated X values  [1e2 1e3 1e4 1e5]

    [branch]
    seed_k      level index of the seed   (required by the command)
    ds          amplitude step            [0.05]
    max_steps   [25]
    a_max       [10.0]

    [coupling]
    kind        soler                     (required by branch)
    f           linear                    [linear], F(s) = f_scale * s
    f_scale     [1.0]
    gamma_scale gamma_power               gamma(r) = scale * r^2 / (1 + r^power)
                                          [1.0, 5.0]
    constant    angular constant          [4*pi]
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import bifurcation, model, spectrum
from .asymptotics import TruncationWindow, select_truncation, zero_data
from .model import (CouplingRejectedError, MissingDerivativeError,
                    build_dirac_family, build_soler_coupling,
                    classify_zero_endpoint, validate_hypotheses)
from .prufer import IntegrationError
from .spectrum import (AngleMismatchError, BracketError, ConvergenceError,
                       MonotonicityError)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REJECTED = 2


class ConfigError(ValueError):
    """Config schema violations, each with a file line reference."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# Config file parsing
# ---------------------------------------------------------------------------

def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_config_text(text: str) -> dict:
    """Parse section/key-value text into {section: {key: (value, line)}}."""
    sections: dict = {}
    current = None
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                errors.append(f"line {lineno}: empty section name")
                current = None
            else:
                sections.setdefault(current, {})
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside any [section]")
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if not key or not val:
            errors.append(f"line {lineno}: empty key or value")
            continue
        parts = val.split()
        parsed = [_parse_scalar(p) for p in parts]
        sections[current][key] = (parsed[0] if len(parsed) == 1 else parsed, lineno)
    if errors:
        raise ConfigError(errors)
    return sections


@dataclass
class RunConfig:
    """Fully validated run description (problem, numerics, tasks, output)."""

    params: model.DiracRadialParams
    rtol: float
    atol: float
    delta: Optional[float]
    eps: float
    lam_grid: np.ndarray
    tol: float
    x_zero_override: Optional[float]
    x_inf_override: Optional[float]
    out_dir: Path
    task: dict = field(default_factory=dict)
    config_hash: str = ""
    coupling_spec: Optional[dict] = None


_KNOWN_SECTIONS = {"problem", "numerics", "output", "spectrum",
                   "eigenfunction", "accumulation", "branch", "coupling"}


def load_config(path, out_override: Optional[str] = None) -> RunConfig:
    """Read, parse and validate a config file; collects all schema errors."""
    raw = Path(path).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()[:16]
    sections = parse_config_text(raw.decode("utf-8"))
    errors = []

    for name in sections:
        if name not in _KNOWN_SECTIONS:
            errors.append(f"unknown section [{name}]")

    def get(section, key, default=None, required=False, kind=None):
        entry = sections.get(section, {}).get(key)
        if entry is None:
            if required:
                errors.append(f"[{section}] {key}: missing required key")
            return default
        value, lineno = entry
        if kind is not None:
            try:
                if kind is float:
                    value = float(value)
                elif kind is int:
                    if isinstance(value, float) and not value.is_integer():
                        raise ValueError
                    value = int(value)
                elif kind is list:
                    value = [float(v) for v in (value if isinstance(value, list) else [value])]
                elif kind is str and not isinstance(value, str):
                    raise ValueError
            except (TypeError, ValueError):
                errors.append(f"line {lineno}: [{section}] {key}: expected {kind.__name__}")
                return default
        return value

    kind = get("problem", "kind", required=True, kind=str)
    k = get("problem", "k", required=True, kind=int)
    mu_a = get("problem", "mu_a", 0.0, kind=float)
    pot = None
    if kind == "pure-coulomb":
        gamma = get("problem", "gamma", required=True, kind=float)
        if gamma is not None:
            pot = model.coulomb_potential(gamma)
    elif kind == "tabulated":
        table = get("problem", "table", required=True, kind=str)
        g0 = get("problem", "gamma0", required=True, kind=float)
        a0 = get("problem", "alpha0", required=True, kind=float)
        gi = get("problem", "gamma_inf", required=True, kind=float)
        ai = get("problem", "alpha_inf", required=True, kind=float)
        if not errors:
            try:
                pot = model.tabulated_potential_from_csv(table, g0, a0, gi, ai)
            except (OSError, ValueError) as exc:
                errors.append(f"[problem] table: {exc}")
    elif kind is not None:
        errors.append(f"[problem] kind: unknown kind {kind!r} "
                      "(config supports pure-coulomb and tabulated)")

    if k == 0:
        errors.append("[problem] k: must be nonzero")

    rtol = get("numerics", "rtol", 1e-10, kind=float)
    atol = get("numerics", "atol", 1e-12, kind=float)
    delta = get("numerics", "delta", None, kind=float)
    eps = get("numerics", "eps", 1e-3, kind=float)
    tol = get("numerics", "tol", 1e-9, kind=float)
    lam_min = get("numerics", "lambda_min", -0.9, kind=float)
    lam_max = get("numerics", "lambda_max", 0.999, kind=float)
    lam_pts = get("numerics", "lambda_points", 50, kind=int)
    xz = get("numerics", "x_zero", None, kind=float)
    xi = get("numerics", "x_inf", None, kind=float)
    if lam_min >= lam_max:
        errors.append("[numerics] lambda_min must be below lambda_max")
    if not (-1.0 < lam_min and lam_max < 1.0):
        errors.append("[numerics] scan grid must lie inside the gap (-1, 1)")
    if lam_pts < 2:
        errors.append("[numerics] lambda_points must be at least 2")

    task = {
        "spectrum_k": get("spectrum", "k", None),
        "eigenfunction_k": get("eigenfunction", "k", None, kind=int),
        "samples": get("eigenfunction", "samples", 512, kind=int),
        "endpoint": get("accumulation", "endpoint", "upper", kind=str),
        "schedule": get("accumulation", "schedule", [1e2, 1e3, 1e4, 1e5], kind=list),
        "seed_k": get("branch", "seed_k", None, kind=int),
        "ds": get("branch", "ds", 0.05, kind=float),
        "max_steps": get("branch", "max_steps", 25, kind=int),
        "a_max": get("branch", "a_max", 10.0, kind=float),
    }
    if task["endpoint"] not in ("upper", "lower"):
        errors.append("[accumulation] endpoint must be 'upper' or 'lower'")

    coupling_spec = None
    if "coupling" in sections:
        ckind = get("coupling", "kind", required=True, kind=str)
        if ckind != "soler":
            errors.append(f"[coupling] kind: unsupported kind {ckind!r}")
        fname = get("coupling", "f", "linear", kind=str)
        if fname != "linear":
            errors.append(f"[coupling] f: unsupported nonlinearity {fname!r}")
        coupling_spec = {
            "f_scale": get("coupling", "f_scale", 1.0, kind=float),
            "gamma_scale": get("coupling", "gamma_scale", 1.0, kind=float),
            "gamma_power": get("coupling", "gamma_power", 5.0, kind=float),
            "constant": get("coupling", "constant", 4.0 * math.pi, kind=float),
        }

    out_dir = get("output", "dir", ".", kind=str)
    out_dir = os.environ.get("DIRACGAP_OUT", out_dir)
    if out_override:
        out_dir = out_override

    if errors:
        raise ConfigError(errors)

    params = model.DiracRadialParams(k=k, mu_a=mu_a, potential=pot)
    return RunConfig(params=params, rtol=rtol, atol=atol, delta=delta, eps=eps,
                     lam_grid=np.linspace(lam_min, lam_max, lam_pts), tol=tol,
                     x_zero_override=xz, x_inf_override=xi,
                     out_dir=Path(out_dir), task=task, config_hash=digest,
                     coupling_spec=coupling_spec)


def _build_coupling(cfg: RunConfig):
    if cfg.coupling_spec is None:
        raise ConfigError(["[coupling] section required for the branch command"])
    cs = cfg.coupling_spec
    scale, power = cs["gamma_scale"], cs["gamma_power"]
    f_scale = cs["f_scale"]
    return build_soler_coupling(
        gamma=lambda r: scale * r * r / (1.0 + r ** power),
        f=lambda s: f_scale * s,
        lipschitz_bound=abs(f_scale),
        angular_constant=cs["constant"],
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def _write_csv(path: Path, cfg: RunConfig, command: str, columns, rows,
               extra_header=()):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# diracgap {command}\n")
        fh.write(f"# config_hash={cfg.config_hash}\n")
        for line in extra_header:
            fh.write(f"# {line}\n")
        fh.write(f"# rtol={_fmt(cfg.rtol)} atol={_fmt(cfg.atol)} "
                 f"eps={_fmt(cfg.eps)} tol={_fmt(cfg.tol)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _window_line(window: TruncationWindow) -> str:
    return (f"window x_zero={_fmt(window.x_zero)} x_inf={_fmt(window.x_inf)} "
            f"delta={_fmt(window.delta)} eps={_fmt(window.eps)}")


def _make_window(cfg: RunConfig, family, zero) -> TruncationWindow:
    lam_range = (float(cfg.lam_grid[0]), float(cfg.lam_grid[-1]))
    if cfg.x_zero_override and cfg.x_inf_override:
        delta = cfg.delta if cfg.delta is not None \
            else 1e-4 * (family.mu_plus - family.mu_minus)
        return TruncationWindow(x_zero=cfg.x_zero_override,
                                x_inf=cfg.x_inf_override,
                                delta=delta, eps=cfg.eps)
    win = select_truncation(family, lam_range, cfg.delta, cfg.eps, zero=zero)
    if cfg.x_zero_override or cfg.x_inf_override:
        win = TruncationWindow(x_zero=cfg.x_zero_override or win.x_zero,
                               x_inf=cfg.x_inf_override or win.x_inf,
                               delta=win.delta, eps=win.eps)
    return win


def _say(quiet: bool, *args):
    if not quiet:
        print(*args)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_check(cfg: RunConfig, quiet: bool = False) -> int:
    """Hypothesis gate: admissibility checks, coupling checks if configured."""
    family = build_dirac_family(cfg.params)
    report = validate_hypotheses(family)
    cls = classify_zero_endpoint(family)
    rows = [(c.name, c.passed, c.measured, c.threshold, c.detail.replace(",", ";"))
            for c in report.checks]
    coupling_ok = True
    if cfg.coupling_spec is not None:
        try:
            _build_coupling(cfg)
            rows.append(("coupling-envelope", True, 0.0, 0.0, "accepted"))
        except CouplingRejectedError as exc:
            coupling_ok = False
            rows.append(("coupling-envelope", False, math.nan, math.nan,
                         str(exc).replace(",", ";")))
    _write_csv(cfg.out_dir / "check_report.csv", cfg, "check",
               ("check", "passed", "measured", "threshold", "detail"), rows,
               extra_header=(f"admissible={cls.admissible}",))
    for name, passed, measured, _, _ in rows:
        _say(quiet, f"{'PASS' if passed else 'FAIL'}  {name}  measured={measured:.6g}")
    _say(quiet, cls.note)
    ok = report.passed and cls.admissible and coupling_ok
    _say(quiet, "hypotheses " + ("accepted" if ok else "rejected"))
    return EXIT_OK if ok else EXIT_REJECTED


def cmd_spectrum(cfg: RunConfig, quiet: bool = False) -> int:
    """Scan the gap, solve every bracketed level, persist the records."""
    family = build_dirac_family(cfg.params)
    if not classify_zero_endpoint(family).admissible:
        _say(quiet, "family rejected: origin endpoint not admissible")
        return EXIT_REJECTED
    zero = zero_data(family)
    window = _make_window(cfg, family, zero)
    scan = spectrum.scan_spectrum(family, cfg.lam_grid, window, zero,
                                  rtol=cfg.rtol, atol=cfg.atol)
    wanted = cfg.task.get("spectrum_k")
    if wanted is not None:
        wanted = {int(v) for v in (wanted if isinstance(wanted, list) else [wanted])}
    records = []
    for br in scan.brackets:
        if wanted is not None and br.k not in wanted:
            continue
        rec = spectrum.find_eigenvalue(family, br.k, (br.lam_lo, br.lam_hi),
                                       cfg.tol, window=window, zero=zero,
                                       rtol=cfg.rtol, atol=cfg.atol)
        records.append(rec)
    rows = [(r.k, r.lam, r.rot, r.nodal_index, r.residual,
             r.decay.exponent_inf, r.decay.exponent_zero) for r in records]
    _write_csv(cfg.out_dir / "spectrum.csv", cfg, "spectrum",
               ("k", "lambda", "rot", "nodal_index", "residual",
                "decay_inf", "decay_zero"),
               rows, extra_header=(_window_line(window),))
    for r in records:
        _say(quiet, f"k={r.k}  lambda={r.lam:.10f}  rot={r.rot:.6f}  "
                    f"nodal={r.nodal_index}  residual={r.residual:.2e}")
    _say(quiet, f"{len(records)} eigenvalue(s) in "
                f"[{cfg.lam_grid[0]:g}, {cfg.lam_grid[-1]:g}]")
    return EXIT_OK


def cmd_eigenfunction(cfg: RunConfig, quiet: bool = False) -> int:
    """Reconstruct, normalize and persist one eigenfunction."""
    want = cfg.task.get("eigenfunction_k")
    if want is None:
        raise ConfigError(["[eigenfunction] k: required for this command"])
    family = build_dirac_family(cfg.params)
    if not classify_zero_endpoint(family).admissible:
        _say(quiet, "family rejected: origin endpoint not admissible")
        return EXIT_REJECTED
    zero = zero_data(family)
    window = _make_window(cfg, family, zero)
    scan = spectrum.scan_spectrum(family, cfg.lam_grid, window, zero,
                                  rtol=cfg.rtol, atol=cfg.atol)
    match = [b for b in scan.brackets if b.k == want]
    if not match:
        _say(quiet, f"no level k={want} bracketed on the scan grid")
        return EXIT_REJECTED
    rec = spectrum.find_eigenvalue(family, want, (match[0].lam_lo, match[0].lam_hi),
                                   cfg.tol, window=window, zero=zero,
                                   rtol=cfg.rtol, atol=cfg.atol)
    ef = spectrum.eigenfunction(family, rec, cfg.task["samples"], zero=zero,
                                rtol=cfg.rtol, atol=cfg.atol)
    rows = list(zip(ef.x, ef.u, ef.v))
    _write_csv(cfg.out_dir / "eigenfunction.csv", cfg, "eigenfunction",
               ("x", "u", "v"), rows,
               extra_header=(_window_line(window),
                             f"k={rec.k} lambda={_fmt(rec.lam)} rot={_fmt(rec.rot)}",
                             f"decay_inf={_fmt(ef.decay.exponent_inf)} "
                             f"decay_zero={_fmt(ef.decay.exponent_zero)}",
                             f"norm_check={_fmt(ef.norm_check)}"))
    _say(quiet, f"k={rec.k}  lambda={rec.lam:.10f}")
    _say(quiet, f"decay exponent at infinity {ef.decay.exponent_inf:.6f} "
                f"(expected {ef.decay.expected_inf:.6f})")
    _say(quiet, f"decay exponent at origin   {ef.decay.exponent_zero:.6f} "
                f"(expected {ef.decay.expected_zero:.6f})")
    return EXIT_OK


def cmd_accumulation(cfg: RunConfig, quiet: bool = False) -> int:
    """Probe eigenvalue accumulation at a gap edge, persist (X, theta)."""
    family = build_dirac_family(cfg.params)
    if not classify_zero_endpoint(family).admissible:
        _say(quiet, "family rejected: origin endpoint not admissible")
        return EXIT_REJECTED
    verdict = spectrum.detect_accumulation(
        family, cfg.task["endpoint"], cfg.task["schedule"],
        rtol=cfg.rtol, atol=cfg.atol, x_zero=cfg.x_zero_override)
    rows = [(x, th) for x, th in verdict.samples]
    _write_csv(cfg.out_dir / "accumulation.csv", cfg, "accumulation",
               ("X", "theta"), rows,
               extra_header=(f"endpoint={verdict.endpoint}",
                             f"verdict={verdict.verdict}",
                             f"monotonicity_ok={verdict.monotonicity_ok}",
                             f"x_zero={_fmt(verdict.x_zero)}"))
    _say(quiet, f"endpoint {verdict.endpoint}: {verdict.verdict} ({verdict.detail})")
    return EXIT_OK


def cmd_branch(cfg: RunConfig, quiet: bool = False) -> int:
    """Continue the nonlinear branch from a seed eigenvalue, persist points."""
    seed_k = cfg.task.get("seed_k")
    if seed_k is None:
        raise ConfigError(["[branch] seed_k: required for this command"])
    coupling = _build_coupling(cfg)
    family = build_dirac_family(cfg.params)
    if not classify_zero_endpoint(family).admissible:
        _say(quiet, "family rejected: origin endpoint not admissible")
        return EXIT_REJECTED
    zero = zero_data(family)
    window = _make_window(cfg, family, zero)
    scan = spectrum.scan_spectrum(family, cfg.lam_grid, window, zero,
                                  rtol=cfg.rtol, atol=cfg.atol)
    match = [b for b in scan.brackets if b.k == seed_k]
    if not match:
        _say(quiet, f"no level k={seed_k} bracketed on the scan grid")
        return EXIT_REJECTED
    seed = spectrum.find_eigenvalue(family, seed_k, (match[0].lam_lo, match[0].lam_hi),
                                    cfg.tol, window=window, zero=zero,
                                    rtol=cfg.rtol, atol=cfg.atol)
    branch = bifurcation.continue_branch(
        family, coupling, seed, cfg.task["ds"], cfg.task["max_steps"],
        a_max=cfg.task["a_max"], window=window, zero=zero,
        rtol=cfg.rtol, atol=cfg.atol)
    rows = [(i, p.lam, p.a, p.l2_norm, p.rotation, p.index, p.residual)
            for i, p in enumerate(branch.points)]
    _write_csv(cfg.out_dir / "branch.csv", cfg, "branch",
               ("step", "lambda", "amplitude", "l2norm", "j", "i", "residual"),
               rows, extra_header=(_window_line(window),
                                   f"seed_k={seed.k} seed_lambda={_fmt(seed.lam)}",
                                   f"termination={branch.termination}",
                                   f"index_audit_ok={branch.index_audit_ok}"))
    if branch.points:
        last = branch.points[-1]
        _write_csv(cfg.out_dir / "branch_solution.csv", cfg, "branch",
                   ("x", "u", "v"), list(zip(last.x, last.u, last.v)),
                   extra_header=(f"lambda={_fmt(last.lam)} amplitude={_fmt(last.a)}",))
    _say(quiet, f"{len(branch.points)} branch point(s), "
                f"termination: {branch.termination}, "
                f"index audit {'ok' if branch.index_audit_ok else 'FAILED'}")
    if not branch.points:
        return EXIT_REJECTED
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "check": cmd_check,
    "spectrum": cmd_spectrum,
    "eigenfunction": cmd_eigenfunction,
    "accumulation": cmd_accumulation,
    "branch": cmd_branch,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="diracgap",
        description="Gap eigenvalues, rotation indices and bifurcation "
                    "branches for singular radial Dirac systems.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, metavar="PATH",
                        help="run description file (see module docstring)")
    parser.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (overrides config and env)")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress the human-readable summary")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.out)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return _COMMANDS[args.command](cfg, args.quiet)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MissingDerivativeError, CouplingRejectedError, BracketError,
            ConvergenceError, MonotonicityError, AngleMismatchError,
            IntegrationError, bifurcation.CorrectorError, ValueError) as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())
