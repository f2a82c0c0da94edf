"""``blowup`` command line: ``profile``, ``ball``, ``evolve``, ``graph`` and ``verify``.

Settings come from flags, then the ``[subcommand]`` (and ``[common]``)
section of an INI file given by ``--config``, then defaults. Exit status is
0 on success, 1 when a verification check fails and 2 on configuration or
solver errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import BlowupError, ConfigError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SUBCOMMANDS = ("profile", "ball", "evolve", "graph", "verify")
_REQUIRED = object()


def _positive(kind):
    def convert(text):
        value = kind(text)
        if not value > 0:
            raise ValueError("must be positive")
        return value
    return convert


def _exponent(text):
    value = float(text)
    if not value > 1:
        raise ValueError("q must exceed 1")
    return value


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _choice(*options):
    def convert(text):
        text = str(text)
        if text not in options:
            raise ValueError(f"expected one of {options}")
        return text
    return convert


# key -> (converter, default, help)
COMMON = {
    "out": (str, ".", "output directory"),
    "tolerance_scale": (_positive(float), 1.0, "multiplier on every check tolerance"),
}
SCHEMAS = {
    "profile": {
        "N": (_positive(int), _REQUIRED, "space dimension"),
        "q": (_exponent, _REQUIRED, "absorption exponent"),
        "r_min": (_positive(float), 1e-3, "inner cutoff of the similarity variable"),
        "r_max": (_positive(float), 12.0, "outer cutoff"),
        "nodes": (_positive(int), 400, "log-grid nodes"),
    },
    "ball": {
        "N": (_positive(int), _REQUIRED, "space dimension"),
        "q": (_exponent, _REQUIRED, "absorption exponent"),
        "radius": (_positive(float), 1.0, "ball radius"),
        "nodes": (_positive(int), 800, "radial nodes"),
        "tolerance": (_positive(float), 1e-4, "ladder increment tolerance"),
    },
    "evolve": {
        "q": (_exponent, _REQUIRED, "absorption exponent"),
        "domain": (_choice("interval", "ball"), "interval", "interval (0, length) or radial ball"),
        "length": (_positive(float), 1.0, "interval length or ball radius"),
        "dim": (_positive(int), 1, "dimension of a radial ball"),
        "nodes": (_positive(int), 101, "spatial nodes (odd for graded intervals)"),
        "t_end": (_positive(float), 0.1, "final time"),
        "dt_max": (_positive(float), 0.002, "largest time step"),
        "initial": (str, "zero", "zero, bump or constant:C"),
        "boundary": (str, "zero", "zero, blowup, insulated or fixed:K"),
        "snapshots": (_floats, (), "snapshot times"),
    },
    "graph": {
        "q": (_exponent, 3.0, "absorption exponent"),
        "h": (_positive(float), 0.02, "grid spacing"),
        "t_end": (_positive(float), 0.1, "final time"),
        "tau": (_positive(float), 0.01, "time shift"),
        "eps": (_positive(float), 0.5, "epsilon of the strip condition"),
        "R_prime": (_positive(float), 0.5, "half-width of the strip"),
        "sigma_cells": (_floats, (8.0, 4.0, 2.0, 1.0), "shifts in cells"),
    },
    "verify": {
        "suite": (_choice("profile", "elliptic", "parabolic", "section3", "section4", "all"), "all",
                  "suite name"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    parameters: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI file with a section per subcommand")
    for key, (_, _, help_text) in COMMON.items():
        common.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS, help=help_text)
    parser = argparse.ArgumentParser(prog="blowup", description="Large solutions of u_t - Δu + u^q = 0.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, parents=[common])
        for key, (_, default, help_text) in schema.items():
            note = " (required)" if default is _REQUIRED else f" (default {default})"
            p.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS, help=help_text + note)
    return parser


def _read_file(path, subcommand: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found", "missing-key", "config")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case sensitive (N)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {str(path)!r}: {exc}", "type-error", "config") from exc
    out = {}
    for section in parser.sections():
        if section != "common" and section not in SCHEMAS:
            raise ConfigError(f"unknown section [{section}]", "unknown-key", section)
        allowed = COMMON if section == "common" else {**COMMON, **SCHEMAS[section]}
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]", "unknown-key", key)
        if section in ("common", subcommand):
            out.update(dict(parser[section]))
    return out


def parse_config(argv=None) -> RunConfig:
    """Merge flags > file > defaults into a typed :class:`RunConfig`."""
    args = build_parser().parse_args(argv)
    given = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config", "verbose")}
    values = _read_file(args.config, args.subcommand) if args.config else {}
    values.update(given)
    schema = {**COMMON, **SCHEMAS[args.subcommand]}
    params = {}
    for key, (convert, default, _) in schema.items():
        if key not in values:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r} for {args.subcommand}", "missing-key", key)
            params[key] = default
            continue
        try:
            params[key] = convert(values[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {values[key]!r} for {key!r}: {exc}", "type-error", key) from exc
    params["verbose"] = bool(args.verbose)
    return RunConfig(args.subcommand, params)


# --------------------------------------------------------------------------- subcommands

def _out_dir(params) -> Path:
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _run_profile(p) -> int:
    from .profile import ProfileParams, export_profile, log_grid, solve_profile

    params = ProfileParams(p["N"], p["q"], p["r_min"], p["r_max"], log_grid(p["r_min"], p["r_max"], p["nodes"]))
    prof = solve_profile(params)
    out = _out_dir(p)
    export_profile(prof, out / "profile.csv", out / "profile.json")
    print(f"profile N={p['N']} q={p['q']:g}: lambda {prof.lambda_fit:.6g}, c {prof.c_fit:.6g}")
    return 0


def _run_ball(p) -> int:
    from .elliptic import RadialProblem, ball_grid, export_radial, solve_ball_large
    from .profile import subcritical

    sol = solve_ball_large(RadialProblem(p["N"], p["q"], p["radius"], ball_grid(p["radius"], p["nodes"])),
                           tolerance=p["tolerance"])
    out = _out_dir(p)
    export_radial(sol, out / "ball.csv", out / "ball.json")
    note = "" if subcritical(p["N"], p["q"]) else " (supercritical: no singular solution)"
    print(f"ball N={p['N']} q={p['q']:g} radius={p['radius']:g}: P(0) {sol.center_value:.8g}{note}")
    return 0


def _tag(text: str):
    from .parabolic import blowup, fixed, insulated, zero

    if text == "zero":
        return zero()
    if text == "blowup":
        return blowup()
    if text == "insulated":
        return insulated()
    if text.startswith("fixed:"):
        return fixed(float(text.split(":", 1)[1]))
    raise ConfigError(f"unknown boundary {text!r}", "type-error", "boundary")


def _initial(text: str, x: np.ndarray, length: float):
    from .verify import bump

    if text == "zero":
        return 0.0
    if text == "bump":
        return bump(x / length)
    if text.startswith("constant:"):
        return float(text.split(":", 1)[1])
    raise ConfigError(f"unknown initial data {text!r}", "type-error", "initial")


def _run_evolve(p) -> int:
    from .parabolic import (BoundaryMode, DomainSpec, EvolveSpec, evolve, export_field, k_ladder_limit,
                            make_time_grid)

    tag = _tag(p["boundary"])
    graded = tag.kind == "blowup"
    if p["domain"] == "interval":
        n = p["nodes"] | 1 if graded else p["nodes"]
        domain = DomainSpec("interval", (0.0, p["length"]), n=n,
                            edge_width=1e-8 * p["length"] if graded else None)
    else:
        domain = DomainSpec("radial_ball", p["length"], n=p["nodes"], dim=p["dim"],
                            edge_width=1e-8 * p["length"] if graded else None)
    x = domain.nodes.axes[0]
    f = _initial(p["initial"], x, p["length"])
    snaps = tuple(s for s in p["snapshots"] if 0 < s <= p["t_end"]) or (p["t_end"],)
    grid = make_time_grid(p["t_end"], dt_max=p["dt_max"], include=snaps)
    spec = EvolveSpec(domain, p["q"], f, BoundaryMode.uniform(tag), p["t_end"], grid, snaps)
    fld = k_ladder_limit(spec, extend=True, max_level=1e16) if graded else evolve(spec)
    manifest = export_field(fld, _out_dir(p), "snapshot")
    print(f"evolve: {len(snaps)} snapshot(s), max value {fld.max_value():.6g}; manifest {manifest}")
    return 0


def _run_graph(p) -> int:
    from .graphdomain import (GraphDomain, export_mask, find_delta_eps, graph_time_grid, shifted_family,
                              solve_large, solve_v_sigma, solve_w_sigma)
    from .parabolic import export_field

    d = GraphDomain(1.0, lambda x: 1.0 + 0.2 * np.sin(3.0 * x), h=p["h"])
    family = shifted_family(d, tuple(int(round(s)) for s in p["sigma_cells"]))
    out = _out_dir(p)
    export_mask(d.base, out / "mask_base.txt")
    for s in family:
        export_mask(s.inner, out / f"mask_inner_{s.cells}.txt")
        export_mask(s.outer, out / f"mask_outer_{s.cells}.txt")
    tg = graph_time_grid(p["t_end"], p["tau"])
    smallest = family[-1]
    u = solve_large(d, p["q"], tg)
    v0 = solve_v_sigma(d, smallest, p["q"], tg)
    w0 = solve_w_sigma(d, smallest, p["q"], tg)
    for name, fld in (("u", u), ("v0", v0), ("w0", w0)):
        export_field(fld, out / name, name)
    res = find_delta_eps(d, p["q"], p["eps"], p["tau"], v0, w0, p["R_prime"])
    _write_json(out / "delta.json", {"eps": p["eps"], "tau": p["tau"], "R_prime": p["R_prime"],
                                     "delta": res.delta, "found": res.found,
                                     "first_failure_depth": None if np.isinf(res.first_failure_depth)
                                     else res.first_failure_depth})
    print(f"graph: delta_eps = {res.delta:g} for eps = {p['eps']:g}")
    return 0


def _run_verify(p) -> int:
    from .verify import run_suite

    report = run_suite(p["suite"], {"tolerance_scale": p["tolerance_scale"]})
    out = _out_dir(p)
    report.write_json(out / f"report_{p['suite']}.json")
    report.write_csv(out / f"report_{p['suite']}.csv")
    for r in report.results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.max_violation:.3e} (tolerance {r.tolerance:.1e})")
    return 0 if report.passed else 1


_DISPATCH = {"profile": _run_profile, "ball": _run_ball, "evolve": _run_evolve, "graph": _run_graph,
             "verify": _run_verify}


def dispatch(cfg: RunConfig) -> int:
    """Run the pipeline of ``cfg.subcommand``; returns the process exit status."""
    try:
        return _DISPATCH[cfg.subcommand](cfg.parameters)
    except BlowupError as exc:
        print(f"blowup {cfg.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"blowup: {exc.kind}: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if cfg.parameters.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
