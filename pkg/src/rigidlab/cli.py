"""Command-line front end.

Exit codes: 0 success, 1 acceptance failure, 2 configuration error,
3 numerical failure (non-convergence, inversion pole on the surface).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import acceptance
from .functionals import energy_report, gauss_bonnet_ledger, grid_for
from .moebius import MoebiusTransform, PoleError, inversion_ledger, pushforward, safe_inversion_center
from .oracle_mesh import mesh_from_immersion
from .quadrature import build_grid
from .rigidity import (MODEL_FAMILIES, SWEEP_FAMILIES, SWEEP_HEADER, SearchConfig, align_to_model,
                       default_workers, nearest_round_sphere, perturbation_sweep)
from .surface import CATALOG, catalog_defaults, make_catalog_surface

COMMANDS = ("catalog", "energy", "ledger", "invert", "align", "sweep", "verify-all")
ALIGN_MODELS = ("round_sphere",) + MODEL_FAMILIES

EXIT_OK, EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "rigidlab experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "surface": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {"name": {"enum": list(CATALOG)}, "params": {"type": "object"}},
        },
        "grid": {"oneOf": [_POS_INT, {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2}]},
        "invert": {"oneOf": [{"const": "auto"}, {"type": "array", "items": _NUM, "minItems": 2}]},
        "model": {"enum": list(ALIGN_MODELS)},
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iter": _POS_INT,
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "restarts": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "coarse_resolution": {"type": "integer", "minimum": 8},
                "polish_resolution": {"type": "integer", "minimum": 8},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["family"],
                    "properties": {
                        "family": {"enum": list(SWEEP_FAMILIES)},
                        "l": {"type": "integer", "minimum": 0},
                        "m": {"type": "integer"},
                        "r": {"type": "number", "exclusiveMinimum": 0},
                        "V": {"type": "number", "minimum": 5},
                        "center": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                    },
                },
                "epsilons": {"type": "array", "items": _NUM, "minItems": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "off": {"type": ["string", "null"]},
                "off_resolution": {"type": "integer", "minimum": 16},
                "compare": {"type": ["string", "null"]},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"ledger_relative": {"type": "number", "exclusiveMinimum": 0}},
        },
        "seed": {"type": "integer", "minimum": 0},
        "workers": _POS_INT,
    },
}

DEFAULT_SWEEP = {
    "round-sphere": {"family": {"family": "round-sphere", "l": 2, "m": 0}, "epsilons": [0.005, 0.01, 0.02, 0.05]},
    "inverted-catenoid": {"family": {"family": "inverted-catenoid"}, "epsilons": [0.0, 0.01, 0.02, 0.05, 0.1]},
}


class ConfigError(Exception):
    pass


class NumericalFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _schema_error(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"unknown key(s) {', '.join(map(repr, extra))} at {path}"
    return f"{path}: {err.message}"


def validate_config(cfg: dict) -> None:
    errors = sorted(jsonschema.Draft7Validator(CONFIG_SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        raise ConfigError("; ".join(_schema_error(e) for e in errors))


def _read_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} not found")
    text = p.read_text()
    try:
        if p.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
        elif p.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            raise ConfigError(f"config must be .json or .toml, got {p.suffix!r}")
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"cannot parse {p.name}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return data


def _fill_defaults(cfg: dict) -> dict:
    out = copy.deepcopy(cfg)
    cmd = out["command"]
    out.setdefault("seed", 0)
    out.setdefault("workers", default_workers())
    opt = {**SearchConfig(seed=out["seed"]).to_json(), **out.get("optimizer", {})}
    opt.pop("scan_v", None)
    opt.pop("scan_theta", None)
    outp = {"dir": "rigidlab-out", "off": None, "off_resolution": 128, "compare": None, **out.get("output", {})}
    out["output"] = outp
    out.setdefault("tolerances", {})
    out["tolerances"].setdefault("ledger_relative", 0.01)
    if cmd in ("energy", "ledger", "invert", "align"):
        if "surface" not in out:
            raise ConfigError(f"command {cmd!r} needs a surface")
        s = out["surface"]
        try:
            s["params"] = {**catalog_defaults(s["name"]), **s.get("params", {})}
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    if cmd == "invert":
        out.setdefault("invert", "auto")
    if cmd == "align":
        out.setdefault("model", "round_sphere")
        out["optimizer"] = opt
    if cmd == "sweep":
        sw = out.setdefault("sweep", {})
        fam = sw.setdefault("family", {"family": "round-sphere"})
        base = DEFAULT_SWEEP[fam["family"]]
        sw["family"] = {**base["family"], **fam}
        sw.setdefault("epsilons", list(base["epsilons"]))
        out.setdefault("grid", 128)
        out["optimizer"] = opt
    if cmd == "verify-all":
        out["optimizer"] = opt
    if isinstance(out.get("grid"), int):
        out["grid"] = [out["grid"], out["grid"]]
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Read a JSON/TOML config, apply overrides, validate, fill defaults."""
    cfg = _read_config(path) if path else {}
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k] = {**cfg[k], **v}
        else:
            cfg[k] = v
    validate_config(cfg)
    return _fill_defaults(cfg)


def _search_config(cfg: dict) -> SearchConfig:
    o = cfg["optimizer"]
    return SearchConfig(max_iter=o["max_iter"], tol=o["tol"], restarts=o["restarts"], seed=o["seed"],
                        coarse_resolution=o["coarse_resolution"], polish_resolution=o["polish_resolution"])


# ---------------------------------------------------------------------------
# output


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _embedded(cfg: dict) -> dict:
    # output locations are not part of the experiment; leaving them out keeps
    # artifacts of identical runs byte-identical wherever they are written
    c = copy.deepcopy(cfg)
    c["output"] = {k: v for k, v in c.get("output", {}).items() if k not in ("dir", "off", "compare")}
    return c


def _envelope(cfg: dict, result) -> dict:
    return {"tool": {"name": "rigidlab", "version": __version__}, "config": _embedded(cfg), "result": result}


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _outdir(cfg: dict) -> Path:
    return Path(cfg["output"]["dir"])


def _grid(f, cfg):
    res = cfg.get("grid")
    return build_grid(f.domain, tuple(res)) if res else grid_for(f)


def _maybe_off(f, cfg) -> None:
    off = cfg["output"].get("off")
    if off:
        mesh = mesh_from_immersion(f, cfg["output"]["off_resolution"])
        p = Path(off)
        _write(p if p.is_absolute() or p.parent != Path(".") else _outdir(cfg) / p, mesh.to_off())


def _surface(cfg):
    s = cfg["surface"]
    return make_catalog_surface(s["name"], s["params"])


def _center(f, spec):
    if spec == "auto":
        sc = safe_inversion_center(f)
        return np.asarray(sc.center, dtype=float), sc.to_json()
    x0 = np.asarray(spec, dtype=float)
    if x0.shape != (f.ambient_dim,):
        raise ConfigError(f"inversion centre needs {f.ambient_dim} coordinates")
    return x0, None


def _pi(x) -> str:
    return "n/a" if x is None or not math.isfinite(x) else f"{x / math.pi:+.6f} pi"


# ---------------------------------------------------------------------------
# commands


def cmd_catalog(cfg, out) -> int:
    listing = {name: catalog_defaults(name) for name in CATALOG}
    out.write(dumps({"tool": {"name": "rigidlab", "version": __version__}, "catalog": listing}))
    return EXIT_OK


def cmd_energy(cfg, out) -> int:
    f = _surface(cfg)
    grid = _grid(f, cfg)
    cfg["grid"] = list(grid.resolution)
    rep = energy_report(f, grid)
    path = _write(_outdir(cfg) / "energy.json", dumps(_envelope(cfg, rep.to_json())))
    _maybe_off(f, cfg)
    for k in ("area", "willmore", "total_sff", "total_gauss", "total_traceless"):
        out.write(f"{k:16s} {rep.value(k)!r:>24}  +- {rep.bound(k):.2e}\n")
    out.write(f"wrote {path}\n")
    return EXIT_OK


def cmd_ledger(cfg, out) -> int:
    f = _surface(cfg)
    grid = _grid(f, cfg)
    cfg["grid"] = list(grid.resolution)
    rep = energy_report(f, grid)
    gb = gauss_bonnet_ledger(f, grid, rep)
    result = {"gauss_bonnet": gb.to_json()}
    out.write(f"Gauss-Bonnet  predicted {_pi(gb.predicted)}  measured {_pi(gb.measured)}  "
              f"agrees={gb.agrees} quantized={gb.quantized}\n")
    if cfg.get("invert") is not None:
        x0, safe = _center(f, cfg["invert"])
        led = inversion_ledger(f, x0, base_report=rep)
        result["inversion"] = led.to_json()
        result["inversion"]["safe_center"] = safe
        rel = cfg["tolerances"]["ledger_relative"]
        result["inversion"]["within_relative"] = {k: bool(v <= rel) for k, v in led.relative_error.items()}
        out.write(f"inversion at {[round(c, 6) for c in led.center]}  bracket {led.bracket}\n")
        out.write(f"{'quantity':16s} {'base':>18s} {'predicted':>18s} {'measured':>18s} {'rel.err':>9s}\n")
        for k in ("total_sff", "willmore", "total_gauss"):
            out.write(f"{k:16s} {_pi(led.base[k]):>18s} {_pi(led.predicted[k]):>18s} "
                      f"{_pi(led.measured[k]):>18s} {led.relative_error[k]:9.2e}\n")
    path = _write(_outdir(cfg) / "ledger.json", dumps(_envelope(cfg, result)))
    out.write(f"wrote {path}\n")
    return EXIT_OK


def cmd_invert(cfg, out) -> int:
    f = _surface(cfg)
    x0, safe = _center(f, cfg["invert"])
    g = pushforward(f, MoebiusTransform.inversion(x0))
    grid = _grid(g, cfg)
    cfg["grid"] = list(grid.resolution)
    rep = energy_report(g, grid)
    result = {"center": x0, "safe_center": safe, "surface": g.describe(), "energy": rep.to_json()}
    path = _write(_outdir(cfg) / "invert.json", dumps(_envelope(cfg, result)))
    _maybe_off(g, cfg)
    out.write(f"inverted {f.name} at {[round(float(c), 6) for c in x0]}: total_sff {_pi(rep.total_sff)}, "
              f"willmore {_pi(rep.willmore)}, total_gauss {_pi(rep.total_gauss)}\n")
    out.write(f"wrote {path}\n")
    return EXIT_OK


def cmd_align(cfg, out) -> int:
    f = _surface(cfg)
    grid = build_grid(f.domain, tuple(cfg["grid"])) if cfg.get("grid") else build_grid(f.domain, (128, 128))
    cfg["grid"] = list(grid.resolution)
    sc = _search_config(cfg)
    model = cfg["model"]
    if model == "round_sphere":
        res = nearest_round_sphere(f, grid, sc)
    else:
        res = align_to_model(f, model, grid, sc)
    path = _write(_outdir(cfg) / "align.json", dumps(_envelope(cfg, res.to_json())))
    out.write(f"model {res.model}: distance {res.distance.value!r}  delta {res.delta!r}  "
              f"converged={res.converged}\nwrote {path}\n")
    if not res.converged:
        raise NumericalFailure("alignment did not converge (result written)")
    return EXIT_OK


def _dat(cfg, rows) -> str:
    buf = ["# rigidlab perturbation sweep " + __version__,
           "# config " + json.dumps(_clean(_embedded(cfg))),
           "# " + " ".join(SWEEP_HEADER)]
    for r in rows:
        buf.append(" ".join(r.csv_fields()[:-1] + ["1" if r.converged else "0"]))
    return "\n".join(buf) + "\n"


def _plot_script(dat_name: str, fit) -> str:
    p = fit.exponent if math.isfinite(fit.exponent) else 0.5
    return "\n".join([
        "# gnuplot script: aligned distance against energy excess",
        "set logscale xy",
        'set xlabel "delta"',
        'set ylabel "aligned distance"',
        "set key left top",
        f"p = {p!r}",
        "f(x) = a * x**p",
        f'fit f(x) "{dat_name}" using 2:3 via a',
        f'plot "{dat_name}" using 2:3 with linespoints title "sweep", f(x) title sprintf("fit, p = %.3f", p)',
        "",
    ])


def write_sweep(cfg: dict, res, outdir: Path, stem: str = "sweep") -> list:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in res.rows:
        w.writerow(r.csv_fields())
    fit = {**res.fit.to_json(), "spearman": res.fit.spearman}
    paths = [
        _write(outdir / f"{stem}.csv", buf.getvalue()),
        _write(outdir / f"{stem}_fit.json", dumps(_envelope(cfg, {"fit": fit, "family": res.family}))),
        _write(outdir / f"{stem}.dat", _dat(cfg, res.rows)),
        _write(outdir / f"{stem}.gp", _plot_script(f"{stem}.dat", res.fit)),
    ]
    return paths


def cmd_sweep(cfg, out) -> int:
    sw = cfg["sweep"]
    res = perturbation_sweep(sw["family"], sw["epsilons"], tuple(cfg["grid"]), _search_config(cfg),
                             cfg["workers"])
    paths = write_sweep(cfg, res, _outdir(cfg))
    out.write(",".join(SWEEP_HEADER) + "\n")
    for r in res.rows:
        out.write(",".join(r.csv_fields()) + "\n")
    out.write(f"exponent {res.fit.exponent!r}  residual {res.fit.residual!r}  spearman {res.fit.spearman!r}\n")
    for p in paths:
        out.write(f"wrote {p}\n")
    if not all(r.converged for r in res.rows):
        raise NumericalFailure("some sweep alignments did not converge (rows flagged and written)")
    return EXIT_OK


def cmd_verify_all(cfg, out) -> int:
    outdir = _outdir(cfg)
    results = acceptance.run_criteria(seed=cfg["seed"], workers=cfg["workers"])
    record = {"criteria": [r.to_json() for r in results]}
    for r in results:
        for label, sweep in r.artifacts.items():
            write_sweep(cfg, sweep, outdir, f"sweep_{label}")
    _write(outdir / "acceptance.json", dumps(_envelope(cfg, record)))
    for r in results:
        out.write(f"{r.line()}  ({r.runtime:.1f} s)\n")
    failed = [r for r in results if not r.passed]
    if cfg["output"].get("compare"):
        det = acceptance.compare_artifacts(cfg["output"]["compare"], outdir)
        out.write(det.line() + "\n")
        if not det.passed:
            failed.append(det)
    else:
        out.write("[SKIP] criterion 10: determinism (pass --compare DIR with a previous run)\n")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


HANDLERS = {"catalog": cmd_catalog, "energy": cmd_energy, "ledger": cmd_ledger, "invert": cmd_invert,
            "align": cmd_align, "sweep": cmd_sweep, "verify-all": cmd_verify_all}


# ---------------------------------------------------------------------------
# argument parsing


def _grid_arg(text: str):
    try:
        parts = [int(p) for p in text.lower().replace("x", ",").split(",") if p]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return parts
    raise argparse.ArgumentTypeError(f"bad grid {text!r}")


def _floats(text: str) -> list:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _center_arg(text: str):
    return "auto" if text == "auto" else _floats(text)


def _json_arg(text: str) -> dict:
    try:
        val = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"bad JSON {text!r}: {exc}") from exc
    if not isinstance(val, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return val


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON or TOML experiment config")
    common.add_argument("--out", help="output directory (default rigidlab-out)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="worker processes (default $RIGIDLAB_WORKERS or 1)")

    surf = _Parser(add_help=False)
    surf.add_argument("--surface", help="catalog surface name")
    surf.add_argument("--params", type=_json_arg, help="surface parameters as a JSON object")
    surf.add_argument("--grid", type=_grid_arg, help="resolution N or NxM")

    opt = _Parser(add_help=False)
    opt.add_argument("--max-iter", type=int)
    opt.add_argument("--tol", type=float)
    opt.add_argument("--restarts", type=int)

    p = _Parser(prog="rigidlab", description="Energy ledgers and rigidity experiments for conformal immersions.")
    p.add_argument("--version", action="version", version=f"rigidlab {__version__}")
    p.add_argument("--config", dest="top_config", help="run the command named in this config file")
    p.add_argument("--out", dest="top_out", help=argparse.SUPPRESS)
    p.add_argument("--seed", dest="top_seed", type=int, help=argparse.SUPPRESS)
    p.add_argument("--workers", dest="top_workers", type=int, help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("catalog", parents=[common], help="list catalog surfaces and default parameters")
    e = sub.add_parser("energy", parents=[common, surf], help="energy report")
    e.add_argument("--off", help="also export an OFF mesh")
    le = sub.add_parser("ledger", parents=[common, surf], help="Gauss-Bonnet and inversion ledgers")
    le.add_argument("--invert", type=_center_arg, help="inversion centre x,y,z or 'auto'")
    inv = sub.add_parser("invert", parents=[common, surf], help="invert a surface and report energies")
    inv.add_argument("--center", dest="invert", type=_center_arg, help="inversion centre x,y,z or 'auto'")
    inv.add_argument("--off", help="also export an OFF mesh of the inverted surface")
    al = sub.add_parser("align", parents=[common, surf, opt], help="align to a model family")
    al.add_argument("--model", help=f"one of {', '.join(ALIGN_MODELS)}")
    sw = sub.add_parser("sweep", parents=[common, opt], help="perturbation sweep and exponent fit")
    sw.add_argument("--family", help=f"one of {', '.join(SWEEP_FAMILIES)}")
    sw.add_argument("--eps", type=_floats, help="comma-separated amplitudes")
    sw.add_argument("--grid", type=_grid_arg)
    va = sub.add_parser("verify-all", parents=[common], help="run the acceptance suite")
    va.add_argument("--compare", help="previous verify-all output directory for the determinism check")
    return p


def _overrides(ns: argparse.Namespace) -> dict:
    o: dict = {}
    if ns.command:
        o["command"] = ns.command
    def get(k):
        v = getattr(ns, k, None)
        return getattr(ns, "top_" + k, None) if v is None else v

    if get("surface") is not None or get("params") is not None:
        o["surface"] = {}
        if get("surface") is not None:
            o["surface"]["name"] = ns.surface
        if get("params") is not None:
            o["surface"]["params"] = ns.params
    for key in ("grid", "invert", "model", "seed", "workers"):
        if get(key) is not None:
            o[key] = get(key)
    optim = {k: get(a) for k, a in (("max_iter", "max_iter"), ("tol", "tol"), ("restarts", "restarts"))
             if get(a) is not None}
    if get("seed") is not None:
        optim["seed"] = get("seed")
    if optim:
        o["optimizer"] = optim
    if get("family") is not None or get("eps") is not None:
        o["sweep"] = {}
        if get("family") is not None:
            o["sweep"]["family"] = {"family": ns.family}
        if get("eps") is not None:
            o["sweep"]["epsilons"] = ns.eps
    outp = {k: get(k) for k in ("off", "compare") if get(k) is not None}
    if get("out") is not None:
        outp["dir"] = get("out")
    if outp:
        o["output"] = outp
    return o


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        ns = build_parser().parse_args(argv)
        path = getattr(ns, "config", None) or ns.top_config
        if not ns.command and not path:
            raise ConfigError("a subcommand or --config is required")
        cfg = load_config(path, _overrides(ns))
        if ns.command and cfg["command"] != ns.command:
            raise ConfigError(f"config command {cfg['command']!r} does not match {ns.command!r}")
        return HANDLERS[cfg["command"]](cfg, stdout)
    except ConfigError as exc:
        stderr.write(f"rigidlab: config error: {exc}\n")
        return EXIT_CONFIG
    except (PoleError, NumericalFailure, ArithmeticError, RuntimeError) as exc:
        stderr.write(f"rigidlab: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        stderr.write(f"rigidlab: config error: {exc}\n")
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())
