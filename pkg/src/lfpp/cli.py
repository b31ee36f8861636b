"""Command-line front end.

Every command resolves its flags to a full parameter set, runs the library
operation, writes the primary output files, and drops a sidecar manifest
(`<output>.manifest.json`) echoing the resolved parameters so any artifact
can be regenerated from its manifest alone.  Primary outputs are
deterministic functions of the flags; thread count is a throughput hint that
never changes bytes, and wall-clock fields live only in the manifest.

Exit codes: 0 success, 1 usage or validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Tuple

from . import __version__, cache, fieldio
from .errors import InvalidArgument, LfppError
from .gff import (
    XI_CRIT_REF,
    LatticeSpec,
    Params,
    mollify,
    mollify_localized,
    sample_dirichlet_gff,
    sample_torus_gff,
)
from .metric import (
    Annulus,
    Disk,
    Rect,
    build_weighted_grid,
    dist_around_annulus,
    dist_internal,
    dist_point,
    edge_weight,
    lr_crossing,
)
from .renorm import (
    MCConfig,
    MedianEstimate,
    estimate_a_eps,
    fit_exponent,
    scaling_ratio,
)
from .experiments import EXPERIMENT_COLUMNS, run_experiment


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_point(text: str) -> Tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _parse_region(text: str):
    """Region flag syntax: disk:cx,cy,r | annulus:cx,cy,r1,r2 | rect:x0,y0,x1,y1."""
    kind, _, rest = text.partition(":")
    try:
        vals = [float(tok) for tok in rest.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad region numbers in {text!r}")
    if kind == "disk" and len(vals) == 3:
        return Disk(center=(vals[0], vals[1]), radius=vals[2])
    if kind == "annulus" and len(vals) == 4:
        return Annulus(center=(vals[0], vals[1]), r_inner=vals[2], r_outer=vals[3])
    if kind == "rect" and len(vals) == 4:
        return Rect(lo=(vals[0], vals[1]), hi=(vals[2], vals[3]))
    raise argparse.ArgumentTypeError(
        f"region must be disk:cx,cy,r or annulus:cx,cy,r1,r2 or rect:x0,y0,x1,y1, got {text!r}")


def _resolve_spacing(raw: str, n: int) -> float:
    # auto places the unit square in the central quarter: spacing = 4/n.
    if raw == "auto":
        return 4.0 / n
    try:
        return float(raw)
    except ValueError:
        raise InvalidArgument(f"--spacing must be a number or 'auto', got {raw!r}")


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2) + "\n").encode("utf-8")


def _json_num(x: float) -> Optional[float]:
    # JSON has no Infinity/NaN; non-finite cells serialize as null.
    return float(x) if math.isfinite(x) else None


def _cache_index(ns) -> Optional[cache.CacheIndex]:
    root = ns.cache_dir or os.environ.get("LFPP_CACHE")
    if not root:
        return None
    return cache.load_index(root)


def _gnuplot_script(csv_path: str, xcol: int, ycol: int) -> bytes:
    lines = [
        "set datafile separator ','",
        "set key off",
        f"plot '{os.path.basename(csv_path)}' using {xcol}:{ycol} with linespoints",
        "pause -1",
        "",
    ]
    return "\n".join(lines).encode("utf-8")


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# command handlers: each returns a result dict consumed by the dispatcher
# ---------------------------------------------------------------------------

def _handle_field_sample(ns) -> dict:
    spacing = _resolve_spacing(ns.spacing, ns.n)
    origin = ns.origin
    spec = LatticeSpec(n=ns.n, spacing=spacing, origin=origin)
    resolved = {"kind": ns.kind, "n": ns.n, "spacing": spacing,
                "origin": list(origin), "seed": ns.seed, "out": ns.out}
    core = {k: resolved[k] for k in ("kind", "n", "spacing", "origin", "seed")}
    outputs = []
    idx = _cache_index(ns)
    key = cache.cache_key("field_sample", core)
    payload = None
    if idx is not None:
        hit = cache.cache_lookup(idx, key)
        if hit is not None:
            payload = hit.read_bytes()
    if payload is None:
        sampler = sample_torus_gff if ns.kind == "torus" else sample_dirichlet_gff
        payload = fieldio.field_bytes(sampler(spec, ns.seed))
        if idx is not None:
            cache.cache_store(idx, key, "field", payload, ".lfpf")
    outputs.append((ns.out, payload))
    return {"command": "field-sample", "outputs": outputs, "resolved": resolved,
            "master_seed": ns.seed, "warnings": [], "supercritical": False}


def _path_csv_rows(grid, path):
    rows = []
    cum = 0.0
    prev = None
    for k, site in enumerate(path.sites):
        if prev is not None:
            cum += edge_weight(grid, prev, site)
        x, y = grid.spec.point_of(*site)
        rows.append((k, x, y, cum))
        prev = site
    return rows


def _region_from_flag(text: Optional[str]):
    if text is None:
        return None
    try:
        return _parse_region(text)
    except argparse.ArgumentTypeError as exc:
        raise InvalidArgument(str(exc))


def _handle_dist(ns) -> dict:
    field = fieldio.read_field(ns.field)
    params = Params(xi=ns.xi)
    moll = mollify_localized(field, ns.eps) if ns.localized else mollify(field, ns.eps)
    grid = build_weighted_grid(moll, params.xi)
    want_path = ns.emit_path is not None
    within = _region_from_flag(ns.within)
    around = _region_from_flag(ns.around)
    crossing = _region_from_flag(ns.crossing)

    if around is not None:
        if not isinstance(around, Annulus):
            raise InvalidArgument("--around takes an annulus region")
        res = dist_around_annulus(grid, around, want_path=want_path)
        mode = "around"
    elif crossing is not None:
        if not isinstance(crossing, Rect):
            raise InvalidArgument("--crossing takes a rect region")
        res = lr_crossing(grid, crossing, want_path=want_path)
        mode = "crossing"
    else:
        if ns.src is None or ns.dst is None:
            raise InvalidArgument("--from and --to are required unless "
                                  "--around or --crossing is given")
        if within is not None:
            res = dist_internal(grid, ns.src, ns.dst, within, want_path=want_path)
            mode = "internal"
        else:
            res = dist_point(grid, ns.src, ns.dst, want_path=want_path)
            mode = "point"

    doc = {
        "value": _json_num(res.value),
        "unreachable": res.unreachable,
        "settled": res.settled,
        "path": None if res.path is None else {
            "sites": [[int(i), int(j)] for i, j in res.path.sites],
            "length": _json_num(res.path.length),
        },
    }
    resolved = {"field": ns.field, "field_seed": field.seed, "eps": ns.eps,
                "xi": ns.xi, "localized": ns.localized, "mode": mode,
                "from": list(ns.src) if ns.src else None,
                "to": list(ns.dst) if ns.dst else None,
                "within": ns.within, "around": ns.around,
                "crossing": ns.crossing, "out": ns.out}
    outputs = []
    stdout = None
    if ns.out:
        outputs.append((ns.out, _json_bytes(doc)))
    else:
        stdout = json.dumps(doc, indent=2)
    if want_path:
        if res.path is None:
            raise InvalidArgument("no path to emit: the target is unreachable")
        rows = _path_csv_rows(grid, res.path)
        outputs.append((ns.emit_path, _csv_bytes(("idx", "x", "y", "cum_length"), rows)))
        if ns.emit_gnuplot:
            outputs.append((ns.emit_path + ".gnu", _gnuplot_script(ns.emit_path, 2, 3)))
    return {"command": "dist", "outputs": outputs, "stdout": stdout,
            "resolved": resolved, "master_seed": None, "warnings": [],
            "supercritical": params.supercritical}


def _mc_from_flags(ns) -> MCConfig:
    spacing = _resolve_spacing(ns.spacing, ns.n)
    lattice = LatticeSpec(n=ns.n, spacing=spacing, origin=ns.origin)
    parallel = ns.threads is not None and ns.threads > 1
    return MCConfig(lattice=lattice, trials=ns.trials, master_seed=ns.seed,
                    localized=ns.localized, parallel=parallel)


def _estimate_doc(est: MedianEstimate) -> dict:
    return {"epsilon": est.epsilon, "median": est.median, "trials": est.trials,
            "ci_lo": est.ci_lo, "ci_hi": est.ci_hi, "master_seed": est.master_seed}


def _handle_a_eps(ns) -> dict:
    params = Params(xi=ns.xi)
    mc = _mc_from_flags(ns)
    resolved = {"xi": ns.xi, "eps": ns.eps, "n": ns.n,
                "spacing": mc.lattice.spacing, "origin": list(mc.lattice.origin),
                "trials": ns.trials, "seed": ns.seed, "localized": ns.localized,
                "out": ns.out}
    core = {k: resolved[k] for k in
            ("xi", "eps", "n", "spacing", "origin", "trials", "seed", "localized")}
    idx = _cache_index(ns)
    key = cache.cache_key("a_eps", core)
    payload = None
    if idx is not None:
        hit = cache.cache_lookup(idx, key)
        if hit is not None:
            payload = hit.read_bytes()
    if payload is None:
        est = estimate_a_eps(ns.eps, params, mc, workers=ns.threads)
        payload = _json_bytes(_estimate_doc(est))
        if idx is not None:
            cache.cache_store(idx, key, "a_eps", payload, ".json")
    return {"command": "a-eps", "outputs": [(ns.out, payload)],
            "resolved": resolved, "master_seed": ns.seed, "warnings": [],
            "supercritical": params.supercritical}


def _load_estimates(dir_path: str) -> List[MedianEstimate]:
    root = Path(dir_path)
    if not root.is_dir():
        raise InvalidArgument(f"--in directory {dir_path!r} does not exist")
    found = []
    for path in sorted(root.glob("*.json")):
        if path.name.endswith(".manifest.json"):
            continue
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        if not (isinstance(doc, dict)
                and all(k in doc for k in ("epsilon", "median", "trials",
                                           "ci_lo", "ci_hi", "master_seed"))):
            continue
        found.append(MedianEstimate(
            epsilon=float(doc["epsilon"]), median=float(doc["median"]),
            trials=int(doc["trials"]), ci_lo=float(doc["ci_lo"]),
            ci_hi=float(doc["ci_hi"]), master_seed=int(doc["master_seed"])))
    if not found:
        raise InvalidArgument(f"no estimate JSON files found under {dir_path!r}")
    return found


def _handle_fit(ns) -> dict:
    params = Params(xi=ns.xi)
    estimates = _load_estimates(ns.in_dir)
    fit = fit_exponent(estimates, params)
    doc = {"slope": fit.slope, "intercept": fit.intercept,
           "stderr_slope": fit.stderr_slope, "q_hat": fit.q_hat,
           "points": [[a, b] for a, b in fit.points]}
    resolved = {"in": ns.in_dir, "xi": ns.xi,
                "epsilons": sorted(e.epsilon for e in estimates), "out": ns.out}
    return {"command": "fit", "outputs": [(ns.out, _json_bytes(doc))],
            "resolved": resolved, "master_seed": None, "warnings": [],
            "supercritical": params.supercritical}


def _handle_ratio(ns) -> dict:
    params = Params(xi=ns.xi)
    mc = _mc_from_flags(ns)
    q_hat = ns.q_hat
    if q_hat is None:
        estimates = [estimate_a_eps(eps, params, mc, workers=ns.threads)
                     for eps in ns.eps]
        q_hat = fit_exponent(estimates, params).q_hat
    series = scaling_ratio(ns.eps, ns.r, params, mc, q_hat, workers=ns.threads)
    doc = {"r": series.r, "rows": [[e, rho] for e, rho in series.rows],
           "q_hat_used": series.q_hat_used}
    resolved = {"xi": ns.xi, "eps": list(ns.eps), "r": ns.r, "n": ns.n,
                "spacing": mc.lattice.spacing, "origin": list(mc.lattice.origin),
                "trials": ns.trials, "seed": ns.seed, "localized": ns.localized,
                "q_hat": q_hat, "out": ns.out}
    return {"command": "ratio", "outputs": [(ns.out, _json_bytes(doc))],
            "resolved": resolved, "master_seed": ns.seed, "warnings": [],
            "supercritical": params.supercritical}


def _report_doc(report) -> dict:
    # runtime_secs is wall time and would break byte-identical reruns; the
    # manifest carries the measured value, the primary output a null.
    return {
        "name": report.name,
        "params": report.params,
        "rows": [[_json_num(v) if isinstance(v, float) else v for v in row]
                 for row in report.rows],
        "verdict": report.verdict.value,
        "runtime_secs": None,
        "stats": {k: _json_num(v) if isinstance(v, float) else v
                  for k, v in report.stats.items()},
    }


def _handle_exp(ns) -> dict:
    with open(ns.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidArgument("experiment config must be a JSON object")
    report = run_experiment(ns.name, cfg)
    outputs = [(ns.out, _json_bytes(_report_doc(report)))]
    if ns.csv:
        outputs.append((ns.csv, _csv_bytes(EXPERIMENT_COLUMNS[report.name],
                                           report.rows)))
        if ns.emit_gnuplot:
            outputs.append((ns.csv + ".gnu", _gnuplot_script(ns.csv, 1, 2)))
    seed = None
    if isinstance(cfg.get("mc"), dict):
        seed = cfg["mc"].get("seed")
    elif isinstance(cfg.get("field"), dict):
        seed = cfg["field"].get("seed")
    xi = cfg.get("xi")
    supercritical = isinstance(xi, (int, float)) and xi >= XI_CRIT_REF
    resolved = {"name": ns.name, "config": ns.config, "config_body": cfg,
                "out": ns.out, "csv": ns.csv,
                "runtime_secs_measured": report.runtime_secs}
    return {"command": "exp", "outputs": outputs, "resolved": resolved,
            "master_seed": seed, "warnings": [], "supercritical": supercritical}


def _handle_cache_info(ns) -> dict:
    idx = _cache_index(ns)
    if idx is None:
        raise InvalidArgument("no cache root: pass --cache-dir or set LFPP_CACHE")
    lines = [f"cache root: {idx.root}", f"entries: {len(idx.entries)}"]
    for key in sorted(idx.entries):
        entry = idx.entries[key]
        created = datetime.fromtimestamp(entry.get("created", 0),
                                         timezone.utc).isoformat()
        lines.append(f"  {key[:16]}  {entry.get('kind', '?'):8s} "
                     f"{entry.get('path', '?')}  {created}")
    return {"command": "cache-info", "outputs": [], "stdout": "\n".join(lines),
            "resolved": {"cache_dir": str(idx.root)}, "master_seed": None,
            "warnings": [], "supercritical": False}


# ---------------------------------------------------------------------------
# parser assembly and dispatch
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="lfpp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lfpp {__version__}")
    sub = parser.add_subparsers(dest="command")

    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker hint; never changes output bytes")
    common.add_argument("--cache-dir", default=None,
                        help="cache root (overrides LFPP_CACHE)")

    p_field = sub.add_parser("field", help="field sampling commands")
    field_sub = p_field.add_subparsers(dest="field_command")
    p_sample = field_sub.add_parser("sample", parents=[common],
                                    help="sample a field to an LFPF file")
    p_sample.add_argument("--kind", choices=("torus", "dirichlet"), default="torus")
    p_sample.add_argument("--n", type=int, required=True)
    p_sample.add_argument("--spacing", default="auto")
    p_sample.add_argument("--origin", type=_parse_point, default=(0.0, 0.0))
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--out", required=True)
    p_sample.set_defaults(handler=_handle_field_sample)

    p_dist = sub.add_parser("dist", parents=[common],
                            help="distances on a stored field")
    p_dist.add_argument("--field", required=True)
    p_dist.add_argument("--eps", type=float, required=True)
    p_dist.add_argument("--xi", type=float, required=True)
    p_dist.add_argument("--localized", action="store_true")
    p_dist.add_argument("--from", dest="src", type=_parse_point, default=None)
    p_dist.add_argument("--to", dest="dst", type=_parse_point, default=None)
    p_dist.add_argument("--within", default=None,
                        help="restrict paths to a region (internal metric), "
                             "e.g. annulus:0.5,0.5,0.1,0.3")
    p_dist.add_argument("--around", default=None,
                        help="shortest separating cycle of an annulus")
    p_dist.add_argument("--crossing", default=None,
                        help="left-right crossing of a rect:x0,y0,x1,y1")
    p_dist.add_argument("--emit-path", default=None,
                        help="write the geodesic as CSV (idx,x,y,cum_length)")
    p_dist.add_argument("--emit-gnuplot", action="store_true")
    p_dist.add_argument("--out", default=None)
    p_dist.set_defaults(handler=_handle_dist)

    p_aeps = sub.add_parser("a-eps", parents=[common],
                            help="estimate the crossing-median normalizer")
    p_aeps.add_argument("--xi", type=float, required=True)
    p_aeps.add_argument("--eps", type=float, required=True)
    p_aeps.add_argument("--n", type=int, required=True)
    p_aeps.add_argument("--spacing", default="auto")
    p_aeps.add_argument("--origin", type=_parse_point, default=(0.0, 0.0))
    p_aeps.add_argument("--trials", type=int, required=True)
    p_aeps.add_argument("--seed", type=int, required=True)
    p_aeps.add_argument("--localized", action="store_true")
    p_aeps.add_argument("--out", required=True)
    p_aeps.set_defaults(handler=_handle_a_eps)

    p_fit = sub.add_parser("fit", parents=[common],
                           help="fit the scaling exponent from estimate files")
    p_fit.add_argument("--in", dest="in_dir", required=True)
    p_fit.add_argument("--xi", type=float, required=True)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(handler=_handle_fit)

    p_ratio = sub.add_parser("ratio", parents=[common],
                             help="scale-invariance ratios along a ladder")
    p_ratio.add_argument("--xi", type=float, required=True)
    p_ratio.add_argument("--eps", type=_parse_floats, required=True,
                         help="comma-separated epsilon ladder")
    p_ratio.add_argument("--r", type=float, required=True)
    p_ratio.add_argument("--n", type=int, required=True)
    p_ratio.add_argument("--spacing", default="auto")
    p_ratio.add_argument("--origin", type=_parse_point, default=(0.0, 0.0))
    p_ratio.add_argument("--trials", type=int, required=True)
    p_ratio.add_argument("--seed", type=int, required=True)
    p_ratio.add_argument("--localized", action="store_true")
    p_ratio.add_argument("--q-hat", dest="q_hat", type=float, default=None,
                         help="exponent to use; fitted from the ladder when absent")
    p_ratio.add_argument("--out", required=True)
    p_ratio.set_defaults(handler=_handle_ratio)

    p_exp = sub.add_parser("exp", parents=[common], help="run a named experiment")
    p_exp.add_argument("name", choices=sorted(EXPERIMENT_COLUMNS))
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--csv", default=None)
    p_exp.add_argument("--emit-gnuplot", action="store_true")
    p_exp.set_defaults(handler=_handle_exp)

    p_info = sub.add_parser("cache-info", parents=[common],
                            help="list cache entries")
    p_info.set_defaults(handler=_handle_cache_info)

    return parser


def _write_manifest(out_path: str, result: dict, started_at: str,
                    runtime: float, threads: Optional[int]) -> None:
    manifest = {
        "command": result["command"],
        "resolved_params": result["resolved"],
        "master_seed": result["master_seed"],
        "version": __version__,
        "started_at": started_at,
        "runtime_secs": runtime,
        "threads": threads,
        "artifact": os.path.basename(out_path),
        "warnings": list(result["warnings"]),
        "supercritical_xi": bool(result.get("supercritical", False)),
    }
    if manifest["supercritical_xi"]:
        manifest["warnings"].append(
            f"xi is at or above the reference threshold {XI_CRIT_REF}; "
            "estimates here are outside the calibrated regime")
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def parse_and_dispatch(argv: List[str]) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if getattr(ns, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    if getattr(ns, "threads", None) is not None and ns.threads < 1:
        print("lfpp: error: --threads must be a positive integer", file=sys.stderr)
        return 1

    started_at = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        result = ns.handler(ns)
        runtime = time.perf_counter() - t0
        for out_path, payload in result["outputs"]:
            with open(out_path, "wb") as fh:
                fh.write(payload)
        for out_path, _ in result["outputs"]:
            _write_manifest(out_path, result, started_at, runtime,
                            getattr(ns, "threads", None))
        if result.get("stdout"):
            print(result["stdout"])
        return 0
    except json.JSONDecodeError as exc:
        print(f"lfpp: error: malformed JSON at line {exc.lineno} "
              f"column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 1
    except LfppError as exc:
        print(f"lfpp: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"lfpp: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything else is a runtime failure
        print(f"lfpp: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main(argv: Optional[List[str]] = None) -> int:
    return parse_and_dispatch(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    raise SystemExit(main())
