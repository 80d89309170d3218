"""Command line: ``python -m bmolab run <config.json>`` and ``python -m bmolab suite <manifest.json>``.

Exit status: 0 when every check passes, 1 when any check fails or a run
errors, 2 for an invalid config or manifest.
"""

from __future__ import annotations

import argparse
import filecmp
import json
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .experiments import ConfigError, run_config, validate
from .io import write_csv, write_json

MATRIX_HEADER = ["criterion", "claim", "config", "measured", "tolerance", "pass"]


def versions() -> dict:
    import matplotlib
    import numpy
    import scipy

    from . import __version__

    return {
        "bmolab": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def execute(config: dict, out: Path) -> dict:
    """Run one config and write its tables, figures, checks and manifest under ``out``."""
    out = Path(out)
    t0 = time.perf_counter()
    cfg = validate(config)
    res = run_config(cfg)
    for name, (header, rows) in sorted(res.tables.items()):
        write_csv(out / f"{name}.csv", header, rows)
    for name, draw in sorted(res.figures.items()):
        draw(out / f"{name}.svg")
    rows = [c.row(cfg["name"]) for c in res.checks]
    write_csv(out / "checks.csv", MATRIX_HEADER, rows)
    wall = time.perf_counter() - t0
    write_json(out / "manifest.json", {
        "config": cfg,
        "versions": versions(),
        "wall_seconds": wall,
        "passed": res.passed,
        "summary": res.summary,
    })
    return {"name": cfg["name"], "rows": rows, "passed": res.passed, "wall_seconds": wall}


def _execute_safe(config: dict, out: str) -> dict:
    name = config.get("name", config.get("kind", "run")) if isinstance(config, dict) else "run"
    try:
        return execute(config, Path(out))
    except Exception as exc:  # recorded as a failed row so the rest of the suite still runs
        crit = config.get("criterion", "") if isinstance(config, dict) else ""
        return {
            "name": name,
            "rows": [[crit, "run completed", name, float("nan"), "no error", False]],
            "passed": False,
            "error": f"{type(exc).__name__}: {exc}",
            "wall_seconds": 0.0,
        }


def _load_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _print_rows(rows, stream=None):
    stream = stream or sys.stdout
    for crit, claim, name, measured, tol, ok in rows:
        tag = f"[{crit}] " if crit != "" else ""
        shown = f"{measured:.6g}" if isinstance(measured, float) else "see manifest"
        print(f"{'PASS' if ok else 'FAIL'}  {tag}{name}: {claim}  measured={shown}  tolerance {tol}", file=stream)


def cmd_run(args) -> int:
    config = _load_json(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    try:
        validate(config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    out = Path(args.out or Path("runs") / Path(args.config).stem)
    result = execute(config, out)
    _print_rows(result["rows"])
    return 0 if result["passed"] else 1


def load_manifest(path: Path) -> tuple[list[dict], list[str]]:
    """Resolve a suite manifest into named configs and the names to rerun for determinism."""
    path = Path(path)
    data = _load_json(path)
    if isinstance(data, list):
        data = {"runs": data}
    if not isinstance(data, dict) or not isinstance(data.get("runs", []), list):
        raise ConfigError(["manifest: must be a list of runs or an object with a 'runs' list"])
    configs, problems, seen = [], [], set()
    for i, entry in enumerate(data.get("runs", [])):
        if isinstance(entry, str):
            entry = {"path": entry}
        if not isinstance(entry, dict):
            problems.append(f"runs[{i}]: must be an object or a config path")
            continue
        if "path" in entry:
            cfg = _load_json(path.parent / entry["path"])
            cfg.setdefault("name", Path(entry["path"]).stem)
            if "name" in entry:
                cfg["name"] = entry["name"]
        else:
            cfg = dict(entry.get("config", entry))
            if "config" in entry and "name" in entry:
                cfg["name"] = entry["name"]
            cfg.setdefault("name", f"run{i:03d}")
        try:
            validate(cfg)
        except ConfigError as exc:
            problems += [f"runs[{i}] ({cfg.get('name')}): {p}" for p in exc.problems]
        if cfg.get("name") in seen:
            problems.append(f"runs[{i}]: duplicate name {cfg.get('name')!r}")
        seen.add(cfg.get("name"))
        configs.append(cfg)
    det = data.get("determinism", [])
    if det is True:
        det = [c["name"] for c in configs]
    elif not isinstance(det, list) or any(d not in seen for d in det):
        problems.append("determinism: must be true or a list of run names")
        det = []
    if problems:
        raise ConfigError(problems)
    return configs, det


def _csv_files(d: Path):
    return sorted(p.relative_to(d) for p in d.rglob("*.csv"))


def run_suite(configs, out: Path, workers: int = 1, determinism=(), seed=None) -> tuple[list, list]:
    out = Path(out)
    if seed is not None:
        configs = [dict(c, seed=seed) for c in configs]
    jobs = [(c, str(out / c["name"])) for c in configs]
    workers = max(1, min(workers, len(jobs), os.cpu_count() or 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute_safe, *zip(*jobs)))
    else:
        results = [_execute_safe(*j) for j in jobs]
    rows = [r for res in results for r in res["rows"]]
    by_name = {c["name"]: c for c in configs}
    for name in determinism:
        with tempfile.TemporaryDirectory() as tmp:
            again = _execute_safe(by_name[name], tmp)
            first = out / name
            files = _csv_files(first)
            same = again["passed"] == next(r["passed"] for r in results if r["name"] == name)
            same &= files == _csv_files(Path(tmp))
            mismatched = [str(f) for f in files if not filecmp.cmp(first / f, Path(tmp) / f, shallow=False)] if same else files
            ok = bool(same and not mismatched and files)
            crit = by_name[name].get("criterion", "")
            rows.append([17 if crit != "" else "", f"CSV outputs byte-identical on rerun [{name}]", name,
                         float(len(mismatched)), "0 differing files", ok])
    return results, rows


def cmd_suite(args) -> int:
    try:
        configs, det = load_manifest(args.manifest)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    out = Path(args.out or Path("runs") / Path(args.manifest).stem)
    t0 = time.perf_counter()
    results, rows = run_suite(configs, out, args.workers, det, args.seed)
    write_csv(out / "matrix.csv", MATRIX_HEADER, rows)
    write_json(out / "manifest.json", {
        "manifest": str(args.manifest),
        "runs": [{"name": r["name"], "passed": r["passed"], "wall_seconds": r["wall_seconds"],
                  **({"error": r["error"]} if "error" in r else {})} for r in results],
        "versions": versions(),
        "wall_seconds": time.perf_counter() - t0,
        "workers": args.workers,
        "seed": args.seed,
    })
    _print_rows(rows)
    for r in results:
        if "error" in r:
            print(f"ERROR {r['name']}: {r['error']}", file=sys.stderr)
    return 0 if all(row[5] for row in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bmolab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, help="output directory (default runs/<config stem>)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("suite", help="run every config listed in a manifest and write the claims matrix")
    s.add_argument("manifest", type=Path)
    s.add_argument("--out", type=Path, help="output directory (default runs/<manifest stem>)")
    s.add_argument("--workers", type=int, default=1, help="parallel processes (capped at the CPU count)")
    s.add_argument("--seed", type=int, help="override every config seed")
    s.set_defaults(func=cmd_suite)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
