"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .corpus import Question, gen_maps
from .errors import ConfigError, DeskExploreError
from .evaluation import EpisodeResult, build_report
from .experience import ExperienceLibrary
from .harness import (
    ABLATIONS,
    EpisodeLog,
    RunConfig,
    ablate,
    build_experience_set,
    grade_log,
    load_questions,
    make_embedder,
    make_textgen,
    parse_assignments,
    run_all,
)
from .hierarchy import attach_snapshots, build_hierarchy, dump_hierarchy
from .mapping import OccupancyMap, dump_layers, extract_frontiers, integrate_all
from .sim import AgentPose, Sensing, load_map_file, look_around

log = logging.getLogger("deskexplore")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        return json.dumps({"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()})


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO if verbose else logging.WARNING)


def _config(args) -> RunConfig:
    base = RunConfig.from_file(args.config).to_json() if args.config else {}
    base.update(parse_assignments(args.set or []))
    for key in ("questions", "library", "policy", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    return RunConfig.from_dict(base)


def _episodes(cfg: RunConfig):
    if not cfg.questions:
        raise ConfigError("no questions file given (--questions or questions=...)")
    return load_questions(cfg.questions)


def _library(cfg: RunConfig):
    if not cfg.library:
        return None
    try:
        return ExperienceLibrary.load(cfg.library)
    except OSError as exc:
        raise ConfigError(f"cannot read library {cfg.library}: {exc}") from exc


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_gen_maps(args) -> int:
    if args.size < 7:
        raise ConfigError("--size must be >= 7")
    maps = gen_maps(args.seed, args.count, args.size, args.style, args.out)
    log.info("wrote %d maps to %s", len(maps), args.out)
    return EXIT_OK


def cmd_build_experience(args) -> int:
    cfg = _config(args)
    lib = build_experience_set(cfg, _episodes(cfg), make_textgen(cfg.textgen), make_embedder(cfg.embedder))
    _write(args.out, lib.dumps())
    log.info("library holds %d entries", len(lib))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    judge = make_textgen(cfg.judge) if cfg.judge else None
    logs = run_all(cfg, _episodes(cfg), _library(cfg), judge=judge)
    _write(args.out, "".join(lg.dumps() + "\n" for lg in logs))
    if args.report:
        _write(args.report, build_report([lg.result for lg in logs]).dumps())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    judge = make_textgen(args.judge) if args.judge else None
    results = []
    try:
        with open(args.logs, encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read logs {args.logs}: {exc}") from exc
    for ln in lines:
        d = json.loads(ln)
        r = EpisodeResult.from_json(d["result"])
        if judge is not None and r.s is None:
            elog = EpisodeLog(d["config"], d["question"], result=r)
            grade_log(elog, Question.from_json(d["question"]), judge)
        results.append(r)
    if not results:
        raise ConfigError("log file holds no episodes")
    _write(args.out, build_report(results).dumps())
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    toggles = [t.strip() for t in args.toggles.split(",") if t.strip()]
    judge = make_textgen(cfg.judge) if cfg.judge else None
    report = ablate(cfg, toggles, _episodes(cfg), _library(cfg), lambda: make_textgen(cfg.textgen), make_embedder(cfg.embedder), judge)
    _write(args.out, report.table())
    if args.json:
        _write(args.json, json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_dump_hierarchy(args) -> int:
    grid = load_map_file(args.map)
    pose = grid.default_start()
    if args.cell:
        pose = AgentPose(tuple(args.cell), math.radians(args.heading))
    if not grid.is_free(pose.cell):
        raise ConfigError(f"cell {pose.cell} is not free")
    sensing = Sensing()
    occ = integrate_all(OccupancyMap.empty(grid.shape), look_around(grid, pose.cell, sensing))
    frontiers = extract_frontiers(occ, pose.cell, args.tau_min, args.tau_max)
    hier = build_hierarchy(frontiers, pose.cell, args.seed, heading=pose.heading)
    if args.snapshots:
        attach_snapshots(hier, grid, occ, sensing)
    text = dump_hierarchy(hier)
    if args.snapshots:
        for bvf in hier.bvfs:
            text += f"\n# BVF {bvf.b}\n{bvf.snapshot.text_render}\n"
    _write(args.out, text)
    if args.layers:
        _write(args.layers, dump_layers(occ))
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field (repeatable)")
    p.add_argument("--questions", help="questions.json produced by gen-maps")
    p.add_argument("--library", help="experience library (JSONL)")
    p.add_argument("--policy", choices=["hierarchical", "listwise", "pointwise", "pairwise", "oracle"])
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deskexplore", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-maps", help="write a synthetic map corpus and questions.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--size", type=int, default=15)
    p.add_argument("--style", choices=["maze", "rooms"], default="maze")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_gen_maps)

    p = sub.add_parser("build-experience", help="collect trajectories and distil a library")
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="library path (JSONL)")
    p.set_defaults(fn=cmd_build_experience)

    p = sub.add_parser("run", help="run episodes and write their logs")
    _add_run_flags(p)
    p.add_argument("--out", default="-", help="episode logs (JSONL), '-' for stdout")
    p.add_argument("--report", help="also write a metrics report here")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("evaluate", help="aggregate episode logs into a metrics report")
    p.add_argument("--logs", required=True)
    p.add_argument("--judge", help="judge backend: URL or mock script; default is the fallback score only")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="compare toggle settings on the same questions")
    _add_run_flags(p)
    p.add_argument("--toggles", default="full,-replay,-memory,-hierarchy", help=f"comma list from {sorted(ABLATIONS)}")
    p.add_argument("--out", default="-")
    p.add_argument("--json", help="also write the rows as JSON")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("dump-hierarchy", help="sense once and print the frontier hierarchy")
    p.add_argument("--map", required=True)
    p.add_argument("--cell", type=int, nargs=2, metavar=("X", "Y"))
    p.add_argument("--heading", type=float, default=0.0, help="degrees")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau-min", type=int, default=2)
    p.add_argument("--tau-max", type=int, default=8)
    p.add_argument("--snapshots", action="store_true", help="append the BVF text renders")
    p.add_argument("--layers", help="write seen/free/occupied layers as PGM here")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_dump_hierarchy)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DeskExploreError, OSError, ValueError) as exc:
        log.error("runtime fault: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
