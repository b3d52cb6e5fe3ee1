"""Command-line front end: curate, fit, generate, eval and config."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import mol
from .assembly import assemble, scene_rng
from .config import EngineConfig, load_config
from .curation import curate
from .errors import EmptyScene, ParseError, PlacementFailure, ProcSceneError
from .hierarchy import generate, load_hierarchy, load_stats, save_stats
from .metrics import (
    aggregate,
    colliding_objects,
    floating_objects,
    metrics_csv,
    scene_metrics,
)
from .predictor import fit_table, load_params, save_params, training_groups
from .records import read_records, write_records
from .scene import dumps_json, export_obj, load_scene, load_scene_corpus, save_scene, write_atomic

logger = logging.getLogger("procscene")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_PLACEMENT = 3


def _config(args) -> EngineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "scenes", None) is not None:
        cfg.scene_count = args.scenes
    if getattr(args, "no_rejection", False):
        cfg.assembly.rejection_enabled = False
    if getattr(args, "no_gravity", False):
        cfg.assembly.gravity_enabled = False
    cfg.validate()
    return cfg


def cmd_curate(args) -> int:
    cfg = _config(args)
    src = Path(args.corpus)
    if not src.exists():
        raise FileNotFoundError(f"corpus not found: {src}")
    scenes = load_scene_corpus(src)
    if not scenes:
        logger.warning("corpus %s is empty", src)
    records, stats, report = curate(scenes, cfg.curation_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(records, out / "records.jsonl")
    save_stats(stats, out / "stats.json")
    for line in report.lines():
        print(line)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    records = read_records(args.records)
    f = cfg.fit
    table = fit_table(
        records, k=f.k, lam=f.lam, min_count=f.min_count, tol=f.tol, max_iters=f.max_iters,
        seed=cfg.master_seed, workers=args.parallel,
    )
    groups = training_groups(records)
    for key in sorted(table.entries, key=lambda k: k.sort_key()):
        nll = mol.mean_nll(table.entries[key], groups[key])
        print(f"{key}\tn={table.counts[key]}\tmean_nll={nll:.6f}")
    skipped = [k for k in groups if k not in table.entries]
    if skipped:
        print(f"{len(skipped)} key(s) below min_count={f.min_count} left to fallback")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_params(table, out)
    return EXIT_OK


def _generate_one(i: int, cfg: EngineConfig, table, stats, fixed_spec, out: Path) -> str:
    rng = scene_rng(cfg.master_seed, i)
    if fixed_spec is not None:
        spec = fixed_spec
    else:
        g = cfg.generation
        spec = generate(g.scene_type, stats, g.n_max, g.k, rng, cfg.templates)
    name = f"scene_{i:04d}"
    scene, report = assemble(
        spec, table, cfg.asset_library, cfg.boundary(), cfg.assembly_config(), rng, scene_id=name
    )
    save_scene(scene, out / f"{name}.json")
    write_atomic(out / f"{name}.obj", export_obj(scene))
    write_atomic(out / f"{name}.report.json", dumps_json(report.to_doc()))
    return f"{name}: placed {report.placed}/{len(report.objects)}, acceptance {report.acceptance_rate:.3f}"


def cmd_generate(args) -> int:
    cfg = _config(args)
    if (args.stats is None) == (args.hierarchy is None):
        raise ParseError("give exactly one of --stats or --hierarchy", field="--stats/--hierarchy")
    table = load_params(args.params)
    stats = load_stats(args.stats) if args.stats else None
    spec = load_hierarchy(args.hierarchy) if args.hierarchy else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    work = range(cfg.scene_count)
    if args.parallel > 1:
        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            lines = list(pool.map(lambda i: _generate_one(i, cfg, table, stats, spec, out), work))
    else:
        lines = [_generate_one(i, cfg, table, stats, spec, out) for i in work]
    for line in lines:
        print(line)
    return EXIT_OK


def _scene_files(scene_dir: Path) -> list[Path]:
    return sorted(p for p in scene_dir.glob("*.json") if not p.name.endswith(".report.json"))


def cmd_eval(args) -> int:
    from .plotting import save_layouts, save_metric_histograms

    scene_dir = Path(args.scene_dir)
    if not scene_dir.is_dir():
        raise FileNotFoundError(f"not a directory: {scene_dir}")
    files = _scene_files(scene_dir)
    if not files:
        print(f"error: no scene documents in {scene_dir}", file=sys.stderr)
        return EXIT_VALIDATION
    rows, ok, scenes, flags = [], [], [], {}
    for path in files:
        try:
            scene = load_scene(path)
        except (ParseError, OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping %s: %s", path.name, exc)
            rows.append((path.stem, None, "unreadable"))
            continue
        try:
            m = scene_metrics(scene, args.eps)
        except EmptyScene:
            rows.append((scene.id, None, "empty"))
            continue
        rows.append((scene.id, m, "ok"))
        ok.append(m)
        scenes.append(scene)
        flags[scene.id] = (colliding_objects(scene), floating_objects(scene, args.eps))
    summary = aggregate(ok) if ok else None
    text = metrics_csv(rows, summary)
    out = Path(args.out) if args.out else scene_dir
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "metrics.csv", text)
    if ok:
        save_layouts(scenes, out / "layouts.png", flags)
        save_metric_histograms(ok, out / "metric_histograms.png")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_config(args) -> int:
    if args.action == "print-defaults":
        from .fixtures import bedroom_config

        sys.stdout.write(bedroom_config().dumps())
        return EXIT_OK
    cfg = _config(args)
    if args.action == "validate":
        print("ok")
        return EXIT_OK
    # fixture: write a raw synthetic corpus plus the config that produced it
    from .fixtures import strip_relations, synthetic_corpus

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = synthetic_corpus(cfg.scene_count, cfg.master_seed)
    for scene in corpus:
        save_scene(strip_relations(scene), out / f"{scene.id}.json")
    write_atomic(out.parent / f"{out.name}_config.json", cfg.dumps())
    print(f"wrote {len(corpus)} scene(s) to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="engine configuration document (JSON); defaults to the bedroom fixture")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="procscene", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", parents=[common], help="extract relation records and statistics from scenes")
    p.add_argument("corpus", help="directory of scene documents or a {'scenes': [...]} file")
    p.add_argument("--out", required=True, help="output directory for records.jsonl and stats.json")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("fit", parents=[common], help="fit one mixture per relation key")
    p.add_argument("records", help="records.jsonl from curate")
    p.add_argument("--out", required=True, help="parameter file to write")
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("generate", parents=[common], help="build hierarchies and assemble scenes")
    p.add_argument("--params", required=True)
    p.add_argument("--stats", help="statistics document for hierarchy generation")
    p.add_argument("--hierarchy", help="fixed hierarchy document used for every scene")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, help="override the scene count")
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    p.add_argument("--no-rejection", action="store_true", help="accept the first draw (ablation)")
    p.add_argument("--no-gravity", action="store_true", help="skip vertical settling (ablation)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", parents=[common], help="score scenes and render figures")
    p.add_argument("scene_dir")
    p.add_argument("--out", help="report directory (default: scene_dir)")
    p.add_argument("--eps", type=float, default=0.01, help="floating tolerance in metres")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("config", parents=[common], help="print, validate or export the fixture")
    p.add_argument("action", choices=["print-defaults", "validate", "fixture"])
    p.add_argument("--out", help="corpus directory for 'fixture'")
    p.add_argument("--scenes", type=int, help="override the scene count")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "config" and args.action == "fixture" and not args.out:
        parser.error("config fixture needs --out")
    try:
        return args.func(args)
    except PlacementFailure as exc:
        print(f"error: placement aborted: {exc}", file=sys.stderr)
        return EXIT_PLACEMENT
    except (ProcSceneError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
