"""Command-line entry point: generate, split, validate, augment, eval, train, report.

One executable drives the whole pipeline so runs are reproducible from a
single audited invocation. Every stochastic step is determined by --seed;
--threads caps kernel parallelism without changing any output bytes.

Options may also come from a config file of ``key = value`` lines (keys are
the long flag names with underscores); explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import baseline, dataset, mask_codec, mesh_io, metrics, render, taxonomy
from ._config import ConfigError, read_kv_lines

THREADS_ENV = "ORBITSEG_THREADS"

_ERRORS = (ConfigError, dataset.DatasetError, mesh_io.MeshError,
           taxonomy.TaxonomyError, mask_codec.MaskCodecError,
           baseline.BaselineError, ValueError, OSError)


def _apply_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if not env:
            return
        n = int(env)
    if n < 1:
        raise ValueError("--threads must be >= 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _explicit_dests(parser: argparse.ArgumentParser, argv: list[str]) -> set[str]:
    """Dests the user actually passed, so config-file values never override flags."""
    out = set()
    for action in parser._actions:
        for opt in action.option_strings:
            if any(a == opt or a.startswith(opt + "=") for a in argv):
                out.add(action.dest)
    return out


def _load_config_overrides(args: argparse.Namespace, parser: argparse.ArgumentParser,
                           argv: list[str]) -> None:
    if not getattr(args, "config", None):
        return
    sub = parser._orbitseg_subs[args.command]  # options live on the subparser
    explicit = _explicit_dests(sub, argv)
    by_dest = {a.dest: a for a in sub._actions}
    for lineno, key, value in read_kv_lines(args.config):
        dest = key.replace("-", "_")
        if dest not in by_dest or dest in ("config", "help"):
            raise ConfigError(f"{args.config}:{lineno}: unknown option {key!r}")
        if dest in explicit:
            continue
        action = by_dest[dest]
        try:
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                parsed = value.strip().lower() in ("1", "true", "yes", "on")
            elif action.nargs in ("*", "+") or isinstance(action, argparse._AppendAction):
                parsed = [action.type(v) if action.type else v for v in value.split()]
            else:
                parsed = action.type(value) if action.type else value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{args.config}:{lineno}: bad value for {key!r}: {exc}") from None
        if action.choices is not None and parsed not in action.choices:
            raise ConfigError(f"{args.config}:{lineno}: {key!r} must be one of "
                              f"{tuple(action.choices)}")
        setattr(args, dest, parsed)


def _parse_floats_arg(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _load_taxonomy(path: str | None):
    return taxonomy.load_taxonomy(path) if path else taxonomy.default_taxonomy()


def _load_meshes(mesh_paths, map_paths, tax):
    if not mesh_paths:
        raise ValueError("at least one --mesh is required")
    if map_paths and len(map_paths) not in (1, len(mesh_paths)):
        raise ValueError("--map count must be 1 or match --mesh count")
    meshes = {}
    for i, mp in enumerate(mesh_paths):
        mp = Path(mp)
        map_path = Path(map_paths[i % len(map_paths)]) if map_paths else mp.with_suffix(".materials")
        cmap = mesh_io.load_material_map(map_path, tax)
        mesh = mesh_io.load_annotated_mesh(mp, cmap, tax)
        name = mp.stem
        if name in meshes:
            raise ValueError(f"duplicate mesh name {name!r}")
        meshes[name] = mesh
    return meshes


def _manifest_taxonomy(manifest, taxonomy_flag):
    if taxonomy_flag:
        return taxonomy.load_taxonomy(taxonomy_flag)
    tax_path = manifest.resolve(manifest.taxonomy_file)
    if tax_path.is_file():
        return taxonomy.load_taxonomy(tax_path)
    return taxonomy.default_taxonomy()


def _cmd_generate(args) -> int:
    tax = _load_taxonomy(args.taxonomy)
    meshes = _load_meshes(args.mesh, args.map or [], tax)
    config = dataset.GenConfig(
        n_positions=args.n_positions, range_multipliers=args.ranges,
        width=args.width, height=args.height,
        base_distance_factor=args.base_distance,
        vertical_fov=math.radians(args.fov_deg),
        supersample=args.supersample, pose_mode=args.pose_mode)
    if args.scene:
        scene = render.load_scene(args.scene)
    else:
        scene = render.default_scene(max(m.sphere_radius for m in meshes.values()))
    unknown = tuple(args.unknown_target or ())

    if args.dry_run:
        total = 0
        for name in sorted(meshes):
            mesh = meshes[name]
            n = config.n_positions * len(config.range_multipliers)
            total += n
            tag = " [unknown_target]" if name in unknown else ""
            print(f"{name}: {len(mesh.triangles)} triangles, "
                  f"{config.n_positions} positions x {len(config.range_multipliers)} ranges "
                  f"= {n} pairs at {config.width}x{config.height}{tag}")
        print(f"total: {total} rgb+mask pairs -> {args.out} (dry run, nothing written)")
        return 0

    manifest = dataset.generate_dataset(meshes, scene, config, tax, args.seed,
                                        args.out, unknown_targets=unknown)
    print(f"wrote {len(manifest.records)} pairs under {args.out} "
          f"(config hash {manifest.config_hash[:12]})")
    return 0


def _cmd_split(args) -> int:
    manifest = dataset.read_manifest(args.manifest)
    result = dataset.split_manifest(manifest, fractions=args.fractions, seed=args.seed)
    out = Path(args.out) if args.out else Path(args.manifest)
    dataset.write_manifest(result, out)
    counts = result.counts_by_split()
    summary = ", ".join(f"{k}={v}" for k, v in counts.items() if v)
    print(f"wrote {out}: {summary}")
    return 0


def _cmd_validate(args) -> int:
    manifest = dataset.read_manifest(args.manifest)
    tax = _manifest_taxonomy(manifest, args.taxonomy)
    report = dataset.validate_manifest(manifest, tax)
    if args.json:
        print(json.dumps({
            "records": report.record_count,
            "failures": report.failures,
            "pixel_total": report.pixel_total,
            "pixel_counts": {tax.name_of(k): int(report.pixel_counts[k])
                             for k in range(tax.num_classes)},
            "case_counts": {tax.name_of(k): int(report.case_counts[k])
                            for k in range(tax.num_classes)},
        }, indent=2))
    else:
        print(f"records: {report.record_count}")
        for f in report.failures:
            print(f"FAIL {f}")
        print(f"pixels: {report.pixel_total}")
        width = max(len(tax.name_of(k)) for k in range(tax.num_classes))
        print(f"{'class'.ljust(width)}  {'pixels':>12}  {'cases':>8}")
        for k in range(tax.num_classes):
            print(f"{tax.name_of(k).ljust(width)}  {report.pixel_counts[k]:>12}  "
                  f"{report.case_counts[k]:>8}")
    if report.failures:
        print(f"error: {len(report.failures)} validation failure(s)", file=sys.stderr)
        return 1
    return 0


def _cmd_augment(args) -> int:
    from PIL import Image
    tax = _load_taxonomy(args.taxonomy)
    with Image.open(args.rgb) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    mask = mask_codec.decode_mask(args.mask, tax)
    policy = dataset.AugmentationPolicy(p_flip=args.p_flip, p_transpose=args.p_transpose,
                                        p_rotate=args.p_rotate, rotate_mode=args.rotate_mode)
    ops = dataset.sample_augmentation(policy, args.seed)
    out_rgb, out_mask = dataset.apply_augmentation(rgb, mask.data, ops)
    Image.fromarray(out_rgb, mode="RGB").save(args.out_rgb, format="PNG")
    mask_codec.encode_mask(mask_codec.CategoricalMask(out_mask), tax, args.out_mask)
    applied = []
    if ops.flip:
        applied.append("flip")
    if ops.transpose:
        applied.append("transpose")
    if ops.quarter_turns:
        applied.append(f"rotate{90 * ops.quarter_turns}")
    if ops.angle_deg:
        applied.append(f"rotate{ops.angle_deg:.1f}")
    print(f"applied: {'+'.join(applied) if applied else 'identity'}")
    return 0


def _dice_from_dirs(pred_dir: Path, truth_dir: Path, tax) -> metrics.DiceReport:
    pred_files = {p.relative_to(pred_dir).as_posix(): p for p in sorted(pred_dir.rglob("*.png"))}
    truth_files = {p.relative_to(truth_dir).as_posix(): p for p in sorted(truth_dir.rglob("*.png"))}
    if not truth_files:
        raise ValueError(f"no .png masks under {truth_dir}")
    missing = sorted(set(truth_files) - set(pred_files))
    if missing:
        raise ValueError(f"prediction missing for {missing[0]} "
                         f"({len(missing)} of {len(truth_files)} absent)")
    total = metrics.ConfusionTally.zero(tax.num_classes)
    for rel, tpath in sorted(truth_files.items()):
        pred = mask_codec.decode_mask(pred_files[rel], tax)
        truth = mask_codec.decode_mask(tpath, tax)
        total = total + metrics.tally(pred, truth, tax.num_classes)
    return metrics.dice_scores(total, "exclude")


def _print_report(reports: dict[str, metrics.DiceReport], tax, args) -> None:
    if getattr(args, "json", False):
        payload = {}
        for name, rep in reports.items():
            payload[name] = {
                "macro_average": rep.macro_average,
                "dice": {tax.name_of(k): (None if np.isnan(rep.dice[k]) else float(rep.dice[k]))
                         for k in range(rep.num_classes)},
            }
        print(json.dumps(payload, indent=2))
    else:
        fmt = "csv" if getattr(args, "csv", False) else "text"
        print(metrics.report_table(reports, tax, fmt=fmt), end="")


def _cmd_eval(args) -> int:
    if bool(args.pred) != bool(args.truth):
        raise ValueError("--pred and --truth must be given together")
    if args.pred:
        tax = _load_taxonomy(args.taxonomy)
        report = _dice_from_dirs(Path(args.pred), Path(args.truth), tax)
    elif args.model and args.manifest:
        manifest = dataset.read_manifest(args.manifest)
        tax = _manifest_taxonomy(manifest, args.taxonomy)
        model = baseline.load_model(args.model)
        frames = dataset.load_split(manifest, args.split, tax)
        if not frames:
            raise ValueError(f"manifest has no {args.split!r} frames")
        report = baseline.evaluate(model, frames, tax, absent_policy=args.absent_policy)
    else:
        raise ValueError("either --pred/--truth or --model/--manifest is required")
    _print_report({"eval": report}, tax, args)
    return 0


def _cmd_train(args) -> int:
    manifest = dataset.read_manifest(args.manifest)
    tax = _manifest_taxonomy(manifest, args.taxonomy)
    frames = dataset.load_split(manifest, args.split, tax)
    if not frames:
        raise ValueError(f"manifest has no {args.split!r} frames")
    val_frames = dataset.load_split(manifest, args.val_split, tax) if args.val_split else None
    params = baseline.LossParams(gamma=args.gamma, alpha=args.alpha, epsilon=args.epsilon)
    config = baseline.TrainConfig(loss=args.loss, learning_rate=args.lr,
                                  epochs=args.epochs, batch_size=args.batch_size,
                                  seed=args.seed, loss_params=params,
                                  patience=args.patience)
    featurizer = None
    if args.norm_mean and args.norm_std:
        featurizer = baseline.PixelFeaturizer(window=args.window,
                                              mean=args.norm_mean, std=args.norm_std)
    elif args.window != 3:
        mean, std = baseline.fit_normalization(frames)
        featurizer = baseline.PixelFeaturizer(window=args.window, mean=mean, std=std)
    model, history = baseline.train(frames, config, tax, val_frames=val_frames,
                                    featurizer=featurizer)
    baseline.save_model(model, args.out)
    if args.log:
        Path(args.log).write_text(baseline.history_csv(history), encoding="utf-8")
    last = history[-1]
    print(f"trained {args.loss} for {last.epoch} epoch(s); final loss "
          f"{last.train_loss:.6f}; val macro dice {last.val_macro_dice:.4f}; "
          f"model -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    manifest = dataset.read_manifest(args.manifest)
    tax = _manifest_taxonomy(manifest, args.taxonomy)
    model = baseline.load_model(args.model)
    if args.by == "split":
        keys = [s for s in dataset.SPLITS if any(r.split == s for r in manifest.records)]
        groups = {s: [r for r in manifest.records if r.split == s] for s in keys}
    else:
        keys = sorted({r.spacecraft for r in manifest.records})
        groups = {c: [r for r in manifest.records if r.spacecraft == c] for c in keys}
    reports = {}
    for name in keys:
        frames = [dataset.load_frame(manifest, r, tax) for r in groups[name]]
        reports[name] = baseline.evaluate(model, frames, tax,
                                          absent_policy=args.absent_policy)
    _print_report(reports, tax, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbitseg",
        description="Synthetic spacecraft segmentation data: generation, "
                    "splits, augmentation, metrics, and a linear baseline.")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"cap kernel threads (default: ${THREADS_ENV} or all); "
                             "outputs are identical for any value")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("generate", formatter_class=fmt,
                       help="render a paired rgb+mask corpus")
    p.add_argument("--mesh", action="append", help="mesh file (repeatable)")
    p.add_argument("--map", action="append",
                   help="material map for the matching --mesh (repeatable; "
                        "default <mesh>.materials)")
    p.add_argument("--taxonomy", help="taxonomy config (default: built-in 11 classes)")
    p.add_argument("--scene", help="scene config (default: scaled to mesh size)")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--n-positions", type=int, default=5000)
    p.add_argument("--ranges", type=_parse_floats_arg, default=(1.0, 2.0, 3.0),
                   help="comma-separated range multipliers")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--base-distance", type=float, default=2.5,
                   help="near-tier camera distance in bounding radii")
    p.add_argument("--fov-deg", type=float, default=45.0)
    p.add_argument("--supersample", type=int, default=1,
                   help="rgb anti-alias grid (mask always 1 ray/pixel)")
    p.add_argument("--pose-mode", choices=("fibonacci", "random"), default="fibonacci")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unknown-target", action="append",
                   help="mesh name held out as the unknown-target split (repeatable)")
    p.add_argument("--dry-run", action="store_true",
                   help="print the generation plan without rendering")
    p.add_argument("--config", help="key = value defaults file; flags win")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("split", formatter_class=fmt,
                       help="assign train/val/test splits in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output manifest path (default: in place)")
    p.add_argument("--fractions", type=_parse_floats_arg,
                   default=dataset.DEFAULT_SPLIT_FRACTIONS,
                   help="train,val,test fractions; sum <= 1, remainder to train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key = value defaults file; flags win")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("validate", formatter_class=fmt,
                       help="audit a manifest: files, masks, prevalence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy", help="override the manifest's taxonomy file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("augment", formatter_class=fmt,
                       help="apply one seeded augmentation to an rgb+mask pair")
    p.add_argument("--rgb", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out-rgb", required=True)
    p.add_argument("--out-mask", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--p-flip", type=float, default=0.5)
    p.add_argument("--p-transpose", type=float, default=0.5)
    p.add_argument("--p-rotate", type=float, default=0.4)
    p.add_argument("--rotate-mode", choices=dataset.ROTATE_MODES, default="quarter_turns")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("eval", formatter_class=fmt,
                       help="Dice scores from mask directories or a model+manifest")
    p.add_argument("--pred", help="directory of predicted masks")
    p.add_argument("--truth", help="directory of ground-truth masks")
    p.add_argument("--model", help="model checkpoint (with --manifest)")
    p.add_argument("--manifest")
    p.add_argument("--split", default="test")
    p.add_argument("--taxonomy")
    p.add_argument("--absent-policy", choices=metrics.ABSENT_POLICIES, default="exclude")
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--config", help="key = value defaults file; flags win")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train", formatter_class=fmt,
                       help="train the linear baseline on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--val-split", default="val")
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--log", help="per-epoch csv log path")
    p.add_argument("--taxonomy")
    p.add_argument("--loss", choices=sorted(baseline.TRAIN_LOSSES), default="cce")
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=2.0, help="focal exponent")
    p.add_argument("--alpha", type=float, default=1.0, help="dice:focal mixing weight")
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--patience", type=int, default=None,
                   help="stop after this many epochs without val-Dice improvement")
    p.add_argument("--window", type=int, default=3, help="local-mean feature window")
    p.add_argument("--norm-mean", type=_parse_floats_arg,
                   help="fixed r,g,b normalization mean (default: fit on train)")
    p.add_argument("--norm-std", type=_parse_floats_arg,
                   help="fixed r,g,b normalization std")
    p.add_argument("--config", help="key = value defaults file; flags win")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("report", formatter_class=fmt,
                       help="per-split or per-spacecraft Dice table for a model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--by", choices=("split", "spacecraft"), default="split")
    p.add_argument("--taxonomy")
    p.add_argument("--absent-policy", choices=metrics.ABSENT_POLICIES, default="exclude")
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=_cmd_report)

    parser._orbitseg_subs = {name: sp for name, sp in sub.choices.items()}
    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _load_config_overrides(args, parser, argv)
        _apply_threads(args.threads)
        return args.func(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
