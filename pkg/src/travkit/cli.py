"""Command line interface.

Subcommands:
  analyze   one rectified stereo pair -> classification artifacts + summary
  sequence  a directory of numbered pairs -> per-frame results
  synth     render a synthetic scene (file or preset) with ground truth

Every config key can be overridden with a flag of the same name
(e.g. ``--alpha_max 0.6``) or the TRAVKIT_<KEY> environment variable.
Exit code 0 covers successful runs including rejected frames; errors
return 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import imgio, report
from .config import KNOWN_KEYS, load_config
from .harness import preset_scene, render_scene, scene_from_text, scene_to_text, rig_config
from .pipeline import DUMP_KINDS, run_frame, run_sequence

logger = logging.getLogger("travkit")


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides (any config key)")
    for key in KNOWN_KEYS:
        group.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VALUE", default=None)


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    overrides = {}
    for key in KNOWN_KEYS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = value
    return overrides


def _parse_dumps(text: str | None, out_given: bool) -> tuple[str, ...]:
    if text is None:
        return DUMP_KINDS if out_given else ()
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    unknown = set(kinds) - set(DUMP_KINDS)
    if unknown:
        raise SystemExit(f"error: unknown dump kinds {sorted(unknown)}; choose from {DUMP_KINDS}")
    return kinds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="travkit",
        description="Stereo terrain traversability analysis",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="process one rectified stereo pair")
    analyze.add_argument("--config", required=True, help="key=value config file")
    analyze.add_argument("--left", required=True)
    analyze.add_argument("--right", required=True)
    analyze.add_argument("--out", default=None, help="artifact directory")
    analyze.add_argument("--dump", default=None, help=f"comma list of {','.join(DUMP_KINDS)}")
    analyze.add_argument("--matcher", choices=("bb", "acso"), default=None)
    analyze.add_argument("--frame-id", default="frame")
    _add_config_overrides(analyze)

    sequence = sub.add_parser("sequence", help="process a directory of numbered pairs")
    sequence.add_argument("--config", required=True)
    sequence.add_argument("--dir", required=True, help="directory of <index>_left/right images")
    sequence.add_argument("--out", default=None)
    sequence.add_argument("--dump", default=None)
    sequence.add_argument("--matcher", choices=("bb", "acso"), default=None)
    _add_config_overrides(sequence)

    synth = sub.add_parser("synth", help="render a synthetic scene with ground truth")
    source = synth.add_mutually_exclusive_group(required=True)
    source.add_argument("--scene", help="scene spec file")
    source.add_argument("--preset", help="built-in scene name (e.g. floor_wall)")
    synth.add_argument("--out", required=True)

    return parser


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = load_config(Path(args.config), overrides=_collect_overrides(args))
    left = imgio.read_gray(args.left)
    right = imgio.read_gray(args.right)
    dumps = _parse_dumps(args.dump, args.out is not None)
    result = run_frame(
        left,
        right,
        config,
        out_dir=args.out,
        dumps=dumps,
        matcher=args.matcher,
        frame_id=args.frame_id,
    )
    record = result.to_record()
    print(report.summary_line(record))
    if args.out is not None:
        report.write_summary(Path(args.out) / "summary.jsonl", [record])
    if not result.accepted:
        logger.info("frame rejected: %s", result.reject_reason)
    return 0


def _cmd_sequence(args: argparse.Namespace) -> int:
    config = load_config(Path(args.config), overrides=_collect_overrides(args))
    dumps = _parse_dumps(args.dump, args.out is not None)
    records = run_sequence(
        args.dir, config, out_dir=args.out, dumps=dumps, matcher=args.matcher
    )
    for record in records:
        print(report.summary_line(record))
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    if args.preset:
        spec, config = preset_scene(args.preset)
    else:
        spec = scene_from_text(Path(args.scene).read_text())
        config = rig_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    left, right, truth = render_scene(spec, config.traversability)
    imgio.write_gray8(out / "0_left.png", left)
    imgio.write_gray8(out / "0_right.png", right)
    np.savez_compressed(
        out / "truth.npz",
        disparity=truth.disparity,
        normals=truth.normals.vectors,
        normals_valid=truth.normals.valid,
        labels=truth.labels.labels,
        classes=truth.classes,
        visible=truth.visible,
    )
    (out / "scene.cfg").write_text(scene_to_text(spec))
    logger.info("scene written to %s", out)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handlers = {"analyze": _cmd_analyze, "sequence": _cmd_sequence, "synth": _cmd_synth}
    try:
        return handlers[args.command](args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
