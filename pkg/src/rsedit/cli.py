"""Command-line entry points: ingest, register, instruct, edit, eval, stats.

Exit codes: 0 success, 2 instruction parse error, 3 I/O error, 4 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import imaging
from .diffusion import BlobWorld, GuidanceScales, NoiseSchedule, OracleDenoiser
from .instruction import FindingState, ParseError, generate_instructions, parse_instruction, render_instruction
from .maskreg import MaskRegistry
from .metrics import (
    MetricReport,
    PathologyDistribution,
    SyntheticPathologyProbe,
    auroc,
    cmig,
    embed_and_fit,
    frechet_distance,
    kl_divergence,
    mean_probabilities,
    pearson,
)
from .pipeline import (
    ManifestConfig,
    build_manifest,
    compute_stats,
    read_manifest,
    read_records,
    write_json,
    write_manifest,
)
from .registration import RegistrationConfig, register_rigid, warp
from .rse import EditConfig, edit
from .synthetic import default_registry_json, default_world_json

EXIT_OK, EXIT_PARSE, EXIT_IO, EXIT_CONFIG = 0, 2, 3, 4
PROBE_CLASSES = ("atelectasis", "cardiomegaly", "edema", "pleural_effusion", "pneumothorax")

log = logging.getLogger("rsedit")


class ConfigError(ValueError):
    pass


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=0, help="run seed (default: %(default)s)")
    p.add_argument("--canvas", type=int, default=512, help="square working resolution (default: %(default)s)")
    p.add_argument("--out-dir", type=Path, default=None, help="directory for artifacts")


def _registration_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mi-bins", type=int, default=64)
    p.add_argument("--mi-threshold", type=float, default=-0.88)
    p.add_argument("--reg-restarts", type=int, default=8)


def _registration_config(args) -> RegistrationConfig:
    return RegistrationConfig(
        bins=args.mi_bins, threshold=args.mi_threshold, restarts=args.reg_restarts
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsedit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build an edit manifest from longitudinal pair records")
    p.add_argument("--records", type=Path, required=True, help="pair records JSONL")
    p.add_argument("--view", default="PA", help="view label to keep (default: %(default)s)")
    _shared(p)
    _registration_flags(p)

    p = sub.add_parser("register", help="rigidly align one image pair and gate it by MI")
    p.add_argument("--fixed", type=Path, required=True)
    p.add_argument("--moving", type=Path, required=True)
    _shared(p)
    _registration_flags(p)

    p = sub.add_parser("instruct", help="diff two finding sets into an instruction")
    p.add_argument("--past", default="[]", help="JSON list of finding states")
    p.add_argument("--current", default="[]", help="JSON list of finding states")
    p.add_argument("--text", default=None, help="parse and canonicalise an instruction instead")

    p = sub.add_parser("edit", help="region-specific edit of one image")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--instruction", required=True)
    p.add_argument("--mask", type=Path, default=None, help="registry .json or binary user mask .png")
    p.add_argument("--world", type=Path, default=None, help="BlobWorld JSON (default: built-in layout)")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--s-image", type=float, default=1.5)
    p.add_argument("--s-text", type=float, default=7.5)
    p.add_argument("--t-rel", type=int, default=500)
    p.add_argument("--steps", type=int, default=50)
    _shared(p)

    p = sub.add_parser("eval", help="compute a metric report for generated images")
    p.add_argument("--reference", type=Path, required=True, help="directory of real images")
    p.add_argument("--generated", type=Path, required=True, help="directory of generated images")
    p.add_argument("--scores", type=Path, default=None, help="probe score JSON for accuracy/retention")
    p.add_argument("--distributions", type=Path, default=None, help="pathology distribution JSON for KL")
    _shared(p)

    p = sub.add_parser("stats", help="dataset statistics for a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    _shared(p)
    return parser


def cmd_ingest(args) -> int:
    records = read_records(args.records)
    cfg = ManifestConfig(canvas=args.canvas, view=args.view, registration=_registration_config(args))
    entries, stats = build_manifest(records, cfg, base_dir=args.records.parent)
    out = args.out_dir or args.records.parent
    write_manifest(out / "manifest.jsonl", entries)
    write_json(out / "stats.json", stats.to_json())
    _emit({"status": "ok" if entries else "empty", "entries": len(entries), **stats.to_json()})
    return EXIT_OK


def cmd_register(args) -> int:
    cfg = ManifestConfig(canvas=args.canvas)
    fixed = imaging.read_png(args.fixed)
    moving = imaging.read_png(args.moving)
    fixed = imaging.bilateral_filter(imaging.resize(fixed, cfg.canvas, cfg.canvas), 2.0, 50.0)
    moving_raw = imaging.resize(moving, cfg.canvas, cfg.canvas)
    moving = imaging.bilateral_filter(moving_raw, 2.0, 50.0)
    result = register_rigid(fixed, moving, _registration_config(args))
    if args.out_dir is not None:
        imaging.write_png(args.out_dir / "aligned.png", warp(moving_raw, result.transform)[0])
        write_json(args.out_dir / "registration.json", result.to_dict())
    _emit(result.to_dict())
    return EXIT_OK


def cmd_instruct(args) -> int:
    if args.text is not None:
        instrs = parse_instruction(args.text)
    else:
        try:
            past = [FindingState.from_dict(d) for d in json.loads(args.past)]
            current = [FindingState.from_dict(d) for d in json.loads(args.current)]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad finding list: {exc}") from None
        instrs = generate_instructions(past, current)
    _emit({"text": render_instruction(instrs), "instructions": [i.to_dict() for i in instrs]})
    return EXIT_OK


def _load_world(path: Path | None, canvas: int) -> BlobWorld:
    obj = json.loads(path.read_text()) if path else default_world_json(canvas)
    try:
        world = BlobWorld.from_json(obj)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed world file: {exc}") from None
    world.check_canvas(canvas, canvas)
    return world


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_edit(args) -> int:
    text = parse_instruction(args.instruction)
    cfg = EditConfig(
        tau=args.tau,
        scales=GuidanceScales(args.s_image, args.s_text),
        t_rel=args.t_rel,
        steps=args.steps,
        seed=args.seed,
    )
    if args.canvas <= 0:
        raise ConfigError("canvas must be positive")
    image = imaging.resize(imaging.read_png(args.image), args.canvas, args.canvas)
    image = np.clip(image, 0.0, 1.0)
    registry, user_mask = None, None
    if args.mask is None:
        registry = MaskRegistry.from_json(default_registry_json(args.canvas))
    elif args.mask.suffix.lower() == ".json":
        registry = MaskRegistry.load(args.mask)
    else:
        user_mask = imaging.read_png(args.mask)
    world = _load_world(args.world, args.canvas)
    sched = NoiseSchedule()
    if cfg.t_rel > sched.T or cfg.steps > sched.T:
        raise ConfigError(f"t_rel and steps must not exceed T={sched.T}")

    result = edit(image, text, cfg, OracleDenoiser(world, sched), sched, registry, user_mask)

    out = args.out_dir or Path(".")
    imaging.write_png(out / "edited.png", result.image)
    imaging.write_rgb_png(out / "guidance.png", imaging.render_overlay(image, result.guidance))
    imaging.write_raw(out / "guidance.bin", result.guidance, "guidance")
    imaging.write_png(out / "mask.png", result.mask)
    artifacts = ["edited.png", "guidance.png", "guidance.bin", "guidance.json", "mask.png"]
    run = {
        "schema": 1,
        "image": str(args.image),
        "instruction": render_instruction(text),
        "instructions": [i.to_dict() for i in text],
        "tau": cfg.tau,
        "s_image": cfg.scales.s_image,
        "s_text": cfg.scales.s_text,
        "t_rel": cfg.t_rel,
        "steps": cfg.steps,
        "seed": cfg.seed,
        "canvas": args.canvas,
        "mask_pixels": int(result.mask.sum()),
        "artifacts": {name: _sha256(out / name) for name in artifacts},
    }
    write_json(out / "edit.json", run)
    _emit({"status": "ok", "out_dir": str(out), "mask_pixels": run["mask_pixels"],
           "instruction": run["instruction"]})
    return EXIT_OK


def _load_dir(path: Path) -> list[np.ndarray]:
    if not path.is_dir():
        raise FileNotFoundError(f"no such directory: {path}")
    files = sorted(path.glob("*.png"))
    if not files:
        raise FileNotFoundError(f"no PNG images in {path}")
    return [imaging.read_png(f) for f in files]


def _metric_value(name: str, value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    if "labels" in value:
        return auroc(value["labels"], value["scores"])
    if "x" in value:
        # negative correlation means no retention at all
        return max(0.0, pearson(value["x"], value["y"]))
    raise ConfigError(f"metric {name!r} needs labels/scores or x/y")


def cmd_eval(args) -> int:
    reference = _load_dir(args.reference)
    generated = _load_dir(args.generated)
    report = MetricReport(n=len(generated))
    if args.scores is not None:
        scores = json.loads(args.scores.read_text())
        report.accuracy = {k: _metric_value(k, v) for k, v in scores.get("accuracy", {}).items()}
        report.retention = {k: _metric_value(k, v) for k, v in scores.get("retention", {}).items()}
        if report.accuracy and report.retention:
            report.cmig = cmig(list(report.accuracy.values()), list(report.retention.values()))
    if args.distributions is not None:
        d = json.loads(args.distributions.read_text())
        real_classes = d.get("real_classes", d.get("classes"))
        gen_classes = d.get("generated_classes", d.get("classes"))
        p = PathologyDistribution(tuple(real_classes), tuple(d["real"]))
        q = PathologyDistribution(tuple(gen_classes), tuple(d["generated"]))
    else:
        probe = SyntheticPathologyProbe(PROBE_CLASSES, seed=args.seed)
        p = mean_probabilities(probe, reference)
        q = mean_probabilities(probe, generated)
    report.kl = kl_divergence(p, q)
    report.fid = frechet_distance(embed_and_fit(reference), embed_and_fit(generated))
    if args.out_dir is not None:
        write_json(args.out_dir / "report.json", report.to_json())
    print(report.dumps())
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = compute_stats(read_manifest(args.manifest))
    if args.out_dir is not None:
        write_json(args.out_dir / "stats.json", stats.to_json())
    _emit(stats.to_json())
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "register": cmd_register,
    "instruct": cmd_instruct,
    "edit": cmd_edit,
    "eval": cmd_eval,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
