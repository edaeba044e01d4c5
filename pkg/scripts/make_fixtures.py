#!/usr/bin/env python3
"""Write a small synthetic longitudinal dataset for the ``ingest`` command.

Produces ``records.jsonl`` plus past/current PNG pairs, a mask registry and
a BlobWorld file. Roughly one pair in five is deliberately unalignable
(noise as the current study) so the MI gate has something to reject, and a
few records carry an AP or missing view label.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from rsedit.imaging import write_png
from rsedit.instruction import SEVERITIES
from rsedit.registration import RigidTransform, apply_rigid
from rsedit.synthetic import ANNOTATED_FINDINGS, default_registry_json, default_world_json, noise_image, phantom


def random_findings(rng):
    k = int(rng.integers(0, 4))
    names = rng.choice(ANNOTATED_FINDINGS, size=k, replace=False)
    return [
        {"finding": str(n), "location": None, "severity": str(rng.choice(SEVERITIES))}
        for n in names
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--pairs", type=int, default=24)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    img_dir = args.out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(args.pairs):
        rid = f"s{i:04d}"
        past = phantom(args.size, rng)
        if rng.uniform() < 0.2:
            current = noise_image(rng, args.size)
        else:
            t = RigidTransform(
                np.radians(rng.uniform(-6, 6)), rng.uniform(0.95, 1.05),
                rng.uniform(-10, 10), rng.uniform(-10, 10),
            )
            current = np.clip(apply_rigid(past, t) + rng.normal(0, 0.01, past.shape), 0, 1)
        write_png(img_dir / f"{rid}_past.png", past)
        write_png(img_dir / f"{rid}_cur.png", current)
        view = rng.choice(["PA"] * 8 + ["AP", ""])
        lines.append({
            "id": rid,
            "patient": f"p{int(rng.integers(0, args.pairs // 2 + 1)):05d}",
            "past": f"images/{rid}_past.png",
            "current": f"images/{rid}_cur.png",
            "view": str(view) or None,
            "past_findings": random_findings(rng),
            "current_findings": random_findings(rng),
        })
    (args.out / "records.jsonl").write_text("".join(json.dumps(r) + "\n" for r in lines))
    (args.out / "registry.json").write_text(json.dumps(default_registry_json(args.size), indent=2) + "\n")
    (args.out / "world.json").write_text(json.dumps(default_world_json(args.size), indent=2) + "\n")
    write_png(args.out / "input.png", phantom(args.size, rng))
    print(f"wrote {len(lines)} records to {args.out}")


if __name__ == "__main__":
    main()
