#!/usr/bin/env python3
"""Write a full set of hash-kind checkpoints plus a serve config.

Usage: python scripts/make_hash_checkpoints.py [--out DIR] [--dim D] [--seed S]
Then:  hopfuse-server --config DIR/serve.json
"""

import argparse
import json
from pathlib import Path


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="checkpoints", type=Path)
    parser.add_argument("--dim", default=256, type=int)
    parser.add_argument("--seed", default=0, type=int)
    args = parser.parse_args()

    for role in ("encoder", "rerank", "evidence", "rr"):
        role_dir = args.out / role
        role_dir.mkdir(parents=True, exist_ok=True)
        config = {"kind": "hash", "seed": args.seed}
        if role == "encoder":
            config["dim"] = args.dim
        (role_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n")

    serve = {
        "encoder_checkpoint": str(args.out / "encoder"),
        "rerank_checkpoint": str(args.out / "rerank"),
        "evidence_checkpoint": str(args.out / "evidence"),
        "rr_checkpoint": str(args.out / "rr"),
        "dim": args.dim,
    }
    (args.out / "serve.json").write_text(json.dumps(serve, indent=2) + "\n")
    print(f"wrote checkpoints and serve config under {args.out}/")


if __name__ == "__main__":
    main()
