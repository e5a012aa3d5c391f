#!/usr/bin/env python3
"""End-to-end demo on synthetic data with the deterministic mock backends.

Runs: ingest -> index build -> hop loop -> context build -> combination
grid -> overlap audit, printing a short summary of each stage. Everything
lands under --workdir (default ./demo_run).

Usage: python scripts/run_pipeline_demo.py [--workdir DIR]
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent


def cli(*args: str) -> dict:
    proc = subprocess.run([sys.executable, "-m", "hopfuse.cli", *args],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr or proc.stdout)
        raise SystemExit(proc.returncode)
    line = proc.stdout.strip().splitlines()[-1]
    return json.loads(line)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="demo_run", type=Path)
    args = parser.parse_args()
    work = args.workdir
    work.mkdir(parents=True, exist_ok=True)

    subprocess.run([sys.executable, str(HERE / "make_toy_data.py"),
                    "--out", str(work / "data")], check=True)

    stats = cli("corpus", "ingest",
                "--input", str(work / "data" / "paragraphs.jsonl"),
                "--output", str(work / "corpus.bin"))
    print("ingest:", stats["stats"])

    built = cli("index", "build", "--corpus", str(work / "corpus.bin"),
                "--output", str(work / "vectors.bin"), "--dim", "128")
    print(f"index: {built['count']} vectors, dim {built['dim']}")

    trace = cli("iterate", "--corpus", str(work / "corpus.bin"),
                "--index", str(work / "vectors.bin"),
                "--questions", str(work / "data" / "questions.jsonl"),
                "--output", str(work / "trace.jsonl"),
                "--k", "8", "--t-max", "3", "--dim", "128", "--workers", "4")
    print(f"iterate: {trace['questions']} questions, {trace['failures']} failures")

    contexts = cli("build-context", "--corpus", str(work / "corpus.bin"),
                   "--trace", str(work / "trace.jsonl"),
                   "--output", str(work / "contexts.jsonl"))
    print(f"build-context: {contexts['records']} contexts")

    combo = cli("combine", "--rationales", str(work / "data" / "rationales.jsonl"),
                "--contexts", str(work / "contexts.jsonl"),
                "--grid", "--output-dir", str(work / "variants"))
    print(f"combine: {combo['variants']} dataset variants under {work / 'variants'}")

    audit = cli("audit", "--eval", str(work / "data" / "eval.jsonl"),
                "--train", str(work / "data" / "train.jsonl"),
                "--output", str(work / "audit_report.json"),
                "--nearest-csv", str(work / "audit_nearest.csv"))
    print("audit:", audit["counts"])

    first_context = json.loads((work / "contexts.jsonl").read_text().splitlines()[0])
    print("\nsample context:")
    print(" ", first_context["context"][:300])


if __name__ == "__main__":
    main()
