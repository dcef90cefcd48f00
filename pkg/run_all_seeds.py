#!/usr/bin/env python3
"""
Run the R/C/S ablation for several seeds and average the R+C+S gain.

Exits 1 when the seed-averaged gain is negative at any scale.

Usage:
    python run_all_seeds.py
    python run_all_seeds.py --seeds 0,1,2 --config configs/ablation.json
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

DATASET = Path("data/synthetic")
RUNS = Path("runs/seeds")


def ensure_dataset():
    """Generate the synthetic corpus once if it is missing."""
    if DATASET.exists() and any(DATASET.glob("*.png")):
        return True
    cmd = [sys.executable, "-m", "src.cli", "make-dataset", "--out", str(DATASET)]
    return subprocess.run(cmd).returncode == 0


def run_seed(config_path, seed):
    """Run one ablation with the config's seed replaced; returns the report path or None."""
    with open(config_path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    cfg["seed"] = seed
    seed_dir = RUNS / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    seed_cfg = seed_dir / "config.json"
    with open(seed_cfg, "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2)

    report = seed_dir / "ablation.json"
    cmd = [
        sys.executable, "-m", "src.cli", "ablate",
        "--config", str(seed_cfg),
        "--dataset", str(DATASET),
        "--report", str(report),
    ]
    print(f"\n{'='*80}")
    print(f"Seed: {seed}")
    print(f"{'='*80}")
    result = subprocess.run(cmd)
    return report if result.returncode == 0 else None


def full_model_deltas(report_path):
    with open(report_path, "r", encoding="utf-8") as f:
        data = json.load(f)
    for row in data["rows"]:
        if row["label"] == "R+C+S":
            return {k: float(v) for k, v in row["deltas"].items()}
    return {}


def mean_deltas(deltas):
    """Seed-averaged delta per scale key, in ascending scale order."""
    scales = sorted({k for d in deltas.values() for k in d}, key=float)
    return {k: sum(d[k] for d in deltas.values()) / len(deltas) for k in scales}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    parser.add_argument("--config", default="configs/ablation.json")
    args = parser.parse_args()
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]

    if not ensure_dataset():
        print("[ERROR] could not generate the synthetic dataset")
        sys.exit(1)

    print("\n" + "=" * 80)
    print(f"ABLATION OVER {len(seeds)} SEED(S): {', '.join(map(str, seeds))}")
    print("=" * 80)

    deltas = {}
    failed = []
    for i, seed in enumerate(seeds, 1):
        print(f"\n[{i}/{len(seeds)}] ", end="")
        report = run_seed(args.config, seed)
        if report is None:
            failed.append(seed)
            continue
        deltas[seed] = full_model_deltas(report)

    print("\n" + "=" * 80)
    print("SUMMARY: R+C+S minus all-off, mean PSNR (dB)")
    print("=" * 80)
    if not deltas:
        print("[ERROR] no seed finished")
        sys.exit(2)
    scales = sorted({k for d in deltas.values() for k in d}, key=float)
    for seed, d in deltas.items():
        print(f"  seed {seed}: " + "  ".join(f"x{k} {d[k]:+.3f}" for k in scales))
    averages = mean_deltas(deltas)
    for k, avg in averages.items():
        tag = "OK" if avg >= 0 else "FAIL"
        print(f"[{tag}] x{k} mean delta over {len(deltas)} seed(s): {avg:+.3f} dB")
    regressed = [k for k, avg in averages.items() if avg < 0]
    if failed:
        print(f"[WARN] failed seeds: {failed}")
        sys.exit(2)
    if regressed:
        print(f"[ERROR] R+C+S is below the all-off model at x{', x'.join(regressed)}")
        sys.exit(1)


if __name__ == "__main__":
    main()
