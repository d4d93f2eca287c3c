#!/usr/bin/env python3
"""Writes a seeded stand-in for a measured GPU inference power trace.

Bursts ramp from idle in 10-20% steps, hold near TDP with small jitter and
short dips, then ramp back down. Output: data/gpu_trace.csv (time_s,power_norm).
"""

import argparse
import random


def burst(rng, idle, peak):
    out = []
    level = idle
    while level < peak:
        level = min(peak, level + rng.uniform(0.10, 0.20))
        out.append(level)
    for _ in range(rng.randint(20, 60)):
        if rng.random() < 0.06:
            out.append(peak - rng.uniform(0.10, 0.20))
        out.append(min(1.08, peak + rng.gauss(0.0, 0.012)))
    level = out[-1]
    while True:
        level -= rng.uniform(0.10, 0.20)
        if level <= idle + 0.05:
            break
        out.append(level)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--seconds", type=int, default=600)
    ap.add_argument("--out", default="data/gpu_trace.csv")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    idle = 0.25
    samples = []
    while len(samples) < args.seconds:
        samples += [idle + rng.gauss(0.0, 0.004) for _ in range(rng.randint(8, 30))]
        samples += burst(rng, idle, rng.uniform(0.85, 1.0))
    samples = samples[: args.seconds]
    with open(args.out, "w") as f:
        f.write("time_s,power_norm\n")
        for t, s in enumerate(samples):
            f.write(f"{t},{s:.4f}\n")


if __name__ == "__main__":
    main()
