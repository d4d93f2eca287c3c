#!/usr/bin/env python3
"""Writes the 123-bus radial test feeder used by the bundled scenarios.

The layout is random but seeded, so rerunning reproduces data/feeder123.net
byte for byte. Impedances are scaled so the deepest bus sits around
0.02 p.u. of common-path resistance on a 1 MVA base.
"""

import argparse
import random

TRUNK = 14
N_BUS = 123


def build(seed, r_per_km, x_per_km):
    rng = random.Random(seed)
    parent = {}
    depth_km = {0: 0.0}
    lines = []

    def attach(child, par, length_km):
        parent[child] = par
        depth_km[child] = depth_km[par] + length_km
        lines.append((par, child, length_km))

    next_id = 1
    trunk = [0]
    for _ in range(TRUNK):
        attach(next_id, trunk[-1], rng.uniform(0.15, 0.35))
        trunk.append(next_id)
        next_id += 1

    # Laterals hang off trunk buses; sub-laterals off lateral buses.
    anchors = trunk[1:]
    while next_id <= N_BUS:
        base = rng.choice(anchors)
        length = rng.randint(2, 8)
        prev = base
        for _ in range(length):
            if next_id > N_BUS:
                break
            attach(next_id, prev, rng.uniform(0.05, 0.2))
            if rng.random() < 0.25:
                anchors.append(next_id)
            prev = next_id
            next_id += 1

    loads = {}
    for b in range(1, N_BUS + 1):
        if rng.random() < 0.72:
            p = rng.choice([20, 25, 30, 40, 40, 50, 60, 75])
            q = round(p * rng.uniform(0.4, 0.6), 1)
            loads[b] = (-float(p), -q)
        else:
            loads[b] = (0.0, 0.0)

    out = []
    for a, b, km in lines:
        out.append((a, b, round(r_per_km * km, 5), round(x_per_km * km, 5)))
    return loads, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=123)
    ap.add_argument("--r-per-km", type=float, default=0.09)
    ap.add_argument("--x-per-km", type=float, default=0.18)
    ap.add_argument("--out", default="data/feeder123.net")
    args = ap.parse_args()

    loads, lines = build(args.seed, args.r_per_km, args.x_per_km)
    with open(args.out, "w") as f:
        f.write("# 123-bus radial test feeder, generated by tools/gen_feeder.py\n")
        f.write(f"# seed {args.seed}, r {args.r_per_km} ohm/km, x {args.x_per_km} ohm/km\n")
        f.write("BASE 1000 4.16\n\n")
        f.write("BUS 0 feeder 0 0\n")
        for b in sorted(loads):
            p, q = loads[b]
            f.write(f"BUS {b} pq {p:g} {q:g}\n")
        f.write("\n")
        for a, b, r, x in lines:
            f.write(f"LINE {a} {b} {r:g} {x:g}\n")


if __name__ == "__main__":
    main()
