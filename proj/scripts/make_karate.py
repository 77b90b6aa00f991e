#!/usr/bin/env python3
"""Writes the karate club demo dataset: edge list, labels, and fixed logits.

The logits are label one-hots plus small seeded noise, scaled so that the
clean diffusion leaves a spread of certifiable and fragile nodes. Rerunning
reproduces the shipped files byte for byte.
"""
import argparse
import random

import networkx as nx


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="data")
    ap.add_argument("--scale", type=float, default=0.3)
    ap.add_argument("--noise", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    g = nx.karate_club_graph()
    clubs = nx.get_node_attributes(g, "club")

    with open(f"{args.out_dir}/karate.tsv", "w") as f:
        for a, b in sorted(g.edges()):
            f.write(f"{a}\t{b}\n")

    with open(f"{args.out_dir}/karate_labels.csv", "w") as f:
        f.write("node_id,label\n")
        for node in sorted(g.nodes()):
            f.write(f"{node},{0 if clubs[node] == 'Mr. Hi' else 1}\n")

    rng = random.Random(args.seed)
    with open(f"{args.out_dir}/karate_logits.csv", "w") as f:
        for node in sorted(g.nodes()):
            label = 0 if clubs[node] == "Mr. Hi" else 1
            row = []
            for c in range(2):
                base = args.scale if c == label else 0.0
                row.append(base + args.noise * (2.0 * rng.random() - 1.0))
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


if __name__ == "__main__":
    main()
