#!/usr/bin/env python3
"""Convert a Planetoid split (ind.<name>.{tx,allx,ty,ally,graph,test.index})
into the canonical nodes.csv / edges.csv layout read by `graphair`.

The class label becomes the sensitive column `class`. Test nodes missing from
the raw files (Citeseer has some) get zero features and class 0.

    python3 scripts/planetoid_to_canonical.py citeseer raw/ data/citeseer \
        --manifest datasets/manifests/citeseer.json
"""

import argparse
import csv
import pickle
import shutil
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def read_planetoid(raw: Path, name: str):
    tx, allx, ty, ally = (load(raw, name, p) for p in ("tx", "allx", "ty", "ally"))
    graph = load(raw, name, "graph")
    test_index = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]

    order = np.sort(test_index)
    lo, hi = order[0], order[-1]
    full_tx = sp.lil_matrix((hi - lo + 1, tx.shape[1]))
    full_ty = np.zeros((hi - lo + 1, ty.shape[1]))
    full_tx[order - lo, :] = tx
    full_ty[order - lo, :] = ty

    features = sp.vstack((allx, full_tx)).tolil()
    labels = np.vstack((ally, full_ty))
    features[test_index, :] = features[order, :]
    labels[test_index, :] = labels[order, :]

    n = features.shape[0]
    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))
    return features.toarray(), labels.argmax(axis=1), sorted(edges)


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("name", help="planetoid dataset name, e.g. citeseer")
    p.add_argument("raw", type=Path, help="directory with the ind.<name>.* files")
    p.add_argument("out", type=Path, help="output dataset directory")
    p.add_argument("--manifest", type=Path, help="manifest to copy next to the data")
    args = p.parse_args()

    x, cls, edges = read_planetoid(args.raw, args.name)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "nodes.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", *(f"f{j}" for j in range(x.shape[1])), "class"])
        for i, row in enumerate(x):
            w.writerow([i, *(f"{v:g}" for v in row), int(cls[i])])
    with open(args.out / "edges.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["src", "dst"])
        w.writerows(edges)
    if args.manifest:
        shutil.copy(args.manifest, args.out / "manifest.json")
    print(f"{args.name}: {x.shape[0]} nodes, {len(edges)} undirected edges, "
          f"{x.shape[1]} features, {len(set(cls.tolist()))} classes", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
