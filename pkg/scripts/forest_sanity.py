"""Train the pixel forest on synthetic 10-class RGB blobs and report held-out scores.

    python3 scripts/forest_sanity.py --per-class 1000 --trees 500 --workers 1
"""

import argparse
import json
import time

import numpy as np

from kiln_atlas.forest import ForestConfig, LabeledPixelSet, evaluate, split_train_test, train_forest

# well separated colour centres, one per land-cover class (class 1 = kiln)
CENTRES = np.array([(200, 60, 40), (215, 215, 40), (40, 40, 215), (40, 215, 40), (20, 90, 30),
                    (160, 120, 80), (230, 210, 170), (128, 128, 128), (60, 60, 60), (120, 40, 160)])


def synthetic(per_class, sigma, seed):
    rng = np.random.default_rng(seed)
    rgb = np.vstack([rng.normal(c, sigma, (per_class, 3)) for c in CENTRES])
    labels = np.repeat(np.arange(1, 11), per_class)
    return LabeledPixelSet(np.clip(np.rint(rgb), 0, 255).astype(np.uint8), labels)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-class", type=int, default=1000)
    ap.add_argument("--sigma", type=float, default=4.0)
    ap.add_argument("--trees", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    train, test = split_train_test(synthetic(args.per_class, args.sigma, args.seed), 0.8, args.seed)
    t0 = time.perf_counter()
    forest = train_forest(train, ForestConfig(n_trees=args.trees, rng_seed=args.seed), workers=args.workers)
    fit_s = time.perf_counter() - t0
    report = evaluate(forest.predict(test.rgb), test.labels, forest.schema)
    print(f"trained {args.trees} trees on {len(train)} rows in {fit_s:.1f} s")
    print(f"held-out accuracy {report.accuracy:.4f}")
    print(json.dumps({"precision": report.precision, "recall": report.recall}, indent=1))


if __name__ == "__main__":
    main()
