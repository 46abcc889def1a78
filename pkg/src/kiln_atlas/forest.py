"""Random-forest pixel classifier over RGB features, written from scratch.

Trees are grown on bootstrap samples with Gini splits at midpoints between
distinct sorted feature values.  Each tree is held as flat arrays (the same
layout scikit-learn uses internally) so prediction vectorises over pixels.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .raster import RasterTile

log = logging.getLogger(__name__)

MODEL_FORMAT = "kiln-atlas-forest"
MODEL_VERSION = 1

CLASS_NAMES = (
    "Brick Kilns",
    "Redroof Structures",
    "Water Bodies",
    "Green Areas",
    "Forests",
    "Fallow Lands",
    "Desert",
    "Urban Areas",
    "Roads",
    "Rocky Terrain",
)
KILN_CLASS = 1


@dataclass(frozen=True)
class LabelSchema:
    names: tuple[str, ...] = CLASS_NAMES

    @property
    def indices(self) -> range:
        return range(1, len(self.names) + 1)

    def __len__(self):
        return len(self.names)

    def name(self, index: int) -> str:
        return self.names[index - 1]


@dataclass
class LabeledPixelSet:
    rgb: np.ndarray  # (n, 3) uint8
    labels: np.ndarray  # (n,) int, schema indices

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rgb.ndim != 2 or self.rgb.shape[1] != 3 or len(self.rgb) != len(self.labels):
            raise ValueError("rgb must be (n, 3) with one label per row")
        if self.rgb.size and (self.rgb.min() < 0 or self.rgb.max() > 255):
            raise ValueError("channel values must lie in [0, 255]")
        self.rgb = self.rgb.astype(np.uint8)
        n_classes = len(CLASS_NAMES)
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > n_classes):
            raise ValueError(f"class indices must lie in 1..{n_classes}")

    def __len__(self):
        return len(self.labels)

    def subset(self, rows) -> "LabeledPixelSet":
        return LabeledPixelSet(self.rgb[rows], self.labels[rows])


def read_training_csv(path) -> LabeledPixelSet:
    """Read a ``r,g,b,class`` CSV; errors name the offending line."""
    rgb, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["r", "g", "b", "class"]:
            raise ValueError(f"{path}: expected header r,g,b,class")
        for row in reader:
            try:
                values = [int(row[k]) for k in ("r", "g", "b", "class")]
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{reader.line_num}: malformed row") from None
            if not all(0 <= v <= 255 for v in values[:3]) or not 1 <= values[3] <= len(CLASS_NAMES):
                raise ValueError(f"{path}:{reader.line_num}: value out of range")
            rgb.append(values[:3])
            labels.append(values[3])
    return LabeledPixelSet(np.array(rgb, dtype=np.uint8).reshape(-1, 3), np.array(labels, dtype=np.int64))


def write_training_csv(data: LabeledPixelSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "g", "b", "class"])
        for (r, g, b), c in zip(data.rgb.tolist(), data.labels.tolist()):
            w.writerow([r, g, b, c])


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    max_depth: int = 50
    max_features: int = 10
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    train_fraction: float = 0.8
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("n_trees", "max_depth", "max_features", "min_samples_split", "min_samples_leaf"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) bootstrap class counts

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # children always follow their parent
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf node id reached by every row of ``x``."""
        node = np.zeros(len(x), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if not active.size:
                return node
            n = node[active]
            go_left = x[active, feat[active]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.int64).reshape(len(d["feature"]), -1),
        )


@dataclass
class Forest:
    trees: list[Tree]
    schema: LabelSchema = field(default_factory=LabelSchema)
    config: ForestConfig = field(default_factory=ForestConfig)
    metadata: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return bool(self.metadata.get("degenerate", False))

    def predict_proba(self, rgb) -> np.ndarray:
        x = np.asarray(rgb, dtype=float).reshape(-1, 3)
        probs = np.zeros((len(x), len(self.schema)))
        for tree in self.trees:
            counts = tree.value[tree.apply(x)].astype(float)
            probs += counts / counts.sum(axis=1, keepdims=True)
        return probs / len(self.trees)

    def predict(self, rgb) -> np.ndarray:
        return np.argmax(self.predict_proba(rgb), axis=1) + 1

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "schema": list(self.schema.names),
            "config": asdict(self.config),
            "metadata": self.metadata,
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Forest":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not a kiln-atlas forest model (or unsupported version)")
        return cls(
            trees=[Tree.from_json(t) for t in d["trees"]],
            schema=LabelSchema(tuple(d["schema"])),
            config=ForestConfig(**d["config"]),
            metadata=d.get("metadata", {}),
        )


def save_forest(forest: Forest, path) -> None:
    Path(path).write_text(json.dumps(forest.to_json(), sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_forest(path) -> Forest:
    return Forest.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def split_train_test(data: LabeledPixelSet, fraction: float, seed: int):
    if not len(data):
        raise ValueError("cannot split an empty pixel set")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(data))
    k = math.floor(len(data) * fraction)
    return data.subset(perm[:k]), data.subset(perm[k:])


def _best_split(x, y_onehot, rows, features, min_leaf):
    """Lowest weighted Gini over candidate features; ties keep the earliest."""
    best = None
    n = len(rows)
    for f in features:
        vals = x[rows, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        left_counts = np.cumsum(y_onehot[rows[order]], axis=0)[:-1]
        n_left = np.arange(1, n)
        valid = (sv[:-1] != sv[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        right_counts = left_counts[-1] + y_onehot[rows[order[-1]]] - left_counts
        n_right = n - n_left
        # weighted impurity = n_l*(1 - sum p_l^2) + n_r*(1 - sum p_r^2), divided by n
        score = (n - (left_counts ** 2).sum(1) / n_left - (right_counts ** 2).sum(1) / n_right)
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        if best is None or score[i] < best[0]:
            best = (score[i], f, (sv[i] + sv[i + 1]) / 2.0)
    return best


def grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int, config: ForestConfig,
              rng: np.random.Generator, n_features_used: int) -> Tree:
    """Grow one tree on rows ``x``/``y`` (labels 0-based) exactly as given."""
    y_onehot = np.eye(n_classes, dtype=np.int64)[y]
    feature, threshold, left, right, value = [], [], [], [], []
    # stack of (node id, rows, depth); nodes are allocated on push
    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.bincount(y[rows], minlength=n_classes))
        return len(feature) - 1

    root_rows = np.arange(len(y))
    stack = [(new_node(root_rows), root_rows, 0)]
    n_all = x.shape[1]
    while stack:
        node, rows, depth = stack.pop()
        counts = value[node]
        if (depth >= config.max_depth or len(rows) < config.min_samples_split
                or np.count_nonzero(counts) <= 1):
            continue
        if n_features_used < n_all:
            features = np.sort(rng.choice(n_all, n_features_used, replace=False))
        else:
            features = np.arange(n_all)
        best = _best_split(x, y_onehot, rows, features, config.min_samples_leaf)
        if best is None:
            continue
        _, f, thr = best
        mask = x[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node] = int(f)
        threshold[node] = float(thr)
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # right pushed first so the left subtree is expanded first (stable ids)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.int64).reshape(-1, n_classes),
    )


def bootstrap_rows(seed: np.random.SeedSequence, n: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, n, size=n)


def _grow_one(args):
    x, y, n_classes, config, seed, n_features_used = args
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, len(y), size=len(y))
    return grow_tree(x[rows], y[rows], n_classes, config, rng, n_features_used)


def tree_seeds(config: ForestConfig) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(config.rng_seed).spawn(config.n_trees)


def train_forest(train: LabeledPixelSet, config: ForestConfig = ForestConfig(),
                 schema: LabelSchema = LabelSchema(), workers: int = 1) -> Forest:
    """Fit ``config.n_trees`` trees; identical inputs give identical forests
    for any ``workers`` count."""
    n = len(train)
    if n == 0:
        raise ValueError("training set is empty")
    n_classes = len(schema)
    y = train.labels - 1
    x = train.rgb.astype(float)
    n_features_used = min(config.max_features, x.shape[1])
    meta = {
        "max_features_requested": config.max_features,
        "max_features_used": n_features_used,
        "n_train_rows": n,
    }
    if n_features_used < config.max_features:
        log.info("max_features %d clamped to %d available features",
                 config.max_features, n_features_used)
    present = np.unique(y)
    if len(present) < 2:
        log.warning("single-class training data; returning a one-leaf forest")
        counts = np.bincount(y, minlength=n_classes)
        leaf = Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                    counts.reshape(1, -1).astype(np.int64))
        meta.update(degenerate=True, bootstrap_coverage=1.0)
        return Forest([leaf], schema, config, meta)
    if n < config.min_samples_split:
        raise ValueError(f"need at least {config.min_samples_split} rows to split")

    seeds = tree_seeds(config)
    jobs = [(x, y, n_classes, config, s, n_features_used) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(_grow_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        trees = [_grow_one(j) for j in jobs]
    covered = np.zeros(n, dtype=bool)
    for s in seeds:
        covered[bootstrap_rows(s, n)] = True
    meta.update(degenerate=False, bootstrap_coverage=float(covered.mean()))
    return Forest(trees, schema, config, meta)


def predict_pixel(forest: Forest, rgb) -> tuple[int, np.ndarray]:
    """Majority class (lowest index on ties) and per-class vote fractions."""
    probs = forest.predict_proba(np.asarray(rgb).reshape(1, 3))[0]
    return int(np.argmax(probs)) + 1, probs


def classify_tile(forest: Forest, tile: RasterTile, target_class: int = KILN_CLASS):
    """Binary mask of pixels whose predicted class equals ``target_class``."""
    from .postprocess import BinaryMask

    flat = tile.pixels.reshape(-1, 3)
    # tiles repeat colours heavily; classify each distinct colour once
    colours, inverse = np.unique(flat, axis=0, return_inverse=True)
    hit = forest.predict(colours) == target_class
    bits = hit[inverse.reshape(-1)].reshape(tile.pixels.shape[:2])
    return BinaryMask(bits, tile.georef)


@dataclass
class EvaluationReport:
    classes: list[int]
    precision: dict[int, float | None]
    recall: dict[int, float | None]
    f1: dict[int, float | None]
    support: dict[int, int]
    confusion: list[list[float] | None]  # row-normalised, None for zero-support rows
    accuracy: float

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                str(c): {"precision": self.precision[c], "recall": self.recall[c],
                         "f1": self.f1[c], "support": self.support[c]}
                for c in self.classes
            },
            "confusion_normalized": self.confusion,
        }


def _ratio(a, b):
    return a / b if b else None


def evaluate(pred_labels, true_labels, schema: LabelSchema = LabelSchema()) -> EvaluationReport:
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError("prediction and truth lengths differ")
    k = len(schema)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (true - 1, pred - 1), 1)
    classes = list(schema.indices)
    precision, recall, f1, support = {}, {}, {}, {}
    for c in classes:
        tp = int(cm[c - 1, c - 1])
        p = _ratio(tp, int(cm[:, c - 1].sum()))
        r = _ratio(tp, int(cm[c - 1].sum()))
        precision[c], recall[c] = p, r
        f1[c] = None if p is None or r is None else (2 * p * r / (p + r) if p + r else 0.0)
        support[c] = int(cm[c - 1].sum())
    confusion = [(row / row.sum()).tolist() if row.sum() else None for row in cm]
    accuracy = float(np.trace(cm) / len(true)) if len(true) else float("nan")
    return EvaluationReport(classes, precision, recall, f1, support, confusion, accuracy)
