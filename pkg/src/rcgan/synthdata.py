"""Two-domain toy data with a known affine source-to-target map.

Source class ``j`` is a Gaussian centred at angle ``2*pi*j/k`` on a circle of
radius ``class_sep``. The target domain is the image of the source under
``x -> R(rotation) x + shift``, so the ideal generator is known exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .losses import Batch


@dataclass
class DatasetConfig:
    k: int = 4
    n_source_per_class: int = 500
    n_shot: int = 1
    n_unlabeled_per_class: int = 500
    rotation_deg: float = 60.0
    shift: tuple[float, float] = (4.0, 4.0)
    class_sep: float = 6.0
    noise_sigma: float = 0.6
    seed: int = 0

    def __post_init__(self):
        _check_args(self.k, self.n_source_per_class, self.n_shot, self.n_unlabeled_per_class, self.noise_sigma)
        if len(tuple(self.shift)) != 2:
            raise ValueError(f"shift must have 2 entries, got {self.shift!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shift"] = list(self.shift)
        return d


@dataclass
class SsdaDataset:
    k: int
    source_x: np.ndarray
    source_y: np.ndarray
    target_labeled_x: np.ndarray
    target_labeled_y: np.ndarray
    target_unlabeled_x: np.ndarray
    # evaluation only; never shown to a learner
    target_unlabeled_y: np.ndarray
    map_matrix: np.ndarray
    map_shift: np.ndarray
    class_sep: float
    seed: int

    @property
    def source_means(self) -> np.ndarray:
        return class_means(self.k, self.class_sep)

    @property
    def target_means(self) -> np.ndarray:
        return self.source_means @ self.map_matrix.T + self.map_shift

    def batch(self) -> Batch:
        """All data as one batch."""
        return Batch(self.k, self.source_x, self.source_y, self.target_labeled_x,
                     self.target_labeled_y, self.target_unlabeled_x)

    def relabeled(self, source_y: np.ndarray) -> "SsdaDataset":
        """Copy with the source labels replaced (for the wrong-label probes)."""
        out = SsdaDataset(**{**self.__dict__})
        out.source_y = np.asarray(source_y, dtype=np.int64)
        return out

    # serialisation -------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        rows = []
        for x, y in zip(self.source_x, self.source_y):
            rows.append(("source", "labeled", x[0], x[1], y, 0))
        for x, y in zip(self.target_labeled_x, self.target_labeled_y):
            rows.append(("target", "labeled", x[0], x[1], y, 0))
        for x, y in zip(self.target_unlabeled_x, self.target_unlabeled_y):
            rows.append(("target", "unlabeled", x[0], x[1], y, 1))
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["domain", "split", "x1", "x2", "y", "y_hidden_flag"])
            for r in rows:
                w.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3])), int(r[4]), r[5]])
        meta = {
            "k": self.k,
            "seed": self.seed,
            "class_sep": self.class_sep,
            "domain_map": {"matrix": self.map_matrix.tolist(), "shift": self.map_shift.tolist()},
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path: str | Path) -> "SsdaDataset":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        pools: dict[tuple[str, str], list] = {("source", "labeled"): [], ("target", "labeled"): [],
                                              ("target", "unlabeled"): []}
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                pools[(row["domain"], row["split"])].append(
                    (float(row["x1"]), float(row["x2"]), int(row["y"])))

        def split(rows):
            a = np.array(rows, dtype=np.float64).reshape(-1, 3)
            return a[:, :2].copy(), a[:, 2].astype(np.int64)

        sx, sy = split(pools[("source", "labeled")])
        lx, ly = split(pools[("target", "labeled")])
        ux, uy = split(pools[("target", "unlabeled")])
        dm = meta["domain_map"]
        return cls(meta["k"], sx, sy, lx, ly, ux, uy, np.array(dm["matrix"]), np.array(dm["shift"]),
                   meta["class_sep"], meta["seed"])


def class_means(k: int, radius: float) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(k) / k
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def rotation(deg: float) -> np.ndarray:
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def _check_args(k, n_source_per_class, n_shot, n_unlabeled_per_class, noise_sigma) -> None:
    if k < 2:
        raise ValueError(f"need at least 2 classes, got k={k}")
    if n_source_per_class < 0 or n_unlabeled_per_class < 0:
        raise ValueError("per-class counts must be non-negative")
    if n_shot < 1:
        raise ValueError(f"n_shot must be >= 1, got {n_shot}")
    if not noise_sigma > 0:
        raise ValueError(f"noise_sigma must be positive, got {noise_sigma}")


def make_dataset(
    k: int = 4,
    n_source_per_class: int = 500,
    n_shot: int = 1,
    n_unlabeled_per_class: int = 500,
    rotation_deg: float = 60.0,
    shift=(4.0, 4.0),
    class_sep: float = 6.0,
    noise_sigma: float = 0.6,
    seed: int = 0,
) -> SsdaDataset:
    _check_args(k, n_source_per_class, n_shot, n_unlabeled_per_class, noise_sigma)
    rng = np.random.default_rng(seed)
    means = class_means(k, class_sep)
    a = rotation(rotation_deg)
    b = np.asarray(shift, dtype=np.float64).reshape(2)

    def draw(n):
        xs = [means[j] + noise_sigma * rng.standard_normal((n, 2)) for j in range(k)]
        return np.concatenate(xs), np.repeat(np.arange(k), n)

    sx, sy = draw(n_source_per_class)
    tx, ty = draw(n_shot + n_unlabeled_per_class)
    tx = tx @ a.T + b
    per = n_shot + n_unlabeled_per_class
    lab = np.zeros(len(ty), dtype=bool)
    for j in range(k):
        lab[j * per: j * per + n_shot] = True
    return SsdaDataset(k, sx, sy, tx[lab], ty[lab], tx[~lab], ty[~lab], a, b, float(class_sep), int(seed))


def make_from_config(cfg: DatasetConfig) -> SsdaDataset:
    return make_dataset(**asdict(cfg))


def ideal_transfer(ds: SsdaDataset, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x @ ds.map_matrix.T + ds.map_shift


def inverse_transfer(ds: SsdaDataset, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.linalg.solve(ds.map_matrix, (x - ds.map_shift).T).T


def shifted_labels(y: np.ndarray, k: int) -> np.ndarray:
    """Every label moved up by one class, wrapping around."""
    return (np.asarray(y) + 1) % k


def random_labels(n: int, k: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, k, size=n)
