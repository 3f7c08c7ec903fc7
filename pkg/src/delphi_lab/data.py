"""Synthetic blob data and client partitioning (IID and Poisson-imbalanced)."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import Batch


class ParameterError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes)

    def as_batch(self) -> Batch:
        return Batch(self.inputs, self.labels)


@dataclass
class Partition:
    client_id: int
    train: Dataset
    test: Dataset
    train_indices: np.ndarray


def blob_centers(num_classes: int, dim: int, rng: np.random.Generator,
                 center_scale: float = 1.0) -> np.ndarray:
    """Class means drawn from N(0, center_scale^2 I)."""
    return rng.normal(scale=center_scale, size=(num_classes, dim))


def sample_blobs(centers: np.ndarray, n_per_class: int, spread: float,
                 rng: np.random.Generator) -> Dataset:
    num_classes, dim = centers.shape
    labels = np.repeat(np.arange(num_classes), n_per_class)
    inputs = centers[labels] + spread * rng.normal(size=(len(labels), dim))
    return Dataset(inputs, labels, num_classes)


def generate_blobs(num_classes: int, dim: int, n_per_class: int, spread: float,
                   seed: int, center_scale: float = 1.0,
                   n_test_per_class: int = 0) -> Dataset | tuple[Dataset, Dataset]:
    """Gaussian clusters around seeded class centers.

    With ``n_test_per_class > 0`` a second, independent draw from the same
    clusters is returned as a test set: ``(train, test)``.
    """
    if num_classes < 2 or dim < 2 or n_per_class < 1 or spread <= 0:
        raise ParameterError(
            f"invalid blob parameters C={num_classes} d={dim} "
            f"n={n_per_class} spread={spread}"
        )
    rng = np.random.default_rng(seed)
    centers = blob_centers(num_classes, dim, rng, center_scale)
    train = sample_blobs(centers, n_per_class, spread, rng)
    if n_test_per_class <= 0:
        return train
    return train, sample_blobs(centers, n_test_per_class, spread, rng)


def _split_test(test: Dataset | None, num_clients: int, rng) -> list[Dataset]:
    if test is None or len(test) == 0:
        dim = test.inputs.shape[1] if test is not None else 0
        c = test.num_classes if test is not None else 0
        empty = Dataset(np.zeros((0, dim)), np.zeros(0, dtype=np.int64), c)
        return [empty] * num_clients
    order = rng.permutation(len(test))
    per = len(test) // num_clients
    return [test.subset(order[k * per : (k + 1) * per]) for k in range(num_clients)]


def partition_iid(ds: Dataset, num_clients: int, seed: int,
                  test: Dataset | None = None) -> list[Partition]:
    """Shuffle and deal the dataset into ``num_clients`` near-equal shards."""
    if num_clients < 1 or num_clients > len(ds):
        raise ParameterError(f"cannot split {len(ds)} samples among {num_clients} clients")
    rng = np.random.default_rng(seed)
    shards = np.array_split(rng.permutation(len(ds)), num_clients)
    tests = _split_test(test, num_clients, rng)
    return [
        Partition(k, ds.subset(np.sort(s)), tests[k], np.sort(s))
        for k, s in enumerate(shards)
    ]


def poisson_shares(num_clients: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    """One Poisson(0.25 * C) draw per client, floored at 1."""
    return rng.poisson(0.25 * num_classes, size=num_clients) + 1


def _apportion(total: int, shares: np.ndarray) -> np.ndarray:
    counts = np.floor(total * shares / shares.sum()).astype(np.int64)
    counts[int(np.argmax(shares))] += total - counts.sum()
    return counts


def partition_imbalanced(ds: Dataset, num_clients: int, seed: int,
                         test: Dataset | None = None, sampler=None) -> list[Partition]:
    """Poisson-sized shards; every client keeps every class if the pool allows.

    ``sampler(num_clients, num_classes, rng)`` may replace the Poisson draw.
    """
    if num_clients < 1:
        raise ParameterError("need at least one client")
    rng = np.random.default_rng(seed)
    draws = (sampler or poisson_shares)(num_clients, ds.num_classes, rng)
    shares = np.asarray(draws, dtype=float)
    owned = [[] for _ in range(num_clients)]
    for c in range(ds.num_classes):
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        counts = _apportion(len(members), shares)
        if len(members) >= num_clients:
            # keep the class present on every client
            for k in np.flatnonzero(counts == 0):
                counts[int(np.argmax(counts))] -= 1
                counts[k] = 1
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for k in range(num_clients):
            owned[k].extend(members[bounds[k] : bounds[k + 1]].tolist())
    tests = _split_test(test, num_clients, rng)
    parts = []
    for k in range(num_clients):
        idx = np.sort(np.asarray(owned[k], dtype=np.int64))
        parts.append(Partition(k, ds.subset(idx), tests[k], idx))
    return parts


def save_csv(ds: Dataset, path: str | Path):
    d = ds.inputs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(d)] + ["label"])
        for x, y in zip(ds.inputs, ds.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])


def load_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    labels = body[:, -1].astype(np.int64)
    c = num_classes if num_classes is not None else int(labels.max()) + 1
    return Dataset(body[:, :-1], labels, c)
