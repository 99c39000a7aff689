"""Synthetic data generation, CSV ingestion, and train/test splitting."""

import numpy as np

from .core import Dataset, Points
from .kernels import cov_matrix
from .linalg import chol_with_jitter

SYNTHETIC_CAP = 4096
INPUT_LOW, INPUT_HIGH = 0.0, 10.0


def generate_synthetic(d, n_train, n_test, h, seed, prior_mean=0.0):
    """Draw a train/test pair jointly from the model prior.

    Inputs are uniform on [0, 10]^d; outputs are one joint draw from the
    prior (noise enters through each point's own identity).  Bounded at
    4096 total points because the joint draw needs a dense factorization.
    """
    n = n_train + n_test
    if n > SYNTHETIC_CAP:
        raise ValueError(f"{n} points exceeds the synthetic cap of {SYNTHETIC_CAP}")
    if n_train < 0 or n_test < 0 or n == 0:
        raise ValueError("need nonnegative sizes and at least one point")
    rng = np.random.default_rng(seed)
    pts = Points(rng.uniform(INPUT_LOW, INPUT_HIGH, size=(n, d)), np.arange(n))
    lower, _ = chol_with_jitter(cov_matrix(pts, pts, h))
    y = prior_mean + lower @ rng.standard_normal(n)
    train_ix = np.arange(n_train)
    test_ix = np.arange(n_train, n)
    return (
        Dataset(pts.take(train_ix), y[train_ix], prior_mean),
        Dataset(pts.take(test_ix), y[test_ix], prior_mean),
    )


def generate_synthetic_tiled(d, n_train, n_test, h, seed, prior_mean=0.0):
    """Synthetic data beyond the joint-draw cap.

    Draws independent tiles of at most SYNTHETIC_CAP points each and
    concatenates them, so correlations exist only within a tile.  Sizes
    within the cap fall back to the exact single draw.
    """
    total = n_train + n_test
    if total <= SYNTHETIC_CAP:
        return generate_synthetic(d, n_train, n_test, h, seed, prior_mean)
    n_tiles = -(-total // SYNTHETIC_CAP)
    base = total // n_tiles
    sizes = [base + (1 if i < total - base * n_tiles else 0) for i in range(n_tiles)]
    coords, y = [], []
    for i, size in enumerate(sizes):
        tile, _ = generate_synthetic(d, size, 0, h, seed + i, prior_mean)
        coords.append(tile.x.coords)
        y.append(tile.y)
    pts = Points(np.concatenate(coords, axis=0), np.arange(total))
    y = np.concatenate(y)
    train_ix = np.arange(n_train)
    test_ix = np.arange(n_train, total)
    return (
        Dataset(pts.take(train_ix), y[train_ix], prior_mean),
        Dataset(pts.take(test_ix), y[test_ix], prior_mean),
    )


def train_test_split(dataset, seed, test_fraction=0.1):
    """Seeded uniform split; the test share is rounded, at least one point."""
    n = dataset.n
    n_test = max(1, int(round(test_fraction * n)))
    if n_test >= n:
        raise ValueError(f"cannot hold out {n_test} of {n} points")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.take(np.sort(perm[n_test:])), dataset.take(np.sort(perm[:n_test]))


def load_csv(path, prior_mean=0.0, start_id=0):
    """Read a feature CSV with header x1..xd[,y].

    Returns a Dataset when a y column is present, otherwise a Points set.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = [c.strip() for c in fh.readline().strip().split(",")]
        raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    has_y = bool(header) and header[-1] == "y"
    d = len(header) - 1 if has_y else len(header)
    expected = [f"x{i + 1}" for i in range(d)] + (["y"] if has_y else [])
    if header != expected:
        raise ValueError(
            f"{path}: expected columns {','.join(expected)}, found {','.join(header)}"
        )
    if raw.shape[1] != len(header):
        raise ValueError(f"{path}: rows have {raw.shape[1]} fields, header has {len(header)}")
    pts = Points(raw[:, :d], start_id + np.arange(raw.shape[0]))
    if has_y:
        return Dataset(pts, raw[:, d], prior_mean)
    return pts


def save_csv(dataset_or_points, path):
    """Write a Dataset (x1..xd,y) or Points (x1..xd) in the load_csv format."""
    if isinstance(dataset_or_points, Dataset):
        pts, y = dataset_or_points.x, dataset_or_points.y
    else:
        pts, y = dataset_or_points, None
    d = pts.dim
    header = ",".join([f"x{i + 1}" for i in range(d)] + (["y"] if y is not None else []))
    body = pts.coords if y is None else np.column_stack([pts.coords, y])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in body:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
