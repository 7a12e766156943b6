"""Ratings matrices: CSV ingestion (``user,item,rating``) and a synthetic generator."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def load_ratings_csv(path, max_users: int | None = None, max_items: int | None = None,
                     seed: int = 0) -> np.ndarray:
    """Read a ``user,item,rating`` CSV with 0-based ids into a dense users x items matrix.

    Missing ratings are 0. With ``max_users``/``max_items`` a random subset of
    rows/columns (drawn with ``seed``, kept in id order) is returned.
    """
    path = Path(path)
    users, items, vals = [], [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"user", "item", "rating"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: header must contain user,item,rating (missing {sorted(missing)})")
        for lineno, row in enumerate(reader, start=2):
            try:
                u, i, r = int(row["user"]), int(row["item"]), float(row["rating"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed row {row}") from None
            if u < 0 or i < 0:
                raise ValueError(f"{path}:{lineno}: ids must be non-negative")
            if r < 0:
                raise ValueError(f"{path}:{lineno}: ratings must be non-negative")
            users.append(u)
            items.append(i)
            vals.append(r)
    if not users:
        raise ValueError(f"{path}: no ratings")
    R = np.zeros((max(users) + 1, max(items) + 1))
    R[users, items] = vals
    return subsample(R, max_users, max_items, seed)


def subsample(R: np.ndarray, max_users: int | None, max_items: int | None, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if max_users is not None and max_users < R.shape[0]:
        R = R[np.sort(rng.choice(R.shape[0], max_users, replace=False))]
    if max_items is not None and max_items < R.shape[1]:
        R = R[:, np.sort(rng.choice(R.shape[1], max_items, replace=False))]
    return R


def write_ratings_csv(R: np.ndarray, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "item", "rating"])
        for u, i in zip(*np.nonzero(R)):
            w.writerow([int(u), int(i), _fmt(R[u, i])])


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def synthetic_ratings(users: int, items: int, density: float = 0.3, seed: int = 0) -> np.ndarray:
    """Integer ratings 1..5 with item popularity skew; unrated entries are 0.

    Each user has a taste vector and each item a profile; ratings are the
    quantized affinity, observed with probability scaled by item popularity.
    """
    if not (0 < density <= 1):
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    taste = rng.normal(size=(users, 3))
    profile = rng.normal(size=(items, 3))
    affinity = taste @ profile.T + rng.normal(scale=0.5, size=(users, items))
    ranks = affinity.argsort(axis=1).argsort(axis=1) / max(items - 1, 1)
    stars = 1 + np.floor(ranks * 4.999)
    popularity = rng.uniform(0.3, 1.0, items)
    seen = rng.random((users, items)) < np.clip(density * popularity / popularity.mean(), 0, 1)
    return np.where(seen, stars, 0.0)
