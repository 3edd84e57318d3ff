"""Disjoint index blocks over an m x n plan, used by the group-lasso penalty."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """Disjoint groups of entries of an ``shape`` matrix.

    Each group is stored as a sorted array of flat (row-major) indices.
    Entries that belong to no group are left unpenalized.
    """

    shape: tuple[int, int]
    groups: tuple[np.ndarray, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        m, n = self.shape
        size = m * n
        seen = np.zeros(size, dtype=bool)
        for k, g in enumerate(self.groups):
            if g.size and (g.min() < 0 or g.max() >= size):
                raise ValueError(f"group {k} has indices outside the {m}x{n} grid")
            if np.any(seen[g]) or np.unique(g).size != g.size:
                raise ValueError(f"group {k} overlaps another group")
            seen[g] = True
        if self.labels and len(self.labels) != len(self.groups):
            raise ValueError("labels must match groups one-to-one")
        gid = np.full(size, -1, dtype=np.int64)
        for k, g in enumerate(self.groups):
            gid[g] = k
        gid.setflags(write=False)
        object.__setattr__(self, "_gid", gid)

    @classmethod
    def from_entries(cls, shape, groups: Sequence[Sequence[tuple[int, int]]], labels=()):
        m, n = shape
        flat = []
        for g in groups:
            idx = []
            for i, j in g:
                if not (0 <= i < m and 0 <= j < n):
                    raise ValueError(f"entry ({i},{j}) outside the {m}x{n} grid")
                idx.append(i * n + j)
            flat.append(np.array(sorted(idx), dtype=np.int64))
        return cls((m, n), tuple(flat), tuple(labels))

    @classmethod
    def class_blocks(cls, row_labels, n_cols: int):
        """One group per (column, row class): the rows sharing a label within one column."""
        row_labels = np.asarray(row_labels)
        m = row_labels.shape[0]
        classes = np.unique(row_labels)
        groups, labels = [], []
        for j in range(n_cols):
            for c in classes:
                rows = np.flatnonzero(row_labels == c)
                groups.append(rows * n_cols + j)
                labels.append(f"{c}@{j}")
        return cls((m, n_cols), tuple(np.sort(g).astype(np.int64) for g in groups), tuple(labels))

    @property
    def group_ids(self) -> np.ndarray:
        """Flat array mapping each entry to its group index, -1 when ungrouped."""
        return self._gid

    def __len__(self):
        return len(self.groups)

    def block_norms(self, X: np.ndarray) -> np.ndarray:
        """Frobenius norm of every group of ``X``."""
        gid = self._gid
        mask = gid >= 0
        sq = np.bincount(gid[mask], weights=np.square(X.ravel()[mask]), minlength=len(self.groups))
        return np.sqrt(sq)
