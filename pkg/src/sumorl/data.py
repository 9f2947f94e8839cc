"""Offline transition datasets and the ``sumods v1`` text format.

File layout::

    sumods v1 d_s=<int> d_a=<int> n=<int>
    <s_1 .. s_ds> <a_1 .. a_da> <r> <s'_1 .. s'_ds> <done>
    ...

Every real is written with 17 significant digits so a save/load cycle is
bit-exact; ``done`` is ``0`` or ``1``. Tokens are separated by single spaces
on write and by arbitrary whitespace on read.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, ParseError, ShapeError

HEADER_RE = re.compile(r"^sumods v1 d_s=(\d+) d_a=(\d+) n=(\d+)$")


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool = False


@dataclass(frozen=True)
class DimStats:
    """Population mean and standard deviation over ``s ⊕ a ⊕ s_next``."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def zero_std(self):
        return self.std == 0.0

    def safe_std(self):
        """Standard deviation with zero entries replaced by 1 (leave those dims unscaled)."""
        return np.where(self.std > 0.0, self.std, 1.0)

    def select(self, idx):
        return DimStats(self.mean[idx], self.std[idx])


class OfflineDataset:
    """Immutable columnar collection of transitions."""

    def __init__(self, s, a, r, s_next, done=None):
        s = np.array(s, dtype=np.float64, ndmin=2)
        a = np.array(a, dtype=np.float64, ndmin=2)
        s_next = np.array(s_next, dtype=np.float64, ndmin=2)
        r = np.array(r, dtype=np.float64).reshape(-1)
        n = s.shape[0]
        done = np.zeros(n, dtype=bool) if done is None else np.array(done, dtype=bool).reshape(-1)
        if s.shape[1] < 1 or a.shape[1] < 1:
            raise ShapeError("state and action dimensions must be at least 1")
        if a.shape[0] != n or s_next.shape != s.shape or r.shape[0] != n or done.shape[0] != n:
            raise ShapeError("transition columns disagree in length or state dimension")
        for name, arr in (("s", s), ("a", a), ("r", r), ("s_next", s_next)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
            arr.setflags(write=False)
        done.setflags(write=False)
        self.s, self.a, self.r, self.s_next, self.done = s, a, r, s_next, done
        self._stats = None

    @classmethod
    def from_transitions(cls, transitions):
        transitions = list(transitions)
        if not transitions:
            raise EmptyDatasetError("no transitions given")
        return cls(
            [t.s for t in transitions],
            [t.a for t in transitions],
            [t.r for t in transitions],
            [t.s_next for t in transitions],
            [t.done for t in transitions],
        )

    @property
    def d_s(self):
        return self.s.shape[1]

    @property
    def d_a(self):
        return self.a.shape[1]

    def __len__(self):
        return self.s.shape[0]

    def __getitem__(self, i):
        return Transition(self.s[i], self.a[i], float(self.r[i]), self.s_next[i], bool(self.done[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return all(
            np.array_equal(x, y)
            for x, y in zip((self.s, self.a, self.r, self.s_next, self.done),
                            (other.s, other.a, other.r, other.s_next, other.done))
        ) and self.s.shape == other.s.shape and self.a.shape == other.a.shape

    __hash__ = None

    def concat_sas(self):
        return np.concatenate([self.s, self.a, self.s_next], axis=1)

    @property
    def stats(self):
        if self._stats is None:
            self._stats = compute_stats(self)
        return self._stats

    def subset(self, mask_or_idx):
        idx = np.asarray(mask_or_idx)
        return OfflineDataset(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])


def compute_stats(dataset):
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot compute statistics of an empty dataset")
    x = dataset.concat_sas()
    # Sort each column first so the result does not depend on row order.
    x = np.sort(x, axis=0)
    mean = np.mean(x, axis=0)
    std = np.sqrt(np.mean((x - mean) ** 2, axis=0))
    return DimStats(mean, std)


def _fmt(x):
    return format(float(x), ".17g")


def save(dataset, path):
    path = Path(path)
    lines = [f"sumods v1 d_s={dataset.d_s} d_a={dataset.d_a} n={len(dataset)}"]
    for i in range(len(dataset)):
        row = [*map(_fmt, dataset.s[i]), *map(_fmt, dataset.a[i]), _fmt(dataset.r[i]),
               *map(_fmt, dataset.s_next[i]), "1" if dataset.done[i] else "0"]
        lines.append(" ".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def load(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        m = HEADER_RE.match(header.strip())
        if not m:
            raise ParseError(f"malformed header {header!r}", line=1)
        d_s, d_a, n = (int(g) for g in m.groups())
        if d_s < 1 or d_a < 1:
            raise ParseError("d_s and d_a must be positive", line=1)
        width = 2 * d_s + d_a + 2
        rows = np.empty((n, width - 1))
        done = np.zeros(n, dtype=bool)
        count = 0
        for lineno, line in enumerate(fh, start=2):
            tokens = line.split()
            if not tokens:
                continue
            if count >= n:
                raise ParseError(f"more than n={n} rows", line=lineno)
            if len(tokens) != width:
                raise ParseError(f"expected {width} fields, found {len(tokens)}", line=lineno)
            try:
                values = [float(t) for t in tokens[:-1]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite value", line=lineno)
            if tokens[-1] not in ("0", "1"):
                raise ParseError(f"done flag must be 0 or 1, found {tokens[-1]!r}", line=lineno)
            rows[count] = values
            done[count] = tokens[-1] == "1"
            count += 1
    if count != n:
        raise ParseError(f"header declares n={n} rows but file has {count}", line=count + 2)
    if n == 0:
        raise EmptyDatasetError("dataset file has no rows")
    s = rows[:, :d_s]
    a = rows[:, d_s:d_s + d_a]
    r = rows[:, d_s + d_a]
    s_next = rows[:, d_s + d_a + 1:]
    return OfflineDataset(s, a, r, s_next, done)


def fingerprint(dataset):
    """Short content hash used as a dataset id in reports."""
    h = hashlib.sha256(f"{dataset.d_s},{dataset.d_a},{len(dataset)}".encode())
    for arr in (dataset.s, dataset.a, dataset.r, dataset.s_next, dataset.done):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]
