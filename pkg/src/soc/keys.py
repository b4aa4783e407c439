"""Deterministic random keys and the weighted extension of skeleton sets.

Keys come from SplitMix64 streams: the ``n``-th value of a stream with seed
``s`` is ``mix64(s + n * GOLDEN)``, so a stream is fully described by its seed
and a counter.  In ``master`` mode there is one stream seeded from the master
seed; in ``grid`` mode every grid cell of side ``grid_delta`` owns its own
stream, seeded by folding the integer cell coordinates into the master seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SkeletonEntry, SkeletonSet

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finaliser on a Python int (taken modulo 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_values(seed: int, start: int, n: int) -> np.ndarray:
    """Values ``start .. start+n-1`` of the stream ``seed``, as floats in [0, 1)."""
    if n == 1:
        z = mix64((seed + (start + 1) * GOLDEN) & MASK64)
        return np.array([(z >> 11) * _INV53])
    with np.errstate(over="ignore"):
        steps = np.arange(start + 1, start + n + 1, dtype=np.uint64)
        z = np.uint64(seed & MASK64) + steps * np.uint64(GOLDEN)
        z = _mix64_array(z)
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def cell_id(x, delta: float) -> tuple[int, ...]:
    if not delta > 0:
        raise ValueError("grid_delta must be positive")
    return tuple(math.floor(c / delta) for c in np.asarray(x, dtype=np.float64).tolist())


def cell_seed(master_seed: int, cell: tuple[int, ...]) -> int:
    """Stable 64-bit seed for a grid cell: fold every coordinate through mix64."""
    h = mix64(master_seed ^ 0x5EED5EED5EED5EED)
    for c in cell:
        h = mix64(h ^ (c & MASK64))
    return h


class KeySource:
    """Owner of every key stream used by one engine run."""

    def __init__(self, master_seed: int = 0, grid_delta: float | None = None):
        if grid_delta is not None and not grid_delta > 0:
            raise ValueError("grid_delta must be positive")
        self.master_seed = int(master_seed)
        self.grid_delta = grid_delta
        self._master = mix64(self.master_seed)
        self.master_counter = 0
        # grid mode: cell -> [seed, counter]
        self.cells: dict[tuple[int, ...], list[int]] = {}

    @property
    def mode(self) -> str:
        return "master" if self.grid_delta is None else "grid"

    def draw(self, n: int, anchor=None) -> np.ndarray:
        """Next ``n`` values of the stream that ``anchor`` selects."""
        if self.grid_delta is None:
            out = stream_values(self._master, self.master_counter, n)
            self.master_counter += n
            return out
        if anchor is None:
            raise ValueError("grid mode needs an anchor point to pick a stream")
        cell = cell_id(anchor, self.grid_delta)
        slot = self.cells.get(cell)
        if slot is None:
            slot = self.cells[cell] = [cell_seed(self.master_seed, cell), 0]
        out = stream_values(slot[0], slot[1], n)
        slot[1] += n
        return out

    def next_key(self, x=None) -> float:
        return float(self.draw(1, x)[0])

    def state(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "grid_delta": self.grid_delta,
            "master_counter": self.master_counter,
            "cells": [[list(c), v[1]] for c, v in sorted(self.cells.items())],
        }

    @classmethod
    def from_state(cls, state: dict) -> "KeySource":
        src = cls(state["master_seed"], state["grid_delta"])
        src.master_counter = int(state["master_counter"])
        for cell, counter in state["cells"]:
            cell = tuple(int(c) for c in cell)
            src.cells[cell] = [cell_seed(src.master_seed, cell), int(counter)]
        return src

    def digest(self) -> str:
        h = mix64(self.master_counter ^ mix64(self.master_seed))
        for cell, (_, counter) in sorted(self.cells.items()):
            h = mix64(h ^ cell_seed(self.master_seed, cell) ^ counter)
        return f"{h:016x}"


@dataclass
class Extension:
    """Output of :func:`ext`: an ordered run of entries plus their provenance.

    ``source[j]`` is the position in the input set that entry ``j`` copies
    (originals map to themselves; for a single point every entry has source 0).
    Appended entries carry ``ids == -1`` until the caller allocates ids.
    """

    points: np.ndarray
    keys: np.ndarray
    weights: np.ndarray
    ids: np.ndarray
    source: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def entries(self) -> list[SkeletonEntry]:
        return [
            SkeletonEntry(self.points[j], float(self.keys[j]), int(self.weights[j]), int(self.ids[j]))
            for j in range(len(self))
        ]


def ext(S, h: int, source: KeySource, anchor=None) -> Extension:
    """Extend a skeleton set (or a single point) to exactly ``h`` entries.

    Appended entries have weight 1, a point resampled from ``S`` with
    probability proportional to the original weights (inverse transform on
    the cumulative weights) and a fresh key.  Each appended entry consumes
    two stream values, selection first and key second.  ``anchor`` picks the
    key stream in grid mode; it defaults to the point itself for point input.
    """
    if isinstance(S, SkeletonSet):
        n = len(S)
        if h < n:
            raise ValueError(f"cannot extend a set of size {n} to {h}")
        m = h - n
        if m == 0:
            return Extension(S.points, S.keys, S.weights, S.ids, np.arange(n))
        vals = source.draw(2 * m, anchor if anchor is not None else S.points[0])
        cum = np.cumsum(S.weights)
        picks = np.searchsorted(cum, vals[0::2] * cum[-1], side="right")
        np.minimum(picks, n - 1, out=picks)
        src = np.concatenate([np.arange(n), picks])
        return Extension(
            S.points[src],
            np.concatenate([S.keys, vals[1::2]]),
            np.concatenate([S.weights, np.ones(m, dtype=np.int64)]),
            np.concatenate([S.ids, np.full(m, -1, dtype=np.int64)]),
            src,
        )
    x = np.asarray(S, dtype=np.float64)
    if h < 1:
        raise ValueError("h must be at least 1")
    keys = source.draw(h, anchor if anchor is not None else x)
    return Extension(
        np.broadcast_to(x, (h, x.size)).copy(),
        keys,
        np.ones(h, dtype=np.int64),
        np.full(h, -1, dtype=np.int64),
        np.zeros(h, dtype=np.int64),
    )
