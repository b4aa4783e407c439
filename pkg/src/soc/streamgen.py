"""Labelled synthetic streams from planted cores with outliers.

Every core is a union of polyline strokes thickened into a tube; arcs
(bananas) and letters are polylines too.  Core points live in the first two
coordinates; the remaining ``noise_dims`` coordinates are Gaussian noise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

OUTLIER = -1


class RecipeError(ValueError):
    pass


# Stroke sets for letters, in a unit-height box.
GLYPHS: dict[str, list[list[tuple[float, float]]]] = {
    "L": [[(0.0, 1.0), (0.0, 0.0), (0.6, 0.0)]],
    "T": [[(0.0, 1.0), (0.8, 1.0)], [(0.4, 1.0), (0.4, 0.0)]],
    "V": [[(0.0, 1.0), (0.4, 0.0), (0.8, 1.0)]],
    "Z": [[(0.0, 1.0), (0.7, 1.0), (0.0, 0.0), (0.7, 0.0)]],
    "N": [[(0.0, 0.0), (0.0, 1.0), (0.7, 0.0), (0.7, 1.0)]],
    "I": [[(0.0, 0.0), (0.0, 1.0)]],
    "E": [[(0.6, 1.0), (0.0, 1.0), (0.0, 0.0), (0.6, 0.0)], [(0.0, 0.5), (0.45, 0.5)]],
}


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return np.linalg.norm(p - a, axis=1)
    t = np.clip(((p - a) @ ab) / L2, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


@dataclass
class CoreShape:
    """A tube of half-width ``thickness/2`` around a set of polyline strokes."""

    strokes: list[np.ndarray]
    thickness: float = 0.0
    label: int = 0
    name: str = "core"

    def __post_init__(self):
        self.strokes = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in self.strokes]
        if not self.strokes or any(s.shape[1] != 2 for s in self.strokes):
            raise RecipeError("a core needs at least one stroke of 2-D vertices")
        if self.thickness < 0:
            raise RecipeError("thickness must be non-negative")
        segs = []
        for s in self.strokes:
            if len(s) == 1:
                segs.append((s[0], s[0]))
            segs.extend((s[i], s[i + 1]) for i in range(len(s) - 1))
        self._segments = segs
        self._lengths = np.array([np.linalg.norm(b - a) for a, b in segs])

    @classmethod
    def point(cls, xy, label: int = 0) -> "CoreShape":
        return cls([np.asarray(xy, dtype=np.float64)[None, :]], 0.0, label, "point")

    @classmethod
    def segment(cls, a, b, thickness: float = 0.0, label: int = 0) -> "CoreShape":
        return cls([np.array([a, b], dtype=np.float64)], thickness, label, "segment")

    @classmethod
    def arc(cls, center, radius, start_deg, end_deg, thickness, label=0, n_vertices=65) -> "CoreShape":
        t = np.radians(np.linspace(start_deg, end_deg, n_vertices))
        pts = np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])
        return cls([pts], thickness, label, "arc")

    @classmethod
    def letter(cls, glyph: str, origin, size: float, thickness: float, label: int = 0) -> "CoreShape":
        if glyph not in GLYPHS:
            raise RecipeError(f"unknown glyph {glyph!r}")
        o = np.asarray(origin, dtype=np.float64)
        strokes = [o + size * np.asarray(s, dtype=np.float64) for s in GLYPHS[glyph]]
        return cls(strokes, thickness, label, f"letter-{glyph}")

    @property
    def length(self) -> float:
        return float(self._lengths.sum())

    def distance_to(self, p: np.ndarray) -> np.ndarray:
        """Distance from each 2-D point to the stroke skeleton (not the tube)."""
        p = np.atleast_2d(p)
        return np.min([_point_segment_distance(p, a, b) for a, b in self._segments], axis=0)

    def contains(self, p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return self.distance_to(p) <= self.thickness / 2 + tol

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform position along the strokes, uniform offset across the tube."""
        if self._lengths.sum() == 0.0:
            seg = np.zeros(n, dtype=np.int64)
        else:
            seg = rng.choice(len(self._segments), size=n, p=self._lengths / self._lengths.sum())
        t = rng.random(n)
        a = np.array([s[0] for s in self._segments])[seg]
        b = np.array([s[1] for s in self._segments])[seg]
        base = a + t[:, None] * (b - a)
        half = self.thickness / 2
        if half == 0.0:
            return base
        d = b - a
        norm = np.linalg.norm(d, axis=1, keepdims=True)
        # degenerate segments get a random direction
        ang = rng.random(n) * 2 * np.pi
        rand_dir = np.column_stack([np.cos(ang), np.sin(ang)])
        perp = np.where(norm > 0, np.column_stack([-d[:, 1], d[:, 0]]) / np.where(norm > 0, norm, 1), rand_dir)
        off = (rng.random(n) * 2 - 1) * half
        return base + off[:, None] * perp

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        allv = np.vstack(self.strokes)
        half = self.thickness / 2
        return allv.min(axis=0) - half, allv.max(axis=0) + half


@dataclass
class OutlierSampler:
    """Uniform over the padded bounding box of the cores, minus a margin around them."""

    cores: Sequence[CoreShape]
    pad: float = 0.1
    margin: float = 0.03

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.min([c.bounds()[0] for c in self.cores], axis=0) - self.pad
        hi = np.max([c.bounds()[1] for c in self.cores], axis=0) + self.pad
        out = np.empty((0, 2))
        while len(out) < n:
            cand = lo + rng.random((max(2 * (n - len(out)), 16), 2)) * (hi - lo)
            dist = np.min([c.distance_to(cand) - c.thickness / 2 for c in self.cores], axis=0)
            out = np.vstack([out, cand[dist > self.margin]])
        return out[:n]


@dataclass
class LabeledPoint:
    point: np.ndarray
    true_label: int


@dataclass
class Stream:
    """A labelled stream held column-wise."""

    X: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        for x, y in zip(self.X, self.labels.tolist()):
            yield LabeledPoint(x, y)


@dataclass
class ModelConfig:
    cores: list[CoreShape]
    pi: list[float]
    p: list[float]
    outlier_sampler: OutlierSampler | None = None
    noise_dims: int = 18
    noise_sigma: float = 0.01
    total_points: int = 1000
    seed: int = 0

    def __post_init__(self):
        k = len(self.cores)
        if k == 0:
            raise RecipeError("at least one core is required")
        if len(self.pi) != k or len(self.p) != k:
            raise RecipeError("pi and p need one entry per core")
        if any(v < 0 for v in self.pi) or not math.isclose(sum(self.pi), 1.0, abs_tol=1e-9):
            raise RecipeError("cluster priors must be non-negative and sum to 1")
        if any(not 0.0 < v <= 1.0 for v in self.p):
            raise RecipeError("core probabilities must lie in (0, 1]")
        if self.outlier_sampler is None:
            self.outlier_sampler = OutlierSampler(self.cores)


def _finish(xy: np.ndarray, labels: np.ndarray, noise_dims: int, sigma: float, rng) -> Stream:
    noise = rng.normal(0.0, sigma, size=(len(labels), noise_dims))
    X = np.hstack([xy, noise])
    perm = rng.permutation(len(labels))
    return Stream(X[perm], labels[perm])


def generate_stream(cfg: ModelConfig) -> Stream:
    """Draw ``total_points`` points from the planted-core model, then shuffle."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.total_points
    cluster = rng.choice(len(cfg.cores), size=n, p=np.asarray(cfg.pi) / np.sum(cfg.pi))
    in_core = rng.random(n) < np.asarray(cfg.p)[cluster]
    xy = np.empty((n, 2))
    labels = np.full(n, OUTLIER, dtype=np.int64)
    for i, core in enumerate(cfg.cores):
        sel = np.flatnonzero((cluster == i) & in_core)
        xy[sel] = core.sample(sel.size, rng)
        labels[sel] = i
    out = np.flatnonzero(~in_core)
    xy[out] = cfg.outlier_sampler.sample(out.size, rng)
    return _finish(xy, labels, cfg.noise_dims, cfg.noise_sigma, rng)


# recipes

@dataclass
class Recipe:
    """Exact-count dataset description (the B1/B2/L1/L2 style)."""

    name: str
    cores: list[CoreShape]
    counts: list[int]
    outliers: int
    sampler: OutlierSampler
    noise_dims: int = 18
    noise_sigma: float = 0.01
    seed: int = 0
    version: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts) + self.outliers


def _core_from_dict(c: dict, label: int) -> CoreShape:
    kind = c.get("shape")
    th = float(c.get("thickness", 0.0))
    if kind == "arc":
        return CoreShape.arc(c["center"], c["radius"], c["start_deg"], c["end_deg"], th, label)
    if kind == "letter":
        return CoreShape.letter(c["glyph"], c["origin"], c["size"], th, label)
    if kind == "polyline":
        return CoreShape([np.asarray(s, dtype=float) for s in c["strokes"]], th, label, "polyline")
    if kind == "point":
        return CoreShape.point(c["at"], label)
    raise RecipeError(f"unknown shape id {kind!r}")


def parse_recipe(doc: dict) -> Recipe:
    try:
        cores = [_core_from_dict(c, i) for i, c in enumerate(doc["cores"])]
        counts = [int(c["count"]) for c in doc["cores"]]
        out = doc.get("outliers", {})
        sampler = OutlierSampler(cores, float(out.get("pad", 0.1)), float(out.get("margin", 0.03)))
        recipe = Recipe(
            name=str(doc.get("name", "custom")),
            cores=cores,
            counts=counts,
            outliers=int(out.get("count", 0)),
            sampler=sampler,
            noise_dims=int(doc.get("noise_dims", 18)),
            noise_sigma=float(doc.get("noise_sigma", 0.01)),
            seed=int(doc.get("seed", 0)),
            version=int(doc.get("version", 1)),
        )
    except (KeyError, TypeError) as exc:
        raise RecipeError(f"malformed recipe: {exc!r}") from exc
    if any(c < 0 for c in counts) or recipe.outliers < 0:
        raise RecipeError("counts must be non-negative")
    if recipe.noise_sigma < 0 or recipe.noise_dims < 0:
        raise RecipeError("noise settings must be non-negative")
    return recipe


BUILTIN = ("B1", "B2", "L1", "L2")


def load_recipe(name_or_path: str | Path) -> Recipe:
    """Load a built-in recipe by name (``B1`` ...) or a JSON recipe file."""
    s = str(name_or_path)
    if s.upper() in BUILTIN and not Path(s).exists():
        text = resources.files("soc.recipes").joinpath(f"{s.lower()}.json").read_text()
    else:
        try:
            text = Path(s).read_text()
        except OSError as exc:
            raise RecipeError(f"cannot read recipe {s}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecipeError(f"recipe {s} is not valid JSON: {exc}") from exc
    return parse_recipe(doc)


def generate_recipe(recipe: Recipe, seed: int | None = None) -> Stream:
    rng = np.random.default_rng(recipe.seed if seed is None else seed)
    xy = [core.sample(n, rng) for core, n in zip(recipe.cores, recipe.counts)]
    labels = [np.full(n, i, dtype=np.int64) for i, n in enumerate(recipe.counts)]
    xy.append(recipe.sampler.sample(recipe.outliers, rng))
    labels.append(np.full(recipe.outliers, OUTLIER, dtype=np.int64))
    return _finish(np.vstack(xy), np.concatenate(labels), recipe.noise_dims, recipe.noise_sigma, rng)


def recipe_model(recipe: Recipe, seed: int | None = None, total_points: int | None = None) -> ModelConfig:
    """The probabilistic model whose expectations match a recipe's counts."""
    n_core = sum(recipe.counts)
    total = recipe.total
    pi = [c / n_core for c in recipe.counts]
    p = [n_core / total] * len(recipe.cores)
    return ModelConfig(
        recipe.cores, pi, p, recipe.sampler, recipe.noise_dims, recipe.noise_sigma,
        total if total_points is None else total_points, recipe.seed if seed is None else seed,
    )


# model diagnostics

@dataclass
class ModelStats:
    delta: float
    s_estimate: list[int]
    gamma_i: list[float]
    Gamma_i: list[float]
    gamma: float
    Gamma: float


def measure_delta(cores: Sequence[CoreShape], n_probe: int = 2000, seed: int = 0) -> float:
    """Monte-Carlo minimum distance between samples of distinct cores.

    The samples for ``n_probe`` extend those for any smaller ``n_probe`` with
    the same seed, so the estimate never increases as ``n_probe`` grows.
    """
    if len(cores) < 2:
        raise ValueError("need at least two cores to measure separation")
    from scipy.spatial import cKDTree

    samples = []
    for i, c in enumerate(cores):
        rng = np.random.default_rng([seed, i])
        samples.append(_prefix_sample(c, n_probe, rng))
    best = math.inf
    for i in range(len(cores)):
        tree = cKDTree(samples[i])
        for j in range(i + 1, len(cores)):
            d, _ = tree.query(samples[j], k=1)
            best = min(best, float(d.min()))
    return best


def _prefix_sample(core: CoreShape, n: int, rng: np.random.Generator) -> np.ndarray:
    # one point per draw keeps sample prefixes independent of n
    return np.vstack([core.sample(1, rng) for _ in range(n)])


def estimate_covering(core: CoreShape, radius: float, n_samples: int = 2000, seed: int = 0) -> int:
    """Greedy ball cover of core samples: an upper estimate of the covering number."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    pts = core.sample(n_samples, np.random.default_rng(seed))
    uncovered = np.ones(len(pts), dtype=bool)
    count = 0
    while uncovered.any():
        c = pts[np.argmax(uncovered)]
        uncovered &= np.linalg.norm(pts - c, axis=1) > radius
        count += 1
    return count


def model_stats(cfg: ModelConfig, delta: float | None = None, s: Sequence[int] | None = None) -> ModelStats:
    """Separation, covering numbers and the per-cluster probabilities Gamma_i, gamma_i.

    ``pb_i = 1/s_i`` with ``s_i`` the greedy cover of core ``i`` by balls of
    radius ``delta/4``.  Both ``delta`` and ``s`` may be supplied directly.
    """
    k = len(cfg.cores)
    if delta is None:
        delta = measure_delta(cfg.cores) if k > 1 else math.inf
    if s is None:
        s = [estimate_covering(c, delta / 4) if math.isfinite(delta) else 1 for c in cfg.cores]
    pf = sum(1.0 - p for p in cfg.p)
    Gamma_i, gamma_i = [], []
    for pi, p, si in zip(cfg.pi, cfg.p, s):
        denom = pf + pi * p
        Gamma_i.append(pi * p * (1.0 / si) / denom)
        gamma_i.append(pf / denom)
    return ModelStats(float(delta), list(s), gamma_i, Gamma_i, max(gamma_i), min(Gamma_i))
