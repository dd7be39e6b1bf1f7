"""Replicating subunits: block bootstrap of symbol sequences and layered image models."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exceptions import DomainError
from .genctl import SeedSpec

# ---------------------------------------------------------------------------
# Symbol sequences and the block bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolSequence:
    """A nonempty sequence of labels, optionally checked against an alphabet."""

    symbols: tuple
    alphabet: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if not self.symbols:
            raise DomainError("symbol sequence must be nonempty")
        if self.alphabet is not None:
            object.__setattr__(self, "alphabet", tuple(self.alphabet))
            extra = set(self.symbols) - set(self.alphabet)
            if extra:
                raise DomainError(f"symbols outside the alphabet: {sorted(map(str, extra))}")

    def __len__(self):
        return len(self.symbols)

    @property
    def length(self):
        return len(self.symbols)

    def text(self):
        """One character per symbol."""
        if any(not isinstance(s, str) or len(s) != 1 for s in self.symbols):
            raise DomainError("text form needs single-character symbols")
        return "".join(self.symbols)

    @classmethod
    def from_text(cls, line, alphabet=None):
        return cls(tuple(line.strip()), alphabet)


@dataclass(frozen=True)
class BlockModel:
    """Non-overlapping blocks of fixed length with exact rational frequencies."""

    block_length: int
    block_frequencies: dict = field(hash=False)

    def __post_init__(self):
        if self.block_length < 1:
            raise DomainError("block length must be at least 1")
        if not self.block_frequencies:
            raise DomainError("block model needs at least one block")
        if any(len(b) != self.block_length for b in self.block_frequencies):
            raise DomainError("every block must have the model's block length")
        if abs(float(sum(self.block_frequencies.values())) - 1.0) > 1e-12:
            raise DomainError("block frequencies must sum to 1")

    @property
    def blocks(self):
        return sorted(self.block_frequencies)

    def probabilities(self):
        return np.array([float(self.block_frequencies[b]) for b in self.blocks])


def fit_block_model(seq, block_length):
    """Empirical frequencies of the non-overlapping blocks; a trailing partial block is dropped."""
    if not 1 <= block_length <= len(seq):
        raise DomainError(f"block length must lie in [1, {len(seq)}], got {block_length}")
    n_blocks = len(seq) // block_length
    counts = Counter(tuple(seq.symbols[i * block_length : (i + 1) * block_length]) for i in range(n_blocks))
    return BlockModel(block_length, {b: Fraction(c, n_blocks) for b, c in counts.items()})


def simulate_sequence(model, min_length, seed=SeedSpec()):
    """String together blocks sampled with replacement until at least ``min_length`` symbols."""
    n_blocks = max(1, math.ceil(min_length / model.block_length))
    blocks = model.blocks
    idx = seed.generator(0).choice(len(blocks), size=n_blocks, p=model.probabilities())
    return SymbolSequence(tuple(s for i in idx for s in blocks[i]))


# ---------------------------------------------------------------------------
# Layered (multi-resolution) image models
# ---------------------------------------------------------------------------


class InsufficientResolution(DomainError):
    """A cell at the requested resolution holds no samples."""


@dataclass(frozen=True)
class EmpiricalLayer:
    """Resample the layer's fitted increments with replacement (pooled over cells)."""


@dataclass(frozen=True)
class FixedLayer:
    """Each cell keeps its own fitted increment; the pixel layer contributes 0."""


@dataclass(frozen=True)
class NoiseLayer:
    """Independent draws ``scale * noise`` per channel."""

    noise: object
    scale: float = 1.0


def cell_index(xy, level):
    """Cell id on the 2^level x 2^level grid over the unit square."""
    side = 1 << level
    ij = np.clip(np.floor(np.asarray(xy, dtype=float) * side).astype(np.int64), 0, side - 1)
    return ij[:, 0] * side + ij[:, 1]


@dataclass
class LayeredImageModel:
    """Color = base + per-layer cell increments + within-cell residual.

    ``means[l]`` holds the fitted mean color of each level-l cell (4**l
    cells); ``increments[l]`` the per-cell differences to the parent cell
    mean for l >= 1, and ``residuals`` the training colors minus their
    finest cell mean.  ``laws`` has R + 1 entries, one per layer.
    """

    R: int
    means: list
    increments: list
    residuals: np.ndarray
    positions: np.ndarray
    colors: np.ndarray
    laws: list

    def replications(self):
        """Number of fitted replications backing each layer law."""
        return [1] + [len(inc) for inc in self.increments[1:]] + [len(self.residuals)]

    def with_laws(self, laws):
        if len(laws) != self.R + 1:
            raise DomainError(f"need {self.R + 1} layer laws")
        return LayeredImageModel(self.R, self.means, self.increments, self.residuals, self.positions, self.colors, list(laws))

    def telescope(self):
        """Per-sample sum of base, increments and residual (equals the colors)."""
        out = np.broadcast_to(self.means[0][0], self.colors.shape).copy()
        for level in range(1, self.R):
            out += self.increments[level][cell_index(self.positions, level)]
        return out + self.residuals


def fit_layers(positions, colors, R, laws=None):
    """Fit per-cell means at levels 0..R-1 and the residual layer."""
    if not 1 <= R <= 3:
        raise DomainError("resolution must lie in 1..3")
    xy = np.asarray(positions, dtype=float)
    col = np.asarray(colors, dtype=float)
    if col.ndim == 1:
        col = col[:, None]
    if xy.ndim != 2 or xy.shape[1] != 2 or len(xy) != len(col) or len(xy) == 0:
        raise DomainError("need nonempty (x, y) positions with one color row each")
    means, increments = [], [None]
    for level in range(R):
        ids = cell_index(xy, level)
        n_cells = 4**level
        counts = np.bincount(ids, minlength=n_cells)
        if np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0])
            side = 1 << level
            raise InsufficientResolution(
                f"insufficient data resolution: no samples in level-{level} cell {divmod(empty, side)}"
            )
        sums = np.stack([np.bincount(ids, weights=col[:, c], minlength=n_cells) for c in range(col.shape[1])], axis=1)
        means.append(sums / counts[:, None])
        if level:
            side = 1 << level
            i, j = np.divmod(np.arange(n_cells), side)
            parent = (i // 2) * (side // 2) + j // 2
            increments.append(means[level] - means[level - 1][parent])
    residuals = col - means[R - 1][cell_index(xy, R - 1)]
    laws = list(laws) if laws is not None else [FixedLayer()] + [EmpiricalLayer()] * R
    model = LayeredImageModel(R, means, increments, residuals, xy, col, laws)
    return model.with_laws(laws)


def simulate_image(model, n_pixels, seed=SeedSpec()):
    """Fresh uniform positions; one draw per cell per layer, plus a per-pixel residual."""
    rng = seed.generator(0)
    C = model.colors.shape[1]
    xy = rng.random((n_pixels, 2))
    color = np.zeros((n_pixels, C))
    for level in range(model.R + 1):
        law = model.laws[level]
        if level == 0:
            pool, own = model.means[0], model.means[0]
            n_units, ids = 1, np.zeros(n_pixels, dtype=np.int64)
        elif level < model.R:
            pool = own = model.increments[level]
            n_units, ids = 4**level, cell_index(xy, level)
        else:
            pool, own = model.residuals, None
            n_units, ids = n_pixels, np.arange(n_pixels)
        if isinstance(law, FixedLayer):
            draws = own if own is not None else np.zeros((n_units, C))
        elif isinstance(law, EmpiricalLayer):
            draws = pool[rng.integers(0, len(pool), size=n_units)]
        elif isinstance(law, NoiseLayer):
            draws = law.scale * law.noise.sample(rng, (n_units, C))
        else:
            raise DomainError(f"unknown layer law {type(law).__name__}")
        color += draws[ids]
    return xy, color


def read_image_samples(fh):
    """Rows ``x,y,r,g,b`` (any number of color channels) into (positions, colors)."""
    rows = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise DomainError(f"line {lineno}: expected comma-separated numbers") from None
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 3:
        raise DomainError("image rows need x, y and at least one color value")
    return arr[:, :2], arr[:, 2:]


def write_image_samples(fh, positions, colors):
    for (x, y), c in zip(positions, np.atleast_2d(colors)):
        fh.write(",".join(format(v, ".10g") for v in (x, y, *c)) + "\n")
