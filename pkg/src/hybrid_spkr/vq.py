"""LBG codebook training and distortion scoring.

Training always minimizes squared error; the MSE/MAD choice only affects
scoring at identification time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, NumericError, ValidationError

MAX_SIZE_BITS = 10
# impostor compression may need larger codebooks than a speaker model
MAX_TRAIN_BITS = 16
LLOYD_TOL = 1e-6
LLOYD_MAX_ITER = 50
SPLIT_SCALE = 0.1
POWER_ITERS = 20
# bounds the temporary (rows x centroids x p) buffer in the exact scorer
_CHUNK_ELEMS = 1 << 22


class DistortionCriterion(str, enum.Enum):
    MSE = "mse"
    MAD = "mad"

    @classmethod
    def parse(cls, value) -> "DistortionCriterion":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"unknown distortion criterion {value!r}") from None


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    size_bits: int
    train_distortion: float
    seed: int = 0
    # average distortion after every Lloyd assignment step, all levels in order
    trace: tuple = field(default=(), compare=False, repr=False)
    # index into ``trace`` where each split level starts
    level_starts: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2:
            raise ValidationError("centroids must be a 2-D array")
        if c.shape[0] != 2 ** self.size_bits:
            raise ValidationError(f"{c.shape[0]} centroids for size_bits={self.size_bits}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("non-finite centroid")
        object.__setattr__(self, "centroids", c)

    @property
    def p(self) -> int:
        return self.centroids.shape[1]

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    def level_distortions(self) -> list[float]:
        """Final average distortion of each split level (1, 2, 4, ... cells)."""
        ends = list(self.level_starts[1:]) + [len(self.trace)]
        return [self.trace[e - 1] for e in ends]

    def to_dict(self) -> dict:
        return {
            "size_bits": self.size_bits,
            "p": self.p,
            "centroids": [float(v) for v in self.centroids.ravel()],
            "train_distortion": float(self.train_distortion),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        n = 2 ** d["size_bits"]
        c = np.array(d["centroids"], dtype=np.float64).reshape(n, d["p"])
        return cls(c, d["size_bits"], float(d["train_distortion"]), int(d.get("seed", 0)))


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # expanded form; used for training assignments only
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _assign(x, c):
    idx = np.argmin(_sq_dists(x, c), axis=1)
    diff = x - c[idx]
    return idx, (diff * diff).sum(1)


def _dominant_axis(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    centered = points - points.mean(0)
    cov = centered.T @ centered
    u = rng.standard_normal(points.shape[1])
    u /= np.linalg.norm(u)
    for _ in range(POWER_ITERS):
        v = cov @ u
        norm = np.linalg.norm(v)
        if norm == 0.0:
            break
        u = v / norm
    return u


def _split_offset(points: np.ndarray, centroid: np.ndarray, rng) -> np.ndarray:
    """Perturbation ``eps * u`` along the cell's dominant-variance direction."""
    if points.shape[0] < 2:
        return np.zeros_like(centroid)
    u = _dominant_axis(points, rng)
    eps = SPLIT_SCALE * float(np.std((points - centroid) @ u))
    return eps * u


def handle_empty_cell(centroids: np.ndarray, x: np.ndarray, assign: np.ndarray, empty: int, rng) -> np.ndarray:
    """Re-seed centroid ``empty`` next to the centroid owning the most vectors.

    Returns a new centroid array. The owner is left where it is, so the
    quantization error of the current assignment cannot grow.
    """
    counts = np.bincount(assign, minlength=centroids.shape[0])
    if counts.sum() == 0:
        raise NumericError("all cells empty")
    if counts[empty] > 0:
        return centroids
    owner = int(np.argmax(counts))
    members = x[assign == owner]
    offset = _split_offset(members, centroids[owner], rng)
    new = centroids.copy()
    if np.any(offset != 0.0):
        new[empty] = centroids[owner] + offset
    else:
        # degenerate cell: take the worst-quantized training vector instead
        err = ((x - centroids[assign]) ** 2).sum(1)
        new[empty] = x[int(np.argmax(err))]
    return new


def _cell_means(x, c, idx):
    counts = np.bincount(idx, minlength=c.shape[0])
    sums = np.zeros_like(c)
    np.add.at(sums, idx, x)
    out = c.copy()
    nonempty = counts > 0
    out[nonempty] = sums[nonempty] / counts[nonempty, None]
    return out


def _lloyd(x, c, rng, trace, tol=LLOYD_TOL, max_iter=LLOYD_MAX_ITER):
    prev = math.inf
    for _ in range(max_iter):
        idx, d = _assign(x, c)
        empties = np.flatnonzero(np.bincount(idx, minlength=c.shape[0]) == 0)
        if empties.size:
            for e in empties:
                c = handle_empty_cell(c, x, idx, int(e), rng)
                idx, d = _assign(x, c)
        dist = float(d.mean())
        trace.append(dist)
        c = _cell_means(x, c, idx)
        if dist == 0.0 or (prev - dist) <= tol * dist:
            break
        prev = dist
    # score the centroids actually returned
    idx, d = _assign(x, c)
    trace.append(float(d.mean()))
    return c, idx


def lbg_train(vectors, size_bits: int, seed: int = 0) -> Codebook:
    """Train a ``2**size_bits`` codebook by binary splitting plus Lloyd iterations.

    Starts from the global mean, then repeatedly splits every centroid into
    ``c +/- eps*u`` (``u`` = dominant-variance axis of its cell, ``eps`` = 0.1
    of the cell's spread along ``u``) and re-runs Lloyd until the relative
    improvement drops below 1e-6 or 50 iterations pass.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("training vectors must form a 2-D array")
    if not 0 <= size_bits <= MAX_TRAIN_BITS:
        raise ValidationError(f"size_bits must be in [0, {MAX_TRAIN_BITS}], got {size_bits}")
    target = 2 ** size_bits
    if x.shape[0] < target:
        raise InsufficientDataError(f"{x.shape[0]} training vectors for a {target}-entry codebook")
    rng = np.random.default_rng(seed)
    trace: list[float] = []
    level_starts = [0]
    c = x.mean(0, keepdims=True)
    idx = np.zeros(x.shape[0], dtype=np.intp)
    trace.append(float(((x - c) ** 2).sum(1).mean()))
    while c.shape[0] < target:
        offsets = np.array([_split_offset(x[idx == j], c[j], rng) for j in range(c.shape[0])])
        c = np.concatenate([c + offsets, c - offsets])
        level_starts.append(len(trace))
        c, idx = _lloyd(x, c, rng, trace)
    return Codebook(c, size_bits, trace[-1], seed, tuple(trace), tuple(level_starts))


def _pair_distances(frames: np.ndarray, centroids: np.ndarray, crit: DistortionCriterion) -> np.ndarray:
    # coordinates accumulated left to right so results are reproducible term by term
    acc = np.zeros((frames.shape[0], centroids.shape[0]))
    for j in range(frames.shape[1]):
        diff = frames[:, j, None] - centroids[None, :, j]
        acc += diff * diff if crit is DistortionCriterion.MSE else np.abs(diff)
    return acc


def nearest_distances(frames, cb: Codebook | np.ndarray, crit=DistortionCriterion.MSE) -> np.ndarray:
    """Per-frame distance to the nearest centroid."""
    crit = DistortionCriterion.parse(crit)
    centroids = cb.centroids if isinstance(cb, Codebook) else np.asarray(cb, dtype=np.float64)
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] != centroids.shape[1]:
        raise ValidationError(f"frame dimension {frames.shape[1]} != codebook dimension {centroids.shape[1]}")
    rows = max(1, _CHUNK_ELEMS // max(1, centroids.shape[0]))
    out = np.empty(frames.shape[0])
    for s in range(0, frames.shape[0], rows):
        out[s:s + rows] = _pair_distances(frames[s:s + rows], centroids, crit).min(1)
    return out


def quantize_distortion(frames, cb, crit=DistortionCriterion.MSE) -> float:
    """Accumulated nearest-centroid distortion of an utterance (sum over frames)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.size == 0:
        raise ValidationError("cannot score an empty frame sequence")
    return math.fsum(nearest_distances(frames, cb, crit))


def rank_ascending(scores) -> list[tuple[int, float]]:
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    return [(int(i), float(scores[i])) for i in order]


def vq_identify(frames, models, crit=DistortionCriterion.MSE) -> list[tuple[int, float]]:
    """Rank speakers by accumulated distortion, lowest first; ties go to the lower index."""
    if len(models) == 0:
        raise ValidationError("no codebooks to score against")
    return rank_ascending([quantize_distortion(frames, cb, crit) for cb in models])
