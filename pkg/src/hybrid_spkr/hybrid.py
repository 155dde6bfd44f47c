"""VQ preselection + MLP rescoring, parameter sweeps and the operation-count model.

The fused score of a candidate speaker is

    combined = distortion - alpha * similarity

where ``distortion`` is its accumulated VQ error and ``similarity`` its
accumulated MLP output over the same frames. Lower is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._parallel import pmap
from .errors import UndefinedCorrelationError, UnknownLabelError, ValidationError
from .neural import MlpModel, accumulate_similarity
from .vq import Codebook, DistortionCriterion, quantize_distortion

MODES = ("vq", "mlp", "hybrid", "preselect_mlp")


@dataclass(frozen=True)
class SpeakerModel:
    id: str
    codebook: Codebook
    mlp: MlpModel

    def __post_init__(self):
        if self.codebook.p != self.mlp.n_i:
            raise ValidationError(f"speaker {self.id}: codebook dimension {self.codebook.p} != MLP inputs {self.mlp.n_i}")


@dataclass(frozen=True)
class HybridConfig:
    alpha: float = 1.0
    k: int = 2
    criterion: DistortionCriterion = DistortionCriterion.MAD

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValidationError("alpha must be a finite value >= 0")
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        object.__setattr__(self, "criterion", DistortionCriterion.parse(self.criterion))

    def check(self, n_speakers: int) -> None:
        if self.k > n_speakers:
            raise ValidationError(f"k={self.k} exceeds the {n_speakers} enrolled speakers")


@dataclass(frozen=True)
class Utterance:
    label: str
    frames: np.ndarray
    name: str = ""


def combine_measure(error: float, similarity: float, alpha: float) -> float:
    if alpha < 0:
        raise ValidationError("alpha must be >= 0")
    return error - alpha * similarity


# --- per-utterance decisions --------------------------------------------------


def preselect(distortions, k: int) -> np.ndarray:
    """Indices of the ``k`` lowest distortions, ascending (ties by index)."""
    return np.argsort(np.asarray(distortions), kind="stable")[:k]


def _fuse(cand: np.ndarray, d: np.ndarray, s: np.ndarray, alpha: float):
    fused = d[cand] - alpha * s[cand]
    order = np.lexsort((cand, fused))
    return [(int(cand[i]), float(fused[i])) for i in order]


def _mlp_rank(cand: np.ndarray, s: np.ndarray):
    order = np.lexsort((cand, -s[cand]))
    return [(int(cand[i]), float(s[cand[i]])) for i in order]


def rank_scores(d, s, k: int, alpha: float, scheme: str = "hybrid"):
    """Rank the ``k`` preselected candidates of one utterance.

    ``scheme="hybrid"`` sorts by the fused score, ascending;
    ``scheme="preselect_mlp"`` ignores distortion after preselection and sorts
    by similarity, descending.
    """
    d = np.asarray(d, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    cand = preselect(d, k)
    if scheme == "hybrid":
        return _fuse(cand, d, s, alpha)
    if scheme == "preselect_mlp":
        return _mlp_rank(cand, s)
    raise ValidationError(f"unknown scheme {scheme!r}")


def hybrid_identify(frames, models: list[SpeakerModel], cfg: HybridConfig) -> list[tuple[str, float]]:
    """VQ-preselect ``cfg.k`` speakers, score only their MLPs, rank by fused score."""
    if not models:
        raise ValidationError("no enrolled speakers")
    cfg.check(len(models))
    d = np.array([quantize_distortion(frames, m.codebook, cfg.criterion) for m in models])
    cand = preselect(d, cfg.k)
    s = np.zeros(len(models))
    for i in cand:
        s[i] = accumulate_similarity(models[i].mlp, frames)
    return [(models[i].id, v) for i, v in _fuse(cand, d, s, cfg.alpha)]


# --- score tables -------------------------------------------------------------


@dataclass
class ScoreTable:
    """Distortion and similarity of every (utterance, speaker) pair."""

    speaker_ids: list
    labels: list
    names: list
    distortion: np.ndarray  # (n_utterances, n_speakers)
    similarity: np.ndarray
    criterion: DistortionCriterion

    @property
    def n_speakers(self) -> int:
        return len(self.speaker_ids)

    def label_index(self) -> np.ndarray:
        pos = {sid: i for i, sid in enumerate(self.speaker_ids)}
        missing = sorted({lab for lab in self.labels if lab not in pos})
        if missing:
            raise UnknownLabelError(f"test labels without an enrolled model: {missing}")
        return np.array([pos[lab] for lab in self.labels], dtype=int)


def _score_one(utt: Utterance, models, criterion):
    d = [quantize_distortion(utt.frames, m.codebook, criterion) for m in models]
    s = [accumulate_similarity(m.mlp, utt.frames) for m in models]
    return d, s


def score_utterances(utterances, models: list[SpeakerModel], criterion=DistortionCriterion.MSE, jobs: int = 1) -> ScoreTable:
    criterion = DistortionCriterion.parse(criterion)
    if not models:
        raise ValidationError("no enrolled speakers")
    utterances = list(utterances)
    rows = pmap(partial(_score_one, models=models, criterion=criterion), utterances, jobs)
    d = np.array([r[0] for r in rows], dtype=np.float64).reshape(len(utterances), len(models))
    s = np.array([r[1] for r in rows], dtype=np.float64).reshape(len(utterances), len(models))
    return ScoreTable([m.id for m in models], [u.label for u in utterances], [u.name for u in utterances], d, s, criterion)


def _as_table(test_set, models, criterion) -> ScoreTable:
    if isinstance(test_set, ScoreTable):
        return test_set
    if models is None:
        raise ValidationError("models are required when scoring raw utterances")
    return score_utterances(test_set, models, criterion)


def decisions(table: ScoreTable, mode: str, k: int = 1, alpha: float = 0.0) -> np.ndarray:
    """Top-1 speaker index per utterance under one identification mode."""
    if mode == "vq":
        return np.array([preselect(row, 1)[0] for row in table.distortion], dtype=int)
    if mode == "mlp":
        return np.array([np.argsort(-row, kind="stable")[0] for row in table.similarity], dtype=int)
    if mode in ("hybrid", "preselect_mlp"):
        if not 1 <= k <= table.n_speakers:
            raise ValidationError(f"k must be in [1, {table.n_speakers}]")
        return np.array([rank_scores(d, s, k, alpha, mode)[0][0]
                         for d, s in zip(table.distortion, table.similarity)], dtype=int)
    raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")


def error_count(table: ScoreTable, mode: str, k: int = 1, alpha: float = 0.0) -> int:
    return int(np.sum(decisions(table, mode, k, alpha) != table.label_index()))


def error_rate(table: ScoreTable, mode: str, k: int = 1, alpha: float = 0.0) -> float:
    n = len(table.labels)
    return error_count(table, mode, k, alpha) / n if n else 0.0


# --- sweeps -------------------------------------------------------------------


def sweep_k(test_set, models=None, alpha: float = 1.0, criterion=DistortionCriterion.MAD):
    """Rows ``(K, combined_error, mlp_only_error)`` for K = 1..N."""
    table = _as_table(test_set, models, criterion)
    return [(k, error_rate(table, "hybrid", k, alpha), error_rate(table, "preselect_mlp", k))
            for k in range(1, table.n_speakers + 1)]


def default_alpha_grid(table: ScoreTable, n: int = 100) -> np.ndarray:
    """0 followed by ``n - 1`` log-spaced values up to 10x the distortion/similarity median ratio."""
    med_s = float(np.median(table.similarity))
    med_d = float(np.median(table.distortion))
    top = 10.0 * med_d / med_s if med_s > 0 else 10.0
    if not (top > 0 and math.isfinite(top)):
        top = 10.0
    return np.concatenate([[0.0], np.logspace(math.log10(top) - 4.0, math.log10(top), n - 1)])


def sweep_alpha(test_set, models=None, alphas=None, k: int = 2, criterion=DistortionCriterion.MAD):
    """Rows ``(alpha, error)`` over the grid (default: :func:`default_alpha_grid`)."""
    table = _as_table(test_set, models, criterion)
    grid = default_alpha_grid(table) if alphas is None else np.asarray(alphas, dtype=np.float64)
    if grid.size == 0:
        raise ValidationError("alpha grid is empty")
    return [(float(a), error_rate(table, "hybrid", k, float(a))) for a in grid]


def best_alpha(rows) -> tuple[float, float]:
    """Grid argmin of the error; ties resolved toward the smallest alpha."""
    return min(rows, key=lambda r: (r[1], r[0]))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise ValidationError("need two equally sized samples with at least 2 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance; correlation undefined")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def score_correlation(test_set, models=None, criterion=DistortionCriterion.MSE) -> float:
    """Pearson correlation between VQ distortion and MLP similarity over all pairs."""
    table = _as_table(test_set, models, criterion)
    return pearson(table.distortion, table.similarity)


# --- evaluation report --------------------------------------------------------


@dataclass
class EvalReport:
    mode: str
    criterion: str
    k: int
    alpha: float
    n_utterances: int
    n_errors: int
    error_rate: float
    confusion: dict
    per_utterance: list

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "criterion": self.criterion,
            "k": self.k,
            "alpha": self.alpha,
            "n_utterances": self.n_utterances,
            "n_errors": self.n_errors,
            "error_rate": self.error_rate,
            "confusion": self.confusion,
            "per_utterance": self.per_utterance,
        }


def _ranking(table: ScoreTable, u: int, mode: str, k: int, alpha: float):
    d, s = table.distortion[u], table.similarity[u]
    if mode == "vq":
        order = np.argsort(d, kind="stable")
        return [(int(i), float(d[i])) for i in order]
    if mode == "mlp":
        order = np.argsort(-s, kind="stable")
        return [(int(i), float(s[i])) for i in order]
    return rank_scores(d, s, k, alpha, mode)


def evaluate(test_set, models=None, cfg: HybridConfig | None = None, mode: str = "hybrid") -> EvalReport:
    cfg = cfg or HybridConfig()
    table = _as_table(test_set, models, cfg.criterion)
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    truth = table.label_index()
    if mode in ("hybrid", "preselect_mlp"):
        cfg.check(table.n_speakers)
    ids = table.speaker_ids
    confusion = {sid: {} for sid in ids}
    per_utt = []
    n_err = 0
    for u in range(len(table.labels)):
        ranked = _ranking(table, u, mode, cfg.k, cfg.alpha)
        pred = ranked[0][0]
        n_err += int(pred != truth[u])
        row = confusion[ids[truth[u]]]
        row[ids[pred]] = row.get(ids[pred], 0) + 1
        per_utt.append({
            "name": table.names[u],
            "label": table.labels[u],
            "predicted": ids[pred],
            "ranking": [[ids[i], v] for i, v in ranked],
        })
    n = len(table.labels)
    return EvalReport(mode, table.criterion.value, cfg.k, cfg.alpha, n, n_err, n_err / n if n else 0.0,
                      confusion, per_utt)


# --- operation counts ---------------------------------------------------------


@dataclass(frozen=True)
class CostModelParams:
    n_speakers: int
    lpc_order: int = 12
    codebook_size: int = 32
    k: int = 2
    n_i: int = 12
    n_h1: int = 16
    c_tg: int = 10

    def __post_init__(self):
        for name in ("n_speakers", "lpc_order", "codebook_size", "n_i", "n_h1", "c_tg"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.k < 0:
            raise ValidationError("k must be >= 0")


def cost_vq(params: CostModelParams) -> int:
    """Multiply-accumulates of exhaustive VQ scoring: T_cl * p * N."""
    return params.codebook_size * params.lpc_order * params.n_speakers


def cost_combined(params: CostModelParams) -> int:
    per_mlp = params.n_i * params.n_h1 + params.n_h1 + params.c_tg * params.n_h1
    return cost_vq(params) + params.k * per_mlp


def cost_ratio_curve(n_values, params: CostModelParams, baseline_codebook_size: int = 128):
    """Rows ``(N, cost_vq_baseline, cost_combined, ratio)``."""
    rows = []
    for n in n_values:
        p = CostModelParams(int(n), params.lpc_order, params.codebook_size, params.k,
                            params.n_i, params.n_h1, params.c_tg)
        base = cost_vq(CostModelParams(int(n), params.lpc_order, baseline_codebook_size))
        comb = cost_combined(p)
        rows.append((int(n), base, comb, base / comb))
    return rows
