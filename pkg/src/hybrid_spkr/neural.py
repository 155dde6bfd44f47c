"""Per-speaker 12-16-1 MLP trained with Levenberg-Marquardt.

Target speaker frames are labeled 1 and impostor frames 0. The impostor pool
is first compressed with an LBG codebook so both classes carry similar
weight in the squared-error objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import InsufficientDataError, ValidationError
from .vq import Codebook, _assign, lbg_train


@dataclass(frozen=True)
class MlpModel:
    w1: np.ndarray  # (n_h1, n_i)
    b1: np.ndarray  # (n_h1,)
    w2: np.ndarray  # (n_h1,)
    b2: float
    # optional input standardization, off unless TrainConfig.normalize is set
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    train_sse: float = math.nan

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64).reshape(-1)
        w2 = np.asarray(self.w2, dtype=np.float64).reshape(-1)
        if w1.ndim != 2 or b1.size != w1.shape[0] or w2.size != w1.shape[0]:
            raise ValidationError("inconsistent MLP dimensions")
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(b1)) and np.all(np.isfinite(w2)) and math.isfinite(self.b2)):
            raise ValidationError("non-finite MLP parameter")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", float(self.b2))

    @property
    def n_i(self) -> int:
        return self.w1.shape[1]

    @property
    def n_h1(self) -> int:
        return self.w1.shape[0]

    @property
    def n_params(self) -> int:
        return self.n_h1 * (self.n_i + 2) + 1

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def with_params(self, theta: np.ndarray, **changes) -> "MlpModel":
        h, i = self.n_h1, self.n_i
        w1 = theta[: h * i].reshape(h, i)
        b1 = theta[h * i: h * i + h]
        w2 = theta[h * i + h: h * i + 2 * h]
        kw = dict(x_mean=self.x_mean, x_scale=self.x_scale, train_sse=self.train_sse)
        kw.update(changes)
        return MlpModel(w1.copy(), b1.copy(), w2.copy(), float(theta[-1]), **kw)

    def to_dict(self) -> dict:
        d = {
            "n_i": self.n_i,
            "n_h1": self.n_h1,
            "w1": [float(v) for v in self.w1.ravel()],
            "b1": [float(v) for v in self.b1],
            "w2": [float(v) for v in self.w2],
            "b2": self.b2,
            "train_sse": float(self.train_sse),
        }
        if self.x_mean is not None:
            d["x_mean"] = [float(v) for v in self.x_mean]
            d["x_scale"] = [float(v) for v in self.x_scale]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        h, i = d["n_h1"], d["n_i"]
        mean = np.array(d["x_mean"]) if "x_mean" in d else None
        scale = np.array(d["x_scale"]) if "x_scale" in d else None
        return cls(np.array(d["w1"]).reshape(h, i), np.array(d["b1"]), np.array(d["w2"]), d["b2"],
                   mean, scale, float(d.get("train_sse", math.nan)))


@dataclass(frozen=True)
class TrainConfig:
    n_starts: int = 4
    epochs_per_start: int = 8
    final_epochs: int = 50
    mu_init: float = 1e-3
    mu_factor: float = 10.0
    mu_max: float = 1e10
    seed: int = 0
    n_hidden: int = 16
    early_stop_rel: float = 1e-8
    normalize: bool = False

    def __post_init__(self):
        if min(self.n_starts, self.epochs_per_start, self.n_hidden) < 1 or self.final_epochs < 0:
            raise ValidationError("n_starts, epochs_per_start and n_hidden must be positive")
        if not (self.mu_init > 0 and self.mu_max > 0):
            raise ValidationError("mu_init and mu_max must be positive")
        if self.mu_factor <= 1:
            raise ValidationError("mu_factor must exceed 1")


def _inputs(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_i:
        raise ValidationError(f"input has {x.shape[-1]} features, model expects {model.n_i}")
    if model.x_mean is not None:
        x = (x - model.x_mean) / model.x_scale
    return x


def forward(model: MlpModel, x):
    """Network output sigma(w2 . sigma(W1 x + b1) + b2) for one vector or a batch of rows."""
    xs = _inputs(model, x)
    hidden = expit(xs @ model.w1.T + model.b1)
    out = expit(hidden @ model.w2 + model.b2)
    return float(out) if np.ndim(out) == 0 else out


def jacobian(model: MlpModel, x: np.ndarray):
    """Outputs and their derivatives with respect to ``model.flat()``.

    Returns ``(y, J)`` with ``J`` of shape ``(n_samples, n_params)``.
    """
    xs = _inputs(model, np.atleast_2d(x))
    hidden = expit(xs @ model.w1.T + model.b1)
    y = expit(hidden @ model.w2 + model.b2)
    g = y * (1.0 - y)
    dh = g[:, None] * model.w2[None, :] * hidden * (1.0 - hidden)
    n = xs.shape[0]
    jac = np.concatenate([
        (dh[:, :, None] * xs[:, None, :]).reshape(n, -1),
        dh,
        g[:, None] * hidden,
        g[:, None],
    ], axis=1)
    return y, jac


def sse(model: MlpModel, x, t) -> float:
    r = np.asarray(t) - forward(model, x)
    return float(r @ r)


def init_model(n_i: int, n_h1: int, rng: np.random.Generator) -> MlpModel:
    """Uniform [-0.5, 0.5] weights scaled by 1/sqrt(fan-in)."""
    w1 = rng.uniform(-0.5, 0.5, (n_h1, n_i)) / math.sqrt(n_i)
    b1 = rng.uniform(-0.5, 0.5, n_h1) / math.sqrt(n_i)
    w2 = rng.uniform(-0.5, 0.5, n_h1) / math.sqrt(n_h1)
    b2 = rng.uniform(-0.5, 0.5) / math.sqrt(n_h1)
    return MlpModel(w1, b1, w2, b2)


@dataclass
class LmRun:
    model: MlpModel
    sse: float
    mu: float
    # SSE before training followed by the SSE after every accepted step
    history: list = field(default_factory=list)
    stalled: bool = False


def lm_fit(model: MlpModel, x, t, epochs: int, cfg: TrainConfig, mu: float | None = None,
           early_stop_rel: float = 0.0) -> LmRun:
    """Run up to ``epochs`` Levenberg-Marquardt iterations on the full batch.

    One epoch solves ``(J'J + mu I) d = J'e`` (Cholesky), retrying with a
    larger ``mu`` until the step lowers the SSE or ``mu`` passes ``mu_max``.
    The latter ends training early and is reported as ``stalled``.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    mu = cfg.mu_init if mu is None else mu
    theta = model.flat()
    y, jac = jacobian(model, x)
    e = t - y
    cur = float(e @ e)
    history = [cur]
    stalled = False
    eye = np.eye(theta.size)
    for _ in range(epochs):
        jtj = jac.T @ jac
        jte = jac.T @ e
        accepted = False
        while mu <= cfg.mu_max:
            try:
                step = linalg.cho_solve(linalg.cho_factor(jtj + mu * eye), jte)
            except linalg.LinAlgError:
                mu *= cfg.mu_factor
                continue
            cand = model.with_params(theta + step)
            y_new, jac_new = jacobian(cand, x)
            e_new = t - y_new
            new = float(e_new @ e_new)
            if new < cur:
                accepted = True
                mu /= cfg.mu_factor
                break
            mu *= cfg.mu_factor
        if not accepted:
            stalled = True
            break
        improvement = (cur - new) / cur if cur > 0 else 0.0
        model, theta, jac, e, cur = cand, theta + step, jac_new, e_new, new
        history.append(cur)
        if cur == 0.0 or improvement < early_stop_rel:
            break
    return LmRun(model, cur, mu, history, stalled)


@dataclass
class MultiStartResult:
    model: MlpModel
    chosen: int
    warmup: list  # LmRun per start
    final: LmRun


def _labeled(excitatory, inhibitory):
    ex = np.atleast_2d(np.asarray(excitatory, dtype=np.float64))
    inh = np.atleast_2d(np.asarray(inhibitory, dtype=np.float64))
    if ex.shape[0] == 0 or inh.shape[0] == 0 or ex.size == 0 or inh.size == 0:
        raise ValidationError("both excitatory and inhibitory sets must be nonempty")
    if ex.shape[1] != inh.shape[1]:
        raise ValidationError("excitatory and inhibitory vectors differ in dimension")
    x = np.concatenate([ex, inh])
    t = np.concatenate([np.ones(ex.shape[0]), np.zeros(inh.shape[0])])
    return x, t


def multistart_train(excitatory, inhibitory, cfg: TrainConfig | None = None) -> MultiStartResult:
    """Train ``n_starts`` random inits briefly, keep the lowest-SSE one, continue it."""
    cfg = cfg or TrainConfig()
    x, t = _labeled(excitatory, inhibitory)
    mean = scale = None
    if cfg.normalize:
        mean = x.mean(0)
        scale = x.std(0)
        scale[scale == 0.0] = 1.0
    rng = np.random.default_rng(cfg.seed)
    runs = []
    for _ in range(cfg.n_starts):
        m0 = init_model(x.shape[1], cfg.n_hidden, rng)
        if mean is not None:
            m0 = m0.with_params(m0.flat(), x_mean=mean, x_scale=scale)
        runs.append(lm_fit(m0, x, t, cfg.epochs_per_start, cfg))
    chosen = int(np.argmin([r.sse for r in runs]))
    best = runs[chosen]
    final = lm_fit(best.model, x, t, cfg.final_epochs, cfg, mu=best.mu, early_stop_rel=cfg.early_stop_rel)
    model = final.model.with_params(final.model.flat(), train_sse=final.sse)
    return MultiStartResult(model, chosen, runs, final)


def lm_train(excitatory, inhibitory, cfg: TrainConfig | None = None) -> MlpModel:
    return multistart_train(excitatory, inhibitory, cfg).model


def compress_impostors(impostor_frames, target_count: int, seed: int = 0) -> np.ndarray:
    """Replace an impostor pool by ``target_count`` LBG centroids.

    The codebook has the next power-of-two size; when that exceeds the target
    the most populated cells are kept (ties by index).
    """
    x = np.asarray(impostor_frames, dtype=np.float64)
    if target_count < 1:
        raise ValidationError("target_count must be positive")
    if x.shape[0] < target_count:
        raise InsufficientDataError(f"{x.shape[0]} impostor frames, {target_count} requested")
    bits = max(0, math.ceil(math.log2(target_count)))
    if x.shape[0] < 2 ** bits:
        if x.shape[0] == target_count:
            return x.copy()
        raise InsufficientDataError(f"{x.shape[0]} impostor frames cannot fill a {2 ** bits}-entry codebook")
    cb: Codebook = lbg_train(x, bits, seed)
    if cb.size == target_count:
        return cb.centroids.copy()
    idx, _ = _assign(x, cb.centroids)
    counts = np.bincount(idx, minlength=cb.size)
    keep = np.sort(np.argsort(-counts, kind="stable")[:target_count])
    return cb.centroids[keep].copy()


def accumulate_similarity(model: MlpModel, frames) -> float:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.size == 0:
        raise ValidationError("cannot score an empty frame sequence")
    return math.fsum(np.atleast_1d(forward(model, np.atleast_2d(frames))))


def rank_descending(scores) -> list[tuple[int, float]]:
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    return [(int(i), float(scores[i])) for i in order]


def mlp_identify(frames, models) -> list[tuple[int, float]]:
    """Rank speakers by accumulated MLP output, highest first."""
    if len(models) == 0:
        raise ValidationError("no MLP models to score against")
    return rank_descending([accumulate_similarity(m, frames) for m in models])
