"""Corpora, synthetic AR voices, enrollment and the on-disk model store.

Manifest (JSON)::

    {
      "version": 1,
      "seed": 1234,
      "speakers": [
        {"id": "spk00", "train": ["spk00/train_0.wav", ...], "test": [...]},
        ...
      ]
    }

A clip entry is either a WAV path (relative to the manifest's directory) or
an inline synthetic clip::

    {"ar_coeffs": [...12 values...], "gain": 0.1, "seed": 7, "index": 0,
     "duration_s": null, "snr_db": null}
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np
from scipy import signal

from ._parallel import pmap
from .errors import DataIOError, MissingFileError, ValidationError
from .frontend import AudioClip, FrontendConfig, extract_lpcc, read_wav
from .hybrid import SpeakerModel, Utterance
from .neural import MlpModel, TrainConfig, compress_impostors, lm_train
from .vq import Codebook, lbg_train

MANIFEST_VERSION = 1
MODEL_VERSION = 1
MIN_DURATION_S = 0.9
MAX_DURATION_S = 2.8
SYNTH_RATE = 8000
_BURN_IN = 2000


# --- synthetic voices -------------------------------------------------------------


def ar_poles(ar_coeffs) -> np.ndarray:
    a = np.asarray(ar_coeffs, dtype=np.float64)
    return np.roots(np.concatenate([[1.0], -a]))


def is_stable(ar_coeffs) -> bool:
    return bool(np.all(np.abs(ar_poles(ar_coeffs)) < 1.0))


def ar_from_poles(poles) -> np.ndarray:
    """AR coefficients ``a`` with ``x[n] = sum_k a_k x[n-k] + w[n]`` for the given poles."""
    return -np.real(np.poly(poles))[1:]


@dataclass(frozen=True)
class SyntheticSpeakerSpec:
    ar_coeffs: tuple
    gain: float = 0.1
    seed: int = 0
    # None draws each clip's duration uniformly in [0.9, 2.8] s
    clip_duration_s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "ar_coeffs", tuple(float(v) for v in self.ar_coeffs))
        if not is_stable(self.ar_coeffs):
            raise ValidationError("AR polynomial has roots on or outside the unit circle")
        if self.gain <= 0:
            raise ValidationError("gain must be positive")
        if self.clip_duration_s is not None and not MIN_DURATION_S <= self.clip_duration_s <= MAX_DURATION_S:
            raise ValidationError(f"clip duration must lie in [{MIN_DURATION_S}, {MAX_DURATION_S}] s")


def random_poles(rng: np.random.Generator, order: int = 12, r_range=(0.75, 0.93)) -> np.ndarray:
    n = order // 2
    angles = np.sort(rng.uniform(0.06 * np.pi, 0.94 * np.pi, n))
    radii = rng.uniform(*r_range, n)
    half = radii * np.exp(1j * angles)
    return np.concatenate([half, half.conj()])


def perturb_poles(poles: np.ndarray, rng: np.random.Generator, spread: float) -> np.ndarray:
    """Jitter pole angles (relative) and radii; keeps conjugate symmetry and stability."""
    half = poles[: poles.size // 2]
    ang = np.angle(half) * np.exp(spread * rng.standard_normal(half.size))
    ang = np.clip(ang, 0.03 * np.pi, 0.97 * np.pi)
    rad = np.clip(np.abs(half) + 0.5 * spread * rng.standard_normal(half.size), 0.5, 0.96)
    new = rad * np.exp(1j * ang)
    return np.concatenate([new, new.conj()])


def random_speaker_spec(seed: int, base_poles=None, spread: float = 0.15, gain: float = 0.1) -> SyntheticSpeakerSpec:
    """A random stable AR(12) voice, optionally a perturbation of ``base_poles``."""
    rng = np.random.default_rng([seed, 0x5EED])
    poles = random_poles(rng) if base_poles is None else perturb_poles(np.asarray(base_poles), rng, spread)
    return SyntheticSpeakerSpec(tuple(ar_from_poles(poles)), gain, seed)


def synthesize_ar(ar_coeffs, gain: float, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """White noise through the all-pole filter, scaled to RMS ``gain``."""
    a = np.asarray(ar_coeffs, dtype=np.float64)
    w = rng.standard_normal(n_samples + _BURN_IN)
    x = signal.lfilter([1.0], np.concatenate([[1.0], -a]), w)[_BURN_IN:]
    x *= gain / math.sqrt(float(np.mean(x * x)))
    return np.clip(x, -1.0, 32767.0 / 32768.0)


def generate_synthetic_speaker(spec: SyntheticSpeakerSpec, n_clips: int, start: int = 0) -> list[AudioClip]:
    """Clips ``start .. start+n_clips-1`` of a voice; clip ``i`` depends only on (spec, i)."""
    return [synthetic_clip(spec, i) for i in range(start, start + n_clips)]


def synthetic_clip(spec: SyntheticSpeakerSpec, index: int) -> AudioClip:
    rng = np.random.default_rng([spec.seed, index])
    dur = spec.clip_duration_s
    if dur is None:
        dur = float(rng.uniform(MIN_DURATION_S, MAX_DURATION_S))
    n = int(round(dur * SYNTH_RATE))
    return AudioClip(synthesize_ar(spec.ar_coeffs, spec.gain, n, rng), SYNTH_RATE)


def add_noise(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    rng = np.random.default_rng([seed, 0x401])
    x = clip.samples
    p_sig = float(np.mean(x * x))
    noise = rng.standard_normal(x.size) * math.sqrt(p_sig / 10.0 ** (snr_db / 10.0))
    return AudioClip(np.clip(x + noise, -1.0, 32767.0 / 32768.0), clip.sample_rate_hz)


# --- manifests ---------------------------------------------------------------------


@dataclass
class SpeakerEntry:
    id: str
    train: list
    test: list


@dataclass
class CorpusManifest:
    speakers: list
    seed: int = 0
    root: Path = field(default_factory=Path)

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "seed": self.seed,
            "speakers": [{"id": s.id, "train": s.train, "test": s.test} for s in self.speakers],
        }


def _clip_key(entry) -> str:
    return entry if isinstance(entry, str) else json.dumps(entry, sort_keys=True)


def parse_manifest(doc: dict, root=".") -> CorpusManifest:
    if not isinstance(doc, dict) or not isinstance(doc.get("speakers"), list):
        raise ValidationError("manifest needs a 'speakers' list")
    speakers = []
    seen = set()
    for raw in doc["speakers"]:
        sid = str(raw.get("id", ""))
        if not sid:
            raise ValidationError("speaker without an id")
        if sid in seen:
            raise ValidationError(f"duplicate speaker id {sid!r}")
        seen.add(sid)
        train, test = list(raw.get("train", [])), list(raw.get("test", []))
        if not train or not test:
            raise ValidationError(f"speaker {sid!r} needs at least one train and one test clip")
        if {_clip_key(c) for c in train} & {_clip_key(c) for c in test}:
            raise ValidationError(f"speaker {sid!r} shares clips between train and test")
        speakers.append(SpeakerEntry(sid, train, test))
    if not speakers:
        raise ValidationError("manifest lists no speakers")
    return CorpusManifest(speakers, int(doc.get("seed", 0)), Path(root))


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return parse_manifest(doc, path.parent)


def discover_manifest(root, seed: int = 0) -> dict:
    """Build a manifest from ``root/<speaker>/{train,test}/*.wav``."""
    root = Path(root)
    speakers = []
    for spk in sorted(p for p in root.iterdir() if p.is_dir()):
        train = sorted(str(p.relative_to(root)) for p in (spk / "train").glob("*.wav"))
        test = sorted(str(p.relative_to(root)) for p in (spk / "test").glob("*.wav"))
        if train and test:
            speakers.append({"id": spk.name, "train": train, "test": test})
    return {"version": MANIFEST_VERSION, "seed": seed, "speakers": speakers}


@dataclass
class Corpus:
    manifest: CorpusManifest
    train: dict  # speaker id -> list[AudioClip]
    test: dict  # speaker id -> list[(name, AudioClip)]
    digest: str = ""

    @property
    def speaker_ids(self) -> list:
        return [s.id for s in self.manifest.speakers]


def load_clip(entry, root: Path, hasher=None) -> tuple[str, AudioClip]:
    if isinstance(entry, str):
        path = root / entry
        clip = read_wav(path)
        if hasher is not None:
            hasher.update(path.read_bytes())
        return entry, clip
    if isinstance(entry, dict):
        spec = SyntheticSpeakerSpec(tuple(entry["ar_coeffs"]), float(entry.get("gain", 0.1)),
                                    int(entry.get("seed", 0)), entry.get("duration_s"))
        clip = synthetic_clip(spec, int(entry.get("index", 0)))
        if entry.get("snr_db") is not None:
            clip = add_noise(clip, float(entry["snr_db"]), spec.seed * 7919 + int(entry.get("index", 0)))
        name = entry.get("name") or f"synthetic:{spec.seed}:{entry.get('index', 0)}"
        return name, clip
    raise ValidationError(f"unrecognized clip entry {entry!r}")


def load_corpus(manifest) -> Corpus:
    """Load and validate every clip named by a manifest (path, dict or parsed)."""
    if isinstance(manifest, (str, Path)):
        manifest = load_manifest(manifest)
    elif isinstance(manifest, dict):
        manifest = parse_manifest(manifest)
    hasher = hashlib.sha256(json.dumps(manifest.to_dict(), sort_keys=True).encode())
    train, test = {}, {}
    for spk in manifest.speakers:
        train[spk.id] = [load_clip(e, manifest.root, hasher)[1] for e in spk.train]
        test[spk.id] = [load_clip(e, manifest.root, hasher) for e in spk.test]
    return Corpus(manifest, train, test, hasher.hexdigest())


def synthetic_manifest(n_speakers: int, clips_per_speaker: int = 10, seed: int = 0, test_snr_db: float | None = None,
                       spread: float = 0.15, n_train: int | None = None) -> dict:
    """Inline-synthetic manifest of AR voices perturbed around one shared base voice."""
    if n_speakers < 1:
        raise ValidationError("n_speakers must be >= 1")
    if clips_per_speaker < 2:
        raise ValidationError("need at least 2 clips per speaker (train and test)")
    n_train = clips_per_speaker // 2 if n_train is None else n_train
    if not 1 <= n_train < clips_per_speaker:
        raise ValidationError("n_train must leave at least one test clip")
    base = random_poles(np.random.default_rng([seed, 0xBA5E]))
    speakers = []
    for i in range(n_speakers):
        spec = random_speaker_spec(seed * 1000 + i, base, spread)
        common = {"ar_coeffs": list(spec.ar_coeffs), "gain": spec.gain, "seed": spec.seed}
        sid = f"spk{i:02d}"
        train = [dict(common, index=j, name=f"{sid}/train_{j}") for j in range(n_train)]
        test = [dict(common, index=j, snr_db=test_snr_db, name=f"{sid}/test_{j}")
                for j in range(n_train, clips_per_speaker)]
        speakers.append({"id": sid, "train": train, "test": test})
    return {"version": MANIFEST_VERSION, "seed": seed, "speakers": speakers}


# --- enrollment --------------------------------------------------------------------


@dataclass(frozen=True)
class EnrollConfig:
    size_bits: int = 5
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "size_bits": self.size_bits,
            "frontend": dataclasses.asdict(self.frontend),
            "train": dataclasses.asdict(self.train),
            "seed": self.seed,
        }


def _features(clips, cfg: FrontendConfig) -> np.ndarray:
    return np.concatenate([extract_lpcc(c, cfg) for c in clips])


def train_features(corpus: Corpus, cfg: FrontendConfig | None = None, jobs: int = 1) -> list[np.ndarray]:
    cfg = cfg or FrontendConfig()
    return pmap(partial(_features, cfg=cfg), [corpus.train[sid] for sid in corpus.speaker_ids], jobs)


def load_test_utterances(corpus: Corpus, cfg: FrontendConfig | None = None, jobs: int = 1) -> list[Utterance]:
    cfg = cfg or FrontendConfig()
    items = [(sid, name, clip) for sid in corpus.speaker_ids for name, clip in corpus.test[sid]]
    feats = pmap(partial(extract_lpcc, cfg=cfg), [c for _, _, c in items], jobs)
    return [Utterance(sid, f, name) for (sid, name, _), f in zip(items, feats)]


def speaker_seeds(root_seed: int, index: int) -> tuple[int, int, int]:
    """(codebook, mlp, impostor-compression) seeds for one speaker."""
    s = np.random.SeedSequence([root_seed, index]).generate_state(3)
    return int(s[0]), int(s[1]), int(s[2])


def _train_codebook(args, size_bits, root_seed):
    i, feats = args
    return lbg_train(feats, size_bits, speaker_seeds(root_seed, i)[0])


def train_codebooks(features, size_bits: int, root_seed: int = 0, jobs: int = 1) -> list[Codebook]:
    return pmap(partial(_train_codebook, size_bits=size_bits, root_seed=root_seed), list(enumerate(features)), jobs)


def _train_mlp(i, features, cfg, root_seed):
    _, mlp_seed, comp_seed = speaker_seeds(root_seed, i)
    own = features[i]
    others = np.concatenate([f for j, f in enumerate(features) if j != i])
    inhibitory = compress_impostors(others, min(own.shape[0], others.shape[0]), comp_seed)
    return lm_train(own, inhibitory, replace(cfg, seed=mlp_seed))


def train_mlps(features, cfg: TrainConfig | None = None, root_seed: int = 0, jobs: int = 1) -> list[MlpModel]:
    """One MLP per speaker: own frames vs. the compressed pool of everyone else's."""
    cfg = cfg or TrainConfig()
    if len(features) < 2:
        raise ValidationError("MLP training needs at least two speakers (impostor data)")
    return pmap(partial(_train_mlp, features=features, cfg=cfg, root_seed=root_seed), range(len(features)), jobs)


def enroll(corpus: Corpus, cfg: EnrollConfig | None = None, jobs: int = 1, mlps=None, features=None) -> list[SpeakerModel]:
    """Train codebook + MLP for every speaker from training clips only.

    ``mlps``/``features`` may be passed in to reuse work across codebook sizes.
    """
    cfg = cfg or EnrollConfig()
    if features is None:
        features = train_features(corpus, cfg.frontend, jobs)
    codebooks = train_codebooks(features, cfg.size_bits, cfg.seed, jobs)
    if mlps is None:
        mlps = train_mlps(features, cfg.train, cfg.seed, jobs)
    return [SpeakerModel(sid, cb, m) for sid, cb, m in zip(corpus.speaker_ids, codebooks, mlps)]


# --- model store -------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def model_to_dict(model: SpeakerModel) -> dict:
    return {"version": MODEL_VERSION, "id": model.id, "codebook": model.codebook.to_dict(), "mlp": model.mlp.to_dict()}


def model_from_dict(d: dict) -> SpeakerModel:
    if d.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported model version {d.get('version')!r}")
    return SpeakerModel(d["id"], Codebook.from_dict(d["codebook"]), MlpModel.from_dict(d["mlp"]))


def _safe_name(sid: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", sid)


def save_models(models_dir, models: list[SpeakerModel], meta: dict | None = None) -> Path:
    d = Path(models_dir)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, m in enumerate(models):
        fname = f"{i:03d}_{_safe_name(m.id)}.json"
        (d / fname).write_text(_dump(model_to_dict(m)))
        entries.append({"id": m.id, "file": fname})
    index = {"version": MODEL_VERSION, "speakers": entries}
    index.update(meta or {})
    (d / "index.json").write_text(_dump(index))
    return d / "index.json"


def load_models(models_dir) -> tuple[list[SpeakerModel], dict]:
    d = Path(models_dir)
    index_path = d / "index.json"
    if not index_path.is_file():
        raise MissingFileError(index_path)
    try:
        index = json.loads(index_path.read_text())
        models = [model_from_dict(json.loads((d / e["file"]).read_text())) for e in index["speakers"]]
    except FileNotFoundError as exc:
        raise MissingFileError(exc.filename) from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataIOError(f"corrupt model store {d}: {exc}") from exc
    if not models:
        raise DataIOError(f"model store {d} is empty")
    return models, index
