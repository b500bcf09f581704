"""Echo state network for hand-waving detection.

Inputs per frame are skeleton joints normalized to the neck and shoulder
width, followed by a scalar fingertip-patch energy. The reservoir is fixed
and random; only a ridge-regression readout is trained, and a sequence is
classified by the mean readout over its post-washout frames.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateScale,
    DimensionMismatch,
    EmptyPatch,
    MissingClass,
    MissingJoint,
    ParseError,
    SingularSystem,
    UntrainedModel,
    ZeroSpectralRadius,
)

JOINTS = ("neck", "left_shoulder", "right_shoulder", "left_wrist", "right_wrist")
REFERENCE_JOINT = "neck"
FEATURE_DIM = 2 * len(JOINTS) + 1
MODEL_FORMAT = "homecore-esn"
MODEL_VERSION = 1


class Label(str, Enum):
    WAVING = "waving"
    NOT_WAVING = "not_waving"

    @property
    def target(self) -> float:
        return 1.0 if self is Label.WAVING else -1.0


def normalize_skeleton(joints: Mapping[str, Sequence[float]], order=JOINTS) -> np.ndarray:
    """Neck-relative joint coordinates in units of shoulder distance, flattened."""
    for name in set(order) | {REFERENCE_JOINT, "left_shoulder", "right_shoulder"}:
        if name not in joints:
            raise MissingJoint(f"skeleton frame lacks joint {name!r}", joint=name)
    ref = np.asarray(joints[REFERENCE_JOINT], dtype=float)
    scale = float(np.linalg.norm(np.subtract(joints["left_shoulder"], joints["right_shoulder"])))
    if scale <= 1e-6:
        raise DegenerateScale(f"shoulder distance {scale} px is too small to normalize")
    pts = np.array([joints[name] for name in order], dtype=float)
    if not np.all(np.isfinite(pts)):
        raise ValueError("joint coordinates must be finite")
    return ((pts - ref) / scale).reshape(-1)


def fingertip_energy(patch) -> float:
    patch = np.asarray(patch, dtype=float)
    if patch.size == 0:
        raise EmptyPatch("fingertip patch has no pixels")
    if patch.min() < 0 or patch.max() > 1:
        raise ValueError("patch intensities must lie in [0, 1]")
    return float(patch.sum() / patch.size)


def feature_vector(joints: Mapping[str, Sequence[float]], patch) -> np.ndarray:
    energy = patch if np.isscalar(patch) else fingertip_energy(patch)
    return np.append(normalize_skeleton(joints), float(energy))


@dataclass(frozen=True)
class EsnConfig:
    n_inputs: int = FEATURE_DIM
    n_reservoir: int = 100
    spectral_radius: float = 0.9
    input_scaling: float = 0.5
    leak_rate: float = 0.3
    connectivity: float = 0.1
    ridge: float = 1e-6
    washout: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_reservoir < 1:
            raise ConfigError("n_reservoir must be at least 1")
        if self.n_inputs < 1:
            raise ConfigError("n_inputs must be at least 1")
        if not 0 < self.spectral_radius < 1:
            raise ConfigError("spectral_radius must lie in (0, 1)")
        if not 0 < self.leak_rate <= 1:
            raise ConfigError("leak_rate must lie in (0, 1]")
        if not 0 < self.connectivity <= 1:
            raise ConfigError("connectivity must lie in (0, 1]")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")
        if self.washout < 0:
            raise ConfigError("washout must be nonnegative")

    @classmethod
    def from_dict(cls, d: Mapping) -> "EsnConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown ESN config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class Esn:
    config: EsnConfig
    w_in: np.ndarray
    w_res: np.ndarray
    w_out: np.ndarray | None = None
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = np.zeros(self.config.n_reservoir)

    def reset(self) -> None:
        self.state = np.zeros(self.config.n_reservoir)

    @property
    def trained(self) -> bool:
        return self.w_out is not None


@dataclass(frozen=True)
class LabeledSequence:
    frames: np.ndarray
    label: Label

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 2 or len(frames) < 1:
            raise ValueError("a sequence needs at least one frame of features")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "label", Label(self.label))


@dataclass(frozen=True)
class Classification:
    label: Label
    score: float

    @property
    def margin(self) -> float:
        return abs(self.score)


def spectral_radius(w: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(w)))) if w.size else 0.0


def init_esn(config: EsnConfig) -> Esn:
    """Random sparse reservoir rescaled to the configured spectral radius."""
    rng = np.random.default_rng(config.seed)
    n = config.n_reservoir
    for _ in range(8):
        mask = rng.random((n, n)) < config.connectivity
        w = np.where(mask, rng.uniform(-1.0, 1.0, size=(n, n)), 0.0)
        rho = spectral_radius(w)
        if rho > 1e-8:
            break
    else:
        raise ZeroSpectralRadius("sampled reservoir is nilpotent after 8 draws; raise connectivity")
    w_res = w * (config.spectral_radius / rho)
    w_in = rng.uniform(-config.input_scaling, config.input_scaling, size=(n, config.n_inputs))
    return Esn(config, w_in, w_res)


def update(esn: Esn, u, state: np.ndarray | None = None) -> np.ndarray:
    """One leaky-tanh step. Advances ``esn.state`` unless an explicit ``state`` is given."""
    u = np.asarray(u, dtype=float)
    if u.shape != (esn.config.n_inputs,):
        raise DimensionMismatch(f"input has shape {u.shape}, expected ({esn.config.n_inputs},)")
    x = esn.state if state is None else state
    a = esn.config.leak_rate
    new = (1 - a) * x + a * np.tanh(esn.w_res @ x + esn.w_in @ u)
    if state is None:
        esn.state = new
    return new


def run_states(esn: Esn, frames, x0: np.ndarray | None = None) -> np.ndarray:
    """Reservoir states for every frame, starting from ``x0`` (zeros by default)."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[1] != esn.config.n_inputs:
        raise DimensionMismatch(f"frames have shape {frames.shape}, expected (T, {esn.config.n_inputs})")
    a = esn.config.leak_rate
    drive = frames @ esn.w_in.T
    w = esn.w_res
    x = np.zeros(esn.config.n_reservoir) if x0 is None else np.array(x0, dtype=float)
    out = np.empty((len(frames), len(x)))
    for t in range(len(frames)):
        x = (1 - a) * x + a * np.tanh(w @ x + drive[t])
        out[t] = x
    return out


def _design(states: np.ndarray) -> np.ndarray:
    return np.hstack([states, np.ones((len(states), 1))])


def _kept(states: np.ndarray, washout: int) -> np.ndarray:
    return states[washout:] if len(states) > washout else states


def collect_states(esn: Esn, sequences: Sequence[LabeledSequence]):
    """Stacked post-washout design rows (states plus bias) and +/-1 targets."""
    rows, targets = [], []
    for seq in sequences:
        kept = _kept(run_states(esn, seq.frames), esn.config.washout)
        rows.append(_design(kept))
        targets.append(np.full(len(kept), seq.label.target))
    return np.vstack(rows), np.concatenate(targets)


def ridge_solve(design: np.ndarray, targets: np.ndarray, ridge: float) -> np.ndarray:
    """Ridge regression through the SVD of the design matrix."""
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    if ridge == 0:
        cutoff = max(design.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
        if len(s) < design.shape[1] or s[-1] <= cutoff:
            raise SingularSystem("ridge=0 and the state matrix is rank-deficient")
    return vt.T @ ((s / (s * s + ridge)) * (u.T @ targets))


def fit_readout(esn: Esn, sequences: Sequence[LabeledSequence], ridge: float | None = None) -> np.ndarray:
    labels = {seq.label for seq in sequences}
    if labels != {Label.WAVING, Label.NOT_WAVING}:
        raise MissingClass(f"training data must contain both labels, got {sorted(l.value for l in labels)}")
    design, targets = collect_states(esn, sequences)
    w_out = ridge_solve(design, targets, esn.config.ridge if ridge is None else ridge)
    esn.w_out = w_out
    return w_out


def train(config: EsnConfig, sequences: Sequence[LabeledSequence]) -> Esn:
    esn = init_esn(config)
    fit_readout(esn, sequences)
    return esn


def score(esn: Esn, frames) -> float:
    if not esn.trained:
        raise UntrainedModel("readout has not been fitted")
    states = _kept(run_states(esn, frames), esn.config.washout)
    return float(np.mean(_design(states) @ esn.w_out))


def classify(esn: Esn, frames) -> Classification:
    s = score(esn, frames)
    return Classification(Label.WAVING if s > 0 else Label.NOT_WAVING, s)


def evaluate(esn: Esn, sequences: Sequence[LabeledSequence]) -> dict:
    """Accuracy, confusion matrix (rows = truth, waving first) and mean latency."""
    confusion = np.zeros((2, 2), dtype=int)
    index = {Label.WAVING: 0, Label.NOT_WAVING: 1}
    elapsed = 0.0
    scores = []
    for seq in sequences:
        t0 = time.perf_counter()
        result = classify(esn, seq.frames)
        elapsed += time.perf_counter() - t0
        confusion[index[seq.label], index[result.label]] += 1
        scores.append(result.score)
    n = max(len(sequences), 1)
    return {"accuracy": float(np.trace(confusion) / n),
            "confusion": confusion.tolist(),
            "labels": [Label.WAVING.value, Label.NOT_WAVING.value],
            "n": len(sequences),
            "scores": scores,
            "mean_latency_ms": 1000.0 * elapsed / n}


# --------------------------------------------------------------------------- synthetic data

_POSES = {
    "arms_down": {"left_wrist": (-0.55, 1.25), "right_wrist": (0.55, 1.25)},
    "hands_front": {"left_wrist": (-0.2, 0.85), "right_wrist": (0.2, 0.85)},
    "right_raised": {"left_wrist": (-0.55, 1.25), "right_wrist": (0.75, -0.55)},
    "left_raised": {"left_wrist": (-0.75, -0.55), "right_wrist": (0.55, 1.25)},
}
_SHOULDERS = {"neck": (0.0, 0.0), "left_shoulder": (-0.5, 0.15), "right_shoulder": (0.5, 0.15)}


def synthetic_sequence(rng: np.random.Generator, label: Label, n_frames: int = 100,
                       fps: float = 30.0, noise: float = 0.02) -> LabeledSequence:
    """One pixel-space skeleton track, normalized into feature frames.

    Waving moves one raised wrist sideways at 0.5-2 Hz; about a quarter of
    waving tracks keep the wrist nearly still and wave only the fingers,
    which shows up in the fingertip energy alone.
    """
    scale = rng.uniform(40.0, 160.0)
    neck = rng.uniform([120.0, 100.0], [520.0, 380.0])
    t = np.arange(n_frames) / fps
    base_energy = rng.uniform(0.1, 0.3)
    if label is Label.WAVING:
        side = "right" if rng.random() < 0.5 else "left"
        pose = dict(_POSES[f"{side}_raised"])
        freq = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0, 2 * math.pi)
        fingers_only = rng.random() < 0.25
        amp = rng.uniform(0.005, 0.02) if fingers_only else rng.uniform(0.15, 0.4)
        swing = np.sin(2 * math.pi * freq * t + phase)
        motion = np.abs(np.cos(2 * math.pi * freq * t + phase))
        energy = base_energy + rng.uniform(0.25, 0.45) * motion
        moving = f"{side}_wrist"
    else:
        pose = dict(_POSES[list(_POSES)[rng.integers(len(_POSES))]])
        swing = np.zeros(n_frames)
        amp = 0.0
        energy = np.full(n_frames, base_energy)
        moving = None
    frames = []
    for i in range(n_frames):
        joints = {}
        for name, (x, y) in {**_SHOULDERS, **pose}.items():
            if name == moving:
                x = x + amp * swing[i]
            jitter = rng.normal(0.0, noise, size=2)
            joints[name] = (neck[0] + scale * (x + jitter[0]), neck[1] + scale * (y + jitter[1]))
        e = float(np.clip(energy[i] + rng.normal(0.0, noise), 0.0, 1.0))
        frames.append(feature_vector(joints, e))
    return LabeledSequence(np.array(frames), label)


def synthetic_dataset(n: int, seed: int = 0, n_frames: int = 100) -> list[LabeledSequence]:
    """Alternating waving / not-waving sequences from a seeded generator."""
    rng = np.random.default_rng(seed)
    return [synthetic_sequence(rng, Label.WAVING if i % 2 == 0 else Label.NOT_WAVING, n_frames)
            for i in range(n)]


# --------------------------------------------------------------------------- files


def write_dataset(path, sequences: Sequence[LabeledSequence]) -> None:
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(json.dumps({"label": seq.label.value, "frames": seq.frames.tolist()}) + "\n")


def read_dataset(path, require_labels: bool = True) -> list:
    """JSON-lines sequences; unlabeled lines come back as raw frame arrays."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                frames = np.asarray(row["frames"], dtype=float)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: bad sequence record: {exc}", line=lineno) from exc
            if "label" in row:
                try:
                    out.append(LabeledSequence(frames, Label(row["label"])))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}", line=lineno) from exc
            elif require_labels:
                raise ParseError(f"{path}:{lineno}: missing label", line=lineno)
            else:
                out.append(frames)
    return out


def model_to_dict(esn: Esn) -> dict:
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "config": esn.config.to_dict(),
            "w_in": esn.w_in.tolist(), "w_res": esn.w_res.tolist(),
            "w_out": None if esn.w_out is None else esn.w_out.tolist()}


def model_from_dict(d: dict) -> Esn:
    if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
        raise ParseError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} model file")
    config = EsnConfig.from_dict(d["config"])
    w_out = None if d.get("w_out") is None else np.asarray(d["w_out"], dtype=float)
    return Esn(config, np.asarray(d["w_in"], dtype=float), np.asarray(d["w_res"], dtype=float), w_out)


def save_model(esn: Esn, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(esn)) + "\n")


def load_model(path) -> Esn:
    try:
        return model_from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}", line=exc.lineno) from exc
