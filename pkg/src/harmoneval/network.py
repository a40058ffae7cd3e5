"""Feed-forward chord predictor: 12 many-hot inputs to 48 chord classes.

A deliberately small from-scratch MLP (numpy only): ReLU hidden layers,
softmax output, cross-entropy loss, seeded mini-batch gradient descent.
Training is bit-reproducible for a given (dataset, config) pair.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import EmptyInputError, InvalidTrainingItemError, TrainingDivergedError
from .symbolic import (
    NOTE_VECTOR_SIZE,
    NUM_CHORD_CODES,
    ChordSpan,
    EncodedSequence,
    HarmonizationGrid,
    LeadSheet,
    Melody,
    NoteVector,
    decode_chord,
    encode_leadsheet,
    estimate_key,
    segment_melody,
    encode_segment,
)

logger = logging.getLogger(__name__)

_MODEL_MAGIC = b"HEVM"
_MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    hidden_sizes: tuple[int, ...] = (64,)
    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if any(h <= 0 for h in self.hidden_sizes):
            raise ValueError(f"hidden sizes must be positive: {self.hidden_sizes}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs <= 0:
            raise ValueError(f"epochs must be > 0, got {self.epochs}")
        if self.batch_size <= 0:
            raise ValueError(f"batch size must be > 0, got {self.batch_size}")


@dataclass
class Dataset:
    """Pooled (note vector, chord code) training pairs."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[1] != NOTE_VECTOR_SIZE:
            raise ValueError(f"X must have shape (n, 12), got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("X and y lengths differ")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= NUM_CHORD_CODES):
            raise ValueError("chord codes must lie in 0..47")

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class MlpModel:
    """Weights of the feed-forward net; input 12, output 48."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = self.layer_dims
        if dims[0] != NOTE_VECTOR_SIZE or dims[-1] != NUM_CHORD_CODES:
            raise ValueError(f"model must map 12 -> 48, got dims {dims}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight/bias shapes disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: dimension chain broken")
        if not all(np.all(np.isfinite(w)) for w in self.weights + self.biases):
            raise ValueError("model parameters must be finite")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)


def _as_matrix(x) -> tuple[np.ndarray, bool]:
    if isinstance(x, NoteVector):
        x = x.bits
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_pass(model: MlpModel, X: np.ndarray):
    """Returns (probabilities, per-layer activations a_0..a_{L-1})."""
    activations = [X]
    a = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if i < last:
            a = np.maximum(z, 0.0)
            activations.append(a)
        else:
            return _softmax(z), activations
    raise AssertionError("unreachable")


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities for one note vector or a batch of them."""
    X, single = _as_matrix(x)
    probs, _ = _forward_pass(model, X)
    return probs[0] if single else probs


def loss_and_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    n = X.shape[0]
    probs, activations = _forward_pass(model, X)
    eps = np.finfo(np.float64).tiny
    loss = -np.mean(np.log(probs[np.arange(n), y] + eps))

    grad_w = [np.empty_like(w) for w in model.weights]
    grad_b = [np.empty_like(b) for b in model.biases]
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (activations[i] > 0.0)
    return loss, grad_w, grad_b


def init_model(config: TrainConfig) -> MlpModel:
    """Seeded scaled-uniform initialization."""
    rng = np.random.default_rng(config.seed)
    dims = (NOTE_VECTOR_SIZE,) + config.hidden_sizes + (NUM_CHORD_CODES,)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases)


def train(
    dataset: Dataset,
    config: Optional[TrainConfig] = None,
    log_stream=None,
) -> tuple[MlpModel, list[float]]:
    """Mini-batch gradient descent; returns the model and per-epoch mean loss.

    Deterministic for a given seed: initialization and shuffling both come
    from the same seeded generator.  ``log_stream`` (optional) receives one
    ``epoch<TAB>mean_loss`` line per epoch.
    """
    if len(dataset) == 0:
        raise EmptyInputError("cannot train on an empty dataset")
    config = config or TrainConfig()
    model = init_model(config)
    rng = np.random.default_rng(config.seed + 1)

    n = len(dataset)
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grad_w, grad_b = loss_and_gradients(model, dataset.X[idx], dataset.y[idx])
            total += loss * len(idx)
            for w, b, gw, gb in zip(model.weights, model.biases, grad_w, grad_b):
                w -= config.learning_rate * gw
                b -= config.learning_rate * gb
        mean_loss = total / n
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(epoch=epoch, loss=mean_loss)
        history.append(mean_loss)
        if log_stream is not None:
            log_stream.write(f"{epoch}\t{mean_loss:.10f}\n")
    return model, history


def predict_codes(model: MlpModel, vectors: Sequence[NoteVector]) -> list[int]:
    """Argmax chord code per vector; ties resolve to the lowest code."""
    if not vectors:
        return []
    X = np.asarray([v.bits for v in vectors], dtype=np.float64)
    probs, _ = _forward_pass(model, X)
    return [int(code) for code in probs.argmax(axis=1)]


def build_dataset(sheets: Iterable[LeadSheet], chords_per_bar: int = 1) -> Dataset:
    """Pool encoded windows from every usable lead sheet."""
    xs: list[tuple[int, ...]] = []
    ys: list[int] = []
    for i, sheet in enumerate(sheets):
        try:
            grid = HarmonizationGrid.for_melody(sheet.melody, chords_per_bar)
            encoded = encode_leadsheet(sheet, grid)
        except (InvalidTrainingItemError, EmptyInputError) as exc:
            logger.warning("skipping sheet %d: %s", i, exc)
            continue
        for vector, code in zip(encoded.X, encoded.Y):
            xs.append(vector.bits)
            ys.append(code)
    if not xs:
        raise EmptyInputError("corpus yielded no training windows")
    return Dataset(X=np.asarray(xs, dtype=np.float64), y=np.asarray(ys, dtype=np.int64))


def harmonize(model: MlpModel, melody: Melody, chords_per_bar: int = 1) -> LeadSheet:
    """Predict one chord per grid window and attach them to the melody."""
    if not melody.notes:
        raise EmptyInputError("cannot harmonize an empty melody")
    tonic = estimate_key(melody)
    grid = HarmonizationGrid.for_melody(melody, chords_per_bar)
    segments = segment_melody(melody, grid)
    vectors = [encode_segment(tonic, seg) for seg in segments]
    codes = predict_codes(model, vectors)
    chords = []
    for (start, _end), code in zip(grid.window_bounds(melody), codes):
        root, quality = decode_chord(tonic, code)
        chords.append(ChordSpan(onset=int(start), root=root, quality=quality))
    return LeadSheet(melody=melody, chords=tuple(chords), declared_tonic=tonic)


def encode_melody(melody: Melody, chords_per_bar: int = 1) -> EncodedSequence:
    """Prediction-side encoding (no chord labels)."""
    tonic = estimate_key(melody)
    grid = HarmonizationGrid.for_melody(melody, chords_per_bar)
    segments = segment_melody(melody, grid)
    return EncodedSequence(
        X=tuple(encode_segment(tonic, seg) for seg in segments),
        tonic=tonic,
    )


def save_model(model: MlpModel, path) -> None:
    """Versioned binary format: magic, dims, then float64 LE parameters."""
    dims = model.layer_dims
    blob = bytearray()
    blob += _MODEL_MAGIC
    blob += struct.pack("<II", _MODEL_VERSION, len(dims))
    blob += struct.pack(f"<{len(dims)}I", *dims)
    for w, b in zip(model.weights, model.biases):
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_model(path) -> MlpModel:
    data = Path(path).read_bytes()
    if data[:4] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a harmonizer model file")
    version, ndims = struct.unpack_from("<II", data, 4)
    if version != _MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    dims = struct.unpack_from(f"<{ndims}I", data, 12)
    offset = 12 + 4 * ndims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    if offset != len(data):
        raise ValueError(f"{path}: trailing or missing bytes in model file")
    return MlpModel(weights=weights, biases=biases)
