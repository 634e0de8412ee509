#
# file: src/utils/tape/reconstructor.py
#
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..debug_utils import debug_print
from ..errors import (
    ArgumentError,
    ConfigError,
    DivergenceError,
    ShapeError,
    UndefinedSimilarityError,
)
from ..nn import Head, MlpSpec, ModelParams, make_rng
from ..nn.checkpoint import params_from_document, params_to_document, read_document, write_document
from ..nn.mlp import backward, forward_cache
from .shadow import PosteriorDiff, ShadowPair, corpus_arrays


@dataclass(frozen=True)
class RecTrainConfig:
    epochs: int = 300
    batch_size: int = 20
    learning_rate: float = 0.05
    seed: int = 42
    latent_width: int = 16
    hidden_width: int = 64

    def __post_init__(self):
        for name in ("epochs", "batch_size", "latent_width", "hidden_width"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")


@dataclass(frozen=True, eq=False)
class Reconstructor:
    """
    Encoder δ → μ and decoder μ → X̂, both plain MLPs with an affine output.

    The encoder consumes the unit-normalized posterior difference.
    """

    encoder: ModelParams
    decoder: ModelParams

    def __post_init__(self):
        if self.encoder.spec.output_width != self.decoder.spec.input_width:
            raise ShapeError(
                f"latent widths differ: encoder emits {self.encoder.spec.output_width}, "
                f"decoder takes {self.decoder.spec.input_width}"
            )

    @property
    def input_width(self) -> int:
        return self.encoder.spec.input_width

    @property
    def output_width(self) -> int:
        return self.decoder.spec.output_width

    @property
    def latent_width(self) -> int:
        return self.encoder.spec.output_width


def normalize_diffs(deltas: np.ndarray) -> np.ndarray:
    """Row-wise δ/‖δ‖₂; zero rows stay zero."""
    deltas = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
    norms = np.linalg.norm(deltas, axis=1, keepdims=True)
    return np.divide(deltas, norms, out=np.zeros_like(deltas), where=norms > 0)


def init_reconstructor(
    input_width: int, output_width: int, cfg: RecTrainConfig, rng: np.random.Generator
) -> Reconstructor:
    encoder = MlpSpec((input_width, cfg.hidden_width, cfg.latent_width), Head.MSE)
    decoder = MlpSpec((cfg.latent_width, cfg.hidden_width, output_width), Head.MSE)
    return Reconstructor(ModelParams.init(encoder, rng), ModelParams.init(decoder, rng))


def _forward(ae: Reconstructor, enc: np.ndarray, dec: np.ndarray, x: np.ndarray):
    latent, enc_cache = forward_cache(ae.encoder.spec, enc, x)
    out, dec_cache = forward_cache(ae.decoder.spec, dec, latent)
    return out, enc_cache, dec_cache


def _loss_and_grads(
    ae: Reconstructor, enc: np.ndarray, dec: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    out, enc_cache, dec_cache = _forward(ae, enc, dec, x)
    diff = out - y
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    dec_grad, d_latent = backward(ae.decoder.spec, dec, dec_cache, 2.0 * diff / len(x))
    enc_grad, _ = backward(ae.encoder.spec, enc, enc_cache, d_latent)
    return loss, enc_grad, dec_grad


def reconstruction_loss(ae: Reconstructor, deltas: np.ndarray, targets: np.ndarray) -> float:
    """Mean over rows of ‖AE(δ) − x‖²."""
    x_hat = reconstruct_batch(ae, deltas)
    diff = x_hat - np.atleast_2d(targets)
    return float(np.mean(np.sum(diff * diff, axis=1)))


def fit_reconstructor(
    ae: Reconstructor,
    deltas: np.ndarray,
    targets: np.ndarray,
    cfg: RecTrainConfig,
    rng: np.random.Generator,
) -> Reconstructor:
    """Minibatch SGD on the MSE between AE(δ) and the erased sample."""
    x = normalize_diffs(deltas)
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[1] != ae.input_width or y.shape[1] != ae.output_width:
        raise ShapeError(
            f"corpus shapes {x.shape}/{y.shape} do not fit a "
            f"{ae.input_width} -> {ae.output_width} reconstructor"
        )
    enc = np.array(ae.encoder.values)
    dec = np.array(ae.decoder.values)
    n = len(x)
    initial, _, _ = _loss_and_grads(ae, enc, dec, x, y)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, enc_grad, dec_grad = _loss_and_grads(ae, enc, dec, x[batch], y[batch])
            enc -= cfg.learning_rate * enc_grad
            dec -= cfg.learning_rate * dec_grad
        with np.errstate(over="ignore", invalid="ignore"):
            finite = np.all(np.isfinite(enc)) and np.all(np.isfinite(dec))
            loss = _loss_and_grads(ae, enc, dec, x, y)[0] if finite else np.nan
        if not np.isfinite(loss):
            raise DivergenceError(epoch, what="reconstruction loss")
    debug_print(f"fit_reconstructor: loss {initial:.6f} -> {loss:.6f}")
    return Reconstructor(ae.encoder.with_values(enc), ae.decoder.with_values(dec))


def train_reconstructor(corpus: list[ShadowPair], cfg: RecTrainConfig) -> Reconstructor:
    if not corpus:
        raise ArgumentError("cannot train a reconstructor on an empty corpus")
    deltas, targets = corpus_arrays(corpus)
    rng = make_rng(cfg.seed)
    ae = init_reconstructor(deltas.shape[1], targets.shape[1], cfg, rng)
    return fit_reconstructor(ae, deltas, targets, cfg, rng)


def reconstruct_batch(ae: Reconstructor, deltas: np.ndarray) -> np.ndarray:
    x = normalize_diffs(deltas)
    if x.shape[1] != ae.input_width:
        raise ShapeError(
            f"posterior difference length {x.shape[1]} != encoder width {ae.input_width}"
        )
    out, _, _ = _forward(ae, ae.encoder.values, ae.decoder.values, x)
    return out


def reconstruct(ae: Reconstructor, delta: Union[PosteriorDiff, np.ndarray]) -> np.ndarray:
    """X̂ = decoder(encoder(δ))."""
    values = delta.values if isinstance(delta, PosteriorDiff) else np.asarray(delta)
    if values.ndim != 1:
        raise ShapeError("reconstruct takes one posterior difference")
    return reconstruct_batch(ae, values)[0]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 and norm_b == 0:
        raise UndefinedSimilarityError("cosine similarity of two zero vectors")
    if norm_a == 0 or norm_b == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def reconstruction_similarity(x_hat: np.ndarray, x: np.ndarray) -> float:
    """Cosine similarity; for matrices, the mean over row pairs."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ShapeError(f"cannot compare shapes {x_hat.shape} and {x.shape}")
    if x.ndim == 1:
        return _cosine(x_hat, x)
    if len(x) == 0:
        raise ArgumentError("reconstruction similarity of an empty batch")
    return float(np.mean([_cosine(a, b) for a, b in zip(x_hat, x)]))


def save_reconstructor(path: Union[str, Path], ae: Reconstructor, seed: int):
    write_document(
        path,
        {
            "seed": int(seed),
            "models": {
                "encoder": params_to_document(ae.encoder),
                "decoder": params_to_document(ae.decoder),
            },
        },
    )


def load_reconstructor(path: Union[str, Path]) -> tuple[Reconstructor, int]:
    doc = read_document(path)
    models: Optional[dict] = doc.get("models")
    if not models or not {"encoder", "decoder"} <= models.keys():
        raise ConfigError(f"'{path}' does not hold an encoder/decoder pair")
    ae = Reconstructor(
        params_from_document(models["encoder"]), params_from_document(models["decoder"])
    )
    return ae, int(doc["seed"])
