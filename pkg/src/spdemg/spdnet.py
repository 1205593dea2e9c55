"""Trainable network on SPD matrices with manifold-aware optimization.

The architecture alternates bilinear dimension-reducing maps with
semi-orthogonal weights, spectral rectification, and a final matrix-log
projection to the tangent space, followed by a linear classifier on the
isometric half-vectorization. All gradients are hand-derived; the
bilinear weights are updated on the Stiefel manifold (tangent projection
plus Gram-Schmidt retraction), everything else by plain SGD.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .checkpoint import read_checkpoint, take_tensors, write_checkpoint
from .errors import InvalidInput, NotPositiveDefinite, TrainingDiverged
from .linalg import EigPair, gram_schmidt, matfun_backprop, sym, sym_eig

SPDNET_MAGIC = b"SPDN"


# ---------------------------------------------------------------------------
# layer primitives


def bimap_forward(E: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Bilinear map ``W^T E W`` (SPD in, SPD out for full-rank W)."""
    E = np.asarray(E, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if E.shape[0] != E.shape[1] or E.shape[0] != W.shape[0]:
        raise InvalidInput(f"shape mismatch: E {E.shape}, W {W.shape}")
    return W.T @ E @ W


def bimap_backward(
    E: np.ndarray, W: np.ndarray, grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Input gradient ``W G W^T`` and Euclidean weight gradient ``2 E W sym(G)``."""
    grad_in = W @ grad_out @ W.T
    grad_W = 2.0 * E @ W @ sym(grad_out)
    return grad_in, grad_W


def _reeig_cached(E: np.ndarray, eps: float) -> Tuple[np.ndarray, EigPair]:
    pair = sym_eig(E)
    out = pair.U @ np.diag(np.maximum(pair.sigma, eps)) @ pair.U.T
    return sym(out), pair


def reeig_forward(E: np.ndarray, eps: float) -> np.ndarray:
    """Spectral floor: eigenvalues below ``eps`` are raised to ``eps``."""
    if eps <= 0:
        raise InvalidInput("eps must be positive")
    return _reeig_cached(E, eps)[0]


def reeig_backward(pair: EigPair, eps: float, grad_out: np.ndarray) -> np.ndarray:
    return matfun_backprop(
        pair,
        lambda s: np.maximum(s, eps),
        lambda s: (s > eps).astype(np.float64),
        grad_out,
    )


def _logeig_cached(E: np.ndarray) -> Tuple[np.ndarray, EigPair]:
    pair = sym_eig(E)
    if pair.sigma[-1] <= 0.0:
        raise NotPositiveDefinite("matrix log needs strictly positive eigenvalues")
    out = pair.U @ np.diag(np.log(pair.sigma)) @ pair.U.T
    return sym(out), pair


def logeig_forward(E: np.ndarray) -> np.ndarray:
    """Matrix logarithm, mapping the SPD cone onto the symmetric matrices."""
    return _logeig_cached(E)[0]


def logeig_backward(pair: EigPair, grad_out: np.ndarray) -> np.ndarray:
    return matfun_backprop(pair, np.log, lambda s: 1.0 / s, grad_out)


def stiefel_grad(grad_eucl: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Project a Euclidean gradient onto the Stiefel tangent space at W."""
    return grad_eucl - W @ grad_eucl.T @ W


def stiefel_step(W: np.ndarray, tangent: np.ndarray, lr: float) -> np.ndarray:
    """Descend along the tangent and retract by Gram-Schmidt."""
    if lr <= 0:
        raise InvalidInput("learning rate must be positive")
    return gram_schmidt(W - lr * tangent)


# ---------------------------------------------------------------------------
# half-vectorization and classifier head


def halfvec(M: np.ndarray) -> np.ndarray:
    """Lower-triangle vectorization with sqrt(2)-scaled off-diagonals.

    The scaling makes the map a Frobenius isometry on symmetric matrices:
    ``||halfvec(M)||_2 == ||M||_F``.
    """
    d = M.shape[0]
    rows, cols = np.tril_indices(d)
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    return M[rows, cols] * scale


def halfvec_pullback(grad_v: np.ndarray, d: int) -> np.ndarray:
    """Scatter a half-vector gradient back onto the lower triangle."""
    rows, cols = np.tril_indices(d)
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    G = np.zeros((d, d))
    G[rows, cols] = grad_v * scale
    return G


def classify_forward(M: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine class scores from a tangent-space matrix."""
    v = halfvec(M)
    if weights.shape[1] != v.shape[0]:
        raise InvalidInput(
            f"head expects width {weights.shape[1]}, matrix gives {v.shape[0]}"
        )
    return weights @ v + bias


def softmax_cross_entropy(logits: np.ndarray, label: int) -> Tuple[float, np.ndarray]:
    """Stable loss and gradient w.r.t. the logits."""
    z = logits - np.max(logits)
    log_norm = math.log(np.sum(np.exp(z)))
    loss = log_norm - z[label]
    grad = np.exp(z - log_norm)
    grad[label] -= 1.0
    return float(loss), grad


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class SpdNetConfig:
    """Architecture and training hyperparameters.

    ``layer_dims`` chains the bilinear maps: ``(22, 22)`` is one square
    22->22 map (whose weight doubles as the shared-basis estimate used by
    the diagnostic analyses), ``(22, 16, 8)`` stacks two reducing maps.
    """

    layer_dims: Tuple[int, ...] = (22, 22)
    eps: float = 1e-4
    n_classes: int = 26
    learning_rate: float = 1e-2
    epochs: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2:
            raise InvalidInput("layer_dims needs an input and an output dimension")
        if any(d < 1 for d in self.layer_dims):
            raise InvalidInput("layer dimensions must be positive")
        if any(b > a for a, b in zip(self.layer_dims, self.layer_dims[1:])):
            raise InvalidInput("layer dimensions must be non-increasing")
        if self.eps <= 0:
            raise InvalidInput("eps must be positive")
        if self.n_classes < 2:
            raise InvalidInput("need at least two classes")
        if self.learning_rate <= 0 or self.epochs < 1:
            raise InvalidInput("bad training hyperparameters")

    @property
    def head_width(self) -> int:
        d = self.layer_dims[-1]
        return d * (d + 1) // 2

    def to_dict(self) -> Dict:
        return {
            "layer_dims": list(self.layer_dims),
            "eps": self.eps,
            "n_classes": self.n_classes,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "SpdNetConfig":
        return cls(
            layer_dims=tuple(d["layer_dims"]),
            eps=d["eps"],
            n_classes=d["n_classes"],
            learning_rate=d["learning_rate"],
            epochs=d["epochs"],
            seed=d["seed"],
        )


class SpdNetModel:
    """Bilinear/rectify stack, matrix log, and a linear classifier head."""

    def __init__(self, config: SpdNetConfig, bimaps: List[np.ndarray],
                 head_w: np.ndarray, head_b: np.ndarray):
        self.config = config
        self.bimaps = bimaps
        self.head_w = head_w
        self.head_b = head_b

    @classmethod
    def init(cls, config: SpdNetConfig, rng: np.random.Generator) -> "SpdNetModel":
        bimaps = [
            gram_schmidt(rng.standard_normal((a, b)))
            for a, b in zip(config.layer_dims, config.layer_dims[1:])
        ]
        head_w = rng.standard_normal((config.n_classes, config.head_width))
        head_w /= math.sqrt(config.head_width)
        head_b = np.zeros(config.n_classes)
        return cls(config, bimaps, head_w, head_b)

    # -- forward / backward -------------------------------------------------

    def forward(self, E: np.ndarray, want_cache: bool = False):
        caches = []
        x = np.asarray(E, dtype=np.float64)
        for W in self.bimaps:
            x_in = x
            x = bimap_forward(x, W)
            y, pair = _reeig_cached(x, self.config.eps)
            caches.append((x_in, pair))
            x = y
        tangent, log_pair = _logeig_cached(x)
        logits = classify_forward(tangent, self.head_w, self.head_b)
        if want_cache:
            return logits, (caches, log_pair, tangent)
        return logits

    def backward(self, cache, grad_logits: np.ndarray) -> Dict[str, List[np.ndarray]]:
        """Gradients for every parameter given dLoss/dlogits."""
        caches, log_pair, tangent = cache
        v = halfvec(tangent)
        grad_head_w = np.outer(grad_logits, v)
        grad_head_b = grad_logits.copy()
        grad_tangent = halfvec_pullback(self.head_w.T @ grad_logits,
                                        self.config.layer_dims[-1])
        g = logeig_backward(log_pair, grad_tangent)
        grad_bimaps: List[np.ndarray] = [None] * len(self.bimaps)
        for k in range(len(self.bimaps) - 1, -1, -1):
            x_in, pair = caches[k]
            g = reeig_backward(pair, self.config.eps, g)
            g, grad_W = bimap_backward(x_in, self.bimaps[k], g)
            grad_bimaps[k] = grad_W
        return {"bimaps": grad_bimaps, "head_w": grad_head_w, "head_b": grad_head_b}

    # -- inference ------------------------------------------------------------

    def logits_batch(self, mats: Sequence[np.ndarray]) -> np.ndarray:
        return np.stack([self.forward(E) for E in mats])

    def predict(self, mats: Sequence[np.ndarray]) -> np.ndarray:
        return np.argmax(self.logits_batch(mats), axis=1)

    # -- bookkeeping ----------------------------------------------------------

    def parameter_count(self) -> int:
        n = sum(W.size for W in self.bimaps)
        return n + self.head_w.size + self.head_b.size

    def parameters(self) -> List[np.ndarray]:
        """Tensors in checkpoint declaration order."""
        return [*self.bimaps, self.head_w, self.head_b]

    def save(self, path) -> None:
        write_checkpoint(path, SPDNET_MAGIC, self.config.to_dict(), self.parameters())

    @classmethod
    def load(cls, path) -> "SpdNetModel":
        raw_config, flat = read_checkpoint(path, SPDNET_MAGIC)
        config = SpdNetConfig.from_dict(raw_config)
        shapes = [(a, b) for a, b in zip(config.layer_dims, config.layer_dims[1:])]
        shapes += [(config.n_classes, config.head_width), (config.n_classes,)]
        tensors = take_tensors(flat, shapes)
        return cls(config, tensors[:-2], tensors[-2], tensors[-1])


# ---------------------------------------------------------------------------
# training


def evaluate_accuracy(model: SpdNetModel, data: Sequence[Tuple[np.ndarray, int]]) -> float:
    if len(data) == 0:
        return 0.0
    hits = sum(1 for E, y in data if int(np.argmax(model.forward(E))) == y)
    return hits / len(data)


def spdnet_train(
    config: SpdNetConfig,
    train: Sequence[Tuple[np.ndarray, int]],
    validation: Sequence[Tuple[np.ndarray, int]],
) -> Tuple[SpdNetModel, List[Dict]]:
    """Full-batch training with best-validation weight retention.

    Euclidean parameters follow plain SGD at the configured rate; each
    bilinear weight follows its Stiefel tangent gradient and is retracted
    back to semi-orthogonality after every step. Deterministic for a
    fixed seed.

    Returns the model carrying the weights of the best validation epoch
    and the per-epoch metrics stream.
    """
    if len(train) == 0 or len(validation) == 0:
        raise InvalidInput("training and validation sets must be non-empty")
    for _, y in list(train) + list(validation):
        if not (0 <= y < config.n_classes):
            raise InvalidInput(f"label {y} outside [0, {config.n_classes})")
    rng = np.random.default_rng(config.seed)
    model = SpdNetModel.init(config, rng)
    best = {"val_accuracy": -1.0, "params": None}
    metrics: List[Dict] = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        total_loss = 0.0
        hits = 0
        grad_bimaps = [np.zeros_like(W) for W in model.bimaps]
        grad_head_w = np.zeros_like(model.head_w)
        grad_head_b = np.zeros_like(model.head_b)
        for E, y in train:
            logits, cache = model.forward(E, want_cache=True)
            loss, grad_logits = softmax_cross_entropy(logits, y)
            total_loss += loss
            hits += int(np.argmax(logits)) == y
            grads = model.backward(cache, grad_logits)
            for gacc, g in zip(grad_bimaps, grads["bimaps"]):
                gacc += g
            grad_head_w += grads["head_w"]
            grad_head_b += grads["head_b"]
        n = len(train)
        mean_loss = total_loss / n
        if not math.isfinite(mean_loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
        for k, W in enumerate(model.bimaps):
            tangent = stiefel_grad(grad_bimaps[k] / n, W)
            model.bimaps[k] = stiefel_step(W, tangent, lr)
        model.head_w -= lr * grad_head_w / n
        model.head_b -= lr * grad_head_b / n
        val_acc = evaluate_accuracy(model, validation)
        metrics.append(
            {
                "epoch": epoch,
                "train_loss": mean_loss,
                "train_accuracy": hits / n,
                "val_accuracy": val_acc,
            }
        )
        if val_acc > best["val_accuracy"]:
            best["val_accuracy"] = val_acc
            best["params"] = copy.deepcopy(model.parameters())
    if best["params"] is not None:
        *bimaps, head_w, head_b = best["params"]
        model.bimaps = list(bimaps)
        model.head_w = head_w
        model.head_b = head_b
    return model, metrics
