"""Recurrent model whose hidden state lives in Cholesky space.

The cell re-expresses the usual gated-recurrence algebra on the
strict-lower / log-diagonal coordinates of Cholesky factors: strict parts
combine linearly through sigmoid/tanh gates, diagonals combine
geometrically (convex combination of logs), so the state is a valid
factor for any finite parameter values. Between recurrence steps the
state is evolved by a learned vector field integrated with fixed-step
RK4 on the global tangent chart. All gradients are hand-derived,
including the path through the Cholesky factorization of the front-end
output.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import expit as sigmoid

from .checkpoint import read_checkpoint, take_tensors, write_checkpoint
from .errors import InvalidInput, OdeDiverged, TrainingDiverged
from .geometry import CholeskyPoint, SplitPair, chart_exp, chart_log
from .linalg import cholesky_lower, cholesky_pullback, gram_schmidt
from .spdnet import (
    _reeig_cached,
    bimap_backward,
    bimap_forward,
    classify_forward,
    halfvec,
    halfvec_pullback,
    reeig_backward,
    softmax_cross_entropy,
    stiefel_grad,
    stiefel_step,
)

GRU_MAGIC = b"SPDG"
GATES = ("z", "r", "h")


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_inv(y: float) -> float:
    return math.log(math.expm1(y))


_MASKS: Dict[int, np.ndarray] = {}


def _strict_mask(d: int) -> np.ndarray:
    # cached read-only masks; gate math touches these every cell call
    mask = _MASKS.get(d)
    if mask is None:
        mask = np.tril(np.ones((d, d)), k=-1)
        mask.flags.writeable = False
        _MASKS[d] = mask
    return mask


# ---------------------------------------------------------------------------
# parameters


@dataclass
class GruParams:
    """Elementwise gate coefficients for hidden dimension ``d``.

    Per gate (update ``z``, reset ``r``, candidate ``h``): coefficient
    matrices ``strict_w``/``strict_u`` and bias ``strict_b`` acting on the
    strictly-lower triangle, coefficient vectors ``diag_w``/``diag_u``
    acting on the log-diagonal, and an unconstrained ``diag_scale_raw``
    whose softplus is the strictly positive diagonal gate scale.
    """

    d: int
    strict_w: Dict[str, np.ndarray]
    strict_u: Dict[str, np.ndarray]
    strict_b: Dict[str, np.ndarray]
    diag_w: Dict[str, np.ndarray]
    diag_u: Dict[str, np.ndarray]
    diag_scale_raw: Dict[str, np.ndarray]

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, scale: float = 0.1) -> "GruParams":
        mask = _strict_mask(d)
        # softplus(softplus(raw)) == 1 at init, so an all-identity input
        # sequence leaves the identity state fixed before training.
        raw0 = softplus_inv(softplus_inv(1.0))
        return cls(
            d=d,
            strict_w={g: rng.standard_normal((d, d)) * scale * mask for g in GATES},
            strict_u={g: rng.standard_normal((d, d)) * scale * mask for g in GATES},
            strict_b={g: np.zeros((d, d)) for g in GATES},
            diag_w={g: rng.standard_normal(d) * scale for g in GATES},
            diag_u={g: rng.standard_normal(d) * scale for g in GATES},
            diag_scale_raw={g: np.full(d, raw0) for g in GATES},
        )

    @classmethod
    def zeros(cls, d: int) -> "GruParams":
        return cls(
            d=d,
            strict_w={g: np.zeros((d, d)) for g in GATES},
            strict_u={g: np.zeros((d, d)) for g in GATES},
            strict_b={g: np.zeros((d, d)) for g in GATES},
            diag_w={g: np.zeros(d) for g in GATES},
            diag_u={g: np.zeros(d) for g in GATES},
            diag_scale_raw={g: np.zeros(d) for g in GATES},
        )

    def tensors(self) -> List[np.ndarray]:
        """Tensors in checkpoint declaration order."""
        out = []
        for g in GATES:
            out += [
                self.strict_w[g],
                self.strict_u[g],
                self.strict_b[g],
                self.diag_w[g],
                self.diag_u[g],
                self.diag_scale_raw[g],
            ]
        return out

    def parameter_count(self) -> int:
        strict = self.d * (self.d - 1) // 2
        return len(GATES) * (3 * strict + 3 * self.d)

    def sgd_update(self, grads: "GruParams", lr: float) -> None:
        mask = _strict_mask(self.d)
        for g in GATES:
            self.strict_w[g] -= lr * grads.strict_w[g] * mask
            self.strict_u[g] -= lr * grads.strict_u[g] * mask
            self.strict_b[g] -= lr * grads.strict_b[g] * mask
            self.diag_w[g] -= lr * grads.diag_w[g]
            self.diag_u[g] -= lr * grads.diag_u[g]
            self.diag_scale_raw[g] -= lr * grads.diag_scale_raw[g]

    def add_(self, other: "GruParams") -> None:
        for g in GATES:
            self.strict_w[g] += other.strict_w[g]
            self.strict_u[g] += other.strict_u[g]
            self.strict_b[g] += other.strict_b[g]
            self.diag_w[g] += other.diag_w[g]
            self.diag_u[g] += other.diag_u[g]
            self.diag_scale_raw[g] += other.diag_scale_raw[g]

    def scale_(self, c: float) -> None:
        for g in GATES:
            self.strict_w[g] *= c
            self.strict_u[g] *= c
            self.strict_b[g] *= c
            self.diag_w[g] *= c
            self.diag_u[g] *= c
            self.diag_scale_raw[g] *= c


@dataclass
class OdeField:
    """Two-layer tanh perceptron on flattened tangent coordinates."""

    w_in: np.ndarray   # (hidden, n_coords)
    b_in: np.ndarray   # (hidden,)
    w_out: np.ndarray  # (n_coords, hidden)
    b_out: np.ndarray  # (n_coords,)

    @classmethod
    def init(cls, n_coords: int, hidden: int, rng: np.random.Generator) -> "OdeField":
        # Zero output layer: the field starts as the zero dynamics, so the
        # untrained ODE stage is exactly the identity.
        return cls(
            w_in=rng.standard_normal((hidden, n_coords)) / math.sqrt(n_coords),
            b_in=np.zeros(hidden),
            w_out=np.zeros((n_coords, hidden)),
            b_out=np.zeros(n_coords),
        )

    def tensors(self) -> List[np.ndarray]:
        return [self.w_in, self.b_in, self.w_out, self.b_out]

    def parameter_count(self) -> int:
        return sum(t.size for t in self.tensors())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.w_out @ np.tanh(self.w_in @ x + self.b_in) + self.b_out


def _field_eval(field, x: np.ndarray) -> np.ndarray:
    y = np.asarray(field(x), dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise OdeDiverged("vector field returned non-finite values")
    return y


def _field_vjp(field: OdeField, x: np.ndarray, gy: np.ndarray):
    """Gradients of ``<gy, field(x)>`` w.r.t. x and the field parameters."""
    u = field.w_in @ x + field.b_in
    t = np.tanh(u)
    g_w_out = np.outer(gy, t)
    g_b_out = gy.copy()
    gt = field.w_out.T @ gy
    gu = gt * (1.0 - t * t)
    g_w_in = np.outer(gu, x)
    g_b_in = gu
    gx = field.w_in.T @ gu
    return gx, (g_w_in, g_b_in, g_w_out, g_b_out)


# ---------------------------------------------------------------------------
# chart-coordinate helpers

def _coords(p: CholeskyPoint) -> Tuple[np.ndarray, np.ndarray]:
    return p.strict, np.log(p.diag)


def _point(B: np.ndarray, b: np.ndarray) -> CholeskyPoint:
    return CholeskyPoint(np.tril(B, k=-1) + np.diag(np.exp(b)))


def _flatten(B: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b.shape[0]
    rows, cols = np.tril_indices(d, k=-1)
    return np.concatenate([B[rows, cols], b])


def _unflatten(x: np.ndarray, d: int) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = np.tril_indices(d, k=-1)
    B = np.zeros((d, d))
    B[rows, cols] = x[: rows.size]
    return B, x[rows.size :].copy()


# ---------------------------------------------------------------------------
# gate algebra (coordinates in, coordinates out, with caches)


def _gate_fwd(A, a, B, b, params: GruParams, g: str):
    mask = _strict_mask(params.d)
    P = (params.strict_w[g] * A + params.strict_u[g] * B + params.strict_b[g]) * mask
    S = sigmoid(P) * mask
    X = params.diag_w[g] * a + params.diag_u[g] * b
    E = np.exp(X)
    bp = softplus(params.diag_scale_raw[g])
    Q = bp * E
    D = sigmoid(Q)
    cache = (A, a, B, b, S, E, bp, Q, D)
    return S, D, cache


def _gate_bwd(gS, gD, cache, params: GruParams, g: str, grads: GruParams):
    A, a, B, b, S, E, bp, Q, D = cache
    mask = _strict_mask(params.d)
    gP = gS * S * (1.0 - S) * mask
    grads.strict_w[g] += gP * A
    grads.strict_u[g] += gP * B
    grads.strict_b[g] += gP
    gA = gP * params.strict_w[g]
    gB = gP * params.strict_u[g]
    gQ = gD * D * (1.0 - D)
    grads.diag_scale_raw[g] += gQ * E * sigmoid(params.diag_scale_raw[g])
    gX = gQ * bp * E
    grads.diag_w[g] += gX * a
    grads.diag_u[g] += gX * b
    ga = gX * params.diag_w[g]
    gb = gX * params.diag_u[g]
    return gA, ga, gB, gb


def _candidate_fwd(A, a, Sr, Dr, B, b, params: GruParams):
    mask = _strict_mask(params.d)
    g = "h"
    P = (params.strict_w[g] * A + params.strict_u[g] * (Sr * B) + params.strict_b[g]) * mask
    S = np.tanh(P) * mask
    log_dr = np.log(Dr)
    X = params.diag_w[g] * a + params.diag_u[g] * (log_dr + b)
    E = np.exp(X)
    bp = softplus(params.diag_scale_raw[g])
    Q = bp * E
    D = softplus(Q)  # positive candidate diagonal (not its log)
    cache = (A, a, Sr, Dr, B, b, S, E, bp, Q, log_dr)
    return S, D, cache


def _candidate_bwd(gS, gD, cache, params: GruParams, grads: GruParams):
    A, a, Sr, Dr, B, b, S, E, bp, Q, log_dr = cache
    mask = _strict_mask(params.d)
    g = "h"
    gP = gS * (1.0 - S * S) * mask
    grads.strict_w[g] += gP * A
    grads.strict_u[g] += gP * (Sr * B)
    grads.strict_b[g] += gP
    gA = gP * params.strict_w[g]
    gSr = gP * params.strict_u[g] * B
    gB = gP * params.strict_u[g] * Sr
    gQ = gD * sigmoid(Q)
    grads.diag_scale_raw[g] += gQ * E * sigmoid(params.diag_scale_raw[g])
    gX = gQ * bp * E
    grads.diag_w[g] += gX * a
    grads.diag_u[g] += gX * (log_dr + b)
    ga = gX * params.diag_w[g]
    gDr = gX * params.diag_u[g] / Dr
    gb = gX * params.diag_u[g]
    return gA, ga, gSr, gDr, gB, gb


def _output_fwd(Sz, Dz, Sc, Dc, B, b):
    Bn = (1.0 - Sz) * B + Sz * Sc
    log_dc = np.log(Dc)
    bn = (1.0 - Dz) * b + Dz * log_dc
    return Bn, bn, (Sz, Dz, Sc, Dc, B, b, log_dc)


def _output_bwd(gBn, gbn, cache):
    Sz, Dz, Sc, Dc, B, b, log_dc = cache
    gSz = gBn * (Sc - B)
    gB = gBn * (1.0 - Sz)
    gSc = gBn * Sz
    gDz = gbn * (log_dc - b)
    gb = gbn * (1.0 - Dz)
    gDc = gbn * Dz / Dc
    return gSz, gDz, gSc, gDc, gB, gb


def _cell_fwd(A, a, B, b, params: GruParams):
    Sz, Dz, cz = _gate_fwd(A, a, B, b, params, "z")
    Sr, Dr, cr = _gate_fwd(A, a, B, b, params, "r")
    Sc, Dc, cc = _candidate_fwd(A, a, Sr, Dr, B, b, params)
    Bn, bn, co = _output_fwd(Sz, Dz, Sc, Dc, B, b)
    return Bn, bn, (cz, cr, cc, co)


def _cell_bwd(gBn, gbn, cache, params: GruParams, grads: GruParams):
    cz, cr, cc, co = cache
    gSz, gDz, gSc, gDc, gB, gb = _output_bwd(gBn, gbn, co)
    gA, ga, gSr, gDr, gB2, gb2 = _candidate_bwd(gSc, gDc, cc, params, grads)
    gB += gB2
    gb += gb2
    gA2, ga2, gB2, gb2 = _gate_bwd(gSr, gDr, cr, params, "r", grads)
    gA += gA2
    ga += ga2
    gB += gB2
    gb += gb2
    gA2, ga2, gB2, gb2 = _gate_bwd(gSz, gDz, cz, params, "z", grads)
    gA += gA2
    ga += ga2
    gB += gB2
    gb += gb2
    return gA, ga, gB, gb


# ---------------------------------------------------------------------------
# public cell operations on manifold points


def gate_z(l_t: CholeskyPoint, h_prev: CholeskyPoint, params: GruParams) -> SplitPair:
    """Update gate: strict and diagonal parts, all entries in (0, 1)."""
    _check_dims(l_t, h_prev, params)
    A, a = _coords(l_t)
    B, b = _coords(h_prev)
    S, D, _ = _gate_fwd(A, a, B, b, params, "z")
    return SplitPair(strict=S, diag=D)


def gate_r(l_t: CholeskyPoint, h_prev: CholeskyPoint, params: GruParams) -> SplitPair:
    """Reset gate; same contract as :func:`gate_z`."""
    _check_dims(l_t, h_prev, params)
    A, a = _coords(l_t)
    B, b = _coords(h_prev)
    S, D, _ = _gate_fwd(A, a, B, b, params, "r")
    return SplitPair(strict=S, diag=D)


def candidate(
    l_t: CholeskyPoint, r_t: SplitPair, h_prev: CholeskyPoint, params: GruParams
) -> CholeskyPoint:
    """Candidate state: tanh strict part, softplus (positive) diagonal."""
    _check_dims(l_t, h_prev, params)
    A, a = _coords(l_t)
    B, b = _coords(h_prev)
    S, D, _ = _candidate_fwd(A, a, r_t.strict, r_t.diag, B, b, params)
    return CholeskyPoint(np.tril(S, k=-1) + np.diag(D))


def output_combine(
    z_t: SplitPair, h_hat: CholeskyPoint, h_prev: CholeskyPoint
) -> CholeskyPoint:
    """Blend previous state and candidate through the update gate.

    Strict parts mix linearly, diagonals geometrically. The endpoints are
    exact: an injected all-zero gate returns ``h_prev`` bit-for-bit, an
    all-one gate returns ``h_hat``.
    """
    Sz, Dz = z_t.strict, z_t.diag
    strict = (1.0 - Sz) * h_prev.strict + Sz * h_hat.strict
    blended = np.exp((1.0 - Dz) * np.log(h_prev.diag) + Dz * np.log(h_hat.diag))
    diag = np.where(Dz == 0.0, h_prev.diag, np.where(Dz == 1.0, h_hat.diag, blended))
    return CholeskyPoint(np.tril(strict, k=-1) + np.diag(diag))


def ode_evolve(
    h: CholeskyPoint,
    field: "OdeField | Callable[[np.ndarray], np.ndarray]",
    t0: float,
    t1: float,
    steps: int,
) -> CholeskyPoint:
    """Evolve a state along a vector field on the tangent chart.

    Classic fixed-step RK4 with ``steps`` steps over ``[t0, t1]`` applied
    to the flattened chart coordinates, then mapped back to the manifold.
    Deterministic; a zero field is the exact identity.
    """
    if steps < 1:
        raise InvalidInput("steps must be at least 1")
    T = chart_log(h)
    x0 = _flatten(np.tril(T, k=-1), np.diag(T).copy())
    x, _ = _ode_fwd(x0, field, t0, t1, steps)
    B, b = _unflatten(x, h.dim)
    return chart_exp(B + np.diag(b))


def _check_dims(l_t: CholeskyPoint, h_prev: CholeskyPoint, params: GruParams) -> None:
    if l_t.dim != h_prev.dim or l_t.dim != params.d:
        raise InvalidInput(
            f"dimension mismatch: input {l_t.dim}, state {h_prev.dim}, params {params.d}"
        )


# ---------------------------------------------------------------------------
# ODE integration with cached reverse pass


def _ode_fwd(x0, field, t0: float, t1: float, steps: int):
    h = (t1 - t0) / steps
    x = x0
    trace = []
    for _ in range(steps):
        k1 = _field_eval(field, x)
        x2 = x + 0.5 * h * k1
        k2 = _field_eval(field, x2)
        x3 = x + 0.5 * h * k2
        k3 = _field_eval(field, x3)
        x4 = x + h * k3
        k4 = _field_eval(field, x4)
        trace.append((x, x2, x3, x4))
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x, (h, trace)


def _ode_bwd(field: OdeField, cache, gx):
    h, trace = cache
    g_field = [np.zeros_like(t) for t in field.tensors()]

    def accumulate(parts):
        for acc, p in zip(g_field, parts):
            acc += p

    for x1, x2, x3, x4 in reversed(trace):
        gk1 = (h / 6.0) * gx
        gk2 = (h / 3.0) * gx
        gk3 = (h / 3.0) * gx
        gk4 = (h / 6.0) * gx
        gx_cur = gx.copy()
        gxi, parts = _field_vjp(field, x4, gk4)
        accumulate(parts)
        gx_cur += gxi
        gk3 = gk3 + h * gxi
        gxi, parts = _field_vjp(field, x3, gk3)
        accumulate(parts)
        gx_cur += gxi
        gk2 = gk2 + 0.5 * h * gxi
        gxi, parts = _field_vjp(field, x2, gk2)
        accumulate(parts)
        gx_cur += gxi
        gk1 = gk1 + 0.5 * h * gxi
        gxi, parts = _field_vjp(field, x1, gk1)
        accumulate(parts)
        gx_cur += gxi
        gx = gx_cur
    return gx, g_field


# ---------------------------------------------------------------------------
# full model


@dataclass(frozen=True)
class GruModelConfig:
    """Architecture and training hyperparameters for the recurrent model."""

    frontend_dims: Tuple[int, ...] = (22, 22)
    eps: float = 1e-4
    ode_hidden: int = 280
    ode_steps: int = 10
    n_classes: int = 26
    learning_rate: float = 1e-2
    epochs: int = 150
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.frontend_dims) < 2 or any(d < 1 for d in self.frontend_dims):
            raise InvalidInput("frontend_dims needs positive input/output dimensions")
        if any(b > a for a, b in zip(self.frontend_dims, self.frontend_dims[1:])):
            raise InvalidInput("frontend dimensions must be non-increasing")
        if self.eps <= 0 or self.ode_hidden < 1 or self.ode_steps < 1:
            raise InvalidInput("bad eps / ODE settings")
        if self.n_classes < 2 or self.learning_rate <= 0 or self.epochs < 1:
            raise InvalidInput("bad training hyperparameters")

    @property
    def hidden_dim(self) -> int:
        return self.frontend_dims[-1]

    @property
    def n_coords(self) -> int:
        d = self.hidden_dim
        return d * (d + 1) // 2

    def to_dict(self) -> Dict:
        return {
            "frontend_dims": list(self.frontend_dims),
            "eps": self.eps,
            "ode_hidden": self.ode_hidden,
            "ode_steps": self.ode_steps,
            "n_classes": self.n_classes,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "GruModelConfig":
        return cls(
            frontend_dims=tuple(d["frontend_dims"]),
            eps=d["eps"],
            ode_hidden=d["ode_hidden"],
            ode_steps=d["ode_steps"],
            n_classes=d["n_classes"],
            learning_rate=d["learning_rate"],
            epochs=d["epochs"],
            seed=d["seed"],
        )


class GruModel:
    """Bilinear front-end feeding the Cholesky-space recurrence."""

    def __init__(self, config: GruModelConfig, frontend: List[np.ndarray],
                 cell: GruParams, field: OdeField,
                 head_w: np.ndarray, head_b: np.ndarray):
        self.config = config
        self.frontend = frontend
        self.cell = cell
        self.field = field
        self.head_w = head_w
        self.head_b = head_b

    @classmethod
    def init(cls, config: GruModelConfig, rng: np.random.Generator) -> "GruModel":
        frontend = [
            gram_schmidt(rng.standard_normal((a, b)))
            for a, b in zip(config.frontend_dims, config.frontend_dims[1:])
        ]
        cell = GruParams.init(config.hidden_dim, rng)
        field = OdeField.init(config.n_coords, config.ode_hidden, rng)
        head_w = rng.standard_normal((config.n_classes, config.n_coords))
        head_w /= math.sqrt(config.n_coords)
        head_b = np.zeros(config.n_classes)
        return cls(config, frontend, cell, field, head_w, head_b)

    # -- forward --------------------------------------------------------------

    def forward(self, seq: Sequence[np.ndarray], want_cache: bool = False):
        if len(seq) == 0:
            raise InvalidInput("input sequence is empty")
        d = self.config.hidden_dim
        B = np.zeros((d, d))
        b = np.zeros(d)
        step_caches = []
        for E in seq:
            x = np.asarray(E, dtype=np.float64)
            fcaches = []
            for W in self.frontend:
                x_in = x
                x = bimap_forward(x, W)
                x, pair = _reeig_cached(x, self.config.eps)
                fcaches.append((x_in, pair))
            L = cholesky_lower(x)
            A = np.tril(L, k=-1)
            a = np.log(np.diag(L))
            x0 = _flatten(B, b)
            x1, ode_cache = _ode_fwd(x0, self.field, 0.0, 1.0, self.config.ode_steps)
            B, b = _unflatten(x1, d)
            Bn, bn, cell_cache = _cell_fwd(A, a, B, b, self.cell)
            step_caches.append((fcaches, L, ode_cache, cell_cache))
            B, b = Bn, bn
        tangent = B + np.diag(b)
        logits = classify_forward(tangent, self.head_w, self.head_b)
        if want_cache:
            return logits, (step_caches, tangent)
        return logits

    # -- backward ---------------------------------------------------------------

    def backward(self, cache, grad_logits: np.ndarray):
        step_caches, tangent = cache
        d = self.config.hidden_dim
        grads = {
            "frontend": [np.zeros_like(W) for W in self.frontend],
            "cell": GruParams.zeros(d),
            "field": [np.zeros_like(t) for t in self.field.tensors()],
            "head_w": np.outer(grad_logits, halfvec(tangent)),
            "head_b": grad_logits.copy(),
        }
        gT = halfvec_pullback(self.head_w.T @ grad_logits, d)
        gB = np.tril(gT, k=-1)
        gb = np.diag(gT).copy()
        for fcaches, L, ode_cache, cell_cache in reversed(step_caches):
            gA, ga, gB, gb = _cell_bwd(gB, gb, cell_cache, self.cell, grads["cell"])
            gx, g_field = _ode_bwd(self.field, ode_cache, _flatten(gB, gb))
            for acc, g in zip(grads["field"], g_field):
                acc += g
            gB, gb = _unflatten(gx, d)
            gL = np.tril(gA, k=-1) + np.diag(ga / np.diag(L))
            g = cholesky_pullback(L, gL)
            for k in range(len(self.frontend) - 1, -1, -1):
                x_in, pair = fcaches[k]
                g = reeig_backward(pair, self.config.eps, g)
                g, gW = bimap_backward(x_in, self.frontend[k], g)
                grads["frontend"][k] += gW
        return grads

    # -- inference / bookkeeping -----------------------------------------------

    def logits_batch(self, seqs: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
        return np.stack([self.forward(s) for s in seqs])

    def predict(self, seqs: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
        return np.argmax(self.logits_batch(seqs), axis=1)

    def parameter_count(self) -> int:
        n = sum(W.size for W in self.frontend)
        n += self.cell.parameter_count()
        n += self.field.parameter_count()
        n += self.head_w.size + self.head_b.size
        return n

    def parameters(self) -> List[np.ndarray]:
        return [
            *self.frontend,
            *self.cell.tensors(),
            *self.field.tensors(),
            self.head_w,
            self.head_b,
        ]

    def save(self, path) -> None:
        write_checkpoint(path, GRU_MAGIC, self.config.to_dict(), self.parameters())

    @classmethod
    def load(cls, path) -> "GruModel":
        raw_config, flat = read_checkpoint(path, GRU_MAGIC)
        config = GruModelConfig.from_dict(raw_config)
        d = config.hidden_dim
        shapes = [(a, b) for a, b in zip(config.frontend_dims, config.frontend_dims[1:])]
        for _ in GATES:
            shapes += [(d, d), (d, d), (d, d), (d,), (d,), (d,)]
        n, hid = config.n_coords, config.ode_hidden
        shapes += [(hid, n), (hid,), (n, hid), (n,)]
        shapes += [(config.n_classes, n), (config.n_classes,)]
        tensors = take_tensors(flat, shapes)
        n_front = len(config.frontend_dims) - 1
        frontend = tensors[:n_front]
        pos = n_front
        cell = GruParams.zeros(d)
        for g in GATES:
            cell.strict_w[g], cell.strict_u[g], cell.strict_b[g] = tensors[pos : pos + 3]
            cell.diag_w[g], cell.diag_u[g], cell.diag_scale_raw[g] = tensors[pos + 3 : pos + 6]
            pos += 6
        field = OdeField(*tensors[pos : pos + 4])
        head_w, head_b = tensors[pos + 4], tensors[pos + 5]
        return cls(config, frontend, cell, field, head_w, head_b)


def gru_model_forward(seq: Sequence[np.ndarray], model: GruModel) -> np.ndarray:
    """Class scores for one sequence of SPD matrices (initial state: identity)."""
    return model.forward(seq)


# ---------------------------------------------------------------------------
# training


def evaluate_accuracy(model: GruModel, data) -> float:
    if len(data) == 0:
        return 0.0
    hits = sum(1 for seq, y in data if int(np.argmax(model.forward(seq))) == y)
    return hits / len(data)


def gru_train(
    config: GruModelConfig,
    train: Sequence[Tuple[Sequence[np.ndarray], int]],
    validation: Sequence[Tuple[Sequence[np.ndarray], int]],
) -> Tuple[GruModel, List[Dict]]:
    """Full-batch training of the recurrent model.

    Front-end weights follow Stiefel tangent steps with Gram-Schmidt
    retraction; gate, field, and head parameters follow plain SGD. The
    returned model carries the weights of the best validation epoch.
    """
    if len(train) == 0 or len(validation) == 0:
        raise InvalidInput("training and validation sets must be non-empty")
    for _, y in list(train) + list(validation):
        if not (0 <= y < config.n_classes):
            raise InvalidInput(f"label {y} outside [0, {config.n_classes})")
    rng = np.random.default_rng(config.seed)
    model = GruModel.init(config, rng)
    best_val = -1.0
    best_params = None
    metrics: List[Dict] = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        total_loss = 0.0
        hits = 0
        acc = {
            "frontend": [np.zeros_like(W) for W in model.frontend],
            "cell": GruParams.zeros(config.hidden_dim),
            "field": [np.zeros_like(t) for t in model.field.tensors()],
            "head_w": np.zeros_like(model.head_w),
            "head_b": np.zeros_like(model.head_b),
        }
        for seq, y in train:
            logits, cache = model.forward(seq, want_cache=True)
            loss, grad_logits = softmax_cross_entropy(logits, y)
            total_loss += loss
            hits += int(np.argmax(logits)) == y
            grads = model.backward(cache, grad_logits)
            for a, g in zip(acc["frontend"], grads["frontend"]):
                a += g
            acc["cell"].add_(grads["cell"])
            for a, g in zip(acc["field"], grads["field"]):
                a += g
            acc["head_w"] += grads["head_w"]
            acc["head_b"] += grads["head_b"]
        n = len(train)
        mean_loss = total_loss / n
        if not math.isfinite(mean_loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
        for k, W in enumerate(model.frontend):
            model.frontend[k] = stiefel_step(W, stiefel_grad(acc["frontend"][k] / n, W), lr)
        acc["cell"].scale_(1.0 / n)
        model.cell.sgd_update(acc["cell"], lr)
        for t, g in zip(model.field.tensors(), acc["field"]):
            t -= lr * g / n
        model.head_w -= lr * acc["head_w"] / n
        model.head_b -= lr * acc["head_b"] / n
        val_acc = evaluate_accuracy(model, validation)
        metrics.append(
            {
                "epoch": epoch,
                "train_loss": mean_loss,
                "train_accuracy": hits / n,
                "val_accuracy": val_acc,
            }
        )
        if val_acc > best_val:
            best_val = val_acc
            best_params = copy.deepcopy(
                (model.frontend, model.cell, model.field, model.head_w, model.head_b)
            )
    if best_params is not None:
        model.frontend, model.cell, model.field, model.head_w, model.head_b = best_params
    return model, metrics
