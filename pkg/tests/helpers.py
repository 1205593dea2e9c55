"""Shared test utilities: finite differences, random generators, oracles."""

from __future__ import annotations

import numpy as np

from spdemg.geometry import CholeskyPoint
from spdemg.linalg import sym


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)


def fd_grad(f, x: np.ndarray, h: float = 1e-5, mask: np.ndarray | None = None) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        if mask is not None and mask[idx] == 0:
            continue
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_grad_sym(f, M: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Finite differences under symmetric perturbations (pairs move together)."""
    d = M.shape[0]
    G = np.zeros_like(M, dtype=np.float64)
    for i in range(d):
        for j in range(i + 1):
            P = np.zeros_like(M)
            P[i, j] = h
            P[j, i] = h
            if i == j:
                P[i, i] = h
            G[i, j] = (f(M + P) - f(M - P)) / (2 * h)
            G[j, i] = G[i, j]
    return G


def sym_convention(G: np.ndarray) -> np.ndarray:
    """Full-matrix analytic gradient -> symmetric-perturbation convention."""
    return G + G.T - np.diag(np.diag(G))


def rand_spd(d: int, rng: np.random.Generator, lo: float = 0.5, hi: float = 3.0) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return sym(Q @ np.diag(rng.uniform(lo, hi, d)) @ Q.T)


def rand_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q


def rand_point(d: int, rng: np.random.Generator, scale: float = 1.0) -> CholeskyPoint:
    strict = np.tril(rng.standard_normal((d, d)), -1) * scale
    log_diag = rng.standard_normal(d) * scale
    return CholeskyPoint(strict + np.diag(np.exp(log_diag)))


def chart_cluster(
    center: CholeskyPoint, sigma: float, n: int, rng: np.random.Generator
) -> list[CholeskyPoint]:
    """Gaussian cloud around a point in strict/log-diagonal coordinates."""
    d = center.dim
    strict0 = center.strict
    logd0 = np.log(center.diag)
    out = []
    for _ in range(n):
        strict = strict0 + np.tril(rng.standard_normal((d, d)), -1) * sigma
        logd = logd0 + rng.standard_normal(d) * sigma
        out.append(CholeskyPoint(strict + np.diag(np.exp(logd))))
    return out


def separable_spd_dataset(
    n_classes: int,
    per_class: int,
    d: int,
    rng: np.random.Generator,
    separation: float = 1.2,
    noise: float = 0.15,
):
    """Labeled SPD matrices whose classes are well separated in chart space."""
    data = []
    for c in range(n_classes):
        center = rand_point(d, rng, scale=separation)
        for p in chart_cluster(center, noise, per_class, rng):
            data.append((p.L @ p.L.T, c))
    return data


def trajectory_dataset(
    n_classes: int,
    per_class: int,
    T: int,
    channels: int,
    rng: np.random.Generator,
    drift: float = 0.8,
    noise: float = 0.05,
):
    """Sequences of SPD matrices; the class sets the log-diagonal drift direction."""
    dirs = []
    for m in range(n_classes):
        u = np.zeros(channels)
        u[m % channels] = 1.0
        u[(m + 1) % channels] = -1.0
        dirs.append(u)
    data = []
    for m in range(n_classes):
        for _ in range(per_class):
            seq = []
            for t in range(T):
                logd = drift * (t + 1) * dirs[m] + noise * rng.standard_normal(channels)
                J = noise * rng.standard_normal((channels, channels))
                seq.append(sym(np.diag(np.exp(logd)) + 0.1 * J @ J.T))
            data.append((seq, m))
    return data


def adjusted_rand_index(a, b) -> float:
    """Independent ARI computation from the contingency table."""
    a = np.asarray(a)
    b = np.asarray(b)
    ua, ub = np.unique(a), np.unique(b)
    table = np.zeros((ua.size, ub.size))
    for x, y in zip(a, b):
        table[np.searchsorted(ua, x), np.searchsorted(ub, y)] += 1

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    total = comb2(a.size)
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
