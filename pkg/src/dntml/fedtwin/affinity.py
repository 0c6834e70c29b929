"""Weighted affinity graph over base stations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError

COMPONENTS = ("proximity", "backhaul", "overlap", "traffic")


@dataclass(frozen=True)
class BSAttributes:
    position: np.ndarray          # (n, 2)
    backhaul: np.ndarray          # (n,)
    radius: np.ndarray            # (n,)
    histogram: np.ndarray         # (n, h)

    def __post_init__(self):
        n = len(self.position)
        if np.shape(self.position) != (n, 2):
            raise InvalidParameterError("position must have shape (n, 2)")
        for name in ("backhaul", "radius"):
            if np.shape(getattr(self, name)) != (n,):
                raise InvalidParameterError(f"{name} must have one entry per node")
        if len(self.histogram) != n:
            raise InvalidParameterError("histogram must have one row per node")
        if np.any(np.asarray(self.backhaul) < 0) or np.any(np.asarray(self.radius) < 0):
            raise InvalidParameterError("backhaul and radius must be non-negative")

    @property
    def n(self) -> int:
        return len(self.position)

    def replace_node(self, i: int, **fields) -> "BSAttributes":
        vals = {k: np.array(getattr(self, k), dtype=float, copy=True)
                for k in ("position", "backhaul", "radius", "histogram")}
        for k, v in fields.items():
            vals[k][i] = v
        return BSAttributes(**vals)


@dataclass(frozen=True)
class AffinityGraph:
    weights: np.ndarray           # symmetric (n, n), zero diagonal
    attributes: BSAttributes | None = None

    @property
    def n(self) -> int:
        return len(self.weights)

    def edges(self):
        """Undirected edges as ``(i, j, w)`` with ``i < j`` and ``w > 0``."""
        i, j = np.nonzero(np.triu(self.weights, 1))
        return [(int(a), int(b), float(self.weights[a, b])) for a, b in zip(i, j)]

    @property
    def total_weight(self) -> float:
        return float(np.triu(self.weights, 1).sum())

    def strength(self) -> np.ndarray:
        return self.weights.sum(axis=1)


def from_edges(n: int, edges) -> AffinityGraph:
    w = np.zeros((n, n))
    for i, j, wt in edges:
        if i == j:
            raise InvalidParameterError("self-loops are not allowed")
        if wt < 0:
            raise InvalidParameterError("edge weights must be non-negative")
        w[i, j] = w[j, i] = wt
    return AffinityGraph(w)


def circle_overlap(d, r1, r2):
    """Intersection area of two discs divided by the smaller disc's area."""
    d, r1, r2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (d, r1, r2)))
    small = np.minimum(r1, r2)
    out = np.zeros(d.shape)
    inside = (d <= np.abs(r1 - r2)) & (small > 0)
    out[inside] = 1.0
    part = (d < r1 + r2) & ~inside & (small > 0)
    if part.any():
        dd, a, b = d[part], r1[part], r2[part]
        c1 = np.clip((dd**2 + a**2 - b**2) / (2 * dd * a), -1, 1)
        c2 = np.clip((dd**2 + b**2 - a**2) / (2 * dd * b), -1, 1)
        k = (-dd + a + b) * (dd + a - b) * (dd - a + b) * (dd + a + b)
        area = a**2 * np.arccos(c1) + b**2 * np.arccos(c2) - 0.5 * np.sqrt(np.maximum(k, 0))
        out[part] = area / (np.pi * np.minimum(a, b) ** 2)
    return np.clip(out, 0.0, 1.0)


def affinity_components(attrs: BSAttributes, d0: float = 1.0) -> dict:
    """Each pairwise factor as an (n, n) matrix in [0, 1]."""
    pos = np.asarray(attrs.position, dtype=float)
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
    with np.errstate(invalid="ignore"):
        prox = np.where(np.isfinite(dist), np.exp(-dist / d0), 0.0)
    cap = np.asarray(attrs.backhaul, dtype=float)
    cmax = cap.max()
    back = np.minimum(cap[:, None], cap[None, :]) / cmax if cmax > 0 else np.zeros_like(dist)
    r = np.asarray(attrs.radius, dtype=float)
    over = circle_overlap(dist, r[:, None], r[None, :])
    h = np.asarray(attrs.histogram, dtype=float)
    norm = np.linalg.norm(h, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    traffic = (h / safe[:, None]) @ (h / safe[:, None]).T
    traffic[(norm == 0)[:, None] | (norm == 0)[None, :]] = 0.0
    return {"proximity": prox, "backhaul": back, "overlap": over,
            "traffic": np.clip(traffic, 0.0, 1.0)}


def build_affinity(attrs: BSAttributes, mixing=(0.25, 0.25, 0.25, 0.25), d0: float = 1.0,
                   floor: float = 1e-6) -> AffinityGraph:
    """Mix the four factors linearly; weights below ``floor`` are pruned."""
    if attrs.n < 2:
        raise InvalidParameterError("an affinity graph needs at least 2 nodes")
    mixing = np.asarray(mixing, dtype=float)
    if mixing.shape != (4,) or np.any(mixing < 0):
        raise InvalidParameterError("mixing must be 4 non-negative weights")
    comp = affinity_components(attrs, d0)
    w = sum(m * comp[k] for m, k in zip(mixing, COMPONENTS))
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    w[w < floor] = 0.0
    return AffinityGraph(w, attrs)


def planted_attributes(n_groups: int, per_group: int, rng: np.random.Generator,
                       catalog: int = 30, spread: float = 0.3, separation: float = 3.0) -> tuple:
    """BS attributes with ``n_groups`` geographic/traffic groups; returns ``(attrs, labels)``."""
    n = n_groups * per_group
    labels = np.repeat(np.arange(n_groups), per_group)
    angle = 2 * np.pi * np.arange(n_groups) / n_groups
    centres = separation * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    pos = centres[labels] + rng.normal(0, spread, (n, 2))
    backhaul = rng.uniform(0.8, 1.2, n) * (1.0 + labels)
    radius = rng.uniform(0.4, 0.6, n)
    ranks = np.stack([rng.permutation(catalog) for _ in range(n_groups)])
    base = 1.0 / (ranks + 1.0) ** 0.8
    hist = base[labels] * rng.uniform(0.9, 1.1, (n, catalog))
    return BSAttributes(pos, backhaul, radius, hist), labels
