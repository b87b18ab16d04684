"""Finite discrete measures with a fixed total mass (the volunteer budget).

A `DiscreteMeasure` is the solver's decision variable: weighted planar atoms
whose nonnegative weights sum to the budget `b`.  Measures are immutable
after construction and canonicalized so that no two atoms sit closer than
the merge tolerance.
"""

from __future__ import annotations

import numpy as np

from .geometry import ConvexPolygon, as_points, pairwise_distance, project_many

__all__ = [
    "MERGE_EPS",
    "DiscreteMeasure",
    "ball_mass",
    "tv_distance",
    "restrict_to_domain",
    "merge_and_prune",
]

#: Atoms closer than this (in length units) are merged at construction.
MERGE_EPS = 1e-9

_BUDGET_RTOL = 1e-9


def _cluster_points(points: np.ndarray, weights: np.ndarray, eps: float):
    """Single-linkage merge of atoms within `eps`; weighted-centroid locations."""
    from scipy.spatial import cKDTree

    pairs = cKDTree(points).query_pairs(eps, output_type="ndarray")
    if len(pairs) == 0:
        return points, weights
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(points))])
    labels, inverse = np.unique(roots, return_inverse=True)
    k = len(labels)
    wsum = np.zeros(k)
    np.add.at(wsum, inverse, weights)
    cx = np.zeros(k)
    cy = np.zeros(k)
    np.add.at(cx, inverse, weights * points[:, 0])
    np.add.at(cy, inverse, weights * points[:, 1])
    # zero-weight clusters fall back to a plain average of member locations
    cnt = np.zeros(k)
    np.add.at(cnt, inverse, 1.0)
    mx = np.zeros(k)
    my = np.zeros(k)
    np.add.at(mx, inverse, points[:, 0])
    np.add.at(my, inverse, points[:, 1])
    safe = wsum > 0
    outx = np.where(safe, cx / np.where(safe, wsum, 1.0), mx / cnt)
    outy = np.where(safe, cy / np.where(safe, wsum, 1.0), my / cnt)
    return np.column_stack([outx, outy]), wsum


class DiscreteMeasure:
    """Immutable finite atomic measure: locations (m, 2), weights (m,), budget."""

    __slots__ = ("points", "weights", "budget")

    def __init__(self, points, weights, budget=None, *, merge_eps=MERGE_EPS):
        pts = as_points(points)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if len(pts) != len(w):
            raise ValueError("points and weights must have the same length")
        if len(pts) == 0:
            raise ValueError("empty measure")
        if not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be finite")
        total = float(w.sum())
        if budget is None:
            budget = total
        budget = float(budget)
        if not np.isfinite(budget) or budget < 0.0:
            raise ValueError("budget must be finite and nonnegative")
        scale = max(1.0, budget)
        if np.any(w < -_BUDGET_RTOL * scale):
            raise ValueError("atom weights must be nonnegative")
        w = np.maximum(w, 0.0)
        if abs(total - budget) > _BUDGET_RTOL * scale:
            raise ValueError(
                f"weights sum to {total}, which differs from budget {budget} "
                f"beyond the {_BUDGET_RTOL:g} relative tolerance"
            )
        if merge_eps > 0 and len(pts) > 1:
            pts, w = _cluster_points(pts, w, merge_eps)
        self.points = np.ascontiguousarray(pts)
        self.weights = np.ascontiguousarray(w)
        self.budget = budget
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    def to_json(self) -> dict:
        """Serialize as {"budget": b, "atoms": [{"x", "y", "w"}, ...]}."""
        return {
            "budget": self.budget,
            "atoms": [
                {"x": float(x), "y": float(y), "w": float(w)}
                for (x, y), w in zip(self.points, self.weights)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiscreteMeasure":
        try:
            atoms = obj["atoms"]
            budget = float(obj["budget"])
            pts = [[float(a["x"]), float(a["y"])] for a in atoms]
            w = [float(a["w"]) for a in atoms]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed measure document: {exc}") from exc
        return cls(pts, w, budget)

    def __repr__(self):
        return f"DiscreteMeasure({self.n_atoms} atoms, budget={self.budget:.6g})"


def ball_mass(mu: DiscreteMeasure, center, radius: float, norm="l2") -> float:
    """Mass of the closed ball of the given radius around `center`."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    d = pairwise_distance(np.reshape(np.asarray(center, dtype=float), (1, 2)), mu.points, norm)[0]
    return float(mu.weights[d <= radius].sum())


def tv_distance(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> float:
    """Total variation distance between two measures of equal budget.

    For discrete measures with a common budget this is half the sum of
    absolute weight differences over the union of atom locations.
    """
    scale = max(1.0, abs(mu1.budget))
    if abs(mu1.budget - mu2.budget) > _BUDGET_RTOL * scale:
        raise ValueError("budget mismatch")
    allpts = np.vstack([mu1.points, mu2.points])
    _, inverse = np.unique(allpts, axis=0, return_inverse=True)
    diff = np.zeros(inverse.max() + 1)
    np.add.at(diff, inverse[: mu1.n_atoms], mu1.weights)
    np.add.at(diff, inverse[mu1.n_atoms :], -mu2.weights)
    return 0.5 * float(np.abs(diff).sum())


def restrict_to_domain(mu: DiscreteMeasure, domain: ConvexPolygon) -> DiscreteMeasure:
    """Replace every atom outside the domain by its Euclidean projection.

    Weights are untouched, so the budget is preserved and the support of the
    result lies inside the domain.
    """
    return DiscreteMeasure(project_many(domain, mu.points), mu.weights, mu.budget)


def merge_and_prune(mu: DiscreteMeasure, merge_eps=MERGE_EPS, weight_tol=None) -> DiscreteMeasure:
    """Merge atoms within `merge_eps` and drop atoms lighter than `weight_tol`.

    Merged atoms sit at the weight-weighted centroid of their cluster; the
    mass of pruned atoms is redistributed proportionally over the survivors,
    so the budget is preserved exactly.
    """
    if weight_tol is None:
        weight_tol = 1e-12 * mu.budget
    if merge_eps < 0 or weight_tol < 0:
        raise ValueError("tolerances must be nonnegative")
    pts, w = mu.points.copy(), mu.weights.copy()
    if merge_eps > 0 and len(pts) > 1:
        pts, w = _cluster_points(pts, w, merge_eps)
    keep = w >= weight_tol
    if not np.any(keep):
        raise ValueError("empty measure")
    pts, w = pts[keep], w[keep]
    total = w.sum()
    if total > 0:
        w = w * (mu.budget / total)
    return DiscreteMeasure(pts, w, mu.budget, merge_eps=0.0)
