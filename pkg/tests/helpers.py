"""Shared random-instance builders and independent oracles for the test suite.

The oracles deliberately avoid the library's segment-sum code path: survival
integrals are recomputed with adaptive quadrature over a brute-force ball
mass, and derivatives are checked against finite differences.
"""

import numpy as np
from scipy.integrate import quad

from measurefw import DeathCurve, DiscreteMeasure, DiscretePoints, beta, beta_prime
from measurefw.geometry import pairwise_distance

CURVE = DeathCurve()


def rand_discrete_eta(rng, n=None, span=2.0):
    n = int(rng.integers(2, 7)) if n is None else n
    pts = rng.uniform(-span / 2, span / 2, size=(n, 2))
    probs = rng.random(n) + 0.05
    return DiscretePoints(pts, probs / probs.sum())


def rand_measure(rng, m=None, budget=None, span=2.0):
    m = int(rng.integers(1, 8)) if m is None else m
    budget = float(rng.uniform(0.2, 4.0)) if budget is None else budget
    pts = rng.uniform(-span / 2, span / 2, size=(m, 2))
    w = rng.random(m) + 1e-3
    return DiscreteMeasure(pts, w * (budget / w.sum()), budget)


def quad_survival(mu, y, curve=CURVE, norm="l2"):
    """Quadrature oracle for the survival integral (no segment bookkeeping)."""
    d = pairwise_distance(np.reshape(np.asarray(y, float), (1, 2)), mu.points, norm)[0]

    def integrand(t):
        return np.exp(-mu.weights[d <= t].sum()) * beta_prime(curve, t)

    total, lo = 0.0, 0.0
    for cut in np.unique(d):
        if cut > lo:
            total += quad(integrand, lo, cut, limit=200)[0]
            lo = cut
    total += np.exp(-mu.weights.sum()) * (1.0 - beta(curve, lo))
    return total


def quad_objective(mu, eta, curve=CURVE, norm="l2"):
    return float(sum(p * quad_survival(mu, y, curve, norm) for y, p in zip(eta.points, eta.probs)))


def mix_toward_point(mu, x, t):
    """The measure (1 - t) mu + t b delta_x."""
    return DiscreteMeasure(
        np.vstack([mu.points, np.reshape(np.asarray(x, float), (1, 2))]),
        np.concatenate([mu.weights * (1.0 - t), [t * mu.budget]]),
        mu.budget,
    )


def mix_measures(mu1, mu2, alpha):
    """The measure (1 - alpha) mu1 + alpha mu2 (equal budgets)."""
    return DiscreteMeasure(
        np.vstack([mu1.points, mu2.points]),
        np.concatenate([(1.0 - alpha) * mu1.weights, alpha * mu2.weights]),
        mu1.budget,
    )
