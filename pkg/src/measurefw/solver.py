"""Optimization engines: influence minimization, corrective steps, outer loops.

The outer loops grow a finite support one atom per iteration.  The
atom-placement subproblem (minimizing the influence function) is attacked
with multi-restart projected Adam plus a candidate pool that always contains
the current support atoms; since the weighted influence over the support
averages to zero, some atom has nonpositive influence, so the returned value
is never positive.  That is exactly the relaxation under which the
fully-corrective loop retains its sufficient-decrease and O(1/sqrt(k))
stationarity guarantees without global subproblem optimality.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import L1, L2, ConvexPolygon, pairwise_distance, project_many, sample_uniform
from .measure import MERGE_EPS, DiscreteMeasure
from .response import InfluenceKernel, SampleBatch, demand_of, smoothness_constant
from .scenario import DiscretePoints, Problem, beta

__all__ = [
    "SolverConfig",
    "TraceRow",
    "SolveTrace",
    "simplex_project",
    "minimize_influence",
    "fully_corrective",
    "kkt_residual",
    "fcfw_solve",
    "dfw_solve",
    "two_point_optimum",
    "certify",
]


@dataclass
class SolverConfig:
    """Tunables for the Frank-Wolfe loops and their subproblem solvers.

    `adam_lr` is expressed in domain-diameter units and rescaled by the hull
    diameter at run time; `correction_lr` is relative to the simplex
    curvature bound b^2 (an effective step of correction_lr / b^2).
    """

    max_outer_iters: int = 200
    inner_restarts: int = 16
    adam_steps: int = 300
    adam_lr: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    fw_tolerance: float = 0.0
    correction_steps: int = 100
    correction_lr: float = 1.0
    mc_batch_size: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("max_outer_iters", "inner_restarts", "adam_steps",
                     "correction_steps", "mc_batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("adam_lr", "adam_beta1", "adam_beta2", "adam_eps", "correction_lr"):
            if float(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.fw_tolerance < 0:
            raise ValueError("fw_tolerance must be nonnegative")


@dataclass
class TraceRow:
    k: int
    j_value: float
    h_star: float
    x_star: np.ndarray
    atoms: int
    seconds: float


class SolveTrace:
    """Per-iteration solve record backing convergence plots and acceptance tests."""

    HEADER = ("k", "J", "h_star", "x_star_x", "x_star_y", "atoms", "seconds")

    def __init__(self):
        self.rows: list[TraceRow] = []

    def append(self, k, j_value, h_star, x_star, atoms, seconds):
        self.rows.append(TraceRow(int(k), float(j_value), float(h_star),
                                  np.asarray(x_star, dtype=float), int(atoms), float(seconds)))

    def __len__(self):
        return len(self.rows)

    def j_values(self) -> np.ndarray:
        return np.array([r.j_value for r in self.rows])

    def h_values(self) -> np.ndarray:
        return np.array([r.h_star for r in self.rows])

    def write_csv(self, target) -> None:
        if isinstance(target, (str, Path)):
            with open(target, "w", newline="") as fh:
                self.write_csv(fh)
            return
        w = csv.writer(target)
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([r.k, repr(r.j_value), repr(r.h_star),
                        repr(float(r.x_star[0])), repr(float(r.x_star[1])),
                        r.atoms, repr(r.seconds)])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, source) -> "SolveTrace":
        if isinstance(source, (str, Path)):
            with open(source, newline="") as fh:
                return cls.read_csv(fh)
        trace = cls()
        reader = csv.reader(source)
        header = next(reader)
        if tuple(header) != cls.HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for row in reader:
            trace.append(int(row[0]), float(row[1]), float(row[2]),
                         [float(row[3]), float(row[4])], int(row[5]), float(row[6]))
        return trace


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, v.size + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


class _SimplexObjective:
    """J restricted to measures sum_i p_i b delta_{x_i} on a fixed support.

    Distances and their sort order are precomputed once, so each evaluation
    of the value or gradient is a cumulative sum plus a few elementwise
    passes over an (n_demand, n_support) array.
    """

    def __init__(self, support, demand_pts, demand_probs, curve, norm, budget):
        from .response import _row_searchsorted

        self.support = np.asarray(support, dtype=float)
        self.probs = np.asarray(demand_probs, dtype=float)
        self.b = float(budget)
        dist = pairwise_distance(demand_pts, self.support, norm)  # (n, m)
        self.order = np.argsort(dist, axis=1, kind="stable")
        self.d = np.take_along_axis(dist, self.order, axis=1)
        bd = beta(curve, self.d)
        n, m = dist.shape
        self.dbeta = np.concatenate([bd[:, 1:], np.ones((n, 1))], axis=1) - bd
        self.head = float(self.probs @ (bd[:, 0] - beta(curve, 0.0)))
        # sorted position of each atom's own radius, ties counted (closed ball)
        self.k_atom = _row_searchsorted(self.d, dist)

    def _decay(self, p):
        w = (np.maximum(p, 0.0) * self.b)[self.order]
        return np.exp(-np.cumsum(w, axis=1))

    def value(self, p) -> float:
        e = self._decay(p)
        return self.head + float(self.probs @ np.sum(e * self.dbeta, axis=1))

    def value_and_grad(self, p):
        e = self._decay(p)
        seg = e * self.dbeta
        j = self.head + float(self.probs @ seg.sum(axis=1))
        # suffix sums give the tail integral from each atom's own radius
        suffix = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
        t_atoms = np.take_along_axis(suffix, self.k_atom - 1, axis=1)
        grad = -self.b * (self.probs @ t_atoms)
        return j, grad


def _pgd_simplex(obj: _SimplexObjective, p0, steps: int, step0: float):
    """Monotone projected gradient descent on the simplex with backtracking."""
    p = simplex_project(p0)
    j = obj.value(p)
    step = step0
    for _ in range(steps):
        _, g = obj.value_and_grad(p)
        accepted = False
        s = step
        for _ in range(50):
            q = simplex_project(p - s * g)
            jq = obj.value(q)
            if jq < j:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
        p, j = q, jq
        step = min(s * 1.5, step0 * 32.0)
    return p, j


def _corrective_step0(config: SolverConfig, budget: float) -> float:
    # the simplex Hessian of J is bounded by b^2, so 1/b^2 is a safe base step
    return config.correction_lr / max(budget * budget, 1e-30)


def fully_corrective(support, p_init, problem: Problem, eta_or_batch, config: SolverConfig):
    """Reoptimize simplex weights over a fixed support; never increases J."""
    support = np.asarray(support, dtype=float).reshape(-1, 2)
    dpts, dprobs = demand_of(eta_or_batch if eta_or_batch is not None else problem.eta)
    obj = _SimplexObjective(support, dpts, dprobs, problem.curve, problem.norm, problem.budget)
    p, _ = _pgd_simplex(obj, p_init, config.correction_steps, _corrective_step0(config, problem.budget))
    return p


def kkt_residual(support, p, problem: Problem, eta_or_batch=None, active_tol=1e-8) -> float:
    """Stationarity residual of weights on the simplex.

    At an optimum the gradient is constant over the active coordinates; the
    residual is the largest deviation from that common value.
    """
    from .response import correction_gradient

    g = correction_gradient(support, p, problem, eta_or_batch)
    active = np.asarray(p) > active_tol
    if not np.any(active):
        return float("nan")
    ga = g[active]
    return float(np.max(np.abs(ga - ga.mean())))


def _random_in_domain(domain: ConvexPolygon, rng, n: int) -> np.ndarray:
    """Uniform draws from a domain of any dimension (polygon, segment, point)."""
    v = domain.vertices
    if domain.area > 0:
        return sample_uniform(domain, rng, size=n)
    if len(v) == 2:
        t = rng.random(n)
        return v[0] + t[:, None] * (v[1] - v[0])
    return np.broadcast_to(v[0], (n, 2)).copy()


def _adam_descend(kernel: InfluenceKernel, domain: ConvexPolygon, starts: np.ndarray,
                  config: SolverConfig) -> np.ndarray:
    """Projected Adam on the influence surface, one lane per start point."""
    lr = config.adam_lr * max(domain.diameter, 1e-12)
    x = starts.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2 = config.adam_beta1, config.adam_beta2
    for t in range(1, config.adam_steps + 1):
        g = kernel.influence_gradient(x, on_singular="mask")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mh = m / (1.0 - b1**t)
        vh = v / (1.0 - b2**t)
        x = x - lr * mh / (np.sqrt(vh) + config.adam_eps)
        x = project_many(domain, x)
    return x


def _l1_axis_candidates(points: np.ndarray, cap: int = 64) -> np.ndarray:
    """Vertex grid spanned by coordinate order statistics of demand points.

    Under the L1 norm the influence minimizers lie on this grid for discrete
    demand; axes with more than `cap` distinct coordinates are subsampled
    evenly (a heuristic for sample-induced grids from large batches).
    """
    xs = np.unique(points[:, 0])
    ys = np.unique(points[:, 1])
    if len(xs) > cap:
        xs = xs[np.unique(np.linspace(0, len(xs) - 1, cap).astype(int))]
    if len(ys) > cap:
        ys = ys[np.unique(np.linspace(0, len(ys) - 1, cap).astype(int))]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _minimize_influence_kernel(kernel: InfluenceKernel, problem: Problem,
                               config: SolverConfig, rng, extra_candidates=None):
    """Shared subproblem core; returns (x_star, h_star) with h_star <= 0."""
    pools = [kernel.atoms]
    if isinstance(problem.eta, DiscretePoints):
        pools.append(problem.eta.points)
    if extra_candidates is not None and len(extra_candidates):
        pools.append(extra_candidates)
    if problem.norm == L2 and problem.domain.diameter > 0:
        starts = _random_in_domain(problem.domain, rng, config.inner_restarts)
        pools.append(_adam_descend(kernel, problem.domain, starts, config))
    elif problem.norm == L1 and extra_candidates is None:
        pools.append(_l1_axis_candidates(kernel.demand))
    cands = np.vstack(pools)
    h = kernel.influence(cands)
    i = int(np.argmin(h))
    # the zero-mean identity over the support guarantees a nonpositive
    # candidate; clamp float dust so downstream step sizes stay valid
    return cands[i].copy(), min(float(h[i]), 0.0)


def minimize_influence(mu: DiscreteMeasure, problem: Problem, config: SolverConfig,
                       rng, eta_or_batch=None):
    """Approximately minimize the influence function of mu over the domain.

    Candidates are multi-restart projected-Adam finishers plus the support
    atoms and (for discrete eta) the demand points, so the returned value is
    nonpositive even when Adam stalls.
    """
    demand = eta_or_batch if eta_or_batch is not None else problem.eta
    dpts, dprobs = demand_of(demand)
    kernel = InfluenceKernel(mu.points, mu.weights, dpts, dprobs,
                             problem.curve, problem.norm, budget=problem.budget)
    return _minimize_influence_kernel(kernel, problem, config, rng)


def _resolve_demand(problem: Problem, config: SolverConfig):
    """Exact demand for discrete eta, else a frozen batch (common random numbers)."""
    if isinstance(problem.eta, DiscretePoints):
        return problem.eta
    return SampleBatch.draw(problem.eta, config.mc_batch_size, config.seed)


def fcfw_solve(problem: Problem, config: SolverConfig, rng=None):
    """Fully-corrective Frank-Wolfe over discrete measures.

    Starts from a single atom at a uniform random domain point.  Each
    iteration places one new atom at an approximate influence minimizer,
    then reoptimizes all weights over the collected support.  The corrective
    start is the better of the warm weights and the analytic short step, so
    the sufficient-decrease inequality holds step by step and the recorded
    objective is nonincreasing.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    b = problem.budget
    lip = smoothness_constant(b)
    radius = b  # total-variation diameter of the fixed-budget feasible set
    demand = _resolve_demand(problem, config)
    dpts, dprobs = demand_of(demand)
    extra = _l1_axis_candidates(dpts) if problem.norm == L1 else None

    support = _random_in_domain(problem.domain, rng, 1)
    p = np.ones(1)
    trace = SolveTrace()
    t0 = time.perf_counter()
    for k in range(config.max_outer_iters):
        kernel = InfluenceKernel(support, p * b, dpts, dprobs,
                                 problem.curve, problem.norm, budget=b)
        j_k = kernel.objective()
        x_star, h_star = _minimize_influence_kernel(kernel, problem, config, rng, extra)
        trace.append(k, j_k, h_star, x_star, len(support), time.perf_counter() - t0)
        if abs(h_star) < config.fw_tolerance:
            break
        dist_new = np.hypot(*(support - x_star).T)
        j_near = int(np.argmin(dist_new))
        if dist_new[j_near] <= MERGE_EPS:
            sup2, p2, idx_new = support, p, j_near
        else:
            sup2 = np.vstack([support, x_star])
            p2 = np.append(p, 0.0)
            idx_new = len(p2) - 1
        obj = _SimplexObjective(sup2, dpts, dprobs, problem.curve, problem.norm, b)
        # analytic short step toward the new atom; starting the descent from
        # the better of warm/short-step weights makes the sufficient-decrease
        # bound hold exactly
        t_k = min(max(-b * h_star / (lip * radius * radius), 0.0), 1.0)
        p_mid = (1.0 - t_k) * p2
        p_mid[idx_new] += t_k
        start = p2 if obj.value(p2) <= obj.value(p_mid) else p_mid
        p_new, _ = _pgd_simplex(obj, start, config.correction_steps,
                                _corrective_step0(config, b))
        keep = p_new > 0.0
        support, p = sup2[keep], p_new[keep]
        p = p / p.sum()
    mu = DiscreteMeasure(support, p * b, budget=b)
    return mu, trace


def dfw_solve(problem: Problem, config: SolverConfig, rng=None):
    """Plain Frank-Wolfe averaging recursion with step sizes 2 / (k + 2).

    The atom set grows by one per iteration with multiplicative weight
    rescaling; atoms whose weight decays below 1e-12 b are pruned with
    proportional redistribution.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    b = problem.budget
    demand = _resolve_demand(problem, config)
    dpts, dprobs = demand_of(demand)
    extra = _l1_axis_candidates(dpts) if problem.norm == L1 else None

    support = _random_in_domain(problem.domain, rng, 1)
    weights = np.array([b])
    trace = SolveTrace()
    t0 = time.perf_counter()
    floor = 1e-12 * b
    for k in range(config.max_outer_iters):
        kernel = InfluenceKernel(support, weights, dpts, dprobs,
                                 problem.curve, problem.norm, budget=b)
        j_k = kernel.objective()
        x_star, h_star = _minimize_influence_kernel(kernel, problem, config, rng, extra)
        trace.append(k, j_k, h_star, x_star, len(support), time.perf_counter() - t0)
        if abs(h_star) < config.fw_tolerance:
            break
        eta_k = 2.0 / (k + 2.0)
        weights = weights * (1.0 - eta_k)
        dist_new = np.hypot(*(support - x_star).T)
        j_near = int(np.argmin(dist_new))
        if dist_new[j_near] <= MERGE_EPS:
            weights[j_near] += eta_k * b
        else:
            support = np.vstack([support, x_star])
            weights = np.append(weights, eta_k * b)
        keep = weights >= floor
        support, weights = support[keep], weights[keep]
        weights = weights * (b / weights.sum())
    mu = DiscreteMeasure(support, weights, budget=b)
    return mu, trace


def two_point_optimum(y1, y2, lambda1: float, lambda2: float, budget: float) -> DiscreteMeasure:
    """Analytic optimal measure for two demand points.

    alpha_1 = clamp(b/2 + log(lambda_1/lambda_2)/2, 0, b) and
    alpha_2 = b - alpha_1; zero-weight atoms are dropped.  The weights do
    not depend on the death curve.
    """
    if lambda1 < 0 or lambda2 < 0 or abs(lambda1 + lambda2 - 1.0) > 1e-9:
        raise ValueError("lambda1, lambda2 must be nonnegative and sum to 1")
    if budget <= 0:
        raise ValueError("budget must be positive")
    with np.errstate(divide="ignore"):
        ratio = np.log(lambda1) - np.log(lambda2)  # +-inf at the endpoints
    alpha1 = float(np.clip(0.5 * budget + 0.5 * ratio, 0.0, budget))
    pts = np.vstack([np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)])
    w = np.array([alpha1, budget - alpha1])
    keep = w > 0.0
    return DiscreteMeasure(pts[keep], w[keep], budget=budget)


def certify(mu: DiscreteMeasure, problem: Problem, grid_resolution: int,
            config: SolverConfig, rng=None, eta_or_batch=None):
    """Global influence sweep: lattice over the domain plus Adam refinement.

    Returns (min_h, argmin).  The measure is approximately optimal at
    tolerance tau iff min_h >= -tau.
    """
    if grid_resolution < 1:
        raise ValueError("grid_resolution must be >= 1")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    demand = eta_or_batch
    if demand is None:
        demand = _resolve_demand(problem, config)
    dpts, dprobs = demand_of(demand)
    kernel = InfluenceKernel(mu.points, mu.weights, dpts, dprobs,
                             problem.curve, problem.norm, budget=problem.budget)
    pts = lattice_points(problem.domain, grid_resolution, inside_only=True)
    pools = [pts, mu.points]
    if isinstance(problem.eta, DiscretePoints):
        pools.append(problem.eta.points)
    if problem.norm == L1:
        pools.append(_l1_axis_candidates(dpts))
    cands = np.vstack(pools)
    h = kernel.influence(cands)
    if problem.norm == L2 and problem.domain.diameter > 0:
        n_seed = min(16, len(cands))
        seeds = np.vstack([cands[np.argsort(h)[:n_seed]], mu.points])
        refined = _adam_descend(kernel, problem.domain, seeds, config)
        h_ref = kernel.influence(refined)
        cands = np.vstack([cands, refined])
        h = np.concatenate([h, h_ref])
    i = int(np.argmin(h))
    return float(h[i]), cands[i].copy()


def lattice_points(domain: ConvexPolygon, resolution: int, inside_only: bool = False):
    """Regular resolution x resolution lattice over the domain bounding box."""
    from .geometry import contains_many

    box = domain.bounding_box()
    if resolution == 1:
        axes = (np.array([(box.lo[0] + box.hi[0]) / 2.0]),
                np.array([(box.lo[1] + box.hi[1]) / 2.0]))
    else:
        axes = (np.linspace(box.lo[0], box.hi[0], resolution),
                np.linspace(box.lo[1], box.hi[1], resolution))
    gx, gy = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if inside_only:
        pts = pts[contains_many(domain, pts)]
    return pts
