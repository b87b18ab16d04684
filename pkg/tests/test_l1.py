import numpy as np
import pytest

from measurefw import (
    DiscretePoints,
    Problem,
    SolverConfig,
    build_grid,
    certify,
    concavity_check,
    fcfw_solve,
    influence,
    l1_solve_on_grid,
    objective_exact,
    two_point_optimum,
    vertex_argmin_check,
)
from helpers import CURVE, rand_discrete_eta, rand_measure

FAST = dict(inner_restarts=4, adam_steps=40, correction_steps=40)


def rand_l1_problem(rng, n=None, budget=None):
    eta = rand_discrete_eta(rng, n=n)
    b = float(rng.uniform(0.3, 3)) if budget is None else budget
    return Problem(eta, budget=b, norm="l1")


def test_build_grid_examples():
    g = build_grid([[0, 0], [1, 0], [0.5, 0.8]])
    assert np.allclose(g.xs, [0, 0.5, 1])
    assert np.allclose(g.ys, [0, 0.8])
    assert g.n_vertices == 6
    assert g.n_rects == 2

    square = build_grid([[0, 0], [1, 0], [0, 1], [1, 1]])
    assert square.n_vertices == 4
    assert square.n_rects == 1
    assert {tuple(v) for v in square.vertices} == {(0, 0), (0, 1), (1, 0), (1, 1)}

    collinear = build_grid([[float(i), 0.0] for i in range(5)])
    assert collinear.n_vertices == 5
    assert collinear.n_rects == 0

    with pytest.raises(ValueError, match="empty point set"):
        build_grid(np.zeros((0, 2)))


def test_grid_cardinality_is_product():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pts = rng.integers(0, 4, size=(int(rng.integers(1, 9)), 2)).astype(float)
        pts = np.unique(pts, axis=0)
        g = build_grid(pts)
        nx = len(np.unique(pts[:, 0]))
        ny = len(np.unique(pts[:, 1]))
        assert g.n_vertices == nx * ny
        assert g.n_rects == (nx - 1) * (ny - 1)


def test_rect_indexing():
    g = build_grid([[0, 0], [1, 0], [0.5, 0.8], [1, 2]])
    seen = set()
    for i in range(g.n_rects):
        r = g.rect(i)
        seen.add((float(r.lo[0]), float(r.lo[1]), float(r.hi[0]), float(r.hi[1])))
    assert len(seen) == g.n_rects
    with pytest.raises(IndexError):
        g.rect(g.n_rects)


def test_concavity_check_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(15):
        prob = rand_l1_problem(rng)
        grid = build_grid(prob.eta.points)
        if grid.n_rects == 0:
            continue
        mu = rand_measure(rng, budget=prob.budget)
        idx = int(rng.integers(grid.n_rects))
        if grid.rect(idx).area <= 0:
            continue
        assert concavity_check(mu, prob, grid, idx, trials=1000, rng=rng)


def test_concavity_equality_at_identical_endpoints():
    rng = np.random.default_rng(2)
    prob = rand_l1_problem(rng, n=4)
    grid = build_grid(prob.eta.points)
    mu = rand_measure(rng, budget=prob.budget)
    rect = grid.rect(0)
    x = rect.lo + 0.5 * (rect.hi - rect.lo)
    h = influence(mu, np.vstack([x, x]), prob.eta, CURVE, "l1")
    assert abs(h[0] - h[1]) <= 1e-12


def test_vertex_argmin_check_random_and_sweep():
    rng = np.random.default_rng(3)
    for _ in range(10):
        prob = rand_l1_problem(rng)
        grid = build_grid(prob.eta.points)
        if grid.n_rects == 0:
            continue
        mu = rand_measure(rng, budget=prob.budget)
        idx = int(rng.integers(grid.n_rects))
        assert vertex_argmin_check(mu, prob, grid, idx, sample_count=2000, rng=rng)
    # exhaustive sweep over all rectangles of one 5-point instance
    prob = rand_l1_problem(rng, n=5)
    grid = build_grid(prob.eta.points)
    mu = rand_measure(rng, budget=prob.budget)
    for idx in range(grid.n_rects):
        assert vertex_argmin_check(mu, prob, grid, idx, sample_count=500, rng=rng)


def test_checks_require_l1_discrete():
    rng = np.random.default_rng(4)
    eta = rand_discrete_eta(rng, n=4)
    prob_l2 = Problem(eta, budget=1.0, norm="l2")
    grid = build_grid(eta.points)
    mu = rand_measure(rng, budget=1.0)
    with pytest.raises(ValueError):
        concavity_check(mu, prob_l2, grid, 0, 10, rng)
    with pytest.raises(ValueError):
        vertex_argmin_check(mu, prob_l2, grid, 0, 10, rng)


def test_l1_solve_matches_two_point_optimum_on_axis():
    # axis-aligned pair: L1 and L2 distances coincide along the segment
    eta = DiscretePoints([[0.0, 0.0], [1.0, 0.0]], [0.6, 0.4])
    prob = Problem(eta, budget=1.0, norm="l1")
    cfg = SolverConfig(max_outer_iters=60, **FAST, seed=0)
    mu, trace = l1_solve_on_grid(prob, cfg)
    mu_star = two_point_optimum([0, 0], [1, 0], 0.6, 0.4, 1.0)
    j_grid = objective_exact(mu, eta, CURVE, "l1")
    j_star = objective_exact(mu_star, eta, CURVE, "l1")
    assert j_grid <= j_star + 1e-8
    heavy = mu.points[np.argmax(mu.weights)]
    assert np.allclose(heavy, [0, 0])


def test_l1_solve_support_and_certificate():
    rng = np.random.default_rng(5)
    cfg = SolverConfig(max_outer_iters=80, **FAST, seed=1)
    for _ in range(3):
        prob = rand_l1_problem(rng, n=4, budget=1.0)
        grid = build_grid(prob.eta.points)
        mu, trace = l1_solve_on_grid(prob, cfg)
        vset = {tuple(v) for v in grid.vertices}
        assert all(tuple(p) in vset for p in mu.points)
        min_h, _ = certify(mu, prob, 80, cfg)
        assert min_h >= -1e-4
        # support-zero property under L1
        heavy = mu.points[mu.weights > 1e-6]
        h_atoms = influence(mu, heavy, prob.eta, CURVE, "l1")
        assert np.max(np.abs(h_atoms)) <= 1e-4


def test_l1_solve_beats_free_support_fcfw():
    rng = np.random.default_rng(6)
    prob = rand_l1_problem(rng, n=3, budget=1.0)
    cfg = SolverConfig(max_outer_iters=60, **FAST, seed=2)
    mu_grid, _ = l1_solve_on_grid(prob, cfg)
    mu_free, _ = fcfw_solve(prob, cfg)
    j_grid = objective_exact(mu_grid, prob.eta, CURVE, "l1")
    j_free = objective_exact(mu_free, prob.eta, CURVE, "l1")
    assert j_grid <= j_free + 1e-6


def test_l1_solve_preconditions():
    from measurefw import Rect, UniformRect

    cfg = SolverConfig(**FAST)
    eta = DiscretePoints([[0, 0], [1, 1]], [0.5, 0.5])
    with pytest.raises(ValueError, match="L1-norm"):
        l1_solve_on_grid(Problem(eta, budget=1.0, norm="l2"), cfg)
    cont = Problem(UniformRect(Rect([0, 0], [1, 1])), budget=1.0, norm="l1")
    with pytest.raises(ValueError, match="discrete"):
        l1_solve_on_grid(cont, cfg)


def test_norm_ordering_and_cross_norm_optima():
    rng = np.random.default_rng(7)
    eta = rand_discrete_eta(rng, n=3)
    b = 1.0
    cfg = SolverConfig(max_outer_iters=50, **FAST, seed=3)
    prob_l1 = Problem(eta, budget=b, norm="l1")
    prob_l2 = Problem(eta, budget=b, norm="l2")
    mu_l1, _ = l1_solve_on_grid(prob_l1, cfg)
    mu_l2, _ = fcfw_solve(prob_l2, cfg)
    # each optimum wins in its own problem
    assert objective_exact(mu_l2, eta, CURVE, "l2") <= objective_exact(mu_l1, eta, CURVE, "l2") + 1e-9
    # and the norm ordering holds for both measures
    for mu in (mu_l1, mu_l2):
        assert objective_exact(mu, eta, CURVE, "l2") <= objective_exact(mu, eta, CURVE, "l1") + 1e-12
