"""Unit tests for the interior-point solver.

Analytic instances with known optima, randomized KKT-consistent instances
(optimum constructed from complementary primal/dual pairs), certificate
statuses, determinism, and independent recomputation of the reported
residuals.
"""

import numpy as np
import pytest

from drcvar.conic import SdpSolution, SolverSettings, certify, solve_sdp
from drcvar.sdp import SdpProblem, _make_block


def lmi_problem(c, blocks_spec):
    """Assemble an SdpProblem from dense (M0, [Mk]) block descriptions."""
    k_total = len(c)
    blocks = []
    for bi, (m0, mats) in enumerate(blocks_spec):
        size = m0.shape[0]
        const = [(p, q, m0[p, q]) for p in range(size) for q in range(p + 1)
                 if m0[p, q] != 0.0]
        coef = []
        for k, mat in enumerate(mats):
            coef += [(k, p, q, mat[p, q]) for p in range(size)
                     for q in range(p + 1) if mat[p, q] != 0.0]
        blocks.append(_make_block(size, f"block_{bi}", const, coef))
    return SdpProblem(num_vars=k_total, objective=np.asarray(c, dtype=float),
                      blocks=tuple(blocks), var_layout={})


def random_kkt_instance(seed):
    """Instance with a known optimum built from complementary (S*, Z*)."""
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 9)) for _ in range(int(rng.integers(1, 4)))]
    symdim = sum(s * (s + 1) // 2 for s in sizes)
    k_total = int(rng.integers(2, min(11, max(3, symdim))))
    mats = []
    for s in sizes:
        ms = []
        for _ in range(k_total):
            base = rng.standard_normal((s, s))
            ms.append((base + base.T) / 2.0)
        mats.append(ms)
    x_star = rng.standard_normal(k_total)
    blocks_spec = []
    z_star = []
    for j, s in enumerate(sizes):
        qm, _ = np.linalg.qr(rng.standard_normal((s, s)))
        rank = int(rng.integers(0, s + 1))
        diag_s = np.concatenate([rng.uniform(0.5, 2.0, rank),
                                 np.zeros(s - rank)])
        diag_z = np.concatenate([np.zeros(rank),
                                 rng.uniform(0.5, 2.0, s - rank)])
        s_mat = qm @ np.diag(diag_s) @ qm.T
        z_mat = qm @ np.diag(diag_z) @ qm.T
        m0 = s_mat - sum(x_star[k] * mats[j][k] for k in range(k_total))
        blocks_spec.append((m0, mats[j]))
        z_star.append(z_mat)
    c = np.array([sum(np.sum(mats[j][k] * z_star[j]) for j in range(len(sizes)))
                  for k in range(k_total)])
    return lmi_problem(c, blocks_spec), float(c @ x_star)


class TestAnalyticInstances:
    def test_min_x_offdiag_ones(self):
        # minimize x s.t. [[x,1],[1,x]] PSD -> x* = 1
        m0 = np.array([[0.0, 1.0], [1.0, 0.0]])
        prob = lmi_problem([1.0], [(m0, [np.eye(2)])])
        sol = solve_sdp(prob)
        assert sol.status == "optimal"
        assert sol.x[0] == pytest.approx(1.0, abs=1e-6)

    def test_diagonal_lp(self):
        # minimize x+y s.t. diag(x-1, y-2) PSD -> 3
        b1 = (np.array([[-1.0]]), [np.array([[1.0]]), np.array([[0.0]])])
        b2 = (np.array([[-2.0]]), [np.array([[0.0]]), np.array([[1.0]])])
        prob = lmi_problem([1.0, 1.0], [b1, b2])
        sol = solve_sdp(prob)
        assert sol.status == "optimal"
        assert sol.objective_value == pytest.approx(3.0, abs=1e-6)
        assert np.allclose(sol.x, [1.0, 2.0], atol=1e-6)

    def test_infeasible(self):
        # constant block indefinite in a direction no variable can fix
        m0 = np.diag([-1.0, 0.0])
        m1 = np.diag([0.0, 1.0])
        prob = lmi_problem([1.0], [(m0, [m1])])
        sol = solve_sdp(prob)
        assert sol.status == "infeasible"

    def test_unbounded(self):
        # minimize -x s.t. [x] PSD: objective unbounded below
        prob = lmi_problem([-1.0], [(np.array([[0.0]]), [np.array([[1.0]])])])
        sol = solve_sdp(prob)
        assert sol.status == "unbounded"


class TestRandomKkt:
    @pytest.mark.parametrize("seed", range(25))
    def test_reaches_known_optimum(self, seed):
        prob, opt = random_kkt_instance(seed)
        sol = solve_sdp(prob)
        assert sol.status == "optimal"
        assert abs(sol.objective_value - opt) <= 1e-6 * (1.0 + abs(opt))


class TestReporting:
    def test_residuals_recomputed_independently(self):
        prob, _ = random_kkt_instance(123)
        sol = solve_sdp(prob)
        gap, pinf, dinf = certify(prob, sol.x, sol.slack_blocks,
                                  sol.dual_blocks)
        assert abs(gap - sol.duality_gap) <= 1e-10 * (1.0 + abs(gap))
        assert abs(pinf - sol.primal_infeasibility) <= 1e-10
        assert abs(dinf - sol.dual_infeasibility) <= 1e-10

    def test_gap_matches_objective_difference(self):
        prob, _ = random_kkt_instance(321)
        sol = solve_sdp(prob)
        dobj = -sum(np.sum(blk.dense_constant() * z)
                    for blk, z in zip(prob.blocks, sol.dual_blocks))
        assert sol.objective_value - dobj == pytest.approx(sol.duality_gap,
                                                           abs=1e-7)

    def test_deterministic(self):
        prob, _ = random_kkt_instance(7)
        sol1 = solve_sdp(prob)
        sol2 = solve_sdp(prob)
        assert sol1.iterations == sol2.iterations
        assert np.array_equal(sol1.x, sol2.x)
        for a, b in zip(sol1.dual_blocks, sol2.dual_blocks):
            assert np.array_equal(a, b)

    def test_max_iter_status(self):
        prob, _ = random_kkt_instance(11)
        sol = solve_sdp(prob, SolverSettings(max_iter=2))
        assert sol.status == "max_iter"
        assert isinstance(sol, SdpSolution)


class TestSettings:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverSettings(tol_gap=0.0)
        with pytest.raises(ValueError):
            SolverSettings(step_fraction=1.0)
        with pytest.raises(ValueError):
            SolverSettings(max_iter=0)

    def test_loose_tolerances_still_solve(self):
        prob, opt = random_kkt_instance(5)
        sol = solve_sdp(prob, SolverSettings(tol_gap=1e-6, tol_feas=1e-6,
                                             max_iter=100))
        assert sol.status == "optimal"
        assert abs(sol.objective_value - opt) <= 1e-4 * (1.0 + abs(opt))
