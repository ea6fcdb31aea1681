"""Block-LMI problem container and assembly of the robust estimation SDP.

A problem is ``minimize c'x`` subject to a list of linear matrix
inequalities, each an affine symmetric-matrix map

    S_j(x) = M0_j + sum_k x_k * Mk_j  required PSD.

Matrices are stored sparsely as packed lower-triangular entries (an entry at
(p, q) with p > q implies its mirror).  The robust CVaR estimation problem
for an empirical distribution with atoms z_i builds one (d+n) feasibility
block, N per-atom blocks of size (1+d+n), and 1x1 nonnegativity blocks for
gamma and each epigraph slack s_i, with decision vector

    x = [vec(A) column-major, b, gamma, tau, s_1..s_N].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import AffineEstimator, EmpiricalDistribution, RiskSpec


@dataclass(frozen=True)
class LmiBlock:
    """One PSD constraint: affine map stored as packed lower-tri entries.

    ``const_*`` arrays hold the constant matrix, ``coef_*`` the per-variable
    coefficients (sorted by variable index).  Row >= col for every entry.
    """

    size: int
    name: str
    const_p: np.ndarray
    const_q: np.ndarray
    const_v: np.ndarray
    coef_var: np.ndarray
    coef_p: np.ndarray
    coef_q: np.ndarray
    coef_v: np.ndarray

    def dense_constant(self) -> np.ndarray:
        m = np.zeros((self.size, self.size))
        m[self.const_p, self.const_q] = self.const_v
        off = self.const_p != self.const_q
        m[self.const_q[off], self.const_p[off]] = self.const_v[off]
        return m

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Dense S(x) = M0 + sum_k x_k Mk for this block."""
        m = self.dense_constant()
        w = self.coef_v * x[self.coef_var]
        np.add.at(m, (self.coef_p, self.coef_q), w)
        off = self.coef_p != self.coef_q
        np.add.at(m, (self.coef_q[off], self.coef_p[off]), w[off])
        return m

    def expanded(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Both-triangle expansion (var, p, q, v), sorted by var.

        Off-diagonal packed entries appear twice (once per triangle) so that
        Mk = sum_a v_a e_{p_a} e_{q_a}' holds exactly; this is the layout the
        Schur kernel and the solver's scatter/gather paths consume.
        """
        off = self.coef_p != self.coef_q
        var = np.concatenate([self.coef_var, self.coef_var[off]])
        p = np.concatenate([self.coef_p, self.coef_q[off]])
        q = np.concatenate([self.coef_q, self.coef_p[off]])
        v = np.concatenate([self.coef_v, self.coef_v[off]])
        order = np.argsort(var, kind="stable")
        return (var[order].astype(np.int32), p[order].astype(np.int32),
                q[order].astype(np.int32), v[order].astype(np.float64))


@dataclass(frozen=True)
class SdpProblem:
    """Block-diagonal LMI program ``minimize c'x, S_j(x) PSD for all j``."""

    num_vars: int
    objective: np.ndarray
    blocks: tuple[LmiBlock, ...]
    var_layout: dict[str, tuple[int, int]]
    meta: dict = field(default_factory=dict)

    def layout_slice(self, name: str) -> slice:
        lo, hi = self.var_layout[name]
        return slice(lo, hi)


def _coalesce(keys: np.ndarray, vals: np.ndarray):
    """Sum values sharing a key row; keys returned in sorted order."""
    if keys.shape[0] == 0:
        return keys, vals
    order = np.lexsort(keys.T[::-1])
    keys = keys[order]
    vals = vals[order]
    new_group = np.any(np.diff(keys, axis=0) != 0, axis=1)
    starts = np.concatenate([[0], np.flatnonzero(new_group) + 1])
    summed = np.add.reduceat(vals, starts)
    return keys[starts], summed


def _make_block(size, name, const_entries, coef_entries) -> LmiBlock:
    if const_entries:
        arr = np.array(const_entries, dtype=float)
        keys, vals = _coalesce(arr[:, :2].astype(np.int64), arr[:, 2])
        cp, cq, cv = keys[:, 0], keys[:, 1], vals
    else:
        cp = cq = np.zeros(0, dtype=np.int64)
        cv = np.zeros(0)
    if coef_entries:
        arr = np.array(coef_entries, dtype=float)
        keys, vals = _coalesce(arr[:, :3].astype(np.int64), arr[:, 3])
        var, p, q, v = keys[:, 0], keys[:, 1], keys[:, 2], vals
    else:
        var = p = q = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    if np.any(cp < cq) or np.any(p < q):
        raise ValueError(f"block {name}: packed entries must have row >= col")
    return LmiBlock(size=size, name=name,
                    const_p=cp, const_q=cq, const_v=cv,
                    coef_var=var, coef_p=p, coef_q=q, coef_v=v)


def default_strict_margin(dist: EmpiricalDistribution) -> float:
    """Margin by which the strict feasibility LMI is relaxed to closed form.

    Interior-point iterates stay strictly feasible, so shifting the strict
    inequality by this amount perturbs the optimum by the same order.
    """
    return 1e-9 * (1.0 + float(np.max(np.abs(dist.atoms))))


def build_drcvar_sdp(dist: EmpiricalDistribution, spec: RiskSpec,
                     strict_margin: float | None = None) -> SdpProblem:
    """Assemble the robust CVaR estimation SDP for an empirical distribution.

    Parameters
    ----------
    dist : EmpiricalDistribution
        Nominal atoms z_i = (x_i, y_i), uniform weights.
    spec : RiskSpec
        Tail level alpha and transport radius (must be positive; radius zero
        belongs to the nominal fitting path).
    strict_margin : float, optional
        Relaxation of the strict feasibility LMI; defaults to
        :func:`default_strict_margin`.
    """
    if spec.radius <= 0.0:
        raise ValueError(
            "the SDP reformulation requires radius > 0; use the nominal "
            "fitting path for radius = 0"
        )
    if strict_margin is None:
        strict_margin = default_strict_margin(dist)
    if strict_margin < 0.0:
        raise ValueError("strict_margin must be nonnegative")

    n, m, d = dist.n, dist.m, dist.dim
    atoms = dist.atoms
    big_n = dist.size
    nm = n * m
    k_total = nm + n + 2 + big_n

    def i_a(u, v):  # column-major vec(A)
        return v * n + u

    def i_b(u):
        return nm + u

    i_gamma = nm + n
    i_tau = nm + n + 1

    def i_s(i):
        return nm + n + 2 + i

    c = np.zeros(k_total)
    c[i_tau] = 1.0
    c[i_gamma] = spec.radius**2 / spec.alpha
    c[nm + n + 2 :] = 1.0 / (spec.alpha * big_n)

    blocks = []

    # Feasibility block [[gamma I_d, F'], [F, I_n]] - margin*I, size d+n.
    size = d + n
    const = [(j, j, -strict_margin) for j in range(size)]
    for u in range(n):
        const.append((d + u, u, -1.0))  # constant -I_n part of F
        const.append((d + u, d + u, 1.0))
    coef = [(i_gamma, j, j, 1.0) for j in range(d)]
    for u in range(n):
        for v in range(m):
            coef.append((i_a(u, v), d + u, n + v, 1.0))
    blocks.append(_make_block(size, "feasibility", const, coef))

    # Per-atom epigraph blocks, size 1 + d + n.
    for i in range(big_n):
        z = atoms[i]
        const = [(1 + d + u, 1 + d + u, 1.0) for u in range(n)]
        const += [(1 + d + u, 1 + u, -1.0) for u in range(n)]
        coef = [(i_gamma, 0, 0, float(z @ z)), (i_tau, 0, 0, 1.0),
                (i_s(i), 0, 0, 1.0)]
        coef += [(i_gamma, 1 + j, 0, float(z[j])) for j in range(d)]
        coef += [(i_gamma, 1 + j, 1 + j, 1.0) for j in range(d)]
        coef += [(i_b(u), 1 + d + u, 0, -1.0) for u in range(n)]
        for u in range(n):
            for v in range(m):
                coef.append((i_a(u, v), 1 + d + u, 1 + n + v, 1.0))
        blocks.append(_make_block(1 + d + n, f"atom_{i}", const, coef))

    # Nonnegativity of gamma and the epigraph slacks.
    blocks.append(_make_block(1, "gamma_nonneg", [], [(i_gamma, 0, 0, 1.0)]))
    for i in range(big_n):
        blocks.append(_make_block(1, f"s_nonneg_{i}", [], [(i_s(i), 0, 0, 1.0)]))
    if spec.alpha == 1.0:
        # at alpha = 1 the objective is invariant along tau -> -inf with
        # s_i = raw_i - tau, an unbounded optimal ray that stalls the
        # interior-point iterates in cancellation.  The per-atom transform
        # of the (nonnegative) squared loss is itself nonnegative, so
        # tau >= 0 never cuts the optimum; it bounds the degenerate face.
        blocks.append(_make_block(1, "tau_nonneg", [], [(i_tau, 0, 0, 1.0)]))

    layout = {
        "A": (0, nm),
        "b": (nm, nm + n),
        "gamma": (i_gamma, i_gamma + 1),
        "tau": (i_tau, i_tau + 1),
        "s": (nm + n + 2, k_total),
    }
    meta = {"kind": "dr_cvar", "n": n, "m": m, "N": big_n,
            "alpha": spec.alpha, "radius": spec.radius,
            "strict_margin": strict_margin}
    return SdpProblem(num_vars=k_total, objective=c, blocks=tuple(blocks),
                      var_layout=layout, meta=meta)


def extract_estimator(problem: SdpProblem, sol) -> tuple[AffineEstimator, float, float, np.ndarray]:
    """Unpack an optimal solution into (estimator, gamma, tau, s).

    Validates sign constraints and the PSD residual of every block at the
    returned point; a violation raises with the worst offender named.
    """
    if sol.status != "optimal":
        raise RuntimeError(f"cannot extract estimator from status '{sol.status}'")
    n = problem.meta["n"]
    m = problem.meta["m"]
    x = sol.x
    a_mat = x[problem.layout_slice("A")].reshape((n, m), order="F")
    b_vec = x[problem.layout_slice("b")]
    gamma = float(x[problem.layout_slice("gamma")][0])
    tau = float(x[problem.layout_slice("tau")][0])
    s = x[problem.layout_slice("s")].copy()

    if gamma < -1e-9:
        raise RuntimeError(f"solution validation failed: gamma = {gamma} < -1e-9")
    if s.size and float(s.min()) < -1e-9:
        raise RuntimeError(f"solution validation failed: min s = {s.min()} < -1e-9")
    worst = 0.0
    worst_name = ""
    for blk in problem.blocks:
        w = float(np.linalg.eigvalsh(blk.evaluate(x))[0])
        if w < worst:
            worst = w
            worst_name = blk.name
    if worst < -1e-7:
        raise RuntimeError(
            f"solution validation failed: block '{worst_name}' has minimum "
            f"eigenvalue {worst} < -1e-7"
        )
    return AffineEstimator(A=a_mat, b=b_vec), gamma, tau, s


def objective_value(problem: SdpProblem, x: np.ndarray) -> float:
    """c'x for a candidate point (used by cross-checks)."""
    return float(problem.objective @ x)


def write_problem_dump(problem: SdpProblem, path) -> None:
    """Write the sparse text dump of a problem for external cross-checks.

    Format (documented, stable): comment header lines starting with ``#``;
    one ``obj VAR VALUE`` line per objective nonzero; then one line per
    matrix nonzero ``BLOCK ROW COL VAR VALUE`` where BLOCK, ROW, COL and VAR
    are 1-based, VAR 0 denotes the constant matrix, and only the lower
    triangle (ROW >= COL) is listed.
    """
    with open(path, "w") as fh:
        fh.write("# drcvar sdp dump format v1\n")
        fh.write(f"# num_vars {problem.num_vars}\n")
        fh.write(f"# num_blocks {len(problem.blocks)}\n")
        sizes = " ".join(str(b.size) for b in problem.blocks)
        fh.write(f"# block_sizes {sizes}\n")
        for k in np.flatnonzero(problem.objective):
            fh.write(f"obj {k + 1} {problem.objective[k]:.17g}\n")
        for j, blk in enumerate(problem.blocks, start=1):
            for p, q, v in zip(blk.const_p, blk.const_q, blk.const_v):
                if v != 0.0:
                    fh.write(f"{j} {p + 1} {q + 1} 0 {v:.17g}\n")
            for var, p, q, v in zip(blk.coef_var, blk.coef_p, blk.coef_q,
                                    blk.coef_v):
                if v != 0.0:
                    fh.write(f"{j} {p + 1} {q + 1} {var + 1} {v:.17g}\n")
