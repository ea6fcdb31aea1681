"""Primal-dual interior-point solver for small/medium block-diagonal SDPs.

Solves ``minimize c'x  s.t.  S_j(x) = M0_j + sum_k x_k Mk_j  PSD`` with an
infeasible-start path-following method: Nesterov-Todd scaling computed per
block from Cholesky factors and one SVD, a Mehrotra predictor-corrector
step, and a dense normal-equations (Schur-complement) solve whose assembly
is delegated to :mod:`drcvar.kernels`.  Dense linear algebra throughout;
blocks of equal size are processed as stacked arrays so the per-block
factorizations hit batched LAPACK calls instead of Python loops.
Determinism over scalability: sized for problems up to a few hundred
variables and blocks below ~100x100.

Status classification
---------------------
``optimal``     relative gap and scaled residuals below tolerances.
``infeasible``  a diverging dual iterate yields a Farkas-type certificate:
                the dual objective has grown past 1e8 times the primal
                scale while the dual constraint image satisfies
                ||A'Z|| <= 1e-8 * (-<M0, Z>).
``unbounded``   the mirrored test on the primal iterate: c'x diverges below
                -1e8 times the dual scale while x/||x|| is an improving ray
                (c'(x/||x||) <= -1e-8 and min eig of the homogeneous map at
                x/||x|| >= -1e-8).
``max_iter``    iteration cap hit; the best iterate seen is returned.
``numerical``   KKT factorization broke down beyond ridge repair, or
                iterates stopped being finite without a certificate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .kernels import schur_accumulate
from .sdp import SdpProblem

_DIVERGENCE_FACTOR = 1e8
_CERT_TOL = 1e-8
_MIN_STEP = 1e-10


@dataclass(frozen=True)
class SolverSettings:
    """Interior-point tolerances and limits."""

    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.99
    verbose: bool = False

    def __post_init__(self):
        if self.tol_gap <= 0.0 or self.tol_feas <= 0.0:
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.step_fraction < 1.0):
            raise ValueError("step_fraction must be in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class SdpSolution:
    """Solver output: point, certified objective, and residual summary."""

    status: str
    x: np.ndarray
    objective_value: float
    duality_gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    slack_blocks: tuple
    dual_blocks: tuple


class _Group:
    """All blocks of one size, stacked for batched linear algebra.

    Sparse coefficient entries of the member blocks are concatenated with
    their flat positions offset per member, so evaluating the affine map or
    its adjoint over the whole group is one scatter or gather.
    """

    __slots__ = ("size", "idxs", "count", "m0", "var", "flat", "v",
                 "kvar", "kp", "kq", "kv", "starts")

    def __init__(self, size, idxs, blocks):
        self.size = size
        self.idxs = idxs
        self.count = len(idxs)
        self.m0 = np.stack([blocks[j].dense_constant() for j in idxs])
        var_parts, flat_parts, v_parts = [], [], []
        kvar, kp, kq, kv, starts = [], [], [], [], []
        pos = 0
        for local, j in enumerate(idxs):
            var, p, q, v = blocks[j].expanded()
            var_parts.append(var.astype(np.int64))
            flat_parts.append(p.astype(np.int64) * size + q.astype(np.int64)
                              + local * size * size)
            v_parts.append(v)
            kvar.append(var)
            kp.append(p)
            kq.append(q)
            kv.append(v)
            starts.append(pos)
            pos += var.shape[0]
        self.var = np.concatenate(var_parts)
        self.flat = np.concatenate(flat_parts)
        self.v = np.concatenate(v_parts)
        # per-member views for the Schur kernel
        self.kvar = kvar
        self.kp = kp
        self.kq = kq
        self.kv = kv
        self.starts = starts

    def apply(self, x: np.ndarray) -> np.ndarray:
        """(count, s, s) stack of sum_k x_k Mk over member blocks."""
        w = self.v * x[self.var]
        out = np.bincount(self.flat, weights=w,
                          minlength=self.count * self.size * self.size)
        return out.reshape(self.count, self.size, self.size)

    def inner_all(self, stack: np.ndarray, k: int) -> np.ndarray:
        """sum over member blocks of <Mk, stack_j> for every variable."""
        w = stack.ravel()[self.flat] * self.v
        return np.bincount(self.var, weights=w, minlength=k)


def _build_groups(problem: SdpProblem) -> list[_Group]:
    by_size: dict[int, list[int]] = {}
    for j, blk in enumerate(problem.blocks):
        by_size.setdefault(blk.size, []).append(j)
    return [_Group(size, idxs, problem.blocks)
            for size, idxs in sorted(by_size.items())]


def _gram_normal_matrix(groups, g_inv, k_total):
    """Normal matrix as an explicit Gram of scaled constraint matrices.

    Slower than the pairwise kernel but numerically PSD by construction;
    used as a fallback when extreme conditioning makes the fast path's
    result indefinite.
    """
    h = np.zeros((k_total, k_total))
    for gi_, g in enumerate(groups):
        s = g.size
        for local in range(g.count):
            var = g.kvar[local]
            present, inv = np.unique(var, return_inverse=True)
            mats = np.zeros((present.size, s, s))
            np.add.at(mats, (inv, g.kp[local], g.kq[local]), g.kv[local])
            gil = g_inv[gi_][local]
            scaled = gil @ mats @ gil.T
            vecs = scaled.reshape(present.size, s * s)
            h[np.ix_(present, present)] += vecs @ vecs.T
    return h


def certify(problem: SdpProblem, x: np.ndarray, slack_blocks, dual_blocks):
    """Recompute gap and scaled residuals for a candidate primal/dual pair.

    Used both by the solver post-solve and by tests that verify the reported
    numbers independently.
    """
    norm_m0 = math.sqrt(sum(float(np.sum(b.dense_constant() ** 2))
                            for b in problem.blocks))
    norm_c = float(np.linalg.norm(problem.objective))
    gap = 0.0
    pres = 0.0
    atz = np.zeros(problem.num_vars)
    for blk, s_mat, z_mat in zip(problem.blocks, slack_blocks, dual_blocks):
        s_of_x = blk.evaluate(x)
        pres += float(np.sum((s_mat - s_of_x) ** 2))
        gap += float(np.sum(s_mat * z_mat))
        var, p, q, v = blk.expanded()
        w = z_mat[p, q] * v
        atz += np.bincount(var, weights=w, minlength=problem.num_vars)
    dres = float(np.linalg.norm(problem.objective - atz))
    return gap, math.sqrt(pres) / (1.0 + norm_m0), dres / (1.0 + norm_c)


def solve_sdp(problem: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Solve a block-diagonal LMI program.

    Deterministic: identical problems and settings produce identical iterate
    sequences.  See the module docstring for status semantics.
    """
    if settings is None:
        settings = SolverSettings()

    k_total = problem.num_vars
    c = np.asarray(problem.objective, dtype=float)
    groups = _build_groups(problem)
    dim = sum(g.size * g.count for g in groups)

    norm_m0 = math.sqrt(sum(float(np.sum(g.m0**2)) for g in groups))
    norm_c = float(np.linalg.norm(c))

    x = np.zeros(k_total)
    eta_p = max(1.0, norm_m0)
    eta_d = max(1.0, norm_c)
    eye = {g.size: np.eye(g.size)[None, :, :] for g in groups}
    s_st = [eta_p * np.repeat(eye[g.size], g.count, axis=0) for g in groups]
    z_st = [eta_d * np.repeat(eye[g.size], g.count, axis=0) for g in groups]

    best = None  # (merit, x, S stacks, Z stacks, iteration)

    def snapshot(merit, it):
        nonlocal best
        if best is None or merit < best[0]:
            best = (merit, x.copy(), [s.copy() for s in s_st],
                    [z.copy() for z in z_st], it)

    def finish(status, it, xs=None, ss=None, zs=None):
        xs = x if xs is None else xs
        ss = s_st if ss is None else ss
        zs = z_st if zs is None else zs
        nb = sum(g.count for g in groups)
        slacks: list = [None] * nb
        duals: list = [None] * nb
        for gi_, g in enumerate(groups):
            for local, j in enumerate(g.idxs):
                slacks[j] = ss[gi_][local]
                duals[j] = zs[gi_][local]
        gap, pinf, dinf = certify(problem, xs, slacks, duals)
        return SdpSolution(
            status=status, x=xs, objective_value=float(c @ xs),
            duality_gap=gap, primal_infeasibility=pinf,
            dual_infeasibility=dinf, iterations=it,
            slack_blocks=tuple(slacks), dual_blocks=tuple(duals),
        )

    def fail(status, it):
        if best is not None:
            return finish(status, it, best[1], best[2], best[3])
        return finish(status, it)

    stall_count = 0
    for it in range(settings.max_iter):
        r_p = [s_st[gi_] - g.m0 - g.apply(x) for gi_, g in enumerate(groups)]
        atz = np.zeros(k_total)
        for gi_, g in enumerate(groups):
            atz += g.inner_all(z_st[gi_], k_total)
        r_d = c - atz

        gap = sum(float(np.sum(s_st[gi_] * z_st[gi_]))
                  for gi_ in range(len(groups)))
        mu = gap / dim
        pobj = float(c @ x)
        dobj = -sum(float(np.sum(g.m0 * z_st[gi_]))
                    for gi_, g in enumerate(groups))
        pinf = math.sqrt(sum(float(np.sum(r**2)) for r in r_p)) / (1.0 + norm_m0)
        dinf = float(np.linalg.norm(r_d)) / (1.0 + norm_c)
        relgap = gap / max(1.0, 0.5 * (abs(pobj) + abs(dobj)))

        finite = (np.all(np.isfinite(x)) and math.isfinite(gap)
                  and math.isfinite(pobj) and math.isfinite(dobj))

        if settings.verbose:
            print(f"iter {it:3d}  pobj {pobj:+.9e}  dobj {dobj:+.9e}  "
                  f"relgap {relgap:.2e}  pinf {pinf:.2e}  dinf {dinf:.2e}")

        if finite and relgap <= settings.tol_gap and pinf <= settings.tol_feas \
                and dinf <= settings.tol_feas:
            return finish("optimal", it)

        if finite:
            snapshot(max(relgap, pinf, dinf), it)

        # Farkas-style certificates from diverging iterates.
        znorm = math.sqrt(sum(float(np.sum(z**2)) for z in z_st))
        if dobj > _DIVERGENCE_FACTOR * max(1.0, abs(pobj), norm_m0):
            if np.linalg.norm(atz) <= _CERT_TOL * dobj:
                return finish("infeasible", it)
        xnorm = float(np.linalg.norm(x))
        if pobj < -_DIVERGENCE_FACTOR * max(1.0, abs(dobj), norm_c) and xnorm > 0:
            ray = x / xnorm
            ray_min = min(float(np.min(np.linalg.eigvalsh(g.apply(ray))))
                          for g in groups)
            if float(c @ ray) <= -_CERT_TOL and ray_min >= -_CERT_TOL:
                return finish("unbounded", it)

        if not finite or znorm > 1e150 or xnorm > 1e150 or mu <= 0.0:
            return fail("numerical", it)

        def chol_repaired(stack, gi_, which):
            # rounding can push the smallest eigenvalue of a stacked cone
            # block marginally negative near convergence; floor the spectrum
            # and write the repaired block back so residuals stay consistent
            try:
                return np.linalg.cholesky(stack)
            except np.linalg.LinAlgError:
                w, vecs = np.linalg.eigh(stack)
                floor = 1e-14 * np.maximum(w[:, -1], 1.0)
                w = np.maximum(w, floor[:, None])
                repaired = (vecs * w[:, None, :]) @ vecs.transpose(0, 2, 1)
                repaired = 0.5 * (repaired + repaired.transpose(0, 2, 1))
                if which == "s":
                    s_st[gi_] = repaired
                else:
                    z_st[gi_] = repaired
                return np.linalg.cholesky(repaired)

        # Nesterov-Todd scaling, batched per size group:
        # G^-1 = diag(sig^-1/2) Usv' Lz', lambda = sig, W^-1 = G^-T G^-1.
        g_inv, g_inv_t, lam, u_w, rt_outer = [], [], [], [], []
        try:
            for gi_, g in enumerate(groups):
                l_s = chol_repaired(s_st[gi_], gi_, "s")
                l_z = chol_repaired(z_st[gi_], gi_, "z")
                u_sv, sig, _ = np.linalg.svd(l_z.transpose(0, 2, 1) @ l_s)
                ginv = ((u_sv / np.sqrt(sig)[:, None, :]).transpose(0, 2, 1)
                        @ l_z.transpose(0, 2, 1))
                g_inv.append(ginv)
                g_inv_t.append(ginv.transpose(0, 2, 1).copy())
                lam.append(sig)
                u_w.append(ginv.transpose(0, 2, 1) @ ginv)
                root = np.sqrt(sig)
                rt_outer.append(root[:, :, None] * root[:, None, :])
        except np.linalg.LinAlgError:
            return fail("numerical", it)

        # Normal matrix H[k,l] = sum_j <Mk, W^-1 Ml W^-1>, lower triangle.
        h_mat = np.zeros((k_total, k_total))
        for gi_, g in enumerate(groups):
            for local in range(g.count):
                u_c = np.ascontiguousarray(u_w[gi_][local])
                schur_accumulate(h_mat, u_c, g.kvar[local], g.kp[local],
                                 g.kq[local], g.kv[local])
        h_mat += np.tril(h_mat, -1).T

        # Jacobi equilibration keeps the factorization accurate when the
        # variable scales diverge (e.g. the transport multiplier blows up
        # as the radius shrinks).
        jac = np.sqrt(np.maximum(np.diag(h_mat), 1e-300))
        h_eq = h_mat / np.outer(jac, jac)
        h_fact = None
        ridge = 0.0
        rebuilt = False
        while h_fact is None:
            try:
                h_fact = sla.cho_factor(
                    h_eq + ridge * np.eye(k_total), lower=True)
            except np.linalg.LinAlgError:
                ridge = 1e-13 if ridge == 0.0 else ridge * 100.0
                if ridge > 1e-8:
                    if rebuilt:
                        return fail("numerical", it)
                    # the pairwise expansion can lose definiteness to
                    # roundoff at extreme conditioning; rebuild as a Gram
                    h_mat = _gram_normal_matrix(groups, g_inv, k_total)
                    jac = np.sqrt(np.maximum(np.diag(h_mat), 1e-300))
                    h_eq = h_mat / np.outer(jac, jac)
                    ridge = 0.0
                    rebuilt = True

        def directions(rtc):
            rhs = -r_d.copy()
            for gi_, g in enumerate(groups):
                t_st = g_inv_t[gi_] @ rtc[gi_] @ g_inv[gi_]
                t_st += u_w[gi_] @ r_p[gi_] @ u_w[gi_]
                rhs += g.inner_all(t_st, k_total)
            def solve_eq(vec):
                return sla.cho_solve(h_fact, vec / jac) / jac

            dx = solve_eq(rhs)
            # iterative refinement; the normal matrix gets ill-conditioned
            # near convergence despite the equilibration, and any ridge
            # perturbs the factorization
            for _ in range(2 if ridge > 0.0 else 1):
                dx += solve_eq(rhs - h_mat @ dx)
            ds, dz, ds_sc, dz_sc = [], [], [], []
            for gi_, g in enumerate(groups):
                d_s = g.apply(dx) - r_p[gi_]
                d_s_scaled = g_inv[gi_] @ d_s @ g_inv_t[gi_]
                d_z_scaled = rtc[gi_] - d_s_scaled
                ds.append(d_s)
                ds_sc.append(d_s_scaled)
                dz_sc.append(d_z_scaled)
                dz.append(g_inv_t[gi_] @ d_z_scaled @ g_inv[gi_])
            return dx, ds, dz, ds_sc, dz_sc

        def max_step(scaled_dirs):
            amax = np.inf
            for gi_ in range(len(groups)):
                w = np.linalg.eigvalsh(scaled_dirs[gi_] / rt_outer[gi_])
                w_min = float(np.min(w[:, 0]))
                if w_min < -1e-14:
                    amax = min(amax, -1.0 / w_min)
            return amax

        rtc_aff = [-lam[gi_][:, :, None] * eye[g.size]
                   for gi_, g in enumerate(groups)]
        try:
            _, _, _, dss_a, dzs_a = directions(rtc_aff)
        except (np.linalg.LinAlgError, ValueError):
            return fail("numerical", it)
        ap_aff = min(1.0, max_step(dss_a))
        ad_aff = min(1.0, max_step(dzs_a))
        mu_aff = sum(
            float(np.sum((lam[gi_][:, :, None] * eye[g.size] + ap_aff * dss_a[gi_])
                         * (lam[gi_][:, :, None] * eye[g.size] + ad_aff * dzs_a[gi_])))
            for gi_, g in enumerate(groups)
        ) / dim
        sigma = min(1.0, max(1e-8, (max(mu_aff, 0.0) / mu) ** 3))

        rtc = []
        for gi_, g in enumerate(groups):
            lam_sq = lam[gi_] ** 2
            corr = (sigma * mu - lam_sq)[:, :, None] * eye[g.size]
            corr -= 0.5 * (dss_a[gi_] @ dzs_a[gi_] + dzs_a[gi_] @ dss_a[gi_])
            denom = 0.5 * (lam[gi_][:, :, None] + lam[gi_][:, None, :])
            rtc.append(corr / denom)
        try:
            dx, ds, dz, dss, dzs = directions(rtc)
        except (np.linalg.LinAlgError, ValueError):
            return fail("numerical", it)

        # single step length for both sides; push the fraction toward 1 as
        # the iterate converges
        frac = min(0.999, max(settings.step_fraction,
                              1.0 - 10.0 * max(relgap, pinf, dinf)))
        alpha = min(1.0, frac * max_step(dss), frac * max_step(dzs))

        if alpha < 1e-3:
            # recovery sweep: a damped pure-centering step escapes stalls
            # caused by corrector overshoot near a degenerate face
            rtc_center = []
            for gi_, g in enumerate(groups):
                lam_sq = lam[gi_] ** 2
                corr = (mu - lam_sq)[:, :, None] * eye[g.size]
                denom = 0.5 * (lam[gi_][:, :, None] + lam[gi_][:, None, :])
                rtc_center.append(corr / denom)
            try:
                dx_c, ds_c, dz_c, dss_c, dzs_c = directions(rtc_center)
            except (np.linalg.LinAlgError, ValueError):
                return fail("numerical", it)
            alpha_c = min(1.0, frac * max_step(dss_c), frac * max_step(dzs_c))
            if alpha_c > alpha:
                dx, ds, dz = dx_c, ds_c, dz_c
                alpha = alpha_c

        if alpha < _MIN_STEP:
            stall_count += 1
            if stall_count >= 3:
                return fail("numerical", it)
        else:
            stall_count = 0

        x = x + alpha * dx
        for gi_ in range(len(groups)):
            s_new = s_st[gi_] + alpha * ds[gi_]
            z_new = z_st[gi_] + alpha * dz[gi_]
            s_st[gi_] = 0.5 * (s_new + s_new.transpose(0, 2, 1))
            z_st[gi_] = 0.5 * (z_new + z_new.transpose(0, 2, 1))

    return fail("max_iter", settings.max_iter)
