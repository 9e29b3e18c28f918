"""Carnot-Caratheodory distance by direct control discretization.

The distance d(x, y) is the square root of the minimal action of
piecewise-constant controls on [0, 1] steering the frame ODE from x to y.
The endpoint constraint is enforced by a quadratic penalty with mu
continuation; gradients come from a hand-coded reverse pass through the
fixed-step RK4 integrator, vectorized over restarts and query pairs.

The module also provides a semi-Lagrangian sweep producing whole distance
fields (used for CC ball masks, refined by the direct solver near the
boundary) and the tangent-cone convergence experiment.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize

from .errors import NonConvergedError
from .grids import Box
from .nilpotent import dilation_rescale

__all__ = [
    "SolverOptions",
    "ControlPath",
    "DistanceResult",
    "distance",
    "distance_many",
    "control_graph_distance",
    "cc_distance_field",
    "BallMask",
    "ball_mask",
    "tangent_convergence",
    "TangentReport",
]

BIG = 1e8


# -- batched frame evaluation ----------------------------------------------


class _FrameKernel:
    """Evaluates a frame and its Jacobians on point batches of any shape."""

    def __init__(self, frame):
        self.frame = list(frame)
        self.m = len(self.frame)
        self.n = self.frame[0].dim

    def F(self, pts):
        """(..., n) -> (..., m, n)"""
        return np.stack([X.eval_batch(pts) for X in self.frame], axis=-2)

    def DF(self, pts):
        """(..., n) -> (..., m, n, n) with DF[..., i, j, l] = d_l X_{i,j}"""
        return np.stack([X.jacobian_batch(pts) for X in self.frame], axis=-3)

    def V(self, pts, controls):
        """sum_i c_i X_i at pts; controls (..., m)."""
        return np.einsum("...m,...mj->...j", controls, self.F(pts))


# -- solver ------------------------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rules and effort knobs for the direct solver."""

    n_start: int = 16
    max_refinements: int = 2
    refine_rtol: float = 0.005
    mu_schedule: tuple = (1e2, 1e3, 1e4, 1e5)
    restarts: int = 8
    endpoint_tol: float = 1e-4
    maxiter: int = 250
    seed: int = 0
    fixed_n: Optional[int] = None  # disable N refinement, use exactly this N
    ftol: float = 1e-14
    gtol: float = 1e-9
    init_controls: Optional[np.ndarray] = None  # (P, N, m) extra warm starts


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-constant control and its integrated trajectory on [0, 1]."""

    controls: np.ndarray  # (N, m)
    trajectory: np.ndarray  # (N+1, n)
    action: float
    endpoint_gap: float


@dataclass(frozen=True)
class DistanceResult:
    value: float
    path: ControlPath
    restarts_used: int
    converged: bool
    refinements: tuple = ()


def _rk4_forward(kernel, c, x0, h, keep_stages):
    """Integrate the control ODE; c (B, N, m), x0 (B, n).

    Returns (trajectory (N+1, B, n), stages (N, 4, B, n) or None).
    Runaway instances saturate to non-finite values and are handled by the
    caller; overflow warnings are expected and muted.
    """
    B, N, m = c.shape
    n = kernel.n
    traj = np.empty((N + 1, B, n))
    stages = np.empty((N, 4, B, n)) if keep_stages else None
    y = np.array(x0, dtype=float)
    traj[0] = y
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            ck = c[:, k, :]
            a1 = y
            k1 = kernel.V(a1, ck)
            a2 = y + 0.5 * h * k1
            k2 = kernel.V(a2, ck)
            a3 = y + 0.5 * h * k2
            k3 = kernel.V(a3, ck)
            a4 = y + h * k3
            k4 = kernel.V(a4, ck)
            if keep_stages:
                stages[k, 0] = a1
                stages[k, 1] = a2
                stages[k, 2] = a3
                stages[k, 3] = a4
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            traj[k + 1] = y
    return traj, stages


def _value_and_grad(kernel, c, x0, target, mu):
    """Summed penalized action and its gradient in the controls."""
    B, N, m = c.shape
    h = 1.0 / N
    traj, stages = _rk4_forward(kernel, c, x0, h, keep_stages=True)
    with np.errstate(over="ignore", invalid="ignore"):
        yN = traj[-1]
        bad = ~np.all(np.isfinite(yN) & (np.abs(yN) < 1e6), axis=1)
        yN = np.where(bad[:, None], 0.0, yN)
        gap = yN - target
        action = np.sum(c * c, axis=(1, 2)) / N
        J = action + mu * np.sum(gap * gap, axis=1)
        J = np.where(np.isfinite(J) & ~bad, np.minimum(J, BIG), BIG)

    grad = 2.0 * c / N
    lam = 2.0 * mu * gap
    lam = np.where(bad[:, None], 0.0, lam)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N - 1, -1, -1):
            ck = c[:, k, :]
            a1, a2, a3, a4 = stages[k]
            F4 = kernel.F(a4)
            DF4 = kernel.DF(a4)
            v4 = (h / 6.0) * lam
            grad[:, k, :] += np.einsum("bij,bj->bi", F4, v4)
            da4 = np.einsum("bi,bijl,bj->bl", ck, DF4, v4)

            v3 = (2 * h / 6.0) * lam + h * da4
            F3 = kernel.F(a3)
            DF3 = kernel.DF(a3)
            grad[:, k, :] += np.einsum("bij,bj->bi", F3, v3)
            da3 = np.einsum("bi,bijl,bj->bl", ck, DF3, v3)

            v2 = (2 * h / 6.0) * lam + (h / 2.0) * da3
            F2 = kernel.F(a2)
            DF2 = kernel.DF(a2)
            grad[:, k, :] += np.einsum("bij,bj->bi", F2, v2)
            da2 = np.einsum("bi,bijl,bj->bl", ck, DF2, v2)

            v1 = (h / 6.0) * lam + (h / 2.0) * da2
            F1 = kernel.F(a1)
            DF1 = kernel.DF(a1)
            grad[:, k, :] += np.einsum("bij,bj->bi", F1, v1)
            da1 = np.einsum("bi,bijl,bj->bl", ck, DF1, v1)

            lam = lam + da1 + da2 + da3 + da4
            if not np.all(np.isfinite(lam)):
                lam = np.where(np.isfinite(lam), lam, 0.0)
    grad = np.where(np.isfinite(grad), grad, 0.0)
    return float(np.sum(J)), grad


def _straight_line_controls(kernel, x, y, N):
    """Constant-rate controls tracking the segment x -> y (least squares).

    The pinv cutoff drops near-degenerate frame directions; otherwise the
    initializer returns huge controls along them and the first trajectory
    blows up.
    """
    B, n = x.shape
    ts = (np.arange(N) + 0.5) / N
    pts = x[:, None, :] * (1 - ts)[None, :, None] + y[:, None, :] * ts[None, :, None]
    F = kernel.F(pts.reshape(B * N, n)).reshape(B, N, kernel.m, n)
    delta = np.broadcast_to((y - x)[:, None, :], (B, N, n))
    # per (pair, step) least squares via pinv of the m x n frame matrix
    pinv = np.linalg.pinv(F.swapaxes(-1, -2), rcond=1e-6)
    c = np.einsum("bknj,bkj->bkn", pinv, delta)
    return np.where(np.isfinite(c), c, 0.0)


def _solve_batch(kernel, starts, targets, opts):
    """Minimize the penalized action for P pairs with R restarts each.

    Returns (controls (P, N, m), action (P,), gap (P,), trajectories).
    """
    P = starts.shape[0]
    R = max(1, opts.restarts)
    rng = np.random.default_rng(opts.seed)

    N = opts.fixed_n or opts.n_start
    x = np.repeat(starts, R, axis=0)
    t = np.repeat(targets, R, axis=0)
    base = _straight_line_controls(kernel, starts, targets, N)
    scale = np.maximum(np.linalg.norm(base, axis=(1, 2), keepdims=True) / N**0.5, 0.5)
    inits = []
    extra = opts.init_controls
    for j in range(R):
        if j == 0:
            inits.append(base)
        elif extra is not None and j - 1 < len(extra):
            warm = np.broadcast_to(extra[j - 1], base.shape)
            inits.append(np.array(warm))
        else:
            noise = rng.standard_normal(base.shape) * scale * (0.3 + 0.4 * j)
            inits.append(base + noise)
    c = np.stack(inits, axis=1).reshape(P * R, N, -1)

    refinements = []
    prev_value = None
    for round_idx in range(1 + (0 if opts.fixed_n else opts.max_refinements)):
        mus = opts.mu_schedule if round_idx == 0 else opts.mu_schedule[-1:]
        for mu in mus:
            shape = c.shape

            def fun(z, mu=mu, shape=shape):
                val, grad = _value_and_grad(
                    kernel, z.reshape(shape), x, t, mu
                )
                return val, grad.ravel()

            res = minimize(
                fun,
                c.ravel(),
                jac=True,
                method="L-BFGS-B",
                options={
                    "maxiter": opts.maxiter,
                    "maxfun": 4 * opts.maxiter,
                    "ftol": opts.ftol,
                    "gtol": opts.gtol,
                },
            )
            c = res.x.reshape(shape)

        traj, _ = _rk4_forward(kernel, c, x, 1.0 / c.shape[1], keep_stages=False)
        gap = np.linalg.norm(traj[-1] - t, axis=1)
        action = np.sum(c * c, axis=(1, 2)) / c.shape[1]
        action = np.where(np.isfinite(action), action, BIG)
        # pick the best feasible restart per pair (fall back to smallest gap)
        gap_r = gap.reshape(P, R)
        act_r = action.reshape(P, R)
        feas = gap_r <= opts.endpoint_tol
        penal = np.where(feas, act_r, BIG + gap_r)
        best = np.argmin(penal, axis=1)
        value = np.sqrt(np.where(np.isfinite(act_r[np.arange(P), best]),
                                 act_r[np.arange(P), best], BIG))
        refinements.append((c.shape[1], value.copy()))

        if opts.fixed_n or round_idx == (0 if opts.fixed_n else opts.max_refinements):
            break
        if prev_value is not None and np.all(
            np.abs(value - prev_value) <= opts.refine_rtol * np.maximum(prev_value, 1e-12)
        ):
            break
        prev_value = value
        c = np.repeat(c, 2, axis=1)  # piecewise-constant refinement, exact

    N = c.shape[1]
    traj, _ = _rk4_forward(kernel, c, x, 1.0 / N, keep_stages=False)
    gap = np.linalg.norm(traj[-1] - t, axis=1)
    action = np.sum(c * c, axis=(1, 2)) / N
    gap_r = gap.reshape(P, R)
    act_r = np.where(np.isfinite(action), action, BIG).reshape(P, R)
    feas = gap_r <= opts.endpoint_tol
    penal = np.where(feas, act_r, BIG + gap_r)
    best = np.argmin(penal, axis=1)
    idx = np.arange(P) * R + best
    c_best = c[idx]
    traj_best = traj[:, idx, :].swapaxes(0, 1)
    return c_best, act_r[np.arange(P), best], gap_r[np.arange(P), best], traj_best, refinements


def distance_many(S, starts, targets, opts: SolverOptions = SolverOptions()):
    """Solve many (start, target) pairs in one batched optimization."""
    kernel = _FrameKernel(S.frame)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    c, action, gap, traj, refinements = _solve_batch(kernel, starts, targets, opts)
    results = []
    per_pair = [np.asarray([vals[p] for _, vals in refinements]) for p in range(len(starts))]
    for p in range(len(starts)):
        vals = per_pair[p]
        settled = len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= opts.refine_rtol * max(
            vals[-2], 1e-12
        )
        if opts.fixed_n or (opts.max_refinements == 0):
            settled = True
        converged = bool(gap[p] <= opts.endpoint_tol and settled)
        path = ControlPath(
            controls=c[p],
            trajectory=traj[p],
            action=float(action[p]),
            endpoint_gap=float(gap[p]),
        )
        results.append(
            DistanceResult(
                value=float(math.sqrt(max(action[p], 0.0))),
                path=path,
                restarts_used=max(1, opts.restarts),
                converged=converged,
                refinements=tuple((n, float(vals_[p])) for n, vals_ in refinements),
            )
        )
    return results


def distance(S, x, y, opts: SolverOptions = SolverOptions()) -> DistanceResult:
    """CC distance between two points (upper bound up to endpoint slack)."""
    return distance_many(S, [x], [y], opts)[0]


# -- control-graph oracle ----------------------------------------------------


@dataclass(frozen=True)
class GraphDistance:
    """Oracle value: length of an explicit feasible path to ``end_state``.

    ``end_state`` lies in the same voxel as the target; the remaining hop
    is bounded by the voxel size (account for it when comparing).
    """

    value: float
    end_state: np.ndarray
    popped: int


def control_graph_distance(S, x, y, box, resolution=None, c_max=4, K=64):
    """Deterministic lattice-control search; a lower-fidelity upper bound.

    Controls range over the integer lattice with 0 < |c| <= c_max, each
    applied for time 1/K.  Labels keep the exact continuous state (one
    label per voxel, label correcting), so every cost is the length of a
    feasible horizontal path; no teleporting through voxel snapping.

    With ``resolution=None`` the voxel size is matched to the step length
    c_max/K so that maximal controls cross ~1.8 cells; labels starve when
    single steps cannot leave their voxel.
    """
    kernel = _FrameKernel(S.frame)
    m = kernel.m
    if resolution is None:
        step = c_max / K
        resolution = tuple(
            int(np.clip(np.ceil(w / (0.55 * step)), 8, 96)) for w in box.widths
        )
    res = box.resolution_tuple(resolution)
    spacing = box.spacing(res)
    lo = np.asarray(box.lo)
    shape = tuple(res)

    ranges = [np.arange(-c_max, c_max + 1)] * m
    lattice = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, m)
    norms = np.linalg.norm(lattice, axis=1)
    keep = (norms > 0) & (norms <= c_max)
    lattice = lattice[keep].astype(float)
    costs = norms[keep] / K
    dt = 1.0 / K

    def voxel_of(p):
        idx = np.floor((np.asarray(p) - lo) / spacing).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(shape)):
            return -1
        return int(np.ravel_multi_index(tuple(idx), shape))

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    start, goal = voxel_of(x), voxel_of(y)
    if start < 0 or goal < 0:
        raise ValueError("oracle endpoints must lie inside the box")

    best_cost = {start: 0.0}
    best_state = {start: x}
    heap = [(0.0, start)]
    popped = 0
    while heap:
        d, u = heapq.heappop(heap)
        if d > best_cost.get(u, np.inf):
            continue
        popped += 1
        state = best_state[u]
        if u == goal:
            return GraphDistance(d, state, popped)
        # integrate all lattice controls from the exact stored state
        pts = np.broadcast_to(state, (len(lattice), kernel.n))
        k1 = kernel.V(pts, lattice)
        k2 = kernel.V(pts + 0.5 * dt * k1, lattice)
        k3 = kernel.V(pts + 0.5 * dt * k2, lattice)
        k4 = kernel.V(pts + dt * k3, lattice)
        ends = pts + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        inside = box.contains(ends)
        idx = np.floor((ends - lo) / spacing).astype(int)
        ok = inside & np.all(idx >= 0, axis=1) & np.all(idx < np.asarray(shape), axis=1)
        flats = np.full(len(ends), -1)
        if np.any(ok):
            flats[ok] = np.ravel_multi_index(tuple(idx[ok].T), shape)
        for j in range(len(ends)):
            v = flats[j]
            if v < 0:
                continue
            nd = d + costs[j]
            if nd < best_cost.get(v, np.inf):
                best_cost[v] = nd
                best_state[v] = ends[j]
                heapq.heappush(heap, (nd, v))
    raise NonConvergedError(
        "control-graph search exhausted the box without reaching the target voxel"
    )


# -- distance fields and ball masks ------------------------------------------


def _unit_directions(m, count=16):
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    combos = np.stack(
        np.meshgrid(*([np.array([-1.0, 0.0, 1.0])] * m), indexing="ij"), axis=-1
    ).reshape(-1, m)
    combos = combos[np.any(combos != 0, axis=1)]
    return combos / np.linalg.norm(combos, axis=1, keepdims=True)


def cc_distance_field(
    S,
    p,
    box: Box,
    resolution,
    n_dirs=16,
    step_factors=(1.5, 4.0),
    tol=1e-4,
    max_sweeps=300,
    seed_cells=3,
    seed_opts: Optional[SolverOptions] = None,
):
    """Approximate CC distance from p on a voxel grid, by value iteration.

    The update is semi-Lagrangian: T(z) <- min over unit controls c of
    T(z - tau V_c(z)) + tau with multilinear interpolation.  The step tau
    is chosen so that the move crosses ``step_factor`` grid cells along
    the direction of motion (grids may be strongly anisotropic); two step
    lengths accelerate propagation.  Accuracy is first order in the grid
    spacing.

    Value iteration only lowers values, so seeds must be upper bounds; a
    ``seed_cells``-wide index neighborhood of p is seeded with direct
    solver values (the conical vertex of the distance cannot grow
    accurately out of a single voxel).
    """
    kernel = _FrameKernel(S.frame)
    res = box.resolution_tuple(resolution)
    spacing = box.spacing(res)
    lo = np.asarray(box.lo)
    centers = box.centers(res)
    shape = tuple(res)

    F = kernel.F(centers)  # (n_vox, m, n)
    dirs = _unit_directions(kernel.m, n_dirs)

    T = np.full(centers.shape[0], BIG)
    d0 = centers - np.asarray(p, dtype=float)
    # exact-span seeding: straight-line controls where the displacement lies
    # in the frame span (near-field, so the frozen-field error is O(h^2))
    seed_radius = (seed_cells + 0.5) * np.linalg.norm(spacing)
    near_idx = np.flatnonzero(np.linalg.norm(d0, axis=1) <= seed_radius)
    solver_targets = []
    if near_idx.size:
        A = F[near_idx].swapaxes(-1, -2)  # (k, n, m)
        sol = np.einsum("kmn,kn->km", np.linalg.pinv(A, rcond=1e-6), d0[near_idx])
        resid = np.linalg.norm(
            np.einsum("knm,km->kn", A, sol) - d0[near_idx], axis=1
        )
        ok = resid <= 1e-9 + 1e-6 * np.linalg.norm(d0[near_idx], axis=1)
        T[near_idx[ok]] = np.linalg.norm(sol[ok], axis=1)
        solver_targets = near_idx[~ok]
    if len(solver_targets):
        opts = seed_opts or SolverOptions(
            restarts=2, fixed_n=16, maxiter=80, mu_schedule=(1e3, 1e5)
        )
        starts = np.broadcast_to(
            np.asarray(p, dtype=float), (len(solver_targets), kernel.n)
        )
        for j, resu in enumerate(distance_many(S, starts, centers[solver_targets], opts)):
            if resu.path.endpoint_gap <= 100 * opts.endpoint_tol:
                T[solver_targets[j]] = resu.value
    if not np.any(T < BIG):
        # degenerate fallback: anchor the nearest voxel
        T[np.argmin(np.linalg.norm(d0, axis=1))] = 0.0

    moves = []
    for c_vec in dirs:
        V = np.einsum("m,kmn->kn", c_vec, F)
        cells_per_unit = np.max(np.abs(V) / spacing, axis=1)  # index cells / time
        with np.errstate(divide="ignore", invalid="ignore"):
            for sf in step_factors:
                tau = np.where(cells_per_unit > 1e-12, sf / cells_per_unit, np.inf)
                target = centers - tau[:, None] * V
                idx = (target - lo) / spacing - 0.5
                usable = np.isfinite(tau) & box.contains(target)
                moves.append((idx.T.copy(), np.where(usable, tau, np.inf)))

    Tg = T.reshape(shape)
    for _ in range(max_sweeps):
        best = Tg.reshape(-1).copy()
        for idx, tau in moves:
            cand = ndimage.map_coordinates(
                Tg, idx, order=1, mode="constant", cval=BIG
            )
            np.minimum(best, cand + tau, out=best)
        change = np.max(Tg.reshape(-1) - best)
        Tg = best.reshape(shape)
        if change < tol:
            break
    return Tg


@dataclass(frozen=True)
class BallMask:
    """Voxelized CC ball with an unknown mask for unconverged voxels."""

    box: Box
    resolution: tuple
    radius: float
    inside: np.ndarray
    unknown: np.ndarray
    distance_field: np.ndarray
    refined: int
    unknown_count: int

    @property
    def volume(self):
        return float(np.sum(self.inside)) * self.box.voxel_volume(self.resolution)

    def run_length_encode(self):
        flat = self.inside.ravel()
        runs = []
        i = 0
        while i < flat.size:
            if flat[i]:
                j = i
                while j < flat.size and flat[j]:
                    j += 1
                runs.append([int(i), int(j - i)])
                i = j
            else:
                i += 1
        return runs


def ball_mask(
    S,
    p,
    r,
    box: Box,
    resolution,
    refine_band=0.06,
    max_refine=2500,
    solver_opts: Optional[SolverOptions] = None,
    n_dirs=16,
) -> BallMask:
    """Mask of voxels with d(p, center) < r.

    A sweep produces the distance field; voxels within ``refine_band * r``
    of the boundary are re-solved with the direct solver (reduced effort).
    Voxels whose refinement does not converge are marked unknown.
    """
    res = box.resolution_tuple(resolution)
    T = cc_distance_field(S, p, box, res, n_dirs=n_dirs, tol=1e-3 * r)
    flatT = T.ravel().copy()
    centers = box.centers(res)
    unknown = np.zeros(flatT.size, dtype=bool)

    band = np.abs(flatT - r) <= refine_band * r
    cand = np.flatnonzero(band)
    refined = 0
    if cand.size and max_refine > 0:
        if cand.size > max_refine:
            order = np.argsort(np.abs(flatT[cand] - r))
            cand = cand[order[:max_refine]]
        opts = solver_opts or SolverOptions(
            restarts=2, fixed_n=16, maxiter=80, mu_schedule=(1e3, 1e5)
        )
        starts = np.broadcast_to(np.asarray(p, dtype=float), (cand.size, len(p)))
        results = distance_many(S, starts, centers[cand], opts)
        for j, resu in enumerate(results):
            if resu.converged or resu.path.endpoint_gap <= 10 * opts.endpoint_tol:
                flatT[cand[j]] = resu.value
                refined += 1
            else:
                unknown[cand[j]] = True
    inside = (flatT < r) & ~unknown
    return BallMask(
        box=box,
        resolution=tuple(res),
        radius=float(r),
        inside=inside.reshape(res),
        unknown=unknown.reshape(res),
        distance_field=flatT.reshape(res),
        refined=refined,
        unknown_count=int(np.sum(unknown)),
    )


# -- tangent-cone convergence -------------------------------------------------


@dataclass(frozen=True)
class TangentReport:
    """Sampled sup |d_eps - d_hat| per epsilon (a lower bound on the true sup)."""

    eps_schedule: tuple
    sup_gaps: tuple
    per_pair_gaps: tuple  # tuple of tuples, one per epsilon
    pairs: np.ndarray
    excluded: tuple
    d_hat: tuple


def sample_tangent_ball(S_hat, R, count, dim, seed=0, box_shrink=0.8,
                        opts: Optional[SolverOptions] = None,
                        grading=None):
    """Quasi-random points verified to lie in the closed tangent ball K_R.

    Candidates come from the weighted box; membership d_hat(0, z) <= R is
    checked with the direct solver and rejected points are skipped.
    """
    from scipy.stats import qmc

    weights = grading.weights if grading is not None else (1,) * dim
    sampler = qmc.Halton(d=dim, scramble=False)
    raw = sampler.random(6 * count + 1)[1:]
    half = np.array([(box_shrink * R) ** w for w in weights])
    candidates = (2 * raw - 1) * half
    check_opts = opts or SolverOptions(restarts=3, fixed_n=24, maxiter=150, seed=seed)
    res = distance_many(S_hat, np.zeros_like(candidates), candidates, check_opts)
    keep = [
        cand
        for cand, r in zip(candidates, res)
        if r.converged and r.value <= R
    ]
    if len(keep) < count:
        raise NonConvergedError(
            f"only {len(keep)} of {count} sample points verified inside K_R"
        )
    return np.asarray(keep[:count])


def tangent_convergence(
    S,
    NA,
    R,
    eps_schedule=(0.5, 0.25, 0.125),
    pairs=20,
    opts: Optional[SolverOptions] = None,
    seed=0,
    box_shrink=0.8,
):
    """Compare rescaled distances d_eps with the nilpotent d_hat on sampled pairs.

    Pairs are sampled in the closed tangent ball K_R (membership verified by
    solving d_hat(0, .)); each d_eps solve reuses the d_hat optimal controls
    as a warm start with the same fixed discretization, so gap differences
    are resolved well below the absolute solver slack.
    """
    grading = NA.grading
    n = grading.n
    S_hat = NA.truncated_structure()
    if isinstance(pairs, int):
        pts = sample_tangent_ball(
            S_hat, R, 2 * pairs, n, seed=seed, box_shrink=box_shrink,
            grading=grading,
        )
        xs, ys = pts[:pairs], pts[pairs:]
        pair_arr = np.concatenate([xs, ys], axis=1)
    else:
        pair_arr = np.asarray(pairs, dtype=float)
        xs, ys = pair_arr[:, :n], pair_arr[:, n:]

    base_opts = opts or SolverOptions(restarts=6, maxiter=300)
    fixed_n = base_opts.fixed_n or 32
    hat_opts = replace(base_opts, fixed_n=fixed_n, seed=seed)

    hat_results = distance_many(S_hat, xs, ys, hat_opts)
    warm = np.stack([res.path.controls for res in hat_results])

    sup_gaps = []
    per_eps = []
    excluded = []
    for eps in eps_schedule:
        frame_eps = [dilation_rescale(X, grading, eps) for X in S.frame]
        S_eps = S.with_frame(frame_eps, name=f"{S.name}^eps={eps}")
        gaps = []
        bad = []
        results = _distance_many_warm(S_eps, xs, ys, hat_opts, warm)
        for i, (r_eps, r_hat) in enumerate(zip(results, hat_results)):
            if r_eps.converged and r_hat.converged:
                gaps.append(abs(r_eps.value - r_hat.value))
            else:
                bad.append(i)
        sup_gaps.append(max(gaps) if gaps else float("nan"))
        per_eps.append(tuple(gaps))
        excluded.append(tuple(bad))
    return TangentReport(
        eps_schedule=tuple(eps_schedule),
        sup_gaps=tuple(sup_gaps),
        per_pair_gaps=tuple(per_eps),
        pairs=pair_arr,
        excluded=tuple(excluded),
        d_hat=tuple(r.value for r in hat_results),
    )


def _distance_many_warm(S, xs, ys, opts, warm_controls):
    """distance_many restarted from a per-pair warm start (matched solves).

    All restarts stay in the warm start's basin (tiny perturbations only);
    comparing two structures through matched solves cancels the shared
    discretization bias in the difference of the values.
    """
    kernel = _FrameKernel(S.frame)
    starts = np.atleast_2d(np.asarray(xs, dtype=float))
    targets = np.atleast_2d(np.asarray(ys, dtype=float))
    P = starts.shape[0]
    R = 3
    rng = np.random.default_rng(opts.seed)
    N = opts.fixed_n or opts.n_start

    warm = np.asarray(warm_controls, dtype=float)
    if warm.shape[1] != N:
        warm = np.repeat(warm, N // warm.shape[1], axis=1)
    scale = np.maximum(
        np.linalg.norm(warm, axis=(1, 2), keepdims=True) / N**0.5, 0.1
    )
    inits = [warm]
    for j in range(R - 1):
        inits.append(warm + rng.standard_normal(warm.shape) * scale * 0.02 * (j + 1))
    c0 = np.stack(inits, axis=1).reshape(P * R, N, -1)

    opts2 = replace(opts, restarts=R, fixed_n=N)
    return _finish_solve(kernel, starts, targets, c0, opts2)


def _finish_solve(kernel, starts, targets, c0, opts):
    P = starts.shape[0]
    R = opts.restarts
    x = np.repeat(starts, R, axis=0)
    t = np.repeat(targets, R, axis=0)
    c = c0
    for mu in opts.mu_schedule:
        shape = c.shape

        def fun(z, mu=mu, shape=shape):
            val, grad = _value_and_grad(kernel, z.reshape(shape), x, t, mu)
            return val, grad.ravel()

        res = minimize(
            fun,
            c.ravel(),
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": opts.maxiter,
                "maxfun": 4 * opts.maxiter,
                "ftol": opts.ftol,
                "gtol": opts.gtol,
            },
        )
        c = res.x.reshape(shape)
    N = c.shape[1]
    traj, _ = _rk4_forward(kernel, c, x, 1.0 / N, keep_stages=False)
    gap = np.linalg.norm(traj[-1] - t, axis=1)
    action = np.sum(c * c, axis=(1, 2)) / N
    gap_r = gap.reshape(P, R)
    act_r = np.where(np.isfinite(action), action, BIG).reshape(P, R)
    feas = gap_r <= opts.endpoint_tol
    penal = np.where(feas, act_r, BIG + gap_r)
    best = np.argmin(penal, axis=1)
    idx = np.arange(P) * R + best
    out = []
    for p in range(P):
        b = best[p]
        path = ControlPath(
            controls=c[idx[p]],
            trajectory=traj[:, idx[p], :],
            action=float(act_r[p, b]),
            endpoint_gap=float(gap_r[p, b]),
        )
        out.append(
            DistanceResult(
                value=float(math.sqrt(max(act_r[p, b], 0.0))),
                path=path,
                restarts_used=R,
                converged=bool(gap_r[p, b] <= opts.endpoint_tol),
            )
        )
    return out
