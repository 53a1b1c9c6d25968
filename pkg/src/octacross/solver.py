"""Convex solvers for normal-aligned octahedral frame fields.

Two backends:

* :func:`solve_direct_p2` -- p = 2 with hard alignment is an
  equality-constrained quadratic program, solved through its sparse KKT
  system.
* :func:`solve_conic` -- any p in [1, inf] and soft alignment
  ``||W_t f_t - u0|| <= eps``, solved by ADMM with exact per-face cone
  projections and per-edge proximal steps.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import SolveConfig
from .energy import Problem, evaluate_energy
from .sh_algebra import U0
from .variety import extract_crosses, project_frames, reconstruct

__all__ = [
    "SolverError",
    "SingularSystemError",
    "SolveReport",
    "solve_direct_p2",
    "solve_conic",
    "solve",
    "solve_with_degeneracy_loop",
    "write_trace_csv",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    """The KKT matrix is singular (e.g. a flat mesh with no prescribed frame)."""


@dataclass
class SolveReport:
    method: str
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    wall_time: float
    message: str = ""
    degeneracy_distances: list = field(default_factory=list)
    n_resolved: int = 0
    nondegenerate_fraction: float | None = None
    still_degenerate: list = field(default_factory=list)
    rounds: int = 0
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=float)


def write_trace_csv(report: SolveReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "primal_residual", "dual_residual", "objective"])
        for row in report.trace:
            w.writerow([row[0]] + [f"{x:.17g}" for x in row[1:]])


def _full_field(problem: Problem, free_values: np.ndarray, free: np.ndarray) -> np.ndarray:
    f = np.zeros((problem.n_faces, 9))
    f[problem.prescribed_faces] = problem.prescribed_frames
    f[free] = free_values.reshape(-1, 9)
    return f


def _laplacian(problem: Problem, weights=None) -> sp.csr_matrix:
    d = problem.difference_matrix()
    w = problem.edge_weights if weights is None else weights
    return (d.T @ sp.diags(w) @ d).tocsr()


# --- direct path ----------------------------------------------------------------


def solve_direct_p2(problem: Problem, config: SolveConfig | None = None):
    """Exact minimizer of ``sum w ||f_t1 - f_t2||^2`` subject to ``W f = u``.

    Solves ``[2 L, W^T; W, 0] [f; lam] = [b; u]`` restricted to the free
    faces, where ``L`` is the 9-channel weighted dual Laplacian and ``b``
    carries the coupling to prescribed faces. The constraints are eliminated
    through their null space before factoring, and the full KKT residual is
    checked afterwards.
    """
    config = config or SolveConfig()
    if problem.p != 2.0 or problem.epsilon != 0.0:
        raise ValueError("direct solve requires p = 2 and epsilon = 0")
    t0 = time.perf_counter()
    free = problem.free_faces
    nfree = len(free)
    if nfree == 0:
        f = _full_field(problem, np.zeros(0), free)
        obj = evaluate_energy(problem, f)
        rep = SolveReport("direct", True, 0, 0.0, 0.0, obj, time.perf_counter() - t0,
                          "all faces prescribed")
        return f, rep

    lap = _laplacian(problem)
    pres = problem.prescribed_faces
    eye9 = sp.identity(9, format="csr")
    l_ff = sp.kron(lap[free][:, free], eye9, format="csr")
    w_f = sp.block_diag(list(problem.W[free]), format="csr")

    rhs_top = np.zeros(9 * nfree)
    if pres.size:
        l_fp = lap[free][:, pres]
        rhs_top = -2.0 * (l_fp @ problem.prescribed_frames).reshape(-1)
    u = np.tile(U0, nfree)

    # W_t has orthonormal rows, so the constraint set of face t is
    # f_t = B_t y_t + c_t with B_t spanning its kernel; eliminating it leaves
    # an SPD system of size 2 * nfree instead of the 16 * nfree KKT system
    rot_t = np.transpose(problem.local_rot[free], (0, 2, 1))
    basis = sp.block_diag(list(rot_t[:, :, [0, 8]]), format="csr")
    offset = (rot_t[:, :, 1:8] @ U0).reshape(-1)
    red = (basis.T @ (2.0 * l_ff) @ basis).tocsc()
    red_rhs = basis.T @ (rhs_top - 2.0 * (l_ff @ offset))
    try:
        lu = spla.splu(
            red,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        piv = np.abs(lu.U.diagonal())
        if piv.min() <= 1e-12 * piv.max():
            raise RuntimeError("numerically zero pivot")
        y = lu.solve(red_rhs)
    except RuntimeError as exc:
        raise SingularSystemError(
            f"KKT factorization failed ({exc}); the field is not determined by the "
            "constraints, prescribe a frame or use epsilon > 0"
        ) from exc
    x = basis @ y + offset
    lam = w_f @ (rhs_top - 2.0 * (l_ff @ x))
    # exactness check on the full KKT system
    resid = np.hypot(
        np.linalg.norm(2.0 * (l_ff @ x) + w_f.T @ lam - rhs_top),
        np.linalg.norm(w_f @ x - u),
    )
    rhs_norm = np.hypot(np.linalg.norm(rhs_top), np.linalg.norm(u))
    bound = config.tol_direct * (1.0 + rhs_norm)
    if not np.isfinite(resid) or resid > bound or not np.all(np.isfinite(y)):
        raise SingularSystemError(
            f"KKT residual {resid:.3g} exceeds {bound:.3g}; the system is singular or "
            "ill-conditioned, prescribe a frame or use epsilon > 0"
        )
    sol = x
    f = _full_field(problem, sol[: 9 * nfree], free)
    obj = evaluate_energy(problem, f)
    rep = SolveReport("direct", True, 1, float(resid), 0.0, obj, time.perf_counter() - t0)
    return f, rep


# --- proximal operators ---------------------------------------------------------


def _radial(v, r_new, norms):
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(norms > 0, r_new / norms, 0.0)
    return v * scale[:, None]


def _prox_group_l1(v, thresh):
    """prox of sum_e thresh_e ||z_e||."""
    norms = np.linalg.norm(v, axis=1)
    return _radial(v, np.maximum(norms - thresh, 0.0), norms)


def _prox_power(v, c, p):
    """prox of sum_e c_e ||z_e||^p, 1 < p < inf: radial root of r + c p r^(p-1) = a."""
    a = np.linalg.norm(v, axis=1)
    if p == 2.0:
        return v / (1.0 + 2.0 * c)[:, None]
    if p > 2.0:
        # convex increasing residual: Newton from r = a decreases monotonically
        r = a.copy()
        for _ in range(60):
            g = r + c * p * r ** (p - 1) - a
            dg = 1.0 + c * p * (p - 1) * r ** (p - 2)
            step = g / dg
            r = np.maximum(r - step, 0.0)
            if np.all(np.abs(step) <= 1e-15 * np.maximum(a, 1e-300)):
                break
    else:
        lo = np.zeros_like(a)
        hi = a.copy()
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            g = mid + c * p * mid ** (p - 1) - a
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g < 0, hi, mid)
        r = 0.5 * (lo + hi)
    return _radial(v, r, a)


def _project_weighted_group_l1_ball(x, w):
    """Euclidean projection onto ``{y : sum_e ||y_e|| / w_e <= 1}``."""
    a = np.linalg.norm(x, axis=1)
    if np.sum(a / w) <= 1.0:
        return x
    # find tau with sum_e max(a_e - tau / w_e, 0) / w_e = 1; piecewise linear in tau
    bp = a * w
    order = np.argsort(bp)[::-1]
    bps, a_s, w_s = bp[order], a[order], w[order]
    s1 = np.cumsum(a_s / w_s)
    s2 = np.cumsum(1.0 / w_s**2)
    tau_k = (s1 - 1.0) / s2
    # the active set is the largest k with tau_k < bps[k]
    nxt = np.r_[bps[1:], 0.0]
    k = np.flatnonzero((tau_k <= bps) & (tau_k >= nxt))
    tau = tau_k[k[0]] if k.size else tau_k[-1]
    b = np.maximum(a - tau / w, 0.0)
    return _radial(x, b, a)


def _prox_max(v, w, lam):
    """prox of lam * max_e w_e ||z_e||."""
    return v - lam * _project_weighted_group_l1_ball(v / lam, w)


def _prox_edges(v, problem: Problem, lam: float):
    p = problem.p
    w = problem.edge_weights
    if math.isinf(p):
        return _prox_max(v, w, lam)
    if p == 1.0:
        return _prox_group_l1(v, lam * w)
    return _prox_power(v, lam * w, p)


def _project_alignment(x, problem: Problem):
    """Project per-face frames onto ``||W_t x_t - u0|| <= eps``.

    The rotation to the local frame is orthogonal, so the projection only
    clamps the seven constrained local components into the ball.
    """
    rot = problem.local_rot
    loc = np.einsum("nij,nj->ni", rot, x)
    d = loc[:, 1:8] - U0
    if problem.epsilon == 0.0:
        loc[:, 1:8] = U0
    else:
        nd = np.linalg.norm(d, axis=1)
        scale = np.minimum(1.0, problem.epsilon / np.maximum(nd, 1e-300))
        loc[:, 1:8] = U0 + d * scale[:, None]
    return np.einsum("nji,nj->ni", rot, loc)


# --- conic path ----------------------------------------------------------------


def solve_conic(problem: Problem, config: SolveConfig | None = None, *, trace_every: int = 0):
    """ADMM for ``min E_p(f)`` under cone alignment and prescribed frames.

    Splitting: ``z = D f`` carries the edge differences (proximal step on
    the l_p aggregation, taken in its equivalent separable p-th power form
    for 1 < p < inf) and ``y = f`` carries the per-face alignment cones.
    The f-update solves ``(D^T D + I) f = rhs`` with a factorization reused
    for every iteration. Returns the last cone-feasible iterate; the report
    is flagged non-converged when ``max_iter`` is hit.
    """
    config = config or SolveConfig(p=problem.p, epsilon=problem.epsilon)
    t0 = time.perf_counter()
    n = problem.n_faces
    free = problem.free_faces
    pres = problem.prescribed_faces

    if len(free) == 0:
        f = _full_field(problem, np.zeros(0), free)
        return f, SolveReport("conic", True, 0, 0.0, 0.0, evaluate_energy(problem, f),
                              time.perf_counter() - t0, "all faces prescribed")

    dmat = problem.difference_matrix()
    dtd = (dmat.T @ dmat).tocsr()
    sys_ff = (dtd[free][:, free] + sp.identity(len(free))).tocsc()
    factor = spla.splu(sys_ff)
    dtd_fp = dtd[free][:, pres] if pres.size else None

    x = reconstruct(problem.normals, np.zeros(n))
    x[pres] = problem.prescribed_frames
    y = _project_alignment(x, problem)
    y[pres] = problem.prescribed_frames
    z = dmat @ x
    u = np.zeros_like(z)
    v = np.zeros_like(y)

    rho = config.rho
    if rho is None:
        rho = float(np.median(problem.edge_weights)) if problem.n_edges else 1.0
    alpha = 1.6
    converged = False
    r_norm = s_norm = np.inf
    trace = []
    it = 0
    scale_ref = 1.0 + np.sqrt(n)

    for it in range(1, config.max_iter + 1):
        rhs = dmat.T @ (z - u) + (y - v)
        rhs_f = rhs[free]
        if dtd_fp is not None:
            rhs_f = rhs_f - dtd_fp @ problem.prescribed_frames
        x_f = factor.solve(rhs_f)
        x[free] = x_f

        dx = dmat @ x
        dx_hat = alpha * dx + (1 - alpha) * z
        x_hat = alpha * x + (1 - alpha) * y

        z_old, y_old = z, y
        z = _prox_edges(dx_hat + u, problem, 1.0 / rho)
        y = _project_alignment(x_hat + v, problem)
        y[pres] = problem.prescribed_frames

        u = u + dx_hat - z
        v = v + x_hat - y

        if it % 10 == 0 or it == config.max_iter:
            r = np.sqrt(np.sum((dx - z) ** 2) + np.sum((x - y)[free] ** 2))
            s_vec = dmat.T @ (z - z_old) + (y - y_old)
            s = rho * np.linalg.norm(s_vec[free])
            r_norm = r / max(scale_ref, np.linalg.norm(dx), np.linalg.norm(x))
            s_norm = s / max(scale_ref, rho * np.linalg.norm((dmat.T @ u + v)[free]))
            if trace_every and it % trace_every == 0:
                trace.append((it, r_norm, s_norm, evaluate_energy(problem, y)))
            if r_norm <= config.tol_primal and s_norm <= config.tol_dual:
                converged = True
                break
            if it % 50 == 0:
                # residual balancing; the f-system does not depend on rho
                if r_norm > 10 * s_norm:
                    rho *= 2.0
                    u /= 2.0
                    v /= 2.0
                elif s_norm > 10 * r_norm:
                    rho /= 2.0
                    u *= 2.0
                    v *= 2.0

    obj = evaluate_energy(problem, y)
    msg = "" if converged else f"max_iter={config.max_iter} reached"
    if not converged:
        log.warning("conic solve did not converge: primal %.3g dual %.3g", r_norm, s_norm)
    rep = SolveReport("conic", converged, it, float(r_norm), float(s_norm), obj,
                      time.perf_counter() - t0, msg, trace=trace)
    return y, rep


def solve(problem: Problem, config: SolveConfig | None = None, *, method: str = "auto"):
    """Dispatch to the direct path when p = 2 and eps = 0, else ADMM."""
    config = config or SolveConfig(p=problem.p, epsilon=problem.epsilon)
    if method == "auto":
        method = "direct" if problem.p == 2.0 and problem.epsilon == 0.0 else "conic"
    if method == "direct":
        return solve_direct_p2(problem, config)
    if method == "conic":
        return solve_conic(problem, config)
    raise ValueError(f"unknown method {method!r}")


# --- degeneracy handling ------------------------------------------------------


def _normalized_distances(f, seed):
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    q = f / np.where(norms > 0, norms, 1.0)
    proj, _, dist, _ = project_frames(q, seed=seed)
    return proj, dist


def solve_with_degeneracy_loop(problem: Problem, config: SolveConfig | None = None,
                               *, method: str = "auto"):
    """Solve, then re-solve degenerate faces with the others pinned.

    A face is degenerate when its normalized frame lies farther than
    ``config.degeneracy_threshold`` from the octahedral variety. Each round
    pins every non-degenerate face to its projection (for hard alignment,
    the unit-scale frame with the same twist) and solves again for the
    degenerate ones. Output frames are projected onto the variety.
    """
    config = config or SolveConfig(p=problem.p, epsilon=problem.epsilon)
    t0 = time.perf_counter()
    f, rep = solve(problem, config, method=method)
    f = f.reshape(problem.n_faces, 9)
    _, dist = _normalized_distances(f, config.seed)
    user_faces = set(problem.prescribed_faces.tolist())
    resolved: set = set()
    rounds = 0
    reports = [rep]

    for _ in range(config.resolve_rounds):
        degenerate = dist > config.degeneracy_threshold
        degenerate[problem.prescribed_faces] = False
        if not degenerate.any():
            break
        rounds += 1
        resolved |= set(np.flatnonzero(degenerate).tolist())
        pin = np.flatnonzero(~degenerate)
        pin = np.array([t for t in pin if t not in user_faces], dtype=np.int64)
        if problem.epsilon == 0.0:
            theta, _, _ = extract_crosses(f[pin], problem.normals[pin])
            pinned = reconstruct(problem.normals[pin], theta)
        else:
            pinned, _, _, _ = project_frames(f[pin], seed=config.seed)
            res = np.linalg.norm(np.einsum("nij,nj->ni", problem.W[pin], pinned) - U0, axis=1)
            ok = res <= problem.epsilon + 1e-9
            pin, pinned = pin[ok], pinned[ok]
        faces = np.concatenate([problem.prescribed_faces, pin])
        frames = np.concatenate([problem.prescribed_frames, pinned])
        order = np.argsort(faces)
        sub = replace(problem, prescribed_faces=faces[order], prescribed_frames=frames[order])
        f_new, rep_new = solve(sub, config, method=method)
        reports.append(rep_new)
        f = f_new.reshape(problem.n_faces, 9)
        _, dist = _normalized_distances(f, config.seed)

    still = dist > config.degeneracy_threshold
    still[problem.prescribed_faces] = False
    proj, _ = _normalized_distances(f, config.seed)
    proj[problem.prescribed_faces] = problem.prescribed_frames
    if problem.epsilon == 0.0:
        # projections of aligned frames are aligned; re-impose it exactly
        keep = np.ones(problem.n_faces, dtype=bool)
        keep[problem.prescribed_faces] = False
        theta, _, _ = extract_crosses(proj[keep], problem.normals[keep])
        proj[keep] = reconstruct(problem.normals[keep], theta)

    final = SolveReport(
        method=f"{reports[0].method}+degeneracy",
        converged=all(r.converged for r in reports),
        iterations=sum(r.iterations for r in reports),
        primal_residual=reports[-1].primal_residual,
        dual_residual=reports[-1].dual_residual,
        objective=evaluate_energy(problem, proj),
        wall_time=time.perf_counter() - t0,
        message="; ".join(r.message for r in reports if r.message),
        degeneracy_distances=dist.tolist(),
        n_resolved=len(resolved),
        nondegenerate_fraction=float(1.0 - still.mean()),
        still_degenerate=np.flatnonzero(still).tolist(),
        rounds=rounds,
    )
    return proj, final

