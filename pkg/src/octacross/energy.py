"""Discrete E_p objective and alignment/prescription constraint blocks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .config import SolveConfig
from .mesh import SurfaceMesh
from .sh_algebra import SQRT_7_12, U0, axis_angle_to, exp_rotation
from .variety import degeneracy_distance

__all__ = [
    "AssemblyError",
    "Problem",
    "assemble",
    "edge_differences",
    "evaluate_energy",
    "energy_power",
    "energy_power_gradient",
    "folded_weights",
]


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class Problem:
    """Per-face frame variables, edge terms, alignment blocks and prescriptions.

    ``local_rot[t]`` is the full 9x9 ``exp(-v_n . L)`` for face ``t``; its rows
    1..7 form the alignment block ``W[t]``.
    """

    n_faces: int
    normals: np.ndarray
    edge_faces: np.ndarray
    edge_weights: np.ndarray
    local_rot: np.ndarray
    epsilon: float
    p: float
    prescribed_faces: np.ndarray
    prescribed_frames: np.ndarray

    @property
    def W(self) -> np.ndarray:
        return self.local_rot[:, 1:8, :]

    @property
    def u0(self) -> np.ndarray:
        return U0.copy()

    @property
    def n_edges(self) -> int:
        return len(self.edge_faces)

    @property
    def free_faces(self) -> np.ndarray:
        mask = np.ones(self.n_faces, dtype=bool)
        mask[self.prescribed_faces] = False
        return np.flatnonzero(mask)

    @property
    def n_equality_rows(self) -> int:
        rows = 9 * len(self.prescribed_faces)
        if self.epsilon == 0.0:
            rows += 7 * self.n_faces
        return rows

    def W_matrix(self) -> sp.csr_matrix:
        """Block-diagonal 7n x 9n alignment operator."""
        return sp.block_diag(list(self.W), format="csr")

    def u_vector(self) -> np.ndarray:
        return np.tile(U0, self.n_faces)

    def difference_matrix(self) -> sp.csr_matrix:
        """Edge-by-face incidence D with (D f)_e = f_t1 - f_t2 (scalar channel)."""
        m = self.n_edges
        rows = np.repeat(np.arange(m), 2)
        cols = self.edge_faces.reshape(-1)
        vals = np.tile([1.0, -1.0], m)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n_faces))

    def alignment_residual(self, f) -> np.ndarray:
        """Per-face ``||W_t f_t - u0||``."""
        f = np.asarray(f, dtype=float).reshape(self.n_faces, 9)
        return np.linalg.norm(np.einsum("nij,nj->ni", self.W, f) - U0, axis=1)

    def to_json(self) -> str:
        """Debug dump with indices, weights and blocks."""
        return json.dumps(
            {
                "n_faces": self.n_faces,
                "p": "inf" if math.isinf(self.p) else self.p,
                "epsilon": self.epsilon,
                "edges": self.edge_faces.tolist(),
                "weights": self.edge_weights.tolist(),
                "normals": self.normals.tolist(),
                "W_blocks": self.W.tolist(),
                "u0": U0.tolist(),
                "prescribed": {
                    str(int(t)): fr.tolist()
                    for t, fr in zip(self.prescribed_faces, self.prescribed_frames)
                },
            },
            indent=1,
        )


def _normalize_prescribed(prescribed, n_faces):
    if prescribed is None:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 9))
    items = list(prescribed.items()) if isinstance(prescribed, dict) else list(prescribed)
    faces = np.array([int(t) for t, _ in items], dtype=np.int64)
    frames = np.array([np.asarray(fr, dtype=float) for _, fr in items]).reshape(-1, 9)
    if len(np.unique(faces)) != len(faces):
        raise AssemblyError("a face is prescribed more than once")
    if faces.size and (faces.min() < 0 or faces.max() >= n_faces):
        raise AssemblyError("prescribed face index out of range")
    order = np.argsort(faces)
    return faces[order], frames[order]


def assemble(
    mesh: SurfaceMesh,
    config: SolveConfig | None = None,
    prescribed=None,
    *,
    variety_tol: float = 1e-6,
    alignment_tol: float = 1e-8,
) -> Problem:
    """Build the optimization problem for ``mesh``.

    ``prescribed`` maps face index to a 9-vector on the octahedral variety
    (dict or iterable of pairs). Prescribed frames must also satisfy their
    own face's alignment constraint within ``epsilon + alignment_tol``.
    """
    config = config or SolveConfig()
    if not 0.0 <= config.epsilon < SQRT_7_12:
        raise AssemblyError("epsilon >= ||u0|| makes the alignment constraint vacuous")
    normals = mesh.face_normals
    local_rot = exp_rotation(-axis_angle_to(normals))
    faces, frames = _normalize_prescribed(prescribed, mesh.n_faces)

    if faces.size:
        off = np.atleast_1d(degeneracy_distance(frames))
        bad = np.flatnonzero(off > variety_tol)
        if bad.size:
            raise AssemblyError(
                f"prescribed frame on face {int(faces[bad[0]])} is off the octahedral "
                f"variety by {off[bad[0]]:.3g}"
            )
        res = np.linalg.norm(
            np.einsum("nij,nj->ni", local_rot[faces, 1:8, :], frames) - U0, axis=1
        )
        bad = np.flatnonzero(res > config.epsilon + alignment_tol)
        if bad.size:
            raise AssemblyError(
                f"prescribed frame on face {int(faces[bad[0]])} violates its normal "
                f"alignment by {res[bad[0]]:.3g}"
            )

    for arr in (local_rot, faces, frames):
        arr.setflags(write=False)
    return Problem(
        n_faces=mesh.n_faces,
        normals=normals,
        edge_faces=mesh.edge_faces,
        edge_weights=mesh.edge_weights,
        local_rot=local_rot,
        epsilon=float(config.epsilon),
        p=float(config.p),
        prescribed_faces=faces,
        prescribed_frames=frames,
    )


def folded_weights(weights, p: float) -> np.ndarray:
    """Per-edge scale applied inside the l_p aggregation.

    ``w^(1/p)`` for finite p, so that the p-th power of the aggregate is
    ``sum w ||d||^p``; for p = inf the weights enter linearly.
    """
    weights = np.asarray(weights, dtype=float)
    return weights if math.isinf(p) else weights ** (1.0 / p)


def edge_differences(problem: Problem, f) -> np.ndarray:
    f = np.asarray(f, dtype=float).reshape(problem.n_faces, 9)
    return f[problem.edge_faces[:, 0]] - f[problem.edge_faces[:, 1]]


def _row_norms(d: np.ndarray) -> np.ndarray:
    """Row norms that neither underflow nor overflow for extreme magnitudes."""
    scale = np.abs(d).max(axis=1)
    safe = np.where(scale > 0, scale, 1.0)
    return scale * np.linalg.norm(d / safe[:, None], axis=1)


def evaluate_energy(problem: Problem, f, p: float | None = None) -> float:
    """``(sum w ||f_t1 - f_t2||^p)^(1/p)``, or ``max w ||f_t1 - f_t2||`` for p = inf."""
    p = problem.p if p is None else p
    if problem.n_edges == 0:
        return 0.0
    norms = _row_norms(edge_differences(problem, f))
    terms = folded_weights(problem.edge_weights, p) * norms
    if math.isinf(p):
        return float(terms.max())
    if p == 1.0:
        return float(terms.sum())
    # scale by the max term to avoid overflow for large p
    top = terms.max()
    if top == 0.0:
        return 0.0
    return float(top * np.sum((terms / top) ** p) ** (1.0 / p))


def energy_power(problem: Problem, f, p: float | None = None) -> float:
    """``sum w ||f_t1 - f_t2||^p`` (finite p)."""
    p = problem.p if p is None else p
    norms = np.linalg.norm(edge_differences(problem, f), axis=1)
    return float(np.sum(problem.edge_weights * norms**p))


def energy_power_gradient(problem: Problem, f, p: float | None = None) -> np.ndarray:
    """Gradient of :func:`energy_power` with respect to the flat 9n vector."""
    p = problem.p if p is None else p
    d = edge_differences(problem, f)
    norms = np.linalg.norm(d, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = p * problem.edge_weights * np.where(norms > 0, norms ** (p - 2.0), 0.0)
    if p >= 2:
        scale = p * problem.edge_weights * norms ** (p - 2.0)
    g = scale[:, None] * d
    out = np.zeros((problem.n_faces, 9))
    np.add.at(out, problem.edge_faces[:, 0], g)
    np.add.at(out, problem.edge_faces[:, 1], -g)
    return out.reshape(-1)
