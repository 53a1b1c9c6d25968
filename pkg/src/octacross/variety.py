"""Projection onto the octahedral variety and cross extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .sh_algebra import (
    L,
    SQRT_5_12,
    axis_angle_to,
    canonical_frame,
    exp_rotation,
    reference_lobe,
    twist_z,
)

__all__ = [
    "DEGENERACY_THRESHOLD",
    "Projection",
    "ExtractedCross",
    "DegenerateCrossError",
    "symmetry_starts",
    "project_to_variety",
    "project_frames",
    "degeneracy_distance",
    "extract_cross",
    "extract_crosses",
    "reconstruct",
]

DEGENERACY_THRESHOLD = 0.665

_F0 = canonical_frame()
# symmetrized second derivatives (Li Lj + Lj Li) / 2
_LL = 0.5 * (np.einsum("iab,jbc->ijac", L, L) + np.einsum("jab,ibc->ijac", L, L))


class DegenerateCrossError(ValueError):
    """The tangential part of a frame is too small to define a cross."""


@dataclass(frozen=True)
class Projection:
    frame: np.ndarray
    rotvec: np.ndarray
    distance: float
    low_confidence: bool


@dataclass(frozen=True)
class ExtractedCross:
    normal: np.ndarray
    theta: float
    scale: float
    dirs: np.ndarray  # (2, 3)


def symmetry_starts() -> Rotation:
    """24 deterministic starting rotations spread over SO(3) / O.

    Half-angle and quarter-angle turns about the 13 rotation axes of the
    cube, plus the identity. Rotations by the full symmetry angle would
    leave f0 unchanged and are useless as starts.
    """
    face = np.eye(3)
    diag = np.array([[1, 1, 1], [1, 1, -1], [1, -1, 1], [-1, 1, 1]]) / np.sqrt(3.0)
    edge = np.array(
        [[1, 1, 0], [1, -1, 0], [1, 0, 1], [1, 0, -1], [0, 1, 1], [0, 1, -1]]
    ) / np.sqrt(2.0)
    vecs = [np.zeros(3)]
    vecs += [a * np.pi / 4 for a in face]
    vecs += [a * np.pi / 3 for a in diag]
    vecs += [a * np.pi / 2 for a in edge]
    vecs += [a * np.pi / 8 for a in face]
    vecs += [a * np.pi / 6 for a in diag]
    vecs += [a * np.pi / 4 for a in edge[:3]]
    return Rotation.from_rotvec(np.array(vecs))


def _starts(seed: int, n_random: int) -> Rotation:
    rots = [symmetry_starts()]
    if n_random:
        rots.append(Rotation.random(n_random, random_state=np.random.default_rng(seed)))
    return Rotation.concatenate(rots)


def _frames_of(rot: Rotation) -> np.ndarray:
    return exp_rotation(None, rot=rot) @ _F0


def project_frames(
    q,
    *,
    seed: int = 0,
    n_random: int = 8,
    refine_top: int = 4,
    init: Rotation | None = None,
    max_iter: int = 100,
    gtol: float = 1e-10,
):
    """Batched nearest point on the octahedral variety.

    Maximizes ``q . exp(v.L) f0`` over rotations. Every start is scored,
    and the best ``refine_top`` per input (plus ``init`` when given) are
    refined by a safeguarded Riemannian Newton iteration acting by left
    multiplication on the rotation.

    Returns ``(frames, rotations, distances, low_confidence)`` with
    ``rotations`` a ``Rotation`` of length N.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = len(q)
    starts = _starts(seed, n_random)
    g_starts = _frames_of(starts)
    scores = q @ g_starts.T
    k = min(refine_top, len(starts))
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]

    mats = starts.as_matrix()[top]  # (n, k, 3, 3)
    if init is not None:
        mats = np.concatenate([mats, init.as_matrix().reshape(n, 1, 3, 3)], axis=1)
        k += 1
    qq = np.repeat(q, k, axis=0)
    rot = Rotation.from_matrix(mats.reshape(-1, 3, 3))
    g = _frames_of(rot)
    phi = np.einsum("ij,ij->i", qq, g)
    active = np.ones(len(qq), dtype=bool)

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ga, qa = g[idx], qq[idx]
        lg = np.einsum("iab,nb->nia", L, ga)
        grad = np.einsum("nia,na->ni", lg, qa)
        done = np.linalg.norm(grad, axis=1) < gtol
        active[idx[done]] = False
        idx, ga, qa, grad = idx[~done], ga[~done], qa[~done], grad[~done]
        if idx.size == 0:
            break
        hess = np.einsum("ijab,nb,na->nij", _LL, ga, qa)
        lam, vec = np.linalg.eigh(hess)
        # saddle-free Newton for ascent: divide by |eigenvalue|
        coef = np.einsum("nji,nj->ni", vec, grad) / np.maximum(np.abs(lam), 1e-8)
        step = np.einsum("nji,ni->nj", vec, coef)
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        step *= np.minimum(1.0, 0.5 / np.maximum(norm, 1e-300))

        rot_a = Rotation.from_matrix(rot.as_matrix()[idx])
        accepted = np.zeros(idx.size, dtype=bool)
        new_mats = rot_a.as_matrix()
        new_g = ga.copy()
        new_phi = phi[idx].copy()
        for _ in range(30):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            trial = Rotation.from_rotvec(step[todo]) * Rotation.from_matrix(new_mats[todo])
            tg = _frames_of(trial)
            tphi = np.einsum("ij,ij->i", qa[todo], tg)
            ok = tphi >= phi[idx[todo]] - 1e-15
            sel = todo[ok]
            new_mats[sel] = trial.as_matrix()[ok]
            new_g[sel] = tg[ok]
            new_phi[sel] = tphi[ok]
            accepted[sel] = True
            step[todo[~ok]] *= 0.5
        stalled = ~accepted
        all_mats = rot.as_matrix()
        all_mats[idx] = new_mats
        rot = Rotation.from_matrix(all_mats)
        g[idx] = new_g
        phi[idx] = new_phi
        active[idx[stalled]] = False

    phi = phi.reshape(n, k)
    best = np.argmax(phi, axis=1)
    flat = np.arange(n) * k + best
    frames = g[flat]
    rots = Rotation.from_matrix(rot.as_matrix()[flat])
    dist = np.linalg.norm(frames - q, axis=1)
    low = np.linalg.norm(q, axis=1) < 1e-8
    return frames, rots, dist, low


def project_to_variety(q, **kwargs) -> Projection:
    """Nearest point ``exp(v.L) f0`` to a single 9-vector ``q``.

    Flags ``low_confidence`` when ``||q|| < 1e-8``; every point of the
    variety is then equally near and the first start wins.
    """
    frames, rots, dist, low = project_frames(np.asarray(q, dtype=float)[None], **kwargs)
    return Projection(frames[0], rots.as_rotvec()[0], float(dist[0]), bool(low[0]))


def degeneracy_distance(q, *, normalized: bool = False, **kwargs):
    """Distance ``||proj(q) - q||`` from ``q`` to the variety; broadcasts over rows.

    With ``normalized=True`` the input is scaled to unit norm first, which is
    the form compared against ``DEGENERACY_THRESHOLD``: a normal-aligned
    frame whose tangential part vanishes sits at sqrt(5/12) ~ 0.6455 in the
    raw metric but at sqrt(2 - 2 sqrt(7/12)) ~ 0.687 after normalization.
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    if normalized:
        norm = np.linalg.norm(q2, axis=1, keepdims=True)
        q2 = q2 / np.where(norm > 0, norm, 1.0)
    _, _, dist, _ = project_frames(q2, **kwargs)
    return float(dist[0]) if single else dist


# --- cross extraction -----------------------------------------------------


def reconstruct(n, theta, scale=1.0) -> np.ndarray:
    """Frame aligned to ``n`` with twist ``theta`` and tangential scale ``scale``."""
    lobe = reference_lobe()
    theta = np.asarray(theta, dtype=float)
    scale = np.asarray(scale, dtype=float)
    local = lobe + scale[..., None] * (twist_z(theta) - lobe)
    return np.einsum("...ij,...j->...i", exp_rotation(axis_angle_to(n)), local)


def extract_crosses(frames, normals):
    """Vectorized cross extraction.

    Returns ``(theta, scale, dirs)``: twist in [0, pi/2), tangential scale,
    and the two tangent directions with shape (N, 2, 3).
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    v = axis_angle_to(normals)
    local = np.einsum("nij,nj->ni", exp_rotation(-v), frames)
    a, b = local[:, 0], local[:, 8]
    scale = np.hypot(a, b) / SQRT_5_12
    theta = np.mod(np.arctan2(a, b) / 4.0, np.pi / 2)
    theta = np.where(np.isclose(theta, np.pi / 2, rtol=0, atol=1e-14), 0.0, theta)
    rmat = Rotation.from_rotvec(v).as_matrix()
    c, s = np.cos(theta), np.sin(theta)
    zero = np.zeros_like(c)
    d1 = np.stack([c, s, zero], axis=-1)
    d2 = np.stack([-s, c, zero], axis=-1)
    dirs = np.stack(
        [np.einsum("nij,nj->ni", rmat, d1), np.einsum("nij,nj->ni", rmat, d2)], axis=1
    )
    return theta, scale, dirs


def extract_cross(f, n, *, min_scale: float = 1e-6) -> ExtractedCross:
    """Twist, tangential scale and tangent directions of a normal-aligned frame."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    theta, scale, dirs = extract_crosses(f, n)
    if scale[0] < min_scale:
        raise DegenerateCrossError(f"tangential scale {scale[0]:.3g} below {min_scale:g}")
    return ExtractedCross(normal=n, theta=float(theta[0]), scale=float(scale[0]), dirs=dirs[0])
