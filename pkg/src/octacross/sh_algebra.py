"""Band-4 spherical-harmonic algebra for octahedral frames.

Coefficients are ordered m = -4, ..., 4 in the standard real basis
(``(-1)^m`` phase on the complex harmonics). The angular-momentum matrices
below generate active rotations of band-4 functions in that basis, so
``exp_rotation(v) @ f`` is the frame ``f`` rotated by the 3x3 rotation
``exp([v])``.
"""

from __future__ import annotations

from math import factorial

import numpy as np
from scipy.spatial.transform import Rotation

__all__ = [
    "LX",
    "LY",
    "LZ",
    "L",
    "COMMUTATOR_SIGN",
    "SQRT_7_12",
    "SQRT_5_12",
    "GRAM_CONSTANT",
    "LOBE_RESCALE",
    "canonical_frame",
    "reference_lobe",
    "lobe_along",
    "exp_rotation",
    "exp_z",
    "wigner_d_y",
    "zyz_angles",
    "twist_z",
    "axis_angle_to",
    "alignment_operator",
    "U0",
    "lobe_dot",
    "lobe_dist_sq",
    "lobe_dot_rescaled",
    "lobe_dist_sq_rescaled",
    "crease_energy",
]

SQRT_7_12 = np.sqrt(7.0 / 12.0)
SQRT_5_12 = np.sqrt(5.0 / 12.0)

# g^T Li^T Lj g for every g on the octahedral variety
GRAM_CONSTANT = 20.0 / 3.0

# ratio between the sqrt(7/12) lobe (squared norm 7/12) and the 4/21 lobe
LOBE_RESCALE = 49.0 / 16.0


def _angular_momentum() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r2 = np.sqrt(2.0)
    r72 = np.sqrt(7.0 / 2.0)
    a = 3.0 / np.sqrt(2.0)
    r10 = np.sqrt(10.0)

    lx = np.zeros((9, 9))
    for (i, j), val in {
        (0, 7): -r2, (1, 6): -r72, (1, 8): -r2, (2, 5): -a,
        (2, 7): -r72, (3, 4): -r10, (3, 6): -a,
    }.items():
        lx[i, j] = val
        lx[j, i] = -val

    ly = np.zeros((9, 9))
    for (i, j), val in {
        (0, 1): r2, (1, 2): r72, (2, 3): a, (4, 5): -r10,
        (5, 6): -a, (6, 7): -r72, (7, 8): -r2,
    }.items():
        ly[i, j] = val
        ly[j, i] = -val

    lz = np.zeros((9, 9))
    for m in range(1, 5):
        lz[4 - m, 4 + m] = m
        lz[4 + m, 4 - m] = -m
    return lx, ly, lz


L = np.stack(_angular_momentum())
L.setflags(write=False)
LX, LY, LZ = L

# [Lx, Ly] = COMMUTATOR_SIGN * Lz (and cyclic); +1 means v -> v.L is a Lie
# algebra homomorphism from so(3) with [v] u = v x u.
COMMUTATOR_SIGN = 1
assert np.allclose(LX @ LY - LY @ LX, COMMUTATOR_SIGN * LZ, atol=1e-12)

U0 = np.array([0.0, 0.0, 0.0, SQRT_7_12, 0.0, 0.0, 0.0])
U0.setflags(write=False)


def canonical_frame() -> np.ndarray:
    """Axis-aligned octahedral frame f0 as a 9-vector."""
    f = np.zeros(9)
    f[4] = SQRT_7_12
    f[8] = SQRT_5_12
    return f


def reference_lobe() -> np.ndarray:
    """The z-aligned lobe l; f0 is the sum of its three axis rotations."""
    lobe = np.zeros(9)
    lobe[4] = SQRT_7_12
    return lobe


# --- rotation exponential -------------------------------------------------


def exp_z(alpha) -> np.ndarray:
    """Closed form of exp(alpha * Lz); broadcasts over ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.zeros(alpha.shape + (9, 9))
    out[..., 4, 4] = 1.0
    for m in range(1, 5):
        c = np.cos(m * alpha)
        s = np.sin(m * alpha)
        out[..., 4 - m, 4 - m] = c
        out[..., 4 - m, 4 + m] = s
        out[..., 4 + m, 4 - m] = -s
        out[..., 4 + m, 4 + m] = c
    return out


def _wigner_small_d_table(j: int) -> np.ndarray:
    """Coefficients C[m', m, k] with d^j_{m'm}(b) = sum_k C cos(b/2)^(2j-k) sin(b/2)^k."""
    n = 2 * j + 1
    table = np.zeros((n, n, 2 * j + 1))
    for mp in range(-j, j + 1):
        for m in range(-j, j + 1):
            pref = np.sqrt(
                float(factorial(j + mp) * factorial(j - mp) * factorial(j + m) * factorial(j - m))
            )
            for s in range(max(0, m - mp), min(j + m, j - mp) + 1):
                den = factorial(j + m - s) * factorial(s) * factorial(mp - m + s) * factorial(j - mp - s)
                k = mp - m + 2 * s
                table[mp + j, m + j, k] += (-1) ** (mp - m + s) * pref / den
    return table


def _complex_to_real() -> np.ndarray:
    """Unitary T with Y_real = T @ Y_complex (rows/cols ordered m = -4..4)."""
    t = np.zeros((9, 9), dtype=complex)
    t[4, 4] = 1.0
    h = 1.0 / np.sqrt(2.0)
    for m in range(1, 5):
        sign = (-1) ** m
        t[4 + m, 4 + m] = sign * h
        t[4 + m, 4 - m] = h
        t[4 - m, 4 + m] = sign * h / 1j
        t[4 - m, 4 - m] = -h / 1j
    return t


_D_TABLE = _wigner_small_d_table(4)
_T = _complex_to_real()


def _calibrate_wigner() -> tuple[np.ndarray, bool]:
    # Complex-basis conventions (row/column order, sign of beta) differ between
    # references; pick the one whose generator is LY.
    def real_d(beta, transpose):
        powers = _trig_powers(np.asarray(beta))
        d = np.einsum("...k,ijk->...ij", powers, _D_TABLE)
        if transpose:
            d = np.swapaxes(d, -1, -2)
        return (_T @ d @ _T.conj().T).real

    h = 1e-6
    for transpose in (False, True):
        gen = (real_d(h, transpose) - real_d(-h, transpose)) / (2 * h)
        if np.abs(gen - LY).max() < 1e-6:
            return _T, transpose
    raise RuntimeError("band-4 Wigner-d convention does not match LY")


def _trig_powers(beta: np.ndarray) -> np.ndarray:
    c = np.cos(beta / 2.0)
    s = np.sin(beta / 2.0)
    k = np.arange(9)
    return c[..., None] ** (8 - k) * s[..., None] ** k


_T, _D_TRANSPOSE = _calibrate_wigner()


def wigner_d_y(beta) -> np.ndarray:
    """exp(beta * Ly) from the band-4 Wigner small-d formula; broadcasts."""
    d = np.einsum("...k,ijk->...ij", _trig_powers(np.asarray(beta, dtype=float)), _D_TABLE)
    if _D_TRANSPOSE:
        d = np.swapaxes(d, -1, -2)
    return (_T @ d @ _T.conj().T).real


def zyz_angles(rot: Rotation) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angles with R = Rz(alpha) Ry(beta) Rz(gamma).

    Computed from the quaternion so the factorization stays accurate near
    beta = 0 and beta = pi.
    """
    x, y, z, w = np.moveaxis(rot.as_quat(), -1, 0)
    beta = 2.0 * np.arctan2(np.hypot(x, y), np.hypot(w, z))
    half_sum = np.arctan2(z, w)
    half_diff = np.arctan2(-x, y)
    return half_sum + half_diff, beta, half_sum - half_diff


def exp_rotation(v, rot: Rotation | None = None) -> np.ndarray:
    """Band-4 rotation matrix exp(v . L) for axis-angle ``v`` (shape (..., 3)).

    Factored as exp(a Lz) exp(b Ly) exp(c Lz) through ZYZ Euler angles. A
    precomputed ``Rotation`` may be passed instead of ``v``.
    """
    if rot is None:
        v = np.asarray(v, dtype=float)
        rot = Rotation.from_rotvec(v.reshape(-1, 3))
        batch_shape = v.shape[:-1]
    else:
        batch_shape = () if rot.single else (len(rot),)
    alpha, beta, gamma = zyz_angles(rot)
    out = exp_z(alpha) @ wigner_d_y(beta) @ exp_z(gamma)
    return out.reshape(batch_shape + (9, 9))


def twist_z(theta) -> np.ndarray:
    """exp(theta Lz) f0: the z-aligned frame twisted by ``theta``."""
    theta = np.asarray(theta, dtype=float)
    f = np.zeros(theta.shape + (9,))
    f[..., 0] = SQRT_5_12 * np.sin(4.0 * theta)
    f[..., 4] = SQRT_7_12
    f[..., 8] = SQRT_5_12 * np.cos(4.0 * theta)
    return f


def lobe_along(direction) -> np.ndarray:
    """The sqrt(7/12) lobe pointing along ``direction``."""
    return exp_rotation(axis_angle_to(direction)) @ reference_lobe()


# --- normal alignment -----------------------------------------------------


def axis_angle_to(n) -> np.ndarray:
    """Axis-angle vector taking z to ``n``, parallel to z x n.

    n = -z maps to (pi, 0, 0). Broadcasts over leading axes of ``n``.
    """
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    axis = np.stack([-n[..., 1], n[..., 0], np.zeros_like(n[..., 0])], axis=-1)
    sin_a = np.linalg.norm(axis, axis=-1)
    angle = np.arctan2(sin_a, n[..., 2])
    with np.errstate(invalid="ignore", divide="ignore"):
        v = axis * (angle / np.where(sin_a > 0, sin_a, 1.0))[..., None]
    flipped = (sin_a < 1e-15) & (n[..., 2] < 0)
    v = np.where(flipped[..., None], np.array([np.pi, 0.0, 0.0]), v)
    return v


def alignment_operator(n) -> tuple[np.ndarray, np.ndarray]:
    """Rows 2..8 of exp(-v_n . L) and the target u0.

    Any frame aligned to ``n`` satisfies ``W @ f == u0``.
    """
    w = exp_rotation(-axis_angle_to(n))[..., 1:8, :]
    return w, U0.copy()


# --- closed forms for lobes and crease energy ----------------------------


def lobe_dot(theta):
    """Inner product of two 4/21-norm lobes separated by ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return (9.0 + 20.0 * np.cos(2 * theta) + 35.0 * np.cos(4 * theta)) / 336.0


def lobe_dist_sq(theta):
    """Squared distance between two 4/21-norm lobes separated by ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return 5.0 / 42.0 * (9.0 + 7.0 * np.cos(2 * theta)) * np.sin(theta) ** 2


def lobe_dot_rescaled(theta):
    return LOBE_RESCALE * lobe_dot(theta)


def lobe_dist_sq_rescaled(theta):
    return LOBE_RESCALE * lobe_dist_sq(theta)


def crease_energy(a, b, t):
    """||f0 - exp(b (cos a, sin a, 0) . L) exp(t Lz) f0||^2; broadcasts."""
    a, b, t = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, t)))
    v = np.stack([b * np.cos(a), b * np.sin(a), np.zeros_like(b)], axis=-1)
    g = exp_rotation(v) @ twist_z(t)[..., None]
    return np.sum((canonical_frame() - g[..., 0]) ** 2, axis=-1)
