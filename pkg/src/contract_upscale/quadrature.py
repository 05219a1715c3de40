"""Triangle quadrature: the 7-point degree-5 rule and adaptive subdivision."""

from __future__ import annotations

import math

import numpy as np

_R15 = math.sqrt(15.0)
_A1 = (9.0 - 2.0 * _R15) / 21.0
_B1 = (6.0 + _R15) / 21.0
_A2 = (9.0 + 2.0 * _R15) / 21.0
_B2 = (6.0 - _R15) / 21.0
_W1 = (155.0 + _R15) / 1200.0
_W2 = (155.0 - _R15) / 1200.0

# barycentric coordinates (7, 3) and weights summing to 1
TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
TRI7_WEIGHTS = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])


def _areas(verts):
    v = verts
    return 0.5 * np.abs((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                        - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))


def quad_points(verts):
    """Physical 7-point quadrature nodes, shape (n, 7, 2)."""
    return np.einsum("qk,nkd->nqd", TRI7_BARY, verts)


def tri7(verts, func, owner):
    """7-point estimate of the integral of ``func`` over each triangle.

    ``func(points, owner)`` receives points (n, 7, 2) and returns (n, 7).
    """
    vals = func(quad_points(verts), owner)
    return _areas(verts) * (vals @ TRI7_WEIGHTS)


def split4(verts):
    """Midpoint subdivision: (n, 3, 2) -> (4n, 3, 2), children grouped by parent."""
    a, b, c = verts[:, 0], verts[:, 1], verts[:, 2]
    ab = 0.5 * (a + b)
    bc = 0.5 * (b + c)
    ca = 0.5 * (c + a)
    kids = np.stack([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ], axis=1)
    return kids.reshape(-1, 3, 2)


def _longest_edge(verts):
    e0 = np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1)
    e1 = np.linalg.norm(verts[:, 2] - verts[:, 1], axis=1)
    e2 = np.linalg.norm(verts[:, 0] - verts[:, 2], axis=1)
    return np.maximum(np.maximum(e0, e1), e2)


def adaptive_integrate(verts, func, owner, *, tol: float, min_edge: float = 0.0,
                       max_depth: int = 12) -> np.ndarray:
    """Integrate ``func`` over each triangle in ``verts`` by 4-way splitting.

    A triangle is accepted once its longest edge is <= ``min_edge`` and the
    children's summed estimate differs from the parent's by <= ``tol``; at
    ``max_depth`` the children's sum is accepted unconditionally.  ``owner``
    (int array, one per triangle) is passed through to ``func`` so it can
    carry per-triangle parameters such as a kernel centre.
    """
    n0 = len(verts)
    result = np.zeros(n0)
    if n0 == 0:
        return result
    ids = np.arange(n0)
    est = tri7(verts, func, owner)
    for depth in range(max_depth + 1):
        kids = split4(verts)
        kid_owner = np.repeat(owner, 4)
        kid_est = tri7(kids, func, kid_owner)
        summed = kid_est.reshape(-1, 4).sum(axis=1)
        if depth == max_depth:
            np.add.at(result, ids, summed)
            break
        done = (_longest_edge(verts) <= min_edge) & (np.abs(summed - est) <= tol)
        if np.any(done):
            np.add.at(result, ids[done], summed[done])
        go = ~done
        if not np.any(go):
            break
        go4 = np.repeat(go, 4)
        verts = kids[go4]
        owner = kid_owner[go4]
        est = kid_est[go4]
        ids = np.repeat(ids[go], 4)
    return result
