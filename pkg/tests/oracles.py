"""Independent reference implementations used as test oracles.

Nothing here imports the code under test except plain data types; each
oracle re-derives its result from first principles.
"""
from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# textbook simplex: max c.x, A x <= b, x >= 0, with b >= 0


def textbook_simplex(c, A, b, max_iter=10_000):
    """Plain tableau simplex with Bland's rule. Returns (status, x, objective)."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    m, n = A.shape
    assert np.all(b >= 0), "oracle needs the origin to be feasible"
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))
    for _ in range(max_iter):
        enter = next((j for j in range(n + m) if T[m, j] < -1e-12), None)
        if enter is None:
            x = np.zeros(n + m)
            for r, j in enumerate(basis):
                x[j] = T[r, -1]
            return "optimal", x[:n], float(T[m, -1])
        best, leave = math.inf, None
        for r in range(m):
            if T[r, enter] > 1e-12:
                ratio = T[r, -1] / T[r, enter]
                if ratio < best - 1e-15 or (abs(ratio - best) <= 1e-15 and basis[r] < basis[leave]):
                    best, leave = ratio, r
        if leave is None:
            return "unbounded", None, None
        T[leave] /= T[leave, enter]
        for r in range(m + 1):
            if r != leave:
                T[r] -= T[r, enter] * T[leave]
        basis[leave] = enter
    raise RuntimeError("oracle simplex did not converge")


# ---------------------------------------------------------------------------
# image model


def bilinear_ref(pixels, x, y):
    """Bilinear interpolation with an explicit zero border, clamped beyond it."""
    H, W = pixels.shape

    def p(col, row):
        if 0 <= col < W and 0 <= row < H:
            return float(pixels[row, col])
        return 0.0

    x = min(max(x, -1.0), W * 1.0)
    y = min(max(y, -1.0), H * 1.0)
    i = min(math.floor(x), W - 1)
    j = min(math.floor(y), H - 1)
    fx, fy = x - i, y - j
    return ((1 - fx) * (1 - fy) * p(i, j) + fx * (1 - fy) * p(i + 1, j)
            + (1 - fx) * fy * p(i, j + 1) + fx * fy * p(i + 1, j + 1))


def affine_of(kind, params):
    """Forward map x -> M x + t of one constituent (about the origin)."""
    if kind == "rotation":
        a = params[0]
        return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]), np.zeros(2)
    if kind == "translation":
        return np.eye(2), np.array(params[:2], float)
    if kind == "scaling":
        return np.eye(2) * params[0], np.zeros(2)
    if kind == "shearing":
        return np.array([[1.0, params[0]], [0.0, 1.0]]), np.zeros(2)
    raise ValueError(kind)


def composed_affine(kinds, kappa):
    M, t = np.eye(2), np.zeros(2)
    pos = 0
    for kind in kinds:
        k = 2 if kind == "translation" else 1
        Mi, ti = affine_of(kind, kappa[pos:pos + k])
        pos += k
        M, t = Mi @ M, Mi @ t + ti
    return M, t


def pixel_value_ref(pixels, kinds, u, v, kappa):
    """alpha * I(T^-1(u, v)) + beta by solving the forward affine system."""
    H, W = pixels.shape
    c = np.array([(W - 1) / 2.0, (H - 1) / 2.0])
    M, t = composed_affine(kinds, kappa)
    pre = np.linalg.solve(M, np.array([u, v], float) - c - t) + c
    return kappa[-2] * bilinear_ref(pixels, pre[0], pre[1]) + kappa[-1]


# ---------------------------------------------------------------------------
# piecewise linear fitting (scipy LPs)


def lower_fit_scipy(k, h, weights):
    """max sum_i weights_i (w k_i + b) s.t. w k_i + b <= h_i, 1-D; returns total weighted gap."""
    from scipy.optimize import linprog

    A = np.column_stack([k, np.ones_like(k)])
    res = linprog(-(weights @ A), A_ub=A, b_ub=h, bounds=[(None, None)] * 2, method="highs")
    assert res.status == 0, res.message
    w, b = res.x
    return float(weights @ (h - (w * k + b)))


def brute_force_beta(k, h):
    """Joint two-piece optimum of the sampled mean-gap problem for 1-D lower bounds.

    The max of two affine functions splits a line into two intervals, so the
    joint optimum is the minimum over contiguous assignments of the sum of
    the two decoupled LPs.
    """
    order = np.argsort(k)
    k, h = np.asarray(k)[order], np.asarray(h)[order]
    n = len(k)
    best = math.inf
    for s in range(0, n + 1):
        left = np.zeros(n)
        left[:s] = 1.0 / n
        right = np.zeros(n)
        right[s:] = 1.0 / n
        total = 0.0
        for wts in (left, right):
            if wts.any():
                total += lower_fit_scipy(k, h, wts)
        best = min(best, total)
    return best


# ---------------------------------------------------------------------------
# grids


def box_grid(lo, hi, per_axis):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    act = [m for m in range(lo.size) if hi[m] > lo[m]]
    if not act:
        return lo[None, :].copy()
    axes = [np.linspace(lo[m], hi[m], per_axis) for m in act]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.tile(lo, (mesh[0].size, 1))
    for m, g in zip(act, mesh):
        pts[:, m] = g.ravel()
    return pts
