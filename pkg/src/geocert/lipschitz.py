"""Soundification of fitted bounds by branch-and-bound Lipschitz maximisation.

A bound fitted on samples may be violated between samples. The violation

    lower:  f(kappa) = max_j(w_j . kappa + b_j) - G(kappa)
    upper:  f(kappa) = G(kappa) - min_j(w_j . kappa + b_j)

is Lipschitz with per-axis constants obtained from interval enclosures of
dG/dkappa. Branch and bound brackets its maximum to within ``eps`` and the
bound is shifted outward by ``xi_lower + eps``.
"""
from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import BudgetExhaustedError
from .fitting import LOWER, PiecewiseBound
from .transforms import Attack, Image, ParamBox, gradient_interval, pixel_values

DEFAULT_EPS = 0.01
DEFAULT_CELL_SAMPLES = 4
MAX_NODES = 1_000_000


@dataclass(frozen=True)
class ViolationFn:
    bound: PiecewiseBound
    image: Image
    attack: Attack
    pixel: tuple

    @property
    def side(self) -> str:
        return self.bound.side

    def __call__(self, kappa) -> np.ndarray:
        k = np.atleast_2d(np.asarray(kappa, dtype=float))
        g = pixel_values(self.image, self.attack, self.pixel[0], self.pixel[1], k)
        env = self.bound.unshifted(k)
        return env - g if self.side == LOWER else g - env

    def restricted(self, piece_index: int) -> "ViolationFn":
        b = self.bound
        one = replace(b, pieces=(b.pieces[piece_index],), subdomains=(b.subdomains[piece_index],),
                      gaps=b.gaps[piece_index:piece_index + 1] if b.gaps else ())
        return replace(self, bound=one)


@dataclass(frozen=True)
class BnBNode:
    cell: ParamBox
    f_max: float
    f_bound: float
    lipschitz: np.ndarray


@dataclass(frozen=True)
class Soundification:
    xi_lower: float
    epsilon: float
    upper_bound: float
    nodes: int = 0
    time_ms: float | None = None
    exhausted: bool = False

    @property
    def shift(self) -> float:
        if self.exhausted:
            return max(0.0, self.upper_bound)
        return max(0.0, self.xi_lower + self.epsilon)

    def to_dict(self, timings: bool = False) -> dict:
        return {
            "xi_lower": self.xi_lower,
            "epsilon": self.epsilon,
            "shift": self.shift,
            "bnb_nodes": self.nodes,
            "bnb_time_ms": self.time_ms if timings else None,
            "upper_bound": self.upper_bound,
            "exhausted": self.exhausted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Soundification":
        return cls(d["xi_lower"], d["epsilon"], d.get("upper_bound", d["xi_lower"] + d["epsilon"]),
                   d.get("bnb_nodes", 0), d.get("bnb_time_ms"), bool(d.get("exhausted", False)))


def violation(vf: ViolationFn, kappa) -> float:
    return float(vf(kappa)[0])


def _active_pieces(bound: PiecewiseBound, cell: ParamBox) -> list[int]:
    """Pieces that can attain the envelope somewhere in ``cell``."""
    W, B = bound.W, bound.B
    q = len(B)
    if q == 1:
        return [0]
    out = []
    for j in range(q):
        dominated = False
        for k in range(q):
            if k == j:
                continue
            dw, db = W[k] - W[j], B[k] - B[j]
            if bound.side == LOWER:
                # k > j on the whole cell
                worst = db + np.sum(np.where(dw > 0, dw * cell.lo, dw * cell.hi))
                dominated = worst > 0
            else:
                worst = db + np.sum(np.where(dw > 0, dw * cell.hi, dw * cell.lo))
                dominated = worst < 0
            if dominated:
                break
        if not dominated:
            out.append(j)
    return out or list(range(q))


def estimate_lipschitz(vf: ViolationFn, cell: ParamBox) -> np.ndarray:
    """Per-axis Lipschitz constants of the violation on ``cell``.

    ``L_m = max_j sup |w_j[m] - dG/dkappa_m|`` over the pieces that can be
    active in the cell, with dG/dkappa_m enclosed by ``gradient_interval``.
    """
    giv = gradient_interval(vf.image, vf.attack, vf.pixel[0], vf.pixel[1], cell)
    lo = np.array([g.lo for g in giv])
    hi = np.array([g.hi for g in giv])
    W = vf.bound.W[_active_pieces(vf.bound, cell)]
    L = np.maximum(np.abs(W - lo), np.abs(W - hi)).max(axis=0)
    return L


def cell_upper_bound(vf: ViolationFn, cell: ParamBox, L) -> float:
    return violation(vf, cell.mid) + float(np.sum(np.asarray(L) * cell.widths) / 2.0)


def _cell_points(cell: ParamBox, n: int) -> np.ndarray:
    act = cell.active_axes
    if not act:
        return cell.mid[None, :]
    axes = [np.linspace(cell.lo[m], cell.hi[m], n) for m in act]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.tile(cell.mid, (mesh[0].size + 1, 1))
    for m, g in zip(act, mesh):
        pts[1:, m] = g.ravel()
    return pts


def _evaluate(vf: ViolationFn, cell: ParamBox, n: int, parent: BnBNode | None) -> BnBNode:
    pts = _cell_points(cell, n)
    vals = vf(pts)
    L = estimate_lipschitz(vf, cell)
    if parent is not None:
        L = np.minimum(L, parent.lipschitz)
    bound = float(vals[0] + np.sum(L * cell.widths) / 2.0)
    if parent is not None:
        bound = min(bound, parent.f_bound)
    return BnBNode(cell, float(vals.max()), bound, L)


def max_violation_bnb(vf: ViolationFn, domain: ParamBox, eps: float = DEFAULT_EPS,
                      n: int = DEFAULT_CELL_SAMPLES, max_nodes: int = MAX_NODES) -> Soundification:
    """Bracket the maximum violation: returns ``xi_lower`` with max <= xi_lower + eps.

    Best-first over cells ordered by their Lipschitz upper bound. A cell is
    split at the midpoint of the axis with the largest ``L_m * h_m`` while its
    bound exceeds the incumbent by more than ``eps``; cells whose bound falls
    below the incumbent are dropped.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n < 2:
        raise ValueError("need at least 2 samples per cell")
    t0 = time.perf_counter()
    tie = itertools.count()
    root = _evaluate(vf, domain, n, None)
    best = root.f_max
    heap = [(-root.f_bound, next(tie), root)]
    nodes = 1
    top = root.f_bound
    while heap:
        neg, _, node = heap[0]
        top = -neg
        if top - best <= eps:
            break
        heapq.heappop(heap)
        if nodes + 2 > max_nodes:
            upper = max(top, best)
            raise BudgetExhaustedError(f"branch and bound exceeded {max_nodes} nodes",
                                       upper_bound=upper, xi_lower=best, nodes=nodes)
        axis = int(np.argmax(node.lipschitz * node.cell.widths))
        for child_cell in node.cell.split(axis):
            child = _evaluate(vf, child_cell, n, node)
            nodes += 1
            if child.f_max > best:
                best = child.f_max
            if child.f_bound >= best:
                heapq.heappush(heap, (-child.f_bound, next(tie), child))
    else:
        top = best
    ms = (time.perf_counter() - t0) * 1e3
    return Soundification(best, eps, max(top, best), nodes, ms)


def effective_subdomains(bound: PiecewiseBound, domain: ParamBox):
    """Where each piece attains the envelope, when that region is an interval.

    Only possible when the domain has a single non-degenerate axis; otherwise
    returns None. Result is a list of (piece index, ParamBox).
    """
    act = domain.active_axes
    if len(act) != 1:
        return None
    a = act[0]
    W, B = bound.W, bound.B
    fixed = domain.lo.copy()
    fixed[a] = 0.0
    slope = W[:, a]
    icpt = B + W @ fixed
    seen = {}
    for j in range(len(B)):
        seen.setdefault((slope[j], icpt[j]), j)
    keep = sorted(seen.values())
    out = []
    for j in keep:
        lo, hi = domain.lo[a], domain.hi[a]
        for k in keep:
            if k == j:
                continue
            ds, dc = slope[j] - slope[k], icpt[k] - icpt[j]
            if bound.side != LOWER:
                ds, dc = -ds, -dc
            # need ds * t >= dc
            if ds > 0:
                lo = max(lo, dc / ds)
            elif ds < 0:
                hi = min(hi, dc / ds)
            elif dc > 0:
                hi = -np.inf
        if hi > lo:
            blo, bhi = domain.lo.copy(), domain.hi.copy()
            blo[a], bhi[a] = lo, hi
            out.append((j, ParamBox(blo, bhi)))
    return out or None


def max_violation(vf: ViolationFn, domain: ParamBox, eps: float = DEFAULT_EPS,
                  n: int = DEFAULT_CELL_SAMPLES, max_nodes: int = MAX_NODES) -> Soundification:
    """Maximum violation of a (piecewise) bound over ``domain``.

    Piecewise bounds on a one-dimensional domain are handled piece by piece
    over each piece's effective interval; the results are combined by max.
    """
    subs = effective_subdomains(vf.bound, domain) if vf.bound.q > 1 else None
    if not subs:
        return max_violation_bnb(vf, domain, eps, n, max_nodes)
    parts = [max_violation_bnb(vf.restricted(j), box, eps, n, max_nodes) for j, box in subs]
    return Soundification(
        max(p.xi_lower for p in parts), eps, max(p.upper_bound for p in parts),
        sum(p.nodes for p in parts), sum(p.time_ms for p in parts),
    )


def soundify(bound: PiecewiseBound, s: Soundification) -> PiecewiseBound:
    return bound.with_shift(s.shift)


def soundify_bound(image: Image, attack: Attack, pixel, bound: PiecewiseBound, domain: ParamBox,
                   eps: float = DEFAULT_EPS, n: int = DEFAULT_CELL_SAMPLES,
                   max_nodes: int = MAX_NODES):
    """Shift ``bound`` so it holds on all of ``domain``; returns (bound, Soundification).

    If branch and bound runs out of nodes the shift falls back to the
    certified upper bound reached so far.
    """
    vf = ViolationFn(bound.with_shift(0.0), image, attack, tuple(pixel))
    try:
        s = max_violation(vf, domain, eps, n, max_nodes)
    except BudgetExhaustedError as exc:
        s = Soundification(exc.xi_lower, eps, exc.upper_bound, exc.nodes, None, exhausted=True)
    return soundify(bound, s), s
