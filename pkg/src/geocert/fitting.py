"""Sampling-based linear and piecewise linear bounds on a pixel value function.

Each bound is fitted by LPs that minimise the mean gap to the sampled values
while staying on the correct side of every sample. Piecewise bounds fix the
sub-domains a priori along one spatial axis and solve one independent LP per
piece; every piece is still constrained at all samples, which keeps the
max (lower) / min (upper) envelope convex (concave).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeoCertError
from .lp import GE, LE, LinearProgram, solve_lp
from .transforms import ParamBox

LOWER, UPPER = "lower", "upper"
_TIE_TOL = 1e-12
# minimum ||w||_1 reduction for the flattest-slope tie-break to apply
_FLAT_GAIN = 1e-9


def _check_side(side):
    if side not in (LOWER, UPPER):
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")


@dataclass(frozen=True)
class SampleSet:
    params: np.ndarray
    values: np.ndarray
    domain: ParamBox
    seed: int | None = None

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.params, dtype=float))
        v = np.asarray(self.values, dtype=float).ravel()
        if p.shape[0] != v.size:
            raise ValueError("one value per parameter sample is required")
        if p.shape[1] != self.domain.dim:
            raise ValueError("sample dimensionality does not match the domain")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def subset(self, mask) -> "SampleSet":
        return SampleSet(self.params[mask], self.values[mask], self.domain, self.seed)


@dataclass(frozen=True)
class LinearPiece:
    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel().copy()
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValueError("linear piece must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    def __call__(self, kappa) -> np.ndarray:
        return np.asarray(kappa, dtype=float) @ self.w + self.b

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_dict(cls, d) -> "LinearPiece":
        return cls(np.asarray(d["w"], dtype=float), float(d["b"]))


@dataclass(frozen=True)
class PiecewiseBound:
    """max_j (lower) or min_j (upper) of affine pieces, shifted outward by ``shift``."""

    side: str
    pieces: tuple
    subdomains: tuple
    shift: float = 0.0
    fit_gap: float = 0.0
    gaps: tuple = ()
    split_axis: int | None = None

    def __post_init__(self):
        _check_side(self.side)
        if not self.pieces:
            raise ValueError("a bound needs at least one piece")
        if len(self.subdomains) != len(self.pieces):
            raise ValueError("one subdomain per piece")

    @property
    def q(self) -> int:
        return len(self.pieces)

    @property
    def W(self) -> np.ndarray:
        return np.array([p.w for p in self.pieces])

    @property
    def B(self) -> np.ndarray:
        return np.array([p.b for p in self.pieces])

    def unshifted(self, kappa) -> np.ndarray:
        k = np.asarray(kappa, dtype=float)
        vals = k @ self.W.T + self.B
        return vals.max(axis=-1) if self.side == LOWER else vals.min(axis=-1)

    def __call__(self, kappa) -> np.ndarray:
        v = self.unshifted(kappa)
        return v - self.shift if self.side == LOWER else v + self.shift

    def with_shift(self, shift: float) -> "PiecewiseBound":
        return replace(self, shift=float(shift))

    def to_dict(self) -> dict:
        return {
            "pieces": [p.to_dict() for p in self.pieces],
            "shift": self.shift,
            "fit_gap": self.fit_gap,
            "subdomains": [s.to_dict() for s in self.subdomains],
            "split_axis": self.split_axis,
        }

    @classmethod
    def from_dict(cls, side, d) -> "PiecewiseBound":
        pieces = tuple(LinearPiece.from_dict(p) for p in d["pieces"])
        subs = d.get("subdomains")
        if subs:
            subdomains = tuple(ParamBox(s["lo"], s["hi"]) for s in subs)
        else:
            subdomains = (None,) * len(pieces)
        return cls(side, pieces, subdomains, float(d.get("shift", 0.0)),
                   float(d.get("fit_gap", 0.0)), (), d.get("split_axis"))


@dataclass
class BoundPair:
    lower: PiecewiseBound
    upper: PiecewiseBound
    pixel: tuple = (0, 0)
    area: float = 0.0
    candidate_areas: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# sampling


def sample_params(domain: ParamBox, n: int, seed: int | None = 0) -> np.ndarray:
    """``n`` parameter vectors: every distinct box corner, then uniform draws."""
    if n < domain.dim + 2:
        raise ValueError(f"need at least d + 2 = {domain.dim + 2} samples, got {n}")
    corners = domain.corners()
    if corners.shape[0] > n:
        raise ValueError(f"{corners.shape[0]} box corners do not fit in {n} samples")
    rng = np.random.default_rng(seed)
    rand = domain.lo + domain.widths * rng.random((n - corners.shape[0], domain.dim))
    return np.vstack([corners, rand])


# ---------------------------------------------------------------------------
# single-piece LP


def _solve_piece(samples: SampleSet, weights: np.ndarray, axes: list[int]):
    """Lower-side fit: max sum_i weights_i (w.z_i + t) s.t. w.z_i + t <= r_i.

    Coordinates are centred on the domain midpoint and the intercept is
    offset so the origin is feasible. Among optimal pieces the one with the
    smallest ||w||_1 is returned.
    """
    c = samples.domain.mid
    h = samples.values
    Z = samples.params[:, axes] - c[axes]
    base = h.min() - 1.0
    r = h - base
    n, k = Z.shape
    G = np.hstack([Z, np.ones((n, 1))])
    obj = weights @ G
    bounds = [(None, None)] * (k + 1)
    sol = solve_lp(LinearProgram(obj, "max", G, [LE] * n, r, bounds))
    if not sol.optimal:
        raise GeoCertError(f"bound-fitting LP ended {sol.status}")
    x = sol.values
    if k:
        # lexicographic tie-break: minimise ||w||_1 with the gap pinned to its optimum
        best = sol.objective_value
        tol = 1e-11 * max(1.0, abs(best))
        # variables: p (k), q (k), t (free); w = p - q
        G2 = np.hstack([Z, -Z, np.ones((n, 1))])
        obj2 = np.concatenate([np.ones(2 * k), [0.0]])
        A2 = np.vstack([G2, weights @ G2])
        rel2 = [LE] * n + [GE]
        rhs2 = np.concatenate([r, [best - tol]])
        bnd2 = [(0.0, None)] * (2 * k) + [(None, None)]
        sol2 = solve_lp(LinearProgram(obj2, "min", A2, rel2, rhs2, bnd2))
        if sol2.optimal:
            x2 = np.concatenate([sol2.values[:k] - sol2.values[k:2 * k], sol2.values[2 * k:]])
            # the pinned gap has a little slack; only spend it on a real tie
            if np.abs(x2[:k]).sum() < np.abs(x[:k]).sum() - _FLAT_GAIN:
                x = x2
    wk = x[:k] + 0.0
    # tightest intercept for this slope: exact feasibility at every sample
    t = float(np.min(r - Z @ wk)) if n else x[k]
    w = np.zeros(samples.domain.dim)
    w[axes] = wk
    b = t + base - w @ c
    return LinearPiece(w, b)


def _fit_axes(samples: SampleSet, fixed_zero=()) -> list[int]:
    return [m for m in samples.domain.active_axes if m not in fixed_zero]


def _mirror(samples: SampleSet, side: str) -> SampleSet:
    if side == LOWER:
        return samples
    return SampleSet(samples.params, -samples.values, samples.domain, samples.seed)


def _unmirror(piece: LinearPiece, side: str) -> LinearPiece:
    return piece if side == LOWER else LinearPiece(-piece.w, -piece.b)


def piece_gap(samples: SampleSet, piece: LinearPiece, side: str, mask=None) -> float:
    """(1/N) * sum over masked samples of the distance from piece to values."""
    d = samples.values - piece(samples.params)
    if side == UPPER:
        d = -d
    if mask is not None:
        d = d[mask]
    return float(d.sum() / samples.n)


def fit_linear(samples: SampleSet, side: str, fixed_zero=()) -> tuple[LinearPiece, float]:
    """Single linear bound minimising the mean sampled gap.

    Returns the piece and its gap. ``fixed_zero`` lists axes whose coefficient
    is pinned to 0 (degenerate axes are always pinned).
    """
    _check_side(side)
    if samples.n < samples.domain.dim + 1:
        raise ValueError("need at least d + 1 samples")
    mir = _mirror(samples, side)
    piece = _unmirror(_solve_piece(mir, np.full(samples.n, 1.0 / samples.n), _fit_axes(samples, fixed_zero)), side)
    return piece, piece_gap(samples, piece, side)


def fit_constant(samples: SampleSet, side: str) -> tuple[LinearPiece, float]:
    """Interval bound: the constant min (lower) or max (upper) of the samples."""
    _check_side(side)
    b = samples.values.min() if side == LOWER else samples.values.max()
    piece = LinearPiece(np.zeros(samples.domain.dim), b)
    return piece, piece_gap(samples, piece, side)


def single_piece_bound(samples: SampleSet, side: str, constant: bool = False) -> PiecewiseBound:
    piece, gap = fit_constant(samples, side) if constant else fit_linear(samples, side)
    return PiecewiseBound(side, (piece,), (samples.domain,), 0.0, gap, (gap,), None)


# ---------------------------------------------------------------------------
# piecewise fits


def split_index(samples: SampleSet, opposite: LinearPiece, side: str, axis: int,
                within: ParamBox | None = None) -> float | None:
    """Split coordinate on ``axis`` chosen by the largest gap to the opposite linear bound.

    For the lower bound the gap is ``upper(kappa_i) - G(kappa_i)``; for the
    upper bound ``G(kappa_i) - lower(kappa_i)``. Only samples strictly inside
    the axis range are eligible; ties go to the sample nearest the midpoint.
    Returns None when no sample lies strictly inside.
    """
    _check_side(side)
    box = within if within is not None else samples.domain
    lo, hi = box.lo[axis], box.hi[axis]
    coord = samples.params[:, axis]
    gaps = opposite(samples.params) - samples.values
    if side == UPPER:
        gaps = -gaps
    inside = (coord > lo) & (coord < hi)
    if within is not None:
        inside &= np.all((samples.params >= box.lo) & (samples.params <= box.hi), axis=1)
    if not np.any(inside):
        return None
    idx = np.nonzero(inside)[0]
    g = gaps[idx]
    best = g.max()
    ties = idx[g >= best - _TIE_TOL * max(1.0, abs(best))]
    mid = 0.5 * (lo + hi)
    pick = ties[np.argmin(np.abs(coord[ties] - mid))]
    return float(coord[pick])


def _subdomains(domain: ParamBox, axis: int, splits) -> list[ParamBox]:
    edges = [domain.lo[axis]] + sorted(splits) + [domain.hi[axis]]
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        lo, hi = domain.lo.copy(), domain.hi.copy()
        lo[axis], hi[axis] = a, b
        out.append(ParamBox(lo, hi))
    return out


def _membership(samples: SampleSet, axis: int, splits) -> np.ndarray:
    """Index of the subdomain holding each sample (points on a split go left)."""
    return np.searchsorted(np.asarray(sorted(splits)), samples.params[:, axis], side="left")


def fit_pwl(samples: SampleSet, side: str, split, axis: int) -> PiecewiseBound:
    """Piecewise bound with sub-domains cut at ``split`` (a value or list of values).

    One LP per piece: the objective sums gaps over that sub-domain's samples
    only, the constraints cover all samples.
    """
    _check_side(side)
    splits = sorted(np.atleast_1d(np.asarray(split, dtype=float)).tolist())
    lo, hi = samples.domain.lo[axis], samples.domain.hi[axis]
    for s in splits:
        if not lo < s < hi:
            raise ValueError(f"split {s} must lie strictly inside [{lo}, {hi}]")
    member = _membership(samples, axis, splits)
    mir = _mirror(samples, side)
    axes = _fit_axes(samples)
    pieces, gaps = [], []
    for j in range(len(splits) + 1):
        mask = member == j
        if not np.any(mask):
            raise ValueError(f"sub-domain {j} holds no samples")
        weights = np.where(mask, 1.0 / samples.n, 0.0)
        piece = _unmirror(_solve_piece(mir, weights, axes), side)
        pieces.append(piece)
        gaps.append(piece_gap(samples, piece, side, mask))
    subs = _subdomains(samples.domain, axis, splits)
    return PiecewiseBound(side, tuple(pieces), tuple(subs), 0.0, float(sum(gaps)), tuple(gaps), axis)


def fit_pwl_q(samples: SampleSet, side: str, opposite: LinearPiece, axis: int, q: int) -> PiecewiseBound | None:
    """q-piece bound: start from the gap-heuristic split and keep splitting the
    sub-domain with the largest gap until q pieces exist or no split is possible."""
    first = split_index(samples, opposite, side, axis)
    if first is None:
        return None
    splits = [first]
    bound = fit_pwl(samples, side, splits, axis)
    while bound.q < q:
        order = np.argsort(bound.gaps)[::-1]
        new = None
        for j in order:
            s = split_index(samples, opposite, side, axis, within=bound.subdomains[j])
            if s is not None and s not in splits:
                new = s
                break
        if new is None:
            break
        trial = splits + [new]
        member = _membership(samples, axis, trial)
        if len(np.unique(member)) < len(trial) + 1:
            break
        splits = sorted(trial)
        bound = fit_pwl(samples, side, splits, axis)
    return bound


# ---------------------------------------------------------------------------
# area and selection


def default_grid(n_active: int) -> int:
    return {0: 1, 1: 201, 2: 41, 3: 13}.get(n_active, 7)


def _trapz(y, x, axis):
    fn = getattr(np, "trapezoid", None) or np.trapz
    return fn(y, x, axis=axis)


def sampled_area(lower, upper, domain: ParamBox, grid: int | None = None) -> float:
    """Trapezoidal integral of ``upper - lower`` over the active axes of ``domain``."""
    act = domain.active_axes
    if not act:
        k = domain.lo[None, :]
        return float((upper(k) - lower(k))[0])
    grid = grid or default_grid(len(act))
    if grid < 2:
        raise ValueError("grid needs at least 2 points per axis")
    axes = [np.linspace(domain.lo[m], domain.hi[m], grid) for m in act]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.tile(domain.lo, (mesh[0].size, 1))
    for m, g in zip(act, mesh):
        pts[:, m] = g.ravel()
    vals = (upper(pts) - lower(pts)).reshape(mesh[0].shape)
    for a in reversed(range(len(act))):
        vals = _trapz(vals, axes[a], axis=a)
    return float(vals)


def linear_pair(samples: SampleSet, pixel=(0, 0), grid=None) -> BoundPair:
    lo = single_piece_bound(samples, LOWER)
    up = single_piece_bound(samples, UPPER)
    area = sampled_area(lo, up, samples.domain, grid)
    return BoundPair(lo, up, tuple(pixel), area, {"linear": area})


def interval_pair(samples: SampleSet, pixel=(0, 0), grid=None) -> BoundPair:
    lo = single_piece_bound(samples, LOWER, constant=True)
    up = single_piece_bound(samples, UPPER, constant=True)
    area = sampled_area(lo, up, samples.domain, grid)
    return BoundPair(lo, up, tuple(pixel), area, {"interval": area})


def repeat_pieces(bound: PiecewiseBound, q: int) -> PiecewiseBound:
    """Express a single-piece bound as q identical pieces."""
    return replace(bound, pieces=bound.pieces * q, subdomains=bound.subdomains * q,
                   gaps=bound.gaps + (0.0,) * (q - 1))


def select_bounds(samples: SampleSet, pixel=(0, 0), q: int = 2, grid=None,
                  split_axes=None, linear: BoundPair | None = None) -> BoundPair:
    """Best of (piecewise lower + linear upper) and (linear lower + piecewise upper).

    Candidates are compared by enclosed area; ties favour the piecewise lower
    bound. If neither beats the all-linear pair, the linear pair is returned
    with the lower side written as q identical pieces, so the result is never
    looser than the linear bounds on the area grid.
    """
    lin = linear or linear_pair(samples, pixel, grid)
    lin_lo, lin_up = lin.lower, lin.upper
    if q < 2:
        return lin
    if split_axes is None:
        split_axes = [m for m in samples.domain.active_axes if m < samples.domain.dim - 2]
    best = {}
    for side, opposite in ((LOWER, lin_up.pieces[0]), (UPPER, lin_lo.pieces[0])):
        options = []
        for axis in split_axes:
            b = fit_pwl_q(samples, side, opposite, axis, q)
            if b is not None:
                options.append(b)
        if options:
            best[side] = min(options, key=lambda b: b.fit_gap)
    areas = {"linear": lin.area}
    cands = []
    if LOWER in best:
        a = sampled_area(best[LOWER], lin_up, samples.domain, grid)
        areas["pwl_lower"] = a
        cands.append((a, 0, best[LOWER], lin_up))
    if UPPER in best:
        a = sampled_area(lin_lo, best[UPPER], samples.domain, grid)
        areas["pwl_upper"] = a
        cands.append((a, 1, lin_lo, best[UPPER]))
    cands.sort(key=lambda c: (c[0], c[1]))
    if cands and cands[0][0] <= lin.area:
        a, _, lo, up = cands[0]
        return BoundPair(lo, up, tuple(pixel), a, areas)
    return BoundPair(repeat_pieces(lin_lo, q), lin_up, tuple(pixel), lin.area, areas)
