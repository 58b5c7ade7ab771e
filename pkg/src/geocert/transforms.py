"""Geometric and photometric image transformations.

The pixel value function maps transformation parameters ``kappa`` to the
intensity of one output pixel::

    G_uv(kappa) = alpha * I(T_mu^{-1}(u, v)) + beta

``kappa`` is laid out as the spatial parameters in declared composition order,
then contrast ``alpha``, then brightness ``beta``.

Conventions
-----------
* Pixel ``(u, v)`` is column ``u``, row ``v`` and sits on the integer lattice.
* Rotation, scaling and shearing act about the image centre
  ``((W - 1) / 2, (H - 1) / 2)``; translation is in pixel units.
* Outside the image the interpolant sees a one pixel zero border, and zero
  beyond it, so ``I`` is total and Lipschitz on the whole plane.
* Photometric output is not clamped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidTransformError
from .interval import Interval, icos, isin

SPATIAL_KINDS = {"rotation": 1, "translation": 2, "scaling": 1, "shearing": 1}


# ---------------------------------------------------------------------------
# domain types


@dataclass
class Image:
    """Grayscale image with intensities in [0, 1], stored as ``pixels[row, col]``."""

    pixels: np.ndarray
    _padded: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("image must be a non-empty 2-D array")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        self.pixels = px

    @classmethod
    def from_flat(cls, width: int, height: int, values: Sequence[float]) -> "Image":
        values = np.asarray(values, dtype=float)
        if values.size != width * height:
            raise ValueError(f"expected {width * height} pixels, got {values.size}")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.width - 1), 0.5 * (self.height - 1))

    @property
    def padded(self) -> np.ndarray:
        if self._padded is None:
            self._padded = np.pad(self.pixels, 1)
        return self._padded

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1)


@dataclass(frozen=True)
class SpatialTransform:
    """A concrete spatial map: one of the basic kinds, or a composition.

    Compositions apply their parts in declared order.
    """

    kind: str
    params: tuple = ()
    parts: tuple = ()

    def __post_init__(self):
        if self.kind == "composition":
            if not self.parts:
                raise InvalidTransformError("composition must be nonempty")
            return
        if self.kind not in SPATIAL_KINDS:
            raise InvalidTransformError(f"unknown transform kind {self.kind!r}")
        if len(self.params) != SPATIAL_KINDS[self.kind]:
            raise InvalidTransformError(f"{self.kind} takes {SPATIAL_KINDS[self.kind]} parameter(s)")

    @classmethod
    def rotation(cls, angle):
        return cls("rotation", (float(angle),))

    @classmethod
    def translation(cls, dx, dy):
        return cls("translation", (float(dx), float(dy)))

    @classmethod
    def scaling(cls, factor):
        return cls("scaling", (float(factor),))

    @classmethod
    def shearing(cls, factor):
        return cls("shearing", (float(factor),))

    @classmethod
    def compose(cls, *parts):
        return cls("composition", (), tuple(parts))

    def flatten(self) -> list["SpatialTransform"]:
        if self.kind != "composition":
            return [self]
        out = []
        for p in self.parts:
            out.extend(p.flatten())
        return out


@dataclass
class ParamBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo and hi must have the same length")
        if np.any(self.lo > self.hi):
            raise ValueError("ParamBox requires lo <= hi on every axis")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def active_axes(self) -> list[int]:
        return [m for m in range(self.dim) if self.hi[m] > self.lo[m]]

    def corners(self) -> np.ndarray:
        """All distinct corners (degenerate axes collapse)."""
        act = self.active_axes
        out = np.tile(self.lo, (2 ** len(act), 1))
        for k in range(2 ** len(act)):
            for bit, m in enumerate(act):
                if (k >> bit) & 1:
                    out[k, m] = self.hi[m]
        return out

    def contains(self, kappa, tol: float = 0.0) -> bool:
        kappa = np.asarray(kappa, dtype=float)
        return bool(np.all(kappa >= self.lo - tol) and np.all(kappa <= self.hi + tol))

    def split(self, axis: int, at: float | None = None) -> tuple["ParamBox", "ParamBox"]:
        at = self.mid[axis] if at is None else at
        left_hi = self.hi.copy()
        left_hi[axis] = at
        right_lo = self.lo.copy()
        right_lo[axis] = at
        return ParamBox(self.lo, left_hi), ParamBox(right_lo, self.hi)

    def intervals(self) -> list[Interval]:
        return [Interval(a, b) for a, b in zip(self.lo, self.hi)]

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True)
class TransformSpec:
    """One constituent of an attack: a kind plus its parameter range."""

    kind: str
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if self.kind not in SPATIAL_KINDS:
            raise InvalidTransformError(f"unknown transform kind {self.kind!r}")
        k = SPATIAL_KINDS[self.kind]
        if len(self.lo) != k or len(self.hi) != k:
            raise InvalidTransformError(f"{self.kind} takes {k} parameter(s)")
        if self.kind == "scaling" and self.lo[0] <= 0:
            raise InvalidTransformError("scaling factor must be positive")


@dataclass(frozen=True)
class Attack:
    """Composed spatial transform plus contrast/brightness ranges.

    Defines the parameter box B; ``kappa`` entries follow ``axis_names``.
    """

    transforms: tuple
    contrast: tuple = (1.0, 1.0)
    brightness: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.transforms:
            raise InvalidTransformError("attack needs at least one spatial transform")

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(t.kind for t in self.transforms)

    @property
    def spatial_dim(self) -> int:
        return sum(SPATIAL_KINDS[k] for k in self.kinds)

    @property
    def dim(self) -> int:
        return self.spatial_dim + 2

    @property
    def spatial_axes(self) -> list[int]:
        return list(range(self.spatial_dim))

    @property
    def axis_names(self) -> list[str]:
        names = []
        for t in self.transforms:
            if t.kind == "translation":
                names += ["translation.dx", "translation.dy"]
            else:
                names.append(t.kind)
        return names + ["contrast", "brightness"]

    @property
    def box(self) -> ParamBox:
        lo, hi = [], []
        for t in self.transforms:
            lo.extend(t.lo)
            hi.extend(t.hi)
        lo += [self.contrast[0], self.brightness[0]]
        hi += [self.contrast[1], self.brightness[1]]
        return ParamBox(lo, hi)

    def identity_params(self) -> np.ndarray:
        vals = []
        for t in self.transforms:
            vals.extend([1.0] if t.kind == "scaling" else [0.0] * SPATIAL_KINDS[t.kind])
        return np.array(vals + [1.0, 0.0])

    def split_params(self, kappa) -> list:
        """Per-constituent parameter lists taken from the columns of ``kappa``."""
        out, pos = [], 0
        for t in self.transforms:
            k = SPATIAL_KINDS[t.kind]
            out.append([kappa[..., pos + i] for i in range(k)])
            pos += k
        return out

    def transform_at(self, kappa) -> SpatialTransform:
        kappa = np.asarray(kappa, dtype=float)
        parts = [SpatialTransform(t.kind, tuple(float(x) for x in p))
                 for t, p in zip(self.transforms, self.split_params(kappa))]
        return SpatialTransform.compose(*parts)

    @classmethod
    def single(cls, kind: str, lo, hi, contrast=(1.0, 1.0), brightness=(0.0, 0.0)) -> "Attack":
        lo = tuple(np.atleast_1d(np.asarray(lo, dtype=float)).tolist())
        hi = tuple(np.atleast_1d(np.asarray(hi, dtype=float)).tolist())
        if kind == "translation" and len(lo) == 1:
            lo, hi = lo * 2, hi * 2
        return cls((TransformSpec(kind, lo, hi),), tuple(contrast), tuple(brightness))

    def to_dict(self) -> dict:
        def scal(x):
            return list(x) if len(x) > 1 else x[0]

        return {
            "transforms": [{"kind": t.kind, "lo": scal(t.lo), "hi": scal(t.hi)} for t in self.transforms],
            "contrast": list(self.contrast),
            "brightness": list(self.brightness),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Attack":
        specs = []
        for entry in d.get("transforms", []):
            kind = entry["kind"]
            lo = np.atleast_1d(np.asarray(entry["lo"], dtype=float))
            hi = np.atleast_1d(np.asarray(entry["hi"], dtype=float))
            if entry.get("unit", "rad") in ("deg", "degrees"):
                if kind != "rotation":
                    raise InvalidTransformError("degree units only apply to rotation")
                lo, hi = np.deg2rad(lo), np.deg2rad(hi)
            if kind == "translation" and lo.size == 1:
                lo, hi = np.repeat(lo, 2), np.repeat(hi, 2)
            if np.any(lo > hi):
                raise InvalidTransformError(f"{kind}: lo must not exceed hi")
            specs.append(TransformSpec(kind, tuple(lo.tolist()), tuple(hi.tolist())))
        contrast = tuple(float(x) for x in d.get("contrast", (1.0, 1.0)))
        brightness = tuple(float(x) for x in d.get("brightness", (0.0, 0.0)))
        if contrast[0] > contrast[1] or brightness[0] > brightness[1]:
            raise InvalidTransformError("photometric ranges must have lo <= hi")
        return cls(tuple(specs), contrast, brightness)


# ---------------------------------------------------------------------------
# generic inverse maps; work on floats, numpy arrays and Intervals alike


def _inv(kind, p, x, y):
    if kind == "rotation":
        c, s = icos(p[0]), isin(p[0])
        return c * x + s * y, c * y - s * x
    if kind == "translation":
        return x - p[0], y - p[1]
    if kind == "scaling":
        return x / p[0], y / p[0]
    if kind == "shearing":
        return x - p[0] * y, y
    raise InvalidTransformError(kind)


def _jac(kind, p, vx, vy):
    """Jacobian of the inverse map (w.r.t. the point) applied to a vector."""
    if kind == "rotation":
        c, s = icos(p[0]), isin(p[0])
        return c * vx + s * vy, c * vy - s * vx
    if kind == "translation":
        return vx, vy
    if kind == "scaling":
        return vx / p[0], vy / p[0]
    return vx - p[0] * vy, vy


def _dparam(kind, p, x, y):
    if kind == "rotation":
        c, s = icos(p[0]), isin(p[0])
        return [(c * y - s * x, -(c * x) - s * y)]
    if kind == "translation":
        return [(-1.0, 0.0), (0.0, -1.0)]
    if kind == "scaling":
        sq = p[0].sqr() if isinstance(p[0], Interval) else p[0] * p[0]
        return [(-(x / sq), -(y / sq))]
    return [(-y, 0.0)]


def inverse_chain(kinds, params, x, y, with_grad=False):
    """Pre-image of ``(x, y)`` under the composition, optionally with d/dmu.

    Inverses are applied in reverse declared order. Returns ``(X, Y)`` or
    ``(X, Y, dX, dY)`` where ``dX[m]`` is the derivative w.r.t. the m-th
    spatial parameter.
    """
    grads = [None] * len(kinds)
    for k in reversed(range(len(kinds))):
        kind, p = kinds[k], params[k]
        if with_grad:
            for kk in range(k + 1, len(kinds)):
                grads[kk] = [_jac(kind, p, gx, gy) for gx, gy in grads[kk]]
            grads[k] = _dparam(kind, p, x, y)
        x, y = _inv(kind, p, x, y)
    if not with_grad:
        return x, y
    dX = [g[0] for gl in grads for g in gl]
    dY = [g[1] for gl in grads for g in gl]
    return x, y, dX, dY


def _check_invertible(t: SpatialTransform):
    for part in t.flatten():
        if part.kind == "scaling" and part.params[0] == 0:
            raise InvalidTransformError("scaling by zero is not invertible")


def _forward(kind, p, x, y):
    if kind == "rotation":
        c, s = math.cos(p[0]), math.sin(p[0])
        return c * x - s * y, s * x + c * y
    if kind == "translation":
        return x + p[0], y + p[1]
    if kind == "scaling":
        return p[0] * x, p[0] * y
    return x + p[0] * y, y


def apply_spatial(t: SpatialTransform, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    for part in t.flatten():
        x, y = _forward(part.kind, part.params, x, y)
    return x, y


def inverse_spatial(t: SpatialTransform, p) -> tuple[float, float]:
    _check_invertible(t)
    parts = t.flatten()
    x, y = inverse_chain([q.kind for q in parts], [q.params for q in parts], float(p[0]), float(p[1]))
    return float(x), float(y)


# ---------------------------------------------------------------------------
# bilinear interpolation


def _cell_coords(img: Image, x, y):
    """Cell indices and fractional offsets in padded-array coordinates."""
    pw, ph = img.width + 2, img.height + 2
    xs = np.clip(np.asarray(x, dtype=float) + 1.0, 0.0, pw - 1.0)
    ys = np.clip(np.asarray(y, dtype=float) + 1.0, 0.0, ph - 1.0)
    i0 = np.minimum(np.floor(xs).astype(np.intp), pw - 2)
    j0 = np.minimum(np.floor(ys).astype(np.intp), ph - 2)
    return i0, j0, xs - i0, ys - j0


def interpolate_many(img: Image, x, y) -> np.ndarray:
    P = img.padded
    i0, j0, fx, fy = _cell_coords(img, x, y)
    p00 = P[j0, i0]
    p10 = P[j0, i0 + 1]
    p01 = P[j0 + 1, i0]
    p11 = P[j0 + 1, i0 + 1]
    return (p00 * (1 - fx) + p10 * fx) * (1 - fy) + (p01 * (1 - fx) + p11 * fx) * fy


def interpolate(img: Image, p) -> float:
    """Bilinear interpolation at continuous coordinate ``p = (x, y)``."""
    return float(interpolate_many(img, p[0], p[1]))


def _interp_grad(img: Image, x: float, y: float):
    """(I, dI/dx, dI/dy, differentiable) at a single point."""
    P = img.padded
    pw, ph = img.width + 2, img.height + 2
    xs, ys = x + 1.0, y + 1.0
    i0, j0, fx, fy = (v.item() for v in _cell_coords(img, x, y))
    p00, p10 = P[j0, i0], P[j0, i0 + 1]
    p01, p11 = P[j0 + 1, i0], P[j0 + 1, i0 + 1]
    val = (p00 * (1 - fx) + p10 * fx) * (1 - fy) + (p01 * (1 - fx) + p11 * fx) * fy
    ix = (1 - fy) * (p10 - p00) + fy * (p11 - p01)
    iy = (1 - fx) * (p01 - p00) + fx * (p11 - p10)
    diff = True
    if xs <= 0.0 or xs >= pw - 1.0:
        ix = 0.0
        diff = diff and not (xs == 0.0 or xs == pw - 1.0)
    if ys <= 0.0 or ys >= ph - 1.0:
        iy = 0.0
        diff = diff and not (ys == 0.0 or ys == ph - 1.0)
    if 0.0 < xs < pw - 1.0 and xs == math.floor(xs):
        diff = False
    if 0.0 < ys < ph - 1.0 and ys == math.floor(ys):
        diff = False
    return float(val), float(ix), float(iy), diff


# ---------------------------------------------------------------------------
# pixel value function


def _preimages(img: Image, attack: Attack, kappas: np.ndarray, xs, ys, with_grad=False):
    cx, cy = img.center
    params = attack.split_params(kappas)
    out = inverse_chain(attack.kinds, params, xs - cx, ys - cy, with_grad)
    return (out[0] + cx, out[1] + cy) + tuple(out[2:])


def _as_kappas(attack: Attack, kappa) -> np.ndarray:
    k = np.asarray(kappa, dtype=float)
    if k.shape[-1] != attack.dim:
        raise ValueError(f"kappa has {k.shape[-1]} entries, attack expects {attack.dim}")
    return k


def pixel_values(img: Image, attack: Attack, u: int, v: int, kappas) -> np.ndarray:
    """Vectorised G_uv over an ``(N, d)`` array of parameters."""
    k = np.atleast_2d(_as_kappas(attack, kappas))
    X, Y = _preimages(img, attack, k, float(u), float(v))
    return k[:, -2] * interpolate_many(img, X, Y) + k[:, -1]


def pixel_value(img: Image, attack: Attack, u: int, v: int, kappa) -> float:
    return float(pixel_values(img, attack, u, v, kappa)[0])


def transform_images(img: Image, attack: Attack, kappas) -> np.ndarray:
    """All pixels of the transformed image for each kappa; shape ``(N, H, W)``."""
    k = np.atleast_2d(_as_kappas(attack, kappas))
    vv, uu = np.mgrid[0:img.height, 0:img.width]
    xs = uu.reshape(1, -1).astype(float)
    ys = vv.reshape(1, -1).astype(float)
    kk = k[:, None, :]
    X, Y = _preimages(img, attack, kk, xs, ys)
    vals = k[:, -2:-1] * interpolate_many(img, X, Y) + k[:, -1:]
    return vals.reshape(k.shape[0], img.height, img.width)


def pixel_value_gradient(img: Image, attack: Attack, u: int, v: int, kappa):
    """Gradient of G_uv at ``kappa`` and a flag telling whether G is differentiable there.

    On interpolation cell boundaries the gradient of the cell to the
    right/above is returned and the flag is False.
    """
    k = _as_kappas(attack, kappa).astype(float)
    cx, cy = img.center
    params = [[float(x) for x in p] for p in attack.split_params(k)]
    X, Y, dX, dY = inverse_chain(attack.kinds, params, u - cx, v - cy, with_grad=True)
    val, ix, iy, diff = _interp_grad(img, X + cx, Y + cy)
    alpha = k[-2]
    grad = np.empty(attack.dim)
    for m in range(attack.spatial_dim):
        grad[m] = alpha * (ix * dX[m] + iy * dY[m])
    grad[-2] = val
    grad[-1] = 1.0
    return grad, diff


# ---------------------------------------------------------------------------
# enclosures over parameter boxes


def _interval_params(attack: Attack, ivs: list[Interval]) -> list:
    out, pos = [], 0
    for t in attack.transforms:
        k = SPATIAL_KINDS[t.kind]
        out.append(ivs[pos:pos + k])
        pos += k
    return out


def reachable_box(attack: Attack, point, domain: ParamBox) -> tuple[Interval, Interval]:
    """Interval enclosure of the pre-images of ``point`` (frame coordinates,
    origin at the transform centre) over all spatial parameters in ``domain``."""
    ivs = domain.intervals()
    params = _interval_params(attack, ivs)
    X, Y = inverse_chain(attack.kinds, params, Interval(point[0]), Interval(point[1]))
    return X, Y


def _affine_range(a: float, b: float, t0: float, t1: float) -> Interval:
    """Range of (1 - t) * a + t * b for t in [t0, t1]."""
    v0 = a + t0 * (b - a)
    v1 = a + t1 * (b - a)
    return Interval(min(v0, v1), max(v0, v1))


def gradient_interval(img: Image, attack: Attack, u: int, v: int, domain: ParamBox) -> list[Interval]:
    """Per-parameter enclosure of dG_uv/dkappa at every differentiable point of ``domain``.

    Enumerates the interpolation cells meeting the reachable box, bounds the
    bilinear partials on each cell (exact: they are affine in the other
    coordinate), composes with the interval derivative of the inverse map,
    and takes the union over cells.
    """
    cx, cy = img.center
    ivs = domain.intervals()
    params = _interval_params(attack, ivs)
    X, Y, dX, dY = inverse_chain(attack.kinds, params, Interval(u - cx), Interval(v - cy), with_grad=True)
    alpha = ivs[-2]
    P = img.padded
    pw, ph = img.width + 2, img.height + 2
    xs = X + (cx + 1.0)
    ys = Y + (cy + 1.0)
    ns = attack.spatial_dim

    out = [None] * ns
    val_iv = None

    def merge(m, iv):
        out[m] = iv if out[m] is None else out[m].hull(iv)

    # region beyond the padded image: I is identically zero there
    if xs.lo < 0 or xs.hi > pw - 1 or ys.lo < 0 or ys.hi > ph - 1:
        for m in range(ns):
            merge(m, Interval(0.0))
        val_iv = Interval(0.0)

    i_lo = max(0, math.floor(xs.lo))
    i_hi = min(pw - 2, math.floor(xs.hi))
    j_lo = max(0, math.floor(ys.lo))
    j_hi = min(ph - 2, math.floor(ys.hi))
    for j in range(j_lo, j_hi + 1):
        fy0, fy1 = max(0.0, ys.lo - j), min(1.0, ys.hi - j)
        if fy0 > fy1:
            continue
        for i in range(i_lo, i_hi + 1):
            fx0, fx1 = max(0.0, xs.lo - i), min(1.0, xs.hi - i)
            if fx0 > fx1:
                continue
            p00, p10 = P[j, i], P[j, i + 1]
            p01, p11 = P[j + 1, i], P[j + 1, i + 1]
            ix = _affine_range(p10 - p00, p11 - p01, fy0, fy1)
            iy = _affine_range(p01 - p00, p11 - p10, fx0, fx1)
            corner_vals = [
                (p00 * (1 - fx) + p10 * fx) * (1 - fy) + (p01 * (1 - fx) + p11 * fx) * fy
                for fx in (fx0, fx1) for fy in (fy0, fy1)
            ]
            vi = Interval(min(corner_vals), max(corner_vals))
            val_iv = vi if val_iv is None else val_iv.hull(vi)
            for m in range(ns):
                merge(m, alpha * (ix * dX[m] + iy * dY[m]))
    if val_iv is None:
        val_iv = Interval(0.0)
        for m in range(ns):
            if out[m] is None:
                out[m] = Interval(0.0)
    return out + [val_iv, Interval(1.0)]
