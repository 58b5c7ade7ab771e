"""LP-relaxation verifier and sampling falsifier for dense ReLU classifiers.

The perturbation set is described relationally: the transformation
parameters ``kappa`` are LP variables shared by every pixel, and each pixel
is sandwiched between its sound lower and upper bounds in ``kappa``. ReLUs
with ambiguous sign use the triangle relaxation, so the LP optimum is a lower
bound on the true worst-case margin.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GeoCertError
from .lp import EQ, GE, LE, LinearProgram, solve_lp
from .transforms import Attack, Image, ParamBox, transform_images

VERIFIED, FALSIFIED, UNKNOWN = "verified", "falsified", "unknown"
# absorbs floating point error of the simplex before a margin is trusted
MARGIN_SAFETY = 1e-7
FALSIFY_GRID_MAX = 50


@dataclass
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise FormatError("network needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ("relu", "none"):
                raise FormatError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.n_out,):
                raise FormatError(f"layer {k}: bias has length {layer.bias.size}, expected {layer.n_out}")
            if k and layer.n_in != self.layers[k - 1].n_out:
                raise FormatError(f"layer {k}: expects {layer.n_in} inputs, "
                                  f"previous layer gives {self.layers[k - 1].n_out}")

    @property
    def n_inputs(self) -> int:
        return self.layers[0].n_in

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].n_out

    def forward(self, x) -> np.ndarray:
        """Logits for a single input or a batch of inputs (last axis = features)."""
        h = np.asarray(x, dtype=float)
        for layer in self.layers:
            h = h @ layer.weights.T + layer.bias
            if layer.activation == "relu":
                h = np.maximum(h, 0.0)
        return h

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.forward(x), axis=-1)

    def to_dict(self) -> dict:
        return {"layers": [{"weights": l.weights.tolist(), "bias": l.bias.tolist(),
                            "activation": l.activation} for l in self.layers]}

    @classmethod
    def from_dict(cls, d) -> "Network":
        try:
            raw = d["layers"]
        except (KeyError, TypeError):
            raise FormatError("network JSON needs a 'layers' list") from None
        layers = []
        for k, entry in enumerate(raw):
            try:
                W = np.asarray(entry["weights"], dtype=float)
                b = np.asarray(entry["bias"], dtype=float).ravel()
            except (KeyError, ValueError, TypeError) as exc:
                raise FormatError(f"layer {k}: {exc}") from None
            if W.ndim != 2:
                raise FormatError(f"layer {k}: weights must be a 2-D matrix")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise FormatError(f"layer {k}: non-finite parameters")
            layers.append(Layer(W, b, entry.get("activation", "relu")))
        return cls(layers)


def load_network(path) -> Network:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    try:
        return Network.from_dict(d)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def forward(net: Network, x) -> np.ndarray:
    return net.forward(x)


# ---------------------------------------------------------------------------
# input constraints


@dataclass
class PixelConstraint:
    """Rows ``x >= w.kappa + b`` (lower) and ``x <= w.kappa + b`` (upper), shifts applied."""

    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)


@dataclass
class InputConstraintSet:
    box: ParamBox
    pixels: list
    pixel_lo: float = 0.0
    pixel_hi: float = 1.0

    @property
    def n(self) -> int:
        return len(self.pixels)

    def restricted(self, box: ParamBox) -> "InputConstraintSet":
        return InputConstraintSet(box, self.pixels, self.pixel_lo, self.pixel_hi)

    @classmethod
    def from_bounds(cls, box: ParamBox, bounds, pixel_lo=0.0, pixel_hi=1.0) -> "InputConstraintSet":
        """``bounds[p]`` is a list of (lower, upper) PiecewiseBound pairs for flat pixel p.

        Several pairs per pixel are intersected. Pieces that could leave the
        pixel domain on the box are dropped: the network sees the clipped
        image, and a lower piece above ``pixel_hi`` (upper piece below
        ``pixel_lo``) would not bound the clipped value.
        """
        pixels = []
        for pairs in bounds:
            pc = PixelConstraint()
            for lower, upper in pairs:
                for piece in lower.pieces:
                    w, b = piece.w, piece.b - lower.shift
                    if _piece_range(w, b, box)[1] <= pixel_hi:
                        pc.lower.append((w, b))
                for piece in upper.pieces:
                    w, b = piece.w, piece.b + upper.shift
                    if _piece_range(w, b, box)[0] >= pixel_lo:
                        pc.upper.append((w, b))
            pc.lower = _dedupe(pc.lower)
            pc.upper = _dedupe(pc.upper)
            pixels.append(pc)
        return cls(box, pixels, pixel_lo, pixel_hi)


def _piece_range(w, b, box: ParamBox):
    lo = b + np.sum(np.minimum(w * box.lo, w * box.hi))
    hi = b + np.sum(np.maximum(w * box.lo, w * box.hi))
    return lo, hi


def _dedupe(rows):
    seen, out = set(), []
    for w, b in rows:
        key = (tuple(w.tolist()), b)
        if key not in seen:
            seen.add(key)
            out.append((w, b))
    return out


# ---------------------------------------------------------------------------
# LP relaxation


class _Relaxation:
    """Variables: kappa (d), x0 (n), then post-activations of each hidden layer."""

    def __init__(self, inputs: InputConstraintSet):
        d, n = inputs.box.dim, inputs.n
        self.d = d
        self.bounds = [(float(a), float(b)) for a, b in zip(inputs.box.lo, inputs.box.hi)]
        self.bounds += [(inputs.pixel_lo, inputs.pixel_hi)] * n
        self.rows, self.rel, self.rhs = [], [], []
        self.layer_vars = [list(range(d, d + n))]
        for p, pc in enumerate(inputs.pixels):
            for w, b in pc.lower:
                self._row({p + d: 1.0, **{m: -w[m] for m in range(d) if w[m] != 0.0}}, GE, b)
            for w, b in pc.upper:
                self._row({p + d: 1.0, **{m: -w[m] for m in range(d) if w[m] != 0.0}}, LE, b)

    def _row(self, coeffs: dict, rel, rhs):
        self.rows.append(coeffs)
        self.rel.append(rel)
        self.rhs.append(float(rhs))

    @property
    def n_vars(self) -> int:
        return len(self.bounds)

    def affine(self, W_row, b, layer):
        """Coefficient dict of ``W_row . h_layer + b`` and its constant."""
        return {v: float(c) for v, c in zip(self.layer_vars[layer], W_row) if c != 0.0}, float(b)

    def add_relu_layer(self, W, bvec, lower, upper):
        prev = len(self.layer_vars) - 1
        new = []
        for i in range(W.shape[0]):
            z, c = self.affine(W[i], bvec[i], prev)
            l, u = float(lower[i]), float(upper[i])
            v = len(self.bounds)
            new.append(v)
            if u <= 0.0:
                self.bounds.append((0.0, 0.0))
            elif l >= 0.0:
                self.bounds.append((l, u))
                self._row({v: 1.0, **{k: -a for k, a in z.items()}}, EQ, c)
            else:
                self.bounds.append((0.0, u))
                # y >= z
                self._row({v: 1.0, **{k: -a for k, a in z.items()}}, GE, c)
                # y <= u (z - l) / (u - l)
                s = u / (u - l)
                self._row({v: 1.0, **{k: -s * a for k, a in z.items()}}, LE, s * (c - l))
        self.layer_vars.append(new)

    def add_linear_layer(self, W, bvec, lower, upper):
        prev = len(self.layer_vars) - 1
        new = []
        for i in range(W.shape[0]):
            z, c = self.affine(W[i], bvec[i], prev)
            v = len(self.bounds)
            new.append(v)
            self.bounds.append((float(lower[i]), float(upper[i])))
            self._row({v: 1.0, **{k: -a for k, a in z.items()}}, EQ, c)
        self.layer_vars.append(new)

    def solve(self, objective: dict, const: float, sense="min") -> float:
        n = self.n_vars
        c = np.zeros(n)
        for k, a in objective.items():
            c[k] += a
        A = np.zeros((len(self.rows), n))
        for r, coeffs in enumerate(self.rows):
            for k, a in coeffs.items():
                A[r, k] += a
        sol = solve_lp(LinearProgram(c, sense, A, self.rel, np.array(self.rhs), self.bounds))
        if not sol.optimal:
            raise GeoCertError(f"verification LP is {sol.status}")
        return sol.objective_value + const


def _interval_affine(W, b, lo, hi):
    Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
    return Wp @ lo + Wn @ hi + b, Wp @ hi + Wn @ lo + b


def preactivation_bounds(net: Network, inputs: InputConstraintSet, _relax_out: list | None = None):
    """Per-layer ``(l, u)`` bounds on pre-activations of every layer but the last."""
    relax = _Relaxation(inputs)
    out = []
    h_lo = np.full(inputs.n, inputs.pixel_lo)
    h_hi = np.full(inputs.n, inputs.pixel_hi)
    for k, layer in enumerate(net.layers[:-1]):
        l, u = _interval_affine(layer.weights, layer.bias, h_lo, h_hi)
        for i in range(layer.n_out):
            if k > 0 and not (l[i] < 0.0 < u[i]):
                continue
            z, c = relax.affine(layer.weights[i], layer.bias[i], k)
            lo_lp, hi_lp = relax.solve(z, c, "min"), relax.solve(z, c, "max")
            l[i] = max(l[i], lo_lp - MARGIN_SAFETY * (1 + abs(lo_lp)))
            u[i] = min(u[i], hi_lp + MARGIN_SAFETY * (1 + abs(hi_lp)))
            if l[i] > u[i]:
                l[i] = u[i] = 0.5 * (l[i] + u[i])
        out.append((l, u))
        if layer.activation == "relu":
            relax.add_relu_layer(layer.weights, layer.bias, l, u)
            h_lo, h_hi = np.maximum(l, 0.0), np.maximum(u, 0.0)
        else:
            relax.add_linear_layer(layer.weights, layer.bias, l, u)
            h_lo, h_hi = l, u
    if _relax_out is not None:
        _relax_out.append(relax)
    return out


def lower_bound_margin(net: Network, inputs: InputConstraintSet, label: int, target: int,
                       _relax=None) -> float:
    """Lower bound on ``y[label] - y[target]`` over the relaxed perturbation set."""
    if target == label:
        raise ValueError("target class must differ from the label")
    if _relax is None:
        holder = []
        preactivation_bounds(net, inputs, holder)
        _relax = holder[0]
    last = net.layers[-1]
    w = last.weights[label] - last.weights[target]
    z, c = _relax.affine(w, last.bias[label] - last.bias[target], len(net.layers) - 1)
    val = _relax.solve(z, c, "min")
    return val - MARGIN_SAFETY * (1.0 + abs(val))


def all_margins(net: Network, inputs: InputConstraintSet, label: int) -> dict:
    holder = []
    preactivation_bounds(net, inputs, holder)
    return {i: lower_bound_margin(net, inputs, label, i, holder[0])
            for i in range(net.n_outputs) if i != label}


# ---------------------------------------------------------------------------
# falsification


def attacked_images(image: Image, attack: Attack, kappas) -> np.ndarray:
    """Network inputs for each kappa: the transformed image clipped to [0, 1], flattened."""
    imgs = transform_images(image, attack, kappas)
    return np.clip(imgs, 0.0, 1.0).reshape(imgs.shape[0], -1)


def falsify_candidates(box: ParamBox, budget: int, seed: int = 0) -> np.ndarray:
    """Box centre, a regular grid (at most 50 per axis) and ``budget`` uniform draws."""
    act = box.active_axes
    pts = [box.mid[None, :]]
    if act and budget > 0:
        per = max(2, min(FALSIFY_GRID_MAX, int(np.floor(budget ** (1.0 / len(act)) + 1e-9))))
        axes = [np.linspace(box.lo[m], box.hi[m], per) for m in act]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.tile(box.mid, (mesh[0].size, 1))
        for m, g in zip(act, mesh):
            grid[:, m] = g.ravel()
        pts.append(grid)
        rng = np.random.default_rng(seed)
        pts.append(box.lo + rng.random((budget, box.dim)) * box.widths)
    return np.vstack(pts)


def falsify(net: Network, image: Image, attack: Attack, label: int, budget: int = 1000,
            seed: int = 0, box: ParamBox | None = None, chunk: int = 2048):
    """First kappa whose attacked image is not classified as ``label``, or None."""
    box = box or attack.box
    cands = falsify_candidates(box, budget, seed)
    for s in range(0, len(cands), chunk):
        part = cands[s:s + chunk]
        pred = net.predict(attacked_images(image, attack, part))
        bad = np.nonzero(pred != label)[0]
        if bad.size:
            kappa = part[bad[0]]
            x = attacked_images(image, attack, kappa[None, :])[0]
            p = int(net.predict(x))
            if p != label:
                return {"kappa": kappa.tolist(), "predicted": p, "image": x.tolist()}
    return None


# ---------------------------------------------------------------------------
# end to end


@dataclass
class VerificationOutcome:
    verdict: str
    label: int
    margins: dict
    counterexample: dict | None = None
    timings: dict | None = None
    mode: str = "pwl"

    @property
    def min_margin(self) -> float | None:
        return min(self.margins.values()) if self.margins else None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "label": self.label,
            "mode": self.mode,
            "margins": {str(k): v for k, v in sorted(self.margins.items())},
            "counterexample": self.counterexample,
            "timings": self.timings,
        }


def decide(net: Network, image: Image, attack: Attack, inputs: InputConstraintSet,
           label: int, falsify_budget: int = 1000, seed: int = 0, mode: str = "pwl") -> VerificationOutcome:
    """Margins from the relaxation; falsify only when some margin is not positive."""
    margins = all_margins(net, inputs, label)
    if margins and min(margins.values()) > 0.0:
        return VerificationOutcome(VERIFIED, label, margins, mode=mode)
    cex = falsify(net, image, attack, label, falsify_budget, seed, inputs.box)
    return VerificationOutcome(FALSIFIED if cex else UNKNOWN, label, margins, cex, mode=mode)


def verify(net: Network, image: Image, attack: Attack, config=None, label: int | None = None,
           timings: bool = False) -> VerificationOutcome:
    """Fit and soundify bounds for every pixel, then bound all margins.

    ``label`` defaults to the network's prediction on the clean image.
    """
    from .pipeline import FitConfig, fit_image

    config = config or FitConfig()
    if net.n_inputs != image.pixels.size:
        raise GeoCertError(f"network expects {net.n_inputs} inputs, image has {image.pixels.size} pixels")
    t0 = time.perf_counter()
    if label is None:
        label = int(net.predict(np.clip(image.flat(), 0.0, 1.0)))
    clean = int(net.predict(attacked_images(image, attack, attack.box.mid[None, :])[0]))
    if clean != label:
        x = attacked_images(image, attack, attack.box.mid[None, :])[0]
        out = VerificationOutcome(FALSIFIED, label, {}, {"kappa": attack.box.mid.tolist(),
                                                         "predicted": clean, "image": x.tolist()},
                                  mode=config.mode)
    else:
        result = fit_image(image, attack, config)
        t1 = time.perf_counter()
        inputs = InputConstraintSet.from_bounds(attack.box, result.constraint_pairs())
        out = decide(net, image, attack, inputs, label, config.falsify_budget, config.seed, config.mode)
        if timings:
            out.timings = {"fit_ms": (t1 - t0) * 1e3, "verify_ms": (time.perf_counter() - t1) * 1e3}
    if timings and out.timings is None:
        out.timings = {"fit_ms": 0.0, "verify_ms": (time.perf_counter() - t0) * 1e3}
    return out
