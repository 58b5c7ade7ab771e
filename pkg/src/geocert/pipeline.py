"""Per-image bound fitting: sample, fit, soundify every pixel."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .fitting import (LOWER, UPPER, PiecewiseBound, SampleSet, interval_pair, repeat_pieces,
                      linear_pair, sample_params, sampled_area, select_bounds)
from .lipschitz import DEFAULT_CELL_SAMPLES, DEFAULT_EPS, MAX_NODES, Soundification, soundify_bound
from .transforms import Attack, Image, pixel_values

MODES = ("pwl", "linear", "interval")


@dataclass
class FitConfig:
    mode: str = "pwl"
    samples: int = 100
    pieces: int = 2
    eps: float = DEFAULT_EPS
    cell_samples: int = DEFAULT_CELL_SAMPLES
    seed: int = 0
    grid: int | None = None
    falsify_budget: int = 1000
    threads: int = 1
    max_nodes: int = MAX_NODES

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.pieces < 1:
            raise ValueError("pieces must be at least 1")
        if self.cell_samples < 2:
            raise ValueError("cell samples must be at least 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        return d


@dataclass
class PixelBounds:
    pixel: tuple
    lower: PiecewiseBound
    upper: PiecewiseBound
    lower_report: Soundification
    upper_report: Soundification
    area: float
    area_unshifted: float
    # linear pair kept alongside piecewise bounds so both constraint sets can be intersected
    linear: tuple | None = None
    linear_area: float | None = None

    def pairs(self) -> list:
        out = [(self.lower, self.upper)]
        if self.linear is not None:
            out.append((self.linear[0], self.linear[1]))
        return out


@dataclass
class ImageBounds:
    image: Image
    attack: Attack
    config: FitConfig
    pixels: list = field(default_factory=list)

    def constraint_pairs(self) -> list:
        """Per flat pixel (row-major) list of (lower, upper) pairs."""
        return [p.pairs() for p in self.pixels]


def pixel_seed(seed: int, u: int, v: int) -> int:
    return int(np.random.SeedSequence([seed, u, v]).generate_state(1)[0])


def pixel_samples(image: Image, attack: Attack, u: int, v: int, n: int, seed: int) -> SampleSet:
    dom = attack.box
    s = pixel_seed(seed, u, v)
    P = sample_params(dom, n, s)
    return SampleSet(P, pixel_values(image, attack, u, v, P), dom, s)


def fit_pixel(image: Image, attack: Attack, u: int, v: int, config: FitConfig) -> PixelBounds:
    samples = pixel_samples(image, attack, u, v, config.samples, config.seed)
    dom = samples.domain
    if config.mode == "interval":
        pair = interval_pair(samples, (u, v), config.grid)
    else:
        lin = linear_pair(samples, (u, v), config.grid)
        pair = lin if config.mode == "linear" else select_bounds(samples, (u, v), config.pieces, config.grid,
                                                                   linear=lin)
    cache = {}

    def sound(bound):
        key = (bound.side, bound.W.tobytes(), bound.B.tobytes())
        if len(set(map(tuple, bound.W.tolist()))) == 1 and len(set(bound.B.tolist())) == 1:
            key = (bound.side, bound.W[:1].tobytes(), bound.B[:1].tobytes())
        if key not in cache:
            cache[key] = soundify_bound(image, attack, (u, v), bound, dom, config.eps,
                                        config.cell_samples, config.max_nodes)
        s = cache[key][1]
        return bound.with_shift(s.shift), s

    lower, lrep = sound(pair.lower)
    upper, urep = sound(pair.upper)
    area = sampled_area(lower, upper, dom, config.grid)
    linear, linear_area, unshifted = None, None, pair.area
    if config.mode == "pwl":
        (lin_lo, lo_rep), (lin_up, up_rep) = sound(lin.lower), sound(lin.upper)
        linear = (lin_lo, lin_up)
        linear_area = sampled_area(lin_lo, lin_up, dom, config.grid)
        if area > linear_area:
            # shifts can undo the fitted advantage; keep the smaller sound region
            lower, lrep = sound(repeat_pieces(lin.lower, config.pieces))
            upper, urep, area, unshifted = lin_up, up_rep, linear_area, lin.area
    return PixelBounds((u, v), lower, upper, lrep, urep, area, unshifted, linear, linear_area)


def _fit_task(args):
    image, attack, u, v, config = args
    return fit_pixel(image, attack, u, v, config)


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get("GEOCERT_THREADS")
    if env:
        threads = int(env)
    if not threads or threads < 1:
        threads = os.cpu_count() or 1
    return threads


def fit_image(image: Image, attack: Attack, config: FitConfig | None = None) -> ImageBounds:
    """Sound bounds for every pixel, in row-major order."""
    config = config or FitConfig()
    tasks = [(image, attack, u, v, config) for v in range(image.height) for u in range(image.width)]
    if config.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(config.threads) as ex:
            results = list(ex.map(_fit_task, tasks, chunksize=max(1, len(tasks) // (4 * config.threads))))
    else:
        results = [_fit_task(t) for t in tasks]
    return ImageBounds(image, attack, config, results)


# ---------------------------------------------------------------------------
# serialisation


def _bound_dict(bound: PiecewiseBound, report: Soundification | None, timings: bool) -> dict:
    d = bound.to_dict()
    if report is not None:
        d["soundification"] = report.to_dict(timings)
    return d


def bounds_to_dict(ib: ImageBounds, source: str | None = None, timings: bool = False) -> dict:
    img = ib.image
    pixels = []
    for p in ib.pixels:
        entry = {
            "pixel": list(p.pixel),
            "lower": _bound_dict(p.lower, p.lower_report, timings),
            "upper": _bound_dict(p.upper, p.upper_report, timings),
            "fit_gap": p.lower.fit_gap + p.upper.fit_gap,
            "area": p.area,
            "area_unshifted": p.area_unshifted,
        }
        if p.linear is not None:
            entry["linear"] = {"lower": p.linear[0].to_dict(), "upper": p.linear[1].to_dict(),
                               "area": p.linear_area}
        pixels.append(entry)
    return {
        "format": "geocert-bounds/1",
        "image": {"source": source, "width": img.width, "height": img.height,
                  "pixels": img.flat().tolist()},
        "attack": ib.attack.to_dict(),
        "config": ib.config.to_dict(),
        "axes": ib.attack.axis_names,
        "pixels": pixels,
    }


def _report_from(d) -> Soundification | None:
    if not d:
        return None
    return Soundification.from_dict(d)


def bounds_from_dict(d: dict) -> ImageBounds:
    info = d["image"]
    image = Image.from_flat(info["width"], info["height"], info["pixels"])
    attack = Attack.from_dict(d["attack"])
    cfg = dict(d.get("config", {}))
    config = FitConfig(**{k: v for k, v in cfg.items() if k in FitConfig.__dataclass_fields__})
    pixels = []
    for e in d["pixels"]:
        lower = PiecewiseBound.from_dict(LOWER, e["lower"])
        upper = PiecewiseBound.from_dict(UPPER, e["upper"])
        linear, linear_area = None, None
        if e.get("linear"):
            linear = (PiecewiseBound.from_dict(LOWER, e["linear"]["lower"]),
                      PiecewiseBound.from_dict(UPPER, e["linear"]["upper"]))
            linear_area = e["linear"].get("area")
        pixels.append(PixelBounds(tuple(e["pixel"]), lower, upper,
                                  _report_from(e["lower"].get("soundification")),
                                  _report_from(e["upper"].get("soundification")),
                                  float(e.get("area", 0.0)), float(e.get("area_unshifted", 0.0)), linear,
                                  linear_area))
    return ImageBounds(image, attack, config, pixels)


__all__ = ["FitConfig", "PixelBounds", "ImageBounds", "fit_pixel", "fit_image", "pixel_samples",
           "bounds_to_dict", "bounds_from_dict", "resolve_threads", "LOWER", "UPPER"]
