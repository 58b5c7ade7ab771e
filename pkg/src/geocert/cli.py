"""Command line interface: fit, soundcheck, area, verify."""
from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .errors import GeoCertError
from .fitting import linear_pair, select_bounds
from .lipschitz import DEFAULT_CELL_SAMPLES, DEFAULT_EPS
from .pipeline import FitConfig, bounds_to_dict, fit_image, fit_pixel, pixel_samples, resolve_threads
from .transforms import Attack, pixel_values
from .verifier import FALSIFIED, UNKNOWN, VERIFIED, load_network, verify


def _add_fit_args(p, with_attack=True):
    if with_attack:
        p.add_argument("--attack", required=True, help="attack spec JSON")
    p.add_argument("--images", nargs="*", default=[], help="PGM (P2/P5) or CSV images")
    p.add_argument("--samples", "-N", type=int, default=100, help="samples per pixel (default 100)")
    p.add_argument("--pieces", "-q", type=int, default=2, help="pieces per piecewise bound (default 2)")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="branch and bound gap (default 0.01)")
    p.add_argument("--cell-samples", type=int, default=DEFAULT_CELL_SAMPLES,
                   help="evenly spaced samples per axis in each cell (default 4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=None, help="area grid points per axis")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: cores; GEOCERT_THREADS overrides)")
    p.add_argument("--timings", action="store_true",
                   help="record wall-clock timings in output files (breaks byte determinism)")


def _config(args, mode=None) -> FitConfig:
    if args.samples < 1:
        raise GeoCertError("--samples must be positive")
    return FitConfig(
        mode=mode or getattr(args, "mode", "pwl"),
        samples=args.samples,
        pieces=args.pieces,
        eps=args.eps,
        cell_samples=args.cell_samples,
        seed=args.seed,
        grid=args.grid,
        falsify_budget=getattr(args, "budget", 1000),
        threads=resolve_threads(args.threads),
    )


def _check_samples(config: FitConfig, attack: Attack):
    if config.samples < attack.dim + 2:
        raise GeoCertError(f"--samples must be at least d + 2 = {attack.dim + 2}")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    attack = io.read_attack(args.attack)
    config = _config(args)
    _check_samples(config, attack)
    out = _out_dir(args.out)
    for path in args.images:
        image = io.read_image(path)
        t0 = time.perf_counter()
        ib = fit_image(image, attack, config)
        dest = out / f"{Path(path).stem}.bounds.json"
        io.write_json(dest, bounds_to_dict(ib, Path(path).name, args.timings))
        shifts = [max(p.lower.shift, p.upper.shift) for p in ib.pixels]
        print(f"{path}: {len(ib.pixels)} pixels, max shift {max(shifts):.4g}, "
              f"{time.perf_counter() - t0:.2f}s -> {dest}")
    return 0


def _check_grid(domain, per_axis):
    act = domain.active_axes
    if not act:
        return domain.lo[None, :]
    axes = [np.linspace(domain.lo[m], domain.hi[m], per_axis) for m in act]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.tile(domain.lo, (mesh[0].size, 1))
    for m, g in zip(act, mesh):
        pts[:, m] = g.ravel()
    return pts


def soundcheck_bounds(ib, grid: int | None = None) -> list[dict]:
    """Largest residual of each shifted bound against G on a dense grid."""
    domain = ib.attack.box
    n_act = len(domain.active_axes)
    per_axis = grid or (max(2, math.ceil(10_000 ** (1.0 / n_act))) if n_act else 1)
    pts = _check_grid(domain, per_axis)
    rows = []
    for p in ib.pixels:
        u, v = p.pixel
        g = pixel_values(ib.image, ib.attack, u, v, pts)
        rows.append({
            "pixel": [u, v],
            "lower_residual": float(np.max(p.lower(pts) - g)),
            "upper_residual": float(np.max(g - p.upper(pts))),
        })
    return rows


def cmd_soundcheck(args) -> int:
    report, bad = [], 0
    for path in args.bounds:
        ib = io.read_bounds(path)
        rows = soundcheck_bounds(ib, args.grid)
        viol = [r for r in rows if max(r["lower_residual"], r["upper_residual"]) > args.tol]
        w = max(max(r["lower_residual"], r["upper_residual"]) for r in rows)
        bad += len(viol)
        report.append({"bounds": str(path), "max_residual": w, "violations": len(viol), "pixels": rows})
        print(f"{path}: max residual {w:.3g}, {len(viol)} pixel(s) above tol {args.tol:g}")
    if args.out:
        io.write_json(args.out, {"tolerance": args.tol, "files": report})
    return 1 if bad else 0


def _magnitude_attack(kind: str, m: float) -> Attack:
    if kind == "rotation":
        r = math.radians(m)
        return Attack.single("rotation", -r, r)
    if kind == "scaling":
        return Attack.single("scaling", 1.0, 1.0 + m)
    if kind == "translation":
        return Attack.single("translation", -m, m)
    if kind == "shearing":
        return Attack.single("shearing", -m, m)
    raise GeoCertError(f"unknown transform kind {kind!r}")


def area_rows(images, kind, magnitudes, config: FitConfig, sound=False) -> list[dict]:
    rows = []
    for m in magnitudes:
        attack = _magnitude_attack(kind, m)
        vl, vp = [], []
        for image in images:
            for v in range(image.height):
                for u in range(image.width):
                    if sound:
                        pwl = fit_pixel(image, attack, u, v, config)
                        vl.append(pwl.linear_area)
                        vp.append(pwl.area)
                    else:
                        s = pixel_samples(image, attack, u, v, config.samples, config.seed)
                        lin = linear_pair(s, (u, v), config.grid)
                        pair = select_bounds(s, (u, v), config.pieces, config.grid, linear=lin)
                        vl.append(lin.area)
                        vp.append(pair.area)
        mean_l = float(np.mean(vl)) if vl else 0.0
        mean_p = float(np.mean(vp)) if vp else 0.0
        rel = 1.0 - mean_p / mean_l if mean_l > 0 else 0.0
        rows.append({"magnitude": float(m), "mean_V_L": mean_l, "mean_V_PWL": mean_p, "relative_area": rel})
    return rows


def write_area_csv(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["magnitude", "mean_V_L", "mean_V_PWL", "relative_area"])
    for r in rows:
        w.writerow([repr(r["magnitude"]), repr(r["mean_V_L"]), repr(r["mean_V_PWL"]), repr(r["relative_area"])])


def cmd_area(args) -> int:
    config = _config(args, mode="pwl")
    images = [io.read_image(p) for p in args.images]
    rows = area_rows(images, args.kind, args.magnitudes, config, not args.unshifted)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_area_csv(fh, rows)
    else:
        write_area_csv(sys.stdout, rows)
    return 0


def cmd_verify(args) -> int:
    attack = io.read_attack(args.attack)
    net = load_network(args.network)
    config = _config(args)
    _check_samples(config, attack)
    labels = io.read_labels(args.labels) if args.labels else None
    if labels is not None and len(labels) != len(args.images):
        raise GeoCertError(f"{len(labels)} labels for {len(args.images)} images")
    out = _out_dir(args.out) if args.out else None
    counts = {VERIFIED: 0, FALSIFIED: 0, UNKNOWN: 0, "error": 0}
    times = []
    results = []
    for k, path in enumerate(args.images):
        t0 = time.perf_counter()
        try:
            image = io.read_image(path)
            outcome = verify(net, image, attack, config, None if labels is None else labels[k], args.timings)
            entry = {"image": Path(path).name, **outcome.to_dict()}
            counts[outcome.verdict] += 1
        except (GeoCertError, ValueError, OSError) as exc:
            entry = {"image": Path(path).name, "verdict": "error", "error": str(exc)}
            counts["error"] += 1
        times.append(time.perf_counter() - t0)
        results.append(entry)
        if out is not None:
            io.write_json(out / f"{Path(path).stem}.outcome.json", entry)
        print(f"{path}: {entry['verdict']}")
    mean_t = float(np.mean(times)) if times else 0.0
    summary = {"mode": config.mode, "images": len(args.images), **counts}
    if args.timings:
        summary["mean_time_s"] = mean_t
    if out is not None:
        io.write_json(out / "summary.json", {**summary, "results": results})
    print(f"mode={config.mode} images={len(args.images)} verified={counts[VERIFIED]} "
          f"falsified={counts[FALSIFIED]} unknown={counts[UNKNOWN]} errors={counts['error']} "
          f"mean_time={mean_t:.2f}s")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geocert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit and soundify per-pixel bounds")
    _add_fit_args(p)
    p.add_argument("--mode", choices=["linear", "pwl", "interval"], default="pwl")
    p.add_argument("--out", default="bounds", help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("soundcheck", help="check bound files against G on a dense grid")
    p.add_argument("bounds", nargs="+", help="bound JSON files written by 'fit'")
    p.add_argument("--grid", type=int, default=None,
                   help="grid points per active axis (default: about 10^4 points in total)")
    p.add_argument("--tol", type=float, default=1e-9, help="allowed residual (default 1e-9)")
    p.add_argument("--out", default=None, help="write a JSON report here")
    p.set_defaults(func=cmd_soundcheck)

    p = sub.add_parser("area", help="mean bound area of linear vs piecewise bounds over a magnitude sweep")
    _add_fit_args(p, with_attack=False)
    p.add_argument("--kind", choices=["rotation", "translation", "scaling", "shearing"], default="rotation")
    p.add_argument("--magnitudes", type=float, nargs="+", default=[1, 3, 5, 10, 15],
                   help="rotation in degrees; scaling covers [1, 1+m]; others [-m, m]")
    p.add_argument("--unshifted", action="store_true",
                   help="compare fitted bounds before soundification (faster, ignores --eps)")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_area)

    p = sub.add_parser("verify", help="certify a ReLU network against the attack")
    _add_fit_args(p)
    p.add_argument("--network", required=True, help="network JSON")
    p.add_argument("--labels", default=None, help="one integer label per image (default: clean prediction)")
    p.add_argument("--mode", choices=["linear", "pwl", "interval"], default="pwl")
    p.add_argument("--budget", type=int, default=1000, help="falsifier random samples")
    p.add_argument("--out", default=None, help="output directory for outcome JSON")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GeoCertError, OSError, ValueError) as exc:
        print(f"geocert: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
