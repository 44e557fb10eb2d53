"""Command-line front end: image IO, synthetic pairs, artifact emission.

The CLI is a thin shell over :func:`ocrdir.engine.register` /
:func:`ocrdir.engine.active_demons`: every number it writes is produced by
the library functions, never recomputed locally.  Array convention
throughout: index ``[i, j]`` is (x-column, y-row), so a PGM/PNG file row
maps to the second index; the SVG preview flips y for display.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .engine import Config, RegistrationResult, _finish, active_demons, register
from .errors import (
    CorrectionFailureError,
    InputError,
    OcrdirError,
    SolverFailureError,
)
from .field import GridSpec
from .homotopy import CompositeKind
from .meshq import det_jacobian

__all__ = [
    "RunManifest",
    "emit",
    "gen_pair",
    "load_image",
    "main",
    "read_displacement",
    "write_displacement",
]

_MAGIC = b"OCRD"
_HEADER = struct.Struct("<4sHII")  # magic, version, m, n
_VERSION = 1

#: image modes we accept, with the format maximum used for normalization
_MODE_MAX = {"L": 255.0, "I": 65535.0, "I;16": 65535.0, "I;16B": 65535.0, "I;16L": 65535.0}


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8/16-bit grayscale PGM or PNG as a [0,1] float array (m, n)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode not in _MODE_MAX:
                raise InputError(
                    f"unsupported image mode {mode!r} in {path} (grayscale 8/16-bit only)"
                )
            arr = np.asarray(img, dtype=np.float64)
    except FileNotFoundError:
        raise InputError(f"no such image file: {path}") from None
    except UnidentifiedImageError:
        raise InputError(f"not a readable PGM/PNG image: {path}") from None
    except (OSError, ValueError) as exc:  # truncated or undersized payloads
        raise InputError(f"cannot decode image {path}: {exc}") from None
    # file rows are the y axis; internal layout is [x, y]
    return arr.T / _MODE_MAX[mode]


def _centers(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(1, m + 1) / m
    y = np.arange(1, n + 1) / n
    return np.meshgrid(x, y, indexing="ij")


def _smooth_mask(mask: np.ndarray) -> np.ndarray:
    return np.clip(gaussian_filter(mask.astype(np.float64), 2.0), 0.0, 1.0)


def gen_pair(
    kind: str, m: int, n: int, seed: int = 0, shift_px: float = 2.0
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic synthetic (template, reference) pairs.

    circle_square  — centered disk (radius 0.25) vs the area-matched square;
    translated_blob — a seeded cluster of Gaussian bumps vs the same cluster
                      shifted shift_px pixels along +x (shift 0 gives T = R
                      bitwise);
    c_shape        — area-matched disk vs a C (annulus with a wedge removed).

    Mask-based kinds get 2-pixel Gaussian-smoothed edges so image gradients
    exist; the blob cluster is analytic and already smooth.  The two
    mask-based kinds are seed-independent.
    """
    if m < 32 or n < 32:
        raise InputError(f"synthetic pairs need at least 32x32, got {m}x{n}")
    x, y = _centers(m, n)
    if kind == "circle_square":
        disk = np.hypot(x - 0.5, y - 0.5) <= 0.25
        w = 0.25 * np.sqrt(np.pi) / 2.0  # equal foreground area
        square = (np.abs(x - 0.5) <= w) & (np.abs(y - 0.5) <= w)
        return _smooth_mask(disk), _smooth_mask(square)
    if kind == "translated_blob":
        rng = np.random.default_rng(seed)
        k = 4
        cx = rng.uniform(0.32, 0.68, k)
        cy = rng.uniform(0.32, 0.68, k)
        wid = rng.uniform(0.05, 0.12, k)
        amp = rng.uniform(0.5, 0.95, k)

        def cluster(xs: np.ndarray) -> np.ndarray:
            f = np.zeros_like(xs)
            for c1, c2, wd, a in zip(cx, cy, wid, amp):
                f += a * np.exp(-((xs - c1) ** 2 + (y - c2) ** 2) / (2 * wd**2))
            return np.clip(f, 0.0, 1.0)

        return cluster(x - shift_px / m), cluster(x)
    if kind == "c_shape":
        r = np.hypot(x - 0.5, y - 0.5)
        theta = np.arctan2(y - 0.5, x - 0.5)
        c = (r >= 0.15) & (r <= 0.3) & (np.abs(theta) >= np.pi / 6)
        disk = r <= np.sqrt(0.0675 * 5 / 6)  # equal area to the C
        return _smooth_mask(disk), _smooth_mask(c)
    raise InputError(f"unknown synthetic pair kind: {kind!r}")


def write_displacement(path: str | Path, d: np.ndarray) -> None:
    """Binary displacement dump: OCRD header, then u1 and u2 planes as <f8."""
    d = np.asarray(d, dtype=np.float64)
    _, m, n = d.shape
    payload = d[0].astype("<f8").tobytes() + d[1].astype("<f8").tobytes()
    Path(path).write_bytes(_HEADER.pack(_MAGIC, _VERSION, m, n) + payload)


def read_displacement(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise InputError(f"displacement file too short: {path}")
    magic, version, m, n = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise InputError(f"not a version-{_VERSION} OCRD displacement file: {path}")
    expect = _HEADER.size + 2 * m * n * 8
    if len(raw) != expect:
        raise InputError(f"displacement payload truncated ({len(raw)}/{expect} bytes): {path}")
    planes = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return planes.reshape(2, m, n).astype(np.float64)


@dataclass
class RunManifest:
    """What produced an output directory: inputs, method, resolved config."""

    template: str
    reference: str
    method: str
    seed: int | None
    config: Config
    out_dir: str


def _write_pgm8(path: Path, img: np.ndarray) -> None:
    q = np.clip(np.round(img * 255.0), 0.0, 255.0).astype(np.uint8)
    m, n = q.shape
    path.write_bytes(b"P5\n%d %d\n255\n" % (m, n) + q.T.tobytes())


def _grid_svg(omega: np.ndarray, every: int) -> str:
    m, n = omega.shape[1:]
    lines = []
    for i in list(range(0, m, every)) + [m - 1]:
        pts = " ".join(f"{omega[0, i, j]:.5f},{1 - omega[1, i, j]:.5f}" for j in range(n))
        lines.append(f'<polyline points="{pts}"/>')
    for j in list(range(0, n, every)) + [n - 1]:
        pts = " ".join(f"{omega[0, i, j]:.5f},{1 - omega[1, i, j]:.5f}" for i in range(m))
        lines.append(f'<polyline points="{pts}"/>')
    body = "\n".join(lines)
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1 1" '
        'width="512" height="512">\n'
        '<g fill="none" stroke="#444" stroke-width="0.0015">\n'
        f"{body}\n</g>\n</svg>\n"
    )


def emit(result: RegistrationResult, manifest: RunManifest) -> None:
    """Write the artifact set for one run into manifest.out_dir."""
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = GridSpec(*result.warped.shape)

    _write_pgm8(out / "warped.pgm", result.warped)
    write_displacement(out / "displacement.f64", result.displacement)

    det = det_jacobian(grid, result.omega_final)
    rows = "\n".join(",".join(f"{v:.9f}" for v in det[i]) for i in range(grid.m))
    (out / "detjac.csv").write_text(rows + "\n")

    every = max(1, min(grid.m, grid.n) // 32)
    (out / "grid.svg").write_text(_grid_svg(result.omega_final, every))

    met = result.metrics
    doc = {
        "re_ssd": None if result.perfect_match else met.re_ssd,
        "ssim": met.ssim,
        "psnr": met.psnr,
        "det_mean": met.det_mean,
        "det_min": met.det_min,
        "det_max": met.det_max,
        "r_min": met.r_min,
        "runtime_s": met.runtime_s,
        "perfect_match": result.perfect_match,
        "per_step": [asdict(s) for s in result.per_step],
    }
    (out / "metrics.json").write_text(json.dumps(doc, indent=2) + "\n")

    cfg = asdict(manifest.config)
    cfg["composite"] = manifest.config.composite.name
    man = {
        "template": manifest.template,
        "reference": manifest.reference,
        "method": manifest.method,
        "seed": manifest.seed,
        "out_dir": str(manifest.out_dir),
        "config": cfg,
    }
    (out / "manifest.json").write_text(json.dumps(man, indent=2) + "\n")


def _parse_size(text: str) -> tuple[int, int]:
    try:
        m, n = text.lower().split("x")
        return int(m), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 128x128, got {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ocrdir",
        description="Diffeomorphic image registration by optimal-control relaxation.",
    )
    src = p.add_argument_group("inputs (files or a generated pair)")
    src.add_argument("--template", help="image to deform (PGM/PNG)")
    src.add_argument("--reference", help="image to match (PGM/PNG)")
    src.add_argument(
        "--gen",
        choices=["circle_square", "translated_blob", "c_shape"],
        help="generate a synthetic pair instead of reading files",
    )
    src.add_argument("--size", type=_parse_size, default=(128, 128), help="MxN for --gen")
    src.add_argument("--seed", type=int, default=0, help="seed for --gen")
    src.add_argument("--shift-px", type=float, default=2.0, help="translated_blob shift")

    p.add_argument("--method", choices=["ocrdir", "demons"], default="ocrdir")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-per-step", action="store_true", help="print per-step stats")

    knobs = p.add_argument_group("registration weights")
    knobs.add_argument("--tau", type=float, default=5.0)
    knobs.add_argument("--beta", type=float, default=0.01)
    knobs.add_argument("--gamma", type=float, default=0.01)
    knobs.add_argument("--N", type=int, default=40, dest="N")
    knobs.add_argument("--max-inner", type=int, default=5)
    knobs.add_argument("--tol", type=float, default=1e-6)
    knobs.add_argument("--rho", type=float, default=0.01)
    knobs.add_argument("--eps", type=float, default=1e-2)
    knobs.add_argument("--sigma-eps", type=float, default=0.01)
    knobs.add_argument("--composite", choices=["P1", "P2", "P3", "P4"], default="P1")

    dem = p.add_argument_group("demons baseline")
    dem.add_argument("--demons-sigma", type=float, default=np.sqrt(10.0),
                     help="Gaussian smoothing width in pixels")
    dem.add_argument("--demons-tau", type=float, default=1.0, help="force normalization")
    dem.add_argument("--demons-iters", type=int, default=None,
                     help="iterations (default N * max-inner)")
    return p


def _demons_result(
    T: np.ndarray, R: np.ndarray, args: argparse.Namespace, started: float
) -> RegistrationResult:
    iters = args.demons_iters if args.demons_iters is not None else args.N * args.max_inner
    d = active_demons(T, R, sigma=args.demons_sigma, tau_norm=args.demons_tau, iters=iters)
    grid = GridSpec(*T.shape)
    omega = grid.cell_centers() + d
    # _finish derives warped image, mesh stats and metrics from the library
    # functions, which keeps the thin-shell invariant
    return _finish(grid, T, R, omega, per_step=[], started=started)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.gen and (args.template or args.reference):
            raise InputError("give either --gen or --template/--reference, not both")
        if args.gen:
            m, n = args.size
            T, R = gen_pair(args.gen, m, n, seed=args.seed, shift_px=args.shift_px)
            t_name = r_name = f"<gen:{args.gen}:{m}x{n}:seed={args.seed}>"
        elif args.template and args.reference:
            T = load_image(args.template)
            R = load_image(args.reference)
            t_name, r_name = args.template, args.reference
        else:
            raise InputError("need --template and --reference, or --gen")

        cfg = Config(
            tau=args.tau,
            beta=args.beta,
            gamma=args.gamma,
            N=args.N,
            max_inner=args.max_inner,
            tol=args.tol,
            rho=args.rho,
            eps=args.eps,
            sigma_eps=args.sigma_eps,
            composite=CompositeKind[args.composite],
        )
        started = time.perf_counter()
        if args.method == "ocrdir":
            result = register(T, R, cfg)
        else:
            result = _demons_result(T, R, args, started)

        manifest = RunManifest(
            template=t_name,
            reference=r_name,
            method=args.method,
            seed=args.seed if args.gen else None,
            config=cfg,
            out_dir=args.out,
        )
        emit(result, manifest)
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except CorrectionFailureError as exc:
        print(f"correction failure: {exc}", file=sys.stderr)
        return 4
    except OcrdirError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2

    met = result.metrics
    re_txt = "perfect match" if result.perfect_match else f"re_ssd={met.re_ssd:.6f}"
    print(
        f"{args.method}: {re_txt} ssim={met.ssim:.4f} "
        f"det=[{met.det_min:.3f},{met.det_max:.3f}] r_min={met.r_min:.4f} "
        f"runtime={met.runtime_s:.2f}s -> {args.out}"
    )
    if args.dump_per_step:
        for k, s in enumerate(result.per_step):
            print(
                f"step {k:3d}: t={s.t:.4f} dt={s.dt:.4f} r_min={s.r_min:.4f} "
                f"det=[{s.det_min:.4f},{s.det_max:.4f}] inner={s.inner_iters}"
            )
    return 0
