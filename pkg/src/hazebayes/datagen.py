"""Synthetic hazy/clean/transmission triplets.

Real depth corpora are replaced by procedural depth maps and procedural
clean images.  Every generated pair is written twice: PNG for viewing and
PFM for lossless training and round-trip checks.  The manifest points at
the PFM files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hazemodel
from .imagecore import as_depth, as_image, load_pfm, save_image, save_pfm

__all__ = [
    "HazeTriplet",
    "DEPTH_KINDS",
    "gen_depth",
    "gen_clean",
    "sample_scatter",
    "make_triplet",
    "synthetic_dataset",
    "gen_triplets",
    "load_manifest",
]

D_MAX = 5.0
DEPTH_KINDS = ("linear-ramp", "radial", "layered-steps")
MANIFEST_VERSION = 1


@dataclass
class HazeTriplet:
    clean: np.ndarray
    hazy: np.ndarray
    trans: np.ndarray
    A: float | None = None
    beta: float | None = None


def gen_depth(h: int, w: int, kind: str = "linear-ramp", seed: int = 0, d_max: float = D_MAX):
    """Procedural depth in ``[0, d_max]``, deterministic in ``seed``."""
    if h < 1 or w < 1:
        raise ValueError("depth map dimensions must be positive")
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0.0, 0.3) * d_max
    hi = rng.uniform(0.6, 1.0) * d_max
    ii, jj = np.mgrid[0:h, 0:w].astype(np.float64)
    if kind == "linear-ramp":
        u = jj / max(w - 1, 1)
    elif kind == "radial":
        ci = (h - 1) / 2 + rng.uniform(-0.1, 0.1) * h
        cj = (w - 1) / 2 + rng.uniform(-0.1, 0.1) * w
        r = np.hypot((ii - ci) / max(h, 1), (jj - cj) / max(w, 1))
        u = r / r.max() if r.max() > 0 else r
    elif kind == "layered-steps":
        n_layers = int(rng.integers(2, 6))
        cuts = np.sort(rng.uniform(0.0, 1.0, n_layers - 1))
        level = np.searchsorted(cuts, ii / max(h - 1, 1))
        u = level / (n_layers - 1)
    else:
        raise ValueError(f"unknown depth kind {kind!r}")
    return as_depth(lo + (hi - lo) * u)


def gen_clean(h: int, w: int, seed: int = 0) -> np.ndarray:
    """A procedural haze-free image with dark-channel-friendly colours.

    A saturated background gradient overlaid with random ellipses and a
    light stripe texture; every colour keeps at least one weak channel.
    """
    rng = np.random.default_rng(seed)
    ii, jj = np.mgrid[0:h, 0:w].astype(np.float64)
    ii /= max(h - 1, 1)
    jj /= max(w - 1, 1)

    def colour():
        c = rng.uniform(0.35, 0.95, 3)
        c[rng.integers(3)] = rng.uniform(0.0, 0.12)
        return c

    c0, c1 = colour(), colour()
    mix = (0.5 + 0.5 * np.sin(math.pi * (rng.uniform(0.5, 2.0) * ii + rng.uniform(0, 2) * jj)))[..., None]
    img = mix * c0 + (1 - mix) * c1
    for _ in range(int(rng.integers(3, 7))):
        ci, cj = rng.uniform(0, 1, 2)
        ri, rj = rng.uniform(0.08, 0.3, 2)
        inside = ((ii - ci) / ri) ** 2 + ((jj - cj) / rj) ** 2 <= 1.0
        img[inside] = colour()
    freq = rng.uniform(6, 14)
    stripes = 0.06 * np.sin(2 * math.pi * freq * (ii + 0.5 * jj))[..., None]
    return as_image(np.clip(img + stripes, 0.0, 1.0))


def sample_scatter(rng, A_range=(0.7, 1.0), beta_range=(0.5, 2.0)):
    """Uniform draws of ``(A, beta)`` from the configured ranges."""
    a_lo, a_hi = A_range
    b_lo, b_hi = beta_range
    if not 0 < a_lo <= a_hi <= 1:
        raise ValueError(f"invalid A range {A_range}")
    if not 0 < b_lo <= b_hi:
        raise ValueError(f"invalid beta range {beta_range}")
    return float(rng.uniform(a_lo, a_hi)), float(rng.uniform(b_lo, b_hi))


def make_triplet(clean, depth, A: float, beta: float) -> HazeTriplet:
    t = hazemodel.transmission_from_depth(depth, beta)
    y = hazemodel.synthesize_hazy(clean, t, A)
    return HazeTriplet(as_image(clean), y, t, float(A), float(beta))


def synthetic_dataset(
    n: int,
    size: int = 64,
    seed: int = 0,
    A_range=(0.7, 1.0),
    beta_range=(0.5, 2.0),
    d_max: float = D_MAX,
) -> list:
    """In-memory triplets; image ``k`` uses depth kind ``DEPTH_KINDS[k % 3]``."""
    if n < 1:
        raise ValueError("n must be positive")
    seeds = np.random.SeedSequence(seed).spawn(n)
    out = []
    for k, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        s_clean, s_depth = (int(v) for v in rng.integers(0, 2**31, 2))
        A, beta = sample_scatter(rng, A_range, beta_range)
        clean = gen_clean(size, size, s_clean)
        depth = gen_depth(size, size, DEPTH_KINDS[k % len(DEPTH_KINDS)], s_depth, d_max)
        out.append(make_triplet(clean, depth, A, beta))
    return out


def gen_triplets(
    clean_images,
    out_dir,
    n_per_image: int = 1,
    A_range=(0.7, 1.0),
    beta_range=(0.5, 2.0),
    seed: int = 0,
    d_max: float = D_MAX,
    depth_kinds=DEPTH_KINDS,
) -> dict:
    """Write ``clean/ hazy/ trans/`` plus ``manifest.json`` under ``out_dir``.

    Returns the manifest dict.  Records are ordered by index; index ``k``
    draws its (A, beta, depth seed) from an independent child seed.
    """
    if not clean_images:
        raise ValueError("need at least one clean image")
    out = Path(out_dir)
    for sub in ("clean", "hazy", "trans"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    total = len(clean_images) * n_per_image
    width = max(4, len(str(total)))
    children = np.random.SeedSequence(seed).spawn(total)
    records = []
    k = 0
    for ci, clean in enumerate(clean_images):
        clean = as_image(clean, channels=3)
        h, w = clean.shape[:2]
        for _ in range(n_per_image):
            rng = np.random.default_rng(children[k])
            A, beta = sample_scatter(rng, A_range, beta_range)
            depth_seed = int(rng.integers(0, 2**31))
            kind = depth_kinds[k % len(depth_kinds)]
            trip = make_triplet(clean, gen_depth(h, w, kind, depth_seed, d_max), A, beta)
            name = f"{k:0{width}d}"
            paths = {
                "clean": f"clean/{name}.pfm",
                "hazy": f"hazy/{name}.pfm",
                "trans": f"trans/{name}.pfm",
                "clean_png": f"clean/{name}.png",
                "hazy_png": f"hazy/{name}.png",
                "trans_png": f"trans/{name}.png",
            }
            save_pfm(trip.clean, out / paths["clean"])
            save_pfm(trip.hazy, out / paths["hazy"])
            save_pfm(trip.trans, out / paths["trans"])
            save_image(trip.clean, out / paths["clean_png"])
            save_image(trip.hazy, out / paths["hazy_png"])
            save_image(trip.trans, out / paths["trans_png"])
            records.append(
                {
                    "index": k,
                    "source": ci,
                    **paths,
                    "A": A,
                    "beta": beta,
                    "depth_kind": kind,
                    "seed": depth_seed,
                }
            )
            k += 1
    manifest = {
        "version": MANIFEST_VERSION,
        "config": {
            "n_per_image": n_per_image,
            "A_range": list(A_range),
            "beta_range": list(beta_range),
            "d_max": d_max,
            "depth_kinds": list(depth_kinds),
            "seed": seed,
            "storage": "PFM float32 (lossless for training); PNG 8-bit previews are quantized",
        },
        "records": records,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_manifest(path) -> list:
    """Load the PFM triplets referenced by a manifest as :class:`HazeTriplet`."""
    path = Path(path)
    root = path.parent
    manifest = json.loads(path.read_text())
    triplets = []
    for rec in manifest["records"]:
        clean = load_pfm(root / rec["clean"])
        hazy = load_pfm(root / rec["hazy"])
        trans = load_pfm(root / rec["trans"])
        if not (clean.shape[:2] == hazy.shape[:2] == trans.shape[:2]):
            raise ValueError(f"record {rec.get('index')}: misaligned shapes")
        triplets.append(HazeTriplet(clean, hazy, trans, rec.get("A"), rec.get("beta")))
    return triplets
