"""Synthetic underwater dataset construction from RGB-D corpora.

A corpus directory holds clear images as ``<stem>.png`` with depth as either
``<stem>_depth.png`` (16-bit) or ``<stem>_depth.npy`` (float array). Each
built record is a "quad": the degraded image, its ground truth, the
transmission map, and the background light, plus provenance. Images persist
as 8-bit PNG; transmission and background persist as float32 in a sidecar
``.npz`` so feedback losses see exactly the values used at synthesis time.
"""

from __future__ import annotations

import json
import logging
import os
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError, ValidationError
from .physics import DegradationParams, clip_for_export, compute_transmission, degrade

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "uwenhance-manifest-v1"
TRAIN_RESOLUTION = 256
ATTENUATION_CEILING = 3.0


@dataclass(frozen=True)
class WaterTypeSpec:
    """Parameter ranges for one water type: value = base + span * rand()."""

    type_id: str
    nrer_base: tuple
    nrer_span: tuple
    bg_base: tuple
    bg_span: tuple

    def __post_init__(self):
        nb, ns = np.asarray(self.nrer_base), np.asarray(self.nrer_span)
        bb, bs = np.asarray(self.bg_base), np.asarray(self.bg_span)
        for name, arr in [("nrer_base", nb), ("nrer_span", ns), ("bg_base", bb), ("bg_span", bs)]:
            if arr.shape != (3,):
                raise ValidationError(f"{name} must have 3 entries")
        if not np.all((nb > 0) & (nb + ns <= 1)) or (ns < 0).any():
            raise ValidationError(f"nrer range invalid for type {self.type_id}")
        if not np.all((bb >= 0) & (bb + bs <= 1)) or (bs < 0).any():
            raise ValidationError(f"background range invalid for type {self.type_id}")


# Per-channel (R, G, B) ranges for the three water types, from clear offshore
# water (b) to turbid deep water (d); (d) is deterministic.
WATER_TYPES = {
    "b": WaterTypeSpec(
        "b",
        nrer_base=(0.79, 0.92, 0.94),
        nrer_span=(0.06, 0.06, 0.05),
        bg_base=(0.05, 0.60, 0.70),
        bg_span=(0.15, 0.30, 0.29),
    ),
    "c": WaterTypeSpec(
        "c",
        nrer_base=(0.71, 0.82, 0.80),
        nrer_span=(0.04, 0.06, 0.07),
        bg_base=(0.05, 0.60, 0.70),
        bg_span=(0.15, 0.30, 0.29),
    ),
    "d": WaterTypeSpec(
        "d",
        nrer_base=(0.67, 0.73, 0.67),
        nrer_span=(0.0, 0.0, 0.0),
        bg_base=(0.15, 0.80, 0.70),
        bg_span=(0.0, 0.0, 0.0),
    ),
}


@dataclass(frozen=True)
class RgbdSample:
    """A clear image paired with its per-pixel depth map."""

    image: np.ndarray  # H x W x 3 float in [0, 1]
    depth: np.ndarray  # H x W, raw depth units, nonnegative
    id: str

    def __post_init__(self):
        if self.image.shape[:2] != self.depth.shape:
            raise ValidationError(
                f"{self.id}: image {self.image.shape[:2]} and depth "
                f"{self.depth.shape} sizes differ"
            )
        if (np.asarray(self.depth) < 0).any():
            raise ValidationError(f"{self.id}: depth has negative values")


@dataclass(frozen=True)
class SyntheticQuad:
    """One training record: degraded image, truth, transmission, background."""

    underwater: np.ndarray
    ground_truth: np.ndarray
    transmission: np.ndarray
    background: np.ndarray
    provenance: dict

    def reconstruction_error(self) -> float:
        """Max abs deviation of the stored degraded image from re-degrading
        the stored truth; the self-consistency invariant."""
        redone = degrade(self.ground_truth, self.transmission, self.background)
        return float(np.abs(clip_for_export(redone) - self.underwater).max())


def sample_params(
    spec: WaterTypeSpec, rng: np.random.Generator, depth_scale: float = 1.0
) -> DegradationParams:
    """Draw per-channel parameters uniformly from the spec's ranges."""
    nrer = np.asarray(spec.nrer_base) + np.asarray(spec.nrer_span) * rng.random(3)
    bg = np.asarray(spec.bg_base) + np.asarray(spec.bg_span) * rng.random(3)
    return DegradationParams(nrer=nrer, background=bg, depth_scale=depth_scale)


def _resize_image(image: np.ndarray, size: int) -> np.ndarray:
    im = Image.fromarray((clip_for_export(image) * 255.0 + 0.5).astype(np.uint8))
    return np.asarray(im.resize((size, size), Image.BILINEAR), dtype=np.float64) / 255.0


def _resize_depth(depth: np.ndarray, size: int) -> np.ndarray:
    # nearest-neighbor: bilinear would blend depths across object edges
    im = Image.fromarray(depth.astype(np.float32))
    return np.asarray(im.resize((size, size), Image.NEAREST), dtype=np.float64)


def normalize_depth(depth: np.ndarray, max_depth: float | None = None) -> np.ndarray:
    """Map raw depth to [0, ATTENUATION_CEILING] attenuation units."""
    depth = np.asarray(depth, dtype=np.float64)
    ceiling = max_depth if max_depth is not None else float(depth.max())
    if ceiling <= 0:
        return np.zeros_like(depth)
    return np.clip(depth / ceiling, 0.0, 1.0) * ATTENUATION_CEILING


def synthesize_quad(
    sample: RgbdSample,
    spec: WaterTypeSpec,
    rng: np.random.Generator,
    resolution: int | None = TRAIN_RESOLUTION,
    max_depth: float | None = None,
    depth_scale: float = 1.0,
    seed_note=None,
) -> SyntheticQuad:
    """Degrade one RGB-D sample with parameters drawn for the given type.

    resolution=None keeps the native size (test split); otherwise the image
    is resized bilinearly and the depth with nearest-neighbor.
    """
    params = sample_params(spec, rng, depth_scale=depth_scale)
    image, depth = sample.image, normalize_depth(sample.depth, max_depth)
    if resolution is not None:
        image = _resize_image(image, resolution)
        depth = _resize_depth(depth, resolution)
    t = compute_transmission(depth, params)
    underwater = degrade(image, t, params.background)
    provenance = {
        "source_id": sample.id,
        "type_id": spec.type_id,
        "params": params.to_dict(),
        "seed": seed_note,
    }
    return SyntheticQuad(
        underwater=underwater,
        ground_truth=image,
        transmission=t,
        background=params.background,
        provenance=provenance,
    )


# --- corpus I/O ---------------------------------------------------------


def load_image(path: str) -> np.ndarray:
    """Decode an image file to H x W x 3 float in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def save_image(path: str, image: np.ndarray) -> None:
    """Write an image as 8-bit PNG, clipping to [0, 1] first."""
    arr = (clip_for_export(image) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr).save(path)


def _load_depth(stem_path: str) -> np.ndarray:
    npy = stem_path + "_depth.npy"
    png = stem_path + "_depth.png"
    if os.path.exists(npy):
        return np.asarray(np.load(npy), dtype=np.float64)
    if os.path.exists(png):
        with Image.open(png) as im:
            return np.asarray(im, dtype=np.float64)
    raise DataError(f"no depth file for {stem_path} (tried _depth.npy, _depth.png)")


def scan_corpus(corpus_dir: str) -> list[str]:
    """Stems in the corpus that have both an image and a depth file."""
    if not os.path.isdir(corpus_dir):
        raise DataError(f"corpus directory not found: {corpus_dir}")
    stems = []
    for name in sorted(os.listdir(corpus_dir)):
        if name.endswith(".png") and not name.endswith("_depth.png"):
            stems.append(os.path.join(corpus_dir, name[: -len(".png")]))
    return stems


def load_rgbd(stem_path: str) -> RgbdSample:
    image = load_image(stem_path + ".png")
    depth = _load_depth(stem_path)
    return RgbdSample(image=image, depth=depth, id=os.path.basename(stem_path))


def _record_rng(seed: int, record_id: str) -> np.random.Generator:
    # independent stream per record so parallel building cannot reorder draws
    return np.random.default_rng([seed, zlib.crc32(record_id.encode())])


def build_dataset(
    corpus_dir: str,
    specs: list[WaterTypeSpec],
    count_per_type: int,
    out_dir: str,
    seed: int,
    resolution: int | None = TRAIN_RESOLUTION,
    max_depth: float | None = None,
    split: str = "train",
) -> dict:
    """Build count_per_type quads per water type and write them plus a
    manifest under out_dir. Fully reproducible from the seed; unreadable
    sources are skipped and listed in the manifest."""
    stems = scan_corpus(corpus_dir)
    os.makedirs(out_dir, exist_ok=True)
    records, skipped = [], []
    samples: list[RgbdSample] = []
    for stem in stems:
        try:
            samples.append(load_rgbd(stem))
        except Exception as exc:  # corrupt files are reported, never fatal
            skipped.append({"source": stem, "reason": str(exc)})
            log.warning("skipping unreadable source %s: %s", stem, exc)
    if count_per_type > 0 and not samples:
        raise DataError(f"no readable RGB-D samples in {corpus_dir}")

    for spec in specs:
        for i in range(count_per_type):
            sample = samples[i % len(samples)]
            record_id = f"{spec.type_id}_{i:05d}_{sample.id}"
            rng = _record_rng(seed, record_id)
            quad = synthesize_quad(
                sample, spec, rng, resolution=resolution,
                max_depth=max_depth, seed_note=seed,
            )
            files = {
                "underwater": f"{record_id}_underwater.png",
                "ground_truth": f"{record_id}_truth.png",
                "aux": f"{record_id}_aux.npz",
            }
            save_image(os.path.join(out_dir, files["underwater"]), quad.underwater)
            save_image(os.path.join(out_dir, files["ground_truth"]), quad.ground_truth)
            np.savez(
                os.path.join(out_dir, files["aux"]),
                transmission=quad.transmission.astype(np.float32),
                background=np.asarray(quad.background, dtype=np.float32),
            )
            records.append(
                {
                    "id": record_id,
                    "split": split,
                    "files": files,
                    "provenance": quad.provenance,
                }
            )

    manifest = {
        "format": MANIFEST_FORMAT,
        "seed": seed,
        "resolution": resolution,
        "records": records,
        "skipped": skipped,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def load_manifest(dataset_dir: str) -> dict:
    path = os.path.join(dataset_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    with open(path) as f:
        manifest = json.load(f)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DataError(f"unrecognized manifest format in {path}")
    return manifest


def load_quad(dataset_dir: str, record: dict) -> SyntheticQuad:
    """Load one persisted quad back into float arrays."""
    files = record["files"]
    underwater = load_image(os.path.join(dataset_dir, files["underwater"]))
    truth = load_image(os.path.join(dataset_dir, files["ground_truth"]))
    with np.load(os.path.join(dataset_dir, files["aux"])) as aux:
        t = np.asarray(aux["transmission"], dtype=np.float64)
        bg = np.asarray(aux["background"], dtype=np.float64)
    return SyntheticQuad(
        underwater=underwater,
        ground_truth=truth,
        transmission=t,
        background=bg,
        provenance=record.get("provenance", {}),
    )


def load_real_pool(
    pool_dir: str, resolution: int | None = TRAIN_RESOLUTION
) -> tuple[list[np.ndarray], list[dict]]:
    """Decode a directory of unpaired real underwater photos.

    Returns (pool, skipped); undecodable files become warning records.
    An empty or missing directory yields an empty pool (callers that need
    domain adaptation must reject that themselves).
    """
    pool, skipped = [], []
    if not os.path.isdir(pool_dir):
        return pool, skipped
    for name in sorted(os.listdir(pool_dir)):
        path = os.path.join(pool_dir, name)
        if not os.path.isfile(path):
            continue
        try:
            img = load_image(path)
        except Exception as exc:
            skipped.append({"source": path, "reason": str(exc)})
            log.warning("skipping unreadable real image %s: %s", path, exc)
            continue
        if resolution is not None:
            img = _resize_image(img, resolution)
        pool.append(img)
    return pool, skipped
