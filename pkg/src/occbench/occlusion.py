"""Synthetic occlusion pairs: compositing, mask algebra, filtering and augmentation.

Masks are ``(H, W)`` boolean arrays and images ``(H, W, 4)`` uint8 RGBA
arrays, both row-major with ``[y, x]`` indexing.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from . import EmptyResultError, OccbenchError
from .benchmark import OcclusionLevel, classify_level, level_histogram
from .rng import make_rng

log = logging.getLogger(__name__)

N_TARGET_VIEWS = 6
IDENTITY_STREAM = 0xFFFF_FFFF


# ------------------------------------------------------------------ mask algebra

def _check_mask(m) -> np.ndarray:
    m = np.asarray(m, dtype=bool)
    if m.ndim != 2 or 0 in m.shape:
        raise OccbenchError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
    return m


def _check_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 4 or img.dtype != np.uint8:
        raise OccbenchError(f"image must be (H, W, 4) uint8, got {img.shape} {img.dtype}")
    return img


def mask_apply(img: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Element-wise product of an RGBA image with a binary mask."""
    img = _check_image(img)
    m = _check_mask(m)
    if img.shape[:2] != m.shape:
        raise OccbenchError(f"image {img.shape[:2]} and mask {m.shape} differ in size")
    return img * m[:, :, None].astype(np.uint8)


def occlusion_ratio(m_full: np.ndarray, m_occ: np.ndarray) -> float:
    """Fraction of the full object mask that is hidden."""
    m_full = _check_mask(m_full)
    m_occ = _check_mask(m_occ)
    if m_full.shape != m_occ.shape:
        raise OccbenchError("masks differ in size")
    full = int(np.count_nonzero(m_full))
    if full == 0:
        raise OccbenchError("full mask is empty")
    if np.any(m_occ & ~m_full):
        raise OccbenchError("visible mask is not a subset of the full mask")
    return 1.0 - np.count_nonzero(m_occ) / full


def disk(r: int) -> np.ndarray:
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def dilate(m: np.ndarray, r: int) -> np.ndarray:
    """Minkowski sum with the discrete disk of radius ``r``; outside the image reads false."""
    m = _check_mask(m)
    if r < 1:
        raise OccbenchError("radius must be >= 1")
    return ndimage.binary_dilation(m, structure=disk(r), border_value=0)


def erode(m: np.ndarray, r: int) -> np.ndarray:
    """Minkowski difference with the discrete disk of radius ``r``.

    Pixels outside the image read as true, which makes erosion the exact dual
    of :func:`dilate` and keeps closing extensive and opening anti-extensive
    for masks that touch the border.
    """
    m = _check_mask(m)
    if r < 1:
        raise OccbenchError("radius must be >= 1")
    return ndimage.binary_erosion(m, structure=disk(r), border_value=1)


def touches_boundary(m: np.ndarray, margin: int = 1) -> bool:
    """True if any set pixel lies in the ``margin``-pixel band along the image edges."""
    m = _check_mask(m)
    if margin < 0:
        raise OccbenchError("margin must be >= 0")
    if margin == 0:
        return False
    h, w = m.shape
    inner = np.zeros_like(m)
    inner[margin:h - margin, margin:w - margin] = True
    return bool(np.any(m & ~inner))


def _paste_region(canvas_shape, size, offset):
    """Slices of canvas and source for a source of ``size`` placed at ``offset`` (x, y)."""
    h, w = canvas_shape
    sh, sw = size
    dx, dy = offset
    x0, y0 = max(dx, 0), max(dy, 0)
    x1, y1 = min(dx + sw, w), min(dy + sh, h)
    if x0 >= x1 or y0 >= y1:
        return None
    return (slice(y0, y1), slice(x0, x1)), (slice(y0 - dy, y1 - dy), slice(x0 - dx, x1 - dx))


def shift_mask(m: np.ndarray, canvas_shape, offset) -> np.ndarray:
    out = np.zeros(canvas_shape, dtype=bool)
    region = _paste_region(canvas_shape, m.shape, offset)
    if region is not None:
        dst, src = region
        out[dst] = m[src]
    return out


def composite_occluder(target, m_full, occluder, occluder_mask, offset):
    """Paste ``occluder`` over ``target`` with its top-left corner at ``offset`` = (x, y).

    Returns the composite and the visible part of the target mask.
    """
    target = _check_image(target)
    m_full = _check_mask(m_full)
    occluder = _check_image(occluder)
    occluder_mask = _check_mask(occluder_mask)
    if target.shape[:2] != m_full.shape:
        raise OccbenchError("target image and full mask differ in size")
    if occluder.shape[:2] != occluder_mask.shape:
        raise OccbenchError("occluder image and mask differ in size")
    i_mix = target.copy()
    covered = np.zeros(m_full.shape, dtype=bool)
    region = _paste_region(m_full.shape, occluder_mask.shape, offset)
    if region is not None:
        dst, src = region
        sel = occluder_mask[src]
        i_mix[dst][sel] = occluder[src][sel]
        covered[dst] = sel
    return i_mix, m_full & ~covered


# ------------------------------------------------------------------ samples

@dataclass(frozen=True)
class FilterPolicy:
    min_visible_ratio: float = 0.05
    min_full_area_px: int = 1024
    boundary_margin: int = 1


@dataclass
class OcclusionSample:
    sample_id: str
    i_raw: np.ndarray
    m_full: np.ndarray
    i_mix: np.ndarray
    m_occ: np.ndarray
    augmentation: str = "none"
    aug_radius: int = 0
    is_identity_pair: bool = False
    ratio: float = field(init=False)
    level: OcclusionLevel = field(init=False)
    i_full: np.ndarray = field(init=False, repr=False)
    i_occ: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.ratio = occlusion_ratio(self.m_full, self.m_occ)
        self.level = classify_level(self.ratio)
        self.i_full = mask_apply(self.i_raw, self.m_full)
        self.i_occ = mask_apply(self.i_mix, self.m_occ)


def filter_sample(s: OcclusionSample, policy: FilterPolicy = FilterPolicy()) -> tuple[bool, str | None]:
    if touches_boundary(s.m_full, policy.boundary_margin):
        return False, "boundary"
    if np.count_nonzero(s.m_full) < policy.min_full_area_px:
        return False, "too-small"
    if 1.0 - s.ratio < policy.min_visible_ratio:
        return False, "over-occluded"
    return True, None


@dataclass(frozen=True)
class SourceInput:
    sample_id: str
    image: np.ndarray
    full_mask: np.ndarray
    occluder: np.ndarray
    occluder_mask: np.ndarray


def _place_occluder(src: SourceInput, rng: np.random.Generator) -> tuple[int, int]:
    """Offset centring the occluder's mask bounding box on a random object pixel."""
    ys, xs = np.nonzero(src.full_mask)
    k = int(rng.integers(len(ys)))
    oy, ox = np.nonzero(src.occluder_mask)
    if len(oy) == 0:
        return 0, 0
    cy = (oy.min() + oy.max()) // 2
    cx = (ox.min() + ox.max()) // 2
    return int(xs[k] - cx), int(ys[k] - cy)


def _augmented_occluder(src: SourceInput, offset, op: str, r: int):
    # pad so dilation can grow past the occluder's own canvas
    occ = np.pad(src.occluder, ((r, r), (r, r), (0, 0)))
    mask = np.pad(src.occluder_mask, r)
    mask = dilate(mask, r) if op == "dilate" else erode(mask, r)
    return occ, mask, (offset[0] - r, offset[1] - r)


# ------------------------------------------------------------------ manifest

@dataclass
class DatasetManifest:
    seed: int
    identity_fraction: float
    augment: bool
    policy: FilterPolicy
    entries: list[dict] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)
    samples: dict[str, OcclusionSample] = field(default_factory=dict, repr=False)

    @property
    def counts(self) -> dict:
        return {k: v["count"] for k, v in level_histogram(e["level"] for e in self.entries).items()}

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "identity_fraction": self.identity_fraction,
            "augment": self.augment,
            "policy": asdict(self.policy),
            "counts": self.counts,
            "entries": self.entries,
            "rejected": self.rejected,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _files_for(sample_id: str, source_id: str) -> dict:
    return {
        "i_raw": f"images/{source_id}_raw.png",
        "m_full": f"images/{source_id}_mfull.png",
        "i_full": f"images/{source_id}_full.png",
        "i_mix": f"images/{sample_id}_mix.png",
        "m_occ": f"images/{sample_id}_mocc.png",
        "i_occ": f"images/{sample_id}_occ.png",
    }


def _entry(s: OcclusionSample, source_id: str) -> dict:
    return {
        "sample_id": s.sample_id,
        "source_id": source_id,
        "files": _files_for(s.sample_id, source_id),
        "ratio": s.ratio,
        "level": s.level.value,
        "is_identity_pair": s.is_identity_pair,
        "augmentation": s.augmentation,
        "aug_radius": s.aug_radius,
        "target_views": [None] * N_TARGET_VIEWS,
    }


def build_pairs(
    inputs,
    seed: int,
    identity_fraction: float = 0.1,
    augment: bool = False,
    policy: FilterPolicy = FilterPolicy(),
    radius_range: tuple[int, int] = (1, 15),
    curation: dict[str, bool] | None = None,
    out_dir=None,
) -> DatasetManifest:
    """Synthesize occluded/unoccluded training pairs from segmented sources.

    Each source yields one base composite; with ``augment`` it also yields a
    dilated-occluder and an eroded-occluder variant (radius drawn uniformly
    from ``radius_range``). Every candidate is checked against ``policy``;
    sources whose base composite is rejected are dropped entirely.
    ``curation`` maps source ids to an external keep/reject verdict.
    Identity pairs (visible mask = full mask) are added for
    ``round(identity_fraction * kept)`` randomly chosen kept sources.

    When ``out_dir`` is given, PNGs are written under ``out_dir/images`` and
    the manifest to ``out_dir/manifest.json``.
    """
    if not 0.0 <= identity_fraction <= 1.0:
        raise OccbenchError("identity_fraction must be in [0, 1]")
    lo_r, hi_r = radius_range
    if not 1 <= lo_r <= hi_r:
        raise OccbenchError("radius range must satisfy 1 <= lo <= hi")
    manifest = DatasetManifest(seed, identity_fraction, augment, policy)
    kept: list[SourceInput] = []
    for index, src in enumerate(inputs):
        rng = make_rng(seed, index)
        if curation is not None and not curation.get(src.sample_id, True):
            manifest.rejected.append({"sample_id": src.sample_id, "reason": "curated-out"})
            continue
        if not src.full_mask.any():
            manifest.rejected.append({"sample_id": src.sample_id, "reason": "too-small"})
            continue
        offset = _place_occluder(src, rng)
        i_mix, m_occ = composite_occluder(src.image, src.full_mask, src.occluder, src.occluder_mask, offset)
        candidates = [OcclusionSample(src.sample_id, src.image, src.full_mask, i_mix, m_occ)]
        if augment:
            for op in ("dilate", "erode"):
                r = int(rng.integers(lo_r, hi_r + 1))
                occ, mask, off = _augmented_occluder(src, offset, op, r)
                v_mix, v_occ = composite_occluder(src.image, src.full_mask, occ, mask, off)
                candidates.append(OcclusionSample(
                    f"{src.sample_id}__{op}_r{r}", src.image, src.full_mask, v_mix, v_occ,
                    augmentation=op, aug_radius=r,
                ))
        for i, s in enumerate(candidates):
            ok, reason = filter_sample(s, policy)
            if not ok:
                log.info("%s: rejected (%s)", s.sample_id, reason)
                manifest.rejected.append({"sample_id": s.sample_id, "reason": reason})
                if i == 0:
                    break
                continue
            if i == 0:
                kept.append(src)
            manifest.entries.append(_entry(s, src.sample_id))
            manifest.samples[s.sample_id] = s

    if not kept:
        raise EmptyResultError("no samples survived filtering")

    n_identity = math.floor(identity_fraction * len(kept) + 0.5)
    if n_identity:
        chosen = sorted(make_rng(seed, IDENTITY_STREAM).choice(len(kept), size=n_identity, replace=False))
        for k in chosen:
            src = kept[int(k)]
            s = OcclusionSample(
                f"{src.sample_id}__identity", src.image, src.full_mask, src.image, src.full_mask,
                augmentation="identity", is_identity_pair=True,
            )
            manifest.entries.append(_entry(s, src.sample_id))
            manifest.samples[s.sample_id] = s

    if out_dir is not None:
        write_dataset(manifest, out_dir)
    return manifest


# ------------------------------------------------------------------ file IO

def read_rgba(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.array(im.convert("RGBA"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise OccbenchError(f"cannot read image {path}: {exc}") from exc


def read_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.array(im.convert("L")) >= 128
    except (OSError, ValueError) as exc:
        raise OccbenchError(f"cannot read mask {path}: {exc}") from exc


def write_rgba(img: np.ndarray, path) -> None:
    Image.fromarray(_check_image(img), mode="RGBA").save(path, format="PNG")


def write_mask(m: np.ndarray, path) -> None:
    Image.fromarray(_check_mask(m).astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def write_dataset(manifest: DatasetManifest, out_dir) -> Path:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    written: set[str] = set()
    for entry in manifest.entries:
        s = manifest.samples[entry["sample_id"]]
        files = entry["files"]
        for key, writer, arr in (
            ("i_raw", write_rgba, s.i_raw),
            ("m_full", write_mask, s.m_full),
            ("i_full", write_rgba, s.i_full),
            ("i_mix", write_rgba, s.i_mix),
            ("m_occ", write_mask, s.m_occ),
            ("i_occ", write_rgba, s.i_occ),
        ):
            if files[key] not in written:
                writer(arr, out / files[key])
                written.add(files[key])
    path = out / "manifest.json"
    path.write_text(manifest.dumps())
    return path


def read_source_dir(path) -> list[SourceInput]:
    """Load ``<id>_image.png`` / ``<id>_mask.png`` / ``<id>_occluder.png`` triples.

    The occluder's mask is ``<id>_occluder_mask.png`` when present, otherwise
    its alpha channel (>= 128).
    """
    root = Path(path)
    if not root.is_dir():
        raise OccbenchError(f"input directory {root} does not exist")
    sources = []
    for image_path in sorted(root.glob("*_image.png")):
        sid = image_path.name[: -len("_image.png")]
        image = read_rgba(image_path)
        full = read_mask(root / f"{sid}_mask.png")
        occluder = read_rgba(root / f"{sid}_occluder.png")
        occ_mask_path = root / f"{sid}_occluder_mask.png"
        occ_mask = read_mask(occ_mask_path) if occ_mask_path.exists() else occluder[:, :, 3] >= 128
        if image.shape[:2] != full.shape:
            raise OccbenchError(f"{image_path}: image and mask sizes differ")
        sources.append(SourceInput(sid, image, full, occluder, occ_mask))
    if not sources:
        raise OccbenchError(f"no *_image.png inputs found in {root}")
    return sources
