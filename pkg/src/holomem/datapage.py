"""4-bit fragment codec, page assembly/slicing, and the sensor channel.

A data page is a square grid of fragments. Each fragment encodes a 4-bit
symbol (0-15) as a 2x2 grid of bit cells, each cell a cell_px x cell_px
block of pixels: on-bit cells render as 1.0, off-bit cells as 0.0. The bit
order is MSB = top-left, then top-right, bottom-left, LSB = bottom-right.

The sensor channel degrades a reconstructed page in this order: per-page
min-max normalization to [0, 255], additive i.i.d. Gaussian noise, a single
integer lateral shift of the whole page (vacated border filled with zeros),
and a final clamp to [0, 255].
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass

import numpy as np

from .optics import IntensityImage

__all__ = [
    "NUM_SYMBOLS",
    "PageGeometry",
    "DataPage",
    "Fragment",
    "ChannelConfig",
    "symbol_bit_mask",
    "canonical_fragment",
    "canonical_patterns",
    "render_page",
    "random_page",
    "minmax_normalize",
    "shift_image",
    "draw_shift",
    "apply_channel",
    "slice_fragments",
    "template_decode",
    "decode_fragments",
    "write_fragments",
    "read_fragments",
    "read_fragment_header",
]

NUM_SYMBOLS = 16

FRAG_MAGIC = b"HMFRAG1\x00"


@dataclass(frozen=True)
class PageGeometry:
    """Fragment layout of a data page.

    fragment_px must equal 2 * cell_px: a fragment is a 2x2 grid of bit
    cells encoding 4 bits.
    """

    fragments_per_side: int
    fragment_px: int = 20
    cell_px: int = 10

    def __post_init__(self):
        if self.fragments_per_side < 1:
            raise ValueError(f"fragments_per_side must be >= 1, got {self.fragments_per_side}")
        if self.cell_px < 1:
            raise ValueError(f"cell_px must be >= 1, got {self.cell_px}")
        if self.fragment_px != 2 * self.cell_px:
            raise ValueError(
                f"fragment_px must be 2 * cell_px, got fragment_px={self.fragment_px}, cell_px={self.cell_px}"
            )

    @property
    def page_px(self) -> int:
        return self.fragments_per_side * self.fragment_px

    @property
    def fragments_per_page(self) -> int:
        return self.fragments_per_side ** 2


@dataclass(frozen=True)
class DataPage:
    """Grid of 4-bit symbols, one per fragment position."""

    bits: np.ndarray
    geometry: PageGeometry

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        object.__setattr__(self, "bits", bits)
        n = self.geometry.fragments_per_side
        if bits.shape != (n, n):
            raise ValueError(f"bits must have shape ({n}, {n}), got {bits.shape}")
        if np.any(bits > 15):
            raise ValueError("symbols must be in [0, 15]")


@dataclass(frozen=True)
class Fragment:
    """One fragment image with its ground-truth 4-bit class label."""

    pixels: np.ndarray
    label: int

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", pixels)
        if not (0 <= self.label < NUM_SYMBOLS):
            raise ValueError(f"label must be in [0, 15], got {self.label}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("fragment pixels must be finite")


@dataclass(frozen=True)
class ChannelConfig:
    """One simulated read channel: propagation distance plus sensor defects.

    noise_sigma is the Gaussian standard deviation on the 0-255 intensity
    scale (applied after per-page min-max normalization); max_shift_px is the
    maximum lateral misalignment per axis; seed is the master RNG seed for
    dataset generation.

    shift_per_fragment selects the granularity of the misalignment draw in
    dataset generation: each sliced fragment gets its own (dx, dy) when
    true (the default), the whole page gets a single draw when false.
    """

    z: float
    noise_sigma: float = 2.5
    max_shift_px: int = 5
    seed: int = 0
    shift_per_fragment: bool = True

    def __post_init__(self):
        if not (self.z > 0):
            raise ValueError(f"propagation distance must be positive, got {self.z}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.max_shift_px < 0:
            raise ValueError(f"max_shift_px must be >= 0, got {self.max_shift_px}")


def symbol_bit_mask(symbol: int) -> np.ndarray:
    """2x2 on/off mask of a 4-bit symbol.

    MSB = top-left, then top-right, bottom-left, LSB = bottom-right.
    """
    if not (0 <= symbol < NUM_SYMBOLS):
        raise ValueError(f"symbol must be in [0, 15], got {symbol}")
    bits = [(symbol >> 3) & 1, (symbol >> 2) & 1, (symbol >> 1) & 1, symbol & 1]
    return np.array(bits, dtype=np.float64).reshape(2, 2)


def canonical_fragment(symbol: int, cell_px: int = 10) -> np.ndarray:
    """Clean rendering of a symbol as a (2*cell_px, 2*cell_px) 0/1 image."""
    return np.kron(symbol_bit_mask(symbol), np.ones((cell_px, cell_px)))


@functools.lru_cache(maxsize=None)
def _patterns_cached(cell_px: int) -> np.ndarray:
    pats = np.stack([canonical_fragment(s, cell_px) for s in range(NUM_SYMBOLS)])
    pats.setflags(write=False)
    return pats


def canonical_patterns(cell_px: int = 10) -> np.ndarray:
    """All 16 canonical fragment images, stacked (16, fragment_px, fragment_px)."""
    return _patterns_cached(cell_px)


def render_page(page: DataPage) -> IntensityImage:
    """Paint a page: every fragment becomes its 2x2 block of bit cells."""
    geom = page.geometry
    n = geom.fragments_per_side
    # expand the (n, n) symbol grid into the (2n, 2n) bit-cell grid
    cells = np.zeros((2 * n, 2 * n), dtype=np.float64)
    bits = page.bits.astype(np.int64)
    cells[0::2, 0::2] = (bits >> 3) & 1
    cells[0::2, 1::2] = (bits >> 2) & 1
    cells[1::2, 0::2] = (bits >> 1) & 1
    cells[1::2, 1::2] = bits & 1
    image = np.kron(cells, np.ones((geom.cell_px, geom.cell_px)))
    return IntensityImage(image)


def random_page(geometry: PageGeometry, seed) -> DataPage:
    """Uniform random page; `seed` may be an int or a numpy Generator."""
    rng = np.random.default_rng(seed)
    n = geometry.fragments_per_side
    bits = rng.integers(0, NUM_SYMBOLS, size=(n, n), dtype=np.uint8)
    return DataPage(bits, geometry)


def minmax_normalize(a: np.ndarray, scale: float = 255.0) -> np.ndarray:
    """Affine map of `a` onto [0, scale]; a constant input maps to all
    zeros, and an already-normalized input passes through unchanged (the
    operation is exactly idempotent)."""
    a = np.asarray(a, dtype=np.float64)
    lo = float(a.min())
    hi = float(a.max())
    if hi == lo:
        return np.zeros_like(a)
    if lo == 0.0 and hi == scale:
        return a.copy()
    return (a - lo) / (hi - lo) * scale


def shift_image(a: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by integer offsets, out[y, x] = in[y - dy, x - dx]; vacated
    border pixels are filled with zeros (dark sensor area)."""
    shifted = np.zeros_like(a)
    h, w = a.shape
    ys_dst = slice(max(dy, 0), h + min(dy, 0))
    xs_dst = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    shifted[ys_dst, xs_dst] = a[ys_src, xs_src]
    return shifted


def draw_shift(config: ChannelConfig, rng: np.random.Generator) -> tuple[int, int]:
    """One misalignment draw: dx, dy uniform on [-max_shift_px, +max_shift_px]."""
    m = config.max_shift_px
    dx, dy = (int(v) for v in rng.integers(-m, m + 1, size=2))
    return dx, dy


def apply_channel(
    clean_reconstruction: IntensityImage, config: ChannelConfig, rng: np.random.Generator
) -> tuple[IntensityImage, tuple[int, int]]:
    """Degrade a reconstructed page with sensor noise and misalignment.

    Steps: min-max normalize to [0, 255]; add N(0, sigma^2) per pixel;
    translate the whole page by integer (dx, dy) drawn uniformly from
    [-max_shift_px, +max_shift_px] per axis (column and row offsets
    respectively, zero fill); clamp to [0, 255].

    Returns the degraded page and the drawn shift. The shift is diagnostic
    only; classifiers never see it. Fragment-granular misalignment
    (ChannelConfig.shift_per_fragment) is applied by the dataset pipeline
    after slicing instead of here; this operation always shifts whole pages.
    """
    a = minmax_normalize(clean_reconstruction.data, 255.0)
    if config.noise_sigma > 0:
        a = a + rng.normal(0.0, config.noise_sigma, size=a.shape)
    dx, dy = draw_shift(config, rng)
    out = np.clip(shift_image(a, dx, dy), 0.0, 255.0)
    return IntensityImage(out), (dx, dy)


def slice_fragments(page_image: IntensityImage, page_bits: DataPage) -> list[Fragment]:
    """Cut a page image into labeled fragments along the nominal grid.

    Misalignment introduced by apply_channel is deliberately not
    compensated. Fragments are returned in row-major order.
    """
    geom = page_bits.geometry
    n = geom.fragments_per_side
    fp = geom.fragment_px
    if page_image.data.shape != (n * fp, n * fp):
        raise ValueError(
            f"page image shape {page_image.data.shape} does not match geometry ({n * fp}, {n * fp})"
        )
    tiles = page_image.data.reshape(n, fp, n, fp).transpose(0, 2, 1, 3)
    labels = page_bits.bits
    return [
        Fragment(tiles[i, j], int(labels[i, j]))
        for i in range(n)
        for j in range(n)
    ]


def template_decode(fragment_pixels: np.ndarray, cell_px: int = 10) -> int:
    """Nearest-template decode of a fragment to its 4-bit class.

    A matched-filter receiver with automatic gain control: the on-level is
    estimated as the mean of the brightest cell-worth of pixels, the
    fragment is rescaled by it, and the result is scored against the 16
    canonical patterns by squared L2 distance (cross-correlation corrected
    for template energy). Returns the argmin; ties break to the lowest
    class index. Invariant to any positive intensity scale; an all-zero
    (or non-positive) fragment decodes to class 0.
    """
    f = np.asarray(fragment_pixels, dtype=np.float64)
    return int(decode_fragments(f[None, :, :], cell_px)[0])


def decode_fragments(fragments: np.ndarray, cell_px: int = 10) -> np.ndarray:
    """Vectorized template decode of a stack of fragments (N, fp, fp)."""
    pats = canonical_patterns(cell_px)
    f = np.asarray(fragments, dtype=np.float64)
    if f.shape[1:] != pats.shape[1:]:
        raise ValueError(f"fragment shape {f.shape[1:]} does not match canonical {pats.shape[1:]}")
    n = f.shape[0]
    flat = f.reshape(n, -1)
    cell_area = cell_px * cell_px
    gains = np.sort(flat, axis=1)[:, -cell_area:].mean(axis=1)
    safe = np.where(gains > 0.0, gains, 1.0)
    g = flat / safe[:, None]
    d = ((g[:, None, :] - pats.reshape(1, NUM_SYMBOLS, -1)) ** 2).sum(axis=2)
    # argmin takes the first minimum, so ties break to the lowest class
    out = np.argmin(d, axis=1)
    out[gains <= 0.0] = 0
    return out


# ---------------------------------------------------------------------------
# Fragment dataset container: magic "HMFRAG1\0", little-endian u32
# fragment_px and count, then `count` records of (u8 label,
# fragment_px^2 float32 pixels, row-major, scaled to [0, 1]).
# ---------------------------------------------------------------------------


def _record_dtype(fragment_px: int) -> np.dtype:
    return np.dtype([("label", "u1"), ("pixels", "<f4", (fragment_px * fragment_px,))])


def write_fragments(path, pixels: np.ndarray, labels: np.ndarray) -> None:
    """Write a fragment dataset. pixels: (N, fp, fp) floats in [0, 1]."""
    pixels = np.asarray(pixels)
    labels = np.asarray(labels)
    if pixels.ndim != 3 or pixels.shape[1] != pixels.shape[2]:
        raise ValueError(f"pixels must be (N, fp, fp), got {pixels.shape}")
    if labels.shape != (pixels.shape[0],):
        raise ValueError("labels length must match pixel count")
    if np.any(labels > 15):
        raise ValueError("labels must be in [0, 15]")
    fp = pixels.shape[1]
    records = np.empty(pixels.shape[0], dtype=_record_dtype(fp))
    records["label"] = labels.astype(np.uint8)
    records["pixels"] = pixels.reshape(pixels.shape[0], -1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(FRAG_MAGIC)
        fh.write(struct.pack("<II", fp, pixels.shape[0]))
        fh.write(records.tobytes())


def read_fragment_header(path) -> dict:
    """Parse just the header of a fragment dataset file."""
    with open(path, "rb") as fh:
        magic = fh.read(len(FRAG_MAGIC))
        if magic != FRAG_MAGIC:
            raise ValueError(f"{path}: not a fragment dataset (bad magic {magic!r})")
        fp, count = struct.unpack("<II", fh.read(8))
    return {"fragment_px": fp, "count": count}


def read_fragments(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a fragment dataset; returns (pixels (N, fp, fp) float32, labels (N,) uint8)."""
    header = read_fragment_header(path)
    fp, count = header["fragment_px"], header["count"]
    expected = count * _record_dtype(fp).itemsize
    with open(path, "rb") as fh:
        fh.seek(len(FRAG_MAGIC) + 8)
        raw = fh.read()
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated dataset ({len(raw)} payload bytes, expected {expected})")
    records = np.frombuffer(raw, dtype=_record_dtype(fp))
    labels = records["label"].copy()
    pixels = records["pixels"].reshape(count, fp, fp).copy()
    if np.any(labels > 15):
        raise ValueError(f"{path}: corrupt labels outside [0, 15]")
    if not np.all(np.isfinite(pixels)):
        raise ValueError(f"{path}: non-finite pixel values")
    return pixels, labels
