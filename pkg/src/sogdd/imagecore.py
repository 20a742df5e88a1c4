"""Grayscale images, PGM I/O, padding, warping and degradations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np


class PGMFormatError(ValueError):
    """Malformed or unsupported portable graymap header."""


class PGMTruncatedError(OSError):
    """Pixel payload shorter than the header promises."""


class CodecUnavailableError(RuntimeError):
    """Raised when an operation needs an image codec and none was supplied."""


@dataclass(frozen=True)
class GrayImage:
    """Immutable 2-D luminance grid, indexed ``data[y, x]`` (row-major)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"GrayImage needs a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("GrayImage must be at least 1x1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("GrayImage values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


TRANSFORM_KINDS = ("identity", "rotation", "iso-scale", "aniso-scale", "shear", "general")


@dataclass(frozen=True)
class AffineTransform:
    """``p' = linear @ p + translation`` acting on (x, y) pixel coordinates."""

    linear: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))
    kind: str = "general"

    def __post_init__(self):
        lin = np.array(self.linear, dtype=np.float64).reshape(2, 2)
        t = np.array(self.translation, dtype=np.float64).reshape(2)
        if abs(np.linalg.det(lin)) <= 1e-12:
            raise ValueError("affine linear part is not invertible")
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        lin.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(2), kind="identity")

    @classmethod
    def rotation(cls, angle):
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, -s], [s, c]]), kind="rotation")

    @classmethod
    def iso_scale(cls, factor):
        return cls(np.diag([factor, factor]), kind="iso-scale")

    @classmethod
    def aniso_scale(cls, sx, sy):
        return cls(np.diag([sx, sy]), kind="aniso-scale")

    @classmethod
    def shear(cls, c):
        """Shear along x: ``x' = x + c*y``."""
        return cls(np.array([[1.0, c], [0.0, 1.0]]), kind="shear")

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix."""
        m = np.eye(3)
        m[:2, :2] = self.linear
        m[:2, 2] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return pts @ self.linear.T + self.translation

    def inverse(self) -> "AffineTransform":
        inv = np.linalg.inv(self.linear)
        return AffineTransform(inv, -inv @ self.translation, kind=self.kind)

    def then_translate(self, shift) -> "AffineTransform":
        return AffineTransform(self.linear, self.translation + np.asarray(shift, float), kind=self.kind)


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform normalised so that ``H[2, 2] == 1``."""

    H: np.ndarray

    def __post_init__(self):
        h = np.array(self.H, dtype=np.float64).reshape(3, 3)
        if abs(h[2, 2]) <= 1e-12:
            raise ValueError("cannot normalise homography with H[2,2] == 0")
        h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= 1e-12:
            raise ValueError("homography is not invertible")
        h.setflags(write=False)
        object.__setattr__(self, "H", h)

    @classmethod
    def from_affine(cls, t: AffineTransform):
        return cls(t.matrix())


# ---------------------------------------------------------------------------
# PGM


def _pgm_tokens(buf: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PGMFormatError("unexpected end of header")
        tokens.append(buf[start:pos])
    return tokens, pos


def decode_pgm(buf: bytes) -> GrayImage:
    if len(buf) < 2:
        raise PGMFormatError("empty or too short for a PGM header")
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMFormatError(f"not a graymap (magic {magic!r})")
    try:
        toks, pos = _pgm_tokens(buf, 3, 2)
        width, height, maxval = (int(t) for t in toks)
    except ValueError as exc:
        if isinstance(exc, PGMFormatError):
            raise
        raise PGMFormatError(f"bad header field: {exc}") from None
    if width < 1 or height < 1:
        raise PGMFormatError(f"bad dimensions {width}x{height}")
    if not 0 < maxval <= 65535:
        raise PGMFormatError(f"maxval {maxval} outside 1..65535")
    npix = width * height

    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        if pos >= len(buf):
            raise PGMTruncatedError("missing raster")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = npix * dtype.itemsize
        raster = buf[pos : pos + need]
        if len(raster) < need:
            raise PGMTruncatedError(f"raster has {len(raster)} bytes, expected {need}")
        values = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    else:
        fields = buf[pos:].split()
        if len(fields) < npix:
            raise PGMTruncatedError(f"ASCII raster has {len(fields)} values, expected {npix}")
        try:
            values = np.array([int(f) for f in fields[:npix]], dtype=np.float64)
        except ValueError:
            raise PGMFormatError("non-integer value in ASCII raster") from None
    if values.size and values.max() > maxval:
        raise PGMFormatError("pixel value exceeds maxval")
    return GrayImage(values.reshape(height, width))


def load_pgm(path) -> GrayImage:
    """Read a P2 or P5 graymap. Values are returned as floats in [0, maxval]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_pgm(buf)


def to_uint8(img: GrayImage) -> np.ndarray:
    """Clamp to [0, 255] and round half-to-even."""
    return np.rint(np.clip(img.data, 0.0, 255.0)).astype(np.uint8)


def encode_pgm(img: GrayImage, ascii: bool = False) -> bytes:
    pix = to_uint8(img)
    header = f"{'P2' if ascii else 'P5'}\n{img.width} {img.height}\n255\n".encode("ascii")
    if ascii:
        rows = (" ".join(str(v) for v in row) for row in pix)
        return header + ("\n".join(rows) + "\n").encode("ascii")
    return header + pix.tobytes()


def save_pgm(img: GrayImage, path, ascii: bool = False) -> None:
    """Write an 8-bit graymap (binary P5 unless ``ascii``)."""
    Path(path).write_bytes(encode_pgm(img, ascii=ascii))


# ---------------------------------------------------------------------------
# padding / warping


def pad_replicate(img: GrayImage, margin: int) -> GrayImage:
    if margin < 0:
        raise ValueError("margin must be >= 0")
    if margin == 0:
        return img
    return GrayImage(np.pad(img.data, margin, mode="edge"))


def bilinear_sample(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``data`` at real coordinates; outside samples clamp to the edge."""
    h, w = data.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def warp(img: GrayImage, t: AffineTransform):
    """Warp by inverse mapping with bilinear interpolation.

    The output canvas is the axis-aligned bounding box of the transformed
    pixel footprint. Returns ``(warped, forward)`` where ``forward`` maps
    input pixel coordinates to output pixel coordinates exactly.
    """
    w, h = img.width, img.height
    footprint = np.array([[-0.5, -0.5], [w - 0.5, -0.5], [w - 0.5, h - 0.5], [-0.5, h - 0.5]])
    mapped = t.apply(footprint)
    lo = mapped.min(axis=0)
    hi = mapped.max(axis=0)
    out_w = max(1, int(math.ceil(hi[0] - lo[0] - 1e-9)))
    out_h = max(1, int(math.ceil(hi[1] - lo[1] - 1e-9)))
    forward = t.then_translate(-(lo + 0.5))
    inv = forward.inverse()
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    src = np.stack([xs.ravel(), ys.ravel()], axis=1) @ inv.linear.T + inv.translation
    vals = bilinear_sample(img.data, src[:, 0], src[:, 1])
    return GrayImage(vals.reshape(out_h, out_w)), forward


# ---------------------------------------------------------------------------
# degradations


def add_gaussian_noise(img: GrayImage, stddev: float, seed: int) -> GrayImage:
    if stddev < 0:
        raise ValueError("stddev must be >= 0")
    if stddev == 0:
        return img
    rng = np.random.default_rng(seed)
    return GrayImage(img.data + rng.normal(0.0, stddev, size=img.shape))


class ImageCodec(Protocol):
    """Injected encoder/decoder for formats the core does not implement."""

    def encode(self, pixels: np.ndarray, fmt: str, quality: int | None = None) -> bytes: ...

    def decode(self, payload: bytes) -> np.ndarray: ...


def jpeg_roundtrip(img: GrayImage, quality: int, codec: ImageCodec | None) -> GrayImage:
    """Encode to JPEG and decode back through ``codec``."""
    if codec is None:
        raise CodecUnavailableError("JPEG round trip needs an image codec")
    if not 1 <= int(quality) <= 100:
        raise ValueError("JPEG quality must be in 1..100")
    payload = codec.encode(to_uint8(img), "JPEG", quality=int(quality))
    out = np.asarray(codec.decode(payload), dtype=np.float64)
    if out.shape != img.shape:
        raise ValueError(f"codec returned shape {out.shape}, expected {img.shape}")
    return GrayImage(out)


def load_image(path, codec: ImageCodec | None = None) -> GrayImage:
    """Load a PGM directly, anything else through ``codec``."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P2", b"P5"):
        return load_pgm(path)
    if codec is None:
        raise CodecUnavailableError(f"{path.name}: not a PGM and no codec available")
    return GrayImage(np.asarray(codec.decode(path.read_bytes()), dtype=np.float64))
