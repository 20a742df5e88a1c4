"""Optional Pillow-backed codec for JPEG degradation and non-PGM input."""
from __future__ import annotations

import io

import numpy as np


class PillowCodec:
    def __init__(self):
        from PIL import Image  # deferred: Pillow is an optional extra

        self._Image = Image

    def encode(self, pixels, fmt, quality=None):
        im = self._Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="L")
        buf = io.BytesIO()
        kwargs = {}
        if quality is not None:
            kwargs["quality"] = int(quality)
        im.save(buf, format=fmt, **kwargs)
        return buf.getvalue()

    def decode(self, payload):
        with self._Image.open(io.BytesIO(payload)) as im:
            return np.asarray(im.convert("L"), dtype=np.float64)


def default_codec():
    """A :class:`PillowCodec` if Pillow imports, else ``None``."""
    try:
        return PillowCodec()
    except ImportError:
        return None
