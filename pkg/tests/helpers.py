import numpy as np


def block_array(size=100, lo=25, hi=75, inside=200.0, outside=50.0):
    """Bright square block on a dark background; rows/cols lo..hi-1."""
    a = np.full((size, size), outside)
    a[lo:hi, lo:hi] = inside
    return a
