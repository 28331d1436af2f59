import numpy as np


def random_psd_block(rng, scale=1.0, floor=0.25):
    """Random 2x2 PSD block with determinant >= floor**2 (stored entries)."""
    L = rng.normal(size=(2, 2)) * scale
    M = L @ L.T + floor * np.eye(2)
    return np.array([M[0, 0], M[0, 1], M[1, 1]])
