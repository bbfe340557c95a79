"""Seed plumbing: one root seed, independent per-learner sub-seeds."""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def sub_seed(root: int, index: int) -> int:
    """Seed of stream ``index`` under ``root``.

    Depends only on (root, index), so adding learners never changes the
    streams of earlier ones.
    """
    return splitmix64(splitmix64(root & _MASK) ^ (index & _MASK))


def generator(root: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(sub_seed(root, index))
