"""Named, independently reproducible random streams derived from one root seed."""
import numpy as np

STREAMS = {"split": 0, "init": 1, "sampler": 2, "search": 3, "inner_split": 4}


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name], *map(int, extra)))
    return np.random.Generator(np.random.PCG64(ss))


def subseed(seed: int, name: str, *extra: int) -> int:
    """A plain integer seed for APIs that take one (numpy legacy, numba)."""
    return int(substream(seed, name, *extra).integers(2**31 - 1))
