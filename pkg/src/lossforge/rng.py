"""Named random sub-streams derived from one root seed.

Each consumer (data, init, batches, augment, ...) draws from its own stream,
so turning one consumer on or off never shifts another's draws.
"""

import zlib

import numpy as np


def stream(seed, name):
    """Independent generator for ``name`` under root ``seed``."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf8"))])


class Streams:
    def __init__(self, seed):
        self.seed = int(seed)
        self._cache = {}

    def __getitem__(self, name):
        if name not in self._cache:
            self._cache[name] = stream(self.seed, name)
        return self._cache[name]
