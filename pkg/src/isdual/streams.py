"""Buffered per-trajectory random streams.

A batch of trajectories advances in lock-step, but each trajectory owns its
own generators.  Variates are pulled from per-trajectory buffers, so the
numbers a trajectory sees depend only on its seed and never on which other
trajectories share its batch.
"""

import numpy as np

# spawn-key slots: which sampler in an engine, then which variate kind
PRIMARY = 0
SECONDARY = 1
_KINDS = ("standard_normal", "random", "standard_exponential")


class VariateStream:
    """Drop-in for the subset of ``numpy.random.Generator`` the samplers use.

    ``size`` arguments must have the batch size as their first entry.
    """

    def __init__(self, seeds, purpose=PRIMARY, chunk=4096):
        self.seeds = [int(s) for s in seeds]
        self.purpose = purpose
        self.chunk = int(chunk)
        self._gens = {}
        self._buf = {}
        self._pos = {}

    @property
    def batch(self):
        return len(self.seeds)

    def _generators(self, kind):
        gens = self._gens.get(kind)
        if gens is None:
            k = _KINDS.index(kind)
            gens = [
                np.random.Generator(
                    np.random.PCG64(np.random.SeedSequence(s, spawn_key=(self.purpose, k)))
                )
                for s in self.seeds
            ]
            self._gens[kind] = gens
            self._buf[kind] = np.empty((self.batch, 0))
            self._pos[kind] = 0
        return gens

    def _take(self, kind, size):
        if isinstance(size, (int, np.integer)):
            size = (int(size),)
        size = tuple(size)
        if size[0] != self.batch:
            raise ValueError(f"leading size {size[0]} != batch {self.batch}")
        k = int(np.prod(size[1:], dtype=int))
        gens = self._generators(kind)
        buf, pos = self._buf[kind], self._pos[kind]
        if pos + k > buf.shape[1]:
            need = max(self.chunk, k)
            fresh = np.stack([getattr(g, kind)(need) for g in gens])
            buf = np.concatenate([buf[:, pos:], fresh], axis=1)
            pos = 0
            self._buf[kind] = buf
        self._pos[kind] = pos + k
        return buf[:, pos:pos + k].reshape(size)

    def standard_normal(self, size):
        return self._take("standard_normal", size)

    def random(self, size):
        return self._take("random", size)

    def standard_exponential(self, size):
        return self._take("standard_exponential", size)


def trajectory_seeds(base_seed, n, start=0):
    """Seeds ``base_seed + i`` for trajectory indices ``start .. start+n-1``."""
    return [int(base_seed) + i for i in range(start, start + n)]
