"""Deterministic seeded randomness with independent named substreams.

Uniform bits come from numpy's counter-based Philox generator, keyed by
(seed, substream name) through blake2b, so the streams used for base
sampling, MCMC proposals, and parameter init never interact.  Normal draws
are produced by the Box-Muller transform on the uniform stream; together
with the serializable Philox state this makes checkpoint-resumed runs
reproduce every draw exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np

TWO_PI = 2.0 * np.pi


class Rng:
    """Seeded random source; same seed and call sequence give the same stream."""

    def __init__(self, seed):
        self.seed = int(seed)
        self._streams = {}

    def _generator(self, name):
        gen = self._streams.get(name)
        if gen is None:
            digest = hashlib.blake2b(f"{self.seed}:{name}".encode(), digest_size=16).digest()
            gen = np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))
            self._streams[name] = gen
        return gen

    def uniform(self, n, d, lo=0.0, hi=1.0, stream="default"):
        """n x d matrix of uniforms on [lo, hi)."""
        if n < 1 or d < 1:
            raise ValueError(f"uniform: need n, d >= 1, got {n} x {d}")
        if not lo < hi:
            raise ValueError(f"uniform: need lo < hi, got [{lo}, {hi})")
        return lo + (hi - lo) * self._generator(stream).random((n, d))

    def normal(self, n, d, stream="default"):
        """n x d matrix of standard normals via Box-Muller."""
        if n < 1 or d < 1:
            raise ValueError(f"normal: need n, d >= 1, got {n} x {d}")
        count = n * d
        half = (count + 1) // 2
        u = self._generator(stream).random((2, half))
        radius = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1-u in (0, 1], no log(0)
        angle = TWO_PI * u[1]
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return z[:count].reshape(n, d)

    # -- persistence ---------------------------------------------------------

    def state(self):
        """JSON-serializable snapshot of the seed and all touched substreams."""
        streams = {}
        for name, gen in self._streams.items():
            st = gen.bit_generator.state
            streams[name] = {
                "counter": [int(v) for v in st["state"]["counter"]],
                "key": [int(v) for v in st["state"]["key"]],
                "buffer": [int(v) for v in st["buffer"]],
                "buffer_pos": int(st["buffer_pos"]),
                "has_uint32": int(st["has_uint32"]),
                "uinteger": int(st["uinteger"]),
            }
        return {"seed": self.seed, "streams": streams}

    def set_state(self, state):
        self.seed = int(state["seed"])
        self._streams = {}
        for name, st in state["streams"].items():
            gen = np.random.Generator(np.random.Philox())
            gen.bit_generator.state = {
                "bit_generator": "Philox",
                "state": {
                    "counter": np.array(st["counter"], dtype=np.uint64),
                    "key": np.array(st["key"], dtype=np.uint64),
                },
                "buffer": np.array(st["buffer"], dtype=np.uint64),
                "buffer_pos": int(st["buffer_pos"]),
                "has_uint32": int(st["has_uint32"]),
                "uinteger": int(st["uinteger"]),
            }
            self._streams[name] = gen

    @classmethod
    def from_state(cls, state):
        rng = cls(state["seed"])
        rng.set_state(state)
        return rng
