"""Discretised space-time white noise on [0, T] x T.

Every cell ``(k, j)`` of an ``n_t x n_x`` grid carries the white-noise mass of
that cell, a centred Gaussian with variance ``dt * dx``.  Values come from a
keyed counter-based generator (numpy's Philox): the key is derived from
``(seed, stream_id)`` and cell ``c = k * n_x + j`` always reads the ``c``-th
64-bit output.  Any sub-block can therefore be regenerated on its own, which
is what coarsening, restarting and future resampling rely on.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import struct

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import ndtri

from .errors import InputError

_TWO_M53 = 2.0 ** -53


@lru_cache(maxsize=1 << 16)
def philox_key(seed, stream_id):
    """128-bit Philox key for ``(seed, stream_id)``."""
    return SeedSequence([int(seed), int(stream_id)]).generate_state(2, np.uint64)


def standard_normals(key, start, count):
    """Standard normals for cells ``start .. start + count - 1`` of a keyed stream."""
    bg = Philox(key=key)
    block, offset = divmod(int(start), 4)
    if block:
        bg.advance(block)
    raw = bg.random_raw(count + offset)[offset:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


@dataclass(frozen=True)
class NoiseBatch:
    """Lazily generated noise for a batch of independent streams.

    ``keys`` holds one ``(seed, stream_id)`` pair per replicate.  A future
    segment ``(row, reseeds)`` replaces every row ``>= row`` by cells drawn
    from ``(reseed, stream_id)``; ``factors`` block-sums fine cells.
    """

    n_t: int
    n_x: int
    T: float
    keys: tuple
    factors: tuple = (1, 1)
    futures: tuple = ()

    def __post_init__(self):
        if self.n_t < 1 or self.n_x < 1:
            raise InputError("n_t and n_x must be >= 1")
        if not 0 < self.T <= 1:
            raise InputError("horizon T must lie in (0, 1]")

    @classmethod
    def from_seeds(cls, n_t, n_x, T, seed, streams):
        streams = [int(s) for s in np.atleast_1d(streams)]
        return cls(int(n_t), int(n_x), float(T), tuple((int(seed), s) for s in streams))

    @property
    def dt(self):
        return self.T / self.n_t

    @property
    def dx(self):
        return 1.0 / self.n_x

    @property
    def n_streams(self):
        return len(self.keys)

    @property
    def fine_shape(self):
        ft, fx = self.factors
        return self.n_t * ft, self.n_x * fx

    def _segments(self, i):
        """Row breakpoints and seeds for stream ``i`` on the fine grid."""
        seed, stream = self.keys[i]
        segs = [(0, seed)]
        ft = self.factors[0]
        for row, reseeds in self.futures:
            segs = [(r, s) for r, s in segs if r < row * ft]
            segs.append((row * ft, reseeds[i]))
        return stream, segs

    def _fine_rows(self, i, k0, k1):
        n_fine = self.fine_shape[1]
        stream, segs = self._segments(i)
        out = np.empty((k1 - k0, n_fine))
        bounds = [r for r, _ in segs[1:]] + [np.inf]
        for (r0, seed), r1 in zip(segs, bounds):
            a, b = max(k0, r0), min(k1, r1)
            if a >= b:
                continue
            z = standard_normals(philox_key(seed, stream), a * n_fine, (b - a) * n_fine)
            out[a - k0:b - k0] = z.reshape(b - a, n_fine)
        return out

    def rows(self, k0, k1):
        """Increments of rows ``k0 .. k1 - 1`` with shape ``(n_streams, k1 - k0, n_x)``."""
        if not 0 <= k0 <= k1 <= self.n_t:
            raise InputError(f"row range [{k0}, {k1}) outside 0..{self.n_t}")
        ft, fx = self.factors
        n_fine_t, n_fine_x = self.fine_shape
        scale = np.sqrt((self.T / n_fine_t) * (1.0 / n_fine_x))
        out = np.empty((self.n_streams, k1 - k0, self.n_x))
        for i in range(self.n_streams):
            z = self._fine_rows(i, k0 * ft, k1 * ft) * scale
            if ft > 1 or fx > 1:
                z = z.reshape(k1 - k0, ft, self.n_x, fx).sum(axis=(1, 3))
            out[i] = z
        return out

    def coarsen(self, ft, fx):
        ft, fx = int(ft), int(fx)
        if ft < 1 or fx < 1 or self.n_t % ft or self.n_x % fx:
            raise InputError(f"factors ({ft}, {fx}) do not divide ({self.n_t}, {self.n_x})")
        futures = []
        for row, reseeds in self.futures:
            if row % ft:
                raise InputError("coarsening would split a resampled future segment")
            futures.append((row // ft, reseeds))
        return NoiseBatch(self.n_t // ft, self.n_x // fx, self.T, self.keys,
                          (self.factors[0] * ft, self.factors[1] * fx), tuple(futures))

    def row_of(self, s):
        k = s / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-9 * max(1.0, abs(k)) or not 0 <= kr <= self.n_t:
            raise InputError(f"time {s} is not on the noise time grid (dt = {self.dt})")
        return kr

    def split_at(self, s, reseed):
        """Keep increments on [0, s]; resample (s, T] from ``reseed``.

        ``reseed`` is one integer for all streams or one per stream.
        """
        row = self.row_of(s)
        reseeds = np.broadcast_to(np.asarray(reseed, dtype=np.int64), (self.n_streams,))
        return NoiseBatch(self.n_t, self.n_x, self.T, self.keys, self.factors,
                          self.futures + ((row, tuple(int(r) for r in reseeds)),))

    def select(self, indices):
        idx = list(np.atleast_1d(indices))
        futures = tuple((row, tuple(rs[i] for i in idx)) for row, rs in self.futures)
        return NoiseBatch(self.n_t, self.n_x, self.T, tuple(self.keys[i] for i in idx),
                          self.factors, futures)

    def repeat(self, m):
        """Each stream repeated ``m`` times, stream-major (copy ``j`` of stream ``i`` at ``i * m + j``)."""
        keys = tuple(k for k in self.keys for _ in range(m))
        futures = tuple((row, tuple(r for r in rs for _ in range(m))) for row, rs in self.futures)
        return NoiseBatch(self.n_t, self.n_x, self.T, keys, self.factors, futures)

    def grid(self, i=0):
        """Materialise stream ``i`` as a :class:`NoiseGrid`."""
        seed, stream = self.keys[i]
        return NoiseGrid(self.n_t, self.n_x, self.T, seed, stream, self.select([i]).rows(0, self.n_t)[0])


@dataclass(frozen=True)
class NoiseGrid:
    """A single materialised noise realisation (``increments`` has shape ``(n_t, n_x)``)."""

    n_t: int
    n_x: int
    T: float
    seed: int
    stream_id: int
    increments: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.shape != (self.n_t, self.n_x):
            raise InputError(f"increments shape {inc.shape} != ({self.n_t}, {self.n_x})")
        if not np.all(np.isfinite(inc)):
            raise InputError("noise increments must be finite")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def dt(self):
        return self.T / self.n_t

    @property
    def dx(self):
        return 1.0 / self.n_x

    @property
    def n_streams(self):
        return 1

    def rows(self, k0, k1):
        if not 0 <= k0 <= k1 <= self.n_t:
            raise InputError(f"row range [{k0}, {k1}) outside 0..{self.n_t}")
        return self.increments[None, k0:k1]

    def row_of(self, s):
        return NoiseBatch.row_of(self, s)

    def __eq__(self, other):
        if not isinstance(other, NoiseGrid):
            return NotImplemented
        return (self.n_t, self.n_x, self.T, self.seed, self.stream_id) == (
            other.n_t, other.n_x, other.T, other.seed, other.stream_id
        ) and np.array_equal(self.increments, other.increments)

    __hash__ = None


def sample_noise(n_t, n_x, T, seed, stream_id=0):
    """Sample one noise grid; identical arguments give bit-identical increments."""
    if int(n_t) != n_t or int(n_x) != n_x or n_t < 1 or n_x < 1:
        raise InputError("n_t and n_x must be positive integers")
    if not 0 < T <= 1:
        raise InputError("horizon T must lie in (0, 1]")
    return NoiseBatch.from_seeds(n_t, n_x, T, seed, [stream_id]).grid(0)


def coarsen(noise, ft, fx):
    """Block-sum ``ft x fx`` cells of a materialised grid."""
    ft, fx = int(ft), int(fx)
    if ft < 1 or fx < 1 or noise.n_t % ft or noise.n_x % fx:
        raise InputError(f"factors ({ft}, {fx}) do not divide ({noise.n_t}, {noise.n_x})")
    inc = noise.increments.reshape(noise.n_t // ft, ft, noise.n_x // fx, fx).sum(axis=(1, 3))
    return NoiseGrid(noise.n_t // ft, noise.n_x // fx, noise.T, noise.seed, noise.stream_id, inc)


def split_at(noise, s, reseed):
    """Keep the past up to grid time ``s`` and draw a fresh future from ``reseed``."""
    row = noise.row_of(s)
    inc = np.array(noise.increments)
    if row < noise.n_t:
        fresh = standard_normals(philox_key(reseed, noise.stream_id), row * noise.n_x,
                                 (noise.n_t - row) * noise.n_x)
        inc[row:] = fresh.reshape(-1, noise.n_x) * np.sqrt(noise.dt * noise.dx)
    return NoiseGrid(noise.n_t, noise.n_x, noise.T, noise.seed, noise.stream_id, inc)


# --- binary dumps ------------------------------------------------------------------
# header: magic, kind, n_t, n_x, T, seed, stream, n_arrays
# payload: per array a uint64 length then little-endian float64 values (row-major,
# time-major)

MAGIC = b"SHELAB01"
_HEADER = struct.Struct("<8s8sQQdqqQ")
_LEN = struct.Struct("<Q")


def dump_arrays(path, kind, arrays, n_t, n_x, T, seed=0, stream=0):
    arrays = [np.ascontiguousarray(a, dtype="<f8").ravel() for a in arrays]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, kind.encode("ascii").ljust(8)[:8], n_t, n_x, T,
                              seed, stream, len(arrays)))
        for a in arrays:
            fh.write(_LEN.pack(a.size))
            fh.write(a.tobytes())


def load_arrays(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise InputError(f"{path}: truncated header")
    magic, kind, n_t, n_x, T, seed, stream, n_arr = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise InputError(f"{path}: not a shelab binary dump")
    pos = _HEADER.size
    arrays = []
    for _ in range(n_arr):
        (size,) = _LEN.unpack_from(blob, pos)
        pos += _LEN.size
        if pos + 8 * size > len(blob):
            raise InputError(f"{path}: truncated payload")
        arrays.append(np.frombuffer(blob, dtype="<f8", count=size, offset=pos).copy())
        pos += 8 * size
    meta = dict(kind=kind.decode("ascii").strip(), n_t=n_t, n_x=n_x, T=T, seed=seed, stream=stream)
    return meta, arrays


def dump_noise(path, noise):
    dump_arrays(path, "noise", [noise.increments], noise.n_t, noise.n_x, noise.T,
                noise.seed, noise.stream_id)


def load_noise(path):
    meta, arrays = load_arrays(path)
    if meta["kind"] != "noise" or len(arrays) != 1:
        raise InputError(f"{path}: dump kind is {meta['kind']!r}, expected 'noise'")
    return NoiseGrid(meta["n_t"], meta["n_x"], meta["T"], meta["seed"], meta["stream"],
                     arrays[0].reshape(meta["n_t"], meta["n_x"]))
