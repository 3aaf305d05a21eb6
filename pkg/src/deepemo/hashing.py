"""64-bit FNV-1a, used for cache keys and checkpoint checksums."""

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF

# below this size the pure-python loop beats JIT dispatch
_SMALL = 4096

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _fnv1a64_py(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK
    return h


if njit is not None:
    @njit(cache=True, nogil=True)
    def _fnv1a64_jit(buf):
        h = np.uint64(FNV_OFFSET)
        prime = np.uint64(FNV_PRIME)
        for i in range(buf.shape[0]):
            h = (h ^ np.uint64(buf[i])) * prime
        return h


def fnv1a64(data: bytes) -> int:
    if njit is None or len(data) < _SMALL:
        return _fnv1a64_py(data)
    return int(_fnv1a64_jit(np.frombuffer(data, dtype=np.uint8)))
