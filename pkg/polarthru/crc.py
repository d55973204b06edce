"""Bit-level CRC over numpy bit arrays.

The register is MSB-first and non-reflected, with no final XOR. With the default
parameters (x^16 + x^12 + x^5 + 1, init 0xFFFF) this is CRC-16-CCITT in its
"FALSE" variant, which checks "123456789" to 0x29B1.

A CRC is affine over GF(2), so the check bits of a length-n message are
``data @ G + c`` for a generator matrix G and offset c that only depend on n.
Both are cached per (spec, n) so that batches of frames are checked with a
single matrix product.
"""

from typing import Tuple
import functools
import numpy as np
from polarthru.config import CrcSpec, CRC16_CCITT


def _step(register: int, bit: int, spec: CrcSpec) -> int:
    top = ((register >> (spec.width - 1)) & 1) ^ bit
    register = (register << 1) & ((1 << spec.width) - 1)
    if top:
        register ^= spec.poly
    return register


def _register_bits(register: int, width: int) -> np.ndarray:
    return np.array(
        [(register >> (width - 1 - k)) & 1 for k in range(width)], dtype=np.uint8
    )


@functools.lru_cache(maxsize=128)
def _affine_map(spec: CrcSpec, length: int) -> Tuple[np.ndarray, np.ndarray]:
    generator = np.zeros((length, spec.width), dtype=np.int64)
    impulse = _step(0, 1, spec)
    for i in range(length - 1, -1, -1):
        generator[i] = _register_bits(impulse, spec.width)
        impulse = _step(impulse, 0, spec)
    offset = spec.init
    for _ in range(length):
        offset = _step(offset, 0, spec)
    return generator, _register_bits(offset, spec.width).astype(np.int64)


def crc_bits(data: np.ndarray, spec: CrcSpec = CRC16_CCITT) -> np.ndarray:
    """Check bits of ``data`` (last axis is the message), MSB first."""
    data = np.asarray(data)
    if not spec.enabled:
        return np.zeros(data.shape[:-1] + (0,), dtype=np.uint8)
    generator, offset = _affine_map(spec, data.shape[-1])
    return ((data.astype(np.int64) @ generator + offset) & 1).astype(np.uint8)


def crc_value(data: np.ndarray, spec: CrcSpec = CRC16_CCITT) -> int:
    """Register value of a single message, as an integer."""
    value = 0
    for bit in crc_bits(np.asarray(data).reshape(-1), spec):
        value = (value << 1) | int(bit)
    return value


def crc_append(data: np.ndarray, spec: CrcSpec = CRC16_CCITT) -> np.ndarray:
    data = np.asarray(data, dtype=np.uint8)
    return np.concatenate([data, crc_bits(data, spec)], axis=-1)


def crc_check(word: np.ndarray, spec: CrcSpec = CRC16_CCITT):
    """True where the trailing ``spec.width`` bits match the CRC of the rest.

    Returns a bool for a single word and a bool array for a batch.
    """
    word = np.asarray(word, dtype=np.uint8)
    if not spec.enabled:
        ok = np.ones(word.shape[:-1], dtype=bool)
    else:
        if word.shape[-1] < spec.width:
            raise ValueError(
                f"word of {word.shape[-1]} bits is shorter than the CRC ({spec.width})"
            )
        body = word[..., : word.shape[-1] - spec.width]
        ok = np.all(crc_bits(body, spec) == word[..., word.shape[-1] - spec.width:], axis=-1)
    if ok.ndim == 0:
        return bool(ok)
    return ok


def bytes_to_bits(payload: bytes) -> np.ndarray:
    """MSB-first bit expansion of a byte string."""
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
