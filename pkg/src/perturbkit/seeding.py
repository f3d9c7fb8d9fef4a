"""Deterministic 64-bit seed derivation.

The mixing function is fixed and documented so that independent
implementations can reproduce output manifests bit-exactly:

1. Encode every part canonically: integers as 16-byte big-endian two's
   complement, strings as UTF-8 prefixed with their byte length (8-byte
   big-endian); parts are concatenated in call order.
2. Fold the byte stream through 64-bit FNV-1a (offset basis
   0xcbf29ce484222325, prime 0x100000001b3).
3. Finalize with the splitmix64 avalanche so single-bit input changes
   flip about half the output bits.
"""

from __future__ import annotations

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One splitmix64 finalization round of a 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _encode(part: int | str) -> bytes:
    if isinstance(part, bool):  # bool is an int subclass; reject to keep encodings unambiguous
        raise TypeError("seed parts must be int or str, not bool")
    if isinstance(part, int):
        return part.to_bytes(16, "big", signed=True)
    if isinstance(part, str):
        raw = part.encode("utf-8")
        return len(raw).to_bytes(8, "big") + raw
    raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")


def mix_seed(*parts: int | str) -> int:
    """Mix any sequence of ints and strings into a stable 64-bit seed."""
    h = _FNV_OFFSET
    for part in parts:
        for byte in _encode(part):
            h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return splitmix64(h)
