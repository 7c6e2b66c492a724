"""Per-page compression. One codec per dataset, recorded as a 1-byte tag."""

from __future__ import annotations

import enum

import zstandard

from .errors import ConfigError, IntegrityError


class Codec(enum.IntEnum):
    NONE = 0
    ZSTD = 1

    @classmethod
    def parse(cls, name: str) -> "Codec":
        try:
            return {"none": cls.NONE, "zstd": cls.ZSTD}[name.lower()]
        except KeyError:
            raise ConfigError(f"unknown codec {name!r} (expected none or zstd)") from None

    @property
    def label(self) -> str:
        return self.name.lower()


def compress(payload: bytes, codec: Codec, level: int = 3) -> bytes:
    if codec is Codec.NONE:
        return bytes(payload)
    # content size in the frame lets decompress() check it against the descriptor
    return zstandard.ZstdCompressor(level=level, write_content_size=True).compress(payload)


def decompress(stored: bytes, codec: Codec, expected_size: int) -> bytes:
    if codec is Codec.NONE:
        out = bytes(stored)
    else:
        try:
            out = zstandard.ZstdDecompressor().decompress(stored, max_output_size=expected_size)
        except zstandard.ZstdError as exc:
            raise IntegrityError(f"corrupt compressed page: {exc}") from exc
    if len(out) != expected_size:
        raise IntegrityError(f"decompressed {len(out)} B, expected {expected_size} B")
    return out
