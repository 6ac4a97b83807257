"""Tests for the binary archive codec."""
import struct

import numpy as np
import pytest

from app.models.errors import ArchiveError
from app.services.archive import Archive, decode_archive, encode_archive, load_archive, save_archive


@pytest.fixture
def payload(rng) -> bytes:
    arrays = {"weights": rng.standard_normal((3, 4)), "bias": np.array([np.pi, -0.0, 1e-300]), "scalar": np.array(2.5)}
    return encode_archive(42, {"kind": "test", "step": 7}, arrays)


def test_round_trip_is_bitwise(rng):
    arrays = {"a": rng.standard_normal((2, 3, 4)), "b": np.array([np.inf, -np.inf, 5e-324])}
    archive = decode_archive(encode_archive(9, {"kind": "x"}, arrays))
    assert archive.seed == 9
    assert archive.kind == "x"
    for name, value in arrays.items():
        assert archive.arrays[name].shape == value.shape
        assert archive.arrays[name].tobytes() == value.tobytes()


def test_encoding_is_canonical(rng):
    value = rng.standard_normal(5)
    first = encode_archive(1, {"b": 1, "a": 2}, {"y": value, "x": value})
    second = encode_archive(1, {"a": 2, "b": 1}, {"x": value, "y": value})
    assert first == second


def test_bad_magic(payload):
    with pytest.raises(ArchiveError, match="magic"):
        decode_archive(b"XXXX" + payload[4:])


def test_unknown_version(payload):
    tampered = payload[:4] + struct.pack("<I", 99) + payload[8:]
    with pytest.raises(ArchiveError, match="version"):
        decode_archive(tampered)


def test_flipped_byte_fails_checksum(payload):
    corrupt = bytearray(payload)
    corrupt[40] ^= 0xFF
    with pytest.raises(ArchiveError, match="checksum"):
        decode_archive(bytes(corrupt))


@pytest.mark.parametrize("keep", [0, 10, -1, -13])
def test_truncation(payload, keep):
    with pytest.raises(ArchiveError):
        decode_archive(payload[:keep])


def test_trailing_bytes(payload):
    with pytest.raises(ArchiveError):
        decode_archive(payload + b"\x00")


def test_seed_must_fit(rng):
    with pytest.raises(ArchiveError):
        encode_archive(-1, {}, {})


def test_files_and_kind_check(tmp_path):
    path = save_archive(tmp_path / "nested" / "a.mtlk", Archive(seed=3, meta={"kind": "motion"}, arrays={"m": np.ones(2)}))
    assert load_archive(path, "motion").require("m").tolist() == [1.0, 1.0]
    with pytest.raises(ArchiveError, match="expected 'audio'"):
        load_archive(path, "audio")
    with pytest.raises(ArchiveError):
        load_archive(tmp_path / "missing.mtlk")


def test_require_missing_array():
    with pytest.raises(ArchiveError):
        Archive(seed=0).require("nothing")
