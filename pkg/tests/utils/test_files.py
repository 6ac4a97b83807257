"""Tests for atomic file writes."""
import os

import pytest

from app.utils.files import atomic_write_bytes, atomic_write_text


def test_creates_parents_and_replaces(tmp_path):
    target = tmp_path / "a" / "b" / "out.bin"
    atomic_write_bytes(target, b"first")
    atomic_write_bytes(target, b"second")
    assert target.read_bytes() == b"second"
    assert os.listdir(target.parent) == ["out.bin"]


def test_failed_write_leaves_old_content(tmp_path, mocker):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "kept")
    mocker.patch("app.utils.files.os.replace", side_effect=OSError("disk full"))
    with pytest.raises(OSError):
        atomic_write_text(target, "lost")
    assert target.read_text() == "kept"
    assert os.listdir(tmp_path) == ["out.txt"]
