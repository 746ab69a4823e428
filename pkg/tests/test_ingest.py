# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for seig.ingest"""

import numpy as np
import pytest

from seig import ConfigError, FormatError
from seig.codec import encode
from seig.ingest import (
    encrypt_matrix,
    random_symmetric,
    read_matrix_text,
    write_matrix_text,
)
from seig.paillier import decrypt_vector


def test_text_round_trip(tmp_path):
    """Written matrices read back exactly."""
    matrix = np.array([[0.1, -2.5, 3.0], [1e-7, 0.0, -0.333]])
    write_matrix_text(matrix, tmp_path / "m.txt")
    assert np.array_equal(read_matrix_text(tmp_path / "m.txt"), matrix)


def test_text_any_whitespace(tmp_path):
    """Elements may be spread over lines at will."""
    (tmp_path / "m.txt").write_text("2 2 1\n2\t3\n\n4\n")
    assert read_matrix_text(tmp_path / "m.txt").tolist() == [
        [1.0, 2.0],
        [3.0, 4.0],
    ]


@pytest.mark.parametrize(
    "text",
    ["", "2\n", "2 2\n1 2 3\n", "2 2\n1 2 3 x\n", "0 0\n"],
)
def test_text_malformed(tmp_path, text):
    """Truncated, overlong or unparseable files are refused."""
    (tmp_path / "m.txt").write_text(text)
    with pytest.raises(FormatError):
        read_matrix_text(tmp_path / "m.txt")


def test_text_binary(tmp_path):
    """Binary files are refused before parsing."""
    (tmp_path / "m.bin").write_bytes(b"\x00\x01\x02\xff" * 64)
    with pytest.raises(FormatError):
        read_matrix_text(tmp_path / "m.bin")


def test_random_symmetric_spectrum():
    """The planted values are on top and the rest lie in [-0.4, 0.4]."""
    matrix = random_symmetric(20, seed=1)
    assert np.array_equal(matrix, matrix.T)
    values = np.sort(np.linalg.eigvalsh(matrix))[::-1]
    assert values[:3] == pytest.approx([1.0, 0.8, 0.6], abs=1e-12)
    assert np.all(np.abs(values[3:]) <= 0.4 + 1e-12)
    assert np.all(np.abs(matrix) <= 1.0)


def test_random_symmetric_seeded():
    """Equal seeds give equal matrices."""
    assert np.array_equal(
        random_symmetric(5, seed=2), random_symmetric(5, seed=2)
    )
    assert not np.array_equal(
        random_symmetric(5, seed=2), random_symmetric(5, seed=3)
    )


def test_random_symmetric_small():
    """Below three dimensions, only the top of the plant is used."""
    values = np.linalg.eigvalsh(random_symmetric(2, seed=4))
    assert sorted(values) == pytest.approx([0.8, 1.0])


def test_random_symmetric_spectrum_length():
    """An explicit spectrum has n values."""
    with pytest.raises(ConfigError):
        random_symmetric(3, spectrum=[1.0, 2.0])


def test_encrypt_matrix(tmp_path, keypair, params, rng):
    """Each row decrypts to its encoding."""
    matrix = np.array([[0.5, -0.25], [0.125, 1.0]])
    encrypted = encrypt_matrix(
        matrix, keypair.public_key, params, tmp_path / "m.seig", rng
    )
    assert encrypted.is_complete()
    n = keypair.public_key.n
    for index, row in enumerate(matrix):
        assert decrypt_vector(
            keypair.private_key, encrypted.read_row(index)
        ) == [encode(x, params.d) % n for x in row]
