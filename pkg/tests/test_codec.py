# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for seig.codec"""

import math

import pytest

from seig import CapacityError, ConfigError, DomainError, FormatError
from seig._util import make_rng
from seig.codec import (
    CodecParams,
    centered_lift,
    check_capacity,
    decode,
    default_q,
    encode,
    load_params,
    params_from_bytes,
    params_to_bytes,
    save_params,
    to_residue,
)


@pytest.mark.parametrize(
    "value,d,expected",
    [
        (1.234, 3, 1234),
        (-0.5, 3, -500),
        (0.0005, 3, 1),
        (-0.0005, 3, -1),
        (2.5, 0, 3),
        (-2.5, 0, -3),
        (7, 2, 700),
    ],
)
def test_encode(value, d, expected):
    """Rounding is half away from zero."""
    assert encode(value, d) == expected


@pytest.mark.parametrize("value", [math.inf, -math.inf, math.nan])
def test_encode_non_finite(value):
    """Infinities and NaN cannot be encoded."""
    with pytest.raises(DomainError):
        encode(value, 3)


def test_decode():
    """Division by the scale."""
    assert decode(30000, 4) == 3.0
    assert decode(-500, 3) == -0.5


def test_encode_decode_error_bound():
    """A round trip is off by at most half a unit in the last digit."""
    rng = make_rng(11)
    for _ in range(1000):
        value = rng.uniform(-1.0, 1.0)
        assert abs(decode(encode(value, 6), 6) - value) <= 0.5e-6 + 1e-15


def test_to_residue():
    """Negative values wrap to the top of the range."""
    assert to_residue(-500, 10007) == 9507
    assert to_residue(1234, 10007) == 1234


def test_to_residue_capacity():
    """Values of at least half the modulus do not fit."""
    with pytest.raises(CapacityError):
        to_residue(5004, 10007)
    with pytest.raises(CapacityError):
        to_residue(-5004, 10007)
    assert to_residue(5003, 10007) == 5003


def test_centered_lift():
    """Inverse of the centered mapping."""
    assert centered_lift(9507, 10007) == -500
    assert centered_lift(0, 10007) == 0
    with pytest.raises(DomainError):
        centered_lift(10007, 10007)


def test_residue_round_trip():
    """Lifting undoes the mapping for every value that fits."""
    rng = make_rng(12)
    for _ in range(10_000):
        value = rng.randrange(-5003, 5004)
        assert centered_lift(to_residue(value, 10007), 10007) == value


def test_dot_product_through_residues():
    """Signed dot products survive the mapping to residues."""
    rng = make_rng(13)
    modulus = default_q(64)
    for _ in range(50):
        first = [rng.randrange(-(10**6), 10**6) for _ in range(20)]
        second = [rng.randrange(-(10**6), 10**6) for _ in range(20)]
        total = (
            sum(
                to_residue(a, modulus) * to_residue(b, modulus)
                for a, b in zip(first, second)
            )
            % modulus
        )
        assert centered_lift(total, modulus) == sum(
            a * b for a, b in zip(first, second)
        )


def test_default_q():
    """The smallest prime above 2**(bits - 1)."""
    assert default_q(4) == 11
    assert default_q(128).bit_length() == 128
    with pytest.raises(ConfigError):
        default_q(1)


def test_check_capacity_reports_required_bits():
    """n = 100 and d = 4 need q above 2 * 10**10, which takes 35 bits."""
    with pytest.raises(CapacityError) as excinfo:
        check_capacity(100, 4, default_q(34), 1 << 511)
    assert excinfo.value.required_q_bits == 35
    check_capacity(100, 4, default_q(36), 1 << 511)


def test_check_capacity_large_dimension():
    """n = 50000 at d = 6 fits the default 128-bit q."""
    check_capacity(50_000, 6, default_q(128), 1 << 1023)


def test_check_capacity_degenerate():
    """With d = 0 and n = 1 any odd prime will do."""
    check_capacity(1, 0, 3, 35)


def test_check_capacity_paillier_bound():
    """The cloud's products must stay below N / 2."""
    with pytest.raises(CapacityError) as excinfo:
        check_capacity(100, 4, default_q(128), 1 << 140)
    assert excinfo.value.required_q_bits is None


def test_check_capacity_rejects_bad_bounds():
    """Bounds and dimension must be positive."""
    with pytest.raises(ConfigError):
        check_capacity(0, 4, default_q(64), 1 << 511)
    with pytest.raises(ConfigError):
        check_capacity(10, 4, default_q(64), 1 << 511, max_matrix=0.0)


def test_codec_params_validation():
    """q must be an odd prime below N."""
    with pytest.raises(ConfigError):
        CodecParams(d=4, q=12, n=1 << 64)
    with pytest.raises(ConfigError):
        CodecParams(d=4, q=default_q(64), n=1 << 32)
    with pytest.raises(ConfigError):
        CodecParams(d=256, q=11, n=35)


def test_codec_params_encode_vector():
    """Residues of the encoded values."""
    params = CodecParams(d=3, q=10007, n=1 << 64)
    assert params.encode_vector([1.234, -0.5], params.q) == [1234, 9507]
    assert params.encode_integers([1.234, -0.5]) == [1234, -500]
    scalar = params.encode_scalar(-0.5, params.q)
    assert scalar.to_real(params.q) == -0.5


def test_params_file(keypair, tmp_path):
    """Codec parameters survive a file round trip."""
    params = CodecParams(d=6, q=default_q(128), n=keypair.public_key.n)
    save_params(params, tmp_path / "codec.params")
    assert load_params(tmp_path / "codec.params", keypair.public_key.n) == (
        params
    )


def test_params_from_bytes_is_checked():
    """Truncated and foreign bytes are refused."""
    data = params_to_bytes(CodecParams(d=3, q=10007, n=1 << 64))
    with pytest.raises(FormatError):
        params_from_bytes(data[:-1], 1 << 64)
    with pytest.raises(FormatError):
        params_from_bytes(b"XXXX" + data[4:], 1 << 64)
