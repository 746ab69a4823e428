# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for seig.report"""

# pylint: disable=redefined-outer-name

import json
from pathlib import Path

import numpy as np
import pytest

from seig.bench import BenchReport
from seig.codec import default_q
from seig.eigen import EigenResult
from seig.harness import run_suite
from seig.report import (
    eigen_to_dict,
    format_json,
    render_attack,
    render_bench,
    render_eigen,
)


@pytest.fixture()
def eigen_result():
    """Two eigenpairs of diag(2, 1)."""
    return EigenResult(
        eigenvalues=np.array([2.0, 1.0]),
        vectors=np.eye(2),
        residuals=np.array([1e-9, 2e-9]),
        iterations=1,
        matvec_calls=2,
        method="lanczos",
    )


@pytest.fixture()
def suite():
    """A small attack suite with an audit."""
    return run_suite(
        n=100,
        q_bits=8,
        sample_counts=[20, 40],
        trials=5,
        seed=1,
        audit_q_bits=10,
        audit_samples=600,
    )


def test_format_json_numpy():
    """Arrays, numpy scalars and paths become plain JSON."""
    data = {
        "array": np.arange(3),
        "scalar": np.float64(0.5),
        "path": Path("a/b"),
    }
    assert json.loads(format_json(data)) == {
        "array": [0, 1, 2],
        "scalar": 0.5,
        "path": "a/b",
    }


def test_format_json_unknown_type():
    """Other objects are not serialized silently."""
    with pytest.raises(TypeError):
        format_json({"x": object()})


def test_render_eigen_plain(eigen_result):
    """Every eigenvalue on its own line; residuals are labelled estimated."""
    output = render_eigen(eigen_result, context={"dimension": 2})
    assert "# EIGENPAIRS" in output
    assert "dimension: 2" in output
    assert "2.000000000000e+00" in output
    assert "1.000000000000e+00" in output
    assert "estimated from the recurrence" in output
    assert "breakdown" not in output


def test_render_eigen_breakdown(eigen_result):
    """A breakdown is mentioned."""
    eigen_result.breakdown = True
    eigen_result.residuals_verified = True
    output = render_eigen(eigen_result)
    assert "breakdown" in output
    assert "measured with one extra product" in output


def test_render_eigen_json(eigen_result):
    """The JSON report carries the raw numbers."""
    data = json.loads(render_eigen(eigen_result, "json", {"k": 2}))
    expected = format_json(eigen_to_dict(eigen_result, {"k": 2}))
    assert data == json.loads(expected)
    assert data["eigenvalues"] == [2.0, 1.0]
    assert data["context"] == {"k": 2}


def test_render_bench_vector_only():
    """Without matrix sizes, only the vector section is shown."""
    report = BenchReport(
        key_bits=1024,
        n=10_000,
        ciphertext_width=256,
        vector_bytes=2_560_000,
        text_vector_bytes=6_170_000,
        compressed_vector_bytes=2_800_000,
        compressed_binary_bytes=2_570_000,
        plain_vector_bytes=80_000,
        sample=100,
        encrypt_seconds=56.0,
        decrypt_seconds=31.0,
    )
    output = render_bench(report)
    assert "2,560,000 bytes (2.56 MB)" in output
    assert "matrix, n x n" not in output
    assert "encrypt vector: 56.00 s" in output
    assert report.reference_label in output
    assert json.loads(render_bench(report, "json"))["vector_bytes"] == 2_560_000


def test_render_attack_plain(suite):
    """Both reports, the scaling and the audit are shown."""
    output = render_attack(suite)
    assert "# STATISTICAL INFERENCE ATTACK" in output
    assert "modulus: 2**8" in output
    assert "variance scaling between N1 and N2" in output
    assert "# TRANSCRIPT UNIFORMITY" in output
    assert "unperturbed control: failed" in output


def test_render_attack_csv(suite):
    """A header and one row per N."""
    lines = render_attack(suite, "csv").splitlines()
    assert lines[0] == (
        "model,n,q_bits,samples,trials,variance,predicted,ratio,bias"
    )
    assert [line.split(",")[3] for line in lines[1:]] == ["20", "40"]


def test_render_attack_json(suite):
    """The audit and the control are included."""
    data = json.loads(render_attack(suite, "json"))
    assert data["q_bits"] == 8
    assert len(data["halving_ratios"]) == 1
    assert data["control"]["passed"] is False
    assert len(data["audit"]["p_values"]) == 100


def test_render_attack_modular_modulus():
    """The modular model prints its prime modulus."""
    suite = run_suite(
        n=4, q_bits=8, sample_counts=[20], trials=5, model="modular", seed=2
    )
    assert f"modulus: {default_q(8)}\n" in render_attack(suite)
