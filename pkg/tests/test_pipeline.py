# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for seig.pipeline"""

from argparse import Namespace
from pathlib import Path

import numpy as np
import pytest

from seig import CapacityError, ConfigError
from seig._util import make_rng
from seig.eigen import PlaintextBackend, lanczos_topk
from seig.ingest import random_symmetric
from seig.paillier import decrypt_vector
from seig.pipeline import ArtifactPaths, LocalDeployment, RunConfig


def test_from_namespace_keeps_defaults():
    """Missing and None values keep the defaults."""
    config = RunConfig.from_namespace(
        Namespace(subcommand="eigen", k=2, m=None, data_dir="out", extra=1)
    )
    assert config.subcommand == "eigen"
    assert config.k == 2
    assert config.m == RunConfig().m
    assert config.data_dir == Path("out")


def test_resolved_data_dir(monkeypatch):
    """The environment applies when no directory is given."""
    monkeypatch.setenv("SEIG_DATA_DIR", "/from/env")
    assert RunConfig().resolved_data_dir == Path("/from/env")
    assert RunConfig(data_dir=Path("here")).resolved_data_dir == Path("here")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"key_bits": 8},
        {"m": 0},
        {"iters": 0},
        {"workers": 0},
        {"k": 0},
        {"k": 11},
        {"q_bits": 512, "key_bits": 512},
    ],
)
def test_validate_rejects(kwargs):
    """Out-of-range settings are configuration errors."""
    with pytest.raises(ConfigError):
        RunConfig(**kwargs).validate(10)


def test_validate_capacity():
    """A q that is too small for n is reported with the bits it needs."""
    with pytest.raises(CapacityError) as excinfo:
        RunConfig(d=4, q_bits=30, key_bits=512).validate(100)
    assert excinfo.value.required_q_bits == 35


def test_validate_without_dimension():
    """Dimension-dependent checks wait until n is known."""
    RunConfig(q_bits=2048).validate()


def test_artifact_paths_under(tmp_path):
    """Default file names."""
    paths = ArtifactPaths.under(tmp_path)
    assert paths.public_key == tmp_path / "public.key"
    assert paths.encrypted_b0.name == "b0.sevr"
    assert paths.encrypted_ab0.name == "ab0.sevr"


def test_owner_files_round_trip(deployment, tmp_path):
    """What the owner writes is what collectors and the user read."""
    owner = deployment.owner
    paths = ArtifactPaths.under(tmp_path / "owner")
    paths.save_owner(owner)
    public_key, params = paths.load_public()
    assert public_key == owner.public_key
    assert params == owner.params
    assert paths.load_encrypted_b0(public_key) == owner.encrypted_b0
    handoff = paths.load_handoff()
    assert handoff.encrypted_ab0 == owner.encrypted_ab0
    assert (
        decrypt_vector(handoff.private_key, handoff.encrypted_b0) == owner.b0
    )


def test_local_deployment_run(tmp_path, keypair, symmetric_matrix):
    """run() collects and prepares the pool on its own."""
    deployment = LocalDeployment(
        symmetric_matrix,
        tmp_path / "cloud",
        config=RunConfig(key_bits=512, k=2, m=2, iters=7, workers=1),
        rng=make_rng(3),
        keypair=keypair,
    )
    result = deployment.run()
    assert deployment.session.pool.m == 2
    assert result.k == 2
    top = np.sort(np.linalg.eigvalsh(symmetric_matrix))[::-1][:2]
    assert result.eigenvalues == pytest.approx(top, abs=1e-3)


def test_local_deployment_rejects_large_entries(tmp_path, keypair):
    """Entries above the bound are refused while collecting."""
    deployment = LocalDeployment(
        np.full((3, 3), 2.0),
        tmp_path / "cloud",
        config=RunConfig(key_bits=512, k=1, workers=1),
        rng=make_rng(4),
        keypair=keypair,
    )
    with pytest.raises(CapacityError):
        deployment.collect()


@pytest.mark.slow
def test_secure_eigensolver_end_to_end(tmp_path, keypair):
    """n = 64, k = 3, 40 Lanczos iterations: the secure path matches the
    plaintext path and a dense solver.
    """
    matrix = random_symmetric(64, seed=64)
    deployment = LocalDeployment(
        matrix,
        tmp_path / "cloud",
        config=RunConfig(key_bits=512, k=3, m=5, iters=40, workers=2),
        rng=make_rng(64),
        keypair=keypair,
    )
    secure = deployment.run(verify_residuals=True)
    start = np.array([float(value) for value in deployment.session.b0])
    plain = lanczos_topk(PlaintextBackend(matrix, start=start), 3, 40)
    dense = np.sort(np.linalg.eigvalsh(matrix))[::-1][:3]

    assert secure.eigenvalues == pytest.approx(plain.eigenvalues, rel=1e-4)
    assert plain.eigenvalues == pytest.approx(dense, rel=1e-6)
    assert secure.eigenvalues == pytest.approx(dense, rel=1e-4)
    assert np.all(secure.residuals <= 1e-4 * np.linalg.norm(matrix))
    assert len(deployment.session.transcript) == 5 + secure.matvec_calls
