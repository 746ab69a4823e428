# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Global fixtures and configuration."""

# pylint: disable=redefined-outer-name

import logging
import os
import sys
import warnings
from io import StringIO
from pathlib import Path
from typing import Generator

import numpy as np
import pytest

# A trick that tries to import the installed version of seig. If that doesn't
# work, import from the src directory. If that also doesn't work (for some
# reason), then an ImportError is raised.
try:
    # pylint: disable=unused-import
    import seig
except ImportError:
    sys.path.append(os.path.join(Path(__file__).parent.parent, "src"))
finally:
    from seig import InsecureKeyWarning
    from seig._util import make_rng, setup_logging
    from seig.codec import CodecParams, default_q
    from seig.ingest import random_symmetric
    from seig.paillier import PaillierKeypair, keygen, keypair_from_primes
    from seig.pipeline import LocalDeployment, RunConfig
    from seig.service import CloudService, LoopbackTransport, ServiceClient

CWD = Path.cwd()

TESTS_DIRECTORY = Path(__file__).parent.resolve()

#: Key size of the shared test keypair. Large enough for every capacity
#: check in the suite, small enough to be fast.
TEST_KEY_BITS = 512


def pytest_addoption(parser):
    """Add the --loglevel option."""
    parser.addoption("--loglevel", action="store", default="DEBUG")


def pytest_configure(config):
    """Called after command line options have been parsed and all plugins and
    initial conftest files been loaded.
    """
    loglevel = config.getoption("loglevel")
    setup_logging(level=logging.getLevelName(loglevel))


def pytest_runtest_setup(item):
    """Called before running a test."""
    # pylint: disable=unused-argument
    # Make sure to restore CWD
    os.chdir(CWD)


@pytest.fixture(scope="session")
def keypair() -> PaillierKeypair:
    """A seeded 512-bit keypair, shared by the whole session."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InsecureKeyWarning)
        return keygen(TEST_KEY_BITS, make_rng(2024))


@pytest.fixture()
def toy_keypair() -> PaillierKeypair:
    """The keypair of p = 5 and q = 7."""
    return keypair_from_primes(5, 7)


@pytest.fixture()
def rng():
    """A seeded random source."""
    return make_rng(1234)


@pytest.fixture()
def params(keypair) -> CodecParams:
    """Production codec parameters under the test key."""
    return CodecParams(d=6, q=default_q(128), n=keypair.public_key.n)


@pytest.fixture(params=[1, 2])
def workers(request) -> Generator[int, None, None]:
    """Run the test with one worker and with a process pool."""
    yield request.param


@pytest.fixture()
def cloud_service(tmp_path) -> CloudService:
    """A cloud service with its data directory in a temporary directory. Jobs
    only run when the test asks for them.
    """
    return CloudService(tmp_path / "cloud")


@pytest.fixture()
def client(cloud_service) -> ServiceClient:
    """A client talking to :func:`cloud_service` without sockets."""
    return ServiceClient(LoopbackTransport(cloud_service))


@pytest.fixture()
def stringio():
    """Create a StringIO object."""
    return StringIO()


@pytest.fixture()
def data_dir(tmp_path, monkeypatch) -> Path:
    """An empty data directory, also set in the environment."""
    directory = tmp_path / "seig-data"
    monkeypatch.setenv("SEIG_DATA_DIR", str(directory))
    return directory


@pytest.fixture()
def symmetric_matrix() -> np.ndarray:
    """A seeded 8x8 symmetric matrix with eigenvalues 1.0, 0.8 and 0.6 on
    top.
    """
    return random_symmetric(8, seed=8)


@pytest.fixture()
def deployment(tmp_path, keypair, symmetric_matrix) -> LocalDeployment:
    """An in-process deployment of :func:`symmetric_matrix`, rows collected
    and handed off to the user.
    """
    result = LocalDeployment(
        symmetric_matrix,
        tmp_path / "cloud",
        config=RunConfig(
            key_bits=TEST_KEY_BITS, k=2, m=3, iters=6, workers=1, seed=99
        ),
        rng=make_rng(99),
        keypair=keypair,
    )
    result.collect()
    return result
