# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for seig._main: keygen, encrypt-matrix, collect, eigen, bench,
attack-sim
"""

# pylint: disable=redefined-outer-name,unused-argument

import json
import threading
from io import StringIO

import numpy as np
import pytest

from seig import (
    BreakdownError,
    CapacityError,
    ConfigError,
    IntegrityError,
    JobFailedError,
    __version__,
)
from seig._main import exit_code, main, parser
from seig.codec import default_q
from seig.ingest import write_matrix_text
from seig.service import CloudService, ServiceServer
from seig.store import EncryptedMatrix

KEY_BITS = "512"


@pytest.fixture()
def running_service(tmp_path):
    """A cloud service behind a TCP socket on a free port."""
    service = CloudService(tmp_path / "cloud")
    service.start()
    server = ServiceServer(("127.0.0.1", 0), service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server.server_address[1]
    server.shutdown()
    server.server_close()
    service.stop()


def test_version(stringio):
    """--version prints the version."""
    assert main(["--version"], out=stringio) == 0
    assert stringio.getvalue() == f"seig {__version__}\n"


def test_no_subcommand(stringio):
    """Without a subcommand, help is printed and nothing fails."""
    assert main([], out=stringio) == 0


@pytest.mark.parametrize(
    "error,code",
    [
        (ConfigError("x"), 2),
        (CapacityError("x", required_q_bits=40), 2),
        (IntegrityError("x", indices=[1]), 3),
        (JobFailedError("x"), 3),
        (BreakdownError("x"), 4),
    ],
)
def test_exit_code(error, code):
    """Configuration, protocol and numerical errors have their own codes."""
    assert exit_code(error) == code


def test_keygen_with_dimension(data_dir, stringio):
    """Keys, parameters and E(b0) end up in the data directory."""
    result = main(
        ["--seed", "1", "keygen", "--key-bits", KEY_BITS, "--n", "4"],
        out=stringio,
    )
    assert result == 0
    for name in ("public.key", "private.key", "codec.params", "b0.sevr"):
        assert (data_dir / name).exists()
    assert not (data_dir / "ab0.sevr").exists()


def test_keygen_from_primes(data_dir, stringio):
    """Tiny primes work with a tiny q."""
    result = main(
        ["keygen", "--primes", "5", "7", "--q-bits", "4", "--d", "0"],
        out=stringio,
    )
    assert result == 0
    assert (data_dir / "private.key").exists()


def test_keygen_q_too_large(data_dir, stringio):
    """The default q does not fit under N = 35."""
    assert main(["keygen", "--primes", "5", "7"], out=stringio) == 2


def test_keygen_capacity(data_dir, stringio):
    """A q too small for the dimension is a configuration error."""
    result = main(
        ["keygen", "--key-bits", KEY_BITS, "--n", "100", "--q-bits", "30"],
        out=stringio,
    )
    assert result == 2


def test_encrypt_matrix(data_dir, tmp_path, stringio):
    """A generated matrix is written as a complete .seig file."""
    assert main(["--seed", "2", "keygen", "--key-bits", KEY_BITS]) == 0
    output = tmp_path / "matrix.seig"
    result = main(
        ["--seed", "2", "encrypt-matrix", "--n", "4", "--output", str(output)],
        out=stringio,
    )
    assert result == 0
    matrix = EncryptedMatrix.open(output)
    assert matrix.is_complete()
    assert (matrix.n_rows, matrix.n_cols) == (4, 4)


def test_eigen_local(stringio):
    """The planted top three come out of the secure path."""
    result = main(
        [
            "--seed",
            "7",
            "eigen",
            "--n",
            "16",
            "--key-bits",
            KEY_BITS,
            "--k",
            "3",
            "--m",
            "3",
            "--iters",
            "15",
            "--workers",
            "1",
            "--format",
            "json",
        ],
        out=stringio,
    )
    assert result == 0
    data = json.loads(stringio.getvalue())
    assert data["method"] == "lanczos"
    assert data["eigenvalues"] == pytest.approx([1.0, 0.8, 0.6], abs=1e-3)
    assert data["context"]["cloud products"] == 3 + data["matvec_calls"]


def test_eigen_local_compare(tmp_path, stringio):
    """--compare reports the plaintext solution; --vectors-dir writes the
    Ritz vectors.
    """
    vectors_dir = tmp_path / "vectors"
    result = main(
        [
            "--seed",
            "8",
            "eigen",
            "--n",
            "8",
            "--key-bits",
            KEY_BITS,
            "--k",
            "2",
            "--iters",
            "7",
            "--workers",
            "1",
            "--compare",
            "--vectors-dir",
            str(vectors_dir),
        ],
        out=stringio,
    )
    assert result == 0
    output = stringio.getvalue()
    assert "EIGENPAIRS" in output
    assert "largest relative difference" in output
    vector = np.load(vectors_dir / "ritz_1.npy")
    assert np.linalg.norm(vector) == pytest.approx(1.0)
    assert (vectors_dir / "ritz_2.npy").exists()


@pytest.mark.parametrize(
    "args, seed",
    [
        (["eigen"], None),
        (["--seed", "1", "eigen"], 1),
        (["eigen", "--seed", "2"], 2),
        (["--seed", "1", "eigen", "--seed", "2"], 2),
        (["bench", "--seed", "3"], 3),
    ],
)
def test_seed_before_or_after_subcommand(args, seed):
    """--seed is accepted on both sides of the subcommand."""
    assert parser().parse_args(args).seed == seed


def test_eigen_seeded_reports_identical():
    """Two runs with the same trailing --seed print the same report."""
    outputs = []
    for _ in range(2):
        out = StringIO()
        result = main(
            ["eigen", "--n", "16", "--k", "3", "--key-bits", "512"]
            + ["--seed", "7"],
            out=out,
        )
        assert result == 0
        outputs.append(out.getvalue())
    assert outputs[0] == outputs[1]
    assert "# EIGENPAIRS" in outputs[0]


def test_eigen_k_too_large(stringio):
    """k cannot exceed the dimension."""
    result = main(
        ["eigen", "--n", "4", "--key-bits", KEY_BITS, "--k", "5"],
        out=stringio,
    )
    assert result == 2


def test_eigen_zero_matrix(tmp_path, stringio):
    """Power iteration on the zero matrix breaks down: a numerical error."""
    path = tmp_path / "zero.txt"
    write_matrix_text(np.zeros((3, 3)), path)
    result = main(
        [
            "eigen",
            "--input",
            str(path),
            "--key-bits",
            KEY_BITS,
            "--k",
            "1",
            "--workers",
            "1",
        ],
        out=stringio,
    )
    assert result == 4


def test_eigen_binary_input(tmp_path, stringio):
    """Binary files are not matrices."""
    path = tmp_path / "matrix.bin"
    path.write_bytes(bytes(range(256)) * 4)
    result = main(["eigen", "--input", str(path)], out=stringio)
    assert result == 3


def test_eigen_remote_without_files(data_dir, stringio):
    """The user needs the owner's files."""
    assert main(["eigen", "--port", "1"], out=stringio) == 3


def test_compare_needs_local(data_dir, stringio):
    """Without the matrix there is nothing to compare against."""
    assert main(["eigen", "--compare"], out=stringio) == 2


def test_remote_flow(data_dir, running_service, stringio):
    """keygen, collect and eigen against a service on a socket."""
    port = str(running_service)
    assert (
        main(["--seed", "5", "keygen", "--key-bits", KEY_BITS, "--n", "8"])
        == 0
    )
    assert (
        main(["--seed", "5", "collect", "--n", "8", "--port", port]) == 0
    )
    assert (data_dir / "ab0.sevr").exists()
    result = main(
        [
            "--seed",
            "6",
            "eigen",
            "--port",
            port,
            "--k",
            "2",
            "--m",
            "2",
            "--iters",
            "7",
            "--format",
            "json",
        ],
        out=stringio,
    )
    assert result == 0
    data = json.loads(stringio.getvalue())
    assert data["eigenvalues"] == pytest.approx([1.0, 0.8], abs=1e-3)
    assert data["context"]["cloud products"] == 2 + data["matvec_calls"]


def test_attack_sim_csv(stringio):
    """One line per N after the header."""
    result = main(
        [
            "--seed",
            "3",
            "attack-sim",
            "--n",
            "4",
            "--samples",
            "100",
            "200",
            "--trials",
            "20",
            "--format",
            "csv",
        ],
        out=stringio,
    )
    assert result == 0
    lines = stringio.getvalue().splitlines()
    assert lines[0].startswith("model,n,q_bits,samples")
    assert len(lines) == 3
    assert lines[2].startswith("additive,4,16,200,20,")


def test_attack_sim_json(stringio):
    """JSON carries every report and the extrapolation."""
    result = main(
        [
            "--seed",
            "3",
            "attack-sim",
            "--n",
            "2",
            "--samples",
            "50",
            "--trials",
            "10",
            "--model",
            "modular",
            "--format",
            "json",
        ],
        out=stringio,
    )
    assert result == 0
    data = json.loads(stringio.getvalue())
    assert len(data["reports"]) == 1
    assert data["reports"][0]["experiment"]["model"] == "modular"
    assert data["reports"][0]["experiment"]["q"] == default_q(16)
    assert data["halving_ratios"] == []
    assert data["audit"] is None


def test_attack_sim_plain(stringio):
    """The plain report has its heading and the extrapolation."""
    result = main(
        ["attack-sim", "--n", "2", "--samples", "50", "--trials", "10"],
        out=stringio,
    )
    assert result == 0
    output = stringio.getvalue()
    assert "STATISTICAL INFERENCE ATTACK" in output
    assert "q = 2**128" in output


def test_attack_sim_bad_modulus(stringio):
    """q is limited to 32 bits."""
    result = main(["attack-sim", "--q-bits", "40"], out=stringio)
    assert result == 2


def test_bench_vector_only(stringio):
    """Vector sizes are exact; the matrix part is skipped."""
    result = main(
        [
            "--seed",
            "4",
            "bench",
            "--key-bits",
            KEY_BITS,
            "--n",
            "1000",
            "--sample",
            "5",
            "--vector-only",
            "--format",
            "json",
        ],
        out=stringio,
    )
    assert result == 0
    data = json.loads(stringio.getvalue())
    assert data["ciphertext_width"] == 128
    assert data["vector_bytes"] == 128_000
    assert data["matrix_bytes"] is None


def test_bench_plain(stringio):
    """The plain report covers sizes and timings."""
    result = main(
        [
            "--seed",
            "4",
            "bench",
            "--key-bits",
            KEY_BITS,
            "--n",
            "100",
            "--sample",
            "5",
        ],
        out=stringio,
    )
    assert result == 0
    output = stringio.getvalue()
    assert "SIZES" in output
    assert "TIMINGS" in output
    assert "1,280,000 bytes" in output
