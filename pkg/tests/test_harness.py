# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for seig.harness"""

import pytest

from seig import ConfigError, DomainError
from seig._util import make_rng
from seig.codec import default_q
from seig.harness import (
    AttackExperiment,
    perturbation_transcript,
    run_suite,
    samples_for_precision,
    simulate_attack,
    uniformity_audit,
)

Q = 2**16


def test_additive_variance():
    """The estimate's variance is q**2 / (12 N)."""
    report = simulate_attack(
        AttackExperiment(n=8, q=Q, samples=1000, trials=200, seed=1)
    )
    assert report.predicted_variance == Q**2 / 12000
    assert report.ratio == pytest.approx(1.0, rel=0.15)
    assert abs(report.bias) < 100
    assert report.empirical_r_mean == pytest.approx(
        report.exact_r_mean, abs=100
    )


def test_single_run_variance():
    """One observation leaves the attacker with the variance of r."""
    report = simulate_attack(
        AttackExperiment(n=8, q=Q, samples=1, trials=400, seed=2)
    )
    assert report.empirical_variance == pytest.approx(Q**2 / 12, rel=0.25)


def test_modular_variance():
    """Blinding modulo a prime q behaves like a uniform r."""
    report = simulate_attack(
        AttackExperiment(
            n=8, q=65521, samples=1000, trials=200, model="modular", seed=3
        )
    )
    assert report.ratio == pytest.approx(1.0, rel=0.25)


def test_simulation_does_not_depend_on_workers():
    """Every trial has its own stream."""
    experiment = AttackExperiment(n=3, q=Q, samples=50, trials=10, seed=4)
    assert simulate_attack(experiment, workers=2) == simulate_attack(
        experiment, workers=1
    )


@pytest.mark.parametrize(
    "kwargs",
    [
        {"trials": 1},
        {"model": "multiplicative"},
        {"q": 2**33},
        {"q": 2**32, "model": "modular"},
        {"q": 2**16, "model": "modular"},
        {"q": 1},
        {"pool_size": 0},
    ],
)
def test_experiment_validation(kwargs):
    """Out-of-range settings are configuration errors."""
    values = {"n": 2, "q": Q, "samples": 10, "trials": 5}
    values.update(kwargs)
    with pytest.raises(ConfigError):
        AttackExperiment(**values)


def test_samples_for_precision():
    """q**2 / (12 p**2), rounded up."""
    assert samples_for_precision(Q) == 357_913_942
    assert samples_for_precision(Q, 2.0) == 89_478_486
    assert samples_for_precision(2**128) > 2**251
    with pytest.raises(DomainError):
        samples_for_precision(Q, 0.0)


def test_suite_variance_halves():
    """Doubling N halves the variance."""
    suite = run_suite(
        n=8, q_bits=16, sample_counts=[1000, 2000], trials=200, seed=5
    )
    assert len(suite.reports) == 2
    (ratio,) = suite.halving_ratios()
    assert ratio == pytest.approx(1.0, rel=0.15)
    assert suite.extrapolated_samples == samples_for_precision(2**128)
    assert suite.audit is None


def test_audit_accepts_perturbed_transcript():
    """Blinded vectors look uniform component by component."""
    q = 2**13
    rng = make_rng(6)
    vector = [rng.randrange(q) for _ in range(100)]
    transcript = perturbation_transcript(vector, q, 1000, rng=rng)
    assert all(0 <= x < q for blinded in transcript for x in blinded)
    audit = uniformity_audit(transcript, q)
    assert audit.bins == 50
    assert audit.samples == 1000
    assert len(audit.p_values) == 100
    assert audit.passed


def test_audit_rejects_control():
    """The same vector sent every time is caught."""
    q = 2**13
    transcript = perturbation_transcript(
        [5, 6, 7], q, 600, rng=make_rng(7), perturbed=False
    )
    audit = uniformity_audit(transcript, q)
    assert audit.fraction == 0.0
    assert not audit.passed


def test_audit_accepts_uniform_data():
    """Uniform residues pass."""
    q = 1000
    rng = make_rng(8)
    transcript = [[rng.randrange(q) for _ in range(100)] for _ in range(2000)]
    audit = uniformity_audit(transcript, q)
    assert audit.bins == 100
    assert audit.passed


def test_audit_input_checks():
    """Sample count, bins, vector widths and ranges are checked."""
    rng = make_rng(9)
    transcript = [[rng.randrange(11) for _ in range(2)] for _ in range(500)]
    with pytest.raises(DomainError):
        uniformity_audit(transcript[:499], 11)
    with pytest.raises(DomainError):
        uniformity_audit(transcript, 11, bins=12)
    with pytest.raises(DomainError):
        uniformity_audit(transcript + [[1]], 11)
    with pytest.raises(DomainError):
        uniformity_audit(transcript + [[1, 11]], 11)
    assert uniformity_audit(transcript, 11).bins == 11


def test_suite_with_audit():
    """An audit of the blinding and of the unperturbed control."""
    suite = run_suite(
        n=100,
        q_bits=12,
        sample_counts=[100],
        trials=20,
        seed=10,
        audit_q_bits=13,
    )
    assert suite.audit.passed
    assert not suite.control.passed


def test_suite_modular_uses_prime():
    """The modular model runs at the prime next to 2**(q_bits - 1)."""
    suite = run_suite(
        n=4, q_bits=16, sample_counts=[50], trials=5, model="modular", seed=11
    )
    assert suite.reports[0].experiment.q == default_q(16)
    suite = run_suite(n=4, q_bits=16, sample_counts=[50], trials=5, seed=11)
    assert suite.reports[0].experiment.q == 2**16
