# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Desk-scale experiments on the blinding: a statistical inference attack
that averages perturbed vectors over many runs, and a chi-square audit of
what the cloud gets to see.

The attacker observes N runs that all start from the same hidden vector b
and tries ``b_hat = mean(b_bar) - E[r]``. Each component of ``b_hat`` has
variance ``var(r) / N``, roughly ``q**2 / (12 N)``, so unit precision at a
128-bit q needs on the order of ``q**2`` runs.
"""

import logging
import multiprocessing as mp
import sys
from argparse import ArgumentParser, Namespace
from dataclasses import asdict, dataclass, field
from gettext import gettext as _
from typing import IO, Any, Dict, Iterable, List, Optional, Sequence

import gmpy2
import numpy as np
from scipy import stats

from . import ConfigError, DomainError
from ._util import RandomSource, make_rng
from .codec import default_q
from .roles import PerturbationPool, PoolEntry, perturb

_LOGGER = logging.getLogger(__name__)

#: Models of the perturbation the attacker faces.
MODELS = ("additive", "modular")
MAX_Q_BITS = 32
#: Modular sampling multiplies two residues in int64.
MAX_MODULAR_Q_BITS = 31

MIN_AUDIT_SAMPLES = 500
AUDIT_ALPHA = 0.01
AUDIT_PASS_FRACTION = 0.95


@dataclass
class AttackExperiment:
    """Parameters of one attack simulation."""

    n: int
    q: int
    samples: int
    trials: int
    model: str = "additive"
    pool_size: int = 5
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.samples < 1 or self.trials < 2:
            raise ConfigError(
                _("n and samples must be positive, trials at least 2")
            )
        if self.model not in MODELS:
            raise ConfigError(
                _("unknown model '{model}'").format(model=self.model)
            )
        limit = MAX_Q_BITS if self.model == "additive" else MAX_MODULAR_Q_BITS
        if not 2 <= self.q <= 2**limit:
            raise ConfigError(
                _("q must lie in [2, 2**{limit}] for the {model} model").format(
                    limit=limit, model=self.model
                )
            )
        if self.model == "modular" and not gmpy2.is_prime(self.q):
            raise ConfigError(_("the modular model needs a prime q"))
        if self.pool_size < 1:
            raise ConfigError(_("the pool needs at least one seed"))

    @property
    def predicted_variance(self) -> float:
        """``q**2 / (12 N)``."""
        return self.q**2 / (12 * self.samples)


@dataclass
class AttackReport:
    """Outcome of :func:`simulate_attack`."""

    experiment: AttackExperiment
    hidden: List[int]
    empirical_variance: float
    predicted_variance: float
    bias: float
    empirical_r_mean: float
    exact_r_mean: float

    @property
    def ratio(self) -> float:
        """Empirical over predicted variance."""
        return self.empirical_variance / self.predicted_variance

    def to_dict(self) -> Dict[str, Any]:
        """Plain data for JSON output."""
        result = asdict(self)
        result["ratio"] = self.ratio
        return result


class _TrialContainer:
    """One trial: draw N perturbed copies of the hidden vector and estimate
    it. Picklable for :mod:`multiprocessing`.
    """

    def __init__(self, experiment: AttackExperiment, hidden: np.ndarray):
        self.experiment = experiment
        self.hidden = hidden

    def _perturbations(self, rng: np.random.Generator) -> np.ndarray:
        exp = self.experiment
        shape = (exp.samples, exp.n)
        if exp.model == "additive":
            return rng.integers(0, exp.q, size=shape, dtype=np.int64)
        # Every run has its own pool of seeds; b0 is shared by all runs.
        r = np.zeros(shape, dtype=np.int64)
        for _seed in range(exp.pool_size):
            alphas = rng.integers(0, exp.q, size=(exp.samples, 1))
            seeds = rng.integers(0, exp.q, size=shape)
            r = (r + alphas * seeds % exp.q) % exp.q
        betas = rng.integers(0, exp.q, size=(exp.samples, 1))
        return (r + betas * self.hidden % exp.q) % exp.q

    def __call__(self, seed: np.random.SeedSequence) -> np.ndarray:
        rng = np.random.default_rng(seed)
        r = self._perturbations(rng)
        if self.experiment.model == "additive":
            blinded = self.hidden + r
        else:
            blinded = (self.hidden + r) % self.experiment.q
        estimate = blinded.mean(axis=0) - (self.experiment.q - 1) / 2
        return np.stack([estimate, r.mean(axis=0)])


def simulate_attack(
    experiment: AttackExperiment, workers: int = 1
) -> AttackReport:
    """Run the inference attack *trials* times and compare the variance of
    its estimate with ``q**2 / (12 N)``.

    Every trial draws from its own stream spawned from *seed*, so the result
    does not depend on *workers*.
    """
    root = np.random.SeedSequence(experiment.seed)
    hidden_seed, *trial_seeds = root.spawn(experiment.trials + 1)
    hidden = np.random.default_rng(hidden_seed).integers(
        0, experiment.q, size=experiment.n, dtype=np.int64
    )
    container = _TrialContainer(experiment, hidden)
    if workers > 1:
        with mp.Pool(workers) as pool:
            results = pool.map(container, trial_seeds)
        pool.join()
    else:
        results = [container(seed) for seed in trial_seeds]
    outcome = np.array(results)
    estimates = outcome[:, 0, :]
    r_means = outcome[:, 1, :]

    empirical = float(estimates.var(axis=0, ddof=1).mean())
    _LOGGER.debug(
        "attack with N=%s over %s trials: variance %s",
        experiment.samples,
        experiment.trials,
        empirical,
    )
    return AttackReport(
        experiment=experiment,
        hidden=[int(x) for x in hidden],
        empirical_variance=empirical,
        predicted_variance=experiment.predicted_variance,
        bias=float((estimates - hidden).mean()),
        empirical_r_mean=float(r_means.mean()),
        exact_r_mean=(experiment.q - 1) / 2,
    )


def samples_for_precision(q: int, precision: float = 1.0) -> int:
    """Runs an attacker needs before the standard deviation of the estimate
    drops to *precision*.

    >>> samples_for_precision(2**16)
    357913942
    """
    if precision <= 0:
        raise DomainError(_("precision must be positive"))
    return int(-(-(q * q) // (12 * precision * precision)))


@dataclass
class UniformityAudit:
    """Chi-square statistic and p-value per vector component."""

    statistics: List[float]
    p_values: List[float]
    samples: int
    bins: int
    fraction: float = 0.0
    passed: bool = False

    def to_dict(self) -> Dict[str, Any]:
        """Plain data for JSON output."""
        return asdict(self)


def _bin_widths(q: int, bins: int) -> np.ndarray:
    # Bin b holds the residues x with x * bins // q == b.
    edges = [-(-(b * q) // bins) for b in range(bins + 1)]
    return np.diff(np.array(edges, dtype=float))


def uniformity_audit(
    transcript: Sequence[Sequence[int]],
    q: int,
    bins: Optional[int] = None,
    min_samples: int = MIN_AUDIT_SAMPLES,
) -> UniformityAudit:
    """Test every component of the vectors in *transcript* for uniformity
    on ``[0, q)``. The audit passes when at least 95% of the components have
    a p-value above 0.01.

    Residues are grouped into *bins* classes; by default enough that each
    expects about 20 samples.

    Raises:
        DomainError: fewer than *min_samples* vectors, or values outside of
            ``[0, q)``.
    """
    samples = len(transcript)
    if samples < min_samples:
        raise DomainError(
            _("the audit needs at least {minimum} samples, got {count}").format(
                minimum=min_samples, count=samples
            )
        )
    if bins is None:
        bins = max(2, min(q, samples // 20))
    if not 2 <= bins <= q:
        raise DomainError(_("bins must lie in [2, q]"))
    width = len(transcript[0])
    if any(len(vector) != width for vector in transcript):
        raise DomainError(_("transcript vectors differ in length"))

    if any(not 0 <= x < q for vector in transcript for x in vector):
        raise DomainError(_("transcript holds values outside of [0, q)"))
    classes = np.array(
        [[x * bins // q for x in vector] for vector in transcript],
        dtype=np.int64,
    )
    expected = _bin_widths(q, bins) * samples / q
    statistics = []
    p_values = []
    for component in range(width):
        observed = np.bincount(classes[:, component], minlength=bins)
        result = stats.chisquare(observed, expected)
        statistics.append(float(result.statistic))
        p_values.append(float(result.pvalue))

    fraction = float(np.mean(np.array(p_values) > AUDIT_ALPHA))
    return UniformityAudit(
        statistics=statistics,
        p_values=p_values,
        samples=samples,
        bins=bins,
        fraction=fraction,
        passed=fraction >= AUDIT_PASS_FRACTION,
    )


def perturbation_transcript(
    vector: Sequence[int],
    q: int,
    samples: int,
    pool_size: int = 5,
    rng: Optional[RandomSource] = None,
    perturbed: bool = True,
) -> List[List[int]]:
    """What the cloud sees when *samples* sessions blind the same *vector*
    with :func:`~seig.roles.perturb`, each with a fresh pool. With
    *perturbed* off the vector goes out as it is, which no audit should
    accept.

    Only the vectors matter here, so pool images are zero.
    """
    if rng is None:
        rng = make_rng()
    n = len(vector)
    zeros = tuple(0 for _ in range(n))
    transcript = []
    for _sample in range(samples):
        if not perturbed:
            transcript.append(list(vector))
            continue
        pool = PerturbationPool(q=q, d=0, plaintext_n=q * q, matrix_bound=1)
        for _seed in range(pool_size):
            pool.add_seed(
                PoolEntry(
                    vector=tuple(rng.randrange(q) for _ in range(n)),
                    image=zeros,
                    vector_scale=0,
                    image_scale=0,
                )
            )
        blinded, _coefficients = perturb(vector, pool, rng)
        transcript.append(blinded)
    return transcript


@dataclass
class AttackSuite:
    """Several attack reports over increasing N, plus an optional audit."""

    reports: List[AttackReport]
    q_bits: int
    extrapolated_q_bits: int = 128
    audit: Optional[UniformityAudit] = None
    control: Optional[UniformityAudit] = None
    extrapolated_samples: int = field(init=False)

    def __post_init__(self) -> None:
        self.extrapolated_samples = samples_for_precision(
            2**self.extrapolated_q_bits
        )

    def halving_ratios(self) -> List[float]:
        """Variance ratio of consecutive reports, scaled by their N ratio.
        One means the variance follows ``1 / N`` exactly.
        """
        return [
            (previous.empirical_variance / current.empirical_variance)
            * (previous.experiment.samples / current.experiment.samples)
            for previous, current in zip(self.reports, self.reports[1:])
        ]


def run_suite(
    n: int,
    q_bits: int,
    sample_counts: Iterable[int],
    trials: int,
    model: str = "additive",
    seed: Optional[int] = None,
    workers: int = 1,
    audit_q_bits: Optional[int] = None,
    audit_samples: int = 1000,
) -> AttackSuite:
    """Simulate the attack for every N in *sample_counts*. The additive
    model uses ``q = 2**q_bits``, the modular model the smallest prime above
    ``2**(q_bits - 1)``. With *audit_q_bits*, also audit a perturbation
    transcript at that q, and the unperturbed control.
    """
    q = default_q(q_bits) if model == "modular" else 2**q_bits
    reports = [
        simulate_attack(
            AttackExperiment(
                n=n,
                q=q,
                samples=samples,
                trials=trials,
                model=model,
                seed=None if seed is None else seed + index,
            ),
            workers,
        )
        for index, samples in enumerate(sample_counts)
    ]
    suite = AttackSuite(reports=reports, q_bits=q_bits)
    if audit_q_bits is not None:
        audit_q = 2**audit_q_bits
        rng = make_rng(seed)
        vector = [rng.randrange(audit_q) for _ in range(n)]
        suite.audit = uniformity_audit(
            perturbation_transcript(vector, audit_q, audit_samples, rng=rng),
            audit_q,
        )
        suite.control = uniformity_audit(
            perturbation_transcript(
                vector, audit_q, audit_samples, rng=rng, perturbed=False
            ),
            audit_q,
        )
    return suite


def add_arguments(parser: ArgumentParser) -> None:
    """Add arguments to parser."""
    parser.add_argument("--n", type=int, default=4, help=_("dimension"))
    parser.add_argument(
        "--q-bits", type=int, default=16, help=_("bits of the small modulus")
    )
    parser.add_argument(
        "--samples",
        type=int,
        nargs="+",
        default=[500, 1000, 2000],
        help=_("runs observed by the attacker, N"),
    )
    parser.add_argument(
        "--trials", type=int, default=200, help=_("repetitions per N")
    )
    parser.add_argument(
        "--model",
        choices=MODELS,
        default="additive",
        help=_("how the perturbation is applied"),
    )
    parser.add_argument(
        "--workers", type=int, default=1, help=_("worker processes")
    )
    parser.add_argument(
        "--audit-q-bits",
        type=int,
        metavar="BITS",
        help=_("also audit a perturbation transcript at this modulus"),
    )
    parser.add_argument(
        "--audit-samples",
        type=int,
        default=1000,
        help=_("vectors in the audited transcript"),
    )
    parser.add_argument(
        "--format",
        choices=["plain", "json", "csv"],
        default="plain",
        help=_("output format"),
    )


def run(args: Namespace, out: IO[str] = sys.stdout) -> int:
    """Run the attack simulation and print a report."""
    # pylint: disable=import-outside-toplevel
    from .report import render_attack

    suite = run_suite(
        n=args.n,
        q_bits=args.q_bits,
        sample_counts=args.samples,
        trials=args.trials,
        model=args.model,
        seed=args.seed,
        workers=args.workers,
        audit_q_bits=args.audit_q_bits,
        audit_samples=args.audit_samples,
    )
    out.write(render_attack(suite, args.format))
    if suite.audit is not None and not suite.audit.passed:
        return 1
    return 0
