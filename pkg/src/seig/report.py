# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Render results as plain text, JSON or CSV."""

import csv
import json
from gettext import gettext as _
from io import StringIO
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np
from jinja2 import Environment, PackageLoader

from ._format import exact_size, human_size
from .eigen import EigenResult

if TYPE_CHECKING:
    from .bench import BenchReport
    from .harness import AttackSuite

_ENV = Environment(loader=PackageLoader("seig", "templates"), trim_blocks=True)
_ENV.globals.update(_=_, human_size=human_size, exact_size=exact_size)


def format_json(data: Any) -> str:
    """Serialize *data* with indentation. numpy values become plain numbers
    and lists.
    """

    def custom_serializer(obj: Any) -> Any:
        """Custom serializer for numpy and path objects

        Args:
            obj: Object to be serialized
        """
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, Path):
            return str(obj)
        raise TypeError(
            f"Object of type {obj.__class__.__name__} is not JSON serializable"
        )

    return json.dumps(data, indent=2, default=custom_serializer) + "\n"


def eigen_to_dict(
    result: EigenResult, context: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Plain data of an :class:`EigenResult`."""
    return {
        "method": result.method,
        "iterations": result.iterations,
        "matvec_calls": result.matvec_calls,
        "breakdown": result.breakdown,
        "eigenvalues": result.eigenvalues,
        "residuals": result.residuals,
        "residuals_verified": result.residuals_verified,
        "context": context or {},
    }


def render_eigen(
    result: EigenResult,
    fmt: str = "plain",
    context: Optional[Dict[str, Any]] = None,
) -> str:
    """Eigenvalues and residuals. *context* adds key-value lines, such as the
    run parameters.
    """
    if fmt == "json":
        return format_json(eigen_to_dict(result, context))
    return _ENV.get_template("eigen_report.jinja2").render(
        result=result, context=context
    )


def render_bench(bench: "BenchReport", fmt: str = "plain") -> str:
    """Sizes and timings of :mod:`seig.bench`."""
    if fmt == "json":
        return format_json(bench.to_dict())
    return _ENV.get_template("bench_report.jinja2").render(bench=bench)


def render_attack(suite: "AttackSuite", fmt: str = "plain") -> str:
    """The attack simulation. CSV output has one line per N."""
    if fmt == "json":
        return format_json(
            {
                "q_bits": suite.q_bits,
                "reports": [report.to_dict() for report in suite.reports],
                "halving_ratios": suite.halving_ratios(),
                "extrapolated_q_bits": suite.extrapolated_q_bits,
                "extrapolated_samples": suite.extrapolated_samples,
                "audit": suite.audit.to_dict() if suite.audit else None,
                "control": suite.control.to_dict() if suite.control else None,
            }
        )
    if fmt == "csv":
        output = StringIO()
        writer = csv.writer(output, lineterminator="\n")
        writer.writerow(
            ["model", "n", "q_bits", "samples", "trials", "variance"]
            + ["predicted", "ratio", "bias"]
        )
        for report in suite.reports:
            exp = report.experiment
            writer.writerow(
                [exp.model, exp.n, suite.q_bits, exp.samples, exp.trials]
                + [report.empirical_variance, report.predicted_variance]
                + [report.ratio, report.bias]
            )
        return output.getvalue()
    return _ENV.get_template("attack_report.jinja2").render(suite=suite)
