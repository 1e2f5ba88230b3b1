# Copyright Amazon.com Inc. or its affiliates. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License"). You
# may not use this file except in compliance with the License. A copy of
# the License is located at
#
#     http://aws.amazon.com/apache2.0/
#
# or in the "license" file accompanying this file. This file is
# distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF
# ANY KIND, either express or implied. See the License for the specific
# language governing permissions and limitations under the License.

import csv
from typing import Dict, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ctxdet.dataio.scenes import PathLike  # noqa: E402
from ctxdet.evalkit.curves import PrCurve  # noqa: E402

PR_COLUMNS = ("score", "tp_cum", "fp_cum", "precision", "recall")


def write_pr_csv(path: PathLike, curve: PrCurve) -> None:
    """Writes one row per rank with 6-decimal fixed-point reals.

    Args:
        path (PathLike): Output CSV file.
        curve (PrCurve): The curve.
    """
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(PR_COLUMNS)
        for score, tp, fp, precision, recall in zip(
            curve.scores, curve.tp_cum, curve.fp_cum, curve.precision, curve.recall
        ):
            writer.writerow([f"{score:.6f}", int(tp), int(fp), f"{precision:.6f}", f"{recall:.6f}"])


def plot_pr_curve(path: PathLike, curves: Dict[str, PrCurve]) -> None:
    """Draws precision over recall for each labelled curve into an SVG file.

    The SVG carries no date and uses a fixed id salt, so identical curves give identical files.

    Args:
        path (PathLike): Output SVG file.
        curves (Dict[str, PrCurve]): Curves by legend label.
    """
    with matplotlib.rc_context({"svg.hashsalt": "ctxdet", "svg.fonttype": "none"}):
        figure, axes = plt.subplots(figsize=(5, 5))
        for label, curve in curves.items():
            axes.plot(curve.recall, curve.precision, label=f"{label} (AP {100 * curve.ap:.1f})")
        axes.set_xlabel("recall")
        axes.set_ylabel("precision")
        axes.set_xlim(0.0, 1.0)
        axes.set_ylim(0.0, 1.02)
        axes.grid(True, alpha=0.3)
        if curves:
            axes.legend(loc="lower left")
        figure.savefig(path, format="svg", metadata={"Date": None})
        plt.close(figure)


def write_filter_table(path: PathLike, rows: Sequence[Tuple[float, float]]) -> None:
    """Writes the filtering benchmark as CSV with columns keep_fraction, ap."""
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["keep_fraction", "ap"])
        for fraction, ap in rows:
            writer.writerow([f"{fraction:.6f}", f"{ap:.6f}"])
