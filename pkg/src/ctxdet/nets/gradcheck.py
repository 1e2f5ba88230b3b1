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

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Optional, Tuple

import numpy as np

from ctxdet.exceptions import NonSmoothPointError
from ctxdet.nets.dense import DenseNet, Mode, backward, forward, relu_signature

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4

# Objective evaluated at the current parameter values: (loss, analytic gradients, signature).
# The signature identifies the smooth piece (argmax labelings, relu patterns) the point lies in.
Objective = Callable[[], Tuple[float, Dict[str, np.ndarray], Hashable]]


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_parameter: str
    worst_index: Tuple[int, ...]
    tolerance: float
    checked_entries: int
    per_parameter: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def check_gradients(
    params: Dict[str, np.ndarray],
    objective: Objective,
    tolerance: float = DEFAULT_TOLERANCE,
    step: float = DEFAULT_STEP,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compares analytic gradients with central finite differences.

    The parameter arrays are perturbed in place and restored after each evaluation, so the
    objective must read them on every call. The error of an entry is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-3 * scale) where scale is the largest
    gradient magnitude seen, so entries much smaller than the overall gradient are judged on
    an absolute footing.

    Args:
        params (Dict[str, ndarray]): Live parameter arrays read by the objective.
        objective (Objective): Evaluates loss, analytic gradients and smoothness signature.
        tolerance (float): Largest acceptable relative error. Default: 1e-4.
        step (float): Finite-difference step. Default: 1e-5.
        max_entries (Optional[int]): Check at most this many random entries per array.
            Default: all entries.
        rng (Optional[np.random.Generator]): Random stream for entry sampling.

    Returns:
        GradCheckReport: The largest error and where it occurred.

    Raises:
        NonSmoothPointError: If a perturbation changes the signature, i.e. the finite
            difference straddles a kink.
    """
    _, analytic, signature = objective()
    rng = rng or np.random.default_rng(0)
    numeric = {}
    selected = {}
    for name, array in params.items():
        flat = array.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        values = np.empty(len(indices))
        for position, index in enumerate(indices):
            original = flat[index]
            flat[index] = original + step
            plus, _, plus_signature = objective()
            flat[index] = original - step
            minus, _, minus_signature = objective()
            flat[index] = original
            if plus_signature != signature or minus_signature != signature:
                where = np.unravel_index(index, array.shape)
                raise NonSmoothPointError(f"'{name}' at {tuple(int(i) for i in where)}")
            values[position] = (plus - minus) / (2.0 * step)
        numeric[name] = values
        selected[name] = indices
    scale = max(
        [float(np.max(np.abs(g))) for g in analytic.values() if g.size]
        + [float(np.max(np.abs(n))) for n in numeric.values() if n.size]
        + [0.0]
    )
    floor = max(1e-3 * scale, 1e-12)
    report = GradCheckReport(0.0, "", (), tolerance, 0)
    for name, values in numeric.items():
        exact = analytic[name].reshape(-1)[selected[name]]
        errors = np.abs(exact - values) / np.maximum(
            np.maximum(np.abs(exact), np.abs(values)), floor
        )
        report.checked_entries += errors.size
        if not errors.size:
            continue
        worst = int(np.argmax(errors))
        report.per_parameter[name] = float(errors[worst])
        if errors[worst] > report.max_relative_error or not report.worst_parameter:
            report.max_relative_error = float(errors[worst])
            report.worst_parameter = name
            where = np.unravel_index(selected[name][worst], params[name].shape)
            report.worst_index = tuple(int(i) for i in where)
    logger.debug(
        "gradient check: max relative error %.3g at %s%s over %d entries",
        report.max_relative_error,
        report.worst_parameter,
        list(report.worst_index),
        report.checked_entries,
    )
    return report


def resample_until_smooth(
    check: Callable[[int], GradCheckReport], max_attempts: int = 5
) -> GradCheckReport:
    """Retries a gradient check at fresh points while it lands on kinks.

    Args:
        check (Callable[[int], GradCheckReport]): Runs the check for an attempt number; each
            attempt should use a different point.
        max_attempts (int): Attempts before giving up. Default: 5.

    Returns:
        GradCheckReport: The report of the first smooth attempt.

    Raises:
        NonSmoothPointError: If every attempt hits a kink.
    """
    last_error = None
    for attempt in range(max_attempts):
        try:
            return check(attempt)
        except NonSmoothPointError as error:
            logger.debug("attempt %d hit a non-smooth point: %s", attempt, error)
            last_error = error
    raise NonSmoothPointError(f"no smooth point after {max_attempts} attempts: {last_error}")


def grad_check(
    net: DenseNet,
    loss_fn: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    inputs: np.ndarray,
    tolerance: float = DEFAULT_TOLERANCE,
    max_attempts: int = 5,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Gradient check of a dense network under a loss on its output, in eval mode.

    Args:
        net (DenseNet): The network; parameters are restored afterwards.
        loss_fn (Callable[[ndarray], Tuple[float, ndarray]]): Loss and output gradient.
        inputs (ndarray): Inputs of shape (N, D).
        tolerance (float): Largest acceptable relative error. Default: 1e-4.
        max_attempts (int): Input resamples allowed when a relu kink is hit. Default: 5.
        rng (Optional[np.random.Generator]): Random stream for resampling.

    Returns:
        GradCheckReport: The check result.
    """
    rng = rng or np.random.default_rng(0)
    params = net.parameters()

    def check(attempt: int) -> GradCheckReport:
        x = inputs if attempt == 0 else inputs + rng.normal(0.0, 1e-3, size=np.shape(inputs))

        def objective() -> Tuple[float, Dict[str, np.ndarray], Hashable]:
            net.touch()
            output, tape = forward(net, x, Mode.EVAL)
            loss, d_output = loss_fn(output)
            grads, _ = backward(net, tape, d_output)
            return loss, grads, relu_signature(tape)

        return check_gradients(params, objective, tolerance, rng=rng)

    return resample_until_smooth(check, max_attempts)
