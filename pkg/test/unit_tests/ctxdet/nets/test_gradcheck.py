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

import numpy as np
import pytest

from ctxdet.exceptions import NonSmoothPointError
from ctxdet.nets.gradcheck import check_gradients, resample_until_smooth


def _quadratic(params, corrupt=False):
    def objective():
        a, b = params["a"], params["b"]
        loss = float(np.sum(a**2) + 3.0 * np.sum(a) * b[0])
        grads = {"a": 2.0 * a + 3.0 * b[0], "b": np.array([3.0 * np.sum(a)])}
        if corrupt:
            grads["b"] = grads["b"] * 1.5
        return loss, grads, None

    return objective


def test_correct_gradient_passes() -> None:
    params = {"a": np.array([0.5, -1.0, 2.0]), "b": np.array([0.7])}
    report = check_gradients(params, _quadratic(params))
    assert report.passed
    assert report.checked_entries == 4
    np.testing.assert_array_equal(params["a"], [0.5, -1.0, 2.0])


def test_wrong_gradient_is_located() -> None:
    params = {"a": np.array([0.5, -1.0, 2.0]), "b": np.array([0.7])}
    report = check_gradients(params, _quadratic(params, corrupt=True))
    assert not report.passed
    assert report.worst_parameter == "b"
    assert report.worst_index == (0,)
    assert report.max_relative_error == pytest.approx(1.0 / 3.0, rel=1e-4)


def test_entry_sampling() -> None:
    params = {"a": np.linspace(-1.0, 1.0, 20), "b": np.array([0.3])}
    report = check_gradients(params, _quadratic(params), max_entries=5)
    assert report.checked_entries == 6


def test_kink_is_reported() -> None:
    params = {"x": np.array([0.0])}

    def objective():
        x = params["x"][0]
        return abs(x), {"x": np.array([np.sign(x)])}, bool(x > 0)

    with pytest.raises(NonSmoothPointError, match="'x'"):
        check_gradients(params, objective)


def test_resample_until_smooth() -> None:
    attempts = []

    def check(attempt):
        attempts.append(attempt)
        if attempt < 2:
            raise NonSmoothPointError("kink")
        return "report"

    assert resample_until_smooth(check) == "report"
    assert attempts == [0, 1, 2]


def test_resample_gives_up() -> None:
    def check(attempt):
        raise NonSmoothPointError("kink")

    with pytest.raises(NonSmoothPointError, match="3 attempts"):
        resample_until_smooth(check, max_attempts=3)
