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

from ctxdet.exceptions import MissingModelError, ModelFormatError
from ctxdet.nets.dense import Activation, InputNormalizer, init_dense_net
from ctxdet.nets.serialization import (
    MAGIC,
    load_model,
    net_from_arrays,
    net_to_arrays,
    normalizer_from_arrays,
    normalizer_to_arrays,
    save_model,
)


def _saved(tmp_path, rng, name="model.bin"):
    net = init_dense_net([4, 3, 2], [Activation.RELU, Activation.IDENTITY], rng, [0.5, 0.0])
    meta, arrays = net_to_arrays(net, "net")
    arrays.update(normalizer_to_arrays(InputNormalizer(np.arange(4.0), np.ones(4)), "norm"))
    path = tmp_path / name
    save_model(path, {"net": meta, "kind": "test"}, arrays)
    return net, path


def test_model_restores_exactly(tmp_path, rng) -> None:
    net, path = _saved(tmp_path, rng)
    meta, arrays = load_model(path)
    assert meta["kind"] == "test"
    restored = net_from_arrays(meta["net"], arrays, "net")
    assert restored.architecture() == net.architecture()
    for name, value in net.parameters().items():
        np.testing.assert_array_equal(restored.parameters()[name], value)
    np.testing.assert_array_equal(normalizer_from_arrays(arrays, "norm").mean, np.arange(4.0))


def test_saving_is_deterministic(tmp_path) -> None:
    _, first = _saved(tmp_path, np.random.default_rng(5), "a.bin")
    _, second = _saved(tmp_path, np.random.default_rng(5), "b.bin")
    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes().startswith(MAGIC)


def test_missing_model(tmp_path) -> None:
    with pytest.raises(MissingModelError):
        load_model(tmp_path / "absent.bin")


@pytest.mark.parametrize(
    "mutate",
    [
        lambda data: b"NOT A MODEL\n" + data,
        lambda data: data[:-8],
        lambda data: data + b"\x00",
        lambda data: MAGIC + b"{broken",
        lambda data: MAGIC + b"{broken\n",
    ],
)
def test_corrupt_model(tmp_path, rng, mutate) -> None:
    _, path = _saved(tmp_path, rng)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(ModelFormatError):
        load_model(path)
