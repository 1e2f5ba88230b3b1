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

import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from ctxdet.exceptions import MissingModelError, ModelFormatError
from ctxdet.nets.dense import Activation, DenseLayer, DenseNet, InputNormalizer

logger = logging.getLogger(__name__)

MAGIC = b"CTXDET-MODEL 1\n"
_DTYPE = "<f8"


def save_model(
    path: Union[str, Path], header: Dict[str, Any], arrays: Dict[str, np.ndarray]
) -> None:
    """Writes a model container: magic line, JSON header line, raw little-endian float64 data.

    Arrays are written in sorted name order and the header records their names and shapes, so
    saving the same model twice yields identical bytes and loading restores it bit-exactly.

    Args:
        path (Union[str, Path]): Output file.
        header (Dict[str, Any]): JSON-serialisable metadata (architecture, configuration).
        arrays (Dict[str, ndarray]): Named parameter arrays.
    """
    names = sorted(arrays)
    layout = [[name, list(np.shape(arrays[name]))] for name in names]
    header_line = json.dumps({"meta": header, "arrays": layout}, sort_keys=True)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as stream:
        stream.write(MAGIC)
        stream.write(header_line.encode("utf-8") + b"\n")
        for name in names:
            stream.write(np.ascontiguousarray(arrays[name], dtype=_DTYPE).tobytes())
    logger.debug("saved model %s with %d arrays", path, len(names))


def load_model(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Reads a container written by save_model.

    Args:
        path (Union[str, Path]): Model file.

    Returns:
        Tuple[Dict[str, Any], Dict[str, ndarray]]: The metadata and the named arrays.

    Raises:
        MissingModelError: If the file does not exist.
        ModelFormatError: If the file is not a model container or is truncated.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingModelError(f"model file not found: {path}")
    data = path.read_bytes()
    if not data.startswith(MAGIC):
        raise ModelFormatError(f"{path} is not a model file")
    try:
        end = data.index(b"\n", len(MAGIC))
        parsed = json.loads(data[len(MAGIC) : end].decode("utf-8"))
    except ValueError as error:
        raise ModelFormatError(f"{path} has an unreadable header: {error}") from error
    offset = end + 1
    arrays = {}
    for name, shape in parsed["arrays"]:
        count = int(np.prod(shape, dtype=np.int64))
        if offset + 8 * count > len(data):
            raise ModelFormatError(f"{path} is truncated in array '{name}'")
        flat = np.frombuffer(data, dtype=_DTYPE, count=count, offset=offset)
        arrays[name] = flat.astype(np.float64).reshape(shape)
        offset += 8 * count
    if offset != len(data):
        raise ModelFormatError(f"{path} has trailing bytes")
    return parsed["meta"], arrays


def net_to_arrays(net: DenseNet, prefix: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Architecture metadata and prefixed parameter arrays of a network."""
    arrays = {f"{prefix}.{name}": value for name, value in net.parameters().items()}
    return {"layers": net.architecture()}, arrays


def net_from_arrays(meta: Dict[str, Any], arrays: Dict[str, np.ndarray], prefix: str) -> DenseNet:
    """Rebuilds a network saved with net_to_arrays.

    Args:
        meta (Dict[str, Any]): The `{"layers": ...}` metadata.
        arrays (Dict[str, ndarray]): All arrays of the container.
        prefix (str): The prefix the network was saved under.

    Returns:
        DenseNet: The restored network.
    """
    layers = [
        DenseLayer(
            weight=arrays[f"{prefix}.{index}.weight"],
            bias=arrays[f"{prefix}.{index}.bias"],
            activation=Activation(spec["activation"]),
            dropout=float(spec["dropout"]),
        )
        for index, spec in enumerate(meta["layers"])
    ]
    return DenseNet(layers)


def normalizer_to_arrays(normalizer: InputNormalizer, prefix: str) -> Dict[str, np.ndarray]:
    return {f"{prefix}.mean": normalizer.mean, f"{prefix}.std": normalizer.std}


def normalizer_from_arrays(arrays: Dict[str, np.ndarray], prefix: str) -> InputNormalizer:
    return InputNormalizer(arrays[f"{prefix}.mean"], arrays[f"{prefix}.std"])
