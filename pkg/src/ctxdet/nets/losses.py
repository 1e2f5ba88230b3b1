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

from typing import Tuple

import numpy as np


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """1 / (1 + exp(-x)) without overflow."""
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))


def two_class_log_loss(outputs: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Sum of independent log-losses over two outputs per cell.

    For outputs f = (f_0, f_1) and label y the loss is
    log(1 + exp(-f_y)) + log(1 + exp(f_{1-y})): the labelled output is pushed up and the other
    one down.

    Args:
        outputs (ndarray): Shape (..., 2); the last axis holds the background and head outputs.
        labels (ndarray): Binary labels of shape outputs.shape[:-1].

    Returns:
        Tuple[float, ndarray]: The summed loss and its gradient with respect to outputs.
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if outputs.shape[:-1] != labels.shape or outputs.shape[-1] != 2:
        raise ValueError(f"outputs {outputs.shape} do not match labels {labels.shape}")
    one_hot = np.stack([labels == 0, labels == 1], axis=-1)
    # sign +1 pushes an output down, -1 pushes it up
    sign = np.where(one_hot, -1.0, 1.0)
    signed = sign * outputs
    loss = float(softplus(signed).sum())
    gradient = sign * sigmoid(signed)
    return loss, gradient
