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
from utils_for_testing import small_synth

from ctxdet.dataio.synthetic import generate_synthetic
from ctxdet.localmodel.local import LocalConfig, train_local
from ctxdet.nets.optim import SgdConfig


@pytest.fixture(scope="session")
def synthetic_splits():
    return generate_synthetic(small_synth(n_scenes=30))


@pytest.fixture(scope="session")
def trained_local(synthetic_splits):
    train, _, _ = synthetic_splits
    config = LocalConfig(hidden=8, sgd=SgdConfig(learning_rate=0.01, batch_size=16, epochs=2))
    model, _ = train_local(train, config)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
