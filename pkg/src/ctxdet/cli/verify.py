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
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Hashable, Iterator, List, Tuple

import numpy as np

from ctxdet.cli.config import VerifyConfig
from ctxdet.dataio.scenes import GroundTruth, SceneRecord
from ctxdet.dataio.synthetic import SynthConfig, generate_synthetic
from ctxdet.evalkit.curves import (
    eq_pr_threshold,
    evaluate_detections,
    pr_curve,
    rank_scene_detections,
)
from ctxdet.exceptions import VerificationError
from ctxdet.geom.boxes import BoundingBox
from ctxdet.geom.grid import CELL_SIDES, NUM_CELLS, build_grid
from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.exhaustive import exhaustive_max_marginals, maximize
from ctxdet.inference.potentials import Potentials, joint_score
from ctxdet.inference.qpbo import UNDETERMINED, qpbo_labels
from ctxdet.inference.scores import cascade_max_marginals
from ctxdet.localmodel.local import LocalModel
from ctxdet.nets.dense import Activation, InputNormalizer, init_dense_net
from ctxdet.nets.gradcheck import (
    GradCheckReport,
    Objective,
    check_gradients,
    resample_until_smooth,
)
from ctxdet.nets.losses import softplus
from ctxdet.structloss.losses import LossSpec, hamming_augmented, ssvm_loss, surrogate_loss
from ctxdet.structloss.model import PairwiseConfig, init_pairwise_params
from ctxdet.structloss.training import (
    fit_edge_clusters,
    pairwise_objective,
    prepare_pairwise_examples,
)

logger = logging.getLogger(__name__)

SOFTPLUS_TOLERANCE = 1e-9
AP_FIXTURE = 5.0 / 6.0
VERIFY_CLUSTERS = 4


class Suite(str, Enum):
    GRADCHECK = "gradcheck"
    INFERENCE_ORACLE = "inference-oracle"
    EVAL_FIXTURES = "eval-fixtures"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyReport:
    """The checks run by one or more suites, in execution order."""

    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append(CheckResult(name, bool(passed), detail))
        log = logger.info if passed else logger.error
        log("%s %s: %s", "PASS" if passed else "FAIL", name, detail)

    def lines(self) -> List[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in self.checks]

    def to_dict(self) -> Dict[str, Dict[str, object]]:
        return {c.name: {"passed": c.passed, "detail": c.detail} for c in self.checks}

    def raise_for_failures(self) -> None:
        failed = [c.name for c in self.checks if not c.passed]
        if failed:
            raise VerificationError(f"failed checks: {', '.join(failed)}")


def random_instance(
    rng: np.random.Generator, size: int, spread: float
) -> Tuple[SceneGraph, Potentials]:
    """A complete graph with potentials drawn uniformly from [-spread, spread].

    Args:
        rng (np.random.Generator): Random stream.
        size (int): Number of nodes.
        spread (float): Half-width of the potential range.

    Returns:
        Tuple[SceneGraph, Potentials]: The instance.
    """
    graph = SceneGraph.complete(size)
    unary = rng.uniform(-spread, spread, size)
    return graph, Potentials(unary, rng.uniform(-spread, spread, len(graph.edges)))


def _report_detail(report: GradCheckReport) -> str:
    return (
        f"max relative error {report.max_relative_error:.3g} at {report.worst_parameter}"
        f"{list(report.worst_index)} over {report.checked_entries} entries"
    )


def _corrupted(objective: Objective, name: str) -> Objective:
    def wrapped() -> Tuple[float, Dict[str, np.ndarray], Hashable]:
        loss, grads, signature = objective()
        grads = dict(grads)
        grads[name] = grads[name].copy()
        flat = grads[name].reshape(-1)
        flat[int(np.argmax(np.abs(flat)))] *= 2.0
        return loss, grads, signature

    return wrapped


def _loss_level_check(
    config: VerifyConfig, rng: np.random.Generator, inject_corrupt_gradient: bool
) -> GradCheckReport:
    graph = SceneGraph.complete(config.loss_nodes)
    params: Dict[str, np.ndarray] = {}
    truth: List[int] = []

    def objective() -> Tuple[float, Dict[str, np.ndarray], Hashable]:
        pots = Potentials(params["unary"].copy(), params["pairwise"].copy())
        loss, dpots = surrogate_loss(graph, pots, truth)
        signature = exhaustive_max_marginals(graph, pots).labelings.tobytes()
        return loss, {"unary": dpots.unary, "pairwise": dpots.pairwise}, signature

    def check(attempt: int) -> GradCheckReport:
        _, pots = random_instance(rng, config.loss_nodes, 1.0)
        params["unary"] = pots.unary.copy()
        params["pairwise"] = pots.pairwise.copy()
        truth[:] = [int(t) for t in rng.integers(0, 2, config.loss_nodes)]
        target = _corrupted(objective, "unary") if inject_corrupt_gradient else objective
        return check_gradients(params, target, config.tolerance)

    worst = GradCheckReport(0.0, "", (), config.tolerance, 0)
    for _ in range(config.loss_instances):
        _merge_report(worst, resample_until_smooth(check))
    return worst


def _merge_report(worst: GradCheckReport, report: GradCheckReport) -> None:
    worst.checked_entries += report.checked_entries
    if report.max_relative_error >= worst.max_relative_error:
        worst.max_relative_error = report.max_relative_error
        worst.worst_parameter = report.worst_parameter
        worst.worst_index = report.worst_index


def _pipeline_scenes(config: VerifyConfig) -> List[SceneRecord]:
    synth = SynthConfig(n_scenes=3 * config.pipeline_scenes, rng_seed=config.rng_seed)
    train, _, _ = generate_synthetic(synth)
    return [scene for scene in train if len(scene.candidates) >= 2]


def _pipeline_check(config: VerifyConfig, rng: np.random.Generator) -> GradCheckReport:
    scenes = _pipeline_scenes(config)
    descriptors = np.concatenate([scene.descriptors() for scene in scenes])
    net = init_dense_net(
        [descriptors.shape[1], 16, 2], [Activation.RELU, Activation.IDENTITY], rng, std=0.3
    )
    local = LocalModel(InputNormalizer.fit(descriptors), net)
    examples = prepare_pairwise_examples(scenes, local, m=config.loss_nodes)
    clusters = fit_edge_clusters(examples, VERIFY_CLUSTERS, config.rng_seed)
    pairwise_config = PairwiseConfig(clusters=VERIFY_CLUSTERS, rng_seed=config.rng_seed)
    params = init_pairwise_params(local, clusters, pairwise_config, rng)
    for name, array in params.parameters().items():
        if name.startswith(("unary", "pairwise")):
            array += rng.normal(0.0, 0.3, size=array.shape)
    pool: Iterator = iter(examples)

    def check(attempt: int) -> GradCheckReport:
        example = next(pool)
        objective = pairwise_objective([example], params, LossSpec())
        return check_gradients(
            params.parameters(),
            objective,
            config.tolerance,
            max_entries=config.pipeline_entries,
            rng=rng,
        )

    worst = GradCheckReport(0.0, "", (), config.tolerance, 0)
    for _ in range(min(config.pipeline_scenes, len(examples))):
        try:
            report = resample_until_smooth(check)
        except StopIteration:
            break
        _merge_report(worst, report)
    return worst


def run_gradcheck(
    config: VerifyConfig, report: VerifyReport, inject_corrupt_gradient: bool = False
) -> None:
    """Softplus identity, loss-level and end-to-end gradient checks.

    Args:
        config (VerifyConfig): Instance counts, sizes and tolerance.
        report (VerifyReport): Receives the checks.
        inject_corrupt_gradient (bool): Doubles one analytic entry of the unary potential
            gradient so the loss-level check must fail. Default: False.
    """
    rng = np.random.default_rng(config.rng_seed)
    t = np.concatenate([np.linspace(-700.0, 700.0, 14001), rng.uniform(-700.0, 700.0, 1000)])
    gap = float(np.max(np.abs(softplus(-t) - softplus(t) + t)))
    report.add("softplus-identity", gap <= SOFTPLUS_TOLERANCE, f"max deviation {gap:.3g}")

    loss_report = _loss_level_check(config, rng, inject_corrupt_gradient)
    report.add(
        "surrogate-loss-gradient",
        loss_report.max_relative_error <= config.tolerance,
        f"{config.loss_instances} instances, " + _report_detail(loss_report),
    )
    pipeline_report = _pipeline_check(config, rng)
    report.add(
        "end-to-end-gradient",
        pipeline_report.checked_entries > 0
        and pipeline_report.max_relative_error <= config.tolerance,
        _report_detail(pipeline_report),
    )


def _qpbo_consistent(graph: SceneGraph, pots: Potentials, map_value: float) -> bool:
    labels = qpbo_labels(graph, pots)
    fixed = {p: label for p, label in enumerate(labels) if label != UNDETERMINED}
    value, _ = maximize(graph, pots, fixed)
    return value >= map_value - 1e-9 * max(1.0, abs(map_value))


def run_inference_oracle(config: VerifyConfig, report: VerifyReport) -> None:
    """Cascade against exhaustive max-marginals, QPBO persistency and SSVM sanity.

    Args:
        config (VerifyConfig): Instance count, size limit and potential range.
        report (VerifyReport): Receives the checks.
    """
    rng = np.random.default_rng(config.rng_seed)
    mismatched = inconsistent = 0
    for _ in range(config.instances):
        graph, pots = random_instance(
            rng, int(rng.integers(1, config.max_nodes + 1)), config.potential_range
        )
        exhaustive = exhaustive_max_marginals(graph, pots)
        cascade = cascade_max_marginals(graph, pots)
        if not np.array_equal(exhaustive.values, cascade.values):
            mismatched += 1
        if not _qpbo_consistent(graph, pots, exhaustive.map_value):
            inconsistent += 1
    report.add(
        "cascade-equals-exhaustive",
        mismatched == 0,
        f"{mismatched} of {config.instances} instances differ",
    )
    report.add(
        "qpbo-persistency",
        inconsistent == 0,
        f"{inconsistent} of {config.instances} partial labelings not extendable to a MAP",
    )

    negative = unattained = 0
    spec = LossSpec()
    for _ in range(config.instances):
        size = int(rng.integers(1, config.max_nodes + 1))
        graph, pots = random_instance(rng, size, config.potential_range)
        truth = tuple(int(t) for t in rng.integers(0, 2, size))
        loss, _ = ssvm_loss(graph, pots, truth, spec)
        if loss < 0.0:
            negative += 1
        if loss == 0.0:
            augmented, constant = hamming_augmented(pots, truth, spec)
            best, _ = maximize(graph, augmented)
            truth_score = joint_score(graph, pots, truth)
            if math.fsum([best, constant]) > truth_score + 1e-9 * max(1.0, abs(truth_score)):
                unattained += 1
    report.add(
        "ssvm-sanity",
        negative == 0 and unattained == 0,
        f"{negative} negative losses, {unattained} zero losses below the augmented maximum",
    )


def _fixture_scene(scene_id: str, truths: List[Tuple[BoundingBox, bool]]) -> SceneRecord:
    return SceneRecord(
        scene_id, 200.0, 100.0, tuple(GroundTruth(box, difficult) for box, difficult in truths)
    )


def run_eval_fixtures(report: VerifyReport) -> None:
    """Hand-computed evaluation and grid fixtures."""
    curve = pr_curve([(0.9, True), (0.8, False), (0.7, True)], 2)
    report.add("ap-fixture", abs(curve.ap - AP_FIXTURE) <= 1e-6, f"AP {curve.ap:.6f}")

    head = BoundingBox(10.0, 10.0, 20.0, 20.0)
    hard = BoundingBox(100.0, 10.0, 20.0, 20.0)
    scenes = [_fixture_scene("fixture-0", [(head, False), (hard, True)])]
    detections = {"fixture-0": [(head, 0.9), (hard, 0.95)]}
    ranked, n_positives = rank_scene_detections(scenes, detections)
    report.add(
        "difficult-ignored",
        ranked == [(0.9, True)] and n_positives == 1,
        f"{len(ranked)} ranked detections, {n_positives} positives",
    )

    others = [BoundingBox(30.0 * i, 50.0, 20.0, 20.0) for i in range(1, 4)]
    scenes = [_fixture_scene("fixture-1", [(box, False) for box in [head] + others])]
    detections = {"fixture-1": [(box, 1.0 - 0.1 * i) for i, box in enumerate([head] + others)]}
    perfect = evaluate_detections(scenes, detections)
    report.add("perfect-detector", perfect.ap == 1.0, f"AP {perfect.ap:.6f}")
    threshold = eq_pr_threshold(perfect)
    report.add("eq-pr-threshold", math.isclose(threshold, 0.7), f"threshold {threshold:.6f}")

    grid = build_grid()
    counts = [len(grid.cells_of_scale(scale)) for scale in range(len(CELL_SIDES))]
    report.add(
        "grid-geometry",
        counts == [1, 9, 49, 225] and len(grid.cells) == NUM_CELLS,
        f"cells per scale {counts}",
    )


SuiteRunner = Callable[[VerifyConfig, VerifyReport, bool], None]

_RUNNERS: Dict[Suite, SuiteRunner] = {
    Suite.GRADCHECK: run_gradcheck,
    Suite.INFERENCE_ORACLE: lambda config, report, _: run_inference_oracle(config, report),
    Suite.EVAL_FIXTURES: lambda config, report, _: run_eval_fixtures(report),
}


def run_suites(
    suites: List[Suite], config: VerifyConfig, inject_corrupt_gradient: bool = False
) -> VerifyReport:
    """Runs the requested suites in order.

    Args:
        suites (List[Suite]): Suites to run.
        config (VerifyConfig): Verification settings.
        inject_corrupt_gradient (bool): Forwarded to the gradcheck suite. Default: False.

    Returns:
        VerifyReport: Every check that ran; call raise_for_failures to turn failures into
        a VerificationError.
    """
    report = VerifyReport()
    for suite in suites:
        logger.info("running suite %s", Suite(suite).value)
        _RUNNERS[Suite(suite)](config, report, inject_corrupt_gradient)
    return report
