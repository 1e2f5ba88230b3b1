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

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml

from ctxdet._head_detection._version import __version__
from ctxdet.cli.config import RunConfig, load_combine_params, load_run_config
from ctxdet.cli.detection import DetectionMode, ModelBundle, detect_all, scored_detections
from ctxdet.cli.manifest import RunManifest, new_manifest
from ctxdet.cli.verify import Suite, run_suites
from ctxdet.dataio.scenes import (
    SceneRecord,
    load_detections,
    load_scenes,
    save_detections,
    save_global_scores,
    save_scenes,
)
from ctxdet.dataio.synthetic import SPLIT_NAMES, generate_synthetic
from ctxdet.evalkit.curves import ApInterpolation, eq_pr_threshold, evaluate_detections
from ctxdet.evalkit.evaluator import DetectionEvaluator
from ctxdet.evalkit.report import plot_pr_curve, write_filter_table, write_pr_csv
from ctxdet.exceptions import CtxDetError, MissingModelError
from ctxdet.globalmodel.calibrate import calibrate, search_grid
from ctxdet.globalmodel.combine import CombineParams
from ctxdet.globalmodel.scorer import load_global_model, save_global_model, train_global
from ctxdet.localmodel.local import load_local_model, save_local_model, train_local
from ctxdet.structloss.model import init_pairwise_params, load_pairwise_model, save_pairwise_model
from ctxdet.structloss.training import (
    fit_edge_clusters,
    prepare_pairwise_examples,
    train_pairwise,
    write_loss_trace,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_FRACTIONS = (1.0, 0.5, 0.3, 0.2, 0.1)


class UsageErrorParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1, like every other config error."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML file with the run configuration")
    common.add_argument("--seed", type=int, help="base seed overriding every section seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads per scene batch")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--verbose", action="store_true", help="log at debug level")
    return common


def _model_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--local-model", type=Path)
    parser.add_argument("--global-model", type=Path)
    parser.add_argument("--pairwise-model", type=Path)


def _fractions(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"invalid fraction list '{text}'") from error


def build_parser() -> argparse.ArgumentParser:
    """The ctxdet command line: one subcommand per pipeline stage."""
    common = _common_options()
    parser = UsageErrorParser(prog="ctxdet", description="Context-aware head detection toolkit")
    parser.add_argument("--version", action="version", version=f"ctxdet {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=UsageErrorParser)

    commands.add_parser("synth", parents=[common], help="generate the synthetic splits")

    train = commands.add_parser("train", parents=[common], help="train one of the three models")
    train.add_argument("kind", choices=["local", "global", "pairwise"])
    train.add_argument("--scenes", type=Path, required=True, help="training scenes")
    train.add_argument("--local-model", type=Path, help="local model (pairwise training)")

    calibrate_parser = commands.add_parser(
        "calibrate", parents=[common], help="fit the score combination on validation scenes"
    )
    calibrate_parser.add_argument("--scenes", type=Path, required=True)
    _model_options(calibrate_parser)

    detect = commands.add_parser("detect", parents=[common], help="score candidates")
    detect.add_argument("--scenes", type=Path, required=True)
    detect.add_argument(
        "--mode", choices=[m.value for m in DetectionMode], default=DetectionMode.LOCAL.value
    )
    detect.add_argument("--combine", type=Path, help="combine.yaml written by calibrate")
    _model_options(detect)

    evaluate = commands.add_parser("eval", parents=[common], help="AP of a detections file")
    evaluate.add_argument("--scenes", type=Path, required=True)
    evaluate.add_argument("--detections", type=Path, required=True)
    evaluate.add_argument(
        "--interpolation",
        choices=[i.value for i in ApInterpolation],
        default=ApInterpolation.ALL_POINTS.value,
    )

    bench = commands.add_parser(
        "filter-bench", parents=[common], help="AP after global filtering per keep fraction"
    )
    bench.add_argument("--scenes", type=Path, required=True)
    bench.add_argument(
        "--mode", choices=[m.value for m in DetectionMode], default=DetectionMode.LOCAL.value
    )
    bench.add_argument("--fractions", type=_fractions, default=list(DEFAULT_FRACTIONS))
    bench.add_argument("--combine", type=Path)
    _model_options(bench)

    verify = commands.add_parser("verify", parents=[common], help="run verification suites")
    verify.add_argument(
        "--suite", choices=["all"] + [s.value for s in Suite], default="all"
    )
    verify.add_argument("--instances", type=int, help="random inference-oracle instances")
    verify.add_argument("--inject-corrupt-gradient", action="store_true")
    return parser


def _write_step_losses(path: Path, losses: Sequence[float]) -> None:
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(losses):
            writer.writerow([step, repr(float(loss))])


def _load_models(args: argparse.Namespace) -> ModelBundle:
    local = load_local_model(args.local_model) if args.local_model else None
    scorer = load_global_model(args.global_model) if args.global_model else None
    pairwise = load_pairwise_model(args.pairwise_model)[0] if args.pairwise_model else None
    return ModelBundle(local, scorer, pairwise)


def _combine_params(args: argparse.Namespace, config: RunConfig) -> CombineParams:
    if args.combine is not None:
        return load_combine_params(args.combine)
    return config.combine


def cmd_synth(args: argparse.Namespace, config: RunConfig, manifest: RunManifest) -> None:
    with manifest.time("generate"):
        splits = generate_synthetic(config.synth)
    for name, scenes in zip(SPLIT_NAMES, splits):
        path = args.out / f"{name}.jsonl"
        save_scenes(path, scenes)
        manifest.outputs[name] = str(path)
        manifest.results[f"{name}_scenes"] = len(scenes)


def cmd_train(args: argparse.Namespace, config: RunConfig, manifest: RunManifest) -> None:
    scenes = load_scenes(args.scenes)
    manifest.inputs["scenes"] = str(args.scenes)
    model_path = args.out / f"{args.kind}.model"
    trace_path = args.out / f"{args.kind}_trace.csv"
    with manifest.time("train"):
        if args.kind == "local":
            model, losses = train_local(scenes, config.local)
            save_local_model(model_path, model, config.local)
            _write_step_losses(trace_path, losses)
        elif args.kind == "global":
            scorer, losses = train_global(scenes, config.global_)
            save_global_model(model_path, scorer, config.global_)
            _write_step_losses(trace_path, losses)
        else:
            _train_pairwise(args, scenes, config, model_path, trace_path)
    manifest.outputs.update(model=str(model_path), trace=str(trace_path))


def _train_pairwise(
    args: argparse.Namespace,
    scenes: Sequence[SceneRecord],
    config: RunConfig,
    model_path: Path,
    trace_path: Path,
) -> None:
    if args.local_model is None:
        raise MissingModelError("pairwise training needs a trained local model (--local-model)")
    local = load_local_model(args.local_model)
    pairwise = config.pairwise
    examples = prepare_pairwise_examples(scenes, local, pairwise.nodes, pairwise.truth_iou)
    clusters = fit_edge_clusters(examples, pairwise.clusters, pairwise.rng_seed)
    init_seed = np.random.SeedSequence(pairwise.rng_seed).spawn(3)[2]
    params = init_pairwise_params(local, clusters, pairwise, np.random.default_rng(init_seed))
    params, trace = train_pairwise(examples, params, pairwise)
    save_pairwise_model(model_path, params, pairwise)
    write_loss_trace(trace_path, trace)


def _calibration_mode(models: ModelBundle) -> DetectionMode:
    has_global = models.global_scorer is not None
    if models.pairwise is not None:
        return DetectionMode.FULL if has_global else DetectionMode.LOCAL_PAIRWISE
    return DetectionMode.LOCAL_GLOBAL if has_global else DetectionMode.LOCAL


def cmd_calibrate(args: argparse.Namespace, config: RunConfig, manifest: RunManifest) -> None:
    scenes = load_scenes(args.scenes)
    models = _load_models(args)
    mode = _calibration_mode(models)
    detect_config = replace(config.detect, keep_fraction=1.0)
    with manifest.time("detect"):
        results = detect_all(scenes, models, mode, detect_config, args.threads)
    evaluator = DetectionEvaluator(scenes, {r.scene_id: r.box_array() for r in results})
    grids = config.calibrate
    with manifest.time("calibrate"):
        result = calibrate(
            evaluator,
            {r.scene_id: r.components for r in results},
            search_grid(0.0, 1.0, grids.alpha_step),
            search_grid(-grids.beta_limit, grids.beta_limit, grids.beta_step),
            search_grid(0.0, 1.0, grids.gamma_step),
        )
    aps = {
        "local": result.ap_local,
        "local_pairwise": result.ap_local_pairwise,
        "full": result.ap_full,
    }
    path = args.out / "combine.yaml"
    document = {"combine": result.params.to_dict(), "validation_ap": aps, "mode": mode.value}
    path.write_text(yaml.safe_dump(document, sort_keys=True), encoding="utf-8")
    manifest.outputs["combine"] = str(path)
    manifest.results.update(combine=result.params.to_dict(), validation_ap=aps)
    print(
        f"alpha {result.params.alpha:.2f} beta {result.params.beta:.1f} "
        f"gamma {result.params.gamma:.2f} AP {result.ap_full:.4f}"
    )


def cmd_detect(args: argparse.Namespace, config: RunConfig, manifest: RunManifest) -> None:
    scenes = load_scenes(args.scenes)
    models = _load_models(args)
    params = _combine_params(args, config)
    with manifest.time("detect"):
        results = detect_all(scenes, models, DetectionMode(args.mode), config.detect, args.threads)
    path = args.out / "detections.txt"
    save_detections(path, scored_detections(results, params))
    manifest.outputs["detections"] = str(path)
    cells = {r.scene_id: r.cell_scores for r in results if r.cell_scores is not None}
    if cells:
        cells_path = args.out / "global_scores.txt"
        save_global_scores(cells_path, cells)
        manifest.outputs["global_scores"] = str(cells_path)
    manifest.results["combine"] = params.to_dict()


def cmd_eval(args: argparse.Namespace, config: RunConfig, manifest: RunManifest) -> None:
    scenes = load_scenes(args.scenes)
    detections = load_detections(args.detections)
    manifest.inputs.update(scenes=str(args.scenes), detections=str(args.detections))
    curve = evaluate_detections(scenes, detections, ApInterpolation(args.interpolation))
    write_pr_csv(args.out / "pr.csv", curve)
    plot_pr_curve(args.out / "pr.svg", {args.detections.stem: curve})
    manifest.outputs.update(pr_csv=str(args.out / "pr.csv"), pr_svg=str(args.out / "pr.svg"))
    manifest.results["ap"] = round(curve.ap, 6)
    if len(curve):
        manifest.results["eq_pr_threshold"] = round(eq_pr_threshold(curve), 6)
    print(f"AP {curve.ap:.4f}")


def cmd_filter_bench(args: argparse.Namespace, config: RunConfig, manifest: RunManifest) -> None:
    scenes = load_scenes(args.scenes)
    models = _load_models(args)
    params = _combine_params(args, config)
    rows = []
    for fraction in args.fractions:
        detect_config = replace(config.detect, keep_fraction=fraction)
        with manifest.time(f"keep_{fraction:g}"):
            results = detect_all(
                scenes, models, DetectionMode(args.mode), detect_config, args.threads
            )
        ap = evaluate_detections(scenes, scored_detections(results, params)).ap
        logger.info("keep fraction %g: AP %.4f", fraction, ap)
        rows.append((fraction, ap))
    path = args.out / "filter_bench.csv"
    write_filter_table(path, rows)
    manifest.outputs["table"] = str(path)
    manifest.results["ap"] = {f"{fraction:g}": round(ap, 6) for fraction, ap in rows}
    for fraction, ap in rows:
        print(f"{fraction:.2f} {ap:.4f}")


def cmd_verify(args: argparse.Namespace, config: RunConfig, manifest: RunManifest) -> None:
    verify_config = config.verify
    if args.instances is not None:
        verify_config = replace(verify_config, instances=args.instances)
    suites = list(Suite) if args.suite == "all" else [Suite(args.suite)]
    with manifest.time("verify"):
        report = run_suites(suites, verify_config, args.inject_corrupt_gradient)
    path = args.out / "verify_report.yaml"
    path.write_text(yaml.safe_dump(report.to_dict(), sort_keys=True), encoding="utf-8")
    manifest.outputs["report"] = str(path)
    manifest.results["passed"] = report.passed
    for line in report.lines():
        print(line)
    report.raise_for_failures()


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "filter-bench": cmd_filter_bench,
    "verify": cmd_verify,
}


def _record_inputs(args: argparse.Namespace, manifest: RunManifest) -> None:
    for name in ("scenes", "local_model", "global_model", "pairwise_model", "combine"):
        value = getattr(args, name, None)
        if value is not None:
            manifest.inputs[name] = str(value)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ctxdet command.

    Args:
        argv (Optional[Sequence[str]]): Arguments without the program name. Default: sys.argv.

    Returns:
        int: 0 on success, 1 on usage, configuration or input errors, 2 on runtime errors.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        config = load_run_config(args.config, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        manifest = new_manifest(
            args.command, config.to_dict(), seed=args.seed, config_path=_optional(args.config)
        )
        if argv is not None:
            manifest.argv = list(argv)
        _record_inputs(args, manifest)
        try:
            COMMANDS[args.command](args, config, manifest)
        finally:
            manifest.write(args.out)
    except CtxDetError as error:
        logger.error("%s: %s", type(error).__name__, error)
        return error.exit_code
    except OSError as error:
        logger.error("cannot access %s: %s", error.filename, error.strerror)
        return 1
    return 0


def _optional(path: Optional[Path]) -> Optional[str]:
    return str(path) if path is not None else None


if __name__ == "__main__":
    sys.exit(main())
