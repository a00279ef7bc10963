"""Command-line surface tying the pipeline together.

Subcommands: simulate | sync | annotate | stats | export-mot | evaluate.
Every command is a pure function of its inputs (plus the seed) and writes
output files atomically, so reruns produce byte-identical results.

Exit codes: 0 success, 2 usage error, 3 malformed input file,
4 invalid value/configuration, 5 undefined metric.  The TRACKFORGE_LOG
environment variable sets the log level (DEBUG, INFO, ...).
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from dataclasses import dataclass

import click

from trackforge import __version__
from trackforge.annotation import annotate_frame, load_models
from trackforge.camera import load_rig
from trackforge.dataset_io import (
    AnnotationFile,
    AnnotationHeader,
    compute_stats,
    export_mot,
    import_tracker_results,
    load_id_map,
    read_annotations,
    save_id_map,
    stats_text_table,
    stats_to_dict,
    write_annotations,
)
from trackforge.errors import (
    ParseError,
    ProtocolError,
    UndefinedMetricError,
    ValidationError,
)
from trackforge.fileio import atomic_write_text
from trackforge.geometry import Pose
from trackforge.metrics import evaluate as evaluate_tracks
from trackforge.scenario import (
    default_capture_latencies,
    generate_scenario,
    load_scenario_spec,
    save_event_script,
)
from trackforge.sync import (
    match_streams,
    read_image_events,
    read_pose_matches,
    read_pose_stream,
    simulate_capture,
    write_image_events,
    write_pose_matches,
    write_pose_stream,
)

EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_UNDEFINED_METRIC = 5

log = logging.getLogger("trackforge")


@dataclass
class RunConfig:
    rig: str | None = None
    models: str | None = None
    poses: str | None = None
    images: str | None = None
    out_dir: str | None = None
    alpha: float = 0.5
    sync_cutoff_s: float | None = None
    seed: int | None = None
    format: str | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.sync_cutoff_s is not None and self.sync_cutoff_s <= 0:
            raise ValidationError(f"sync cutoff must be positive, got {self.sync_cutoff_s}")
        for name in ("rig", "models", "poses", "images"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise ValidationError(f"config: {name} file does not exist: {path}")


def _load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad config JSON: {exc}", path=path) from exc
    allowed = {"rig", "models", "poses", "images", "out_dir", "alpha",
               "sync_cutoff_s", "seed", "format"}
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**obj)


def guarded(fn):
    """Map toolkit exceptions to distinct exit codes with readable messages."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ParseError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_PARSE)
        except UndefinedMetricError as exc:
            click.echo(f"error: undefined metric: {exc}", err=True)
            sys.exit(EXIT_UNDEFINED_METRIC)
        except (ValidationError, ProtocolError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except FileNotFoundError as exc:
            click.echo(f"error: missing file: {exc}", err=True)
            sys.exit(EXIT_PARSE)

    return wrapper


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--seed", type=int, default=None,
              help="Override the seed found in input files.")
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file providing default paths and thresholds.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "text"]),
              default=None, help="Preferred output format where supported.")
@click.version_option(version=__version__, prog_name="trackforge")
@click.pass_context
def main(ctx, seed, config_path, fmt):
    """Capture simulation, pose-projection annotation, and tracking metrics."""
    logging.basicConfig(level=os.environ.get("TRACKFORGE_LOG", "WARNING"))
    cfg = guarded(_load_config)(config_path)
    if seed is not None:
        cfg.seed = seed
    if fmt is not None:
        cfg.format = fmt
    ctx.obj = cfg


@main.command()
@click.argument("spec_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.pass_obj
@guarded
def simulate(cfg: RunConfig, spec_path, out_dir):
    """Generate a scenario: pose stream, image-event log, models, script."""
    spec, latencies = load_scenario_spec(spec_path)
    if cfg.seed is not None:
        spec.seed = cfg.seed
    if latencies is None:
        latencies = default_capture_latencies()
    scenario = generate_scenario(spec)
    streams, _cycles = simulate_capture(latencies, max(spec.duration_s, 1e-3), spec.seed)

    os.makedirs(out_dir, exist_ok=True)
    pose_name = "poses.jsonl" if cfg.format == "json" else "poses.csv"
    write_pose_stream(scenario.all_samples(), os.path.join(out_dir, pose_name))
    write_image_events(streams, os.path.join(out_dir, "images.csv"))
    from trackforge.annotation import save_models

    save_models(scenario.models, os.path.join(out_dir, "models.json"))
    save_event_script(scenario, os.path.join(out_dir, "script.json"))
    n_frames = len(next(iter(streams.values()))) if streams else 0
    click.echo(f"wrote {pose_name}, images.csv ({len(streams)} cameras x {n_frames} frames), "
               f"models.json, script.json to {out_dir}")


@main.command()
@click.option("--poses", "poses_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Pose-stream file (.csv or .jsonl).")
@click.option("--images", "images_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Image-event log (.csv).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Matched-pairs output (.jsonl).")
@click.option("--cutoff", type=float, default=None,
              help="Maximum |delta t| in seconds; unmatched entities are omitted.")
@click.pass_obj
@guarded
def sync(cfg: RunConfig, poses_path, images_path, out_path, cutoff):
    """Match image timestamps against the pose stream."""
    poses_path = poses_path or cfg.poses
    images_path = images_path or cfg.images
    if poses_path is None or images_path is None:
        raise ValidationError("need --poses and --images (or a config providing them)")
    cutoff = cutoff if cutoff is not None else cfg.sync_cutoff_s
    if cutoff is not None and cutoff <= 0:
        raise ValidationError(f"cutoff must be positive, got {cutoff}")
    samples = read_pose_stream(poses_path)
    streams = read_image_events(images_path)
    matches = match_streams(streams, samples, cutoff)
    write_pose_matches(matches, out_path)
    click.echo(f"wrote {len(matches)} matched pairs to {out_path}")


@main.command()
@click.option("--rig", "rig_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Camera-rig JSON.")
@click.option("--models", "models_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Entity-model catalog JSON.")
@click.option("--matches", "matches_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Matched pairs from `sync`.")
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--pose-frame", type=click.Choice(["camera", "world"]), default="camera",
              show_default=True, help="Reference frame of stored positions/orientations.")
@click.pass_obj
@guarded
def annotate(cfg: RunConfig, rig_path, models_path, matches_path, out_dir, pose_frame):
    """Project entity models and fit bounding boxes, one file per camera."""
    rig_path = rig_path or cfg.rig
    models_path = models_path or cfg.models
    if rig_path is None or models_path is None:
        raise ValidationError("need --rig and --models (or a config providing them)")
    rig = load_rig(rig_path)
    models = {m.name: m for m in load_models(models_path)}
    matches = read_pose_matches(matches_path)

    per_camera: dict[int, dict[str, list]] = {}
    for m in matches:
        per_camera.setdefault(m.camera_id, {}).setdefault(m.image_path, []).append(m)

    os.makedirs(out_dir, exist_ok=True)
    suffix = ".csv" if cfg.format == "csv" else ".jsonl"
    written = []
    for cid in sorted(per_camera):
        camera = rig.by_id(cid)
        rows = []
        for image_path, group in per_camera[cid].items():
            entities = []
            for m in group:
                if m.entity_name not in models:
                    raise ValidationError(f"entity {m.entity_name!r} missing from model catalog")
                pose = Pose.from_parts(m.orientation_rad, m.position_mm)
                entities.append((models[m.entity_name], pose, m.delta_time_s))
            rows.extend(annotate_frame(camera, entities, image_path, pose_frame))
        afile = AnnotationFile(
            AnnotationHeader(camera_id=cid, rig=os.path.basename(rig_path),
                             pose_frame=pose_frame),
            rows,
        )
        out_path = os.path.join(out_dir, f"camera_{cid}{suffix}")
        write_annotations(afile, out_path)
        written.append(out_path)
    click.echo(f"wrote {len(written)} annotation file(s) to {out_dir}")


@main.command()
@click.argument("annotations", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--seconds-per-instance", type=float, default=1.5, show_default=True,
              help="Annotation-cost constant for the time estimate.")
@click.pass_obj
@guarded
def stats(cfg: RunConfig, annotations, seconds_per_instance):
    """Dataset statistics per camera and per entity class."""
    files = [read_annotations(p) for p in annotations]
    result = compute_stats(files, seconds_per_instance)
    fmt = cfg.format or "text"
    if fmt == "json":
        click.echo(json.dumps(stats_to_dict(result), indent=2))
    elif fmt == "csv":
        lines = ["section,key,instances,frames,annotation_time_min"]
        for key in sorted(result.per_camera, key=str):
            c = result.per_camera[key]
            lines.append(f"camera,{key},{c.instances},{c.frames},{c.annotation_time_min}")
        for cls in sorted(result.per_class):
            lines.append(f"class,{cls},{result.per_class[cls]},,")
        click.echo("\n".join(lines))
    else:
        click.echo(stats_text_table(result))


@main.command("export-mot")
@click.argument("annotation_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="MOT-Challenge text output.")
@click.option("--id-map", "id_map_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Existing entity-id mapping to reuse.")
@guarded
def export_mot_cmd(annotation_path, out_path, id_map_path):
    """Export visible annotation boxes as MOT-Challenge text."""
    afile = read_annotations(annotation_path)
    id_map = load_id_map(id_map_path) if id_map_path else None
    if id_map is not None:
        missing = {r.entity_name for r in afile.rows} - set(id_map)
        if missing:
            raise ValidationError(f"id map lacks entities: {sorted(missing)}")
    text, id_map = export_mot(afile, id_map)
    atomic_write_text(out_path, text)
    map_path = os.path.splitext(out_path)[0] + ".ids.json"
    save_id_map(id_map, map_path)
    click.echo(f"wrote {out_path} and {map_path}")


@main.command()
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Ground-truth MOT text.")
@click.option("--results", "results_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Tracker MOT text.")
@click.option("--alpha", type=float, default=None,
              help="IoU threshold for matching (default 0.5).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the report here instead of stdout.")
@click.option("--method-name", default="result", show_default=True,
              help="Row label for the text table.")
@click.pass_obj
@guarded
def evaluate(cfg: RunConfig, gt_path, results_path, alpha, out_path, method_name):
    """Evaluate tracker output: MOTA, IDF1, HOTA, IDs, AP/AR."""
    alpha = alpha if alpha is not None else cfg.alpha
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    gt = import_tracker_results(gt_path)
    if gt.num_frames == 0:
        raise UndefinedMetricError(f"ground truth {gt_path} contains no boxes")
    pred = import_tracker_results(results_path, num_frames=gt.num_frames)
    report = evaluate_tracks(gt, pred, alpha)
    fmt = cfg.format or "json"
    if fmt == "text":
        payload = report.text_table(method_name) + "\n"
    else:
        payload = json.dumps(report.to_dict(), indent=2) + "\n"
    if out_path:
        atomic_write_text(out_path, payload)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(payload, nl=False)


if __name__ == "__main__":
    main()
