"""
Command-line front end.

    main.py [--config FILE] [-v|-q] <command> ... --output DIR

Commands: convert {coco2yolo,ply2pcd,pcd2bin,json2kitti}, split, stats,
anchors, eval, pcl {downsample,crop,voxelize}, tubes, graphs, compare.

Every command writes only under --output. Parameters come from flags,
then the config file (--config or $SURGVISION_CONFIG), then the
environment / .env, then built-in defaults.

Exit codes: 0 ok, 1 validation (including bad arguments), 2 I/O, 3 internal.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .anchors import generate_anchors
from .catalog import load_catalog
from .coco_io import read_coco_file
from .config import Config
from .dataset_ops import SplitSpec, split, stats, write_split_manifests
from .errors import EXIT_INTERNAL, EXIT_OK, EXIT_VALIDATION, StorageError, ToolkitError, ValidationError
from .evaluation import INTERP_MODES, EvalReport, compare_reports, evaluate
from .file_processor import BatchProcessor, BatchResult, frame_id_of, list_files
from .geometry import IOU_KERNELS, get_iou_kernel
from .kitti_io import format_kitti_labels, read_kitti_labels, read_supervisely_pointcloud, supervisely_frame_id
from .logger import log_error, log_info, log_success, setup_logger, verbosity_to_level
from .models import Dataset
from .pointcloud_io import detect_format, read_pointcloud, write_pointcloud
from .pointcloud_ops import RangeSpec, crop_range, voxel_downsample, voxelize
from .report_io import ConversionReport, ensure_dir, read_json_document, write_json_document, write_text
from .rotated_io import read_rotated_labels
from .tubes import (LINK_METHODS, TOPOLOGIES, WINDOW_LENGTHS, build_local_graphs, frame_timeline, graphs_to_dict,
                    link_tubes, tubes_from_dict, tubes_to_dict)
from .yolo_io import read_yolo_labels, write_yolo_labels


POINTCLOUD_EXTS = ('.ply', '.pcd', '.bin')


class ToolkitArgumentParser(argparse.ArgumentParser):
    """Argument errors become ValidationError (exit 1) instead of argparse's exit 2."""

    def error(self, message):
        """Raise instead of exiting so dispatch maps the exit code."""
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    """Parameters of one invocation after flag/config/env/default resolution."""

    command: str
    inputs: List[str]
    output: str
    catalog: str = "endoscope"
    seed: int = 0
    iou_threshold: float = 0.5
    train_ratio: float = 0.7
    ratio_threshold: float = 4.0
    n_per_level: int = 3
    levels: int = 3
    img_size: int = 640
    leaf_size: float = 0.02
    voxel_size: Tuple[float, float, float] = (0.05, 0.05, 0.05)
    point_cloud_range: Tuple[float, ...] = (-3.0, 3.0, -3.0, 3.0, 0.0, 3.0)
    max_points_per_voxel: int = 32
    tube_iou_threshold: float = 0.3
    tube_max_gap: int = 2
    workers: int = 1
    verbosity: int = 0

    @classmethod
    def from_args(cls, args: argparse.Namespace, cfg: Config) -> 'RunConfig':
        """Merge parsed flags over configuration defaults."""
        def pick(name: str, getter: Callable):
            value = getattr(args, name, None)
            return getter() if value is None else value

        voxel = getattr(args, 'voxel_size', None)
        spec = getattr(args, 'range', None)
        return cls(
            command=args.command,
            inputs=list(getattr(args, 'inputs', []) or []),
            output=args.output,
            catalog=getattr(args, 'catalog', None) or "endoscope",
            seed=pick('seed', cfg.get_seed),
            iou_threshold=pick('iou', cfg.get_iou_threshold),
            train_ratio=pick('ratio', cfg.get_train_ratio),
            ratio_threshold=pick('ratio_threshold', cfg.get_ratio_threshold),
            n_per_level=pick('n_per_level', cfg.get_n_per_level),
            levels=pick('levels', cfg.get_anchor_levels),
            img_size=pick('img_size', cfg.get_img_size),
            leaf_size=pick('leaf', cfg.get_leaf_size),
            voxel_size=_parse_voxel(voxel) if voxel else cfg.get_voxel_size(),
            point_cloud_range=RangeSpec.parse(spec).as_tuple() if spec else cfg.get_point_cloud_range(),
            max_points_per_voxel=pick('max_points', cfg.get_max_points_per_voxel),
            tube_iou_threshold=pick('tube_iou', cfg.get_tube_iou_threshold),
            tube_max_gap=pick('max_gap', cfg.get_tube_max_gap),
            workers=pick('workers', cfg.get_workers),
            verbosity=(args.verbose or 0) - (args.quiet or 0),
        )

    def validate(self) -> None:
        """Raise ValidationError for parameters outside their documented ranges."""
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValidationError(f"--iou must lie in (0, 1], got {self.iou_threshold}")
        if not 0.0 < self.train_ratio < 1.0:
            raise ValidationError(f"--ratio must lie in (0, 1), got {self.train_ratio}")
        if self.ratio_threshold <= 1.0:
            raise ValidationError(f"--ratio-threshold must be > 1, got {self.ratio_threshold}")
        if self.n_per_level < 1 or self.levels < 1 or self.img_size < 1:
            raise ValidationError("--n-per-level, --levels and --img-size must be >= 1")
        if self.leaf_size <= 0 or any(v <= 0 for v in self.voxel_size):
            raise ValidationError("--leaf and --voxel-size must be positive")
        if self.max_points_per_voxel < 1:
            raise ValidationError("--max-points must be >= 1")
        if not 0.0 < self.tube_iou_threshold <= 1.0 or self.tube_max_gap < 0:
            raise ValidationError("--tube-iou must lie in (0, 1] and --max-gap be >= 0")
        if self.workers < 1:
            raise ValidationError("--workers must be >= 1")
        for path in self.inputs:
            if not os.path.exists(path):
                raise StorageError(f"Input not found: {path}")
        RangeSpec(*self.point_cloud_range)


def _parse_voxel(text: str) -> Tuple[float, float, float]:
    try:
        values = tuple(float(v) for v in text.split(','))
    except ValueError:
        raise ValidationError(f"--voxel-size must be one or three numbers, got {text!r}")
    if len(values) == 1:
        values = values * 3
    if len(values) != 3:
        raise ValidationError(f"--voxel-size must be one or three numbers, got {text!r}")
    return values


def _parse_lengths(text: str) -> List[int]:
    try:
        lengths = [int(v) for v in text.split(',')]
    except ValueError:
        raise ValidationError(f"--lengths must be comma-separated integers, got {text!r}")
    if not lengths or any(v <= 0 for v in lengths):
        raise ValidationError("--lengths must be positive")
    return lengths


def _expand_inputs(inputs: Sequence[str], extensions: Sequence[str]) -> List[str]:
    files = []
    for path in inputs:
        files.extend(list_files(path, extensions) if os.path.isdir(path) else [path])
    return files


def load_datasets(inputs: Sequence[str]) -> Dataset:
    """Merge COCO files into one dataset; each file's stem is its frames' source tag."""
    files = _expand_inputs(inputs, ['.json'])
    if not files:
        raise ValidationError("No COCO annotation files given")
    catalog, frames = None, []
    for path in files:
        dataset, _ = read_coco_file(path)
        if catalog is None:
            catalog = dataset.catalog
        elif dataset.catalog.names != catalog.names:
            raise ValidationError(f"{path}: categories differ from {files[0]}")
        frames.extend(dataset.frames)
    return Dataset(catalog, tuple(frames))


def _finish_batch(result: BatchResult, output: str, report: Optional[ConversionReport] = None) -> int:
    if report is not None:
        report.files_written.extend(result.files_written)
        report.failed.extend(result.failed)
        report.skipped.extend(os.path.basename(p) for p in result.skipped)
        report.write(output)
    if result.failed:
        log_error(f"{len(result.failed)} file(s) failed: {', '.join(result.failed)}")
        return EXIT_VALIDATION
    log_success(f"Wrote {len(result.files_written)} file(s) to {output}")
    return EXIT_OK


def _batch(run: RunConfig, args, extensions: Sequence[str], convert) -> BatchResult:
    if len(run.inputs) != 1:
        raise ValidationError("Batch commands take one input file or directory")
    processor = BatchProcessor(run.inputs[0], run.output, extensions, convert,
                               workers=run.workers, resume=args.resume)
    return processor.process_new_files()


def cmd_convert(run: RunConfig, args) -> int:
    """Run one format conversion over a file or directory."""
    kind = args.kind
    if kind == 'coco2yolo':
        parts: Dict[str, Tuple[Dataset, Dict[int, int]]] = {}

        def convert(path: str, output_dir: str) -> List[str]:
            dataset, mapping = read_coco_file(path)
            parts[os.path.basename(path)] = (dataset, mapping)
            return write_yolo_labels(dataset, os.path.join(output_dir, "labels"))

        result = _batch(run, args, ['.json'], convert)
        for path in result.skipped:
            # labels were written by an earlier run; only the counts are needed
            parts[os.path.basename(path)] = read_coco_file(path)
        report = ConversionReport()
        names: Optional[List[str]] = None
        for name in sorted(parts):
            dataset, mapping = parts[name]
            names = names or dataset.catalog.names
            for frame in dataset.frames:
                for ann in frame.annotations:
                    label = dataset.catalog.name_of(ann.class_id)
                    report.class_counts[label] = report.class_counts.get(label, 0) + 1
            for original, contiguous in mapping.items():
                report.id_mapping.setdefault(str(original), contiguous)
        if names:
            report.files_written.append(write_text(os.path.join(run.output, "classes.txt"),
                                                   "".join(n + "\n" for n in names)))
        return _finish_batch(result, run.output, report)

    if kind in ('ply2pcd', 'pcd2bin'):
        source, target = ('ply', 'pcd') if kind == 'ply2pcd' else ('pcd', 'bin')

        def convert(path: str, output_dir: str) -> List[str]:
            cloud = read_pointcloud(path, source)
            out = os.path.join(output_dir, frame_id_of(path) + "." + target)
            return [write_pointcloud(cloud, out, target, args.encoding)]

        return _finish_batch(_batch(run, args, ['.' + source], convert), run.output, ConversionReport())

    catalog = load_catalog(args.catalog or "maestro")

    def convert(path: str, output_dir: str) -> List[str]:
        annotations = read_supervisely_pointcloud(path, catalog)
        frame_id = supervisely_frame_id(path)
        text = format_kitti_labels(annotations, catalog, frame_id)
        return [write_text(os.path.join(output_dir, frame_id + ".txt"), text)]

    return _finish_batch(_batch(run, args, ['.json'], convert), run.output, ConversionReport())


def cmd_split(run: RunConfig, args) -> int:
    """Split COCO frames into train and test manifests."""
    dataset = load_datasets(run.inputs)
    spec = SplitSpec(run.train_ratio, run.seed, args.stratify)
    train, test = split(dataset, spec)
    write_split_manifests(train, test, spec, run.output)
    print(f"train {len(train)}\ntest {len(test)}")
    return EXIT_OK


def cmd_stats(run: RunConfig, args) -> int:
    """Write per-source frame and instance counts."""
    result = stats(load_datasets(run.inputs))
    table = result.to_table()
    write_text(os.path.join(run.output, "stats.txt"), table)
    write_json_document(os.path.join(run.output, "stats.json"), "stats", result.to_dict())
    print(table, end="")
    return EXIT_OK


def cmd_anchors(run: RunConfig, args) -> int:
    """Fit anchors and write the config block and summary."""
    anchors = generate_anchors(load_datasets(run.inputs), run.n_per_level, run.levels, run.img_size,
                               run.seed, run.ratio_threshold, args.n_init)
    block = anchors.to_config_block()
    write_text(os.path.join(run.output, "anchors.yaml"), block)
    write_json_document(os.path.join(run.output, "anchors.json"), "anchors",
                        {**anchors.to_dict(), "seed": run.seed, "ratio_threshold": run.ratio_threshold})
    print(block + f"bpr: {anchors.bpr:.4f}")
    return EXIT_OK


def _read_labels(geometry: str, directory: str, catalog, allow_missing: bool = False) -> Dataset:
    if geometry == 'aa':
        return read_yolo_labels(directory, catalog, allow_missing=allow_missing)
    if geometry == 'rot':
        return read_rotated_labels(directory, catalog, allow_missing=allow_missing)
    return read_kitti_labels(directory, catalog, allow_missing=allow_missing)


def cmd_eval(run: RunConfig, args) -> int:
    """Score a detection directory against a ground-truth directory."""
    if len(run.inputs) != 2:
        raise ValidationError("eval takes a ground-truth directory and a detection directory")
    catalog = load_catalog(run.catalog)
    gt = _read_labels(args.geometry, run.inputs[0], catalog)
    dets = _read_labels(args.geometry, run.inputs[1], catalog)
    report = evaluate(gt, dets, get_iou_kernel(args.geometry), iou_threshold=run.iou_threshold,
                      interp=args.interp, strict=args.strict)
    table = report.to_table(per_class=args.per_class)
    write_text(os.path.join(run.output, "eval_report.txt"), table)
    write_json_document(os.path.join(run.output, "eval_report.json"), "eval-report",
                        {**report.to_dict(), "geometry": args.geometry})
    print(table, end="")
    return EXIT_OK


def cmd_pcl(run: RunConfig, args) -> int:
    """Downsample, crop or voxelize point clouds."""
    spec = RangeSpec(*run.point_cloud_range)

    def convert(path: str, output_dir: str) -> List[str]:
        cloud = read_pointcloud(path)
        fmt = detect_format(path)
        name = os.path.basename(path)
        if args.op == 'downsample':
            return [write_pointcloud(voxel_downsample(cloud, run.leaf_size), os.path.join(output_dir, name), fmt)]
        if args.op == 'crop':
            return [write_pointcloud(crop_range(cloud, spec), os.path.join(output_dir, name), fmt)]
        grid = voxelize(cloud, run.voxel_size, spec, run.max_points_per_voxel)
        out = os.path.join(output_dir, frame_id_of(path) + ".voxels.json")
        return [write_json_document(out, "voxel-grid", {"source": name, **grid.summary()})]

    return _finish_batch(_batch(run, args, POINTCLOUD_EXTS, convert), run.output)


def cmd_tubes(run: RunConfig, args) -> int:
    """Link one video's per-frame detections into tubes."""
    if len(run.inputs) != 1:
        raise ValidationError("tubes takes one detection directory")
    catalog = load_catalog(run.catalog)
    frames = frame_timeline(read_yolo_labels(run.inputs[0], catalog).frames)
    tubes = link_tubes(frames, run.tube_iou_threshold, run.tube_max_gap, args.method)
    video_id = args.video_id or os.path.basename(os.path.normpath(run.inputs[0]))
    write_json_document(os.path.join(run.output, "tubes.json"), "tubes",
                        {**tubes_to_dict(tubes, video_id), "n_frames": len(frames)})
    print(f"{len(tubes)} tubes over {len(frames)} frames")
    return EXIT_OK


def cmd_graphs(run: RunConfig, args) -> int:
    """Build local graphs over a tubes document."""
    if len(run.inputs) != 1:
        raise ValidationError("graphs takes one tubes.json document")
    document = read_json_document(run.inputs[0], "tubes")
    tubes = tubes_from_dict(document)
    n_frames = document.get("n_frames")
    by_length = {length: build_local_graphs(tubes, length, args.topology, args.stride, n_frames)
                 for length in _parse_lengths(args.lengths)}
    write_json_document(os.path.join(run.output, "graphs.json"), "graphs",
                        graphs_to_dict(by_length, document.get("video_id", ""), args.topology, args.stride))
    print(f"{sum(len(g) for g in by_length.values())} graphs for {len(tubes)} tubes")
    return EXIT_OK


def cmd_compare(run: RunConfig, args) -> int:
    """Line several evaluation reports up by class."""
    reports: Dict[str, EvalReport] = {}
    for path in run.inputs:
        name = frame_id_of(path) if os.path.basename(path) != "eval_report.json" \
            else os.path.basename(os.path.dirname(os.path.abspath(path)))
        if name in reports:
            raise ValidationError(f"Two reports share the model name {name!r}")
        reports[name] = EvalReport.from_dict(read_json_document(path, "eval-report"))
    table = compare_reports(reports)
    write_text(os.path.join(run.output, "comparison.txt"), table.to_table())
    write_json_document(os.path.join(run.output, "comparison.json"), "comparison", table.to_dict())
    print(table.to_table(), end="")
    return EXIT_OK


COMMANDS = {
    'convert': cmd_convert,
    'split': cmd_split,
    'stats': cmd_stats,
    'anchors': cmd_anchors,
    'eval': cmd_eval,
    'pcl': cmd_pcl,
    'tubes': cmd_tubes,
    'graphs': cmd_graphs,
    'compare': cmd_compare,
}


def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('-o', '--output', required=True, help="Directory receiving every output file")


def _add_batch(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--workers', type=int, help="Threads for per-file work (config WORKERS)")
    parser.add_argument('--resume', action='store_true', help="Skip inputs the output ledger marks as done")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    parser = ToolkitArgumentParser(prog='surgvision', description="Operating-room perception data toolkit")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--config', help="KEY=VALUE config file (default $SURGVISION_CONFIG)")
    parser.add_argument('-v', '--verbose', action='count', default=0, help="More log output (repeatable)")
    parser.add_argument('-q', '--quiet', action='count', default=0, help="Less log output")
    sub = parser.add_subparsers(dest='command', metavar='command', required=True)

    p = sub.add_parser('convert', help="Convert annotation or point-cloud files")
    p.add_argument('kind', choices=['coco2yolo', 'ply2pcd', 'pcd2bin', 'json2kitti'])
    p.add_argument('inputs', nargs=1, metavar='input', help="Input file or directory")
    p.add_argument('--catalog', help="Catalog for json2kitti: built-in name or class-list file")
    p.add_argument('--encoding', choices=['binary', 'ascii'], default='binary', help="PCD body encoding")
    _add_batch(p)
    _add_output(p)

    p = sub.add_parser('split', help="Random train/test split of COCO datasets")
    p.add_argument('inputs', nargs='+', metavar='coco_json')
    p.add_argument('--ratio', type=float, help="Training fraction (config TRAIN_RATIO)")
    p.add_argument('--seed', type=int, help="Generator seed (config SEED)")
    p.add_argument('--stratify', action='store_true', help="Split each source separately")
    _add_output(p)

    p = sub.add_parser('stats', help="Frame and instance counts per source")
    p.add_argument('inputs', nargs='+', metavar='coco_json')
    _add_output(p)

    p = sub.add_parser('anchors', help="Fit anchor boxes with k-means")
    p.add_argument('inputs', nargs='+', metavar='coco_json')
    p.add_argument('--n-per-level', type=int, help="Anchors per level (config N_PER_LEVEL)")
    p.add_argument('--levels', type=int, help="Detection levels (config ANCHOR_LEVELS)")
    p.add_argument('--img-size', type=int, help="Training resolution (config IMG_SIZE)")
    p.add_argument('--ratio-threshold', type=float, help="BPR ratio threshold (config RATIO_THRESHOLD)")
    p.add_argument('--n-init', type=int, default=3, help="k-means++ restarts")
    p.add_argument('--seed', type=int, help="Generator seed (config SEED)")
    _add_output(p)

    p = sub.add_parser('eval', help="Score detections against ground truth")
    p.add_argument('inputs', nargs=2, metavar='dir', help="Ground-truth and detection label directories")
    p.add_argument('--geometry', choices=list(IOU_KERNELS), default='aa',
                   help="aa: YOLO labels, rot: rotated labels, 3d: KITTI labels")
    p.add_argument('--iou', type=float, help="Primary IoU threshold (config IOU_THRESHOLD)")
    p.add_argument('--interp', choices=list(INTERP_MODES), default='coco101')
    p.add_argument('--per-class', action='store_true', help="Print per-class rows")
    p.add_argument('--strict', action='store_true', help="Count classes without ground truth as AP 0")
    p.add_argument('--catalog', help="Built-in catalog name or class-list file (default endoscope)")
    _add_output(p)

    p = sub.add_parser('pcl', help="Point-cloud preprocessing")
    p.add_argument('op', choices=['downsample', 'crop', 'voxelize'])
    p.add_argument('inputs', nargs=1, metavar='input', help="Point-cloud file or directory")
    p.add_argument('--leaf', type=float, help="Downsampling leaf size in meters (config LEAF_SIZE)")
    p.add_argument('--range', help="x0,x1,y0,y1,z0,z1 in meters (config POINT_CLOUD_RANGE)")
    p.add_argument('--voxel-size', help="One or three sizes in meters (config VOXEL_SIZE)")
    p.add_argument('--max-points', type=int, help="Points stored per voxel (config MAX_POINTS_PER_VOXEL)")
    _add_batch(p)
    _add_output(p)

    p = sub.add_parser('tubes', help="Link per-frame detections into tubes")
    p.add_argument('inputs', nargs=1, metavar='dir', help="YOLO detection directory, one file per frame")
    p.add_argument('--tube-iou', type=float, help="Linking IoU threshold (config TUBE_IOU_THRESHOLD)")
    p.add_argument('--max-gap', type=int, help="Frames a tube may miss (config TUBE_MAX_GAP)")
    p.add_argument('--method', choices=list(LINK_METHODS), default='greedy')
    p.add_argument('--video-id', help="Video id stored in the document (default: directory name)")
    p.add_argument('--catalog', help="Built-in catalog name or class-list file (default endoscope)")
    _add_output(p)

    p = sub.add_parser('graphs', help="Local graphs over tube windows")
    p.add_argument('inputs', nargs=1, metavar='tubes_json')
    p.add_argument('--topology', choices=list(TOPOLOGIES), default='fully_connected')
    p.add_argument('--lengths', default=",".join(str(n) for n in WINDOW_LENGTHS), help="Window lengths")
    p.add_argument('--stride', type=int, help="Window step (default: window length)")
    _add_output(p)

    p = sub.add_parser('compare', help="Per-model AP matrix from several eval reports")
    p.add_argument('inputs', nargs='+', metavar='report_json')
    _add_output(p)
    return parser


def _console_level(run: RunConfig, args, cfg: Config) -> int:
    if args.verbose or args.quiet:
        return verbosity_to_level(run.verbosity)
    level = logging.getLevelName(cfg.get_log_level())
    if not isinstance(level, int):
        raise ValidationError(f"Unknown LOG_LEVEL {cfg.get_log_level()!r}")
    return level


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run the command and map failures to exit codes.

    Returns:
        int: Exit status
    """
    try:
        args = build_parser().parse_args(argv)
        cfg = Config(args.config)
        if not cfg.validate():
            return EXIT_VALIDATION
        run = RunConfig.from_args(args, cfg)
        setup_logger(cfg.get_log_file_path(), console_level=_console_level(run, args, cfg))
        run.validate()
        ensure_dir(run.output)
        log_info(f"Running {run.command} with inputs {', '.join(run.inputs)}")
        return COMMANDS[run.command](run, args)
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else EXIT_OK
    except ToolkitError as e:
        log_error("Command failed", e)
        return e.exit_code
    except Exception as e:
        log_error("Internal error", e)
        return EXIT_INTERNAL


def main() -> None:
    """Console entry point."""
    sys.exit(dispatch())
