"""``homecore`` command line: one binary, JSON-first output.

Exit status: 0 success, 1 domain error, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import HomecoreError, IoError, ParseError

log = logging.getLogger("homecore")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class Reporter:
    """Writes results to stdout in the selected format."""

    def __init__(self, fmt: str, out=None):
        self.fmt = fmt
        self.out = out or sys.stdout

    def emit(self, payload, text: str | None = None, compact: bool = False) -> None:
        if self.fmt == "json":
            self.out.write(json.dumps(payload, indent=None if compact else 2) + "\n")
        else:
            self.out.write((text if text is not None else _as_text(payload)) + "\n")


def _as_text(payload) -> str:
    if isinstance(payload, dict):
        return "\n".join(f"{k}: {v if not isinstance(v, (dict, list)) else json.dumps(v)}"
                         for k, v in payload.items())
    return str(payload)


def _read_json(path, what: str = "file"):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {what} {path}: {exc.strerror or exc}", path=str(path)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                         path=str(path), line=exc.lineno, column=exc.colno) from None


def _read_bytes(path, what: str = "file") -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {what} {path}: {exc.strerror or exc}", path=str(path)) from exc


# --------------------------------------------------------------------------- map


def _load_map(path):
    from .semantic_map import load_map

    return load_map(_read_bytes(path, "map"))


def cmd_map_locate(args, rep: Reporter) -> int:
    from .semantic_map import locate_candidates

    smap = _load_map(args.map)
    candidates = locate_candidates(smap, (args.x, args.y))
    room = candidates[0] if candidates else None
    rep.emit({"point": [args.x, args.y], "room": room, "candidates": candidates},
             text=room if room is not None else "none")
    return EXIT_OK


def cmd_map_navgoal(args, rep: Reporter) -> int:
    from .semantic_map import navigation_point, selected_edge

    smap = _load_map(args.map)
    pose = navigation_point(smap, args.target, args.standoff)
    edge = selected_edge(smap, args.target, args.standoff)
    furniture = smap.furniture_named(args.target)
    rep.emit({"target": furniture.name, "room": furniture.room, "standoff": args.standoff,
              "pose": pose.to_dict(), "edge": edge.index},
             text=f"{pose.x:.6f} {pose.y:.6f} {pose.yaw:.6f}")
    return EXIT_OK


def cmd_map_rasterize(args, rep: Reporter) -> int:
    from .formats import write_pgm
    from .semantic_map import OccupancyGrid, inject_obstacles

    smap = _load_map(args.map)
    grid = inject_obstacles(smap, OccupancyGrid.covering(smap, args.resolution, args.margin))
    payload = {"origin": list(grid.origin), "resolution": grid.resolution,
               "width": grid.width, "height": grid.height, "occupied": grid.occupied_count()}
    if args.out:
        # image rows run top-down, so flip to keep +y up
        image = np.where(grid.cells[::-1], 0, 255).astype(np.uint8)
        try:
            write_pgm(args.out, image)
        except OSError as exc:
            raise IoError(f"cannot write {args.out}: {exc.strerror or exc}", path=args.out) from exc
        payload["out"] = args.out
    rep.emit(payload)
    return EXIT_OK


def cmd_map_render(args, rep: Reporter) -> int:
    from .semantic_map import assign_colors, render

    smap = _load_map(args.map)
    table = assign_colors(smap, args.seed)
    try:
        render(smap, table, args.out)
    except OSError as exc:
        raise IoError(f"cannot write {args.out}: {exc.strerror or exc}", path=args.out) from exc
    rep.emit({"out": args.out, "colors": {k: list(v) for k, v in table.items()}})
    return EXIT_OK


# --------------------------------------------------------------------------- grasp


def cmd_grasp(args, rep: Reporter) -> int:
    from .camera import CameraIntrinsics
    from .formats import depth_from_millimeters, read_pgm, write_ply
    from .grasp import deproject, estimate_grasp

    k = CameraIntrinsics.from_dict(_read_json(args.intrinsics, "intrinsics"))
    try:
        depth = depth_from_millimeters(read_pgm(args.depth))
        masks = [read_pgm(m) != 0 for m in args.mask]
    except OSError as exc:
        raise IoError(f"cannot read image: {exc.strerror or exc}", path=getattr(exc, "filename", None)) from exc
    result = estimate_grasp(depth, masks, k)
    rep.emit(result.to_dict(with_bbox=args.dump_bbox))
    if args.cloud_out or args.figure:
        cloud = deproject(depth, masks[result.object_index], k)
        if args.cloud_out:
            write_ply(args.cloud_out, cloud)
        if args.figure:
            from .plotting import plot_grasp, save_figure

            save_figure(plot_grasp(cloud, result.bbox, result.pose), args.figure)
    return EXIT_OK


# --------------------------------------------------------------------------- esn


def _esn_config(args):
    from .reservoir import EsnConfig

    data = _read_json(args.config, "config") if args.config else {}
    if not isinstance(data, dict):
        raise ParseError("ESN config must be a JSON object")
    data.setdefault("seed", args.seed)
    return EsnConfig.from_dict(data)


def cmd_esn_gen(args, rep: Reporter) -> int:
    from .reservoir import synthetic_dataset, write_dataset

    seqs = synthetic_dataset(args.count, seed=args.seed, n_frames=args.frames)
    try:
        write_dataset(args.out, seqs)
    except OSError as exc:
        raise IoError(f"cannot write {args.out}: {exc.strerror or exc}", path=args.out) from exc
    waving = sum(s.label.value == "waving" for s in seqs)
    rep.emit({"out": args.out, "count": len(seqs), "waving": waving, "not_waving": len(seqs) - waving,
              "frames": args.frames, "seed": args.seed})
    return EXIT_OK


def _dataset(path, require_labels=True):
    from .reservoir import read_dataset

    try:
        return read_dataset(path, require_labels)
    except OSError as exc:
        raise IoError(f"cannot read dataset {path}: {exc.strerror or exc}", path=str(path)) from exc


def _model(path):
    from .reservoir import load_model

    try:
        return load_model(path)
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc.strerror or exc}", path=str(path)) from exc


def cmd_esn_train(args, rep: Reporter) -> int:
    from .reservoir import evaluate, save_model, spectral_radius, train

    config = _esn_config(args)
    seqs = _dataset(args.data)
    esn = train(config, seqs)
    try:
        save_model(esn, args.model)
    except OSError as exc:
        raise IoError(f"cannot write {args.model}: {exc.strerror or exc}", path=args.model) from exc
    report = evaluate(esn, seqs)
    rep.emit({"model": args.model, "config": config.to_dict(), "sequences": len(seqs),
              "spectral_radius": spectral_radius(esn.w_res), "train_accuracy": report["accuracy"]})
    return EXIT_OK


def cmd_esn_eval(args, rep: Reporter) -> int:
    from .reservoir import evaluate

    esn = _model(args.model)
    seqs = _dataset(args.data)
    report = evaluate(esn, seqs)
    latency = report.pop("mean_latency_ms")
    scores = report.pop("scores")
    payload = dict(report)
    if args.scores:
        payload["scores"] = scores
    if args.timing:
        payload["mean_latency_ms"] = latency
    # wall-clock timing is not reproducible, so by default it goes to stderr only
    print(f"mean per-sequence inference latency: {latency:.3f} ms", file=sys.stderr)
    cm = report["confusion"]
    text = (f"accuracy: {report['accuracy']:.4f}\n"
            f"confusion (rows true, cols predicted; {', '.join(report['labels'])}):\n"
            f"  {cm[0][0]:5d} {cm[0][1]:5d}\n  {cm[1][0]:5d} {cm[1][1]:5d}\n"
            f"mean latency: {latency:.3f} ms")
    rep.emit(payload, text=text)
    if args.figure:
        from .plotting import plot_esn_evaluation, save_figure

        fig_report = dict(report, scores=scores, truth=[s.label.value for s in seqs])
        save_figure(plot_esn_evaluation(fig_report), args.figure)
    return EXIT_OK


def cmd_esn_classify(args, rep: Reporter) -> int:
    from .reservoir import classify

    esn = _model(args.model)
    rows = _dataset(args.data, require_labels=False)
    results = []
    for i, row in enumerate(rows):
        frames = row if isinstance(row, np.ndarray) else row.frames
        c = classify(esn, frames)
        results.append({"index": i, "label": c.label.value, "score": c.score})
    rep.emit({"results": results}, text="\n".join(r["label"] for r in results))
    return EXIT_OK


# --------------------------------------------------------------------------- scenegen


def cmd_scenegen(args, rep: Reporter) -> int:
    from .scenegen import SceneConfig, generate_dataset

    data = _read_json(args.config, "config") if args.config else {}
    if not isinstance(data, dict):
        raise ParseError("scene config must be a JSON object")
    data.setdefault("seed", args.seed)
    config = SceneConfig.from_dict(data)
    if args.count < 0:
        raise HomecoreError("--count must be nonnegative")
    manifest = generate_dataset(config, args.count, args.out, previews=args.previews, jobs=args.jobs)
    per_class: dict[str, int] = {}
    names = {m.class_id: m.class_name for m in config.catalog}
    total = 0
    for entry in manifest["samples"]:
        total += entry["annotations"]
    for i in range(args.count):
        for line in (Path(args.out) / "labels" / f"{i:06d}.txt").read_text().splitlines():
            cls = names.get(int(line.split()[0]), line.split()[0])
            per_class[cls] = per_class.get(cls, 0) + 1
    rep.emit({"out": args.out, "count": args.count, "annotations": total,
              "per_class": dict(sorted(per_class.items())), "human_annotation": False,
              "manifest": str(Path(args.out) / "manifest.json")})
    return EXIT_OK


# --------------------------------------------------------------------------- plan


def _backend(args):
    from .planner import LlmBackend, rule_backend

    if args.backend == "rule":
        return rule_backend
    return LlmBackend.from_env(args.endpoint, timeout=args.timeout)


def _write_transcripts(path, transcripts) -> None:
    data = transcripts[0] if len(transcripts) == 1 else transcripts
    try:
        Path(path).write_text(json.dumps(data, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}", path=str(path)) from exc


def cmd_plan(args, rep: Reporter) -> int:
    from .errors import StepLimitExceeded
    from .planner import plan_and_execute
    from .planner.world import demo_world, world_from_dict

    world = world_from_dict(_read_json(args.world, "world")) if args.world else demo_world()
    backend = _backend(args)
    if args.repl:
        commands = (line.strip() for line in sys.stdin)
        commands = (c for c in commands if c and not c.startswith("#"))
    elif args.command is not None:
        commands = iter([args.command])
    else:
        raise _Usage("plan needs --command or --repl")
    transcripts, status = [], EXIT_OK
    for command in commands:
        try:
            transcript, world = plan_and_execute(command, world, backend, step_limit=args.step_limit)
        except StepLimitExceeded as exc:
            transcripts.append(exc.context["transcript"])
            if args.transcript:
                _write_transcripts(args.transcript, transcripts)
            raise
        data = transcript.to_dict()
        transcripts.append(data)
        text = f"{transcript.status}" + (f" ({transcript.reason})" if transcript.reason else "") + \
            "".join(f"\n  {s.index + 1}. {s.call} -> {'ok' if s.outcome.ok else s.outcome.error}"
                    for s in transcript.steps)
        rep.emit(data, text=text, compact=args.repl)
        if not transcript.done:
            status = EXIT_DOMAIN
    if args.transcript and transcripts:
        _write_transcripts(args.transcript, transcripts)
    if args.figure:
        from .plotting import plot_semantic_map, save_figure
        from .semantic_map import assign_colors

        save_figure(plot_semantic_map(world.map, assign_colors(world.map, args.seed), world), args.figure)
    return status


# --------------------------------------------------------------------------- parser


class _Usage(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    # global options are accepted before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    p.add_argument("--format", choices=("json", "text"), default=argparse.SUPPRESS,
                   help="output format (default json)")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="homecore", parents=[common],
                                     description="Perception, learning and planning tools for a home robot.")
    parser.add_argument("--version", action="version", version=f"homecore {__version__}")
    sub = parser.add_subparsers(dest="command_name", metavar="COMMAND", required=True)

    # map
    p_map = sub.add_parser("map", help="semantic map queries and rendering")
    map_sub = p_map.add_subparsers(dest="map_action", metavar="ACTION", required=True)
    p = map_sub.add_parser("locate", parents=[common], help="room containing a point")
    p.add_argument("--map", required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.set_defaults(func=cmd_map_locate)
    p = map_sub.add_parser("navgoal", parents=[common], help="navigation pose for a piece of furniture")
    p.add_argument("--map", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--standoff", type=float, default=0.6)
    p.set_defaults(func=cmd_map_navgoal)
    p = map_sub.add_parser("rasterize", parents=[common], help="occupancy grid with furniture as obstacles")
    p.add_argument("--map", required=True)
    p.add_argument("--resolution", type=float, default=0.05)
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--out", help="write the grid as an 8-bit PGM (black = occupied)")
    p.set_defaults(func=cmd_map_rasterize)
    p = map_sub.add_parser("render", parents=[common], help="colored map image (.ppm, .svg, .png, .pdf)")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map_render)

    # grasp
    p = sub.add_parser("grasp", parents=[common], help="grasp pose for the nearest masked object")
    p.add_argument("--depth", required=True, help="16-bit PGM, millimeters")
    p.add_argument("--mask", required=True, nargs="+", help="8-bit PGM per object, nonzero = object")
    p.add_argument("--intrinsics", required=True, help="JSON camera intrinsics")
    p.add_argument("--dump-bbox", action="store_true", help="include the oriented box in the output")
    p.add_argument("--cloud-out", help="write the chosen object's points as ASCII PLY")
    p.add_argument("--figure", help="write a cloud/box/approach figure")
    p.set_defaults(func=cmd_grasp)

    # esn
    p_esn = sub.add_parser("esn", help="echo state network gesture classifier")
    esn_sub = p_esn.add_subparsers(dest="esn_action", metavar="ACTION", required=True)
    p = esn_sub.add_parser("gen", parents=[common], help="synthetic waving / not-waving sequences")
    p.add_argument("--config", help="accepted for symmetry; unused")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_esn_gen)
    p = esn_sub.add_parser("train", parents=[common], help="fit a readout and save the model")
    p.add_argument("--config", help="JSON ESN hyperparameters")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="output model file")
    p.set_defaults(func=cmd_esn_train)
    p = esn_sub.add_parser("eval", parents=[common], help="accuracy, confusion matrix and latency")
    p.add_argument("--config", help="accepted for symmetry; the model carries its config")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scores", action="store_true", help="include per-sequence scores")
    p.add_argument("--timing", action="store_true", help="include wall-clock latency in JSON output")
    p.add_argument("--figure", help="write a confusion-matrix / score figure")
    p.set_defaults(func=cmd_esn_eval)
    p = esn_sub.add_parser("classify", parents=[common], help="label each sequence")
    p.add_argument("--config", help="accepted for symmetry; the model carries its config")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_esn_classify)

    # scenegen
    p = sub.add_parser("scenegen", parents=[common], help="synthetic annotated detection scenes")
    p.add_argument("--config", help="JSON scene configuration")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--previews", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_scenegen)

    # plan
    p = sub.add_parser("plan", parents=[common], help="plan and simulate a spoken-style command")
    p.add_argument("--world", help="world JSON (default: bundled demo home)")
    p.add_argument("--backend", choices=("rule", "llm"), default="rule")
    p.add_argument("--command")
    p.add_argument("--repl", action="store_true", help="read commands from standard input")
    p.add_argument("--transcript", help="write the transcript JSON here")
    p.add_argument("--endpoint", help="LLM endpoint URL (else LLM_ENDPOINT)")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--step-limit", type=int, default=20)
    p.add_argument("--figure", help="write the final world state as a map figure")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed = getattr(args, "seed", 0)
    args.format = getattr(args, "format", "json")
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    rep = Reporter(args.format)
    try:
        return args.func(args, rep)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"homecore: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HomecoreError as exc:
        _report_error(args.format, exc.to_dict(), exc.exit_code)
        return exc.exit_code
    except OSError as exc:
        err = {"error": "IoError", "message": f"{exc.strerror or exc}",
               "context": {"path": exc.filename}}
        _report_error(args.format, err, EXIT_IO)
        return EXIT_IO


def _report_error(fmt: str, err: dict, code: int) -> None:
    err = dict(err, exit_code=code)
    if fmt == "json":
        print(json.dumps(err), file=sys.stderr)
    else:
        print(f"homecore: {err['error']}: {err['message']}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
