"""Command-line entry point: ``handloop <command> [options]``.

Exit status: 0 success, 2 malformed configuration, 3 missing or unreadable
input, 4 internal invariant breach. Failures print one line
``error: <category>: <message>`` on stderr.
"""
import argparse
import csv
import io
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .autodiff import load_model, save_model
from .config import RunConfig
from .errors import ConfigError, FormatError

log = logging.getLogger("handloop")

EXIT_CONFIG, EXIT_INPUT, EXIT_INVARIANT = 2, 3, 4
MODEL_FILES = {"predictor": "predictor.hpnn", "synthesizer": "synthesizer.hpnn",
               "updater": "updater.hpnn"}


class InputError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _require(path):
    if not path or not os.path.isfile(path):
        raise InputError(f"input file not found: {path}")
    return path


def _read_data(path):
    from .synthdata import read_dataset
    return read_dataset(_require(path))


def _load(models_dir, kind):
    return load_model(_require(os.path.join(models_dir, MODEL_FILES[kind])))


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_config(cfg, path):
    _write(path, cfg.dump())


def _loss_csv(losses):
    lines = ["epoch,loss"]
    lines += [f"{k},{_num(v)}" for k, v in enumerate(losses, start=1)]
    return "\n".join(lines) + "\n"


def _mean_mm(poses, truth, half_extent):
    from .eval import joint_errors_mm, mean_joint_error
    return mean_joint_error(joint_errors_mm(poses, truth, half_extent))


# ----------------------------------------------------------------- commands

def cmd_gen_data(args, cfg):
    from .synthdata import generate_dataset, write_dataset
    out = args.out or "data.hpds"
    ds = generate_dataset(cfg["train_count"], cfg["resolution"], cfg["seed"],
                          noise=cfg["noise"] == "on", start=args.start,
                          half_extent=cfg["half_extent"])
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_dataset(ds, out)
    _write_config(cfg, out + ".config")
    print(f"wrote {len(ds)} frames at {ds.resolution}x{ds.resolution} to {out}")


def cmd_train_predictor(args, cfg):
    from .networks import train_predictor
    ds = _read_data(args.data)
    out = _out_dir(args.out or "models")
    model, losses = train_predictor(ds, cfg.training())
    save_model(model, os.path.join(out, MODEL_FILES["predictor"]))
    _write(os.path.join(out, "predictor_loss.csv"), _loss_csv(losses))
    _write_config(cfg, os.path.join(out, "predictor.config"))
    print(f"predictor: final loss {losses[-1]:.6g}" if losses else "predictor: no epochs")


def cmd_train_synthesizer(args, cfg):
    from .networks import train_synthesizer_layerwise
    ds = _read_data(args.data)
    out = _out_dir(args.out or "models")
    result = train_synthesizer_layerwise(ds, cfg.training(), keep_stages=False)
    save_model(result.model, os.path.join(out, MODEL_FILES["synthesizer"]))
    # epochs are numbered across stages in training order
    losses = [v for stage in result.history for v in stage]
    _write(os.path.join(out, "synthesizer_loss.csv"), _loss_csv(losses))
    _write_config(cfg, os.path.join(out, "synthesizer.config"))
    print(f"synthesizer: {len(result.history)} stages, final loss "
          f"{losses[-1]:.6g}" if losses else "synthesizer: no epochs")


def cmd_train_updater(args, cfg):
    from .networks import build_updater_training_set, train_updater
    ds = _read_data(args.data)
    models = args.models or args.out or "models"
    predictor, synthesizer = _load(models, "predictor"), _load(models, "synthesizer")
    out = _out_dir(args.out or models)
    tcfg = cfg.training()
    ts = build_updater_training_set(ds, predictor, tcfg, np.random.default_rng([tcfg.seed, 2]))
    updater, history = train_updater(ts, ds, synthesizer, tcfg)
    save_model(updater, os.path.join(out, MODEL_FILES["updater"]))
    _write(os.path.join(out, "updater_loss.csv"), _loss_csv(history["loss"]))
    _write_config(cfg, os.path.join(out, "updater.config"))
    print(f"updater: final loss {history['loss'][-1]:.6g}, {ts.per_image} seed poses per image"
          if history["loss"] else "updater: no epochs")


def _num(v):
    """Shortest round-tripping text for a float."""
    return repr(float(v))


def trace_csv(trace):
    """``(iterations+1, N, 3J)`` trace as ``frame_index,iteration,joint_index,x,y,z`` rows."""
    buf = io.StringIO()
    buf.write("frame_index,iteration,joint_index,x,y,z\n")
    iters, n, d = trace.shape
    joints = trace.reshape(iters, n, d // 3, 3)
    for f in range(n):
        for it in range(iters):
            for j in range(d // 3):
                x, y, z = (_num(v) for v in joints[it, f, j])
                buf.write(f"{f},{it},{j},{x},{y},{z}\n")
    return buf.getvalue()


def read_trace_csv(path):
    """Inverse of ``trace_csv``; returns an ``(iterations+1, N, 3J)`` array."""
    with open(_require(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["frame_index", "iteration", "joint_index", "x", "y", "z"]:
            raise FormatError(f"{path}: not a trace CSV (header {header})")
        rows = [(int(f), int(i), int(j), float(x), float(y), float(z))
                for f, i, j, x, y, z in reader]
    if not rows:
        raise FormatError(f"{path}: trace CSV has no rows")
    n = max(r[0] for r in rows) + 1
    iters = max(r[1] for r in rows) + 1
    joints = max(r[2] for r in rows) + 1
    if len(rows) != n * iters * joints:
        raise FormatError(f"{path}: expected {n * iters * joints} rows, got {len(rows)}")
    trace = np.empty((iters, n, joints, 3))
    for f, i, j, x, y, z in rows:
        trace[i, f, j] = (x, y, z)
    return trace.reshape(iters, n, 3 * joints)


def _loop_config(models, iterations):
    from .feedback import LoopConfig
    return LoopConfig(_load(models, "predictor"), _load(models, "synthesizer"),
                      _load(models, "updater"), iterations)


def bench_loop(config, resolution, frames=200, repeats=3, seed=0, batch=1):
    """Milliseconds per frame for the predictor plus ``config.iterations`` updates.

    Frames go through the loop ``batch`` at a time (``batch=1`` is per-frame
    latency, larger batches measure throughput); the best of ``repeats``
    passes is kept.
    """
    from .feedback import run_feedback_loop
    x = np.random.default_rng(seed).uniform(-1, 1, (frames, resolution, resolution))
    groups = [x[s:s + batch] for s in range(0, frames, batch)]
    if batch == 1:
        groups = [g[0] for g in groups]
    run_feedback_loop(groups[0], config)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for group in groups:
            run_feedback_loop(group, config)
        best = min(best, time.perf_counter() - start)
    return 1000.0 * best / frames


BENCH_BATCH = 32


def cmd_infer(args, cfg):
    from .feedback import LoopConfig, run_batched_loop
    from .networks import build_predictor, build_synthesizer, build_updater
    iterations = cfg["iterations"] if args.iters is None else args.iters
    if args.bench:
        if args.models:
            loop = _loop_config(args.models, iterations)
        else:
            # timing does not depend on the weights
            r, j, s = cfg["resolution"], cfg["joints"], cfg["seed"]
            loop = LoopConfig(build_predictor(r, j, s), build_synthesizer(r, j, s),
                              build_updater(r, j, s), iterations)
        r = loop.resolution
        from . import kernels
        latency = bench_loop(loop, r, frames=64, batch=1)
        throughput = bench_loop(loop, r, frames=4 * BENCH_BATCH, batch=BENCH_BATCH)
        print(f"bench: throughput {throughput:.3f} ms/frame (batches of {BENCH_BATCH}), "
              f"latency {latency:.3f} ms/frame (one at a time), R={r}, "
              f"{iterations} iterations, backend {kernels.BACKEND}")
        if not args.data:
            return
    loop = _loop_config(args.models or "models", iterations)
    ds = _read_data(args.data)
    trace = run_batched_loop(ds.frames, loop)
    out = args.out or "traces.csv"
    _write(out, trace_csv(trace))
    _write_config(cfg, out + ".config")
    errors = [_mean_mm(t, ds.poses, ds.half_extent) for t in trace]
    print("mean joint error per iteration (mm): " + " ".join(f"{e:.3f}" for e in errors))


def cmd_eval(args, cfg):
    from .eval import MetricReport, write_report
    ds = _read_data(args.data)
    trace = read_trace_csv(args.pred)
    if trace.shape[1:] != ds.poses.shape:
        raise FormatError(f"trace covers {trace.shape[1]} frames x {trace.shape[2]} values, "
                          f"dataset has {ds.poses.shape[0]} x {ds.poses.shape[1]}")
    reports = {"init": MetricReport.from_poses(trace[0], ds.poses, ds.half_extent)}
    if len(trace) > 1:
        reports["loop"] = MetricReport.from_poses(trace[-1], ds.poses, ds.half_extent)
    out = _out_dir(args.out or "report")
    write_report(reports, out)
    _write_config(cfg, os.path.join(out, "config.txt"))
    print(" ".join(f"{k}={r.mean_error:.3f}mm" for k, r in reports.items()))


def compare_baseline(loop, dataset, baseline_cfg, frames=0):
    """Loop and baseline from identical predictor initialisations.

    Returns a dict of per-frame arrays: ``init``, ``loop`` and ``baseline``
    joint errors (mm, ``(N, J)``) and the baseline objective trace ``(T, N)``.
    """
    from .eval import joint_errors_mm
    from .feedback import baseline_optimize, run_batched_loop
    n = len(dataset) if frames <= 0 else min(frames, len(dataset))
    x, truth = dataset.frames[:n], dataset.poses[:n]
    trace = run_batched_loop(x, loop)
    init = trace[0]
    base, objective = baseline_optimize(loop.synthesizer, x, init, baseline_cfg)
    h = dataset.half_extent
    return {"init": joint_errors_mm(init, truth, h), "loop": joint_errors_mm(trace[-1], truth, h),
            "baseline": joint_errors_mm(base, truth, h), "objective": objective}


def comparison_csv(result):
    init, loop, base, obj = (result["init"], result["loop"], result["baseline"],
                             result["objective"])
    monotone = np.all(np.diff(obj, axis=0) <= 0, axis=0)
    lines = ["frame_index,init_error_mm,loop_error_mm,baseline_error_mm,"
             "objective_initial,objective_final,objective_non_increasing"]
    for f in range(len(init)):
        lines.append(f"{f},{_num(init[f].mean())},{_num(loop[f].mean())},{_num(base[f].mean())},"
                     f"{_num(obj[0, f])},{_num(obj[-1, f])},{int(monotone[f])}")
    return "\n".join(lines) + "\n"


def cmd_compare_baseline(args, cfg):
    from .eval import MetricReport, curve_csv, emit_svg
    loop = _loop_config(args.models or "models", cfg["iterations"])
    ds = _read_data(args.data)
    result = compare_baseline(loop, ds, cfg.baseline(), cfg["baseline_frames"])
    out = args.out or "comparison.csv"
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    stem = os.path.splitext(out)[0]
    _write(out, comparison_csv(result))
    reports = {k: MetricReport(result[k]) for k in ("init", "loop", "baseline")}
    emit_svg({k: r.curve for k, r in reports.items()}, stem + ".svg")
    _write(stem + "_curves.csv", "".join(
        f"# {k}\n" + curve_csv(r.curve) for k, r in reports.items()))
    _write_config(cfg, out + ".config")
    init = reports["init"].mean_error
    print(f"mean joint error (mm): init {init:.3f} loop {reports['loop'].mean_error:.3f} "
          f"baseline {reports['baseline'].mean_error:.3f}")
    worse = int(np.sum(result["baseline"].mean(axis=1) > result["init"].mean(axis=1)))
    print(f"baseline worsened {worse} of {len(result['init'])} frames")


def cmd_grad_check(args, cfg):
    from .gradsuite import LAYER_TOLERANCE, LOSS_TOLERANCE, run_suite
    results, passed = run_suite(seed=cfg["seed"])
    for name, err in results.items():
        print(f"{name}: {err:.3e}")
    print(f"max relative error: {max(results.values()):.3e} "
          f"(layers < {LAYER_TOLERANCE:g}, losses < {LOSS_TOLERANCE:g})")
    if not passed:
        raise AssertionError("gradient check exceeded tolerance")


def cmd_pipeline(args, cfg):
    """gen-data (train and test) -> train x3 -> infer -> eval -> compare-baseline."""
    from .synthdata import generate_dataset, write_dataset
    out = _out_dir(args.out or "pipeline")
    data = _out_dir(os.path.join(out, "data"))
    models = _out_dir(os.path.join(out, "models"))
    _write_config(cfg, os.path.join(out, "config.txt"))
    train_path, test_path = os.path.join(data, "train.hpds"), os.path.join(data, "test.hpds")
    common = dict(resolution=cfg["resolution"], seed=cfg["seed"], noise=cfg["noise"] == "on",
                  half_extent=cfg["half_extent"])
    write_dataset(generate_dataset(cfg["train_count"], start=0, **common), train_path)
    write_dataset(generate_dataset(cfg["test_count"], start=cfg["train_count"], **common),
                  test_path)
    sub = argparse.Namespace(data=train_path, out=models, models=models)
    cmd_train_predictor(sub, cfg)
    cmd_train_synthesizer(sub, cfg)
    cmd_train_updater(sub, cfg)
    traces = os.path.join(out, "traces.csv")
    cmd_infer(argparse.Namespace(models=models, data=test_path, iters=None, bench=False,
                                 out=traces), cfg)
    cmd_eval(argparse.Namespace(pred=traces, data=test_path, out=os.path.join(out, "report")),
             cfg)
    cmd_compare_baseline(argparse.Namespace(models=models, data=test_path,
                                            out=os.path.join(out, "comparison.csv")), cfg)


COMMANDS = {
    "gen-data": cmd_gen_data, "train-predictor": cmd_train_predictor,
    "train-synthesizer": cmd_train_synthesizer, "train-updater": cmd_train_updater,
    "infer": cmd_infer, "eval": cmd_eval, "compare-baseline": cmd_compare_baseline,
    "grad-check": cmd_grad_check, "pipeline": cmd_pipeline,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="root seed (overrides the config file)")
    common.add_argument("--config", help="key=value run configuration file")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")

    parser = argparse.ArgumentParser(prog="handloop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--count", type=int)
    p.add_argument("--res", type=int)
    p.add_argument("--noise", choices=("on", "off"))
    p.add_argument("--start", type=int, default=0, help="index of the first record")

    for name in ("train-predictor", "train-synthesizer"):
        p = sub.add_parser(name, parents=[common], help=f"{name.split('-')[1]} training")
        p.add_argument("--data", required=True)
    p = sub.add_parser("train-updater", parents=[common], help="updater training")
    p.add_argument("--data", required=True)
    p.add_argument("--models", help="directory holding predictor and synthesizer")

    p = sub.add_parser("infer", parents=[common], help="run the feedback loop")
    p.add_argument("--models")
    p.add_argument("--data")
    p.add_argument("--iters", type=int)
    p.add_argument("--bench", action="store_true", help="report ms/frame")

    p = sub.add_parser("eval", parents=[common], help="metrics from a trace CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("compare-baseline", parents=[common], help="loop vs image optimisation")
    p.add_argument("--models")
    p.add_argument("--data", required=True)

    sub.add_parser("grad-check", parents=[common], help="finite-difference gradient suite")
    sub.add_parser("pipeline", parents=[common], help="all stages end to end")
    return parser


def resolve_config(args):
    cfg = RunConfig.load(_require(args.config)) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    flag_keys = {"seed": "seed", "count": "train_count", "res": "resolution", "noise": "noise"}
    for flag, key in flag_keys.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg.set(key, str(value))
    return cfg


def run(argv=None):
    """Parse ``argv`` and execute one command; returns the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, FileNotFoundError, FormatError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AssertionError, ArithmeticError, ValueError) as exc:
        print(f"error: invariant: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
