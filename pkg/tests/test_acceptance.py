"""End-to-end acceptance criteria.

Each test prints one ``[PASS]``/``[FAIL]`` line (also collected into the
"acceptance criteria" section of the pytest summary). Criteria 3-6 and 8
share one desk-scale training run at R=32 (2000 training frames, 500
held-out frames), built once per session.
"""
import csv
import os
import re
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from handloop.autodiff import (Tensor, deserialize, load_model, max_pool2d, save_model,
                               serialize, unpool2d)
from handloop.cli import run
from handloop.eval import joint_errors_mm, mean_joint_error
from handloop.feedback import LoopConfig, run_batched_loop, update_step
from handloop.gradsuite import run_suite
from handloop.networks import (TrainingConfig, build_predictor, build_synthesizer,
                               build_updater, build_updater_training_set, synthesize,
                               train_predictor, train_synthesizer_layerwise, train_updater)
from handloop.networks.training import synth_heldout_mse
from handloop.synthdata import (dataset_bytes, dataset_from_bytes, generate_dataset,
                                perturb_pose, read_dataset, write_dataset)

RESOLUTION = 32
TRAIN_COUNT, TEST_COUNT = 2000, 500
DATA_SEED = 7
TRAINING = dict(epochs_predictor=30, epochs_synthesizer=30, epochs_updater=8,
                max_pairs_per_epoch=12000, seed=0)
BASELINE_FRAMES = 100

pytestmark = pytest.mark.acceptance


def pose_distance(a, b):
    return np.linalg.norm(a - b, axis=1)


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    train = generate_dataset(TRAIN_COUNT, RESOLUTION, seed=DATA_SEED)
    test = generate_dataset(TEST_COUNT, RESOLUTION, seed=DATA_SEED, start=TRAIN_COUNT)
    write_dataset(train, root / "train.hpds")
    write_dataset(test, root / "test.hpds")
    cfg = TrainingConfig(**TRAINING)

    predictor, _ = train_predictor(train, cfg)
    start = time.perf_counter()
    layered = train_synthesizer_layerwise(train, cfg)
    synth_minutes = (time.perf_counter() - start) / 60.0
    synthesizer = layered.model
    rng = np.random.default_rng([cfg.seed, 2])
    seeds = build_updater_training_set(train, predictor, cfg, rng)
    updater, _ = train_updater(seeds, train, synthesizer, cfg)

    models = root / "models"
    models.mkdir()
    for name, model in (("predictor", predictor), ("synthesizer", synthesizer),
                        ("updater", updater)):
        save_model(model, models / f"{name}.hpnn")
    return dict(root=root, train=train, test=test, models=models, predictor=predictor,
                synthesizer=synthesizer, updater=updater, stages=layered.stage_models,
                synth_minutes=synth_minutes)


def test_criterion_1_gradient_correctness(acceptance_report):
    start = time.perf_counter()
    results, passed = run_suite(seed=0)
    seconds = time.perf_counter() - start
    layers = max(v for k, v in results.items() if not k.endswith("_loss"))
    losses = max(v for k, v in results.items() if k.endswith("_loss"))
    ok = passed and layers < 1e-6 and losses < 1e-5 and seconds < 120
    acceptance_report(1, "gradient correctness", ok,
                      f"layers {layers:.2e} < 1e-6, losses {losses:.2e} < 1e-5, "
                      f"{len(results)} checks in {seconds:.1f} s < 120 s")
    assert ok


def test_criterion_2_structural_identities(acceptance_report):
    rng = np.random.default_rng(2)
    failures = []
    for shape, factor in (((3, 4, 5), 2), ((2, 2, 3, 3), 3), ((1, 1, 8, 8), 4)):
        x = rng.uniform(0.01, 2.0, shape)
        back, _ = max_pool2d(unpool2d(x, factor), factor)
        if not np.array_equal(back.data, x):
            failures.append(f"unpool/maxpool {shape}")
    for r in (16, 32, 64):
        out = build_predictor(r, 14)(Tensor(rng.uniform(-1, 1, (2, 1, r, r))))
        if out.shape != (2, 42):
            failures.append(f"predictor R={r} {out.shape}")
    ladder = [build_synthesizer(64, 14, stages=s).meta["resolution"] for s in range(4)]
    if ladder != [8, 16, 32, 64]:
        failures.append(f"ladder {ladder}")
    for r in (16, 32, 64):
        img = synthesize(build_synthesizer(r, 14), rng.uniform(-1, 1, 42))
        if img.shape != (r, r):
            failures.append(f"synthesizer R={r} {img.shape}")
    upd = build_updater(32, 14, seed=3)
    x = rng.uniform(-1, 1, (3, 1, 32, 32))
    if not np.array_equal(upd.path_features(Tensor(x)).data,
                          upd.path_features(Tensor(x.copy())).data):
        failures.append("updater path features")
    if upd(Tensor(x), Tensor(x[::-1].copy())).shape != (3, 42):
        failures.append("updater output length")
    ok = not failures
    acceptance_report(2, "structural identities", ok,
                      "all identities hold" if ok else "; ".join(failures))
    assert ok


def test_criterion_3_layerwise_synthesizer(desk, acceptance_report):
    test = desk["test"]
    first = synth_heldout_mse(desk["stages"][0], test)
    last = synth_heldout_mse(desk["synthesizer"], test)
    err = np.abs(synthesize(desk["synthesizer"], test.poses) - test.frames)
    median, mean = float(np.median(err)), float(err.mean())
    minutes = desk["synth_minutes"]
    ok = last < first and median < mean and minutes < 60
    acceptance_report(3, "layer-wise synthesizer", ok,
                      f"held-out MSE stage 0 {first:.4f} -> final {last:.4f}; "
                      f"|err| median {median:.4f} < mean {mean:.4f}; {minutes:.1f} min < 60")
    assert ok


def test_criterion_4_updater_contraction(desk, acceptance_report):
    test = desk["test"]
    start = perturb_pose(test.poses, 0.1, np.random.default_rng(4))
    one = update_step(desk["updater"], desk["synthesizer"], test.frames, start)
    two = update_step(desk["updater"], desk["synthesizer"], test.frames, one)
    d0 = np.median(pose_distance(start, test.poses))
    r1 = np.median(pose_distance(one, test.poses)) / d0
    r2 = np.median(pose_distance(two, test.poses)) / d0
    ok = r1 <= 0.8 and r2 <= 0.7
    acceptance_report(4, "updater contraction", ok,
                      f"median distance ratio after 1 step {r1:.3f} (<= 0.8), "
                      f"after 2 steps {r2:.3f} (<= 0.7)")
    assert ok


def test_criterion_5_end_to_end_improvement(desk, acceptance_report):
    test = desk["test"]
    loop = LoopConfig(desk["predictor"], desk["synthesizer"], desk["updater"], iterations=2)
    trace = run_batched_loop(test.frames, loop)
    before = mean_joint_error(joint_errors_mm(trace[0], test.poses, test.half_extent))
    after = mean_joint_error(joint_errors_mm(trace[-1], test.poses, test.half_extent))
    reduction = 1.0 - after / before
    ok = reduction >= 0.15
    acceptance_report(5, "end-to-end improvement", ok,
                      f"mean joint error {before:.2f} mm -> {after:.2f} mm, "
                      f"reduction {100 * reduction:.1f}% (>= 15%)")
    assert ok


def test_criterion_6_baseline_finding(desk, acceptance_report, tmp_path, capsys):
    out = tmp_path / "comparison.csv"
    code = run(["compare-baseline", "-q", "--models", str(desk["models"]),
                "--data", str(desk["root"] / "test.hpds"), "--out", str(out),
                "--set", f"resolution={RESOLUTION}", "--set", f"baseline_frames={BASELINE_FRAMES}"])
    capsys.readouterr()
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    init = np.array([float(r["init_error_mm"]) for r in rows])
    loop = np.array([float(r["loop_error_mm"]) for r in rows])
    base = np.array([float(r["baseline_error_mm"]) for r in rows])
    obj0 = np.array([float(r["objective_initial"]) for r in rows])
    obj1 = np.array([float(r["objective_final"]) for r in rows])
    monotone = all(r["objective_non_increasing"] == "1" for r in rows)
    loop_gain, base_gain = init.mean() - loop.mean(), init.mean() - base.mean()
    decoupled = int(np.sum((obj1 < obj0) & (base > init)))
    svg = tmp_path / "comparison.svg"
    emitted = svg.exists() and ET.parse(svg).getroot().tag.endswith("svg")
    ok = (code == 0 and len(rows) == BASELINE_FRAMES and base_gain < loop_gain and monotone
          and decoupled > 0 and emitted)
    acceptance_report(6, "baseline finding", ok,
                      f"improvement baseline {base_gain:.2f} mm < loop {loop_gain:.2f} mm; "
                      f"objective non-increasing on all {len(rows)} frames: {monotone}; "
                      f"objective down but pose worse on {decoupled} frames; csv+svg: {emitted}")
    assert ok


def test_criterion_7_pipeline_determinism(tmp_path, acceptance_report, capsys):
    small = ["--seed", "7", "--set", "resolution=16", "--set", "train_count=60",
             "--set", "test_count=12", "--set", "epochs_predictor=2",
             "--set", "epochs_synthesizer=2", "--set", "epochs_updater=2",
             "--set", "baseline_frames=4", "--set", "baseline_max_iterations=3"]
    roots = [tmp_path / "a", tmp_path / "b"]
    codes = [run(["pipeline", "-q", "--out", str(r)] + small) for r in roots]
    capsys.readouterr()

    def files(root):
        found = {}
        for base, _, names in os.walk(root):
            for name in names:
                path = os.path.join(base, name)
                with open(path, "rb") as fh:
                    found[os.path.relpath(path, root)] = fh.read()
        return found

    a, b = files(roots[0]), files(roots[1])
    checked = sorted(k for k in a if k.endswith((".hpnn", ".csv")))
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    kinds = {".hpnn": 0, ".csv": 0}
    for k in checked:
        kinds[os.path.splitext(k)[1]] += 1
    ok = codes == [0, 0] and same and kinds[".hpnn"] == 3 and "traces.csv" in checked
    acceptance_report(7, "determinism", ok,
                      f"{len(a)} files byte-identical across two runs: {same} "
                      f"({kinds['.hpnn']} model files, {kinds['.csv']} csv files)")
    assert ok


def test_criterion_8_serialization(desk, acceptance_report, tmp_path):
    failures = []
    frames = Tensor(desk["test"].frames[:16, None])
    for name in ("predictor", "synthesizer", "updater"):
        model = desk[name]
        blob = serialize(model)
        if serialize(deserialize(blob)) != blob:
            failures.append(f"{name} bytes")
        path = tmp_path / f"{name}.hpnn"
        save_model(model, path)
        loaded = load_model(path)
        if name == "synthesizer":
            args = (Tensor(desk["test"].poses[:16]),)
        elif name == "updater":
            args = (frames, frames)
        else:
            args = (frames,)
        if not np.array_equal(model(*args).data, loaded(*args).data):
            failures.append(f"{name} forward")
    for key in ("train", "test"):
        ds = desk[key]
        blob = dataset_bytes(ds)
        back = dataset_from_bytes(blob)
        if dataset_bytes(back) != blob or not back.equals(ds):
            failures.append(f"{key} dataset bytes")
        if not read_dataset(desk["root"] / f"{key}.hpds").equals(ds):
            failures.append(f"{key} dataset file")
    ok = not failures
    acceptance_report(8, "serialization", ok,
                      "HPNN and HPDS round-trips bit-exact, reloaded forwards identical"
                      if ok else "; ".join(failures))
    assert ok


def test_criterion_9_throughput(acceptance_report, capsys):
    code = run(["infer", "-q", "--bench", "--set", "resolution=64"])
    text = capsys.readouterr().out
    match = re.search(r"throughput ([0-9.]+) ms/frame", text)
    latency = re.search(r"latency ([0-9.]+) ms/frame", text)
    ms = float(match.group(1)) if match else float("inf")
    ok = code == 0 and ms < 10.0
    acceptance_report(9, "throughput", ok,
                      f"R=64 predictor + 2 iterations: {ms:.2f} ms/frame batched (< 10), "
                      f"{float(latency.group(1)) if latency else float('nan'):.2f} ms/frame "
                      f"one at a time")
    assert ok
