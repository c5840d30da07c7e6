"""Tests of experiment orchestration and persisted artifacts."""

import json

import numpy as np
import pytest
from dataclasses import replace

import rotta.experiment as experiment
from rotta.dataset import InvariantViolation, generate_synthetic, save_dataset
from rotta.experiment import (
    ConfigError,
    ExperimentConfig,
    run_audit,
    run_experiment,
    run_repeats,
    run_sphere_map,
    run_sweep,
    sha256_file,
)
from rotta.rotations import RotationStream

RUN_FILES = (
    "metrics.json",
    "metrics.txt",
    "aggregated.ndjson",
    "sd_curve.csv",
    "e_abs_curve.csv",
    "e_rel_curve.csv",
    "sd_rel_curve.csv",
    "mere_histogram.csv",
    "manifest.json",
)


@pytest.fixture(scope="module")
def dataset_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.ndjson"
    save_dataset(generate_synthetic(4, 12, stream=RotationStream(31)), path)
    return str(path)


def _cfg(dataset_path, out_dir, **overrides):
    base = dict(
        dataset=dataset_path,
        out_dir=str(out_dir),
        model="noisy",
        n_rotations=8,
        seed=5,
        noise_amp=2.0,
        noise_seed=3,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------- run


def test_run_experiment_writes_expected_files(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out")
    report, manifest_path = run_experiment(cfg)
    out = tmp_path / "out"
    for name in RUN_FILES:
        assert (out / name).is_file(), name
    assert sorted(p.name for p in out.iterdir()) == sorted(RUN_FILES)

    manifest = json.loads(manifest_path.read_text())
    assert "out_dir" not in manifest["config"]
    assert manifest["config"]["model"] == "noisy"
    assert manifest["seed"] == 5
    assert manifest["dataset_sha256"] == sha256_file(dataset_path)
    # every artifact hash in the manifest matches the file on disk
    assert sorted(manifest["outputs"]) == sorted(n for n in RUN_FILES if n != "manifest.json")
    for name, digest in manifest["outputs"].items():
        assert digest == sha256_file(out / name)

    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["mere_tta"] == pytest.approx(report.mere_tta)
    assert (out / "sd_curve.csv").read_text().startswith("t,value\n")
    hist_header = (out / "mere_histogram.csv").read_text().splitlines()[0]
    assert hist_header == "bin_left,bin_right,density,normal_fit"


def test_rerun_is_byte_identical_across_directories(dataset_path, tmp_path):
    cfg1 = _cfg(dataset_path, tmp_path / "one", sphere_map=True, grid=(120, 60))
    cfg2 = replace(cfg1, out_dir=str(tmp_path / "two"))
    run_experiment(cfg1)
    run_experiment(cfg2)
    names1 = sorted(p.name for p in (tmp_path / "one").iterdir())
    names2 = sorted(p.name for p in (tmp_path / "two").iterdir())
    assert names1 == names2
    for name in names1:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes(), name


def test_zero_rotations_degenerates_to_identity(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out", n_rotations=0)
    report, _ = run_experiment(cfg)
    assert report.mere_tta == report.mere_i0
    assert report.mare_tta == report.mare_i0
    assert report.histogram is None
    assert not (tmp_path / "out" / "mere_histogram.csv").exists()


def test_augmentation_beats_average_rotation(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out", n_rotations=32)
    report, _ = run_experiment(cfg)
    assert report.mere_tta < report.mere_av


def test_sphere_map_artifacts(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out", n_rotations=6, sphere_map=True,
               grid=(80, 40))
    run_experiment(cfg)
    svg = (tmp_path / "out" / "map.svg").read_text()
    assert svg.endswith("</svg>\n")
    seeds = (tmp_path / "out" / "map_seeds.csv").read_text().splitlines()
    assert seeds[0] == "x,y,mere"
    assert len(seeds) == 1 + 7  # identity + six rotations


def test_run_sphere_map_standalone(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out", n_rotations=4, grid=(60, 30))
    run_sphere_map(cfg)
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert names == ["manifest.json", "map.svg", "map_seeds.csv"]


# ---------------------------------------------------------------- audit


def test_audit_identity_mode_is_exact(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out", model="equivariant", noise_amp=0.0)
    report = run_audit(cfg, identity_only=True)
    assert report.input_err == 0.0
    assert report.target_err == 0.0
    assert report.output_err == 0.0
    assert report.n_samples == 4
    assert report.n_with_target == 4


def test_audit_random_rotations_are_rounding_sized(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out", model="equivariant", noise_amp=0.0)
    report = run_audit(cfg)
    assert 0.0 < report.input_err <= 1e-12
    assert 0.0 < report.target_err <= 1e-9  # stresses carry the oracle's scale
    assert report.output_err > 0.0
    assert "samples: 4" in report.to_text()


# ---------------------------------------------------------------- sweep


def test_sweep_rows_and_zero_checkpoint(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "sweep")
    rows = run_sweep(cfg, [8, 0, 4])
    assert [r[0] for r in rows] == [0, 4, 8]
    report, _ = run_experiment(replace(cfg, out_dir=str(tmp_path / "ref0"), n_rotations=0))
    assert rows[0][1] == pytest.approx(report.mere_i0, abs=1e-12)
    csv = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    assert csv[0] == "n,mere_tta,mare_tta"
    assert len(csv) == 4
    manifest = json.loads((tmp_path / "sweep" / "manifest.json").read_text())
    assert manifest["n_values"] == [0, 4, 8]


def test_sweep_agrees_with_full_run(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "sweep", n_rotations=4)
    rows = run_sweep(cfg, [4], write=False)
    assert not (tmp_path / "sweep").exists()
    report, _ = run_experiment(replace(cfg, out_dir=str(tmp_path / "full")))
    assert rows[0][1] == pytest.approx(report.mere_tta, abs=1e-12)
    assert rows[0][2] == pytest.approx(report.mare_tta, abs=1e-12)


def test_sweep_rejects_bad_requests(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out")
    with pytest.raises(ConfigError):
        run_sweep(cfg, [])
    with pytest.raises(ConfigError):
        run_sweep(cfg, [-1, 4])
    with pytest.raises(ConfigError):
        run_sweep(replace(cfg, divisor_mode="paper"), [0, 4])


# --------------------------------------------------------------- repeats


def test_repeats_rows_and_summary(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "rep", n_rotations=4)
    rows, (mean, sd) = run_repeats(cfg, n_repeats=3)
    assert [r[0] for r in rows] == [1, 2, 3]
    assert [r[1] for r in rows] == [5, 6, 7]  # consecutive rotation seeds
    tta = np.array([r[5] for r in rows])
    assert mean == pytest.approx(float(np.mean(tta)), abs=1e-15)
    assert sd == pytest.approx(float(np.std(tta, ddof=1)), abs=1e-15)
    csv = (tmp_path / "rep" / "repeats.csv").read_text().splitlines()
    assert csv[0] == "repeat,seed,mere_i0,mere_av,sd_mere,mere_tta,mare_tta"
    assert len(csv) == 1 + 3 + 2
    assert csv[-2].startswith("mean,")
    assert csv[-1].startswith("sd,")


def test_repeats_single_run_has_zero_sd(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "rep", n_rotations=2)
    rows, (_, sd) = run_repeats(cfg, n_repeats=1, write=False)
    assert len(rows) == 1
    assert sd == 0.0


def test_repeats_rejects_zero_repeats(dataset_path, tmp_path):
    with pytest.raises(ConfigError):
        run_repeats(_cfg(dataset_path, tmp_path / "rep"), n_repeats=0)


# --------------------------------------------------------------- cleanup


def test_failed_run_removes_partial_outputs(dataset_path, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("injected failure")

    monkeypatch.setattr(experiment, "render_svg", boom)
    cfg = _cfg(dataset_path, tmp_path / "out", sphere_map=True, grid=(40, 20))
    with pytest.raises(RuntimeError, match="injected"):
        run_experiment(cfg)
    # the sphere map fails after the metrics files were written; all are removed
    assert list((tmp_path / "out").iterdir()) == []


# ---------------------------------------------------------- configuration


def test_config_validation_errors(dataset_path, tmp_path):
    out = str(tmp_path / "out")
    good = _cfg(dataset_path, out)
    good.validate()
    cases = [
        replace(good, model="magic"),
        replace(good, model="external:   "),
        replace(good, model="noisy", noise_amp=0.0),
        replace(good, n_rotations=-1),
        replace(good, divisor_mode="median"),
        replace(good, bin_width=0.0),
        replace(good, radius=-2.0),
        replace(good, grid=(0, 10)),
        replace(good, grid=(10,)),
        replace(good, colormap="jet"),
        replace(good, external_timeout=0.0),
        replace(good, dataset=str(tmp_path / "nope.ndjson")),
    ]
    for bad in cases:
        with pytest.raises(ConfigError):
            bad.validate()
    # path checking can be deferred for configs built before the dataset exists
    replace(good, dataset=str(tmp_path / "nope.ndjson")).validate(check_paths=False)


def test_config_roundtrip_dict(dataset_path, tmp_path):
    cfg = _cfg(dataset_path, tmp_path / "out", grid=(12, 6))
    d = cfg.to_dict()
    assert d["grid"] == [12, 6]
    assert d["model"] == "noisy"
    json.dumps(d)


def test_dataset_without_targets_rejected(tmp_path):
    samples = generate_synthetic(2, 6, stream=RotationStream(33))
    stripped = [replace(s, target_stress=None) for s in samples]
    path = tmp_path / "untargeted.ndjson"
    save_dataset(stripped, path)
    cfg = _cfg(str(path), tmp_path / "out")
    with pytest.raises(InvariantViolation, match="sigma"):
        run_experiment(cfg)


def test_mixed_path_lengths_rejected(tmp_path):
    a = generate_synthetic(1, 6, stream=RotationStream(34))
    b = generate_synthetic(2, 9, stream=RotationStream(35))[1:]
    path = tmp_path / "mixed.ndjson"
    save_dataset(a + b, path)
    cfg = _cfg(str(path), tmp_path / "out")
    with pytest.raises(InvariantViolation, match="path length"):
        run_experiment(cfg)


def test_empty_dataset_rejected(tmp_path):
    path = tmp_path / "empty.ndjson"
    path.write_text("")
    cfg = _cfg(str(path), tmp_path / "out")
    with pytest.raises(InvariantViolation, match="empty"):
        run_experiment(cfg)
