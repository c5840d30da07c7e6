"""Reproducible experiment runs: configuration, execution, persistence.

Every run is fully described by an :class:`ExperimentConfig`; all
randomness flows from its single seed.  Output files are JSON/CSV with
shortest round-trip float formatting and no timestamps, so re-running an
identical configuration reproduces byte-identical artifacts.  Each
file-writing entry point finishes by writing ``manifest.json`` (the
configuration echo, the dataset content hash, and a content hash per
output file) and removes partial outputs if it fails midway.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import InvariantViolation, load_dataset
from .metrics import (
    DEFAULT_BIN_WIDTH,
    MetricsReport,
    evaluate_dataset,
    mare,
    mere,
)
from .models import (
    EquivariantOracle,
    ExternalModel,
    ExternalModelError,
    NoisyOracle,
    OracleParams,
    predict as model_predict,
)
from .rotations import RotationStream, rotation_list
from .spheremap import (
    COLORMAPS,
    DEFAULT_GRID,
    DEFAULT_RADIUS,
    project_rotations,
    render_svg,
    seeds_csv,
    voronoi_rasterize,
)
from .tta import TTAConfig, numerics_audit, rotate_input, run_tta
from .voigt import inverse_rotate_sym, von_mises_path

MODEL_KINDS = ("equivariant", "noisy")
EXTERNAL_PREFIX = "external:"


class ConfigError(ValueError):
    """An experiment configuration is invalid or references missing paths."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one run; see module docstring for the contract.

    ``model`` is ``"equivariant"``, ``"noisy"``, or ``"external:<command>"``
    with a shell-style command line after the colon.
    """

    dataset: str
    out_dir: str
    model: str = "equivariant"
    n_rotations: int = 200
    seed: int = 0
    divisor_mode: str = "count"
    sd_include_identity: bool = False
    mare_abs: bool = False
    bin_width: float = DEFAULT_BIN_WIDTH
    noise_amp: float = 0.0
    noise_seed: int = 0
    sphere_map: bool = False
    grid: tuple = DEFAULT_GRID
    radius: float = DEFAULT_RADIUS
    colormap: str = "viridis"
    external_timeout: float = 30.0

    def model_kind(self):
        if self.model in MODEL_KINDS:
            return self.model
        if self.model.startswith(EXTERNAL_PREFIX):
            return "external"
        raise ConfigError(
            f"unknown model {self.model!r}; expected one of {MODEL_KINDS} or 'external:<cmd>'"
        )

    def validate(self, check_paths=True):
        kind = self.model_kind()
        if kind == "external" and not self.model[len(EXTERNAL_PREFIX):].strip():
            raise ConfigError("external model command is empty")
        if kind == "noisy" and self.noise_amp <= 0:
            raise ConfigError("noisy model requires noise_amp > 0")
        if self.n_rotations < 0:
            raise ConfigError("n_rotations must be >= 0")
        if self.divisor_mode not in ("count", "paper"):
            raise ConfigError(f"divisor_mode must be 'count' or 'paper', got {self.divisor_mode!r}")
        if self.bin_width <= 0:
            raise ConfigError("bin_width must be positive")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if len(self.grid) != 2 or min(int(self.grid[0]), int(self.grid[1])) < 1:
            raise ConfigError(f"grid must be two counts >= 1, got {self.grid!r}")
        if self.colormap not in COLORMAPS:
            raise ConfigError(f"unknown colormap {self.colormap!r} (have {sorted(COLORMAPS)})")
        if self.external_timeout <= 0:
            raise ConfigError("external_timeout must be positive")
        if check_paths and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset file not found: {self.dataset}")
        return self

    def to_dict(self):
        return {
            "dataset": str(self.dataset),
            "out_dir": str(self.out_dir),
            "model": self.model,
            "n_rotations": self.n_rotations,
            "seed": self.seed,
            "divisor_mode": self.divisor_mode,
            "sd_include_identity": self.sd_include_identity,
            "mare_abs": self.mare_abs,
            "bin_width": self.bin_width,
            "noise_amp": self.noise_amp,
            "noise_seed": self.noise_seed,
            "sphere_map": self.sphere_map,
            "grid": [int(self.grid[0]), int(self.grid[1])],
            "radius": self.radius,
            "colormap": self.colormap,
            "external_timeout": self.external_timeout,
        }


def build_model(cfg: ExperimentConfig):
    """Instantiate the predictor named by the configuration."""
    kind = cfg.model_kind()
    if kind == "equivariant":
        return EquivariantOracle(OracleParams())
    if kind == "noisy":
        return NoisyOracle(OracleParams(noise_amp=cfg.noise_amp, noise_seed=cfg.noise_seed))
    command = cfg.model[len(EXTERNAL_PREFIX):].strip()
    return ExternalModel(command, timeout=cfg.external_timeout)


def _close_model(model):
    close = getattr(model, "close", None)
    if close is not None:
        close()


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _num(value):
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


class _OutputWriter:
    """Deterministic single-writer for an output directory.

    Tracks everything it writes so a failed run can remove its partial
    outputs, and seals the run with a manifest hashing each artifact.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written = []

    def write_text(self, name, text):
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        self.written.append(name)
        return path

    def write_json(self, name, payload):
        return self.write_text(name, json.dumps(payload, indent=2) + "\n")

    def write_csv(self, name, header, rows):
        lines = [header]
        for row in rows:
            lines.append(",".join(_num(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool) else str(v) for v in row))
        return self.write_text(name, "\n".join(lines) + "\n")

    def cleanup(self):
        for name in self.written:
            try:
                os.unlink(self.out_dir / name)
            except OSError:
                pass
        self.written = []

    def manifest(self, cfg: ExperimentConfig, extra=None):
        # out_dir is plumbing, not part of the run's identity: leaving it out
        # makes manifests byte-identical wherever the outputs land.
        config = {k: v for k, v in cfg.to_dict().items() if k != "out_dir"}
        payload = {
            "config": config,
            "seed": cfg.seed,
            "dataset_sha256": sha256_file(cfg.dataset),
            "outputs": {name: sha256_file(self.out_dir / name) for name in sorted(self.written)},
        }
        if extra:
            payload.update(extra)
        return self.write_json("manifest.json", payload)


def _load_evaluable(cfg: ExperimentConfig):
    """Load the dataset and require targets and a uniform path length."""
    samples = load_dataset(cfg.dataset)
    if not samples:
        raise InvariantViolation("<dataset>", "samples", "dataset is empty")
    n_steps = samples[0].n_steps
    for sample in samples:
        if sample.target_stress is None:
            raise InvariantViolation(sample.id, "sigma", "evaluation requires target stress paths")
        if sample.n_steps != n_steps:
            raise InvariantViolation(
                sample.id, "eps", f"path length {sample.n_steps} differs from first sample ({n_steps})"
            )
    return samples


def _tta_config(cfg: ExperimentConfig):
    return TTAConfig(
        n_rotations=cfg.n_rotations,
        seed=cfg.seed,
        divisor_mode=cfg.divisor_mode,
        sd_include_identity=cfg.sd_include_identity,
    )


def compute_results(cfg: ExperimentConfig, samples=None):
    """Run augmented inference for every sample; returns (samples, results).

    The same rotation seed is used for every sample, so rotation index i
    refers to one common rotation across the dataset (a requirement for
    per-rotation error maps).
    """
    if samples is None:
        samples = _load_evaluable(cfg)
    model = build_model(cfg)
    tta_cfg = _tta_config(cfg)
    results = []
    try:
        for sample in samples:
            try:
                results.append(run_tta(model, sample.model_input(), tta_cfg))
            except ExternalModelError as exc:
                raise ExternalModelError(f"sample {sample.id}: {exc}") from exc
    finally:
        _close_model(model)
    return samples, results


def _curve_rows(curve):
    return [(t, v) for t, v in enumerate(curve)]


def _write_run_outputs(writer: _OutputWriter, cfg, samples, results, report: MetricsReport):
    writer.write_json("metrics.json", report.to_dict())
    writer.write_text("metrics.txt", report.to_text() + "\n")

    lines = []
    for sample, res in zip(samples, results):
        record = {
            "id": sample.id,
            "sigma_tta": res.aggregated,
            "sd": res.sd,
            "vm_tta": res.vm_aggregated,
            "vm_sd": res.vm_sd,
        }
        parts = [f'"id": {json.dumps(sample.id)}']
        for key in ("sigma_tta", "sd"):
            rows = ", ".join(
                "[" + ", ".join(_num(v) for v in row) + "]" for row in record[key]
            )
            parts.append(f'"{key}": [{rows}]')
        for key in ("vm_tta", "vm_sd"):
            parts.append(f'"{key}": [' + ", ".join(_num(v) for v in record[key]) + "]")
        lines.append("{" + ", ".join(parts) + "}")
    writer.write_text("aggregated.ndjson", "\n".join(lines) + "\n")

    unc = report.uncertainty
    writer.write_csv("sd_curve.csv", "t,value", _curve_rows(unc.sd_curve))
    writer.write_csv("e_abs_curve.csv", "t,value", _curve_rows(unc.e_abs_curve))
    writer.write_csv("e_rel_curve.csv", "t,value", _curve_rows(unc.e_rel_curve))
    writer.write_csv("sd_rel_curve.csv", "t,value", _curve_rows(unc.sd_rel_curve))

    if report.histogram is not None:
        writer.write_csv(
            "mere_histogram.csv",
            "bin_left,bin_right,density,normal_fit",
            report.histogram.to_rows(),
        )

    if cfg.sphere_map:
        _write_sphere_map(writer, cfg, report)


def _write_sphere_map(writer: _OutputWriter, cfg: ExperimentConfig, report: MetricsReport):
    rotations = rotation_list(RotationStream(cfg.seed), cfg.n_rotations)
    values = [report.mere_per_rotation[i] for i in range(cfg.n_rotations + 1)]
    seeds = project_rotations(rotations, values, radius=cfg.radius)
    raster = voronoi_rasterize(seeds, grid=cfg.grid, radius=cfg.radius)
    writer.write_text(
        "map.svg", render_svg(raster, seeds, colormap=cfg.colormap, title="per-rotation mean relative error")
    )
    writer.write_text("map_seeds.csv", seeds_csv(seeds))


def run_experiment(cfg: ExperimentConfig):
    """Full augmented run with persisted metrics; returns (report, manifest path).

    Writes ``metrics.json``/``metrics.txt``, per-sample aggregates
    (``aggregated.ndjson``), the four uncertainty curves, the per-rotation
    error histogram, optionally the spherical error map, and finally the
    manifest.  On any failure all files written so far are removed.
    """
    cfg.validate()
    samples, results = compute_results(cfg)
    report = evaluate_dataset(
        np.stack([s.target_stress for s in samples]),
        results,
        mare_abs=cfg.mare_abs,
        bin_width=cfg.bin_width,
    )
    writer = _OutputWriter(cfg.out_dir)
    try:
        _write_run_outputs(writer, cfg, samples, results, report)
        manifest_path = writer.manifest(cfg)
    except BaseException:
        writer.cleanup()
        raise
    return report, manifest_path


def run_audit(cfg: ExperimentConfig, identity_only=False):
    """Rotate/back-rotate round-trip error survey of the configured dataset."""
    cfg.validate()
    samples = load_dataset(cfg.dataset)
    model = build_model(cfg)
    try:
        return numerics_audit(samples, model, RotationStream(cfg.seed), identity_only=identity_only)
    finally:
        _close_model(model)


def run_sweep(cfg: ExperimentConfig, n_values, write=True):
    """Aggregated-error curve over rotation counts, one shared rotation stream.

    All requested counts are evaluated in a single pass: the rotation list
    of the largest N is generated once and every smaller N uses its prefix,
    so the curve is internally consistent.  Aggregation is a running
    compensated sum, checkpointed at each requested count.  Returns rows of
    ``(n, mere_tta, mare_tta)`` and, when ``write`` is set, persists
    ``sweep.csv`` plus a manifest.
    """
    cfg.validate()
    checkpoints = sorted({int(n) for n in n_values})
    if not checkpoints:
        raise ConfigError("sweep needs at least one rotation count")
    if checkpoints[0] < 0:
        raise ConfigError("rotation counts must be >= 0")
    if cfg.divisor_mode == "paper" and checkpoints[0] == 0:
        raise ConfigError("paper divisor mode cannot evaluate N = 0")

    samples = _load_evaluable(cfg)
    model = build_model(cfg)
    n_max = checkpoints[-1]
    rotations = rotation_list(RotationStream(cfg.seed), n_max)
    target_vm = np.stack([von_mises_path(s.target_stress) for s in samples])
    n_steps = samples[0].n_steps

    vm_by_checkpoint = np.empty((len(samples), len(checkpoints), n_steps))
    try:
        for m, sample in enumerate(samples):
            inp = sample.model_input()
            total = np.zeros((n_steps, 6))
            carry = np.zeros_like(total)
            next_cp = 0
            for i, r in enumerate(rotations):
                out = inverse_rotate_sym(model_predict(model, rotate_input(inp, r)), r)
                y = out - carry
                t = total + y
                carry = (t - total) - y
                total = t
                while next_cp < len(checkpoints) and checkpoints[next_cp] == i:
                    divisor = i + 1 if cfg.divisor_mode == "count" else max(i, 1)
                    vm_by_checkpoint[m, next_cp] = von_mises_path(total / divisor)
                    next_cp += 1
    finally:
        _close_model(model)

    rows = []
    for k, n in enumerate(checkpoints):
        rows.append(
            (
                n,
                mere(target_vm, vm_by_checkpoint[:, k, :]),
                mare(target_vm, vm_by_checkpoint[:, k, :], absolute=cfg.mare_abs),
            )
        )
    if write:
        writer = _OutputWriter(cfg.out_dir)
        try:
            writer.write_csv("sweep.csv", "n,mere_tta,mare_tta", rows)
            writer.manifest(cfg, extra={"n_values": checkpoints})
        except BaseException:
            writer.cleanup()
            raise
    return rows


def run_repeats(cfg: ExperimentConfig, n_repeats=5, write=True):
    """Repeat the full run with consecutive rotation seeds (stability table).

    Each repeat k uses rotation seed ``cfg.seed + k`` on the same dataset
    and model, echoing how repeated augmentation passes differ only in the
    sampled rotations.  Returns one row per repeat of ``(repeat, seed,
    mere_i0, mere_av, sd_mere, mere_tta, mare_tta)`` plus summary mean/SD
    rows over the aggregated-path error (sample SD, divisor n-1), and
    persists ``repeats.csv`` when ``write`` is set.
    """
    cfg.validate()
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    samples = _load_evaluable(cfg)
    targets = np.stack([s.target_stress for s in samples])
    rows = []
    tta_values = []
    for k in range(n_repeats):
        run_cfg = replace(cfg, seed=cfg.seed + k)
        _, results = compute_results(run_cfg, samples=samples)
        report = evaluate_dataset(targets, results, mare_abs=cfg.mare_abs, bin_width=cfg.bin_width)
        tta_values.append(report.mere_tta)
        rows.append(
            (k + 1, run_cfg.seed, report.mere_i0, report.mere_av, report.sd_mere,
             report.mere_tta, report.mare_tta)
        )
    values = np.asarray(tta_values)
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    summary = [("mean", "", "", "", "", mean, ""), ("sd", "", "", "", "", sd, "")]
    if write:
        writer = _OutputWriter(cfg.out_dir)
        try:
            writer.write_csv(
                "repeats.csv",
                "repeat,seed,mere_i0,mere_av,sd_mere,mere_tta,mare_tta",
                rows + summary,
            )
            writer.manifest(cfg, extra={"n_repeats": n_repeats})
        except BaseException:
            writer.cleanup()
            raise
    return rows, (mean, sd)


def run_sphere_map(cfg: ExperimentConfig):
    """Standalone spherical error-map export; returns the manifest path."""
    cfg.validate()
    samples, results = compute_results(cfg)
    report = evaluate_dataset(
        np.stack([s.target_stress for s in samples]),
        results,
        mare_abs=cfg.mare_abs,
        bin_width=cfg.bin_width,
    )
    writer = _OutputWriter(cfg.out_dir)
    try:
        _write_sphere_map(writer, cfg, report)
        manifest_path = writer.manifest(cfg)
    except BaseException:
        writer.cleanup()
        raise
    return manifest_path
