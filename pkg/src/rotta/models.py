"""Stress-path predictors: analytic oracles and an external-process adapter.

A model maps ``(orientation tensor a, volume fraction vf, strain path
eps(t))`` to a stress path ``sigma(t)`` of the same length.  Anything with a
``predict(ModelInput) -> (T, 6) ndarray`` method qualifies.

Two built-in analytic oracles stand in for a trained sequence model:

* :class:`EquivariantOracle` — an isotropic tensor polynomial in ``(a, eps)``
  with a von Mises stress cap.  It transforms exactly under frame rotation,
  so rotation-augmented inference must reproduce the plain prediction; this
  gives every aggregation test a known ground truth.
* :class:`NoisyOracle` — the same response plus a deterministic, bounded
  perturbation hashed from the *working-frame* inputs.  Rotated copies of an
  input receive independent noise, which is precisely the failure mode the
  augmentation averages away.

:class:`ExternalModel` adapts any external predictor over a newline-delimited
JSON protocol on stdin/stdout of a spawned process (see module docs below).
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .voigt import deviatoric_split, to_matrix, from_matrix, trace, von_mises

_IDENTITY6 = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


class ExternalModelError(RuntimeError):
    """Protocol violation, bad payload, or timeout from an external model process."""


@dataclass(frozen=True)
class ModelInput:
    """One prediction request: orientation tensor, volume fraction, strain path.

    ``a`` is a Voigt 6-vector, ``strain`` a ``(T, 6)`` path with T >= 1.
    """

    a: np.ndarray
    vf: float
    strain: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "strain", np.asarray(self.strain, dtype=float))

    @property
    def n_steps(self):
        return self.strain.shape[0]

    def validate(self):
        if self.a.shape != (6,):
            raise ValueError(f"orientation tensor must have shape (6,), got {self.a.shape}")
        if self.strain.ndim != 2 or self.strain.shape[1] != 6 or self.strain.shape[0] < 1:
            raise ValueError(f"strain must have shape (T, 6) with T >= 1, got {self.strain.shape}")
        if not (0.0 < self.vf < 1.0):
            raise ValueError(f"volume fraction must lie in (0, 1), got {self.vf}")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.strain))):
            raise ValueError("model input contains non-finite values")
        return self


@dataclass(frozen=True)
class OracleParams:
    """Material-like parameters of the built-in oracles (stresses in MPa).

    ``lam``/``mu`` are Lame-style stiffnesses, ``kappa`` couples the fiber
    orientation into the response, ``sigma_y`` caps the von Mises stress, and
    ``noise_amp``/``noise_seed`` control the frame-noise perturbation.
    """

    lam: float = 2400.0
    mu: float = 1100.0
    kappa: float = 30000.0
    sigma_y: float = 120.0
    noise_amp: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if min(self.lam, self.mu, self.kappa, self.sigma_y) <= 0:
            raise ValueError("lam, mu, kappa and sigma_y must all be > 0")
        if self.noise_amp < 0:
            raise ValueError("noise_amp must be >= 0")


def predict(model, inp: ModelInput):
    """Validate ``inp``, dispatch to ``model.predict``, and check the output contract.

    Returns the ``(T, 6)`` stress path.  Raises :class:`ExternalModelError`
    for external-process failures; ``ValueError`` for invalid inputs.
    """
    inp.validate()
    out = np.asarray(model.predict(inp), dtype=float)
    if out.shape != inp.strain.shape:
        raise ExternalModelError(
            f"model returned shape {out.shape}, expected {inp.strain.shape}"
        )
    return out


class EquivariantOracle:
    """Memoryless analytic stress model, exactly equivariant under frame rotation.

    Per step the trial stress is::

        S = lam * tr(eps) * I + 2 * mu * eps + vf * kappa * (a.eps + eps.a)

    and if its von Mises stress exceeds ``sigma_y`` the deviatoric part is
    scaled down to the cap while the hydrostatic part is kept.  Every term is
    an isotropic tensor polynomial in ``(a, eps)``, so conjugating the inputs
    by a rotation conjugates the output by the same rotation.
    """

    def __init__(self, params: Optional[OracleParams] = None):
        self.params = params or OracleParams()

    def predict(self, inp: ModelInput):
        p = self.params
        eps_m = to_matrix(inp.strain)  # (T, 3, 3)
        a_m = to_matrix(inp.a)
        coupling = np.einsum("ij,tjk->tik", a_m, eps_m) + np.einsum("tij,jk->tik", eps_m, a_m)
        tr_eps = trace(inp.strain)
        s_m = (
            p.lam * tr_eps[:, None, None] * np.eye(3)
            + 2.0 * p.mu * eps_m
            + inp.vf * p.kappa * coupling
        )
        s = from_matrix(s_m)
        dev, mean = deviatoric_split(s)
        vm = von_mises(s)
        scale = np.where(vm > p.sigma_y, p.sigma_y / np.where(vm > 0, vm, 1.0), 1.0)
        return dev * scale[:, None] + mean[:, None] * _IDENTITY6


class NoisyOracle(EquivariantOracle):
    """Equivariant oracle plus deterministic frame noise (not equivariant).

    The perturbation for step ``t``, component ``c`` is hashed from
    ``(noise_seed, quantized inputs, t, c)`` and is uniform in
    ``[-noise_amp, +noise_amp)``.  Because the hash sees the *working-frame*
    component values, each rotated copy of an input draws independent noise,
    while repeating the same input replays the identical perturbation.
    Inputs are quantized to a 1e-9 grid first so that rotation round-trip
    float fuzz cannot flip the hash.
    """

    def __init__(self, params: OracleParams):
        if params.noise_amp <= 0:
            raise ValueError("NoisyOracle requires noise_amp > 0")
        super().__init__(params)

    def predict(self, inp: ModelInput):
        base = super().predict(inp)
        noise = _frame_noise(self.params.noise_seed, inp) * self.params.noise_amp
        return base + noise


# -- frame-noise hashing ------------------------------------------------------
#
# splitmix64 finalizer, vectorized on uint64 arrays.  Chosen over hashlib for
# speed: noise generation is fully vectorized over steps and components.

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_QUANTUM = 1e-9


def _mix(x):
    with np.errstate(over="ignore"):  # wraparound mod 2**64 is the point
        x = (x + _SM_GAMMA).astype(np.uint64)
        x ^= x >> np.uint64(30)
        x = (x * _SM_M1).astype(np.uint64)
        x ^= x >> np.uint64(27)
        x = (x * _SM_M2).astype(np.uint64)
        x ^= x >> np.uint64(31)
    return x


def _quantize(values):
    """Snap floats to the 1e-9 grid and reinterpret as uint64 words."""
    q = np.round(np.asarray(values, dtype=float) / _QUANTUM)
    return q.astype(np.int64).astype(np.uint64)


def _frame_noise(seed, inp: ModelInput):
    """Deterministic noise field in [-1, 1), shape ``(T, 6)``."""
    # 0-d arrays throughout: numpy array arithmetic wraps modulo 2**64 silently
    h = _mix(np.array(int(seed) & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64))
    for word in _quantize(inp.a):
        h = _mix(h ^ word)
    h = _mix(h ^ _quantize(inp.vf))
    # fold the per-step strain words into per-step hashes
    t_hash = np.full(inp.n_steps, h, dtype=np.uint64)
    eps_words = _quantize(inp.strain)  # (T, 6) uint64
    for c in range(6):
        t_hash = _mix(t_hash ^ eps_words[:, c])
    t_hash = _mix(t_hash ^ np.arange(1, inp.n_steps + 1, dtype=np.uint64))
    comp_hash = _mix(t_hash[:, None] ^ np.arange(1, 7, dtype=np.uint64)[None, :])
    u = (comp_hash >> np.uint64(11)) * 2.0**-53  # uniform [0, 1)
    return 2.0 * u - 1.0


# -- external line-protocol adapter -------------------------------------------


@dataclass
class ExternalModelConfig:
    """Launch configuration for an external predictor process.

    ``command`` is the argv list (or a shell-style string) of a process that
    speaks the line protocol: one JSON request per line on stdin::

        {"id": <u64>, "a": [6 floats], "vf": <float>, "eps": [[6 floats] x T]}

    answered by exactly one JSON line on stdout::

        {"id": <u64>, "sigma": [[6 floats] x T]}

    Component order is [11, 22, 33, 12, 13, 23] with tensor (not engineering)
    shear values.  Process exit, a malformed line, an id/shape mismatch, or
    non-finite values raise :class:`ExternalModelError`.
    """

    command: list = field(default_factory=list)
    timeout: float = 30.0


class ExternalModel:
    """Line-protocol client for an external predictor subprocess.

    One request is in flight at a time.  Usable as a context manager; the
    subprocess is spawned lazily on first prediction and terminated by
    :meth:`close`.
    """

    def __init__(self, command, timeout=30.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.config = ExternalModelConfig(command=list(command), timeout=float(timeout))
        self._proc = None
        self._buffer = b""
        self._next_id = 0

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _ensure_started(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                self.config.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                bufsize=0,
            )
        except OSError as exc:
            raise ExternalModelError(f"cannot start external model {self.config.command}: {exc}") from exc
        self._buffer = b""
        os.set_blocking(self._proc.stdout.fileno(), False)

    def close(self):
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5.0)
        except Exception:
            self._proc.kill()
        self._proc = None

    def _read_line(self, deadline):
        """Accumulate stdout until a full line; tolerant of fragmented writes."""
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ExternalModelError(
                    f"external model timed out after {self.config.timeout:.1f} s"
                )
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 1 << 16)
            if chunk == b"":
                code = self._proc.poll()
                raise ExternalModelError(
                    f"external model closed its output (exit status {code})"
                )
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def predict(self, inp: ModelInput):
        self._ensure_started()
        req_id = self._next_id
        self._next_id += 1
        request = {
            "id": req_id,
            "a": inp.a.tolist(),
            "vf": float(inp.vf),
            "eps": inp.strain.tolist(),
        }
        payload = (json.dumps(request) + "\n").encode()
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ExternalModelError(f"external model pipe closed: {exc}") from exc

        line = self._read_line(time.monotonic() + self.config.timeout)
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExternalModelError(f"malformed response line: {line[:200]!r}") from exc
        if not isinstance(response, dict) or response.get("id") != req_id:
            raise ExternalModelError(
                f"response id {response.get('id')!r} does not match request id {req_id}"
            )
        try:
            sigma = np.asarray(response["sigma"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ExternalModelError(f"response lacks a numeric 'sigma' field: {exc}") from exc
        if sigma.shape != inp.strain.shape:
            raise ExternalModelError(
                f"external model returned {sigma.shape}, expected {inp.strain.shape}"
            )
        if not np.all(np.isfinite(sigma)):
            raise ExternalModelError("external model returned non-finite stress values")
        return sigma


def external_predict(config: ExternalModelConfig, inp: ModelInput):
    """One-shot prediction through a fresh external process (convenience wrapper)."""
    with ExternalModel(config.command, timeout=config.timeout) as model:
        return predict(model, inp)
