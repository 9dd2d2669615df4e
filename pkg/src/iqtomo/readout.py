"""Dispersive readout simulation and I-Q dataset persistence.

Measurement shots are binomial draws against the diagonal of the measured
state in each Pauli eigenbasis; each shot is then given an I-Q plane
coordinate drawn from its class cloud (Gaussian for the qubit states,
uniform disc for contamination).

All randomness flows through a counter-based Philox bit generator, with
normal deviates produced by an explicit Box-Muller transform on its
uniform stream, so identical seeds give bit-identical datasets across
platforms.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .discriminate import (
    LABEL_NAMES,
    LABEL_NOISE,
    LABEL_ONE,
    LABEL_ZERO,
    ComponentParams,
    ContaminationSpec,
    MixtureParams,
)
from .qcore import AXES, DensityMatrix, bloch_from_density

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN64 = 0x9E3779B97F4A7C15


class DatasetFormatError(ValueError):
    """Malformed dataset file; carries the offending 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def axis_seed(base_seed: int, axis: str) -> int:
    """Per-axis stream seed: base XOR (axis index + 1) * golden-ratio mix."""
    idx = AXES.index(axis)
    return (int(base_seed) ^ ((idx + 1) * _GOLDEN64 & _MASK64)) & _MASK64


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN64) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(base_seed: int, *salts: int) -> int:
    """Derive an independent substream seed from a base seed and salts."""
    out = int(base_seed) & _MASK64
    for salt in salts:
        out = _splitmix64(out ^ ((int(salt) * _GOLDEN64) & _MASK64))
    return out


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed & _MASK64)))


def _standard_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Box-Muller deviates from the counter-based uniform stream."""
    if n == 0:
        return np.empty(0)
    pairs = (n + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps the log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def _uniform_disc(rng: np.random.Generator, n: int, center: tuple[float, float], radius: float) -> np.ndarray:
    if n == 0:
        return np.empty((0, 2))
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    return np.stack([center[0] + r * np.cos(phi), center[1] + r * np.sin(phi)], axis=1)


@dataclass(eq=False)
class IQDataset:
    """One observable's worth of I-Q readout records.

    ``truth`` holds per-sample generator labels as small ints
    (0 = zero, 1 = one, 2 = noise, -1 = unknown).
    """

    observable: str
    i: np.ndarray
    q: np.ndarray
    truth: np.ndarray
    seed: int
    mixture: Optional[MixtureParams] = None

    def __post_init__(self) -> None:
        if self.observable not in AXES:
            raise ValueError(f"observable must be one of {AXES}, got {self.observable!r}")
        self.i = np.asarray(self.i, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.truth = np.asarray(self.truth, dtype=np.int8)
        if not (self.i.shape == self.q.shape == self.truth.shape) or self.i.ndim != 1:
            raise ValueError("i, q and truth must be 1-d arrays of equal length")
        if self.i.size < 1:
            raise ValueError("dataset must contain at least one sample")
        if not (np.all(np.isfinite(self.i)) and np.all(np.isfinite(self.q))):
            raise ValueError("i/q coordinates must be finite")

    @property
    def n_samples(self) -> int:
        return int(self.i.size)

    def points(self) -> np.ndarray:
        return np.stack([self.i, self.q], axis=1)

    def truth_counts(self) -> tuple[int, int, int]:
        """(n_zero, n_one, n_noise) from generator labels; unknowns ignored."""
        return (
            int(np.count_nonzero(self.truth == LABEL_ZERO)),
            int(np.count_nonzero(self.truth == LABEL_ONE)),
            int(np.count_nonzero(self.truth == LABEL_NOISE)),
        )


def sample_outcomes(rho: DensityMatrix, axis: str, n: int, seed: int) -> tuple[int, int]:
    """Draw n projective outcomes for one Pauli axis; returns (n0, n1).

    The zero-outcome probability is p0 = (1 + r_axis) / 2 for r the Bloch
    vector of ``rho``.
    """
    if n < 1:
        raise ValueError("shot count must be >= 1")
    r = bloch_from_density(rho)[AXES.index(axis)]
    p0 = min(max(0.5 * (1.0 + r), 0.0), 1.0)
    u = _philox(seed).random(n)
    n0 = int(np.count_nonzero(u < p0))
    return n0, n - n0


def synthesize_iq(
    n0: int,
    n1: int,
    theta0: ComponentParams,
    theta1: ComponentParams,
    contamination: Optional[ContaminationSpec] = None,
    seed: int = 0,
    observable: str = "z",
) -> IQDataset:
    """Generate an I-Q dataset with exact class counts.

    ``n0`` and ``n1`` samples are drawn from the two Gaussian clouds and
    ``floor(w (n0 + n1) / (1 - w))`` contamination samples from the uniform
    disc, so the realised contamination fraction approximates its weight
    ``w``.  Sample order is a seed-deterministic shuffle, and the recorded
    mixture provenance carries the realised class fractions.
    """
    if n0 < 0 or n1 < 0 or n0 + n1 < 1:
        raise ValueError("need n0, n1 >= 0 with n0 + n1 >= 1")
    n_state = n0 + n1
    noise_weight = contamination.weight if contamination is not None else 0.0
    n_noise = math.floor(noise_weight * n_state / (1.0 - noise_weight))

    rng = _philox(seed)
    blocks = []
    for count, comp in ((n0, theta0), (n1, theta1)):
        if float(np.linalg.det(comp.cov)) <= 1e-12:
            raise ValueError("component covariance is numerically singular")
        chol = np.linalg.cholesky(comp.cov)
        z = _standard_normal(rng, 2 * count).reshape(count, 2)
        blocks.append(comp.mean + z @ chol.T)
    if contamination is not None:
        blocks.append(_uniform_disc(rng, n_noise, contamination.center, contamination.radius))
    else:
        blocks.append(np.empty((0, 2)))
    xy = np.concatenate(blocks, axis=0)
    truth = np.concatenate(
        [
            np.full(n0, LABEL_ZERO, dtype=np.int8),
            np.full(n1, LABEL_ONE, dtype=np.int8),
            np.full(n_noise, LABEL_NOISE, dtype=np.int8),
        ]
    )
    perm = rng.permutation(xy.shape[0])
    xy = xy[perm]
    truth = truth[perm]

    state_fraction = 1.0 - noise_weight
    mixture = MixtureParams(
        zero=ComponentParams(state_fraction * n0 / n_state, theta0.mean, theta0.cov),
        one=ComponentParams(state_fraction * n1 / n_state, theta1.mean, theta1.cov),
        noise=contamination,
    )
    return IQDataset(
        observable=observable,
        i=xy[:, 0],
        q=xy[:, 1],
        truth=truth,
        seed=int(seed),
        mixture=mixture,
    )


# ---------------------------------------------------------------------------
# Persistence: JSON-lines datasets, CSV export
# ---------------------------------------------------------------------------


def write_text_atomic(path: str, text: str) -> None:
    """Write via a sibling temp file + rename so readers never see partials."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def save_dataset(dataset: IQDataset, path: str) -> None:
    """Write a dataset as JSON-lines: one header line, one line per sample."""
    header: dict = {"obs": dataset.observable, "seed": dataset.seed}
    if dataset.mixture is not None:
        header["mixture"] = dataset.mixture.to_json_dict()
    lines = [json.dumps(header, sort_keys=True)]
    for i_val, q_val, t_val in zip(dataset.i, dataset.q, dataset.truth):
        label = LABEL_NAMES[t_val] if t_val >= 0 else None
        lines.append(
            json.dumps({"i": float(i_val), "q": float(q_val), "truth": label}, sort_keys=True)
        )
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_dataset(path: str) -> IQDataset:
    """Read a JSON-lines dataset; reports the line number of any defect."""
    with open(path, "r", encoding="utf-8") as handle:
        raw_lines = handle.read().splitlines()
    if not raw_lines:
        raise DatasetFormatError("empty file, expected a header line", line=1)

    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"invalid JSON in header: {exc.msg}", line=1) from exc
    if not isinstance(header, dict):
        raise DatasetFormatError("header must be a JSON object", line=1)
    if "obs" not in header:
        raise DatasetFormatError("header is missing required field 'obs'", line=1)
    observable = header["obs"]
    if observable not in AXES:
        raise DatasetFormatError(f"unknown observable {observable!r}", line=1)
    seed = int(header.get("seed", 0))
    mixture = None
    if header.get("mixture") is not None:
        try:
            mixture = MixtureParams.from_json_dict(header["mixture"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"invalid mixture parameters: {exc}", line=1) from exc

    label_codes = {name: code for code, name in enumerate(LABEL_NAMES)}
    i_vals: list[float] = []
    q_vals: list[float] = []
    truth: list[int] = []
    for lineno, raw in enumerate(raw_lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"invalid JSON in sample: {exc.msg}", line=lineno) from exc
        if not isinstance(record, dict):
            raise DatasetFormatError("sample must be a JSON object", line=lineno)
        try:
            i_vals.append(float(record["i"]))
            q_vals.append(float(record["q"]))
        except KeyError as exc:
            raise DatasetFormatError(
                f"sample is missing required field {exc.args[0]!r}", line=lineno
            ) from exc
        except (TypeError, ValueError) as exc:
            raise DatasetFormatError(f"non-numeric coordinate: {exc}", line=lineno) from exc
        label = record.get("truth")
        if label is None:
            truth.append(-1)
        elif label in label_codes:
            truth.append(label_codes[label])
        else:
            raise DatasetFormatError(f"unknown truth label {label!r}", line=lineno)
    if not i_vals:
        raise DatasetFormatError("dataset contains no samples", line=len(raw_lines))
    return IQDataset(
        observable=observable,
        i=np.asarray(i_vals),
        q=np.asarray(q_vals),
        truth=np.asarray(truth, dtype=np.int8),
        seed=seed,
        mixture=mixture,
    )


def export_csv(dataset: IQDataset, path: str) -> None:
    """Write samples as CSV with columns obs, i, q, truth."""
    import io

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["obs", "i", "q", "truth"])
    for i_val, q_val, t_val in zip(dataset.i, dataset.q, dataset.truth):
        label = LABEL_NAMES[t_val] if t_val >= 0 else ""
        writer.writerow([dataset.observable, repr(float(i_val)), repr(float(q_val)), label])
    write_text_atomic(path, buffer.getvalue())
