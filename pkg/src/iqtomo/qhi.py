"""Quantum channel identification from tomographed trajectories.

A discrete-time channel acts on row-major vectorised states through a
4x4 superoperator ``g``; for unitary dynamics ``g = U (x) conj(U)``.
Trajectories are repeated applications of ``g``; observation converts
each state into per-axis expectation estimates, either exactly or via
the full sampled readout pipeline.

Fitting alternates a least-squares update of ``g`` over all consecutive
state pairs with a projection of its Choi matrix onto the CPTP set
(Dykstra between the PSD cone and the trace-preservation affine set).
The least-squares update is the minimum-change solution from the current
iterate, so directions the data do not constrain are filled in by the
projection instead of being zeroed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .discriminate import BVector, MixtureParams, dataset_to_b
from .qcore import AXES, DensityMatrix, bloch_from_density, unvec, vec
from .qst import qst_closed_form
from .readout import mix_seed, sample_outcomes, synthesize_iq, write_text_atomic

_VEC_ID = np.eye(2, dtype=complex).reshape(-1)


class ProjectionWarning(UserWarning):
    """CPTP projection stopped on its sweep cap instead of its tolerance."""


class FitWarning(UserWarning):
    """Channel fit data leave some directions unconstrained."""


def choi_from_super(g: np.ndarray) -> np.ndarray:
    """Reshuffle a superoperator into its Choi matrix (an involution)."""
    g = np.asarray(g, dtype=complex)
    if g.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {g.shape}")
    return g.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4).copy()


def super_from_choi(c: np.ndarray) -> np.ndarray:
    """Inverse reshuffle; identical index swap to :func:`choi_from_super`."""
    return choi_from_super(c)


def partial_trace_out(c: np.ndarray) -> np.ndarray:
    """Trace out the output subsystem of a Choi matrix, leaving 2x2."""
    c = np.asarray(c, dtype=complex)
    return np.einsum("ijil->jl", c.reshape(2, 2, 2, 2))


@dataclass(frozen=True, eq=False)
class ChannelSuperoperator:
    """A trace-preserving, Hermiticity-preserving qubit channel."""

    g: np.ndarray

    def __post_init__(self) -> None:
        g = np.array(self.g, dtype=complex)
        if g.shape != (4, 4):
            raise ValueError(f"superoperator must be 4x4, got {g.shape}")
        if np.abs(_VEC_ID.conj() @ g - _VEC_ID.conj()).max() > 1e-9:
            raise ValueError("superoperator is not trace preserving")
        choi = choi_from_super(g)
        if np.abs(choi - choi.conj().T).max() > 1e-9:
            raise ValueError("superoperator is not Hermiticity preserving")
        g.flags.writeable = False
        object.__setattr__(self, "g", g)

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        out = unvec(self.g @ vec(rho.matrix))
        out = 0.5 * (out + out.conj().T)
        return DensityMatrix(out / out.trace().real)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    """A CPTP Choi matrix: Hermitian, PSD, Tr_out = identity (all to 1e-9)."""

    c: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.c, dtype=complex)
        if c.shape != (4, 4):
            raise ValueError(f"Choi matrix must be 4x4, got {c.shape}")
        if np.abs(c - c.conj().T).max() > 1e-9:
            raise ValueError("Choi matrix is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (c + c.conj().T)).min() < -1e-9:
            raise ValueError("Choi matrix is not positive semidefinite")
        if np.abs(partial_trace_out(c) - np.eye(2)).max() > 1e-9:
            raise ValueError("Choi matrix does not preserve the trace")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)


def unitary_superoperator(u: np.ndarray) -> ChannelSuperoperator:
    """Superoperator of conjugation by a unitary: ``g = u (x) conj(u)``."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"expected a 2x2 unitary, got {u.shape}")
    if np.abs(u.conj().T @ u - np.eye(2)).max() > 1e-9:
        raise ValueError("matrix is not unitary")
    return ChannelSuperoperator(np.kron(u, u.conj()))


@dataclass(frozen=True)
class Trajectory:
    """States and/or observations of one simulated evolution."""

    trajectory_id: int
    dt: float
    states: Optional[tuple[DensityMatrix, ...]] = None
    observations: Optional[tuple[BVector, ...]] = None

    def __post_init__(self) -> None:
        if self.states is None and self.observations is None:
            raise ValueError("trajectory needs states or observations")
        length = len(self.states) if self.states is not None else len(self.observations)
        if length < 2:
            raise ValueError("trajectory must contain at least two steps")
        if (
            self.states is not None
            and self.observations is not None
            and len(self.states) != len(self.observations)
        ):
            raise ValueError("states and observations must have equal length")

    @property
    def steps(self) -> int:
        length = len(self.states) if self.states is not None else len(self.observations)
        return length - 1


def simulate_trajectory(
    channel: ChannelSuperoperator,
    rho0: DensityMatrix,
    n_steps: int,
    trajectory_id: int = 0,
    dt: float = 0.02,
) -> Trajectory:
    """Apply the channel ``n_steps`` times, recording every state."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    states = [rho0]
    current = rho0
    for _ in range(n_steps):
        current = channel.apply(current)
        states.append(current)
    return Trajectory(trajectory_id=trajectory_id, dt=float(dt), states=tuple(states))


def observe_trajectory(
    trajectory: Trajectory,
    mode: str = "exact",
    n: Optional[int] = None,
    theta: Optional[MixtureParams] = None,
    seed: Optional[int] = None,
    discriminator: str = "hard",
) -> Trajectory:
    """Attach per-step expectation estimates to a trajectory.

    ``exact`` reads the Bloch vector of each state directly; ``sampled``
    runs the full readout pipeline (outcome sampling, I-Q synthesis,
    discrimination) with ``n`` shots per axis per step.
    """
    if trajectory.states is None:
        raise ValueError("observation requires simulated states")
    observations: list[BVector] = []
    if mode == "exact":
        for state in trajectory.states:
            observations.append(BVector(b=bloch_from_density(state), delta=np.zeros(3)))
    elif mode == "sampled":
        if n is None or theta is None or seed is None:
            raise ValueError("sampled observation needs n, theta and seed")
        for step, state in enumerate(trajectory.states):
            b = np.empty(3)
            delta = np.empty(3)
            for idx, axis in enumerate(AXES):
                stream = mix_seed(seed, trajectory.trajectory_id, step, idx)
                n0, n1 = sample_outcomes(state, axis, n, mix_seed(stream, 1))
                dataset = synthesize_iq(
                    n0,
                    n1,
                    theta.zero,
                    theta.one,
                    contamination=theta.noise,
                    seed=mix_seed(stream, 2),
                    observable=axis,
                )
                b[idx], delta[idx] = dataset_to_b(dataset, theta, discriminator)
            observations.append(BVector(b=b, delta=delta))
    else:
        raise ValueError(f"unknown observation mode {mode!r}")
    return Trajectory(
        trajectory_id=trajectory.trajectory_id,
        dt=trajectory.dt,
        states=trajectory.states,
        observations=tuple(observations),
    )


def save_trajectory(trajectory: Trajectory, path: str, include_states: bool = False) -> None:
    """Write JSON-lines: header {id, dt}, then {step, b[, rho]} per step."""
    lines = [json.dumps({"id": trajectory.trajectory_id, "dt": trajectory.dt}, sort_keys=True)]
    length = trajectory.steps + 1
    for step in range(length):
        if trajectory.observations is not None:
            b = trajectory.observations[step].b
        else:
            b = bloch_from_density(trajectory.states[step])
        record: dict = {"step": step, "b": [float(v) for v in b]}
        if include_states and trajectory.states is not None:
            record["rho"] = trajectory.states[step].to_json_dict()
        lines.append(json.dumps(record, sort_keys=True))
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_trajectory(path: str) -> Trajectory:
    """Read a trajectory written by :func:`save_trajectory`."""
    with open(path, "r", encoding="utf-8") as handle:
        raw_lines = [line for line in handle.read().splitlines() if line.strip()]
    if not raw_lines:
        raise ValueError("empty trajectory file")
    header = json.loads(raw_lines[0])
    observations = []
    states = []
    for raw in raw_lines[1:]:
        record = json.loads(raw)
        observations.append(
            BVector(b=np.asarray(record["b"], dtype=float), delta=np.zeros(3))
        )
        if "rho" in record:
            states.append(DensityMatrix.from_json_dict(record["rho"]))
    return Trajectory(
        trajectory_id=int(header["id"]),
        dt=float(header["dt"]),
        states=tuple(states) if states else None,
        observations=tuple(observations),
    )


# ---------------------------------------------------------------------------
# CPTP projection and channel fitting
# ---------------------------------------------------------------------------


def _psd_project(h: np.ndarray) -> np.ndarray:
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    return (v * np.maximum(w, 0.0)) @ v.conj().T


def _tp_project(c: np.ndarray) -> np.ndarray:
    deficit = np.eye(2) - partial_trace_out(c)
    return c + np.kron(np.eye(2), deficit / 2.0)


def cptp_project(h: np.ndarray, tol: float = 1e-12, max_sweeps: int = 10_000) -> ChoiMatrix:
    """Project a Hermitian 4x4 matrix onto the CPTP Choi set (Frobenius).

    Dykstra alternation between the PSD cone and the affine set of
    trace-preserving Choi matrices; warns if the sweep cap is reached.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {h.shape}")
    x = 0.5 * (h + h.conj().T)
    scale = max(1.0, float(np.linalg.norm(x)))
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    converged = False
    y = x
    for _ in range(max_sweeps):
        y = _psd_project(x + p)
        p = x + p - y
        x_new = _tp_project(y + q)
        q = y + q - x_new
        if np.linalg.norm(y - x_new) <= tol * scale:
            x = x_new
            converged = True
            break
        x = x_new
    if not converged:
        warnings.warn(
            f"CPTP projection did not reach tolerance {tol} in {max_sweeps} sweeps",
            ProjectionWarning,
        )
    out = 0.5 * (x + x.conj().T)
    # the affine step ran last, so trace preservation is exact; clip the
    # residual negative eigenvalue mass left by finite Dykstra sweeps
    w, v = np.linalg.eigh(out)
    if w.min() < 0.0:
        out = (v * np.maximum(w, 0.0)) @ v.conj().T
        out = _tp_project(0.5 * (out + out.conj().T))
    return ChoiMatrix(out)


def _trajectory_states(trajectory: Trajectory, mode: str) -> list[DensityMatrix]:
    if mode == "from_states":
        if trajectory.states is None:
            raise ValueError("from_states fit requires simulated states")
        return list(trajectory.states)
    if mode == "from_qst":
        if trajectory.observations is None:
            raise ValueError("from_qst fit requires observations")
        return [qst_closed_form(obs).rho for obs in trajectory.observations]
    raise ValueError(f"unknown fit mode {mode!r}")


def fit_channel(
    trajectories: Sequence[Trajectory],
    mode: str = "from_states",
    tol: float = 1e-10,
    max_alternations: int = 200,
    loss_history: Optional[list] = None,
) -> tuple[ChannelSuperoperator, float]:
    """Fit a CPTP superoperator to consecutive state pairs.

    For ``from_qst`` every observation is first mapped through the
    closed-form tomography solver.  Alternates (i) the minimum-change
    least-squares update of ``g`` over all pairs with (ii) CPTP projection
    of its Choi matrix, until the loss

        sum_ij || rho_ij - unvec(g vec(rho_i,j-1)) ||_F^2

    changes by less than ``tol``.  Returns the final channel and loss;
    the per-alternation loss is appended to ``loss_history`` if given.
    """
    if not trajectories:
        raise ValueError("at least one trajectory is required")
    x_cols = []
    y_cols = []
    for trajectory in trajectories:
        sequence = _trajectory_states(trajectory, mode)
        for previous, current in zip(sequence[:-1], sequence[1:]):
            x_cols.append(vec(previous.matrix))
            y_cols.append(vec(current.matrix))
    x = np.stack(x_cols, axis=1)
    y = np.stack(y_cols, axis=1)

    u, s, vh = np.linalg.svd(x, full_matrices=False)
    floor = s[0] * 1e-12
    if mode == "from_qst":
        # shot noise perturbs the singular values of x by roughly the
        # Frobenius norm of the column uncertainties (|delta|/sqrt(2) per
        # column); directions below twice that carry no usable signal and
        # would only amplify noise through the pseudoinverse
        delta_sq = 0.0
        for trajectory in trajectories:
            for obs in trajectory.observations[:-1]:
                delta_sq += float(np.dot(obs.delta, obs.delta))
        floor = max(floor, 2.0 * np.sqrt(0.5 * delta_sq))
    keep = s > floor
    rank = int(np.count_nonzero(keep))
    if rank < 4:
        warnings.warn(
            f"trajectory data span only {rank} of 4 state directions; "
            "the least-squares fit is not unique",
            FitWarning,
        )
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    x_pinv = (vh.conj().T * inv_s) @ u.conj().T

    g = np.eye(4, dtype=complex)
    loss = float(np.linalg.norm(g @ x - y) ** 2)
    previous_loss = None
    for _ in range(max_alternations):
        candidate = g - (g @ x - y) @ x_pinv
        choi = cptp_project(choi_from_super(candidate))
        candidate = super_from_choi(choi.c)
        candidate_loss = float(np.linalg.norm(candidate @ x - y) ** 2)
        if previous_loss is not None and candidate_loss > previous_loss:
            # with noisy data the two constraint sets do not intersect and
            # the alternation settles upward after its closest pass; keep
            # the better iterate so the recorded loss is non-increasing
            break
        g = candidate
        loss = candidate_loss
        if loss_history is not None:
            loss_history.append(loss)
        if previous_loss is not None and abs(previous_loss - loss) < tol:
            break
        previous_loss = loss
    return ChannelSuperoperator(g), loss
