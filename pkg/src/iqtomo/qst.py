"""Single-qubit state tomography from Pauli expectation estimates.

The constrained least-squares problem

    minimise || A vec(rho) - b ||^2   over density matrices rho

has a closed form for one qubit: in Bloch coordinates the objective is
``|| r - b ||^2`` over the unit ball, so the optimum is ``b`` itself when
``|b| <= 1`` and ``b / |b|`` otherwise.  A generic projected-gradient
solver over the PSD unit-trace set is kept alongside it as an independent
cross-check (and as the route that generalises beyond one qubit).

``bilevel_qst`` composes the discrimination stage with the tomography
stage: per-axis memberships collapse to ``b`` estimates which feed the
closed-form solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Optional

import numpy as np

from .discriminate import BVector, MembershipMatrix, MixtureParams, b_from_memberships, memberships_for
from .qcore import (
    AXES,
    DensityMatrix,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    _psd_unit_trace_project_raw,
    bloch_from_density,
    density_from_bloch,
    frobenius_distance,
)

if TYPE_CHECKING:  # pragma: no cover - import only for annotations
    from .readout import IQDataset


@dataclass(frozen=True)
class QstResult:
    """A reconstructed state together with solver diagnostics."""

    rho: DensityMatrix
    b_used: BVector
    residual_sq: float
    solver: str
    iterations: int
    converged: bool


@dataclass(frozen=True)
class BilevelResult:
    """Joint discrimination + tomography output."""

    qst: QstResult
    memberships: Mapping[str, MembershipMatrix]
    mode: str


def _as_b_array(b) -> np.ndarray:
    arr = np.asarray(b.b if isinstance(b, BVector) else b, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError("b must be finite")
    return arr


def _as_delta(b, delta) -> np.ndarray:
    if isinstance(b, BVector):
        return b.delta
    if delta is None:
        return np.zeros(3)
    return np.asarray(delta, dtype=float).reshape(3)


def qst_closed_form(b, delta: Optional[np.ndarray] = None) -> QstResult:
    """Reconstruct a state from ``b`` by radial projection onto the ball.

    ``residual_sq`` is ``max(0, |b| - 1)^2``, the squared distance from
    ``b`` to the Bloch ball.
    """
    arr = _as_b_array(b)
    norm = float(np.linalg.norm(arr))
    r = arr if norm <= 1.0 else arr / norm
    rho = density_from_bloch(r)
    residual = max(0.0, norm - 1.0) ** 2
    return QstResult(
        rho=rho,
        b_used=BVector(b=arr, delta=_as_delta(b, delta)),
        residual_sq=residual,
        solver="closed_form",
        iterations=0,
        converged=True,
    )


def qst_projected_gradient(
    b,
    step: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    delta: Optional[np.ndarray] = None,
) -> QstResult:
    """Projected-gradient reconstruction of a state from ``b``.

    Gradient descent on ``|| A vec(rho) - b ||^2`` in matrix space,
    interleaved with projection onto the PSD unit-trace set.  ``step`` is
    the gradient step in Bloch coordinates, where the quadratic has
    Lipschitz constant 2, so any step in (0, 0.5] is a descent step; if
    ``max_iter`` is exhausted the best iterate seen is returned with
    ``converged = False``.
    """
    if not 0.0 < step <= 1.0:
        raise ValueError(f"step must lie in (0, 1], got {step}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    target = _as_b_array(b)
    paulis = (SIGMA_X, SIGMA_Y, SIGMA_Z)

    rho = np.eye(2, dtype=complex) / 2.0
    best = rho
    best_obj = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        r = bloch_from_density(rho)
        obj = float(np.sum((r - target) ** 2))
        if obj < best_obj:
            best_obj = obj
            best = rho
        grad = sum(2.0 * (r[i] - target[i]) * paulis[i] for i in range(3))
        nxt = _psd_unit_trace_project_raw(rho - (step / 2.0) * grad)
        if np.linalg.norm(nxt - rho) < tol:
            rho = nxt
            converged = True
            break
        rho = nxt
    if converged:
        best = rho
    final = DensityMatrix(0.5 * (best + best.conj().T))
    residual = float(np.sum((bloch_from_density(final) - target) ** 2))
    return QstResult(
        rho=final,
        b_used=BVector(b=target, delta=_as_delta(b, delta)),
        residual_sq=residual,
        solver="projected_gradient",
        iterations=iterations,
        converged=converged,
    )


def bilevel_qst(
    dx: "IQDataset",
    dy: "IQDataset",
    dz: "IQDataset",
    theta: MixtureParams | Mapping[str, MixtureParams],
    mode: str = "soft",
) -> BilevelResult:
    """Discriminate three per-axis datasets and reconstruct the state.

    ``theta`` is either one mixture reused for every axis or a mapping
    ``{"x": ..., "y": ..., "z": ...}``.  The returned ``b_used`` always
    equals the estimate recomputed from the stored memberships.
    """
    datasets = {"x": dx, "y": dy, "z": dz}
    for axis, dataset in datasets.items():
        if dataset.observable != axis:
            raise ValueError(
                f"dataset for axis {axis!r} is labelled {dataset.observable!r}"
            )
    memberships: dict[str, MembershipMatrix] = {}
    b = np.empty(3)
    delta = np.empty(3)
    for idx, axis in enumerate(AXES):
        theta_axis = theta[axis] if isinstance(theta, Mapping) else theta
        member = memberships_for(datasets[axis], theta_axis, mode)
        memberships[axis] = member
        b[idx], delta[idx] = b_from_memberships(member)
    result = qst_closed_form(BVector(b=b, delta=delta))
    return BilevelResult(qst=result, memberships=memberships, mode=mode)


def tomography_report(
    result: QstResult | BilevelResult,
    reference: Optional[DensityMatrix] = None,
) -> dict:
    """JSON-ready report for a reconstruction.

    Keys: b, delta_b, rho, residual_sq, frobenius_to_ref, solver, mode.
    """
    mode = None
    if isinstance(result, BilevelResult):
        mode = result.mode
        result = result.qst
    return {
        "b": result.b_used.b.tolist(),
        "delta_b": result.b_used.delta.tolist(),
        "rho": result.rho.to_json_dict(),
        "residual_sq": result.residual_sq,
        "frobenius_to_ref": (
            None if reference is None else frobenius_distance(result.rho, reference)
        ),
        "solver": result.solver,
        "mode": mode,
        "iterations": result.iterations,
        "converged": result.converged,
    }
