"""Port-Hamiltonian plants: dynamics, outputs, and power bookkeeping.

A plant is an energy function H(x) together with three state-dependent
coefficient maps: a skew-symmetric interconnection matrix J(x), a symmetric
positive semi-definite dissipation matrix R(x), and an input map g(x).  The
motion and the port output are

    x_dot = (J(x) - R(x)) grad_H(x) + g(x) u
    y     = g(x)^T grad_H(x)

so the stored energy can only change through the port power y.u minus a
nonnegative dissipated power; the plant is passive with H as storage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MatrixMap = Callable[[np.ndarray], np.ndarray]


class DimensionError(ValueError):
    """State, input, or plant-map shapes do not line up."""


class NumericError(RuntimeError):
    """A plant map produced a non-finite value."""


class StructureError(RuntimeError):
    """A structural invariant (skew J, PSD R, H >= 0, gradient consistency) failed."""


def finite_difference_gradient(fn: Callable[[np.ndarray], float],
                               x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an n-vector."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        e = np.zeros(x.shape[0])
        e[i] = step
        grad[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return grad


@dataclass
class PhPlant:
    """Explicit port-Hamiltonian plant with callable coefficient maps.

    Parameters
    ----------
    n, m : state and input dimensions.
    hamiltonian : x -> stored energy (J), nonnegative on reachable states.
    structure_map : x -> (n, n) skew-symmetric matrix.
    dissipation_map : x -> (n, n) symmetric PSD matrix.
    input_map : x -> (n, m) matrix.
    grad_hamiltonian : x -> n-vector.  When omitted, a central
        finite-difference fallback (step 1e-6) is installed and the plant is
        flagged so downstream reports can mention it.
    check_stride : the simulator re-verifies the J/R structure on the first
        step and every check_stride-th step thereafter.
    """

    n: int
    m: int
    hamiltonian: Callable[[np.ndarray], float]
    structure_map: MatrixMap
    dissipation_map: MatrixMap
    input_map: MatrixMap
    grad_hamiltonian: Callable[[np.ndarray], np.ndarray] | None = None
    check_stride: int = 100
    uses_fd_gradient: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise DimensionError(f"plant dimensions must be positive, got n={self.n}, m={self.m}")
        if self.check_stride < 1:
            raise ValueError(f"check_stride must be >= 1, got {self.check_stride}")
        if self.grad_hamiltonian is None:
            ham = self.hamiltonian
            self.grad_hamiltonian = lambda x: finite_difference_gradient(ham, x)
            self.uses_fd_gradient = True


@dataclass(frozen=True)
class PortSample:
    """One sample of a power port: input u, collocated output y, power y.u."""

    u: np.ndarray
    y: np.ndarray
    power: float

    @classmethod
    def from_port(cls, u, y) -> "PortSample":
        u = np.asarray(u, dtype=float)
        y = np.asarray(y, dtype=float)
        if u.shape != y.shape:
            raise DimensionError(f"port variables must share a shape, got {u.shape} and {y.shape}")
        return cls(u=u, y=y, power=float(y @ u))


def as_vector(v, size: int, what: str) -> np.ndarray:
    """Coerce to a 1-D float vector of the given size or raise DimensionError."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape != (size,):
        raise DimensionError(f"{what} must be a vector of length {size}, got shape {arr.shape}")
    return arr


def eval_maps(plant: PhPlant, x: np.ndarray, check: bool = True):
    """Evaluate grad_H, J, R and g at one state.

    Shared by every operation so each map is evaluated exactly once per state.
    With check=True (all public operations) shapes and finiteness are
    verified; the simulator's inner loop passes check=False and relies on its
    per-step acceptance gate plus the periodically sampled structure check.
    """
    n, m = plant.n, plant.m
    grad = np.asarray(plant.grad_hamiltonian(x), dtype=float)
    J = np.asarray(plant.structure_map(x), dtype=float)
    R = np.asarray(plant.dissipation_map(x), dtype=float)
    g = np.asarray(plant.input_map(x), dtype=float)
    if check:
        for arr, shape, name in ((grad, (n,), "grad_hamiltonian"),
                                 (J, (n, n), "structure_map"),
                                 (R, (n, n), "dissipation_map"),
                                 (g, (n, m), "input_map")):
            if arr.shape != shape:
                raise DimensionError(f"{name} returned shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise NumericError(f"{name} returned non-finite values at x={x!r}")
    return grad, J, R, g


def eval_dynamics(plant: PhPlant, x, u) -> np.ndarray:
    """State derivative (J(x) - R(x)) grad_H(x) + g(x) u."""
    x = as_vector(x, plant.n, "state")
    u = as_vector(u, plant.m, "input")
    grad, J, R, g = eval_maps(plant, x)
    return (J - R) @ grad + g @ u


def eval_output(plant: PhPlant, x) -> np.ndarray:
    """Port output g(x)^T grad_H(x)."""
    x = as_vector(x, plant.n, "state")
    grad, _, _, g = eval_maps(plant, x)
    return g.T @ grad


def power_balance(plant: PhPlant, x, u) -> tuple[float, float]:
    """Instantaneous energy rate and dissipation rate at (x, u).

    Returns (h_dot, dissipation_rate) with

        dissipation_rate = grad_H . R grad_H  >= 0
        h_dot            = -dissipation_rate + y.u

    so h_dot <= y.u always.  A dissipation rate below -1e-12 means R is not
    PSD and raises StructureError.
    """
    x = as_vector(x, plant.n, "state")
    u = as_vector(u, plant.m, "input")
    grad, _, R, g = eval_maps(plant, x)
    diss = float(grad @ (R @ grad))
    if diss < -1e-12:
        raise StructureError(f"negative dissipation rate {diss:.3e}: R(x) is not PSD at x={x!r}")
    if diss < 0.0:
        diss = 0.0
    y = g.T @ grad
    return -diss + float(y @ u), diss


def dirac_apply(plant: PhPlant, x, effort, u_r, u) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply the skew-symmetric block relation tying all port variables together.

    Rows: state flow, dissipative-port output, negated plant output:

        x_dot = J(x) effort - u_r + g(x) u
        y_r   = effort
        y_neg = -g(x)^T effort

    The pairing effort.x_dot + y_r.u_r - y.u (with y = -y_neg) vanishes
    identically by skew-symmetry.  Closing the dissipative port with
    u_r = R(x) y_r recovers eval_dynamics.
    """
    x = as_vector(x, plant.n, "state")
    effort = as_vector(effort, plant.n, "effort")
    u_r = as_vector(u_r, plant.n, "dissipative input")
    u = as_vector(u, plant.m, "input")
    _, J, _, g = eval_maps(plant, x)
    x_dot = J @ effort - u_r + g @ u
    y_r = effort.copy()
    y_neg = -(g.T @ effort)
    return x_dot, y_r, y_neg


def check_structure(plant: PhPlant, x, *, skew_tol: float = 1e-12, psd_tol: float = 1e-10) -> None:
    """Verify the structural invariants of the plant maps at one state.

    J must be skew-symmetric to skew_tol, R symmetric with eigenvalues above
    -psd_tol, and the stored energy nonnegative.  Raises StructureError.
    """
    x = as_vector(x, plant.n, "state")
    _, J, R, _ = eval_maps(plant, x)
    skew_defect = float(np.abs(J + J.T).max())
    if skew_defect > skew_tol:
        raise StructureError(f"structure_map is not skew-symmetric: max|J + J^T| = {skew_defect:.3e}")
    sym_defect = float(np.abs(R - R.T).max())
    if sym_defect > psd_tol:
        raise StructureError(f"dissipation_map is not symmetric: max|R - R^T| = {sym_defect:.3e}")
    min_eig = float(np.linalg.eigvalsh(0.5 * (R + R.T)).min())
    if min_eig < -psd_tol:
        raise StructureError(f"dissipation_map is not PSD: min eigenvalue = {min_eig:.3e}")
    h = float(plant.hamiltonian(x))
    if h < -1e-12:
        raise StructureError(f"hamiltonian is negative at x={x!r}: H = {h:.3e}")


def check_gradient(plant: PhPlant, x, *, step: float = 1e-6, rtol: float = 1e-6) -> float:
    """Compare the supplied gradient against central finite differences.

    Returns the worst componentwise error relative to max(1, |grad|) and
    raises StructureError when it exceeds rtol.
    """
    x = as_vector(x, plant.n, "state")
    grad = np.asarray(plant.grad_hamiltonian(x), dtype=float)
    fd = finite_difference_gradient(plant.hamiltonian, x, step)
    scale = max(1.0, float(np.abs(grad).max()))
    err = float(np.abs(grad - fd).max()) / scale
    if err > rtol:
        raise StructureError(f"grad_hamiltonian disagrees with finite differences: rel err {err:.3e}")
    return err
