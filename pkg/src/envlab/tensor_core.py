"""Dense multi-partite pure states and reduced density operators.

Index convention: the leftmost label of a layout is the slowest-varying
index of the flat amplitude vector (row-major / C order), so a state over
labels (S, A) of dimensions (2, 3) stores amplitude ``a[i*3 + j]`` for the
basis ket ``|i>_S |j>_A``.  This convention is frozen; serialized states
rely on it.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BadBasis,
    EmptyKeepSet,
    InvalidBipartition,
    InvalidDensity,
    LabelCollision,
    LayoutMismatch,
    NotNormalized,
    NotUnitary,
    SpaceTooLarge,
    UnknownLabel,
)

DEFAULT_DIM_GUARD = 2 ** 20

STATE_TOL = 1e-10     # state / operator level comparisons
KERNEL_TOL = 1e-12    # kernel-level algebra


def dimension_guard() -> int:
    """Total-dimension guard, overridable via ENVLAB_DIM_GUARD."""
    raw = os.environ.get("ENVLAB_DIM_GUARD")
    return int(raw) if raw else DEFAULT_DIM_GUARD


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered list of (label, dimension) pairs defining a tensor space."""

    subsystems: tuple[tuple[str, int], ...]

    def __init__(self, subsystems):
        object.__setattr__(
            self, "subsystems", tuple((str(l), int(d)) for l, d in subsystems)
        )
        seen = set()
        for label, dim in self.subsystems:
            if not label:
                raise LabelCollision("empty subsystem label")
            if label in seen:
                raise LabelCollision(f"duplicate label {label!r}")
            seen.add(label)
            if dim < 1:
                raise ValueError(f"dimension of {label!r} must be >= 1")
        if self.total_dimension > dimension_guard():
            raise SpaceTooLarge(
                f"total dimension {self.total_dimension} exceeds guard "
                f"{dimension_guard()}"
            )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.subsystems)

    @property
    def total_dimension(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.subsystems else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"label {label!r} not in layout {self.labels}")

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def check_labels(self, labels) -> None:
        for l in labels:
            self.index(l)

    def ordered(self, labels) -> tuple[str, ...]:
        """The given labels sorted into layout order."""
        want = set(labels)
        for l in want:
            self.index(l)
        return tuple(l for l in self.labels if l in want)

    def restrict(self, labels) -> "SpaceLayout":
        keep = self.ordered(labels)
        return SpaceLayout([(l, self.dim(l)) for l in keep])

    def subdim(self, labels) -> int:
        return int(np.prod([self.dim(l) for l in labels], dtype=np.int64)) \
            if labels else 1


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over an ordered set of subsystems."""

    layout: SpaceLayout
    amplitudes: np.ndarray

    def __init__(self, layout: SpaceLayout, amplitudes):
        amps = _freeze(np.asarray(amplitudes).ravel())
        if amps.size != layout.total_dimension:
            raise ValueError(
                f"amplitude length {amps.size} != total dimension "
                f"{layout.total_dimension}"
            )
        nrm = np.linalg.norm(amps)
        if abs(nrm - 1.0) > STATE_TOL:
            raise NotNormalized(f"norm {nrm} differs from 1 beyond {STATE_TOL}")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "amplitudes", amps)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per subsystem (layout order)."""
        return self.amplitudes.reshape(self.layout.dims or (1,))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, PSD, trace-one matrix over the retained subsystems."""

    layout: SpaceLayout
    matrix: np.ndarray

    def __init__(self, layout: SpaceLayout, matrix, validate: bool = True):
        mat = _freeze(np.asarray(matrix))
        d = layout.total_dimension
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} != ({d}, {d})")
        if validate:
            if np.max(np.abs(mat - mat.conj().T)) > STATE_TOL:
                raise InvalidDensity("matrix not Hermitian within tolerance")
            tr = np.trace(mat)
            if abs(tr - 1.0) > STATE_TOL:
                raise InvalidDensity(f"trace {tr} differs from 1")
            if np.linalg.eigvalsh(mat).min() < -STATE_TOL:
                raise InvalidDensity("negative eigenvalue beyond tolerance")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", mat)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """Coefficients and paired orthonormal bases for a bipartition.

    ``left_basis`` columns are phase-fixed so each vector's first
    significant amplitude is real positive; ``right_basis`` columns carry
    the compensating phases so that
    ``sum_k c_k left[:,k] x right[:,k]`` reconstructs the state exactly.
    """

    left_labels: tuple[str, ...]
    right_labels: tuple[str, ...]
    coefficients: np.ndarray     # non-negative, descending
    left_basis: np.ndarray       # columns = left Schmidt vectors
    right_basis: np.ndarray      # columns = right Schmidt vectors

    @property
    def rank(self) -> int:
        return int(np.sum(self.coefficients > KERNEL_TOL))


@dataclass(frozen=True, eq=False)
class SubsystemUnitary:
    """Unitary matrix acting on a named, ordered subset of subsystems."""

    targets: tuple[str, ...]
    matrix: np.ndarray

    def __init__(self, targets, matrix):
        mat = _freeze(np.asarray(matrix))
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise NotUnitary(f"matrix shape {mat.shape} is not square")
        if np.max(np.abs(mat @ mat.conj().T - np.eye(mat.shape[0]))) > STATE_TOL:
            raise NotUnitary("U U+ differs from identity beyond tolerance")
        object.__setattr__(self, "targets", tuple(targets))
        object.__setattr__(self, "matrix", mat)


# ---------------------------------------------------------------------------
# construction helpers

def basis_state(layout: SpaceLayout, indices) -> PureState:
    """Computational basis ket.  ``indices`` is one int per subsystem."""
    indices = [int(i) for i in np.atleast_1d(indices)]
    if len(indices) != len(layout.dims):
        raise ValueError("one index per subsystem required")
    flat = 0
    for i, d in zip(indices, layout.dims):
        if not 0 <= i < d:
            raise ValueError(f"index {i} out of range for dimension {d}")
        flat = flat * d + i
    amps = np.zeros(layout.total_dimension, dtype=complex)
    amps[flat] = 1.0
    return PureState(layout, amps)


def single_state(label: str, amplitudes) -> PureState:
    """One-subsystem state from a raw amplitude vector (normalized check)."""
    amps = np.asarray(amplitudes, dtype=complex).ravel()
    return PureState(SpaceLayout([(label, amps.size)]), amps)


# ---------------------------------------------------------------------------
# operations

def tensor_product(a: PureState, b: PureState) -> PureState:
    """Kronecker product of two states on disjoint label sets."""
    overlap = set(a.layout.labels) & set(b.layout.labels)
    if overlap:
        raise LabelCollision(f"labels {sorted(overlap)} appear on both sides")
    layout = SpaceLayout(list(a.layout.subsystems) + list(b.layout.subsystems))
    return PureState(layout, np.kron(a.amplitudes, b.amplitudes))


def _moved(state: PureState, front_labels) -> tuple[np.ndarray, list[int]]:
    """State tensor with the given labels moved to the leading axes."""
    idx = [state.layout.index(l) for l in front_labels]
    rest = [i for i in range(len(state.layout.dims)) if i not in idx]
    perm = idx + rest
    return state.tensor().transpose(perm), perm


def apply_unitary(state: PureState, u: SubsystemUnitary) -> PureState:
    """Apply ``u`` embedded on its target subsystems: (I x U x I)|psi>."""
    dt = state.layout.subdim(u.targets)
    if u.matrix.shape[0] != dt:
        raise ValueError(
            f"unitary dimension {u.matrix.shape[0]} != target dimension {dt}"
        )
    arr, perm = _moved(state, u.targets)
    shape = arr.shape
    out = (u.matrix @ arr.reshape(dt, -1)).reshape(shape)
    inv = np.argsort(perm)
    out = out.transpose(inv)
    return PureState(state.layout, out.ravel())


def controlled_shift(state: PureState, controls, target: str) -> PureState:
    """c-shift |k>|j> -> |k>|j + k mod d_target>.

    ``controls`` may be one label or an ordered list; the combined control
    index is read out in the usual row-major convention.  Implemented as an
    index permutation, so large control/target dimensions stay cheap.
    """
    if isinstance(controls, str):
        controls = [controls]
    controls = list(controls)
    if target in controls:
        raise LabelCollision("target coincides with a control")
    dt = state.layout.dim(target)
    arr, perm = _moved(state, controls + [target])
    dc = state.layout.subdim(controls)
    work = arr.reshape(dc, dt, -1).copy()
    for k in range(dc):
        work[k] = np.roll(work[k], k % dt, axis=0)
    out = work.reshape(arr.shape).transpose(np.argsort(perm))
    return PureState(state.layout, out.ravel())


def partial_trace(state, keep) -> DensityOperator:
    """Trace out everything except the ``keep`` labels."""
    if isinstance(keep, str):
        keep = [keep]
    keep = list(keep)
    if not keep:
        raise EmptyKeepSet("keep set must be non-empty")
    layout = state.layout
    keep_ordered = layout.ordered(keep)
    if isinstance(state, PureState):
        if len(keep_ordered) == len(layout.labels):
            v = state.amplitudes
            return DensityOperator(layout, np.outer(v, v.conj()))
        arr, _ = _moved(state, keep_ordered)
        dk = layout.subdim(keep_ordered)
        mat = arr.reshape(dk, -1)
        rho = mat @ mat.conj().T
        return DensityOperator(layout.restrict(keep_ordered), rho)
    if isinstance(state, DensityOperator):
        n = len(layout.dims)
        keep_idx = [layout.index(l) for l in keep_ordered]
        drop_idx = [i for i in range(n) if i not in keep_idx]
        t = state.matrix.reshape(layout.dims + layout.dims)
        m = n
        for i in sorted(drop_idx, reverse=True):
            t = np.trace(t, axis1=i, axis2=i + m)
            m -= 1
        dk = layout.subdim(keep_ordered)
        return DensityOperator(layout.restrict(keep_ordered),
                               t.reshape(dk, dk))
    raise TypeError(f"unsupported input type {type(state)!r}")


def _phase_fix(columns: np.ndarray, tol: float = KERNEL_TOL) -> np.ndarray:
    """Per-column phases making the first significant entry real positive."""
    phases = np.ones(columns.shape[1], dtype=complex)
    for k in range(columns.shape[1]):
        nz = np.flatnonzero(np.abs(columns[:, k]) > tol)
        if nz.size:
            z = columns[nz[0], k]
            phases[k] = z / abs(z)
    return phases


def schmidt_decompose(state: PureState, left) -> SchmidtDecomposition:
    """Schmidt decomposition across the (left, complement) bipartition."""
    if isinstance(left, str):
        left = [left]
    left_ordered = state.layout.ordered(left)
    right_ordered = tuple(l for l in state.layout.labels
                          if l not in set(left_ordered))
    if not left_ordered or not right_ordered:
        raise InvalidBipartition("both sides of the bipartition must be non-empty")
    dl = state.layout.subdim(left_ordered)
    arr, _ = _moved(state, left_ordered)
    mat = arr.reshape(dl, -1)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    # tie-break numerically degenerate coefficients deterministically
    order = _degenerate_order(s, u)
    u, s, vh = u[:, order], s[order], vh[order, :]
    phases = _phase_fix(u)
    u = u / phases[np.newaxis, :]
    right = vh.T * phases[np.newaxis, :]   # columns are right kets
    coeffs = np.asarray(s, dtype=float)
    coeffs.flags.writeable = False
    return SchmidtDecomposition(left_ordered, right_ordered,
                                coeffs, _freeze(u), _freeze(right))


def _degenerate_order(s: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Stable order: descending coefficient, ties by first nonzero row."""
    firsts = []
    for k in range(u.shape[1]):
        nz = np.flatnonzero(np.abs(u[:, k]) > KERNEL_TOL)
        firsts.append(nz[0] if nz.size else u.shape[0])
    keys = list(zip(-np.round(s / KERNEL_TOL) * KERNEL_TOL, firsts))
    return np.array(sorted(range(len(s)), key=lambda i: keys[i]), dtype=int)


def schmidt_reconstruct(sd: SchmidtDecomposition,
                        layout: SpaceLayout) -> PureState:
    """Rebuild the state from a decomposition (for round-trip checks)."""
    mat = (sd.left_basis * sd.coefficients[np.newaxis, :]) @ sd.right_basis.T
    dims_front = [layout.dim(l) for l in sd.left_labels] + \
                 [layout.dim(l) for l in sd.right_labels]
    arr = mat.reshape(dims_front)
    perm = [list(sd.left_labels + sd.right_labels).index(l)
            for l in layout.labels]
    return PureState(layout, arr.transpose(perm).ravel())


def relative_states(state: PureState, left, basis):
    """Expand |psi> = sum_k b_k |basis_k>|partner_k> over a left basis.

    Returns a list of ``(coefficient, partner)`` pairs; the partner is a
    normalized PureState on the complement, or None when the coefficient
    magnitude falls below 1e-12 (flagged zero rather than normalized).
    """
    if isinstance(left, str):
        left = [left]
    left_ordered = state.layout.ordered(left)
    right_ordered = tuple(l for l in state.layout.labels
                          if l not in set(left_ordered))
    if not right_ordered:
        raise InvalidBipartition("left side covers the whole layout")
    dl = state.layout.subdim(left_ordered)
    bmat = np.asarray([np.asarray(b, dtype=complex).ravel() for b in basis])
    if bmat.shape != (dl, dl):
        raise BadBasis(f"need {dl} vectors of dimension {dl}")
    gram = bmat.conj() @ bmat.T
    if np.max(np.abs(gram - np.eye(dl))) > STATE_TOL:
        raise BadBasis("vectors are not orthonormal within tolerance")
    arr, _ = _moved(state, left_ordered)
    mat = arr.reshape(dl, -1)
    right_layout = state.layout.restrict(right_ordered)
    out = []
    for b in bmat:
        w = b.conj() @ mat
        c = np.linalg.norm(w)
        if c < KERNEL_TOL:
            out.append((0j, None))
            continue
        unit = w / c
        ph = _phase_fix(unit[:, np.newaxis])[0]
        out.append((c * ph, PureState(right_layout, unit / ph)))
    return out


def global_phase_distance(a: PureState, b: PureState) -> float:
    """min over theta of ||a - e^{i theta} b||.

    The minimizing phase is that of <b|a>; the norm is then evaluated
    elementwise, which stays accurate near zero where the equivalent
    sqrt(2 - 2|<a|b>|) formula loses half the significant digits.
    """
    if a.layout != b.layout:
        raise LayoutMismatch(f"{a.layout.labels} vs {b.layout.labels}")
    ov = np.vdot(b.amplitudes, a.amplitudes)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(a.amplitudes - phase * b.amplitudes))


def states_equal_up_to_global_phase(a: PureState, b: PureState,
                                    tol: float = STATE_TOL) -> bool:
    """True iff min_theta ||a - e^{i theta} b|| <= tol."""
    return global_phase_distance(a, b) <= tol


# ---------------------------------------------------------------------------
# serialization (shared state file format)

def state_to_dict(state: PureState) -> dict:
    return {
        "layout": [{"label": l, "dim": d} for l, d in state.layout.subsystems],
        "amplitudes": [[float(z.real), float(z.imag)]
                       for z in state.amplitudes],
    }


def state_from_dict(doc: dict) -> PureState:
    layout = SpaceLayout([(e["label"], e["dim"]) for e in doc["layout"]])
    amps = np.array([complex(re, im) for re, im in doc["amplitudes"]])
    return PureState(layout, amps)


def save_state(state: PureState, path) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_dict(state), fh)


def load_state(path) -> PureState:
    with open(path) as fh:
        return state_from_dict(json.load(fh))
