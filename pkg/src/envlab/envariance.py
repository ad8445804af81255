"""Envariance symmetry machinery and the counting route to outcome
probabilities: envariance testing with explicit undo construction,
envariant swaps, c-shift fine-graining, equal-amplitude counting, and
rational bounding for incommensurate amplitudes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AncillaTooSmall,
    BadIndex,
    LayoutMismatch,
    LengthMismatch,
    MTooSmall,
    NotEqualAmplitude,
    PlanMismatch,
    SideViolation,
    UseBoundsInstead,
)
from .info_measures import trace_distance
from .tensor_core import (
    KERNEL_TOL,
    PureState,
    SchmidtDecomposition,
    SpaceLayout,
    SubsystemUnitary,
    apply_unitary,
    basis_state,
    controlled_shift,
    global_phase_distance,
    partial_trace,
    schmidt_decompose,
    tensor_product,
)

ENVARIANCE_TOL = 1e-10
DEFAULT_M_CAP = 10 ** 4


@dataclass(frozen=True, eq=False)
class EnvarianceVerdict:
    """Outcome of an envariance test.

    A true verdict carries a verified environment-side undo and the
    residual distance (modulo global phase) after restoration; a false
    verdict carries the trace-distance witness of the changed reduced
    system operator.
    """

    envariant: bool
    undo: SubsystemUnitary | None
    residual: float
    witness_trace_distance: float
    reason: str


@dataclass(frozen=True)
class FineGrainingPlan:
    """Counts m_k (Schmidt-descending order) with total M = sum m_k, plus
    the ancilla to attach.  ``system_labels`` fixes the bipartition the
    counts refer to."""

    counts: tuple[int, ...]
    system_labels: tuple[str, ...]
    ancilla_label: str
    ancilla_dimension: int
    tolerance: float = 1e-9

    def __init__(self, counts, system_labels, ancilla_label,
                 ancilla_dimension=None, tolerance=1e-9):
        counts = tuple(int(c) for c in counts)
        if any(c < 1 for c in counts):
            raise PlanMismatch("all fine-graining counts must be >= 1")
        total = sum(counts)
        if ancilla_dimension is None:
            ancilla_dimension = total
        if ancilla_dimension < total:
            raise AncillaTooSmall(
                f"ancilla dimension {ancilla_dimension} < M = {total}"
            )
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "system_labels", tuple(system_labels))
        object.__setattr__(self, "ancilla_label", str(ancilla_label))
        object.__setattr__(self, "ancilla_dimension", int(ancilla_dimension))
        object.__setattr__(self, "tolerance", float(tolerance))

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True, eq=False)
class ProbabilityBound:
    """Elementwise interval [lower, upper] per outcome at denominator M."""

    lower: np.ndarray
    upper: np.ndarray
    m_used: int

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower


# ---------------------------------------------------------------------------
# envariance proper

def schmidt_phase_unitary(sd: SchmidtDecomposition,
                          phases) -> SubsystemUnitary:
    """U = sum_k e^{i phi_k} |s_k><s_k|, identity on the complement."""
    phases = np.asarray(phases, dtype=float).ravel()
    if phases.size != sd.rank:
        raise LengthMismatch(
            f"{phases.size} phases for {sd.rank} Schmidt terms"
        )
    d = sd.left_basis.shape[0]
    u = np.eye(d, dtype=complex)
    for k in range(sd.rank):
        v = sd.left_basis[:, k]
        u += (np.exp(1j * phases[k]) - 1.0) * np.outer(v, v.conj())
    return SubsystemUnitary(sd.left_labels, u)


def _complement_basis(cols: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the columns."""
    if cols.shape[1] == 0:
        return np.eye(dim, dtype=complex)
    full = np.linalg.svd(cols, full_matrices=True)[0]
    return full[:, cols.shape[1]:]


def _environment_undo(before: PureState, after: PureState,
                      system_labels, env_labels) -> SubsystemUnitary:
    """Environment-side unitary X with (I x X)|after> = |before>.

    Valid whenever the reduced system operators of the two states agree;
    built from the singular frames of both states, handling degenerate
    spectra via the block rotation Q = U^+ U'.
    """
    layout = before.layout
    dl = layout.subdim(system_labels)

    def frames(state):
        from .tensor_core import _moved
        arr, _ = _moved(state, system_labels)
        mat = arr.reshape(dl, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        r = int(np.sum(s > KERNEL_TOL))
        return u[:, :r], s[:r], vh[:r, :].conj().T   # V columns: A v = s u

    u0, s0, v0 = frames(before)
    u1, s1, v1 = frames(after)
    de = v0.shape[0]
    q = u1.conj().T @ u0                       # maps after-frame to before-frame
    xt = v1 @ q @ v0.conj().T
    xt += _complement_basis(v1, de) @ _complement_basis(v0, de).conj().T
    return SubsystemUnitary(env_labels, xt.T)


def is_envariant(state: PureState, u: SubsystemUnitary,
                 environment_side) -> EnvarianceVerdict:
    """Decide envariance of ``u`` and construct a verified undo.

    Decision rule: if the reduced operator on the non-environment side
    changes beyond 1e-10 entrywise, no environment action can restore the
    state (verdict false, trace-distance witness recorded).  Otherwise an
    undo is built from the Schmidt frames and verified to restore the
    global state up to global phase.
    """
    env = set(environment_side if not isinstance(environment_side, str)
              else [environment_side])
    state.layout.check_labels(env)
    if set(u.targets) & env:
        raise SideViolation(
            f"unitary targets {u.targets} overlap environment side"
        )
    sys_labels = tuple(l for l in state.layout.labels if l not in env)
    env_labels = tuple(l for l in state.layout.labels if l in env)
    rho_before = partial_trace(state, sys_labels)
    after = apply_unitary(state, u)
    rho_after = partial_trace(after, sys_labels)
    entry_gap = float(np.max(np.abs(rho_before.matrix - rho_after.matrix)))
    witness = trace_distance(rho_before, rho_after)
    if entry_gap > ENVARIANCE_TOL:
        return EnvarianceVerdict(
            False, None, global_phase_distance(state, after), witness,
            "reduced system operator changed",
        )
    undo = _environment_undo(state, after, sys_labels, env_labels)
    restored = apply_unitary(after, undo)
    residual = global_phase_distance(restored, state)
    if residual >= ENVARIANCE_TOL:
        return EnvarianceVerdict(
            False, None, residual, witness,
            "undo construction failed to restore the state",
        )
    return EnvarianceVerdict(True, undo, residual, witness, "undone")


def envariant_swap(state: PureState, k: int, l: int,
                   sd: SchmidtDecomposition):
    """Swap Schmidt terms k and l on the system side; return the swapped
    state together with the environment-side counterswap."""
    if not (0 <= k < sd.rank and 0 <= l < sd.rank):
        raise BadIndex(f"indices ({k}, {l}) outside rank {sd.rank}")

    def swap_matrix(basis, dim):
        a, b = basis[:, k], basis[:, l]
        m = np.eye(dim, dtype=complex)
        m += np.outer(a, b.conj()) + np.outer(b, a.conj())
        m -= np.outer(a, a.conj()) + np.outer(b, b.conj())
        return m

    s_swap = SubsystemUnitary(
        sd.left_labels, swap_matrix(sd.left_basis, sd.left_basis.shape[0])
    )
    counter = SubsystemUnitary(
        sd.right_labels, swap_matrix(sd.right_basis, sd.right_basis.shape[0])
    )
    return apply_unitary(state, s_swap), counter


# ---------------------------------------------------------------------------
# counting probabilities

def equal_amplitude_probabilities(state: PureState, system) -> np.ndarray:
    """p_k = 1/N per Schmidt term; requires all coefficients equal."""
    sd = schmidt_decompose(state, system)
    coeffs = sd.coefficients[: sd.rank]
    if coeffs.size == 0:
        raise NotEqualAmplitude("state has no Schmidt terms")
    if coeffs.max() - coeffs.min() > ENVARIANCE_TOL:
        raise NotEqualAmplitude(
            f"coefficients range over [{coeffs.min()}, {coeffs.max()}]"
        )
    n = coeffs.size
    return np.full(n, 1.0 / n)


def subset_probability(state: PureState, system, indices) -> float:
    """Additive probability n/N of a subset of equal-amplitude outcomes."""
    p = equal_amplitude_probabilities(state, system)
    n = p.size
    chosen = set(int(i) for i in indices)
    if any(i < 0 or i >= n for i in chosen):
        raise BadIndex(f"subset {sorted(chosen)} outside range({n})")
    return len(chosen) / n


def fine_grain(state: PureState, plan: FineGrainingPlan) -> PureState:
    """c-shift fine-graining into M equal-amplitude triple-product terms.

    The environment factor is rotated so each Schmidt partner becomes the
    uniform superposition over a consecutive m_k-sized block of basis
    states (the Fourier-Hadamard frame), a fresh ancilla is attached in
    its ready state, and a c-shift copies the block index onto it.  Both
    steps act only on the environment side, so the reduced operator on
    the system is untouched.
    """
    sys_labels = state.layout.ordered(plan.system_labels)
    env_labels = tuple(l for l in state.layout.labels
                       if l not in set(sys_labels))
    if plan.ancilla_label in state.layout.labels:
        raise PlanMismatch(f"ancilla label {plan.ancilla_label!r} already used")
    sd = schmidt_decompose(state, sys_labels)
    probs = sd.coefficients[: sd.rank] ** 2
    m = plan.total
    if len(plan.counts) != probs.size:
        raise PlanMismatch(
            f"{len(plan.counts)} counts for {probs.size} Schmidt terms"
        )
    target = np.asarray(plan.counts, dtype=float) / m
    if np.max(np.abs(probs - target)) > plan.tolerance:
        raise PlanMismatch(
            "squared coefficients do not match counts within tolerance"
        )
    de = state.layout.subdim(env_labels)
    if de < m:
        raise PlanMismatch(
            f"environment dimension {de} lacks room for M = {m} record states"
        )
    # block frame: Schmidt partner k -> uniform superposition over its block
    frame = np.zeros((de, probs.size), dtype=complex)
    offset = 0
    for k, mk in enumerate(plan.counts):
        frame[offset:offset + mk, k] = 1.0 / math.sqrt(mk)
        offset += mk
    eps = sd.right_basis[:, : sd.rank]
    w = frame @ eps.conj().T
    w += _complement_basis(frame, de) @ _complement_basis(eps, de).conj().T
    rotated = apply_unitary(state, SubsystemUnitary(env_labels, w))
    ancilla = basis_state(
        SpaceLayout([(plan.ancilla_label, plan.ancilla_dimension)]), [0]
    )
    joined = tensor_product(rotated, ancilla)
    return controlled_shift(joined, list(env_labels), plan.ancilla_label)


def find_commensurate_denominator(probs, tolerance: float,
                                  m_cap: int = DEFAULT_M_CAP):
    """Smallest M <= m_cap with all probs within tolerance of m_k / M and
    each m_k >= 1; returns (M, counts) or raises UseBoundsInstead."""
    probs = np.asarray(probs, dtype=float).ravel()
    n = probs.size
    for m in range(n, m_cap + 1):
        counts = np.rint(probs * m).astype(int)
        if counts.min() < 1 or counts.sum() != m:
            continue
        if np.max(np.abs(probs - counts / m)) <= tolerance:
            return m, tuple(int(c) for c in counts)
    raise UseBoundsInstead(
        f"no denominator <= {m_cap} approximates the spectrum within "
        f"{tolerance}"
    )


def born_probabilities(state: PureState, system, tolerance: float = 1e-10,
                       m_cap: int = DEFAULT_M_CAP,
                       ancilla_label: str = "_anc") -> np.ndarray:
    """Outcome probabilities by fine-graining and counting equal terms.

    Returns p_k = m_k / M per Schmidt term, ordered by each system
    Schmidt vector's first significant basis index (so pointer-basis
    states come back in pointer order).  Agreement with the squared
    coefficients within tolerance + 1/M is asserted.
    """
    sys_labels = state.layout.ordered(system)
    sd = schmidt_decompose(state, sys_labels)
    probs = sd.coefficients[: sd.rank] ** 2
    m, counts = find_commensurate_denominator(probs, tolerance, m_cap)
    plan = FineGrainingPlan(counts, sys_labels, ancilla_label,
                            ancilla_dimension=m, tolerance=tolerance + 0.5 / m)
    fine = fine_grain(state, plan)
    env_labels = tuple(l for l in state.layout.labels
                       if l not in set(sys_labels))
    per_term = equal_amplitude_probabilities(
        fine, tuple(sys_labels) + env_labels
    )
    if per_term.size != m:
        raise PlanMismatch(
            f"fine-grained state has {per_term.size} terms, expected {m}"
        )
    # aggregate the M equal counting weights blockwise per original outcome
    agg = np.zeros(probs.size)
    offset = 0
    for k, mk in enumerate(counts):
        agg[k] = per_term[offset:offset + mk].sum()
        offset += mk
    gap = np.max(np.abs(agg - probs))
    if gap > tolerance + 1.0 / m:
        raise PlanMismatch(
            f"counting probabilities deviate by {gap} from the spectrum"
        )
    order = _pointer_order(sd)
    return agg[order]


def _pointer_order(sd: SchmidtDecomposition) -> np.ndarray:
    """Schmidt-term order keyed by the system vectors' leading basis index."""
    firsts = []
    for k in range(sd.rank):
        nz = np.flatnonzero(np.abs(sd.left_basis[:, k]) > 1e-9)
        firsts.append(nz[0] if nz.size else sd.left_basis.shape[0])
    return np.argsort(np.asarray(firsts), kind="stable")


def schmidt_probabilities(state: PureState, system) -> np.ndarray:
    """Squared Schmidt coefficients in the same order born_probabilities
    uses (the amplitude-squared side of the comparison)."""
    sd = schmidt_decompose(state, state.layout.ordered(system))
    probs = sd.coefficients[: sd.rank] ** 2
    return probs[_pointer_order(sd)]


def rational_bounds(state: PureState, system, m: int) -> ProbabilityBound:
    """Bracketing intervals [floor(pM)/M, ceil(pM)/M] per outcome.

    Each endpoint corresponds to an explicit commensurate comparison
    state (built and checked here), so the bounding sequence is realized
    rather than merely asserted; widths never exceed 2/M.
    """
    sys_labels = state.layout.ordered(system)
    sd = schmidt_decompose(state, sys_labels)
    probs = sd.coefficients[: sd.rank] ** 2
    n = probs.size
    if m < n:
        raise MTooSmall(f"M = {m} below the number of outcomes {n}")
    scaled = probs * m
    lower_counts = np.floor(scaled + 1e-9).astype(int)
    upper_counts = np.ceil(scaled - 1e-9).astype(int)
    for k in range(n):
        _comparison_state(_endpoint_counts(lower_counts[k], k, probs, m), m)
        _comparison_state(_endpoint_counts(upper_counts[k], k, probs, m), m)
    order = _pointer_order(sd)
    return ProbabilityBound(
        lower=(lower_counts / m)[order],
        upper=(upper_counts / m)[order],
        m_used=m,
    )


def _endpoint_counts(pinned: int, k: int, probs: np.ndarray,
                     m: int) -> np.ndarray:
    """Commensurate count vector with outcome k pinned, remainder spread
    over the other outcomes by largest remainder."""
    n = probs.size
    counts = np.zeros(n, dtype=int)
    counts[k] = pinned
    rest = m - pinned
    others = [i for i in range(n) if i != k]
    if not others:
        return counts
    weights = probs[others]
    total = weights.sum()
    shares = weights / total * rest if total > 0 else \
        np.full(len(others), rest / len(others))
    base = np.floor(shares).astype(int)
    leftover = rest - base.sum()
    frac_order = np.argsort(-(shares - base), kind="stable")
    for i in range(int(leftover)):
        base[frac_order[i % len(others)]] += 1
    counts[others] = base
    return counts


def _comparison_state(counts: np.ndarray, m: int) -> PureState:
    """Bipartite state with exactly the rational spectrum counts/m."""
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    amps = np.zeros((n, m), dtype=complex)
    for k in range(n):
        if counts[k] > 0:
            amps[k, k] = math.sqrt(counts[k] / m)
    layout = SpaceLayout([("_cmpS", n), ("_cmpE", m)])
    state = PureState(layout, amps.ravel())
    spec = np.sort(np.linalg.svd(amps, compute_uv=False))[::-1] ** 2
    want = np.sort(counts / m)[::-1][: spec.size]
    if np.max(np.abs(spec[: want.size] - want)) > 1e-12:
        raise PlanMismatch("comparison state spectrum mismatch")
    return state


# ---------------------------------------------------------------------------
# no envariance without entanglement

def phase_sensitivity_witness(psi: PureState, psi_prime: PureState):
    """(interference gap, post-entanglement reduced-operator gap).

    The first number is the largest expectation gap over the pairwise
    X/Y interference observables (Hadamard-type eigenbases); the second
    is the trace distance between the reduced operators after each state
    is entangled with a fresh record environment.
    """
    if psi.layout != psi_prime.layout:
        raise LayoutMismatch("states live on different layouts")
    if len(psi.layout.labels) != 1:
        raise LayoutMismatch("witness defined for single-subsystem states")
    label = psi.layout.labels[0]
    d = psi.layout.dims[0]
    a, b = psi.amplitudes, psi_prime.amplitudes
    gap = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            zx = np.conj(a[i]) * a[j] - np.conj(b[i]) * b[j]
            gap = max(gap, abs(2.0 * zx.real), abs(2.0 * zx.imag))

    rec = f"{label}_rec"
    rec_layout = SpaceLayout([(rec, d)])

    def reduced(state):
        joined = tensor_product(state, basis_state(rec_layout, [0]))
        entangled = controlled_shift(joined, label, rec)
        return partial_trace(entangled, [label])

    post_gap = trace_distance(reduced(psi), reduced(psi_prime))
    return float(gap), float(post_gap)
