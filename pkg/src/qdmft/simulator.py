"""Exact statevector circuit simulation with optional shot sampling and SPAM noise.

States are dense complex vectors of length 2^n; qubit 0 is the most
significant bit of the basis index and basis value 0 means sigma^z = +1
(empty orbital).  Sampling is driven by a counter-based Philox generator
keyed per (seed, stream) so that independently sampled terms are
reproducible regardless of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .pauli import PauliSum

NORM_TOL = 1e-10

_SQ = 1.0 / math.sqrt(2.0)
_H_MATRIX = np.array([[_SQ, _SQ], [_SQ, -_SQ]], dtype=complex)
# Maps the Y eigenbasis onto the Z basis: first S-dagger, then H,
# i.e. the matrix H @ diag(1, -i) = [[1, -i], [1, i]] / sqrt(2).
_Y_BASIS_MATRIX = _H_MATRIX @ np.diag([1.0, -1j])


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one (seed, stream) pair."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream & 0xFFFFFFFFFFFFFFFF)])
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, stream: int) -> int:
    """Deterministic child seed for a named sub-stream."""
    return int(rng_stream(seed, stream).integers(0, 2**63 - 1))


@dataclass(frozen=True)
class Gate:
    kind: str  # "ry" | "rx" | "rz" | "x" | "y" | "z" | "h" | "cx"
    qubits: tuple[int, ...]
    angle: float | str | None = None

    def __post_init__(self):
        if self.kind in ("ry", "rx", "rz"):
            if self.angle is None:
                raise ValueError(f"{self.kind} gate needs an angle")
        elif self.kind == "cx":
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ValueError("cx needs two distinct qubits")
        elif self.kind in ("x", "y", "z", "h"):
            if self.angle is not None:
                raise ValueError(f"{self.kind} gate takes no angle")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")

    @property
    def is_bound(self) -> bool:
        return not isinstance(self.angle, str)

    def inverse(self) -> "Gate":
        if self.kind in ("ry", "rx", "rz"):
            if not self.is_bound:
                raise ValueError("cannot invert an unbound parametric gate")
            return Gate(self.kind, self.qubits, -self.angle)
        return self  # x, y, z, h, cx are involutions


def _rotation_matrix(kind: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    if kind == "ry":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "rx":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    # rz
    return np.array([[c - 1j * s, 0.0], [0.0, c + 1j * s]], dtype=complex)


_FIXED_MATRICES = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "h": _H_MATRIX,
}


def gate_matrix(gate: Gate) -> np.ndarray:
    """Dense single-qubit matrix of a non-entangling gate."""
    if gate.kind == "cx":
        raise ValueError("cx has no single-qubit matrix")
    if gate.kind in _FIXED_MATRICES:
        return _FIXED_MATRICES[gate.kind]
    if not gate.is_bound:
        raise ValueError(f"unbound parameter {gate.angle!r}")
    return _rotation_matrix(gate.kind, float(gate.angle))


class Circuit:
    """Ordered gate list on a fixed register; append methods return self."""

    __slots__ = ("n_qubits", "gates")

    def __init__(self, n_qubits: int, gates=()):
        if n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        self.n_qubits = n_qubits
        self.gates: list[Gate] = []
        for g in gates:
            self._check(g)
            self.gates.append(g)

    def _check(self, gate: Gate):
        if any(not 0 <= q < self.n_qubits for q in gate.qubits):
            raise ValueError(f"gate {gate} outside {self.n_qubits}-qubit register")

    def append(self, gate: Gate) -> "Circuit":
        self._check(gate)
        self.gates.append(gate)
        return self

    def ry(self, qubit: int, angle) -> "Circuit":
        return self.append(Gate("ry", (qubit,), angle))

    def rx(self, qubit: int, angle) -> "Circuit":
        return self.append(Gate("rx", (qubit,), angle))

    def rz(self, qubit: int, angle) -> "Circuit":
        return self.append(Gate("rz", (qubit,), angle))

    def x(self, qubit: int) -> "Circuit":
        return self.append(Gate("x", (qubit,)))

    def y(self, qubit: int) -> "Circuit":
        return self.append(Gate("y", (qubit,)))

    def z(self, qubit: int) -> "Circuit":
        return self.append(Gate("z", (qubit,)))

    def h(self, qubit: int) -> "Circuit":
        return self.append(Gate("h", (qubit,)))

    def cx(self, control: int, target: int) -> "Circuit":
        return self.append(Gate("cx", (control, target)))

    @property
    def is_bound(self) -> bool:
        return all(g.is_bound for g in self.gates)

    def parameter_names(self) -> list[str]:
        return [g.angle for g in self.gates if isinstance(g.angle, str)]

    def bind(self, values: dict[str, float]) -> "Circuit":
        gates = []
        for g in self.gates:
            if isinstance(g.angle, str):
                if g.angle not in values:
                    raise ValueError(f"missing value for parameter {g.angle!r}")
                gates.append(replace(g, angle=float(values[g.angle])))
            else:
                gates.append(g)
        return Circuit(self.n_qubits, gates)

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def extended(self, other: "Circuit") -> "Circuit":
        """New circuit running self first, then other."""
        if other.n_qubits != self.n_qubits:
            raise ValueError("register size mismatch")
        return Circuit(self.n_qubits, [*self.gates, *other.gates])

    def copy(self) -> "Circuit":
        return Circuit(self.n_qubits, list(self.gates))

    def __len__(self):
        return len(self.gates)


def zero_state(n_qubits: int) -> np.ndarray:
    state = np.zeros(2**n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def _apply_single(state: np.ndarray, n: int, qubit: int, mat: np.ndarray) -> np.ndarray:
    shaped = state.reshape(2**qubit, 2, -1)
    out = np.empty_like(shaped)
    out[:, 0, :] = mat[0, 0] * shaped[:, 0, :] + mat[0, 1] * shaped[:, 1, :]
    out[:, 1, :] = mat[1, 0] * shaped[:, 0, :] + mat[1, 1] * shaped[:, 1, :]
    return out.reshape(-1)


def _apply_cx(state: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    shaped = state.reshape((2,) * n).copy()
    sel: list = [slice(None)] * n
    sel[control] = 1
    sub = shaped[tuple(sel)]
    # the target axis index drops by one inside the control slice
    axis = target - 1 if target > control else target
    shaped[tuple(sel)] = np.flip(sub, axis=axis)
    return shaped.reshape(-1)


def run_circuit(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    """Apply the circuit's gates in order to the initial state (default |0...0>)."""
    if not circuit.is_bound:
        missing = circuit.parameter_names()
        raise ValueError(f"unbound circuit parameters: {missing}")
    n = circuit.n_qubits
    state = zero_state(n) if initial is None else np.asarray(initial, dtype=complex).copy()
    if state.shape != (2**n,):
        raise ValueError("initial state has wrong dimension")
    for gate in circuit.gates:
        if gate.kind == "cx":
            state = _apply_cx(state, n, *gate.qubits)
        else:
            state = _apply_single(state, n, gate.qubits[0], gate_matrix(gate))
    norm = float(np.linalg.norm(state))
    if abs(norm - 1.0) > NORM_TOL:
        raise RuntimeError(f"state norm drifted to {norm}")
    return state


# ---------------------------------------------------------------------------
# Pauli expectation values
# ---------------------------------------------------------------------------


def apply_pauli_term(state: np.ndarray, axes: str) -> np.ndarray:
    """P|psi> by index arithmetic (independent of the dense-matrix oracle)."""
    n = len(axes)
    indices = np.arange(2**n)
    flip_mask = 0
    phase_mask = 0
    n_y = 0
    for q, c in enumerate(axes):
        bit = 1 << (n - 1 - q)
        if c in ("X", "Y"):
            flip_mask |= bit
        if c in ("Z", "Y"):
            phase_mask |= bit
        if c == "Y":
            n_y += 1
    signs = 1 - 2 * (np.bitwise_count(indices & phase_mask).astype(np.int64) & 1)
    out = np.empty_like(state)
    out[indices ^ flip_mask] = (1j**n_y) * signs * state
    return out


def expectation_exact(state: np.ndarray, h: PauliSum) -> float:
    """<psi|H|psi> from the statevector; the result must be real."""
    if state.shape != (2**h.n_qubits,):
        raise ValueError("state dimension does not match operator register")
    acc = 0j
    for axes, coeff in h.items():
        acc += coeff * np.vdot(state, apply_pauli_term(state, axes))
    if abs(acc.imag) >= 1e-8:
        raise RuntimeError(f"non-real expectation value {acc}")
    return float(acc.real)


def measurement_basis_gates(n_qubits: int, axes: str) -> list[Gate]:
    """Basis-change gates mapping the term's eigenbasis onto the Z basis."""
    gates = []
    for q, c in enumerate(axes):
        if c == "X":
            gates.append(Gate("h", (q,)))
        elif c == "Y":
            # S-dagger then H; equals the documented [[1,-i],[1,i]]/sqrt(2)
            # up to a global phase irrelevant to measurement.
            gates.append(Gate("rz", (q,), -math.pi / 2))
            gates.append(Gate("h", (q,)))
    return gates


def measurement_distribution(circuit: Circuit, axes: str) -> np.ndarray:
    """Exact outcome distribution for measuring one Pauli term after the circuit."""
    meas = circuit.copy()
    for g in measurement_basis_gates(circuit.n_qubits, axes):
        meas.append(g)
    state = run_circuit(meas)
    probs = np.abs(state) ** 2
    return probs / probs.sum()


def _parity_values(n_qubits: int, axes: str) -> np.ndarray:
    """(-1)^(occupied support bits) for every outcome index."""
    mask = 0
    for q, c in enumerate(axes):
        if c != "I":
            mask |= 1 << (n_qubits - 1 - q)
    indices = np.arange(2**n_qubits)
    return 1.0 - 2.0 * (np.bitwise_count(indices & mask).astype(np.int64) & 1)


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial outcome counts; equivalent to drawing `shots` bitstrings."""
    return rng.multinomial(shots, probs)


@dataclass(frozen=True)
class SpamModel:
    """Factorized readout-error model: per-qubit asymmetric bit flips.

    ``p_flip[q] = (p01, p10)`` gives the probabilities of reading 1 for a
    prepared 0 and of reading 0 for a prepared 1.  The full confusion matrix
    is the Kronecker product of the per-qubit column-stochastic matrices; a
    dense matrix can be supplied instead for registers of at most 6 qubits.
    """

    p_flip: tuple[tuple[float, float], ...] = ()
    dense: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        for p01, p10 in self.p_flip:
            if not (0.0 <= p01 <= 1.0 and 0.0 <= p10 <= 1.0):
                raise ValueError("flip probabilities must lie in [0, 1]")
        if self.dense is not None:
            m = np.asarray(self.dense, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("dense confusion matrix must be square")
            if m.shape[0] > 2**6:
                raise ValueError("dense confusion matrices limited to 6 qubits")
            if np.any(m < -1e-12) or np.max(np.abs(m.sum(axis=0) - 1.0)) > 1e-9:
                raise ValueError("confusion matrix must be column-stochastic")

    @classmethod
    def uniform(cls, n_qubits: int, p01: float, p10: float) -> "SpamModel":
        return cls(p_flip=((p01, p10),) * n_qubits)

    @classmethod
    def from_dense(cls, matrix) -> "SpamModel":
        return cls(dense=tuple(tuple(float(x) for x in row) for row in matrix))

    @property
    def n_qubits(self) -> int:
        if self.dense is not None:
            return int(math.log2(len(self.dense)))
        return len(self.p_flip)

    def _qubit_matrix(self, q: int) -> np.ndarray:
        p01, p10 = self.p_flip[q]
        return np.array([[1.0 - p01, p10], [p01, 1.0 - p10]])

    def confusion_matrix(self) -> np.ndarray:
        if self.dense is not None:
            return np.asarray(self.dense, dtype=float)
        m = np.array([[1.0]])
        for q in range(len(self.p_flip)):
            m = np.kron(m, self._qubit_matrix(q))
        return m

    def _apply_factorized(self, dist: np.ndarray, invert: bool) -> np.ndarray:
        n = len(self.p_flip)
        out = dist.reshape((2,) * n)
        for q in range(n):
            m = self._qubit_matrix(q)
            if invert:
                m = np.linalg.inv(m)
            out = np.moveaxis(np.tensordot(m, out, axes=([1], [q])), 0, q)
        return out.reshape(-1)

    def apply(self, dist) -> np.ndarray:
        """Forward readout-noise action M @ dist."""
        dist = np.asarray(dist, dtype=float)
        if abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError("distribution must sum to 1")
        if self.dense is not None:
            return self.confusion_matrix() @ dist
        return self._apply_factorized(dist, invert=False)

    def correct(self, dist) -> np.ndarray:
        """Inverse action, clipped to the probability simplex."""
        dist = np.asarray(dist, dtype=float)
        if self.dense is not None:
            m = self.confusion_matrix()
            try:
                raw = np.linalg.solve(m, dist)
            except np.linalg.LinAlgError:
                raw = np.linalg.lstsq(m, dist, rcond=None)[0]
        else:
            raw = self._apply_factorized(dist, invert=True)
        clipped = np.clip(raw, 0.0, None)
        total = clipped.sum()
        if total <= 0.0:
            raise RuntimeError("SPAM correction produced an empty distribution")
        return clipped / total


def apply_spam(dist, model: SpamModel) -> np.ndarray:
    return model.apply(dist)


def spam_correct(dist, model: SpamModel) -> np.ndarray:
    return model.correct(dist)


def expectation_sampled(
    circuit: Circuit,
    h: PauliSum,
    shots: int,
    rng_seed: int,
    spam: SpamModel | None = None,
    correct_spam: bool = False,
    shots_per_term: bool = True,
) -> float:
    """Shot-based estimate of <H> on the circuit's output state.

    Each non-identity term is measured independently in its own rotated
    basis; ``shots`` is the per-term budget by default, or an overall budget
    split evenly across terms when ``shots_per_term`` is false.  Sampling for
    term k uses the (rng_seed, k) Philox stream, so estimates are
    reproducible regardless of evaluation order.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    n = circuit.n_qubits
    identity = "I" * n
    terms = [(axes, coeff) for axes, coeff in h.items() if axes != identity]
    total = h.identity_coefficient.real
    if not terms:
        return float(total)
    per_term = shots if shots_per_term else max(1, shots // len(terms))
    for index, (axes, coeff) in enumerate(terms):
        probs = measurement_distribution(circuit, axes)
        if spam is not None:
            probs = spam.apply(probs)
        counts = sample_counts(probs, per_term, rng_stream(rng_seed, index))
        freq = counts / per_term
        if spam is not None and correct_spam:
            freq = spam.correct(freq)
        parity = _parity_values(n, axes)
        total += coeff.real * float(freq @ parity)
    return float(total)


def zero_state_probability(
    circuit: Circuit,
    shots: int | None = None,
    rng_seed: int = 0,
    spam: SpamModel | None = None,
    correct_spam: bool = False,
) -> float:
    """Probability of reading the all-zeros bitstring after the circuit."""
    state = run_circuit(circuit)
    probs = np.abs(state) ** 2
    probs = probs / probs.sum()
    if spam is not None:
        probs = spam.apply(probs)
    if shots is None:
        if spam is not None and correct_spam:
            probs = spam.correct(probs)
        return float(probs[0])
    if shots < 1:
        raise ValueError("shots must be at least 1")
    counts = sample_counts(probs, shots, rng_stream(rng_seed, 0))
    freq = counts / shots
    if spam is not None and correct_spam:
        freq = spam.correct(freq)
    return float(freq[0])
