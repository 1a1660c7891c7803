"""Pauli-string operator algebra and Anderson-impurity Hamiltonian builders.

Operators live on a fixed register of qubits and are stored as canonical sums
of Pauli strings: the phase of every string is folded into its coefficient,
terms are keyed by the bare axes pattern (e.g. ``"ZIXY"``, qubit 0 written
first and most significant), and coefficients below :data:`PRUNE_THRESHOLD`
are dropped.  Fermionic ladder operators follow the Jordan-Wigner
construction: a Z string over all orbitals preceding the target in the chain
order, times (X -+ iY)/2 on the target qubit.

Qubit indices are 0-based throughout the code; printed material that follows
the 1-based physics convention says so explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRUNE_THRESHOLD = 1e-14

_AXES = "IXYZ"
_UNIT_PHASES = (1 + 0j, 1j, -1 + 0j, -1j)


def _single_qubit_product(a: str, b: str) -> tuple[complex, str]:
    if a == "I":
        return 1 + 0j, b
    if b == "I":
        return 1 + 0j, a
    if a == b:
        return 1 + 0j, "I"
    cyclic = {"XY": (1j, "Z"), "YZ": (1j, "X"), "ZX": (1j, "Y")}
    if a + b in cyclic:
        return cyclic[a + b]
    phase, c = cyclic[b + a]
    return -phase, c


_MUL_TABLE = {(a, b): _single_qubit_product(a, b) for a in _AXES for b in _AXES}


def axes_product(a: str, b: str) -> tuple[complex, str]:
    """Product of two bare axes strings, returning (phase, axes)."""
    if len(a) != len(b):
        raise ValueError(f"qubit count mismatch: {len(a)} vs {len(b)}")
    phase = 1 + 0j
    out = []
    for ca, cb in zip(a, b):
        p, c = _MUL_TABLE[(ca, cb)]
        phase *= p
        out.append(c)
    return phase, "".join(out)


@dataclass(frozen=True)
class PauliString:
    """A single Pauli string with a unit phase from {1, -1, i, -i}."""

    axes: str
    phase: complex = 1 + 0j

    def __post_init__(self):
        if not self.axes or any(c not in _AXES for c in self.axes):
            raise ValueError(f"invalid axes string {self.axes!r}")
        if not any(abs(self.phase - p) < 1e-12 for p in _UNIT_PHASES):
            raise ValueError(f"phase {self.phase} is not a unit phase")

    @property
    def n_qubits(self) -> int:
        return len(self.axes)

    def __mul__(self, other: "PauliString") -> "PauliString":
        phase, axes = axes_product(self.axes, other.axes)
        return PauliString(axes, _snap_phase(self.phase * other.phase * phase))


def _snap_phase(p: complex) -> complex:
    for u in _UNIT_PHASES:
        if abs(p - u) < 1e-9:
            return u
    raise ValueError(f"non-unit phase {p}")


class PauliSum:
    """Canonical weighted sum of Pauli strings on a fixed qubit register.

    Instances are immutable by convention: all arithmetic returns new sums,
    and the internal term map must not be mutated after construction.  Terms
    iterate in lexicographic axes order (qubit 0 most significant) so that
    downstream shot allocation and serialization are deterministic.
    """

    __slots__ = ("n_qubits", "_terms")

    def __init__(self, n_qubits: int, terms: dict[str, complex] | None = None):
        if n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        self.n_qubits = n_qubits
        canon: dict[str, complex] = {}
        for axes, coeff in (terms or {}).items():
            if len(axes) != n_qubits or any(c not in _AXES for c in axes):
                raise ValueError(f"invalid axes {axes!r} for {n_qubits} qubits")
            canon[axes] = canon.get(axes, 0j) + complex(coeff)
        self._terms = {
            axes: canon[axes]
            for axes in sorted(canon)
            if abs(canon[axes]) > PRUNE_THRESHOLD
        }

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, n_qubits: int) -> "PauliSum":
        return cls(n_qubits, {})

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n_qubits, {"I" * n_qubits: coeff})

    @classmethod
    def from_term(cls, axes: str, coeff: complex = 1.0) -> "PauliSum":
        return cls(len(axes), {axes: coeff})

    @classmethod
    def single(cls, n_qubits: int, qubit: int, axis: str, coeff: complex = 1.0) -> "PauliSum":
        if not 0 <= qubit < n_qubits:
            raise ValueError(f"qubit {qubit} out of range")
        axes = "I" * qubit + axis + "I" * (n_qubits - qubit - 1)
        return cls(n_qubits, {axes: coeff})

    # -- accessors --------------------------------------------------------

    @property
    def terms(self) -> dict[str, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, axes: str) -> complex:
        return self._terms.get(axes, 0j)

    @property
    def identity_coefficient(self) -> complex:
        return self._terms.get("I" * self.n_qubits, 0j)

    @property
    def n_terms(self) -> int:
        return len(self._terms)

    def coefficient_norm(self) -> float:
        """Sum of absolute coefficients; cheap upper bound on the spectral span."""
        return float(sum(abs(c) for c in self._terms.values()))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def real_coefficients(self, tol: float = 1e-10) -> "PauliSum":
        """Drop imaginary coefficient dust; error out if it exceeds tol."""
        bad = max((abs(c.imag) for c in self._terms.values()), default=0.0)
        if bad > tol:
            raise ValueError(f"non-Hermitian sum: max |Im coeff| = {bad:.3e}")
        return PauliSum(self.n_qubits, {a: c.real for a, c in self._terms.items()})

    # -- arithmetic -------------------------------------------------------

    def _require_same_register(self, other: "PauliSum"):
        if self.n_qubits != other.n_qubits:
            raise ValueError(
                f"qubit count mismatch: {self.n_qubits} vs {other.n_qubits}"
            )

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._require_same_register(other)
        terms = dict(self._terms)
        for axes, coeff in other._terms.items():
            terms[axes] = terms.get(axes, 0j) + coeff
        return PauliSum(self.n_qubits, terms)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-1.0) * other

    def __neg__(self) -> "PauliSum":
        return (-1.0) * self

    def __mul__(self, scalar: complex) -> "PauliSum":
        return PauliSum(
            self.n_qubits, {a: c * scalar for a, c in self._terms.items()}
        )

    __rmul__ = __mul__

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        """Operator product."""
        self._require_same_register(other)
        terms: dict[str, complex] = {}
        for a1, c1 in self._terms.items():
            for a2, c2 in other._terms.items():
                phase, axes = axes_product(a1, a2)
                terms[axes] = terms.get(axes, 0j) + c1 * c2 * phase
        return PauliSum(self.n_qubits, terms)

    def commutator(self, other: "PauliSum") -> "PauliSum":
        return self @ other - other @ self

    def anticommutator(self, other: "PauliSum") -> "PauliSum":
        return self @ other + other @ self

    def allclose(self, other: "PauliSum", tol: float = 1e-12) -> bool:
        if self.n_qubits != other.n_qubits:
            return False
        keys = set(self._terms) | set(other._terms)
        return all(
            abs(self._terms.get(k, 0j) - other._terms.get(k, 0j)) <= tol
            for k in keys
        )

    def __repr__(self):
        inner = " + ".join(f"({c:.6g})*{a}" for a, c in self._terms.items())
        return f"PauliSum({self.n_qubits}q: {inner or '0'})"

    # -- serialization ----------------------------------------------------

    def to_text(self) -> str:
        """One term per line: ``coeff axes``, shortest round-trip floats."""
        lines = []
        for axes, coeff in self._terms.items():
            if abs(coeff.imag) == 0.0:
                lines.append(f"{coeff.real!r} {axes}")
            else:
                lines.append(f"{coeff!r} {axes}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, n_qubits: int | None = None) -> "PauliSum":
        terms: dict[str, complex] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            coeff_str, axes = line.split()
            coeff = complex(coeff_str)
            terms[axes] = terms.get(axes, 0j) + coeff
            if n_qubits is None:
                n_qubits = len(axes)
        if n_qubits is None:
            raise ValueError("empty operator text and no qubit count given")
        return cls(n_qubits, terms)


# ---------------------------------------------------------------------------
# Jordan-Wigner ladder operators and qubit layouts
# ---------------------------------------------------------------------------


def ladder_operator(n_qubits: int, position: int, kind: str) -> PauliSum:
    """Fermionic ladder operator at a Jordan-Wigner chain position.

    ``kind="create"`` fills the orbital (maps sigma^z = +1 to -1), carrying a
    Z string over all preceding chain positions; ``kind="annihilate"`` is the
    adjoint.  The chain order coincides with the qubit order of the register.
    """
    if not 0 <= position < n_qubits:
        raise ValueError(f"orbital position {position} out of range")
    if kind not in ("create", "annihilate"):
        raise ValueError(f"unknown ladder kind {kind!r}")
    prefix = "Z" * position
    suffix = "I" * (n_qubits - position - 1)
    sign = -1j if kind == "create" else 1j
    return PauliSum(
        n_qubits,
        {
            prefix + "X" + suffix: 0.5,
            prefix + "Y" + suffix: 0.5 * sign,
        },
    )


def number_operator(n_qubits: int) -> PauliSum:
    """Total electron number: sum over qubits of (1 - Z)/2."""
    terms: dict[str, complex] = {"I" * n_qubits: n_qubits / 2}
    for q in range(n_qubits):
        axes = "I" * q + "Z" + "I" * (n_qubits - q - 1)
        terms[axes] = -0.5
    return PauliSum(n_qubits, terms)


def spin_z_operator(spin_signs) -> PauliSum:
    """Total S_z in units of hbar/2 for qubits carrying the given spins.

    ``spin_signs`` holds +1 for a spin-up orbital and -1 for spin-down; the
    operator counts filled-up minus filled-down orbitals.
    """
    n = len(spin_signs)
    terms: dict[str, complex] = {"I" * n: 0.0}
    for q, s in enumerate(spin_signs):
        if s not in (1, -1):
            raise ValueError("spin signs must be +1 or -1")
        axes = "I" * q + "Z" + "I" * (n - q - 1)
        terms["I" * n] += s / 2
        terms[axes] = -s / 2
    return PauliSum(n, terms)


@dataclass(frozen=True)
class QubitLayout:
    """Assignment of spin orbitals to qubits.

    ``orbitals[q]`` names the spin orbital hosted by qubit ``q`` as a tuple
    ``(kind, index)`` with kind ``"imp"`` or ``"bath"``; the Jordan-Wigner
    chain runs in qubit order.  Within each kind, orbitals are enumerated
    site-major with spin-up before spin-down, so orbital index parity gives
    the spin.
    """

    orbitals: tuple[tuple[str, int], ...]

    @property
    def n_qubits(self) -> int:
        return len(self.orbitals)

    def position(self, kind: str, index: int) -> int:
        try:
            return self.orbitals.index((kind, index))
        except ValueError:
            raise ValueError(f"orbital ({kind}, {index}) not in layout") from None

    @property
    def spin_signs(self) -> tuple[int, ...]:
        return tuple(1 if index % 2 == 0 else -1 for _, index in self.orbitals)

    def spin_z(self) -> PauliSum:
        return spin_z_operator(self.spin_signs)


def impurity_first_layout(n_imp: int, n_bath: int) -> QubitLayout:
    """All impurity spin orbitals first, then all bath spin orbitals."""
    orbs = [("imp", a) for a in range(n_imp)] + [("bath", i) for i in range(n_bath)]
    return QubitLayout(tuple(orbs))


def two_site_layout() -> QubitLayout:
    """Spin-blocked order for the one-impurity/one-bath model.

    Qubits 0,1 host the spin-up orbitals of site 1 and site 2, qubits 2,3 the
    spin-down ones.  Spin-conserving hops are then nearest-neighbour in the
    Jordan-Wigner chain and carry no Z string.
    """
    return QubitLayout((("imp", 0), ("bath", 0), ("imp", 1), ("bath", 1)))


# ---------------------------------------------------------------------------
# Impurity model and Hamiltonian builders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImpurityModel:
    """Parameters of a finite Anderson impurity problem.

    Counts refer to spin orbitals.  ``hoppings[a][i]`` couples impurity spin
    orbital ``a`` to bath spin orbital ``i`` (real couplings only);
    ``interactions`` lists sparse entries ``(a, b, g, d, value)`` of the
    two-body tensor multiplying c+_a c+_b c_g c_d.
    """

    mu: float
    eps_imp: tuple[float, ...]
    eps_bath: tuple[float, ...]
    hoppings: tuple[tuple[float, ...], ...]
    interactions: tuple[tuple[int, int, int, int, float], ...] = ()

    def __post_init__(self):
        values = [self.mu, *self.eps_imp, *self.eps_bath]
        for row in self.hoppings:
            values.extend(row)
        values.extend(v for *_, v in self.interactions)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("model parameters must be finite reals")
        if len(self.hoppings) != len(self.eps_imp) or any(
            len(row) != len(self.eps_bath) for row in self.hoppings
        ):
            raise ValueError("hoppings must be an (n_imp x n_bath) matrix")

    @property
    def n_imp(self) -> int:
        return len(self.eps_imp)

    @property
    def n_bath(self) -> int:
        return len(self.eps_bath)

    @property
    def n_qubits(self) -> int:
        return self.n_imp + self.n_bath

    @classmethod
    def two_site(cls, U: float, mu: float, eps2: float, V: float) -> "ImpurityModel":
        """One interacting site plus one bath site (4 spin orbitals)."""
        return cls(
            mu=float(mu),
            eps_imp=(0.0, 0.0),
            eps_bath=(float(eps2), float(eps2)),
            hoppings=((float(V), 0.0), (0.0, float(V))),
            interactions=((0, 1, 1, 0, float(U)),),
        )

    @property
    def is_two_site(self) -> bool:
        if (self.n_imp, self.n_bath) != (2, 2):
            return False
        if self.eps_imp != (0.0, 0.0) or self.eps_bath[0] != self.eps_bath[1]:
            return False
        if self.hoppings[0][1] != 0.0 or self.hoppings[1][0] != 0.0:
            return False
        if self.hoppings[0][0] != self.hoppings[1][1]:
            return False
        return len(self.interactions) == 1 and self.interactions[0][:4] == (0, 1, 1, 0)

    @property
    def two_site_params(self) -> tuple[float, float, float, float]:
        """(U, mu, eps2, V) of the two-site instance."""
        if not self.is_two_site:
            raise ValueError("model is not a two-site instance")
        return (
            self.interactions[0][4],
            self.mu,
            self.eps_bath[0],
            self.hoppings[0][0],
        )


def build_impurity_hamiltonian(
    model: ImpurityModel, layout: QubitLayout | None = None
) -> PauliSum:
    """Jordan-Wigner Hamiltonian of the impurity model.

    Assembled from ladder-operator products, so the vacuum (all orbitals
    empty) has energy exactly zero.  The convention for the interaction
    entries is H_int = sum U_{abgd} c+_a c+_b c_g c_d; a pure density-density
    repulsion between orbitals a and b is the single entry (a, b, b, a, U).
    """
    if layout is None:
        layout = impurity_first_layout(model.n_imp, model.n_bath)
    n = layout.n_qubits

    def create(kind, idx):
        return ladder_operator(n, layout.position(kind, idx), "create")

    def annihilate(kind, idx):
        return ladder_operator(n, layout.position(kind, idx), "annihilate")

    h = PauliSum.zero(n)
    for a in range(model.n_imp):
        coeff = model.eps_imp[a] - model.mu
        if coeff != 0.0:
            h = h + coeff * (create("imp", a) @ annihilate("imp", a))
    for (a, b, g, d, val) in model.interactions:
        if val != 0.0:
            h = h + val * (
                create("imp", a)
                @ create("imp", b)
                @ annihilate("imp", g)
                @ annihilate("imp", d)
            )
    for i in range(model.n_bath):
        if model.eps_bath[i] != 0.0:
            h = h + model.eps_bath[i] * (create("bath", i) @ annihilate("bath", i))
    for a in range(model.n_imp):
        for i in range(model.n_bath):
            v = model.hoppings[a][i]
            if v != 0.0:
                h = h + v * (
                    create("imp", a) @ annihilate("bath", i)
                    + create("bath", i) @ annihilate("imp", a)
                )
    return h.real_coefficients()


def build_two_site_hamiltonian(U: float, mu: float, eps2: float, V: float) -> PauliSum:
    """Specialized 4-qubit two-site Hamiltonian in the spin-blocked layout.

    Identical to the generic builder on :func:`two_site_layout` up to the
    identity shift (mu - U/4 - eps2): this specialized form is written purely
    in Z/XX/YY terms with no identity contribution, so its all-empty-state
    energy is mu - U/4 - eps2 rather than zero.
    """
    for v in (U, mu, eps2, V):
        if not np.isfinite(v):
            raise ValueError("parameters must be finite reals")
    terms: dict[str, complex] = {}

    def add(axes, coeff):
        if coeff != 0.0:
            terms[axes] = terms.get(axes, 0j) + coeff

    add("ZIZI", U / 4)
    add("ZIII", mu / 2 - U / 4)
    add("IIZI", mu / 2 - U / 4)
    add("IZII", -eps2 / 2)
    add("IIIZ", -eps2 / 2)
    for axes in ("XXII", "YYII", "IIXX", "IIYY"):
        add(axes, V / 2)
    return PauliSum(4, terms)


def two_site_number_operator() -> PauliSum:
    return number_operator(4)


def two_site_spin_z_operator() -> PauliSum:
    return two_site_layout().spin_z()


def default_penalty_strength(h: PauliSum) -> float:
    """Penalty prefactor that dominates the spectral span of ``h``."""
    return 10.0 * h.coefficient_norm()


def add_number_penalty(h: PauliSum, beta: float, n_target: int) -> PauliSum:
    """Add beta * (N - n_target)^2 to pin the electron-number sector."""
    if beta <= 0:
        raise ValueError("penalty strength beta must be positive")
    shifted = number_operator(h.n_qubits) - PauliSum.identity(h.n_qubits, float(n_target))
    return (h + beta * (shifted @ shifted)).real_coefficients()


# ---------------------------------------------------------------------------
# Symmetry sectors and reduced two-qubit Hamiltonians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sector:
    """(electron number, total S_z in units of hbar/2) label."""

    n_electrons: int
    sz: int

    def __post_init__(self):
        if abs(self.sz) > self.n_electrons:
            raise ValueError("|sz| cannot exceed the electron count")


REDUCED_SECTORS = frozenset(
    {(0, 0), (1, 1), (1, -1), (2, 0), (2, 2), (2, -2), (3, 1), (3, -1), (4, 0)}
)


def build_reduced_hamiltonian(
    sector: Sector, U: float, mu: float, eps2: float, V: float
) -> PauliSum:
    """Two-qubit projection of the two-site Hamiltonian onto a sector.

    Constant-only sectors return a pure identity operator carrying the sector
    energy.  The one- and three-electron projections act on the second
    reduced qubit only (the first reduced qubit encodes -S_z); the
    two-electron S_z = 0 projection acts on both reduced qubits.
    """
    key = (sector.n_electrons, sector.sz)
    if key not in REDUCED_SECTORS:
        raise ValueError(f"sector {key} outside the two-site sector table")
    empties = mu / 2 - U / 4 - eps2 / 2
    if key == (0, 0):
        return PauliSum.identity(2, mu - U / 4 - eps2)
    if key in ((2, 2), (2, -2)):
        return PauliSum.identity(2, -U / 4)
    if key == (4, 0):
        return PauliSum.identity(2, -mu + 3 * U / 4 + eps2)
    if key in ((1, 1), (1, -1)):
        return PauliSum(
            2, {"IZ": mu / 2 + eps2 / 2, "IX": V, "II": empties}
        )
    if key in ((3, 1), (3, -1)):
        return PauliSum(
            2, {"IZ": mu / 2 + eps2 / 2 - U / 2, "IX": V, "II": -empties}
        )
    # (2, 0)
    return PauliSum(
        2,
        {
            "ZZ": U / 4,
            "ZI": mu / 2 - U / 4 + eps2 / 2,
            "IZ": mu / 2 - U / 4 + eps2 / 2,
            "XI": V,
            "IX": V,
        },
    )


def barred_operators(n_electrons: int) -> dict[str, PauliSum]:
    """Four-qubit forms of the reduced-register Pauli operators.

    Returns the operators whose restriction to the given electron-number
    sector behaves as a fresh two-qubit Pauli algebra.  Keys are ``"x1"``,
    ``"y1"``, ``"z1"``, ``"x2"``, ``"y2"``, ``"z2"``.
    """
    if n_electrons in (1, 3):
        half = 0.5
        return {
            "z1": PauliSum(4, {"ZIII": half, "IZII": half, "IIZI": -half, "IIIZ": -half}),
            "z2": PauliSum(4, {"ZIII": half, "IZII": -half, "IIZI": half, "IIIZ": -half}),
            "x1": PauliSum(4, {"XIXI": half, "YIYI": half, "IXIX": half, "IYIY": half}),
            "x2": PauliSum(4, {"XXII": half, "YYII": half, "IIXX": half, "IIYY": half}),
            "y1": PauliSum(4, {"XIYI": -half, "YIXI": half, "IXIY": -half, "IYIX": half}),
            "y2": PauliSum(4, {"XYII": -half, "YXII": half, "IIXY": -half, "IIYX": half}),
        }
    if n_electrons == 2:
        return {
            "z1": PauliSum.from_term("ZIII"),
            "z2": PauliSum.from_term("IIZI"),
            "x1": PauliSum.from_term("XXII"),
            "x2": PauliSum.from_term("IIXX"),
            "y1": PauliSum.from_term("YXII"),
            "y2": PauliSum.from_term("IIYX"),
        }
    raise ValueError("barred operator sets exist for 1, 2 and 3 electrons")
