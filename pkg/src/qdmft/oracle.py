"""Dense exact-diagonalization reference for everything the solver computes.

Every operator is assembled as an explicit 2^n x 2^n matrix by Kronecker
products, diagonalized sector by sector, and transition weights are evaluated
as raw matrix elements.  This path shares no code with the statevector
simulator, so agreement between the two is a meaningful cross-check.

Basis convention: basis index bits follow qubit order with qubit 0 most
significant; bit 0 means sigma^z = +1 (empty orbital).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import (
    ImpurityModel,
    PauliSum,
    QubitLayout,
    Sector,
    build_impurity_hamiltonian,
    build_two_site_hamiltonian,
    impurity_first_layout,
    ladder_operator,
    two_site_layout,
)
from .spectra import SpectralData, SpectralPole

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

MAX_DENSE_QUBITS = 12


def dense_matrix(h: PauliSum) -> np.ndarray:
    """Kronecker assembly of a Pauli sum; qubit 0 is the most significant bit."""
    if h.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"dense assembly limited to {MAX_DENSE_QUBITS} qubits")
    dim = 2**h.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for axes, coeff in h.items():
        term = np.array([[1.0]], dtype=complex)
        for c in axes:
            term = np.kron(term, _PAULI_MATS[c])
        out += coeff * term
    return out


def basis_sector(index: int, spin_signs) -> Sector:
    """Sector of a computational basis state (bit 1 = filled orbital)."""
    n = len(spin_signs)
    bits = [(index >> (n - 1 - q)) & 1 for q in range(n)]
    return Sector(sum(bits), sum(s for b, s in zip(bits, spin_signs) if b))


@dataclass(frozen=True)
class LabeledSpectrum:
    """Sector-resolved eigenpairs, sorted by energy within each sector."""

    n_qubits: int
    entries: tuple[tuple[float, np.ndarray, Sector], ...]

    def by_sector(self, sector: Sector):
        return [e for e in self.entries if e[2] == sector]

    def sector_energies(self, sector: Sector) -> np.ndarray:
        return np.array([e[0] for e in self.by_sector(sector)])

    def ground(self):
        return min(self.entries, key=lambda e: e[0])

    def sectors(self):
        return sorted({e[2] for e in self.entries}, key=lambda s: (s.n_electrons, s.sz))


def full_spectrum(h: PauliSum, spin_signs=None) -> LabeledSpectrum:
    """Diagonalize a number- and spin-conserving Hamiltonian sector by sector.

    Because the number and S_z operators are diagonal in the computational
    basis, conservation lets us diagonalize each (N, S_z) block separately;
    the resulting eigenvectors are exact simultaneous eigenstates, which
    settles degenerate-subspace labeling for free.
    """
    n = h.n_qubits
    if spin_signs is None:
        if n != 4:
            raise ValueError("spin pattern required for registers other than 4 qubits")
        spin_signs = two_site_layout().spin_signs
    mat = dense_matrix(h)
    if np.max(np.abs(mat - mat.conj().T)) > 1e-10:
        raise ValueError("Hamiltonian is not Hermitian")

    blocks: dict[Sector, list[int]] = {}
    sector_ids = np.empty(2**n, dtype=int)
    for i in range(2**n):
        sec = basis_sector(i, spin_signs)
        blocks.setdefault(sec, []).append(i)
        sector_ids[i] = hash((sec.n_electrons, sec.sz))

    off_sector = sector_ids[:, None] != sector_ids[None, :]
    if np.max(np.abs(mat[off_sector]), initial=0.0) > 1e-10:
        raise ValueError("Hamiltonian does not conserve (N, S_z)")

    entries = []
    for sec, idx in blocks.items():
        sub = mat[np.ix_(idx, idx)]
        vals, vecs = np.linalg.eigh(sub)
        for k in range(len(idx)):
            full_vec = np.zeros(2**n, dtype=complex)
            full_vec[idx] = vecs[:, k]
            entries.append((float(vals[k]), full_vec, sec))
    entries.sort(key=lambda e: (e[2].n_electrons, e[2].sz, e[0]))
    return LabeledSpectrum(n, tuple(entries))


def transition_operator(n_qubits: int, alpha_position: int) -> np.ndarray:
    """Dense (prod_{beta<alpha} Z_beta) X_alpha used for transition weights."""
    axes = "Z" * alpha_position + "X" + "I" * (n_qubits - alpha_position - 1)
    return dense_matrix(PauliSum.from_term(axes))


def _two_site_problem(model: ImpurityModel):
    U, mu, eps2, V = model.two_site_params
    return build_two_site_hamiltonian(U, mu, eps2, V), two_site_layout()


def exact_spectral_data(
    model: ImpurityModel, alpha: int = 0, layout: QubitLayout | None = None
) -> SpectralData:
    """Exact pole energies and transition weights for one impurity orbital.

    For the two-site instance the specialized 4-qubit Hamiltonian is used, so
    reported total energies share the solver's normalization; excitation
    energies are normalization-free either way.  Within degenerate blocks the
    weight-carrying state is listed first (particle side: S_z raised by the
    up-orbital insertion; hole side: lowered).
    """
    if layout is None and model.is_two_site:
        h, layout = _two_site_problem(model)
    else:
        layout = layout or impurity_first_layout(model.n_imp, model.n_bath)
        h = build_impurity_hamiltonian(model, layout)
    spins = layout.spin_signs
    spec = full_spectrum(h, spins)
    e0, psi0, sec0 = spec.ground()

    for energy, _, sec in spec.entries:
        if sec.n_electrons != sec0.n_electrons and abs(energy - e0) < 1e-9:
            raise ValueError("degenerate ground states across electron numbers")

    pos = layout.position("imp", alpha)
    op = transition_operator(layout.n_qubits, pos)
    spin_alpha = spins[pos]

    def collect(dn: int):
        rows = []
        for energy, vec, sec in spec.entries:
            if sec.n_electrons != sec0.n_electrons + dn:
                continue
            lam = float(abs(np.vdot(vec, op @ psi0)) ** 2)
            omega = energy - e0 if dn > 0 else e0 - energy
            # weight carriers first inside degenerate blocks
            carrier_rank = 0 if sec.sz == sec0.sz + dn * spin_alpha else 1
            rows.append((omega, carrier_rank, lam))
        rows.sort(key=lambda r: r[0])
        # stable carrier-first ordering within near-degenerate groups
        i = 0
        while i < len(rows):
            j = i + 1
            while j < len(rows) and abs(rows[j][0] - rows[i][0]) < 1e-9:
                j += 1
            rows[i:j] = sorted(rows[i:j], key=lambda r: r[1])
            i = j
        return tuple(SpectralPole(w, (lam,)) for w, _, lam in rows)

    return SpectralData(
        n0=sec0.n_electrons, e0=e0, particle=collect(+1), hole=collect(-1)
    )


def sector_restricted_eigenvalues(
    h: PauliSum, sector: Sector, spin_signs=None
) -> np.ndarray:
    spec = full_spectrum(h, spin_signs)
    return spec.sector_energies(sector)


def sector_projector(n_qubits: int, sector: Sector, spin_signs) -> np.ndarray:
    diag = [
        1.0 if basis_sector(i, spin_signs) == sector else 0.0
        for i in range(2**n_qubits)
    ]
    return np.diag(diag).astype(complex)


def number_projector(n_qubits: int, n_electrons: int, spin_signs) -> np.ndarray:
    diag = [
        1.0 if basis_sector(i, spin_signs).n_electrons == n_electrons else 0.0
        for i in range(2**n_qubits)
    ]
    return np.diag(diag).astype(complex)


def verify_ladder_identities(
    model: ImpurityModel, layout: QubitLayout | None = None
) -> dict:
    """Check the ladder-operator matrix-element identities on dense data.

    For every eigenpair bra/ket the creation (annihilation) matrix element
    must equal the string-X form, match +-i times the string-Y form, and obey
    the one-electron selection rule.  Returns the maximum deviations found.
    """
    if layout is None and model.is_two_site:
        h, layout = _two_site_problem(model)
    else:
        layout = layout or impurity_first_layout(model.n_imp, model.n_bath)
        h = build_impurity_hamiltonian(model, layout)
    spec = full_spectrum(h, layout.spin_signs)
    n = layout.n_qubits

    report = {
        "max_x_identity_dev": 0.0,
        "max_y_identity_dev": 0.0,
        "max_selection_rule_dev": 0.0,
        "pairs_checked": 0,
    }
    for a in range(model.n_imp):
        pos = layout.position("imp", a)
        create = dense_matrix(ladder_operator(n, pos, "create"))
        annihilate = dense_matrix(ladder_operator(n, pos, "annihilate"))
        x_form = transition_operator(n, pos)
        y_axes = "Z" * pos + "Y" + "I" * (n - pos - 1)
        y_form = dense_matrix(PauliSum.from_term(y_axes))
        for eb, vb, sb in spec.entries:
            for ek, vk, sk in spec.entries:
                dn = sb.n_electrons - sk.n_electrons
                me_create = np.vdot(vb, create @ vk)
                me_annihilate = np.vdot(vb, annihilate @ vk)
                report["pairs_checked"] += 1
                if dn != 1:
                    report["max_selection_rule_dev"] = max(
                        report["max_selection_rule_dev"], abs(me_create)
                    )
                if dn != -1:
                    report["max_selection_rule_dev"] = max(
                        report["max_selection_rule_dev"], abs(me_annihilate)
                    )
                if dn in (1, -1):
                    x_me = np.vdot(vb, x_form @ vk)
                    y_me = np.vdot(vb, y_form @ vk)
                    ladder_me = me_create if dn == 1 else me_annihilate
                    y_factor = -1j if dn == 1 else 1j
                    report["max_x_identity_dev"] = max(
                        report["max_x_identity_dev"], abs(ladder_me - x_me)
                    )
                    report["max_y_identity_dev"] = max(
                        report["max_y_identity_dev"], abs(ladder_me - y_factor * y_me)
                    )
    return report
