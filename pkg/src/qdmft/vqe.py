"""Variational eigensolver layer: ansatz circuits, Rotosolve, excited states
and transition-amplitude circuits.

All ansatz circuits use RY rotations only, which is sufficient because the
Hamiltonians here have real matrix elements and therefore real eigenvector
expansions.  The energy (and any |amplitude|^2 objective) then depends
sinusoidally on each individual angle, which Rotosolve exploits: three
evaluations per angle determine the sinusoid exactly and the minimizing
angle is jumped to in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .pauli import (
    ImpurityModel,
    PauliSum,
    Sector,
    add_number_penalty,
    build_reduced_hamiltonian,
    build_two_site_hamiltonian,
    default_penalty_strength,
    two_site_number_operator,
    two_site_spin_z_operator,
)
from .simulator import (
    Circuit,
    SpamModel,
    derive_seed,
    expectation_exact,
    expectation_sampled,
    rng_stream,
    run_circuit,
    zero_state_probability,
)
from .spectra import SpectralData, SpectralPole


@dataclass(frozen=True)
class EvalMode:
    """Expectation-value evaluation mode: exact statevector or shot sampling."""

    shots: int | None = None
    seed: int = 0
    spam: SpamModel | None = None
    correct_spam: bool = False
    shots_per_term: bool = True

    @property
    def exact(self) -> bool:
        return self.shots is None

    def child(self, stream: int) -> "EvalMode":
        """Same mode with an independently derived seed."""
        if self.exact:
            return self
        return replace(self, seed=derive_seed(self.seed, stream))


EXACT = EvalMode()


def shots_mode(shots: int, seed: int, **kwargs) -> EvalMode:
    return EvalMode(shots=shots, seed=seed, **kwargs)


# ---------------------------------------------------------------------------
# Ansatz circuits
# ---------------------------------------------------------------------------

ANSATZ_KINDS = ("pt4", "pt4x", "cr2_n2", "cr2_n13")


@dataclass(frozen=True)
class Ansatz:
    """Parametric state-preparation circuit family.

    ``pt4``: 4 qubits, RY layer / CX chain / RY layer, 8 angles.
    ``pt4x``: pt4 plus one trailing RY on qubit 0, 9 angles; needed to reach
    all states away from particle-hole symmetry.
    ``cr2_n2``: 2 qubits, RY pair / CX / RY pair, 4 angles (one redundant).
    ``cr2_n13``: 2 qubits, a single RY on qubit 1; ``flip`` prepends RY(pi)
    on qubit 0 to select the degenerate partner with the opposite spin label.
    """

    kind: str
    flip: bool = False

    def __post_init__(self):
        if self.kind not in ANSATZ_KINDS:
            raise ValueError(f"unknown ansatz kind {self.kind!r}")
        if self.flip and self.kind != "cr2_n13":
            raise ValueError("flip is only meaningful for cr2_n13")

    @property
    def n_qubits(self) -> int:
        return 4 if self.kind.startswith("pt") else 2

    @property
    def n_params(self) -> int:
        return {"pt4": 8, "pt4x": 9, "cr2_n2": 4, "cr2_n13": 1}[self.kind]

    def circuit(self, params) -> Circuit:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(
                f"{self.kind} expects {self.n_params} angles, got {params.shape}"
            )
        c = Circuit(self.n_qubits)
        if self.kind in ("pt4", "pt4x"):
            for q in range(4):
                c.ry(q, params[q])
            c.cx(0, 1).cx(1, 2).cx(2, 3)
            for q in range(4):
                c.ry(q, params[4 + q])
            if self.kind == "pt4x":
                c.ry(0, params[8])
        elif self.kind == "cr2_n2":
            c.ry(0, params[0]).ry(1, params[1])
            c.cx(0, 1)
            c.ry(0, params[2]).ry(1, params[3])
        else:  # cr2_n13
            if self.flip:
                c.ry(0, math.pi)
            c.ry(1, params[0])
        return c


# ---------------------------------------------------------------------------
# Rotosolve
# ---------------------------------------------------------------------------


def rotosolve_minimize(
    objective,
    theta0,
    max_sweeps: int = 60,
    tol: float = 1e-12,
):
    """Coordinate-descent minimizer for objectives sinusoidal in each angle.

    With the other angles held fixed, f(theta_i + phi) = c + A cos(phi)
    + B sin(phi), where c = (f+ + f-)/2, A = f0 - c, B = (f+ - f-)/2 from the
    three evaluations at phi in {0, +pi/2, -pi/2}.  The minimizer is
    phi* = atan2(-B, -A) with value c - sqrt(A^2 + B^2); a flat sinusoid
    keeps the current angle.  Sweeps stop once the objective improves by
    less than ``tol``.
    """
    theta = np.array(theta0, dtype=float)
    value = float(objective(theta))
    if not math.isfinite(value):
        raise RuntimeError(f"non-finite objective value {value} at start")
    for _ in range(max_sweeps):
        previous = value
        for i in range(len(theta)):
            base = theta[i]
            probe = theta.copy()
            probe[i] = base + math.pi / 2
            f_plus = float(objective(probe))
            probe[i] = base - math.pi / 2
            f_minus = float(objective(probe))
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise RuntimeError("non-finite objective value during sweep")
            c = 0.5 * (f_plus + f_minus)
            amp_cos = value - c
            amp_sin = 0.5 * (f_plus - f_minus)
            amplitude = math.hypot(amp_cos, amp_sin)
            if amplitude <= 1e-15:
                continue  # flat direction: keep the current angle
            shift = math.atan2(-amp_sin, -amp_cos)
            new_angle = base + shift
            new_angle = (new_angle + math.pi) % (2 * math.pi) - math.pi
            theta[i] = new_angle
            value = c - amplitude
        if previous - value < tol:
            break
    # re-evaluate so stochastic objectives report a realized value
    value = float(objective(theta))
    return theta, value


# ---------------------------------------------------------------------------
# Eigenstate search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Eigenstate:
    sector: Sector
    index: int
    energy: float
    params: tuple[float, ...]
    circuit: Circuit
    converged: bool = True

    def state(self) -> np.ndarray:
        return run_circuit(self.circuit)


def _energy_evaluator(h: PauliSum, ansatz: Ansatz, mode: EvalMode):
    """Objective closure; sampled calls consume sequential seed streams."""
    if mode.exact:

        def objective(theta):
            return expectation_exact(run_circuit(ansatz.circuit(theta)), h)

        return objective

    counter = [0]

    def objective(theta):
        counter[0] += 1
        return expectation_sampled(
            ansatz.circuit(theta),
            h,
            mode.shots,
            derive_seed(mode.seed, counter[0]),
            spam=mode.spam,
            correct_spam=mode.correct_spam,
            shots_per_term=mode.shots_per_term,
        )

    return objective


def measured_energy(h: PauliSum, circuit: Circuit, mode: EvalMode, stream: int = 0) -> float:
    """Energy at fixed angles, from a fresh stream in sampled mode."""
    if mode.exact:
        return expectation_exact(run_circuit(circuit), h)
    return expectation_sampled(
        circuit,
        h,
        mode.shots,
        derive_seed(mode.seed, 10_000 + stream),
        spam=mode.spam,
        correct_spam=mode.correct_spam,
        shots_per_term=mode.shots_per_term,
    )


def _overlap_probability(candidate: Circuit, prior: Circuit, mode: EvalMode, stream: int) -> float:
    """|<prior|candidate>|^2 via the all-zeros return probability."""
    combined = candidate.extended(prior.inverse())
    if mode.exact:
        return zero_state_probability(combined)
    return zero_state_probability(
        combined,
        shots=mode.shots,
        rng_seed=derive_seed(mode.seed, 20_000 + stream),
        spam=mode.spam,
        correct_spam=mode.correct_spam,
    )


def _label_sector(
    circuit: Circuit, ansatz: Ansatz, sector_hint: Sector | None
) -> tuple[Sector, bool]:
    """Exact-expectation sector labels, flagged when far from integers."""
    state = run_circuit(circuit)
    if ansatz.kind in ("pt4", "pt4x"):
        n_val = expectation_exact(state, two_site_number_operator())
        sz_val = expectation_exact(state, two_site_spin_z_operator())
        n_round, sz_round = round(n_val), round(sz_val)
        ok = abs(n_val - n_round) <= 0.1 and abs(sz_val - sz_round) <= 0.1
        return Sector(int(n_round), int(sz_round)), ok
    if ansatz.kind == "cr2_n13":
        if sector_hint is None:
            raise ValueError("reduced-register solves need a sector hint")
        # the first reduced qubit stores -S_z for these sectors
        z1 = expectation_exact(state, PauliSum.from_term("ZI"))
        sz = -round(z1)
        ok = abs(z1 - round(z1)) <= 0.1
        return Sector(sector_hint.n_electrons, int(sz)), ok
    if sector_hint is None:
        raise ValueError("reduced-register solves need a sector hint")
    return sector_hint, True


def find_ground_state(
    h: PauliSum,
    ansatz: Ansatz,
    mode: EvalMode = EXACT,
    restarts: int = 5,
    seed: int = 0,
    max_sweeps: int = 60,
    tol: float = 1e-12,
    sector_hint: Sector | None = None,
    bias: tuple[PauliSum, float] | None = None,
    initial_params=None,
) -> Eigenstate:
    """Lowest-energy state over several Rotosolve runs from seeded starts.

    ``bias`` adds a small operator term to the optimization objective only
    (used to pin a definite spin label inside degenerate subspaces); the
    reported energy always refers to ``h`` itself, re-measured independently
    at the optimal angles in sampled mode.
    """
    if ansatz.n_qubits != h.n_qubits:
        raise ValueError("ansatz register does not match the Hamiltonian")
    objective_h = h if bias is None else (h + bias[1] * bias[0]).real_coefficients()

    best: tuple[float, np.ndarray] | None = None
    starts = []
    if initial_params is not None:
        starts.append(np.asarray(initial_params, dtype=float))
    for r in range(max(1, restarts) - len(starts)):
        rng = rng_stream(seed, 1_000 + r)
        starts.append(rng.uniform(-math.pi, math.pi, size=ansatz.n_params))
    for r, theta0 in enumerate(starts):
        run_mode = mode.child(30_000 + r)
        objective = _energy_evaluator(objective_h, ansatz, run_mode)
        theta, value = rotosolve_minimize(objective, theta0, max_sweeps, tol)
        if best is None or value < best[0]:
            best = (value, theta)
    theta = best[1]
    circuit = ansatz.circuit(theta)
    energy = measured_energy(h, circuit, mode)
    sector, ok = _label_sector(circuit, ansatz, sector_hint)
    return Eigenstate(
        sector=sector,
        index=0,
        energy=energy,
        params=tuple(float(t) for t in theta),
        circuit=circuit,
        converged=ok,
    )


def find_excited_state(
    h: PauliSum,
    ansatz: Ansatz,
    priors: list[Eigenstate],
    mode: EvalMode = EXACT,
    beta_overlap: float | None = None,
    restarts: int = 5,
    seed: int = 0,
    max_sweeps: int = 60,
    tol: float = 1e-12,
    sector_hint: Sector | None = None,
    bias: tuple[PauliSum, float] | None = None,
    overlap_tol: float = 0.01,
) -> Eigenstate:
    """Next eigenstate above ``priors`` via overlap-penalized minimization.

    Minimizes <H> + sum_k beta_k |<psi_k|psi(theta)>|^2; each overlap is the
    all-zeros probability of the candidate circuit followed by the inverted
    prior circuit.  The result is flagged unconverged if its final exact
    overlap with any prior state exceeds ``overlap_tol``.
    """
    if beta_overlap is None:
        beta_overlap = 2.0 * h.coefficient_norm()
    if beta_overlap == 0.0 or not priors:
        return find_ground_state(
            h, ansatz, mode, restarts, seed, max_sweeps, tol, sector_hint, bias
        )
    objective_h = h if bias is None else (h + bias[1] * bias[0]).real_coefficients()

    best: tuple[float, np.ndarray] | None = None
    for r in range(max(1, restarts)):
        rng = rng_stream(seed, 2_000 + r)
        theta0 = rng.uniform(-math.pi, math.pi, size=ansatz.n_params)
        run_mode = mode.child(40_000 + r)
        energy_obj = _energy_evaluator(objective_h, ansatz, run_mode)
        counter = [0]

        def objective(theta):
            counter[0] += 1
            value = energy_obj(theta)
            candidate = ansatz.circuit(theta)
            for k, prior in enumerate(priors):
                value += beta_overlap * _overlap_probability(
                    candidate, prior.circuit, run_mode, counter[0] * 64 + k
                )
            return value

        theta, value = rotosolve_minimize(objective, theta0, max_sweeps, tol)
        if best is None or value < best[0]:
            best = (value, theta)
    theta = best[1]
    circuit = ansatz.circuit(theta)
    energy = measured_energy(h, circuit, mode)
    sector, ok = _label_sector(circuit, ansatz, sector_hint)
    # exact-mode residual overlap check, independent of sampling noise
    for prior in priors:
        if _overlap_probability(circuit, prior.circuit, EXACT, 0) > overlap_tol:
            ok = False
    return Eigenstate(
        sector=sector,
        index=len(priors),
        energy=energy,
        params=tuple(float(t) for t in theta),
        circuit=circuit,
        converged=ok,
    )


# ---------------------------------------------------------------------------
# Transition amplitudes
# ---------------------------------------------------------------------------


def transition_amplitude(
    ground: Eigenstate,
    excited: Eigenstate,
    alpha: int = 0,
    representation: str = "pt",
    mode: EvalMode = EXACT,
    stream: int = 0,
) -> float:
    """Squared transition matrix element between sectors differing by one electron.

    ``pt``: on the full register, runs the ground circuit, inserts the
    Jordan-Wigner string (Z on qubits before alpha, X on alpha), then the
    inverted excited circuit, and returns the all-zeros probability.

    ``cr``: same sandwich on the reduced two-qubit registers with X on the
    reduced spin-label qubit; spin-forbidden combinations return 0 without
    circuit evaluation because the reduced encoding only matches the physical
    matrix element in the spin-allowed branch.
    """
    dn = excited.sector.n_electrons - ground.sector.n_electrons
    if dn not in (1, -1):
        raise ValueError("sectors must differ by exactly one electron")
    if representation == "cr":
        if alpha != 0:
            raise ValueError("reduced-register amplitudes are built for orbital 0")
        allowed_sz = ground.sector.sz + dn  # orbital 0 carries spin up
        if excited.sector.sz != allowed_sz:
            return 0.0
        sandwich = excited.circuit.copy().x(0).extended(ground.circuit.inverse())
    elif representation == "pt":
        insert = Circuit(ground.circuit.n_qubits)
        for q in range(alpha):
            insert.z(q)
        insert.x(alpha)
        sandwich = ground.circuit.extended(insert).extended(excited.circuit.inverse())
    else:
        raise ValueError(f"unknown representation {representation!r}")
    if mode.exact:
        return zero_state_probability(sandwich)
    value = zero_state_probability(
        sandwich,
        shots=mode.shots,
        rng_seed=derive_seed(mode.seed, 50_000 + stream),
        spam=mode.spam,
        correct_spam=mode.correct_spam,
    )
    return float(min(max(value, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Spectrum orchestration for the two-site model
# ---------------------------------------------------------------------------

# magnitude of the spin-label bias used to split degenerate pairs in the
# full-register path; small versus level spacings, large versus Rotosolve tol
_SZ_BIAS = 1e-2


@dataclass(frozen=True)
class SpectrumResult:
    spectral: SpectralData
    states: dict[str, Eigenstate]
    converged: bool


def _pt_sector_states(
    h: PauliSum,
    n_target: int,
    count: int,
    ansatz: Ansatz,
    mode: EvalMode,
    seed: int,
    restarts: int,
    carrier_sz_first: int,
    max_sweeps: int,
    tol: float,
) -> list[Eigenstate]:
    """All ``count`` penalized-sector states, weight carriers first in ties."""
    penalized = add_number_penalty(h, default_penalty_strength(h), n_target)
    sz_op = two_site_spin_z_operator()
    bias = (sz_op, -_SZ_BIAS * carrier_sz_first)
    states: list[Eigenstate] = []
    for k in range(count):
        est = find_excited_state(
            penalized,
            ansatz,
            states,
            mode=mode.child(60_000 + 97 * n_target + k),
            restarts=restarts,
            seed=derive_seed(seed, 70_000 + 97 * n_target + k),
            max_sweeps=max_sweeps,
            tol=tol,
            bias=bias,
        )
        # report the physical (unpenalized) energy
        energy = measured_energy(h, est.circuit, mode.child(61_000 + 97 * n_target + k))
        states.append(replace(est, energy=energy, index=k))
    return states


def solve_spectrum(
    model: ImpurityModel,
    method: str = "cr",
    mode: EvalMode = EXACT,
    seed: int = 0,
    restarts: int = 5,
    max_sweeps: int = 60,
    tol: float = 1e-12,
    measure_lambdas: bool = True,
) -> SpectrumResult:
    """Ground state, adjacent-sector spectra and transition weights via VQE.

    At particle-hole symmetry (mu = U/2, eps2 = 0) the hole data mirror the
    particle data and only the particle side is computed.  With
    ``measure_lambdas=False`` all weights are reported as zero placeholders
    (the self-consistency loop then fills them in from the regularization
    sum rules instead of running the longer amplitude circuits).
    """
    U, mu, eps2, V = model.two_site_params
    ph_symmetric = abs(mu - U / 2) < 1e-12 and abs(eps2) < 1e-12
    if method not in ("cr", "pt"):
        raise ValueError(f"unknown method {method!r}")

    states: dict[str, Eigenstate] = {}
    converged = True

    if method == "cr":
        h_ground = build_reduced_hamiltonian(Sector(2, 0), U, mu, eps2, V)
        ground = find_ground_state(
            h_ground,
            Ansatz("cr2_n2"),
            mode=mode.child(1),
            restarts=restarts,
            seed=derive_seed(seed, 1),
            max_sweeps=max_sweeps,
            tol=tol,
            sector_hint=Sector(2, 0),
        )
        states["ground"] = ground
        converged &= ground.converged

        def sector_pair(n_electrons: int, stream: int):
            h_red = build_reduced_hamiltonian(Sector(n_electrons, 1), U, mu, eps2, V)
            lowest = find_ground_state(
                h_red,
                Ansatz("cr2_n13"),
                mode=mode.child(stream),
                restarts=restarts,
                seed=derive_seed(seed, stream),
                max_sweeps=max_sweeps,
                tol=tol,
                sector_hint=Sector(n_electrons, -1),
            )
            upper = find_excited_state(
                h_red,
                Ansatz("cr2_n13"),
                [lowest],
                mode=mode.child(stream + 1),
                restarts=restarts,
                seed=derive_seed(seed, stream + 1),
                max_sweeps=max_sweeps,
                tol=tol,
                sector_hint=Sector(n_electrons, -1),
            )
            return lowest, upper

        def carrier_partner(est: Eigenstate, n_electrons: int, carrier_sz: int):
            flipped = Ansatz("cr2_n13", flip=True).circuit(np.asarray(est.params))
            return replace(
                est, circuit=flipped, sector=Sector(n_electrons, carrier_sz)
            )

        particle_low, particle_high = sector_pair(3, 3)
        converged &= particle_low.converged and particle_high.converged
        # carrier partners (spin raised by adding an up electron) need the flip
        p_low_c = carrier_partner(particle_low, 3, 1)
        p_high_c = carrier_partner(particle_high, 3, 1)
        states.update(
            {
                "particle_0": p_low_c,
                "particle_1": replace(particle_low, sector=Sector(3, -1)),
                "particle_2": p_high_c,
                "particle_3": replace(particle_high, sector=Sector(3, -1)),
            }
        )
        if not ph_symmetric:
            hole_low, hole_high = sector_pair(1, 5)
            converged &= hole_low.converged and hole_high.converged
            # hole carriers have spin lowered: the unflipped circuit already
            # prepares the S_z = -1 partner
            states.update(
                {
                    "hole_0": replace(hole_low, sector=Sector(1, -1)),
                    "hole_1": carrier_partner(hole_low, 1, 1),
                    "hole_2": replace(hole_high, sector=Sector(1, -1)),
                    "hole_3": carrier_partner(hole_high, 1, 1),
                }
            )
    else:  # pt
        h_full = build_two_site_hamiltonian(U, mu, eps2, V)
        kind = "pt4" if ph_symmetric else "pt4x"
        ground = find_ground_state(
            h_full,
            Ansatz(kind),
            mode=mode.child(1),
            restarts=restarts,
            seed=derive_seed(seed, 1),
            max_sweeps=max_sweeps,
            tol=tol,
        )
        states["ground"] = ground
        converged &= ground.converged
        particle_states = _pt_sector_states(
            h_full, 3, 4, Ansatz(kind), mode, seed, restarts, +1, max_sweeps, tol
        )
        for k, est in enumerate(particle_states):
            states[f"particle_{k}"] = est
            converged &= est.converged
        if not ph_symmetric:
            hole_states = _pt_sector_states(
                h_full, 1, 4, Ansatz(kind), mode, seed, restarts, -1, max_sweeps, tol
            )
            for k, est in enumerate(hole_states):
                states[f"hole_{k}"] = est
                converged &= est.converged

    representation = method if method == "pt" else "cr"
    e0 = states["ground"].energy

    def sort_rows(rows):
        # ascending in omega; carrier rank breaks ties inside degenerate
        # blocks, whose members are snapped to a common omega (the spread
        # within a block is optimizer error on an exact degeneracy)
        rows = sorted(rows, key=lambda r: r[0])
        out = []
        i = 0
        while i < len(rows):
            j = i + 1
            while j < len(rows) and abs(rows[j][0] - rows[i][0]) < 1e-6:
                j += 1
            block = sorted(rows[i:j], key=lambda r: (r[1], r[2]))
            out.extend((rows[i][0], rank, k, lam) for _, rank, k, lam in block)
            i = j
        return tuple(SpectralPole(w, (lam,)) for w, _, _, lam in out)

    def poles(prefix: str, dn: int):
        keys = sorted(k for k in states if k.startswith(prefix))
        carrier_sz = states["ground"].sector.sz + dn  # orbital 0 is spin-up
        rows = []
        for j, key in enumerate(keys):
            est = states[key]
            omega = est.energy - e0 if dn > 0 else e0 - est.energy
            if measure_lambdas:
                lam = transition_amplitude(
                    states["ground"],
                    est,
                    alpha=0,
                    representation=representation,
                    mode=mode.child(7_000 + 13 * (dn + 2) + j),
                    stream=13 * (dn + 2) + j,
                )
            else:
                lam = 0.0
            rank = 0 if est.sector.sz == carrier_sz else 1
            rows.append((omega, rank, j, lam))
        return sort_rows(rows)

    particle = poles("particle_", +1)
    if ph_symmetric:
        mirrored = [
            (-p.omega, 0 if p.lambdas[0] > 0 or not measure_lambdas else 1, j, p.lambdas[0])
            for j, p in enumerate(particle)
        ]
        hole = sort_rows(mirrored)
    else:
        hole = poles("hole_", -1)

    spectral = SpectralData(
        n0=states["ground"].sector.n_electrons, e0=e0, particle=particle, hole=hole
    )
    return SpectrumResult(spectral=spectral, states=states, converged=converged)


# ---------------------------------------------------------------------------
# Angle import/export
# ---------------------------------------------------------------------------


def export_angles(states: dict[str, Eigenstate]) -> str:
    payload = {
        key: {
            "params": list(est.params),
            "n_electrons": est.sector.n_electrons,
            "sz": est.sector.sz,
            "energy": est.energy,
        }
        for key, est in sorted(states.items())
    }
    return json.dumps(payload, indent=1, sort_keys=True)


def import_angles(text: str) -> dict[str, dict]:
    return json.loads(text)
