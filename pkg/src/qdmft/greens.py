"""Classical spectral post-processing: Green's functions, self-energy,
quasiparticle weight, densities of states, occupations, and the
sum-rule regularization of noisy transition weights.

Everything is evaluated from closed-form pole sums; no numerical inversion
of sampled grids ever happens.  The impurity Green's function is a sum of
simple real poles with nonnegative weights,

    G(w) = sum_k lambda_k / (w + i*delta - w_k),

its non-interacting counterpart is G0(w) = [w + i*delta + mu - eps
- Delta(w)]^-1 with the hybridization Delta(w) = sum_i V_i^2/(w + i*delta
- eps_i), and the self-energy is Sigma = G0^-1 - G^-1.  Exact weights make
the pole of G0^-1 at each bath energy cancel against the pole of G^-1
there; the regularization step restores that cancellation for noisy
weights by solving a small equality-constrained least-squares problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .pauli import ImpurityModel
from .spectra import SpectralData, SpectralPole


class SigmaPoleError(RuntimeError):
    """The self-energy has an uncanceled divergence where it must be finite."""


class RegularizationError(RuntimeError):
    """The sum-rule constraints cannot be satisfied for the given poles."""


def bethe_dos(x):
    """Semicircular density of states, half-bandwidth 2, unit weight."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 2.0
    out = np.zeros_like(x)
    out[inside] = np.sqrt(4.0 - x[inside] ** 2) / (2.0 * math.pi)
    return out if out.ndim else float(out)


def hybridization(
    model: ImpurityModel, omega, delta: float = 0.0, alpha: int = 0
) -> complex | np.ndarray:
    """Bath influence function of one impurity orbital."""
    eps, v_sq = _bath_levels(model, alpha)
    z = _shift(omega, delta)
    zz = np.asarray(z, dtype=complex)
    out = np.zeros_like(zz)
    for e, v2 in zip(eps, v_sq):
        out = out + v2 / (zz - e)
    return out if out.ndim else complex(out)


def _bath_levels(model: ImpurityModel, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct bath energies coupled to the orbital, with summed |V|^2."""
    levels: dict[float, float] = {}
    for i in range(model.n_bath):
        v = model.hoppings[alpha][i]
        if v != 0.0:
            e = float(model.eps_bath[i])
            levels[e] = levels.get(e, 0.0) + float(v) ** 2
    eps = np.array(sorted(levels))
    return eps, np.array([levels[e] for e in eps])


def _shift(omega, delta: float):
    arr = np.asarray(omega)
    if np.iscomplexobj(arr):
        return arr
    return arr + 1j * float(delta)


@dataclass(frozen=True)
class GreensEvaluator:
    """Pole-sum evaluator for one impurity orbital of a model.

    ``delta`` is the default broadening for real frequencies; methods taking
    an explicit ``delta`` override it, and complex frequencies are used
    as given.  Degenerate poles of the spectral data are merged on
    construction.
    """

    spectral: SpectralData
    model: ImpurityModel
    delta: float = 0.05
    alpha: int = 0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("broadening delta must be positive")
        merged = self.spectral.merged()
        object.__setattr__(self, "spectral", merged)
        poles = [(p.omega, p.lambdas[self.alpha]) for p in merged.hole] + [
            (p.omega, p.lambdas[self.alpha]) for p in merged.particle
        ]
        object.__setattr__(
            self, "_omegas", np.array([w for w, _ in poles], dtype=float)
        )
        object.__setattr__(
            self, "_weights", np.array([l for _, l in poles], dtype=float)
        )
        if not np.all(np.isfinite(self._omegas)):
            raise ValueError("pole energies must be finite")

    # pole data -------------------------------------------------------------

    @property
    def pole_energies(self) -> np.ndarray:
        return self._omegas.copy()

    @property
    def pole_weights(self) -> np.ndarray:
        return self._weights.copy()

    def bath_levels(self) -> tuple[np.ndarray, np.ndarray]:
        return _bath_levels(self.model, self.alpha)

    @property
    def eps_alpha(self) -> float:
        return float(self.model.eps_imp[self.alpha])

    # evaluations -----------------------------------------------------------

    def greens(self, omega, delta: float | None = None):
        """Lehmann pole sum; real frequencies get the +i*delta shift."""
        d = self.delta if delta is None else delta
        z = np.asarray(_shift(omega, d), dtype=complex)
        z = self._nudge_off_poles(z)
        out = np.zeros_like(z)
        for w, lam in zip(self._omegas, self._weights):
            out = out + lam / (z - w)
        return out if out.ndim else complex(out)

    def _nudge_off_poles(self, z: np.ndarray):
        flat = np.atleast_1d(z)
        for w in self._omegas:
            hit = np.abs(flat - w) < 1e-300
            if np.any(hit):
                flat[hit] += 64 * np.finfo(float).eps * max(1.0, abs(w))
        return z

    def greens_derivative(self, omega, order: int = 1, delta: float | None = None):
        d = self.delta if delta is None else delta
        z = np.asarray(_shift(omega, d), dtype=complex)
        out = np.zeros_like(z)
        factor = math.factorial(order) * (-1.0) ** order
        for w, lam in zip(self._omegas, self._weights):
            out = out + factor * lam / (z - w) ** (order + 1)
        return out if out.ndim else complex(out)

    def hybridization(self, omega, delta: float | None = None):
        d = self.delta if delta is None else delta
        return hybridization(self.model, omega, d, self.alpha)

    def g0_inverse(self, omega, delta: float | None = None):
        d = self.delta if delta is None else delta
        z = _shift(omega, d)
        return z - self.eps_alpha + self.model.mu - self.hybridization(omega, d)

    def g0(self, omega, delta: float | None = None):
        return 1.0 / self.g0_inverse(omega, delta)

    def self_energy(self, omega, delta: float | None = None):
        """Sigma = G0^-1 - G^-1 from the closed forms.

        Points where |G| < 1e-14 are poles of Sigma; they evaluate to inf
        rather than raising so that grid evaluations stay total.
        """
        g = np.asarray(self.greens(omega, delta), dtype=complex)
        g0inv = np.asarray(self.g0_inverse(omega, delta), dtype=complex)
        tiny = np.abs(g) < 1e-14
        safe = np.where(tiny, 1.0, g)
        out = np.where(tiny, complex(np.inf, 0.0), g0inv - 1.0 / safe)
        return out if out.ndim else complex(out)

    # quasiparticle weight ----------------------------------------------------

    def _taylor_g(self) -> tuple[float, float, float, float]:
        w, lam = self._omegas, self._weights
        if np.any(np.abs(w) < 1e-12):
            raise SigmaPoleError("Green's function pole sits exactly at omega = 0")
        g0 = float(np.sum(lam / (0.0 - w)))
        g1 = float(-np.sum(lam / w**2))
        g2 = float(-np.sum(lam / w**3))
        g3 = float(-np.sum(lam / w**4))
        return g0, g1, g2, g3

    def sigma_derivative_at_zero(self) -> float:
        """d Re Sigma / d omega at omega = 0 from the analytic pole sums.

        When G(0) = 0 (particle-hole-symmetric-like data) both G^-1 and the
        hybridization diverge at 0; the divergences must cancel, and the
        derivative of the remaining regular part is taken via the series
        expansion of 1/G.
        """
        g0, g1, g2, g3 = self._taylor_g()
        eps, v_sq = self.bath_levels()
        at_zero = np.abs(eps) < 1e-12
        v0_sq = float(np.sum(v_sq[at_zero]))
        delta_reg_prime = float(-np.sum(v_sq[~at_zero] / eps[~at_zero] ** 2))
        if abs(g0) < 1e-8:
            if abs(g1) < 1e-300:
                raise SigmaPoleError("degenerate Green's function at omega = 0")
            residue = v0_sq + 1.0 / g1
            if abs(residue) > 1e-6:
                raise SigmaPoleError(
                    f"uncanceled self-energy pole at omega = 0 (residue {residue:.3e})"
                )
            return 1.0 - delta_reg_prime - g2**2 / g1**3 + g3 / g1**2
        if v0_sq > 0.0:
            raise SigmaPoleError(
                "bath level at omega = 0 but G(0) != 0: divergence cannot cancel"
            )
        return 1.0 - delta_reg_prime + g1 / g0**2

    def quasiparticle_weight(self, cross_check: bool = True) -> float:
        """z = 1 / (1 - dReSigma/dw at 0), from the analytic derivative.

        Cross-checked against z = 1/(1 - Im Sigma(i*delta)/delta) at
        delta = 1e-5 whenever the lowest excitation energy is large enough
        for that finite-delta formula to sit in its asymptotic regime.
        """
        sigma_prime = self.sigma_derivative_at_zero()
        denom = 1.0 - sigma_prime
        if denom <= 0.0:
            raise SigmaPoleError(f"non-physical slope: 1 - Sigma'(0) = {denom:.3e}")
        z = 1.0 / denom
        omega_min = float(np.min(np.abs(self._omegas)))
        if cross_check and omega_min > 1e-2:
            d = 1e-5
            sigma_i = self.self_energy(complex(0.0, d), delta=0.0)
            z_delta = 1.0 / (1.0 - sigma_i.imag / d)
            if abs(z_delta - z) > 1e-4 * max(abs(z), 1e-12):
                raise SigmaPoleError(
                    f"z cross-check failed: series {z:.8f} vs i*delta {z_delta:.8f}"
                )
        return z

    # unphysical-pole detection ----------------------------------------------

    def sigma_pole_residues(self) -> list[tuple[float, float]]:
        """Estimated |residue| of Sigma at each bath energy.

        Sigma(eps + i*d) ~ R/(i*d) + regular near an uncanceled pole, so
        -Im Sigma(eps + i*d) * d estimates R; for exact weights the estimate
        is O(d^2).
        """
        out = []
        d = 1e-5
        eps, _ = self.bath_levels()
        for e in eps:
            sigma = self.self_energy(complex(float(e), d), delta=0.0)
            if not np.isfinite(sigma):
                out.append((float(e), math.inf))
            else:
                out.append((float(e), abs(-sigma.imag * d)))
        return out

    def has_unphysical_sigma_poles(self, threshold: float = 1e-6) -> bool:
        return any(r > threshold for _, r in self.sigma_pole_residues())


# ---------------------------------------------------------------------------
# Densities of states and occupations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DosCurve:
    omega: np.ndarray
    values: np.ndarray
    kind: str  # "impurity" | "lattice"

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.omega))

    def local_maxima(self, floor: float = 1e-8) -> int:
        v = self.values
        count = 0
        for i in range(1, len(v) - 1):
            if v[i] > floor and v[i] > v[i - 1] and v[i] > v[i + 1]:
                count += 1
        return count


def dos_impurity(ev: GreensEvaluator, grid, delta: float | None = None) -> DosCurve:
    """-(2/pi) Im G(w + i*delta); the factor 2 counts both spins."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    g = ev.greens(grid, delta)
    return DosCurve(grid, -(2.0 / math.pi) * np.imag(g), "impurity")


def dos_lattice(ev: GreensEvaluator, grid) -> DosCurve:
    """Lattice density of states 2 rho0(w + mu - Sigma(w)) on the real axis.

    Sigma is evaluated in its delta -> 0 limit (real part of the closed
    rational form); at Sigma poles the argument leaves the band and the
    density vanishes.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    sigma = np.asarray(ev.self_energy(grid, delta=0.0))
    x = grid + ev.model.mu - np.where(np.isfinite(sigma), sigma.real, np.inf)
    values = 2.0 * bethe_dos(np.where(np.isfinite(x), x, 3.0))
    return DosCurve(grid, values, "lattice")


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 28) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + recurse(
            m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1
        )

    return recurse(a, fa, b, fb, m, fm, whole, tol, depth)


def _greens_zeros(ev: GreensEvaluator, lo: float, hi: float) -> list[float]:
    """Real zeros of G between its poles inside [lo, hi] (G is decreasing there)."""
    zeros = []
    poles = np.sort(ev.pole_energies)

    def g_real(w):
        return ev.greens(float(w), delta=0.0).real

    for left, right in zip(poles[:-1], poles[1:]):
        if right < lo or left > hi or right - left < 1e-12:
            continue
        a = left + 1e-9 * max(1.0, abs(left))
        b = right - 1e-9 * max(1.0, abs(right))
        if a >= b:
            continue
        ga, gb = g_real(a), g_real(b)
        if ga == 0.0:
            zeros.append(a)
        elif gb == 0.0:
            zeros.append(b)
        elif ga * gb < 0:
            zeros.append(float(brentq(g_real, a, b, xtol=1e-13)))
    return [z for z in zeros if lo < z < hi]


def lattice_occupation(ev: GreensEvaluator, tol: float = 1e-6) -> float:
    """Integral of the lattice density of states over negative energies.

    Adaptive Simpson with forced panel breaks at the self-energy poles
    (zeros of G) and at the band-edge crossings, located by scanning for
    sign changes of the band argument against +-2.
    """
    mu = ev.model.mu
    span = float(np.max(np.abs(ev.pole_energies))) if len(ev.pole_energies) else 2.0
    lower = -(2.0 * span + abs(mu) + 6.0)

    def band_argument(w):
        sigma = ev.self_energy(float(w), delta=0.0)
        if not np.isfinite(sigma):
            return math.inf
        return w + mu - sigma.real

    def integrand(w):
        x = band_argument(w)
        if not math.isfinite(x) or abs(x) >= 2.0:
            return 0.0
        return 2.0 * bethe_dos(x)

    breaks = sorted({lower, 0.0, *_greens_zeros(ev, lower, 0.0)})
    refined = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        # locate band edges inside (a, b): scan for sign changes of x -+ 2
        scan = np.linspace(a, b, 801)[1:-1]
        vals = np.array([band_argument(w) for w in scan])
        for target in (-2.0, 2.0):
            diff = vals - target
            finite = np.isfinite(diff)
            for i in range(len(scan) - 1):
                if not (finite[i] and finite[i + 1]):
                    continue
                if diff[i] == 0.0:
                    refined.append(float(scan[i]))
                elif diff[i] * diff[i + 1] < 0:
                    root = brentq(
                        lambda w: band_argument(w) - target, scan[i], scan[i + 1], xtol=1e-12
                    )
                    refined.append(float(root))
        refined.append(b)
    refined = sorted(set(refined))

    total = 0.0
    for a, b in zip(refined[:-1], refined[1:]):
        if b - a < 1e-12:
            continue
        mid = 0.5 * (a + b)
        x = band_argument(mid)
        if not math.isfinite(x) or abs(x) >= 2.0:
            continue
        total += _adaptive_simpson(integrand, a, b, tol / max(1, len(refined)))
    return total


def impurity_occupation(ev: GreensEvaluator) -> float:
    """Exact delta -> 0 limit of the impurity DOS integral over w < 0.

    Each Lorentzian contributes its full weight when its pole is below zero,
    so the occupation is twice the summed weight of the negative poles (the
    hole poles, for a ground state with the lowest energy in its sector).
    """
    w, lam = ev.pole_energies, ev.pole_weights
    return float(2.0 * np.sum(lam[w < 0.0]))


def occupations(ev: GreensEvaluator, tol: float = 1e-6) -> tuple[float, float]:
    return impurity_occupation(ev), lattice_occupation(ev, tol)


# ---------------------------------------------------------------------------
# Regularization of transition weights
# ---------------------------------------------------------------------------


def closed_form_weight(omega_low: float, omega_high: float, v: float) -> float:
    """Weight of the lower particle pole enforcing both sum rules at
    particle-hole symmetry with a bath level at zero energy."""
    w0sq, w2sq, vsq = omega_low**2, omega_high**2, v**2
    denom = 2.0 * vsq * (w0sq - w2sq)
    if abs(denom) < 1e-300:
        raise RegularizationError("degenerate pole configuration")
    return w0sq * (vsq - w2sq) / denom


def regularization_constraints(
    omegas: np.ndarray, eps: np.ndarray, v_sq: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Constraint matrix and right-hand side: both cancellation rows per bath
    level plus the total-weight row."""
    rows = []
    rhs = []
    for e, v2 in zip(eps, v_sq):
        gaps = e - omegas
        if np.any(np.abs(gaps) < 1e-10):
            raise RegularizationError(
                f"excitation pole coincides with bath energy {e}"
            )
        rows.append(1.0 / gaps)
        rhs.append(0.0)
        rows.append(1.0 / gaps**2)
        rhs.append(1.0 / v2)
    rows.append(np.ones_like(omegas))
    rhs.append(1.0)
    return np.array(rows), np.array(rhs)


def _constrained_least_squares(
    measured: np.ndarray, c: np.ndarray, d: np.ndarray
) -> np.ndarray:
    n = len(measured)
    m = len(d)
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = 2.0 * np.eye(n)
    kkt[:n, n:] = c.T
    kkt[n:, :n] = c
    rhs = np.concatenate([2.0 * measured, d])
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise RegularizationError(f"singular constraint system: {exc}") from exc
    return solution[:n]


def _bounded_constrained_least_squares(
    measured: np.ndarray, c: np.ndarray, d: np.ndarray
) -> np.ndarray:
    """Equality-constrained LS with [0, 1] bounds via an active-set loop.

    Out-of-bound weights are pinned at the violated bound and the reduced
    problem is re-solved with the constraint right-hand side adjusted;
    pinning preserves the equality constraints exactly.
    """
    n = len(measured)
    fixed: dict[int, float] = {}
    for _ in range(n + 1):
        free = [i for i in range(n) if i not in fixed]
        if not free:
            raise RegularizationError("all weights pinned: constraints infeasible")
        d_eff = d - sum(c[:, i] * v for i, v in fixed.items())
        x_free = _constrained_least_squares(measured[free], c[:, free], d_eff)
        x = np.empty(n)
        for i, v in fixed.items():
            x[i] = v
        x[free] = x_free
        violations = [
            (i, 0.0 if x[i] < 0.0 else 1.0)
            for i in free
            if x[i] < -1e-12 or x[i] > 1.0 + 1e-12
        ]
        if not violations:
            return np.clip(x, 0.0, 1.0)
        worst = max(violations, key=lambda t: abs(x[t[0]] - t[1]))
        fixed[worst[0]] = worst[1]
    raise RegularizationError("active-set iteration failed to settle")


def regularize(
    spectral: SpectralData, model: ImpurityModel, force_general: bool = False
) -> SpectralData:
    """Minimal adjustment of the weights enforcing the cancellation rules.

    Pole energies are kept fixed and degenerate poles are merged first.  At
    particle-hole symmetry of the two-site model the constrained problem has
    the closed-form solution :func:`closed_form_weight` (together with its
    mirror and complement); the general path solves the KKT system of the
    equality-constrained least-squares problem and re-solves with pinned
    weights when clipping to [0, 1] is needed.  Both paths agree on
    two-site particle-hole-symmetric inputs.
    """
    sd = spectral.merged()
    n_orbitals = sd.n_orbitals
    if n_orbitals == 0:
        return sd

    use_ph = False
    if not force_general and model.is_two_site:
        u, mu, eps2, v = model.two_site_params
        ph = abs(mu - u / 2) < 1e-12 and abs(eps2) < 1e-12
        mirrored = len(sd.particle) == 2 and len(sd.hole) == 2
        if ph and mirrored:
            pw = [p.omega for p in sd.particle]
            hw = [p.omega for p in sd.hole]
            use_ph = abs(pw[0] + hw[1]) < 1e-9 and abs(pw[1] + hw[0]) < 1e-9

    if use_ph:
        _, _, _, v = model.two_site_params
        lam = closed_form_weight(sd.particle[0].omega, sd.particle[1].omega, v)
        lam = min(max(lam, 0.0), 0.5)
        lam_high = 0.5 - lam
        particle = ((lam,), (lam_high,))
        hole = ((lam_high,), (lam,))
        return sd.with_weights(particle, hole)

    omegas = np.array([p.omega for p in sd.hole] + [p.omega for p in sd.particle])
    new_hole = [list(p.lambdas) for p in sd.hole]
    new_particle = [list(p.lambdas) for p in sd.particle]
    for alpha in range(n_orbitals):
        eps, v_sq = _bath_levels(model, alpha)
        c, d = regularization_constraints(omegas, eps, v_sq)
        measured = np.array(
            [p.lambdas[alpha] for p in sd.hole]
            + [p.lambdas[alpha] for p in sd.particle]
        )
        solution = _bounded_constrained_least_squares(measured, c, d)
        n_h = len(sd.hole)
        for k in range(n_h):
            new_hole[k][alpha] = float(solution[k])
        for k in range(len(sd.particle)):
            new_particle[k][alpha] = float(solution[n_h + k])
    return sd.with_weights(
        [tuple(ls) for ls in new_particle], [tuple(ls) for ls in new_hole]
    )


def regularization_residuals(
    spectral: SpectralData, model: ImpurityModel, alpha: int = 0
) -> dict[str, np.ndarray]:
    """Residuals of both cancellation rules and the weight sum."""
    sd = spectral.merged()
    omegas = np.array([p.omega for p in sd.hole] + [p.omega for p in sd.particle])
    lam = np.array(
        [p.lambdas[alpha] for p in sd.hole] + [p.lambdas[alpha] for p in sd.particle]
    )
    eps, v_sq = _bath_levels(model, alpha)
    first = []
    second = []
    for e, v2 in zip(eps, v_sq):
        gaps = e - omegas
        first.append(float(np.sum(lam / gaps)))
        second.append(float(np.sum(lam / gaps**2) - 1.0 / v2))
    return {
        "first_rule": np.array(first),
        "second_rule": np.array(second),
        "weight_sum": np.array([float(np.sum(lam)) - 1.0]),
    }


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def dos_csv(curve: DosCurve) -> str:
    lines = ["omega,dos"]
    for w, v in zip(curve.omega, curve.values):
        lines.append(f"{float(w)!r},{float(v)!r}")
    return "\n".join(lines) + "\n"


def self_energy_csv(ev: GreensEvaluator, grid, delta: float | None = None) -> str:
    sigma = np.asarray(ev.self_energy(np.asarray(grid, dtype=float), delta))
    lines = ["omega,re_sigma,im_sigma"]
    for w, s in zip(grid, sigma):
        lines.append(f"{float(w)!r},{float(s.real)!r},{float(s.imag)!r}")
    return "\n".join(lines) + "\n"
