"""Spectral pole data exchanged between the impurity solver and the classical loop.

A :class:`SpectralData` carries the quantities that determine the zero-T
impurity Green's function in Lehmann form: excitation energies on the
particle side (electron added to the ground state) and on the hole side
(electron removed), together with the per-orbital transition weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class SpectralPole:
    """One excitation: energy offset and per-orbital transition weights."""

    omega: float
    lambdas: tuple[float, ...]


@dataclass(frozen=True)
class SpectralData:
    n0: int
    e0: float
    particle: tuple[SpectralPole, ...]
    hole: tuple[SpectralPole, ...]

    def __post_init__(self):
        for group in (self.particle, self.hole):
            omegas = [p.omega for p in group]
            if omegas != sorted(omegas):
                raise ValueError("pole lists must be sorted by omega")

    @property
    def n_orbitals(self) -> int:
        if self.particle:
            return len(self.particle[0].lambdas)
        if self.hole:
            return len(self.hole[0].lambdas)
        return 0

    def sum_rule(self, alpha: int = 0) -> float:
        """Total spectral weight for one orbital; 1 for complete data."""
        return sum(p.lambdas[alpha] for p in self.particle) + sum(
            p.lambdas[alpha] for p in self.hole
        )

    def merged(self, tol: float = 1e-9) -> "SpectralData":
        """Merge poles closer than ``tol`` in omega, summing their weights."""

        def merge(group):
            out: list[list] = []
            for p in group:
                if out and abs(p.omega - out[-1][0]) < tol:
                    out[-1][1] = [a + b for a, b in zip(out[-1][1], p.lambdas)]
                else:
                    out.append([p.omega, list(p.lambdas)])
            return tuple(SpectralPole(w, tuple(ls)) for w, ls in out)

        return SpectralData(self.n0, self.e0, merge(self.particle), merge(self.hole))

    def with_weights(self, particle_lambdas, hole_lambdas) -> "SpectralData":
        """Same poles, new weights (sequences of per-pole weight tuples)."""
        particle = tuple(
            SpectralPole(p.omega, tuple(ls))
            for p, ls in zip(self.particle, particle_lambdas, strict=True)
        )
        hole = tuple(
            SpectralPole(p.omega, tuple(ls))
            for p, ls in zip(self.hole, hole_lambdas, strict=True)
        )
        return SpectralData(self.n0, self.e0, particle, hole)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n0": self.n0,
            "e0": self.e0,
            "particle": [
                {"omega": p.omega, "lambda": list(p.lambdas)} for p in self.particle
            ],
            "hole": [{"omega": p.omega, "lambda": list(p.lambdas)} for p in self.hole],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralData":
        return cls(
            n0=int(data["n0"]),
            e0=float(data["e0"]),
            particle=tuple(
                SpectralPole(float(p["omega"]), tuple(float(x) for x in p["lambda"]))
                for p in data["particle"]
            ),
            hole=tuple(
                SpectralPole(float(p["omega"]), tuple(float(x) for x in p["lambda"]))
                for p in data["hole"]
            ),
        )

    @classmethod
    def from_json(cls, text: str) -> "SpectralData":
        return cls.from_dict(json.loads(text))
