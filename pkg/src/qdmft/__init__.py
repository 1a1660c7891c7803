"""Hybrid quantum-classical solver for the two-site DMFT problem.

The quantum half simulates VQE circuits on an exact statevector backend
(optionally with shot noise and readout errors); the classical half closes
the self-consistency loop on Green's-function data and cross-checks every
step against dense exact diagonalization.
"""

__version__ = "0.1.0"
