"""Brute-force ground truth: dense ground states and Rayleigh quotients.

Everything here materializes the full 2^p problem, so it is capped at
desk scale (p <= 14) and exists to anchor every structured-format result.
"""

from __future__ import annotations

import numpy as np

from .config import DEFAULT_TOLS, Tolerances
from .hamiltonian import SpinHamiltonian, apply, materialize_dense
from .tensor import DenseState, hermitian_eig


def ground_state_dense(h: SpinHamiltonian,
                       tols: Tolerances = DEFAULT_TOLS) -> tuple:
    """Smallest eigenvalue and unit-norm, phase-normalized eigenvector of the
    dense materialization."""
    m = materialize_dense(h, cap=tols.dense_site_cap)
    w, v = hermitian_eig(m, tols)
    return float(w[0]), DenseState(h.p, v[:, 0])


def rayleigh(h: SpinHamiltonian, x: DenseState,
             tols: Tolerances = DEFAULT_TOLS) -> float:
    """(x^H H x) / (x^H x), asserted real within the configured residue."""
    nrm2 = np.real(np.vdot(x.vector, x.vector))
    if nrm2 == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector is undefined")
    hx = apply(h, x)
    num = np.vdot(x.vector, hx.vector)
    quot = num / nrm2
    if abs(quot.imag) > tols.rayleigh_imag * max(1.0, abs(quot.real)):
        raise ValueError(f"Rayleigh quotient has imaginary residue {quot.imag:.3e}")
    return float(quot.real)
