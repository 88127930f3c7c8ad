"""Reduced density matrix of the system and quantities derived from it."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..exact import StateVector, conditional_environment
from ..model import ModelParams


def reduced_density_matrix(state: StateVector) -> np.ndarray:
    """``rho[i, j] = <chi_j|chi_i>`` with ``chi_i`` the conditional environment states."""
    chi = state.amplitudes.reshape(2, -1)
    return chi @ chi.conj().T


def purity(state: StateVector) -> float:
    rho = reduced_density_matrix(state)
    return float(np.real(np.trace(rho @ rho)))


def decoherence_factor(state: StateVector) -> complex:
    """Normalized overlap ``<chi_1|chi_2> / (|chi_1| |chi_2|)``; nan if a branch is empty."""
    chi1 = conditional_environment(state, 1)
    chi2 = conditional_environment(state, 2)
    n = np.linalg.norm(chi1) * np.linalg.norm(chi2)
    if n == 0:
        return complex("nan")
    return complex(np.vdot(chi1, chi2) / n)


class ObservableParts(NamedTuple):
    diagonal_part: float
    offdiagonal_part: float
    total: float


def observable_decomposition(state: StateVector, Q, atol: float = 1e-12) -> ObservableParts:
    """Split ``<Q (x) 1>`` into population and coherence contributions."""
    Q = np.asarray(Q, dtype=complex)
    if Q.shape != (2, 2) or np.max(np.abs(Q - Q.conj().T)) > atol:
        raise ValueError("Q must be a 2x2 Hermitian matrix")
    rho = reduced_density_matrix(state)
    diag = float(np.real(rho[0, 0] * Q[0, 0] + rho[1, 1] * Q[1, 1]))
    off = float(np.real(rho[0, 1] * Q[1, 0] + rho[1, 0] * Q[0, 1]))
    total = float(np.real(np.trace(rho @ Q)))
    return ObservableParts(diag, off, total)


def zurek_decoherence_factor(params: ModelParams, system, sites, t) -> np.ndarray:
    """Closed-form decoherence factor for a product initial state when h = hI.

    Each site contributes ``sum_sigma |a_sigma|^2 exp(i (v[1,sigma] - v[2,sigma]) t)``;
    the factor is their product times the phase of ``conj(c1) c2``.
    """
    c = np.asarray(system, dtype=complex)
    c = c / np.linalg.norm(c)
    amps = np.asarray(sites, dtype=complex).reshape(params.M, 2)
    w = np.abs(amps) ** 2
    w = w / w.sum(axis=1, keepdims=True)
    g = params.couplings
    t = np.atleast_1d(np.asarray(t, dtype=float))
    delta = g[:, 0, :] - g[:, 1, :]  # (M, 2)
    per_site = np.sum(w[None] * np.exp(1j * delta[None] * t[:, None, None]), axis=2)
    cc = np.conj(c[0]) * c[1]
    return np.prod(per_site, axis=1) * cc / abs(cc)
