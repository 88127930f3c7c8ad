"""Phase-weighted transition sums for a probe perturbation between branches.

Row ``nu'`` of the transition sum is
``R_nu' = sum_nu alpha_nu <nu'(t)|P|nu(t)> exp(i (Lambda_nu' - Lambda_nu))``.
The concentration ratio is the share of ``sum |R|^2`` carried by pointer rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..branch import BranchEnsemble, branch_state, capital_lambda_values
from ..errors import ResourceLimitError
from ..model import MAX_DENSE_M, ModelParams, OperatorHandle
from .pointers import PointerSet, find_pointer_states


@dataclass
class InterferenceReport:
    t: float
    row_sums: np.ndarray
    restricted_row_sums: np.ndarray
    pointer_rows: list[int]
    concentration: float
    unweighted_concentration: float
    scrambled_concentration: float
    pointer_fraction: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "concentration": self.concentration,
            "unweighted_concentration": self.unweighted_concentration,
            "scrambled_concentration": self.scrambled_concentration,
            "pointer_fraction": self.pointer_fraction,
            "n_pointer_rows": len(self.pointer_rows),
            "n_rows": int(self.row_sums.size),
        }


def random_local_probe(params: ModelParams, rng: np.random.Generator,
                       site: int | None = None) -> OperatorHandle:
    """Random Hermitian operator on the system and one site (1-based), identity elsewhere."""
    M = params.M
    if M > MAX_DENSE_M:
        raise ResourceLimitError(f"dense probe needs M <= {MAX_DENSE_M}")
    if site is None:
        site = int(rng.integers(1, M + 1))
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    local = (A + A.conj().T) / 2  # basis (system bit, site bit)
    dim = params.dim
    idx = np.arange(dim)
    sb, lb = (idx >> M) & 1, (idx >> (site - 1)) & 1
    rest = idx & ~((1 << M) | (1 << (site - 1)))
    same_rest = rest[:, None] == rest[None, :]
    H = np.where(same_rest, local[(2 * sb + lb)[:, None], (2 * sb + lb)[None, :]], 0)
    return OperatorHandle.custom(H, M)


def branch_matrix(ens: BranchEnsemble, t: float, probe: OperatorHandle) -> np.ndarray:
    """``<nu'(t)|P|nu(t)>`` for all branch pairs, rows indexed by ``nu'``."""
    B = np.column_stack([branch_state(b, t, ens.params).amplitudes for b in ens.branches])
    return B.conj().T @ (probe.matrix_form @ B)


def transition_row_sums(P: np.ndarray, alpha: np.ndarray, Lam: np.ndarray) -> np.ndarray:
    return np.exp(1j * Lam) * (P @ (alpha * np.exp(-1j * Lam)))


def _concentration(rows: np.ndarray, mask: np.ndarray) -> float:
    mass = np.abs(rows) ** 2
    total = float(np.sum(mass))
    return float(np.sum(mass[mask]) / total) if total > 0 else float("nan")


def interference_filter(ens: BranchEnsemble, t: float, probe: OperatorHandle,
                        pointers: PointerSet | None = None,
                        rng: np.random.Generator | None = None,
                        n_scrambles: int = 16) -> InterferenceReport:
    """Transition row sums with and without the branch phases.

    The scrambled baseline averages the concentration over random permutations
    of the phase values among branches.
    """
    if probe.dim != ens.params.dim:
        raise ValueError("probe dimension does not match the model")
    rng = rng if rng is not None else np.random.default_rng(0)
    pointers = pointers if pointers is not None else find_pointer_states(ens, t)
    Lam = capital_lambda_values(ens, t)
    P = branch_matrix(ens, t, probe)
    mask = np.isin(ens.nu, np.asarray(pointers.nu_c, dtype=np.uint64))
    rows = transition_row_sums(P, ens.alpha, Lam)
    restricted = np.exp(1j * Lam) * (P[:, mask] @ (ens.alpha * np.exp(-1j * Lam))[mask])
    unweighted = transition_row_sums(P, ens.alpha, np.zeros_like(Lam))
    scrambled = np.mean([
        _concentration(transition_row_sums(P, ens.alpha, rng.permutation(Lam)), mask)
        for _ in range(n_scrambles)])
    return InterferenceReport(
        t=float(t), row_sums=rows, restricted_row_sums=restricted,
        pointer_rows=[int(n) for n in ens.nu[mask]],
        concentration=_concentration(rows, mask),
        unweighted_concentration=_concentration(unweighted, mask),
        scrambled_concentration=float(scrambled),
        pointer_fraction=float(np.mean(mask)),
    )
