"""Stationary-phase branch selection on the spin-flip hypercube.

Configurations are nodes of the M-dimensional hypercube; two are adjacent when
they differ at one site. A pointer configuration is a strict local extremum of
the integrated interaction phase over its neighbours present in the ensemble.
Runs of equal values are grouped and reported as flagged plateaus instead.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..branch import BranchEnsemble, capital_lambda_values, nu_to_bitstring


@dataclass
class Plateau:
    kind: str  # "max", "min" or "flat" (no distinct neighbour at all)
    members: list[int]
    value: float


@dataclass
class PointerSet:
    M: int
    t: float
    nu_c: list[int]
    kinds: list[str]
    Lambda_values: list[float]
    plateaus: list[Plateau] = field(default_factory=list)
    neighborhood: str = "single-flip"
    sampled: bool = False

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "t": self.t,
            "neighborhood": self.neighborhood,
            "sampled": self.sampled,
            "pointers": [{"nu": nu_to_bitstring(n, self.M), "kind": k, "Lambda": v}
                         for n, k, v in zip(self.nu_c, self.kinds, self.Lambda_values)],
            "plateaus": [{"kind": p.kind, "value": p.value,
                          "members": [nu_to_bitstring(n, self.M) for n in p.members]}
                         for p in self.plateaus],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _neighbour_table(nu: np.ndarray, M: int) -> np.ndarray:
    """(N, M) positions of single-flip neighbours within sorted ``nu``; -1 if absent."""
    out = np.full((len(nu), M), -1, dtype=np.intp)
    for l in range(M):
        target = nu ^ (np.uint64(1) << np.uint64(l))
        pos = np.minimum(np.searchsorted(nu, target), len(nu) - 1)
        out[:, l] = np.where(nu[pos] == target, pos, -1)
    return out


def hypercube_extrema(nu, values, M: int, tol: float = 0.0, t: float = 0.0,
                      sampled: bool = False) -> PointerSet:
    """Strict local extrema of ``values`` over single-flip neighbours.

    Two values count as equal when they differ by at most ``tol``.
    """
    nu = np.asarray(nu, dtype=np.uint64)
    values = np.asarray(values, dtype=float)
    order = np.argsort(nu, kind="stable")
    nu, values = nu[order], values[order]
    nb = _neighbour_table(nu, M)
    has = nb >= 0
    nv = values[np.where(has, nb, 0)]
    diff = nv - values[:, None]
    tie = has & (np.abs(diff) <= tol)
    lower = np.all(~has | (diff < -tol), axis=1)
    higher = np.all(~has | (diff > tol), axis=1)
    isolated = ~np.any(has, axis=1)
    no_tie = ~np.any(tie, axis=1)

    nu_c, kinds, lam = [], [], []
    for k in np.nonzero(no_tie & ~isolated & (lower | higher))[0]:
        nu_c.append(int(nu[k]))
        kinds.append("max" if lower[k] else "min")
        lam.append(float(values[k]))

    plateaus = []
    if np.any(tie):
        rows, cols = np.nonzero(tie)
        graph = coo_matrix((np.ones(len(rows)), (rows, nb[rows, cols])),
                           shape=(len(nu), len(nu)))
        n_comp, labels = connected_components(graph, directed=False)
        tied = np.nonzero(~no_tie)[0]
        for comp in np.unique(labels[tied]):
            members = np.nonzero(labels == comp)[0]
            inside = np.zeros(len(nu), bool)
            inside[members] = True
            edge = has[members] & ~inside[np.where(has[members], nb[members], 0)]
            boundary = diff[members][edge]
            if boundary.size == 0:
                kind = "flat"
            elif np.all(boundary < -tol):
                kind = "max"
            elif np.all(boundary > tol):
                kind = "min"
            else:
                continue
            plateaus.append(Plateau(kind, sorted(int(nu[m]) for m in members),
                                    float(values[members[0]])))
        plateaus.sort(key=lambda p: p.members[0])
    return PointerSet(M, float(t), nu_c, kinds, lam, plateaus, sampled=sampled)


def find_pointer_states(ens: BranchEnsemble, t: float, tol: float = 0.0) -> PointerSet:
    """Branches whose integrated interaction phase is a strict local extremum at ``t``."""
    Lam = capital_lambda_values(ens, t)
    return hypercube_extrema(ens.nu, Lam, ens.M, tol=tol, t=t, sampled=ens.sampled)


def track_pointer_states(ens: BranchEnsemble, times, tol: float = 0.0) -> list[dict]:
    """Recompute the pointer set at each time and report additions and removals."""
    out, prev = [], None
    for t in times:
        ps = find_pointer_states(ens, t, tol)
        cur = set(ps.nu_c)
        entry = {"t": float(t), "pointers": ps.to_dict()["pointers"],
                 "n_plateaus": len(ps.plateaus)}
        if prev is not None:
            entry["added"] = [nu_to_bitstring(n, ens.M) for n in sorted(cur - prev)]
            entry["removed"] = [nu_to_bitstring(n, ens.M) for n in sorted(prev - cur)]
        out.append(entry)
        prev = cur
    return out
