"""Exact unitary evolution under the full Hamiltonian.

Two routes: dense eigendecomposition (``M <= MAX_DENSE_M``) and a split
propagator in which every piece is exact. h0 is a sum of commuting per-factor
exchanges, so ``exp(-i h0 dt)`` is a product of 2x2 rotations. hI is diagonal,
so ``exp(-i hI dt)`` is a product of phases.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ToleranceError
from .model import (MAX_DENSE_M, OperatorHandle, exchange_weights, interaction_diagonal,
                    rotate_bit)

log = logging.getLogger(__name__)

STATE_FORMAT = "pointer-sim/statevector"
STATE_VERSION = 1
_MAGIC = b"PSSV"


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    M: int

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 1 << (self.M + 1):
            raise ValueError(f"expected {1 << (self.M + 1)} amplitudes for M={self.M}, "
                             f"got {amps.size}")
        n = np.linalg.norm(amps)
        if abs(n - 1.0) > 1e-10:
            raise ValueError(f"state norm {n!r} differs from 1")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other))

    @classmethod
    def from_amplitudes(cls, amps, M: int, normalize: bool = True) -> "StateVector":
        amps = np.asarray(amps, dtype=complex)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps, M)

    @classmethod
    def basis(cls, raw: int, M: int) -> "StateVector":
        amps = np.zeros(1 << (M + 1), dtype=complex)
        amps[raw] = 1.0
        return cls(amps, M)

    @classmethod
    def product(cls, system, sites) -> "StateVector":
        """``system (x) site_1 (x) ... (x) site_M`` with each factor a 2-vector."""
        sites = [np.asarray(s, dtype=complex) for s in sites]
        vec = np.asarray(system, dtype=complex)
        for s in reversed(sites):
            vec = np.kron(vec, s)
        return cls.from_amplitudes(vec, len(sites))

    @classmethod
    def random(cls, M: int, rng: np.random.Generator) -> "StateVector":
        dim = 1 << (M + 1)
        return cls.from_amplitudes(rng.normal(size=dim) + 1j * rng.normal(size=dim), M)

    def to_dict(self) -> dict:
        return {
            "format": STATE_FORMAT,
            "version": STATE_VERSION,
            "M": self.M,
            "amplitudes": [[float(z.real), float(z.imag)] for z in self.amplitudes],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StateVector":
        if doc.get("format") != STATE_FORMAT or doc.get("version") != STATE_VERSION:
            raise ConfigError("unsupported state vector format")
        amps = np.array([complex(re, im) for re, im in doc["amplitudes"]])
        return cls(amps, int(doc["M"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_bytes(self) -> bytes:
        header = _MAGIC + struct.pack("<II", STATE_VERSION, self.M)
        return header + self.amplitudes.astype("<c16").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "StateVector":
        if data[:4] != _MAGIC:
            raise ConfigError("not a state vector file")
        version, M = struct.unpack("<II", data[4:12])
        if version != STATE_VERSION:
            raise ConfigError(f"unsupported state vector version {version}")
        return cls(np.frombuffer(data[12:], dtype="<c16").copy(), M)


@dataclass(frozen=True)
class EvolutionConfig:
    method: str = "eigendecomposition"
    dt: float = 0.05
    trotter_order: int = 2
    tolerance: float = 1e-8
    max_halvings: int = 12

    def __post_init__(self):
        if self.method not in ("eigendecomposition", "trotter"):
            raise ConfigError(f"unknown evolution method {self.method!r}")
        if not self.dt > 0 or not self.tolerance > 0:
            raise ConfigError("dt and tolerance must be positive")
        if self.trotter_order not in (1, 2):
            raise ConfigError("trotter_order must be 1 or 2")

    @classmethod
    def default_for(cls, M: int, **kw) -> "EvolutionConfig":
        method = "eigendecomposition" if M <= MAX_DENSE_M else "trotter"
        return cls(method=method, **kw)


class TrotterResult(NamedTuple):
    state: StateVector
    error: float
    dt: float
    steps: int


def _check(state: StateVector, h: OperatorHandle, t: float):
    if state.dim != h.dim:
        raise ValueError(f"state dimension {state.dim} does not match operator {h.dim}")
    if t < 0:
        raise ValueError("evolution time must be non-negative")


def evolve_exact(state: StateVector, h: OperatorHandle, t: float,
                 cfg: EvolutionConfig | None = None) -> StateVector:
    """Return ``exp(-i h t)|state>``."""
    _check(state, h, t)
    if t == 0:
        return state
    cfg = cfg or EvolutionConfig.default_for(h.M)
    if cfg.method == "trotter":
        return evolve_trotter(state, h, t, cfg).state
    w, V = h.spectrum
    psi = state.amplitudes
    if V is None:
        out = np.exp(-1j * w * t) * psi
    else:
        out = V @ (np.exp(-1j * w * t) * (V.conj().T @ psi))
    return StateVector(out, state.M)


def _split_pieces(h: OperatorHandle):
    p = h.params
    if p is None or h.kind == "custom":
        raise ValueError("split evolution needs a model operator, not a custom matrix")
    if h.kind == "hI":
        return [], interaction_diagonal(p)
    weights = {
        "h_phi": exchange_weights(p, sites=False),
        "h_eps": exchange_weights(p, system=False),
        "h0": exchange_weights(p),
        "h_total": exchange_weights(p),
    }[h.kind]
    diag = interaction_diagonal(p) if h.kind == "h_total" else None
    return [(b, w) for b, w in weights if w != 0.0], diag


def _split_run(psi: np.ndarray, weights, diag, t: float, n: int, order: int) -> np.ndarray:
    dt = t / n
    phase = None if diag is None else np.exp(-1j * diag * dt)

    def rot(x, tau):
        for bit, w in weights:
            x = rotate_bit(x, bit, w * tau)
        return x

    if order == 1:
        for _ in range(n):
            psi = rot(psi, dt)
            if phase is not None:
                psi = phase * psi
        return psi
    # second order: merge adjacent half steps of h0
    psi = rot(psi, dt / 2)
    for k in range(n):
        if phase is not None:
            psi = phase * psi
        psi = rot(psi, dt if k < n - 1 else dt / 2)
    return psi


def evolve_trotter(state: StateVector, h: OperatorHandle, t: float,
                   cfg: EvolutionConfig | None = None) -> TrotterResult:
    """Split-operator evolution with step-halving error control.

    The step count is doubled until two successive results differ by less than
    ``cfg.tolerance`` (2-norm); the finer result and that difference are returned.
    """
    cfg = cfg or EvolutionConfig(method="trotter")
    _check(state, h, t)
    if t == 0:
        return TrotterResult(state, 0.0, cfg.dt, 0)
    weights, diag = _split_pieces(h)
    psi0 = state.amplitudes
    if not weights or diag is None:
        # pieces commute: one step is exact
        out = _split_run(psi0, weights, diag, t, 1, 1)
        return TrotterResult(StateVector(out, state.M), 0.0, t, 1)
    n = max(1, math.ceil(t / cfg.dt))
    coarse = _split_run(psi0, weights, diag, t, n, cfg.trotter_order)
    err = math.inf
    for _ in range(cfg.max_halvings):
        fine = _split_run(psi0, weights, diag, t, 2 * n, cfg.trotter_order)
        err = float(np.linalg.norm(fine - coarse))
        n *= 2
        if err < cfg.tolerance:
            log.debug("trotter converged: t=%g steps=%d err=%.3e", t, n, err)
            return TrotterResult(StateVector(fine, state.M), err, t / n, n)
        coarse = fine
    raise ToleranceError(f"split evolution did not reach tolerance {cfg.tolerance:g} "
                         f"(last step-halving difference {err:.3e}, {n} steps)")


def conditional_environment(state: StateVector, i: int) -> np.ndarray:
    """Unnormalized environment vector ``(<phi_i| (x) 1)|state>``."""
    if i not in (1, 2):
        raise ValueError("system index must be 1 or 2")
    half = 1 << state.M
    return state.amplitudes[(i - 1) * half:i * half]
