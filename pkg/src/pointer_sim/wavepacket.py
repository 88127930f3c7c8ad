"""Energy bookkeeping of a lattice plane wave expanded in localized states.

Free particle on a periodic 1D lattice with the three-point kinetic stencil,
``h0 = (2 - shift - shift^T) / (2 m d^2)``, band ``E(k) = (1 - cos kd) / (m d^2)``.
The localized states are the lattice position states, each carrying self-energy
``1 / (m d^2)`` however long it evolves.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LatticeConfig:
    n: int
    d: float = 1.0
    mass: float = 1.0
    k: float = 0.0

    def __post_init__(self):
        if self.n < 8:
            raise ConfigError("lattice needs n >= 8 sites")
        if not (self.d > 0 and self.mass > 0):
            raise ConfigError("lattice spacing and mass must be positive")
        j = self.k * self.n * self.d / (2 * math.pi)
        if abs(j - round(j)) > 1e-9:
            raise ConfigError(f"k={self.k} is not a periodic wavenumber 2*pi*j/(n d)")

    @property
    def mode(self) -> int:
        return int(round(self.k * self.n * self.d / (2 * math.pi)))

    @classmethod
    def from_mode(cls, n: int, j: int, d: float = 1.0, mass: float = 1.0) -> "LatticeConfig":
        return cls(n=n, d=d, mass=mass, k=2 * math.pi * j / (n * d))

    def band_energy(self) -> float:
        return (1 - math.cos(self.k * self.d)) / (self.mass * self.d ** 2)


def hamiltonian(cfg: LatticeConfig) -> np.ndarray:
    n = cfg.n
    scale = 1.0 / (cfg.mass * cfg.d ** 2)
    H = np.eye(n) * scale
    idx = np.arange(n)
    H[idx, (idx + 1) % n] -= scale / 2
    H[(idx + 1) % n, idx] -= scale / 2
    return H


@lru_cache(maxsize=32)
def _spectrum(cfg: LatticeConfig):
    return np.linalg.eigh(hamiltonian(cfg))


def propagator(cfg: LatticeConfig, t: float) -> np.ndarray:
    w, V = _spectrum(cfg)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def expand_localized(cfg: LatticeConfig) -> np.ndarray:
    """Coefficients ``alpha_R = exp(i k R d) / sqrt(n)`` over the position states."""
    R = np.arange(cfg.n)
    return np.exp(1j * cfg.k * R * cfg.d) / math.sqrt(cfg.n)


def plane_wave(cfg: LatticeConfig) -> np.ndarray:
    """Normalized band eigenvector of mode ``j`` built by inverse FFT."""
    e = np.zeros(cfg.n, dtype=complex)
    e[cfg.mode % cfg.n] = 1.0
    return np.fft.ifft(e) * math.sqrt(cfg.n)


class EnergyDecomposition(NamedTuple):
    t: float
    diag_sum: float
    offdiag_sum: float
    total: float
    e0: float

    @property
    def ratio(self) -> float:
        """Energy left after dropping the off-diagonal terms, relative to the true energy."""
        return self.diag_sum / self.e0 if self.e0 != 0 else math.inf


def energy_decomposition(cfg: LatticeConfig, t: float) -> EnergyDecomposition:
    alpha = expand_localized(cfg)
    U = propagator(cfg, t)
    G = U.conj().T @ hamiltonian(cfg) @ U  # <phi(R,t)|h0|phi(R',t)>
    w = np.abs(alpha) ** 2
    diag = float(np.sum(w * np.real(np.diag(G))))
    off_m = G - np.diag(np.diag(G))
    off = float(np.real(alpha.conj() @ off_m @ alpha))
    return EnergyDecomposition(float(t), diag, off, diag + off, cfg.band_energy())


def decohered_energy(cfg: LatticeConfig, t: float, env_overlap: float = 0.0) -> float:
    """Energy with every off-diagonal term multiplied by the environment overlap.

    ``env_overlap=0`` is full decoherence (diagonal sum only); ``1`` keeps the
    exact energy.
    """
    dec = energy_decomposition(cfg, t)
    return dec.diag_sum + env_overlap * dec.offdiag_sum


def decomposition_csv(rows: list[EnergyDecomposition]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "diag_sum", "offdiag_sum", "total", "ratio"])
    for r in rows:
        w.writerow([repr(r.t), repr(r.diag_sum), repr(r.offdiag_sum), repr(r.total),
                    repr(r.ratio)])
    return buf.getvalue()
