"""Two-level system coupled to M independent two-level environment sites.

Units have hbar = 1. The product basis is indexed by an integer ``raw`` in
``[0, 2**(M+1))``:

* bit ``M`` is the system (0 -> phi_1, 1 -> phi_2),
* bit ``l-1`` is site ``l`` (0 -> up, 1 -> down).

The self-Hamiltonian is ``h0 = E X_sys + sum_l omega_l X_l`` (X exchanges the
two basis states of a factor), and the interaction ``hI`` is diagonal with
entry ``sum_l v[l, i, sigma_l]`` on basis state ``(i, sigma_1 ... sigma_M)``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ResourceLimitError

MAX_DENSE_M = 10
MAX_MATVEC_M = 22

UP, DOWN = 0, 1
_SPIN_NAMES = {"up": UP, "u": UP, "↑": UP, "down": DOWN, "d": DOWN, "↓": DOWN}


def spin_code(sigma) -> int:
    if isinstance(sigma, str):
        try:
            return _SPIN_NAMES[sigma.lower()]
        except KeyError:
            raise ValueError(f"unknown spin label {sigma!r}") from None
    if sigma in (0, 1):
        return int(sigma)
    raise ValueError(f"unknown spin label {sigma!r}")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Hamiltonian parameters.

    ``v`` has shape ``(M, 2, 2)`` indexed ``[site l-1, system i-1, spin]`` with
    spin order (up, down). The couplings actually used everywhere are
    :attr:`couplings` = ``coupling_scale * v``.
    """

    M: int
    E: float
    omega: np.ndarray
    v: np.ndarray
    coupling_scale: float = 1.0

    def __post_init__(self):
        if isinstance(self.M, bool) or int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M!r}")
        omega = np.array(self.omega, dtype=float).reshape(-1)
        v = np.array(self.v, dtype=float)
        if omega.shape != (self.M,):
            raise ConfigError(f"omega must have {self.M} entries, got {omega.size}")
        if v.size != 4 * self.M:
            raise ConfigError(f"v must have {4 * self.M} entries, got {v.size}")
        v = v.reshape(self.M, 2, 2)
        E = float(self.E)
        scale = float(self.coupling_scale)
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(v))
                and math.isfinite(E) and math.isfinite(scale)):
            raise ConfigError("model parameters must be finite")
        if scale < 0:
            raise ConfigError("coupling_scale must be >= 0")
        omega.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "coupling_scale", scale)

    @cached_property
    def couplings(self) -> np.ndarray:
        g = self.coupling_scale * self.v
        g.flags.writeable = False
        return g

    @property
    def dim(self) -> int:
        return 1 << (self.M + 1)

    @property
    def n_branches(self) -> int:
        return 1 << self.M

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def zurek_limit(self) -> "ModelParams":
        """Same couplings with all self-energies switched off."""
        return self.replace(E=0.0, omega=np.zeros(self.M))

    @classmethod
    def random(cls, M: int, rng: np.random.Generator, *, E: float | None = None,
               omega_range=(0.0, 1.0), v_range=(0.0, 1.0),
               coupling_scale: float = 1.0) -> "ModelParams":
        if E is None:
            E = rng.uniform(*omega_range)
        omega = rng.uniform(*omega_range, size=M)
        v = rng.uniform(*v_range, size=(M, 2, 2))
        return cls(M=M, E=E, omega=omega, v=v, coupling_scale=coupling_scale)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "E": self.E,
            "omega": self.omega.tolist(),
            "v": self.v.reshape(-1).tolist(),
            "coupling_scale": self.coupling_scale,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        missing = {"M", "E", "omega", "v"} - set(doc)
        if missing:
            raise ConfigError(f"model parameters missing keys: {sorted(missing)}")
        return cls(M=doc["M"], E=doc["E"], omega=doc["omega"], v=doc["v"],
                   coupling_scale=doc.get("coupling_scale", 1.0))


@dataclass(frozen=True)
class BasisIndex:
    raw: int
    M: int

    def __post_init__(self):
        if not 0 <= self.raw < (1 << (self.M + 1)):
            raise ValueError(f"basis index {self.raw} out of range for M={self.M}")

    @property
    def system(self) -> int:
        """1 for phi_1, 2 for phi_2."""
        return 1 + ((self.raw >> self.M) & 1)

    @property
    def spins(self) -> tuple[int, ...]:
        """Spin code of sites 1..M (0 = up, 1 = down)."""
        return tuple((self.raw >> l) & 1 for l in range(self.M))

    @property
    def env(self) -> int:
        """Environment configuration nu as an M-bit integer."""
        return self.raw & ((1 << self.M) - 1)

    @classmethod
    def encode(cls, system: int, spins: Sequence, M: int | None = None) -> "BasisIndex":
        spins = [spin_code(s) for s in spins]
        M = len(spins) if M is None else M
        if len(spins) != M or system not in (1, 2):
            raise ValueError("bad system index or spin count")
        raw = (system - 1) << M
        for l, s in enumerate(spins):
            raw |= s << l
        return cls(raw, M)


# -- matrix-free kernels ------------------------------------------------------

def apply_flip(psi: np.ndarray, bit: int, weight: float = 1.0) -> np.ndarray:
    """``weight * X`` acting on ``bit`` of a state vector."""
    view = psi.reshape(-1, 2, 1 << bit)
    return (weight * view[:, ::-1, :]).reshape(psi.shape)


def rotate_bit(psi: np.ndarray, bit: int, theta: float) -> np.ndarray:
    """``exp(-i theta X)`` acting on ``bit``."""
    view = psi.reshape(-1, 2, 1 << bit)
    out = math.cos(theta) * view - 1j * math.sin(theta) * view[:, ::-1, :]
    return out.reshape(psi.shape)


def interaction_diagonal(params: ModelParams) -> np.ndarray:
    """Diagonal of hI over the full product basis."""
    M = params.M
    idx = np.arange(params.dim)
    system = idx >> M
    g = params.couplings
    diag = np.zeros(params.dim)
    for l in range(M):
        diag += g[l, system, (idx >> l) & 1]
    return diag


def exchange_weights(params: ModelParams, *, system: bool = True,
                     sites: bool = True) -> list[tuple[int, float]]:
    """(bit, weight) pairs making up the self-Hamiltonian."""
    out = []
    if sites:
        out += [(l, float(w)) for l, w in enumerate(params.omega)]
    if system:
        out.append((params.M, params.E))
    return out


class OperatorHandle:
    """A Hermitian operator on the ``2**(M+1)`` dimensional product space.

    ``action`` is always available; ``matrix_form`` is built lazily and only
    for ``M <= max_dense_M``.
    """

    KINDS = ("h_phi", "h_eps", "h0", "hI", "h_total", "custom")

    def __init__(self, kind: str, M: int, action: Callable[[np.ndarray], np.ndarray], *,
                 dense: Callable[[], np.ndarray] | None = None,
                 diagonal: np.ndarray | None = None,
                 params: ModelParams | None = None,
                 max_dense_M: int = MAX_DENSE_M):
        if kind not in self.KINDS:
            raise ValueError(f"unknown operator kind {kind!r}")
        self.kind = kind
        self.M = M
        self.action = action
        self.diagonal = diagonal
        self.params = params
        self.max_dense_M = max_dense_M
        self._dense = dense

    def __repr__(self):
        return f"OperatorHandle(kind={self.kind!r}, M={self.M})"

    @property
    def dim(self) -> int:
        return 1 << (self.M + 1)

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal is not None

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi)
        if psi.shape != (self.dim,):
            raise ValueError(f"state of shape {psi.shape} does not match dim {self.dim}")
        return self.action(psi)

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self(psi)).real)

    @cached_property
    def matrix_form(self) -> np.ndarray:
        if self.M > self.max_dense_M:
            raise ResourceLimitError(
                f"dense form of {self.kind} needs M <= {self.max_dense_M}, got M={self.M}")
        if self._dense is not None:
            H = self._dense()
        elif self.diagonal is not None:
            H = np.diag(self.diagonal)
        else:
            H = np.column_stack([self.action(e) for e in np.eye(self.dim)])
        H.flags.writeable = False
        return H

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and eigenvectors (columns) of the dense form."""
        if self.diagonal is not None:
            return self.diagonal, None
        return np.linalg.eigh(self.matrix_form)

    @classmethod
    def custom(cls, matrix: np.ndarray, M: int | None = None, *, atol: float = 1e-12,
               max_dense_M: int = MAX_DENSE_M) -> "OperatorHandle":
        H = np.array(matrix, dtype=complex)
        n = H.shape[0]
        if H.shape != (n, n) or n & (n - 1) or n < 4:
            raise ValueError("custom operator must be square with dimension 2**(M+1)")
        if M is None:
            M = n.bit_length() - 2
        if np.max(np.abs(H - H.conj().T)) > atol:
            raise ValueError("custom operator is not Hermitian")
        return cls("custom", M, lambda psi: H @ psi, dense=lambda: H.copy(),
                   max_dense_M=max(max_dense_M, M))


def _dense_exchange(dim: int, weights: list[tuple[int, float]]) -> np.ndarray:
    H = np.zeros((dim, dim))
    idx = np.arange(dim)
    for bit, w in weights:
        H[idx, idx ^ (1 << bit)] += w
    return H


def _exchange_action(weights: list[tuple[int, float]]):
    def action(psi):
        out = np.zeros(psi.shape, dtype=np.result_type(psi, float))
        for bit, w in weights:
            if w != 0.0:
                out += apply_flip(psi, bit, w)
        return out
    return action


def build_operators(params: ModelParams, *, max_dense_M: int = MAX_DENSE_M,
                    max_matvec_M: int = MAX_MATVEC_M) -> dict[str, OperatorHandle]:
    """Return ``h_phi``, ``h_eps``, ``h0``, ``hI`` and ``h_total`` for ``params``."""
    M = params.M
    if M > max_matvec_M:
        raise ResourceLimitError(f"M={M} exceeds matrix-free limit {max_matvec_M}")
    dim = params.dim
    w_phi = exchange_weights(params, sites=False)
    w_eps = exchange_weights(params, system=False)
    w_0 = w_eps + w_phi
    diag = interaction_diagonal(params)
    diag.flags.writeable = False

    def make(kind, weights, with_diag=False):
        exch = _exchange_action(weights)
        if with_diag:
            action = lambda psi: exch(psi) + diag * psi  # noqa: E731
            dense = lambda: _dense_exchange(dim, weights) + np.diag(diag)  # noqa: E731
        else:
            action, dense = exch, lambda: _dense_exchange(dim, weights)
        return OperatorHandle(kind, M, action, dense=dense, params=params,
                              max_dense_M=max_dense_M)

    hI = OperatorHandle("hI", M, lambda psi: diag * psi, diagonal=diag, params=params,
                        max_dense_M=max_dense_M)
    ops = {
        "h_phi": make("h_phi", w_phi),
        "h_eps": make("h_eps", w_eps),
        "h0": make("h0", w_0),
        "hI": hI,
        "h_total": make("h_total", w_0, with_diag=True),
    }
    if all(w == 0.0 for _, w in w_0):
        # no exchange terms: h_total is hI
        ops["h_total"] = OperatorHandle("h_total", M, hI.action, diagonal=diag,
                                        params=params, max_dense_M=max_dense_M)
    return ops


def self_evolved_system(i: int, t: float, E: float) -> np.ndarray:
    """Amplitudes of ``exp(-i h_phi t)|phi_i>`` on (phi_1, phi_2)."""
    c, s = math.cos(E * t), math.sin(E * t)
    if i == 1:
        return np.array([c, -1j * s])
    if i == 2:
        return np.array([-1j * s, c])
    raise ValueError(f"system index must be 1 or 2, got {i!r}")


def self_evolved_site(sigma, t: float, omega: float) -> np.ndarray:
    """Amplitudes of ``exp(-i h_l t)|sigma>_l`` on (up, down)."""
    c, s = math.cos(omega * t), math.sin(omega * t)
    if spin_code(sigma) == UP:
        return np.array([c, -1j * s])
    return np.array([-1j * s, c])
