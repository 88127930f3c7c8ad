"""Branch states and the diagonal (phase-only) approximation.

A branch ``nu`` is an environment configuration (M bits, bit ``l-1`` = site
``l``, 1 = down) together with a system superposition ``(c1, c2)``. Under the
self-Hamiltonian alone it evolves as

    |nu(t)> = (c1|phi_1(t)> + c2|phi_2(t)>) (x) prod_l |sigma_l(t)>_l ,

and the approximation attaches to it the phase ``exp(-i Lambda_nu(t))`` with
``Lambda_nu`` the time integral of ``lambda_nu(t) = <nu(t)|hI|nu(t)>``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError, ResourceLimitError
from .exact import StateVector
from .model import MAX_DENSE_M, ModelParams, rotate_bit

MAX_ENUMERATE_M = 20


@dataclass(frozen=True)
class Branch:
    nu: int
    c1: complex = 1.0
    c2: complex = 0.0
    alpha: complex = 1.0

    def __post_init__(self):
        n = abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"|c1|^2 + |c2|^2 = {n!r}, expected 1")
        if self.nu < 0:
            raise ValueError("nu must be non-negative")


class PhaseRecord(NamedTuple):
    nu: int
    t: float
    lam: float
    Lam: float


def nu_to_bitstring(nu: int, M: int) -> str:
    """Site 1 first: ``'01'`` means site 1 up, site 2 down."""
    return "".join(str((int(nu) >> l) & 1) for l in range(M))


def bitstring_to_nu(bits: str) -> int:
    if set(bits) - {"0", "1"}:
        raise ValueError(f"bad configuration string {bits!r}")
    return sum(int(b) << l for l, b in enumerate(bits))


class BranchEnsemble:
    """A set of branches with distinct ``nu`` and weights normalized to one.

    Stored as arrays sorted by ``nu``: ``nu`` (uint64), ``c`` (N, 2) complex and
    ``alpha`` (N,) complex.
    """

    def __init__(self, params: ModelParams, nu, c, alpha, *, sampled: bool = False):
        nu = np.asarray(nu, dtype=np.uint64).reshape(-1)
        c = np.asarray(c, dtype=complex).reshape(-1, 2)
        alpha = np.asarray(alpha, dtype=complex).reshape(-1)
        if not (len(nu) == len(c) == len(alpha)) or len(nu) == 0:
            raise ConfigError("ensemble arrays must be non-empty and of equal length")
        if params.M < 64 and np.any(nu >> np.uint64(params.M)):
            raise ConfigError("configuration index out of range for M")
        order = np.argsort(nu, kind="stable")
        nu, c, alpha = nu[order], c[order], alpha[order]
        if np.any(nu[1:] == nu[:-1]):
            raise ConfigError("ensemble configurations must be distinct")
        if np.max(np.abs(np.sum(np.abs(c) ** 2, axis=1) - 1)) > 1e-12:
            raise ConfigError("each branch needs |c1|^2 + |c2|^2 = 1")
        if abs(np.sum(np.abs(alpha) ** 2) - 1) > 1e-10:
            raise ConfigError("branch weights must satisfy sum |alpha|^2 = 1")
        for a in (nu, c, alpha):
            a.flags.writeable = False
        self.params = params
        self.nu, self.c, self.alpha = nu, c, alpha
        self.sampled = sampled

    def __len__(self):
        return len(self.nu)

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def complete(self) -> bool:
        return self.M <= 63 and len(self) == 1 << self.M

    @property
    def branches(self) -> list[Branch]:
        return [Branch(int(n), complex(c[0]), complex(c[1]), complex(a))
                for n, c, a in zip(self.nu, self.c, self.alpha)]

    @classmethod
    def from_branches(cls, branches: Iterable[Branch], params: ModelParams,
                      sampled: bool = False) -> "BranchEnsemble":
        bs = list(branches)
        return cls(params, [b.nu for b in bs], [[b.c1, b.c2] for b in bs],
                   [b.alpha for b in bs], sampled=sampled)

    def bits(self) -> np.ndarray:
        """(N, M) array of spin codes."""
        shifts = np.arange(self.M, dtype=np.uint64)
        return ((self.nu[:, None] >> shifts) & np.uint64(1)).astype(np.intp)

    def index_of(self, nu) -> np.ndarray:
        """Positions of ``nu`` values in the ensemble, -1 where absent."""
        nu = np.asarray(nu, dtype=np.uint64)
        pos = np.searchsorted(self.nu, nu)
        pos = np.minimum(pos, len(self.nu) - 1)
        return np.where(self.nu[pos] == nu, pos, -1)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "sampled": self.sampled,
            "branches": [
                {"nu": nu_to_bitstring(n, self.M),
                 "c1": [c[0].real, c[0].imag], "c2": [c[1].real, c[1].imag],
                 "alpha": [a.real, a.imag]}
                for n, c, a in zip(self.nu.tolist(), self.c, self.alpha)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BranchEnsemble":
        params = ModelParams.from_dict(doc["params"])
        bs = doc["branches"]
        return cls(params, [bitstring_to_nu(b["nu"]) for b in bs],
                   [[complex(*b["c1"]), complex(*b["c2"])] for b in bs],
                   [complex(*b["alpha"]) for b in bs], sampled=doc.get("sampled", False))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _bloch(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _pack(bits: np.ndarray) -> np.ndarray:
    shifts = np.arange(bits.shape[1], dtype=np.uint64)
    return np.bitwise_or.reduce(bits.astype(np.uint64) << shifts, axis=1)


def make_ensemble(params: ModelParams, rng: np.random.Generator | None = None, *,
                  coefficients="random", weights: str = "random",
                  n_samples: int | None = None, closure: bool = True,
                  max_enumerate_M: int = MAX_ENUMERATE_M) -> BranchEnsemble:
    """Build a branch ensemble.

    ``coefficients`` selects the system part of each branch:

    * ``"random"``: independent uniform draws on the Bloch sphere,
    * ``"pointer"``: a random pointer basis state (phi_1 or phi_2) per branch,
    * a pair ``(c1, c2)``: the same superposition for every branch (product state),
    * an ``(N, 2)`` table matching the enumerated configurations.

    ``weights`` is ``"random"`` (complex Gaussian) or ``"uniform"``. All 2**M
    configurations are enumerated when ``M <= max_enumerate_M`` and
    ``n_samples`` is not given; otherwise ``n_samples`` random configurations
    are drawn (plus all their single-flip neighbours when ``closure``) and the
    ensemble is marked as sampled.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    M = params.M
    if n_samples is None:
        if M > max_enumerate_M:
            raise ResourceLimitError(
                f"cannot enumerate 2**{M} branches; pass n_samples for a sampled ensemble")
        nu = np.arange(1 << M, dtype=np.uint64)
        sampled = False
    else:
        base = _pack(rng.integers(0, 2, size=(n_samples, M)))
        if closure:
            flips = np.uint64(1) << np.arange(M, dtype=np.uint64)
            base = np.concatenate([base, (base[:, None] ^ flips).reshape(-1)])
        nu = np.unique(base)
        sampled = True
    N = len(nu)
    if isinstance(coefficients, str):
        if coefficients == "random":
            c = _bloch(rng, N)
        elif coefficients == "pointer":
            c = np.zeros((N, 2), dtype=complex)
            c[np.arange(N), rng.integers(0, 2, size=N)] = 1.0
        else:
            raise ConfigError(f"unknown coefficient generator {coefficients!r}")
    else:
        table = np.asarray(coefficients, dtype=complex)
        if table.shape == (2,):
            c = np.broadcast_to(table / np.linalg.norm(table), (N, 2))
        elif table.shape == (N, 2):
            c = table / np.linalg.norm(table, axis=1, keepdims=True)
        else:
            raise ConfigError(f"coefficient table shape {table.shape} does not match {N}")
    if weights == "random":
        alpha = rng.normal(size=N) + 1j * rng.normal(size=N)
    elif weights == "uniform":
        alpha = np.ones(N, dtype=complex)
    else:
        raise ConfigError(f"unknown weight generator {weights!r}")
    alpha = alpha / np.linalg.norm(alpha)
    return BranchEnsemble(params, nu, c, alpha, sampled=sampled)


# -- closed forms ---------------------------------------------------------------

def system_amplitudes(c: np.ndarray, t: float, E: float) -> np.ndarray:
    """``c1|phi_1(t)> + c2|phi_2(t)>`` on (phi_1, phi_2), row-wise for (N, 2) input."""
    c = np.asarray(c, dtype=complex)
    cs, sn = np.cos(E * t), np.sin(E * t)
    a1 = c[..., 0] * cs - 1j * c[..., 1] * sn
    a2 = -1j * c[..., 0] * sn + c[..., 1] * cs
    return np.stack([a1, a2], axis=-1)


def site_amplitudes(spin: np.ndarray, t: float, omega: np.ndarray) -> np.ndarray:
    """``|sigma(t)>`` on (up, down) for spin codes broadcast against ``omega``."""
    cs, sn = np.cos(omega * t), np.sin(omega * t)
    up = np.stack(np.broadcast_arrays(cs + 0j, -1j * sn), axis=-1)
    down = np.stack(np.broadcast_arrays(-1j * sn, cs + 0j), axis=-1)
    return np.where(np.asarray(spin)[..., None] == 0, up, down)


def _split_couplings(params: ModelParams, bits: np.ndarray):
    """Couplings of the occupied and flipped spin per branch and site, shape (N, M, 2)."""
    g = params.couplings
    sites = np.arange(params.M)
    same = g[sites[None, :], :, bits]  # (N, M, 2) over system index
    flip = g[sites[None, :], :, 1 - bits]
    return same, flip


def _lambda_arrays(params: ModelParams, c: np.ndarray, bits: np.ndarray, t: float):
    p = np.abs(system_amplitudes(c, t, params.E)) ** 2  # (N, 2)
    q = np.cos(params.omega * t) ** 2  # (M,)
    same, flip = _split_couplings(params, bits)
    per_system = np.sum(same * q[None, :, None] + flip * (1 - q)[None, :, None], axis=1)
    return np.sum(p * per_system, axis=1)


def _int_cos(k, t):
    """Integral of cos(k s) over [0, t]; finite as k -> 0."""
    return t * np.sinc(k * t / np.pi)


def _int_sin(k, t):
    """Integral of sin(k s) over [0, t]; finite as k -> 0."""
    return t * np.sin(k * t / 2) * np.sinc(k * t / (2 * np.pi))


def _capital_lambda_arrays(params: ModelParams, c: np.ndarray, bits: np.ndarray, t: float):
    c = np.asarray(c, dtype=complex)
    E, w = params.E, params.omega
    # population of phi_1: 1/2 + P1 cos 2Et + P2 sin 2Et
    P1 = (np.abs(c[:, 0]) ** 2 - np.abs(c[:, 1]) ** 2) / 2
    P2 = np.imag(np.conj(c[:, 0]) * c[:, 1])
    same, flip = _split_couplings(params, bits)
    x1, x2 = flip[..., 0], flip[..., 1]
    d1, d2 = same[..., 0] - x1, same[..., 1] - x2
    dd = d1 - d2  # (N, M)
    Cw = _int_cos(2 * w, t)  # (M,)
    C2E, S2E = _int_cos(2 * E, t), _int_sin(2 * E, t)
    Cp, Cm = _int_cos(2 * (E + w), t), _int_cos(2 * (E - w), t)
    Sp, Sm = _int_sin(2 * (E + w), t), _int_sin(2 * (E - w), t)
    int_P = t / 2 + P1 * C2E + P2 * S2E  # (N,)
    total = t * np.sum(x2, axis=1)
    total += np.sum(d2 * (t / 2 + Cw / 2), axis=1)
    total += np.sum(x1 - x2, axis=1) * int_P
    int_Pq = (t / 4 + Cw[None, :] / 4
              + (P1 * C2E / 2 + P2 * S2E / 2)[:, None]
              + P1[:, None] * (Cp + Cm)[None, :] / 4
              + P2[:, None] * (Sp + Sm)[None, :] / 4)
    total += np.sum(dd * int_Pq, axis=1)
    return total


def _single(b: Branch, params: ModelParams):
    M = params.M
    bits = np.array([[(b.nu >> l) & 1 for l in range(M)]], dtype=np.intp)
    return np.array([[b.c1, b.c2]], dtype=complex), bits


def lambda_nu(b: Branch, t: float, params: ModelParams) -> float:
    """Interaction energy ``<nu(t)|hI|nu(t)>`` of one branch."""
    c, bits = _single(b, params)
    return float(_lambda_arrays(params, c, bits, t)[0])


def capital_lambda(b: Branch, t: float, params: ModelParams) -> float:
    """Closed-form ``integral_0^t lambda_nu(s) ds``."""
    c, bits = _single(b, params)
    return float(_capital_lambda_arrays(params, c, bits, t)[0])


def lambda_values(ens: BranchEnsemble, t: float) -> np.ndarray:
    return _lambda_arrays(ens.params, ens.c, ens.bits(), t)


def capital_lambda_values(ens: BranchEnsemble, t: float) -> np.ndarray:
    return _capital_lambda_arrays(ens.params, ens.c, ens.bits(), t)


def phase_records(ens: BranchEnsemble, times: Iterable[float]) -> list[PhaseRecord]:
    out = []
    for t in times:
        lam = lambda_values(ens, t)
        Lam = capital_lambda_values(ens, t)
        out += [PhaseRecord(int(n), float(t), float(a), float(b))
                for n, a, b in zip(ens.nu.tolist(), lam, Lam)]
    return out


def phase_records_csv(records: Iterable[PhaseRecord], M: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["nu", "t", "lambda", "Lambda"])
    for r in records:
        w.writerow([nu_to_bitstring(r.nu, M), repr(r.t), repr(r.lam), repr(r.Lam)])
    return buf.getvalue()


class TransitionElement(NamedTuple):
    value: complex  # <nu(t)|hI|nu'(t)>
    env_element: np.ndarray  # <eps_nu(t)|hI|eps_nu'(t)>, diagonal in phi: entries for i = 1, 2
    site: int | None  # 1-based site where the configurations differ
    n_flips: int
    defined_zero: bool  # True when the configurations do not differ at exactly one site


def site_transition(params: ModelParams, site: int, sigma: int, t: float,
                    prefactor: str = "difference") -> np.ndarray:
    """``<sigma(t)|h_{phi,l}|sigma_bar(t)>_l`` per system index (site is 1-based).

    Direct evaluation gives ``i sin(wt) cos(wt) (v[i, sigma_bar] - v[i, sigma])``.
    ``prefactor="sum"`` returns the variant ``i sin cos (v[i, up] + v[i, down])``
    that is sometimes quoted instead; it is kept only for comparison.
    """
    g = params.couplings[site - 1]
    w = params.omega[site - 1]
    sc = np.sin(w * t) * np.cos(w * t)
    if prefactor == "difference":
        return 1j * sc * (g[:, 1 - sigma] - g[:, sigma])
    if prefactor == "sum":
        return 1j * sc * (g[:, 0] + g[:, 1])
    raise ValueError(f"unknown prefactor {prefactor!r}")


def offdiag_element(b: Branch, b_prime: Branch, t: float, params: ModelParams,
                    prefactor: str = "difference") -> TransitionElement:
    """Transition element of hI between two branches at time ``t``.

    Non-zero only for configurations that differ at exactly one site; other
    pairs give a defined zero with ``defined_zero`` set.
    """
    diff = int(b.nu) ^ int(b_prime.nu)
    n_flips = bin(diff).count("1")
    if n_flips != 1:
        return TransitionElement(0j, np.zeros(2, complex), None, n_flips, True)
    l = diff.bit_length()
    sigma = (int(b.nu) >> (l - 1)) & 1
    m = site_transition(params, l, sigma, t, prefactor)
    s = system_amplitudes([b.c1, b.c2], t, params.E)
    sp = system_amplitudes([b_prime.c1, b_prime.c2], t, params.E)
    value = complex(np.sum(np.conj(s) * m * sp))
    return TransitionElement(value, m, l, 1, False)


# -- states -----------------------------------------------------------------------

def branch_state(b: Branch, t: float, params: ModelParams) -> StateVector:
    vec = system_amplitudes([b.c1, b.c2], t, params.E)
    for l in reversed(range(params.M)):
        vec = np.kron(vec, site_amplitudes((b.nu >> l) & 1, t, params.omega[l]))
    return StateVector(vec, params.M)


def _check_dense(M: int, limit: int = MAX_DENSE_M + 12):
    if M > limit:
        raise ResourceLimitError(f"state vectors for M={M} exceed limit M <= {limit}")


def assemble_state(ens: BranchEnsemble, t: float, phases: np.ndarray | None,
                   mask: np.ndarray | None = None) -> StateVector:
    """``sum_nu alpha_nu exp(-i phase_nu) |nu(t)>`` as a full state vector.

    With ``mask`` only the selected branches are kept and the result is renormalized.
    """
    p = ens.params
    _check_dense(p.M)
    weights = ens.alpha if phases is None else ens.alpha * np.exp(-1j * phases)
    if mask is not None:
        weights = np.where(mask, weights, 0)
        weights = weights / np.linalg.norm(weights)
    sys_t = system_amplitudes(ens.c, t, p.E)
    env = np.zeros((2, 1 << p.M), dtype=complex)
    idx = ens.nu.astype(np.intp)
    env[0, idx] = weights * sys_t[:, 0]
    env[1, idx] = weights * sys_t[:, 1]
    for l in range(p.M):
        env = rotate_bit(env, l, p.omega[l] * t)
    return StateVector(env.reshape(-1), p.M)


def assemble_diagonal_approx(ens: BranchEnsemble, t: float) -> StateVector:
    """The phase-only approximation ``sum_nu alpha_nu |nu(t)> exp(-i Lambda_nu(t))``."""
    return assemble_state(ens, t, capital_lambda_values(ens, t))


def restricted_state(ens: BranchEnsemble, t: float, keep) -> StateVector:
    """Approximate state summed over the branches ``keep`` only (renormalized)."""
    mask = np.isin(ens.nu, np.asarray(list(keep), dtype=np.uint64))
    if not mask.any():
        raise ValueError("no branch selected")
    return assemble_state(ens, t, capital_lambda_values(ens, t), mask)


def branch_gram(ens: BranchEnsemble, t: float) -> np.ndarray:
    """Gram matrix of the branch states at time ``t`` (dense, small M only)."""
    vecs = np.array([branch_state(b, t, ens.params).amplitudes for b in ens.branches])
    return vecs.conj() @ vecs.T


def _neighbour_terms(ens: BranchEnsemble, t: float, weights: np.ndarray):
    """Yield, per site, (rows, neighbour positions, per-branch element values)."""
    p = ens.params
    bits = ens.bits()
    sys_t = system_amplitudes(ens.c, t, p.E)
    g = p.couplings
    sc = np.sin(p.omega * t) * np.cos(p.omega * t)
    for l in range(p.M):
        pos = ens.index_of(ens.nu ^ (np.uint64(1) << np.uint64(l)))
        rows = np.nonzero(pos >= 0)[0]
        if rows.size == 0:
            continue
        nb = pos[rows]
        sigma = bits[rows, l]
        m = 1j * sc[l] * (g[l][:, 1 - sigma] - g[l][:, sigma]).T  # (k, 2)
        val = np.sum(np.conj(sys_t[rows]) * m * sys_t[nb], axis=1)
        yield rows, nb, val * weights[nb]


def phase_equation_residual(ens: BranchEnsemble, t: float) -> np.ndarray:
    """Magnitude of the single-flip sum dropped from each branch's phase equation.

    For branch ``nu`` this is ``|sum_l alpha_{nu^l}(t) <nu(t)|hI|nu^l(t)>|`` with
    ``alpha(t) = alpha exp(-i Lambda(t))``, summed over neighbours present in
    the ensemble.
    """
    weights = ens.alpha * np.exp(-1j * capital_lambda_values(ens, t))
    acc = np.zeros(len(ens), dtype=complex)
    for rows, _, terms in _neighbour_terms(ens, t, weights):
        acc[rows] += terms
    return np.abs(acc)


class SelfEnergyTerms(NamedTuple):
    branch_diagonal: float  # sum_nu |alpha_nu|^2 <nu(t)|h0|nu(t)>
    system: float  # <Phi|h_phi (x) 1|Phi>
    environment: float  # <Phi|1 (x) h_eps|Phi>, only single-flip cross terms survive

    @property
    def total(self) -> float:
        return self.system + self.environment


def self_energy_terms(ens: BranchEnsemble, t: float) -> SelfEnergyTerms:
    """Self-energy of the approximate state, split by operator and by branch structure.

    Each branch's own self-energy is conserved. Environment orthogonality removes
    every cross term of the system part, but ``h_eps`` connects branches that
    differ at one site, so ``environment`` carries phase-dependent cross terms.
    """
    p = ens.params
    Lam = capital_lambda_values(ens, t)
    sys_t = system_amplitudes(ens.c, t, p.E)
    w2 = np.abs(ens.alpha) ** 2
    per_branch = 2 * p.E * np.real(np.conj(sys_t[:, 0]) * sys_t[:, 1])
    system = float(np.sum(w2 * per_branch))
    weights = ens.alpha * np.exp(-1j * Lam)
    env = 0j
    for l in range(p.M):
        pos = ens.index_of(ens.nu ^ (np.uint64(1) << np.uint64(l)))
        rows = np.nonzero(pos >= 0)[0]
        nb = pos[rows]
        overlap = np.sum(np.conj(sys_t[rows]) * sys_t[nb], axis=1)
        env += p.omega[l] * np.sum(np.conj(weights[rows]) * weights[nb] * overlap)
    return SelfEnergyTerms(system, system, float(env.real))
