import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from oracles import basis_vec, branch_vector_by_expm, env_kron_operators, kron_operators
from pointer_sim import (Branch, BranchEnsemble, ModelParams, StateVector,
                         assemble_diagonal_approx, branch_state, build_operators,
                         capital_lambda, evolve_exact, lambda_nu, make_ensemble,
                         offdiag_element, phase_equation_residual)
from pointer_sim.branch import (assemble_state, bitstring_to_nu, branch_gram,
                                capital_lambda_values, lambda_values, nu_to_bitstring,
                                phase_records, phase_records_csv, restricted_state,
                                self_energy_terms)
from pointer_sim.errors import ConfigError, ResourceLimitError


def _rand_c(rng):
    z = rng.normal(size=2) + 1j * rng.normal(size=2)
    return z / np.linalg.norm(z)


def _rand_branch(rng, M):
    c = _rand_c(rng)
    return Branch(int(rng.integers(0, 1 << M)), c[0], c[1])


# -- branch states ------------------------------------------------------------------

def test_branch_state_at_zero_is_basis_state(params4):
    psi = branch_state(Branch(0), 0.0, params4)
    np.testing.assert_array_equal(psi.amplitudes, basis_vec(0, params4.dim))


def test_branch_state_matches_free_evolution(params4, rng):
    for _ in range(5):
        b = _rand_branch(rng, 4)
        t = rng.uniform(0, 10)
        ref = branch_vector_by_expm([b.c1, b.c2], b.nu, t, params4.E, params4.omega)
        np.testing.assert_allclose(branch_state(b, t, params4).amplitudes, ref, atol=1e-10)
        free = evolve_exact(branch_state(b, 0.0, params4),
                            build_operators(params4.replace(coupling_scale=0.0))["h_total"], t)
        np.testing.assert_allclose(branch_state(b, t, params4).amplitudes, free.amplitudes,
                                   atol=1e-10)


def test_single_flip_branches_orthogonal(params4, rng):
    c = _rand_c(rng)
    a = branch_state(Branch(0b0101, *c), 1.3, params4)
    b = branch_state(Branch(0b0111, *c), 1.3, params4)
    assert abs(a.overlap(b)) < 1e-16


@pytest.mark.parametrize("M", [2, 4, 6])
def test_branch_gram_identity(M, rng):
    p = ModelParams.random(M, rng, omega_range=(-3, 3))
    ens = make_ensemble(p, rng, coefficients=_rand_c(rng))
    for t in (0.0, 0.4, 7.7):
        np.testing.assert_allclose(branch_gram(ens, t), np.eye(len(ens)), atol=1e-12)


# -- lambda and Lambda ----------------------------------------------------------------

def test_lambda_all_up_at_zero(params4):
    assert lambda_nu(Branch(0), 0.0, params4) == pytest.approx(
        params4.couplings[:, 0, 0].sum(), abs=1e-15)


def test_lambda_without_system_splitting(params4):
    p = params4.replace(E=0.0)
    t = 0.83
    g = p.couplings
    ref = np.sum(g[:, 0, 0] * np.cos(p.omega * t) ** 2 + g[:, 0, 1] * np.sin(p.omega * t) ** 2)
    assert lambda_nu(Branch(0), t, p) == pytest.approx(ref, abs=1e-14)


def test_lambda_matches_dense_expectation(rng):
    p = ModelParams.random(5, rng, omega_range=(-2, 2), v_range=(-1, 1))
    hI = kron_operators(p.E, p.omega, p.couplings)["hI"]
    for _ in range(20):
        b, t = _rand_branch(rng, 5), rng.uniform(0, 10)
        vec = branch_vector_by_expm([b.c1, b.c2], b.nu, t, p.E, p.omega)
        assert abs(lambda_nu(b, t, p) - np.vdot(vec, hI @ vec).real) < 1e-11


def test_capital_lambda_simple_cases(params4, rng):
    b = _rand_branch(rng, 4)
    assert capital_lambda(b, 0.0, params4) == 0.0
    z = params4.zurek_limit()
    assert capital_lambda(b, 3.0, z) == pytest.approx(3.0 * lambda_nu(b, 0.0, z), abs=1e-13)


def test_capital_lambda_against_quadrature(rng):
    for _ in range(10):
        p = ModelParams.random(4, rng, omega_range=(-3, 3))
        b = _rand_branch(rng, 4)
        ref, _ = quad(lambda s: lambda_nu(b, s, p), 0.0, 2.5, epsabs=1e-13, epsrel=1e-13,
                      limit=200)
        assert abs(capital_lambda(b, 2.5, p) - ref) < 1e-9


@pytest.mark.parametrize("delta", [0.0, 1e-10, 1e-6])
def test_capital_lambda_near_resonance(delta):
    E = 0.9
    p = ModelParams(M=2, E=E, omega=[E + delta, -E], v=np.linspace(-1, 1, 8))
    b = Branch(0b10, 0.6, 0.8j)
    ref, _ = quad(lambda s: lambda_nu(b, s, p), 0.0, 4.0, epsabs=1e-13, epsrel=1e-13)
    assert abs(capital_lambda(b, 4.0, p) - ref) < 1e-9


def test_capital_lambda_derivative(rng):
    h = 1e-5
    for _ in range(20):
        p = ModelParams.random(3, rng, omega_range=(-3, 3))
        b, t = _rand_branch(rng, 3), rng.uniform(0.1, 10)
        fd = (capital_lambda(b, t + h, p) - capital_lambda(b, t - h, p)) / (2 * h)
        assert abs(fd - lambda_nu(b, t, p)) < 1e-6


def test_vectorized_matches_scalar(params4, rng):
    ens = make_ensemble(params4, rng)
    t = 1.7
    lam, Lam = lambda_values(ens, t), capital_lambda_values(ens, t)
    for k, b in enumerate(ens.branches):
        assert lam[k] == pytest.approx(lambda_nu(b, t, params4), abs=1e-14)
        assert Lam[k] == pytest.approx(capital_lambda(b, t, params4), abs=1e-13)


# -- transition elements -------------------------------------------------------------

def test_offdiag_zero_at_t0(params4, rng):
    c = _rand_c(rng)
    el = offdiag_element(Branch(0b0000, *c), Branch(0b0100, *c), 0.0, params4)
    assert el.value == 0 and not el.defined_zero and el.site == 3


def test_offdiag_two_flips_defined_zero(params4, rng):
    el = offdiag_element(Branch(0b0000), Branch(0b0110), 1.1, params4)
    assert el.value == 0 and el.defined_zero and el.n_flips == 2
    el = offdiag_element(Branch(0b0110), Branch(0b0110), 1.1, params4)
    assert el.defined_zero and el.n_flips == 0


def test_offdiag_matches_dense_element(rng):
    p = ModelParams.random(3, rng, omega_range=(-2, 2), v_range=(-1, 1))
    t = 0.7
    hI = kron_operators(p.E, p.omega, p.couplings)["hI"]
    for nu in range(8):
        if (nu >> 1) & 1:
            continue
        b = Branch(nu, *_rand_c(rng))
        bp = Branch(nu | 0b010, *_rand_c(rng))
        el = offdiag_element(b, bp, t, p)
        u = branch_vector_by_expm([b.c1, b.c2], b.nu, t, p.E, p.omega)
        up = branch_vector_by_expm([bp.c1, bp.c2], bp.nu, t, p.E, p.omega)
        assert abs(el.value - np.vdot(u, hI @ up)) < 1e-11
        h_eps, _ = env_kron_operators(p.omega, p.couplings, 0)
        U = expm(-1j * h_eps * t)
        e, ep = U @ basis_vec(b.nu, 8), U @ basis_vec(bp.nu, 8)
        for i in range(2):
            _, block = env_kron_operators(p.omega, p.couplings, i)
            assert abs(el.env_element[i] - np.vdot(e, block @ ep)) < 1e-12


def test_printed_sum_prefactor_differs_from_dense(rng):
    p = ModelParams.random(3, rng, omega_range=(0.5, 2), v_range=(0.1, 1))
    b, bp = Branch(0, 1, 0), Branch(0b001, 1, 0)
    diff = offdiag_element(b, bp, 0.7, p)
    alt = offdiag_element(b, bp, 0.7, p, prefactor="sum")
    assert abs(diff.value - alt.value) > 1e-3


# -- assembled states ----------------------------------------------------------------

def test_assemble_at_zero(params4, rng):
    ens = make_ensemble(params4, rng)
    psi = assemble_diagonal_approx(ens, 0.0)
    ref = sum(b.alpha * branch_state(b, 0.0, params4).amplitudes for b in ens.branches)
    np.testing.assert_allclose(psi.amplitudes, ref, atol=1e-14)


def test_assemble_matches_explicit_sum(params4, rng):
    ens = make_ensemble(params4, rng)
    t = 2.3
    Lam = capital_lambda_values(ens, t)
    ref = sum(b.alpha * np.exp(-1j * L) * branch_state(b, t, params4).amplitudes
              for b, L in zip(ens.branches, Lam))
    np.testing.assert_allclose(assemble_diagonal_approx(ens, t).amplitudes, ref, atol=1e-13)


def test_zurek_limit_approximation_exact_for_pointer_branches(rng):
    p = ModelParams.random(5, rng).zurek_limit()
    ens = make_ensemble(p, rng, coefficients="pointer")
    h = build_operators(p)["h_total"]
    psi0 = assemble_diagonal_approx(ens, 0.0)
    for t in (0.5, 1.0, 5.0):
        f = evolve_exact(psi0, h, t).fidelity(assemble_diagonal_approx(ens, t))
        assert f > 1 - 1e-12


def test_phases_preserve_branch_weights(rng):
    p = ModelParams.random(4, rng, omega_range=(-2, 2))
    ens = make_ensemble(p, rng, coefficients="pointer")
    # pointer branches at t=0 occupy distinct basis states, so |amplitude| = |alpha|
    for t in (0.0, 3.3):
        Lam = capital_lambda_values(ens, t)
        coeffs = ens.alpha * np.exp(-1j * Lam)
        np.testing.assert_allclose(np.abs(coeffs), np.abs(ens.alpha), rtol=0, atol=1e-15)
    psi = assemble_diagonal_approx(ens, 0.0).amplitudes
    idx = (np.argmax(np.abs(ens.c), axis=1) << 4) | ens.nu.astype(int)
    np.testing.assert_allclose(np.abs(psi[idx]), np.abs(ens.alpha), atol=1e-15)


def test_weak_coupling_infidelity_shrinks(rng):
    base = ModelParams.random(6, rng, omega_range=(-1, 1), E=0.7)
    ens0 = make_ensemble(base, rng, coefficients="pointer")
    eps = []
    for s in (0.02, 0.01, 0.005):
        p = base.replace(coupling_scale=s)
        ens = BranchEnsemble(p, ens0.nu, ens0.c, ens0.alpha)
        exact = evolve_exact(assemble_diagonal_approx(ens, 0.0), build_operators(p)["h_total"], 1)
        eps.append(1 - exact.fidelity(assemble_diagonal_approx(ens, 1.0)))
    assert eps[0] > eps[1] > eps[2] >= 0


def test_restricted_state_renormalized(params4, rng):
    ens = make_ensemble(params4, rng)
    psi = restricted_state(ens, 1.0, ens.nu[:3])
    assert abs(psi.norm - 1) < 1e-12
    with pytest.raises(ValueError):
        restricted_state(ens, 1.0, [])


def test_mask_keeps_selected_branches(params4, rng):
    ens = make_ensemble(params4, rng, coefficients="pointer")
    mask = np.zeros(len(ens), bool)
    mask[[1, 5]] = True
    psi = assemble_state(ens, 0.0, None, mask)
    assert np.count_nonzero(np.abs(psi.amplitudes) > 1e-15) == 2


# -- residual of the phase equation ----------------------------------------------------

def test_residual_zero_at_t0(params4, rng):
    assert np.all(phase_equation_residual(make_ensemble(params4, rng), 0.0) == 0)


def test_residual_zero_at_quarter_period(rng):
    w = 1.3
    p = ModelParams.random(4, rng).replace(omega=np.full(4, w))
    ens = make_ensemble(p, rng)
    assert np.max(phase_equation_residual(ens, math.pi / (2 * w))) < 1e-14


def _residual_loop(ens, t):
    Lam = dict(zip(ens.nu.tolist(), capital_lambda_values(ens, t)))
    bs = {b.nu: b for b in ens.branches}
    out = []
    for b in ens.branches:
        acc = 0j
        for l in range(ens.M):
            nb = bs.get(b.nu ^ (1 << l))
            if nb is not None:
                el = offdiag_element(b, nb, t, ens.params)
                acc += nb.alpha * np.exp(-1j * Lam[nb.nu]) * el.value
        out.append(abs(acc))
    return np.array(out)


def test_residual_matches_loop_sampled_m64(rng):
    p = ModelParams.random(64, rng, omega_range=(0, math.pi))
    ens = make_ensemble(p, rng, n_samples=20)
    assert ens.sampled and len(ens) > 20
    np.testing.assert_allclose(phase_equation_residual(ens, 1.0), _residual_loop(ens, 1.0),
                               rtol=0, atol=1e-12)


def test_residual_matches_loop_complete(params4, rng):
    ens = make_ensemble(params4, rng)
    np.testing.assert_allclose(phase_equation_residual(ens, 2.1), _residual_loop(ens, 2.1),
                               atol=1e-13)


# -- self energy ---------------------------------------------------------------------

def test_environment_self_energy_of_each_branch_vanishes(params4, rng):
    h_eps, _ = env_kron_operators(params4.omega, params4.couplings, 0)
    U = lambda t: expm(-1j * h_eps * t)
    for nu in rng.integers(0, 16, size=5):
        for t in (0.0, 0.9, 4.0):
            e = U(t) @ basis_vec(int(nu), 16)
            assert abs(np.vdot(e, h_eps @ e)) < 1e-13


def test_self_energy_terms_against_dense(params4, rng):
    ens = make_ensemble(params4, rng)
    ops = kron_operators(params4.E, params4.omega, params4.couplings)
    for t in (0.0, 1.4, 6.0):
        psi = assemble_diagonal_approx(ens, t).amplitudes
        terms = self_energy_terms(ens, t)
        assert abs(terms.system - np.vdot(psi, ops["h_phi"] @ psi).real) < 1e-12
        assert abs(terms.environment - np.vdot(psi, ops["h_eps"] @ psi).real) < 1e-12
        assert abs(terms.total - np.vdot(psi, ops["h0"] @ psi).real) < 1e-12


def test_branch_diagonal_self_energy_constant(params4, rng):
    ens = make_ensemble(params4, rng)
    vals = [self_energy_terms(ens, t).branch_diagonal for t in np.linspace(0, 10, 50)]
    assert np.ptp(vals) < 1e-12


# -- ensembles and serialization -------------------------------------------------------

def test_ensemble_validation(params4):
    with pytest.raises(ConfigError):
        BranchEnsemble(params4, [0, 0], [[1, 0], [1, 0]], [0.6, 0.8])
    with pytest.raises(ConfigError):
        BranchEnsemble(params4, [0, 1], [[1, 0], [1, 0]], [1, 1])
    with pytest.raises(ConfigError):
        BranchEnsemble(params4, [0, 1 << 4], [[1, 0], [1, 0]], [0.6, 0.8])
    with pytest.raises(ResourceLimitError):
        make_ensemble(ModelParams.random(21, np.random.default_rng(0)))


def test_ensemble_is_sorted_and_indexable(params4):
    ens = BranchEnsemble(params4, [5, 2, 9], [[1, 0], [0, 1], [1, 0]], [0.6, 0.0, 0.8])
    assert ens.nu.tolist() == [2, 5, 9]
    assert ens.index_of([9, 3]).tolist() == [2, -1]
    assert not ens.complete


@settings(max_examples=50)
@given(st.integers(1, 40), st.data())
def test_bitstring_round_trip(M, data):
    nu = data.draw(st.integers(0, (1 << M) - 1))
    s = nu_to_bitstring(nu, M)
    assert len(s) == M and bitstring_to_nu(s) == nu


def test_ensemble_json_round_trip(params4, rng):
    ens = make_ensemble(params4, rng)
    back = BranchEnsemble.from_dict(json.loads(ens.to_json()))
    np.testing.assert_array_equal(back.nu, ens.nu)
    np.testing.assert_array_equal(back.c, ens.c)
    np.testing.assert_array_equal(back.alpha, ens.alpha)


def test_phase_records_csv(params4, rng):
    ens = make_ensemble(params4, rng)
    text = phase_records_csv(phase_records(ens, [0.0, 1.0]), 4)
    lines = text.strip().split("\n")
    assert lines[0] == "nu,t,lambda,Lambda"
    assert len(lines) == 1 + 2 * 16
    assert lines[1].startswith("0000,0.0,")
