import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dape_sim.checks import feedback_model
from dape_sim.dape import (
    chiral_difference_constant_generator,
    chiral_difference_general,
    dape_terms,
    dissipative_amplitude,
    feedback_work,
    regime_of,
    work_decomposition,
)
from dape_sim.errors import NotConstantGenerator, OpenLoop
from dape_sim.geometry import DriveProtocol, SystemSpec, connection_at, dissipative_angle, dissipative_sin_cos
from dape_sim.master_eq import chiral_difference_numeric, complex_rate, evolve
from dape_sim.sweep import spin_loop
from dape_sim.tls import (
    TlsParams,
    tls_analytic_build,
    tls_build,
    tls_chiral_dissipative,
    tls_chiral_exact_dape,
    tls_chiral_unitary,
    tls_length,
)

from conftest import three_level, tls_params


def _tls(**kw):
    p = tls_params(**kw)
    system, protocol, bath = tls_build(p)
    return p, system, bath, protocol


def _wobbly_loop(gamma_t, eps=0.02, theta0=0.9, modes=((0.15, -0.1), (0.05, 0.08))):
    p = tls_params(eps=eps, gamma_t=gamma_t, theta=theta0)
    system, _, bath = tls_analytic_build(p)
    path_s, vel_s = spin_loop(theta0, modes)
    T = p.period
    protocol = DriveProtocol(period=T, path=lambda t: path_s(t / T), velocity=lambda t: vel_s(t / T) / T)
    return system, bath, protocol


# --- dissipative angle and Q -------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(w=st.floats(1e-3, 1e3), g=st.floats(1e-6, 1e3))
def test_dissipative_angle_properties(w, g):
    phi = float(dissipative_angle(w, g))
    assert 0.0 < phi < math.pi
    assert float(dissipative_angle(-w, g)) == pytest.approx(-phi, abs=1e-15)
    # tan(phi/2) = gamma / omega
    assert math.tan(phi / 2) == pytest.approx(g / w, rel=1e-9)
    sin_phi, cos_phi = dissipative_sin_cos(w, g)
    assert float(sin_phi) == pytest.approx(2 * w * g / (w**2 + g**2), rel=1e-12)
    assert float(sin_phi) == pytest.approx(math.sin(phi), abs=1e-15)
    assert float(cos_phi) == pytest.approx(math.cos(phi), abs=1e-15)


def test_dissipative_angle_limits_and_branch():
    assert float(dissipative_angle(1.0, 1e-12)) == pytest.approx(0.0, abs=1e-10)
    assert float(dissipative_angle(1.0, 1e12)) == pytest.approx(math.pi, abs=1e-10)
    assert float(dissipative_angle(1.0, 1.0)) == pytest.approx(math.pi / 2, abs=1e-15)
    g = np.linspace(0.99, 1.01, 201)
    assert np.max(np.abs(np.diff(dissipative_angle(1.0, g)))) < 1e-3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), beta=st.floats(0.01, 10.0), gamma_t=st.floats(0.01, 100.0))
def test_q_is_non_negative_for_thermal_states(seed, beta, gamma_t):
    system, bath, protocol = three_level(gamma_t=gamma_t, beta=beta, seed=seed)
    terms = dape_terms(system, bath, protocol)
    assert np.all(terms.q0 >= 0)
    assert np.allclose(terms.q0, terms.q0.T, rtol=1e-12, atol=0)


def test_regime_labels():
    assert regime_of([0.05]) == "unitary"
    assert regime_of([0.1]) == "unitary"
    assert regime_of([10.0, 20.0]) == "dissipative"
    assert regime_of([0.05, 20.0]) == "crossover"
    assert regime_of([3.0]) == "crossover"


# --- decomposition --------------------------------------------------------------


def test_static_protocol_does_no_work():
    p, system, bath, _ = _tls(gamma_t=2.0)
    static = DriveProtocol(period=p.period, generator=np.zeros((2, 2)))
    r = work_decomposition(system, bath, static)
    assert (r.w_total, r.w_pm, r.w_pb, r.w_f, r.delta_w, r.length_bound) == (0.0,) * 6


def test_report_is_self_consistent():
    p, system, bath, protocol = _tls(eps=0.02, gamma_t=3.0)
    r = work_decomposition(system, bath, protocol)
    assert r.w_total == r.w_pm + r.w_pb + r.w_f
    assert r.w_p == r.w_pm + r.w_pb
    assert r.regime == "crossover"
    assert r.epsilon == pytest.approx(0.02, rel=1e-14)
    assert r.truncation == pytest.approx(0.02**3 * 4, rel=1e-12)
    assert r.geometry.length == pytest.approx(tls_length(p), rel=1e-12)


@pytest.mark.parametrize("gamma_t", [0.05, 1.0, 30.0])
def test_constant_speed_metric_work_saturates_the_bound(gamma_t):
    _, system, bath, protocol = _tls(eps=0.01, gamma_t=gamma_t)
    r = work_decomposition(system, bath, protocol)
    boundary = float(np.sum(r.terms.cos_angle * r.terms.q0))
    assert r.w_pm - boundary == pytest.approx(r.length_bound, rel=1e-12)
    assert r.w_pm >= r.length_bound


def test_length_bound_closed_form():
    p = tls_params(eps=0.01, gamma_t=2 * math.pi / 0.01 * 1e-3)  # omega / gamma = 1000
    assert p.omega / p.gamma == pytest.approx(1000.0)
    _, system, bath, protocol = _tls(eps=0.01, gamma_t=p.gamma_t)
    r = work_decomposition(system, bath, protocol)
    w, g, T = p.omega, p.gamma, p.period
    want = math.pi**2 * math.sin(p.theta) ** 2 * 2 * p.delta * w * g / ((w**2 + g**2) * T)
    assert r.length_bound == pytest.approx(want, rel=1e-12)


def test_polar_loop_has_zero_bound_and_work():
    _, system, bath, protocol = _tls(theta=0.0)
    r = work_decomposition(system, bath, protocol)
    assert r.length_bound == 0.0 and r.w_pm == 0.0 and r.delta_w == 0.0


def test_two_speed_loop_exceeds_the_bound():
    # precession at fixed theta covering 30% of the turn in the first half period
    p = tls_params(eps=0.02, gamma_t=20.0, theta=0.9)
    system, _, bath = tls_analytic_build(p)
    T, f = p.period, 0.3

    def phi(t):
        s = t / T
        return -2 * math.pi * (2 * f * s if s < 0.5 else f + 2 * (1 - f) * (s - 0.5))

    def velocity(t):
        return np.array([0.0, -2 * math.pi * (2 * f if t / T < 0.5 else 2 * (1 - f)) / T])

    protocol = DriveProtocol(period=T, path=lambda t: np.array([p.theta, phi(t)]), velocity=velocity)
    r = work_decomposition(system, bath, protocol, include_feedback=False, geometry_samples=4)
    boundary = float(np.sum(r.terms.cos_angle * r.terms.q0))
    # int sdot^2 dt = (L^2 / T) * (4 f^2 + 4 (1 - f)^2) / 2
    assert r.geometry.length == pytest.approx(tls_length(p), rel=1e-6)
    assert r.length_bound < r.w_pm - boundary
    assert (r.w_pm - boundary) / r.length_bound == pytest.approx(2 * (f**2 + (1 - f) ** 2), rel=1e-3)


def test_non_uniform_loop_exceeds_the_bound():
    system, bath, protocol = _wobbly_loop(gamma_t=20.0)
    r = work_decomposition(system, bath, protocol, include_feedback=False, geometry_samples=4)
    boundary = float(np.sum(r.terms.cos_angle * r.terms.q0))
    assert r.w_pm - boundary > r.length_bound * (1 + 1e-3)


@pytest.mark.parametrize("gamma_t", [0.1, 1.0, 20.0])
def test_first_order_work_tracks_the_master_equation(gamma_t):
    eps = 0.01
    _, system, bath, protocol = _tls(eps=eps, gamma_t=gamma_t)
    r = work_decomposition(system, bath, protocol)
    w_ode = evolve(system, bath, protocol, tol=1e-10, cache_connections=False).final_work
    assert abs(r.w_p - w_ode) <= 10 * eps * abs(w_ode)


def test_decomposition_needs_a_closed_loop():
    p = tls_params(eps=0.05)
    system, _, bath = tls_analytic_build(p)
    T = p.period
    protocol = DriveProtocol(period=T, path=lambda t: np.array([0.5 + 0.2 * t / T, -2 * math.pi * t / T]))
    with pytest.raises(OpenLoop):
        work_decomposition(system, bath, protocol)


# --- chiral difference ------------------------------------------------------------


@pytest.mark.parametrize("theta", [0.3, math.pi / 4, 2.2])
@pytest.mark.parametrize("gamma_t", [0.01, 1.0, 50.0])
def test_general_and_closed_forms_agree(theta, gamma_t):
    p, system, bath, protocol = _tls(eps=0.013, gamma_t=gamma_t, theta=theta)
    general = chiral_difference_general(system, bath, protocol)
    const = chiral_difference_constant_generator(system, bath, protocol)
    closed = tls_chiral_exact_dape(p)
    assert general == pytest.approx(closed, rel=1e-12, abs=1e-14 * abs(closed))
    assert const == pytest.approx(closed, rel=1e-12)


def test_no_phase_and_no_shift_means_no_chirality():
    _, system, bath, protocol = _tls(eps=0.02, gamma_t=2.0, theta=math.pi / 2)
    _, s4, b4, p4 = _tls(eps=0.02, gamma_t=2.0, theta=math.pi / 4)
    scale = abs(chiral_difference_general(s4, b4, p4))
    assert abs(chiral_difference_general(system, bath, protocol)) < 1e-12 * scale


@pytest.mark.parametrize("gamma_t", [1.0, 20.0])
def test_three_level_chiral_difference_against_master_equation(gamma_t):
    eps = 0.01
    system, bath, protocol = three_level(eps=eps, gamma_t=gamma_t)
    num = chiral_difference_numeric(system, bath, protocol, tol=1e-11)
    general = chiral_difference_general(system, bath, protocol)
    assert abs(general - num) <= 5 * eps * abs(num)


def test_constant_generator_dissipative_reduction():
    system, bath, protocol = three_level(eps=0.01, gamma_t=20.0, seed=3)
    terms = dape_terms(system, bath, protocol)
    reduced = float(2 * np.sum(terms.q0 * terms.berry * np.sin(terms.angle)))
    full = chiral_difference_constant_generator(system, bath, protocol)
    assert abs(full - reduced) <= math.exp(-20) * 2 * np.sum(terms.q0)


def test_constant_generator_unitary_reduction():
    system, bath, protocol = three_level(eps=0.0113, gamma_t=0.001, seed=3)  # sin(omega T) away from 0
    terms = dape_terms(system, bath, protocol)
    w = system.omega
    reduced = float(-2 * np.sum(terms.q0 * np.sin(terms.berry) * np.sin(w * protocol.period)))
    full = chiral_difference_constant_generator(system, bath, protocol)
    assert full == pytest.approx(reduced, rel=1e-2)


def test_chiral_difference_is_gauge_and_parametrization_independent():
    p = tls_params(eps=0.02, gamma_t=2.0, theta=0.8)
    sg, pg, bg = tls_build(p)
    sa, pa, ba = tls_analytic_build(p)
    assert chiral_difference_general(sa, ba, pa) == pytest.approx(chiral_difference_general(sg, bg, pg), rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), gamma_t=st.floats(0.01, 50.0))
def test_chiral_difference_is_odd_in_orientation(seed, gamma_t):
    system, bath, protocol = three_level(gamma_t=gamma_t, seed=seed)
    fwd = chiral_difference_general(system, bath, protocol)
    bwd = chiral_difference_general(system, bath, protocol.reversed())
    assert bwd == pytest.approx(-fwd, rel=1e-10, abs=1e-24)


def test_constant_generator_form_rejects_varying_connection():
    system, bath, protocol = _wobbly_loop(gamma_t=1.0)
    with pytest.raises(NotConstantGenerator):
        chiral_difference_constant_generator(system, bath, protocol)


@pytest.mark.parametrize("k", [200, 1000])
def test_unitary_limit(k):
    T = math.pi / 2 + 2 * math.pi * k  # sin(omega T) = 1
    p = TlsParams(omega=1.0, theta=math.pi / 4, period=T, gamma=1e-9, delta=0.1)
    assert tls_chiral_exact_dape(p) == pytest.approx(tls_chiral_unitary(p), rel=1e-5)


@pytest.mark.parametrize("gamma_t", [50.0, 200.0])
def test_dissipative_limit(gamma_t):
    p = tls_params(eps=0.01, gamma_t=gamma_t)
    assert tls_chiral_exact_dape(p) == pytest.approx(tls_chiral_dissipative(p), rel=1e-12)


@pytest.mark.parametrize("ratio", [0.02, 0.05])
def test_oracle_converges_at_fixed_damping_ratio(ratio):
    """With gamma/omega held fixed the closed form is accurate to O(eps)."""
    errs = []
    for eps in (0.05, 0.025, 0.0125):
        T = 2 * math.pi / eps
        p = TlsParams(omega=1.0, theta=math.pi / 4, period=T, gamma=ratio, delta=0.1, min_gap_ratio=1.0)
        system, protocol, bath = tls_build(p)
        num = chiral_difference_numeric(system, bath, protocol, tol=1e-10)
        ref = tls_chiral_exact_dape(p)
        errs.append(abs(num - ref) / abs(ref))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(1.6 <= r <= 2.4 for r in ratios), (errs, ratios)
    assert errs[-1] <= 5 * 0.0125 * (0.05 / ratio)


# --- feedback -----------------------------------------------------------------


def test_feedback_vanishes_for_two_levels():
    _, system, bath, protocol = _tls(gamma_t=1.0)
    assert feedback_work(system, bath, protocol) == 0.0


def test_feedback_vanishes_without_cyclic_products():
    # a generator that only connects levels 0-1 and 1-2 leaves A_02 = 0
    m = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / math.sqrt(2)
    system, bath, reference = feedback_model()
    T = reference.period
    protocol = DriveProtocol(period=T, generator=(2 * math.pi / T) * m)  # eigenvalues -1, 0, 1
    # round-off only: compare with the cyclic-product channel of the reference drive
    scale = abs(feedback_work(system, bath, reference))
    assert abs(feedback_work(system, bath, protocol)) < 1e-10 * scale


def test_feedback_reduces_the_error_of_the_first_order_work():
    eps = 0.01
    system, bath, protocol = feedback_model(eps=eps)
    w_ode = evolve(system, bath, protocol, tol=1e-11, cache_connections=False).final_work
    r = work_decomposition(system, bath, protocol)
    assert r.w_f != 0.0
    assert np.sign(r.w_f) == np.sign(w_ode - r.w_p)
    assert abs(r.w_total - w_ode) < abs(r.w_p - w_ode)
    assert abs(r.w_total - w_ode) <= 10 * eps * abs(w_ode)


def test_feedback_channel_carries_the_chirality_without_diagonal_connections():
    eps = 0.01
    system, bath, protocol = feedback_model(eps=eps)
    num = chiral_difference_numeric(system, bath, protocol, tol=1e-11)
    r = work_decomposition(system, bath, protocol)
    assert abs(r.delta_w) < 1e-12 * abs(num)
    assert r.delta_w_f == pytest.approx(2 * r.w_f, rel=1e-10)
    assert abs(r.delta_w + r.delta_w_f - num) <= 5 * eps * abs(num)


def test_feedback_integrand_is_consistent_for_paths_and_generators():
    # the same constant-connection drive, once as a generator and once as a sampled path
    system, bath, protocol = three_level(eps=0.05, gamma_t=5.0, seed=4)
    gen_value = feedback_work(system, bath, protocol)
    vals, vecs = np.linalg.eigh(protocol.generator)
    b0 = system.basis0
    path_system = SystemSpec(
        energies=system.energies,
        eigenbasis=lambda r: (vecs * np.exp(1j * vals * r[0])) @ vecs.conj().T @ b0,
    )
    path_protocol = DriveProtocol(period=protocol.period, path=lambda t: np.array([t]))
    assert feedback_work(path_system, bath, path_protocol) == pytest.approx(gen_value, rel=1e-6)


# --- first-order amplitude ------------------------------------------------------


@pytest.mark.parametrize("frac", [0.25, 1.0])
def test_dissipative_amplitude_matches_closed_form(frac):
    system, bath, protocol = three_level(eps=0.05, gamma_t=3.0, seed=2)
    a = connection_at(system, protocol, 0.0).matrix
    z = complex_rate(system, bath, a)
    t = frac * protocol.period
    for m, n in ((0, 1), (2, 0)):
        want = a[m, n] * (1 - np.exp(-z[m, n] * t)) / z[m, n]
        got = dissipative_amplitude(system, bath, protocol, m, n, t)
        assert abs(got - want) <= 1e-9 * abs(want)


def test_dissipative_amplitude_without_damping():
    p = tls_params(eps=0.05)
    system, protocol, _ = tls_build(p)
    from dape_sim.master_eq import BathSpec

    bath = BathSpec(beta=p.beta, rates=np.zeros((2, 2)), dephasing=np.full((2, 2), 1e-300), min_gap_ratio=1.0)
    a = connection_at(system, protocol, 0.0).matrix
    w_shift = system.omega[0, 1] - a[0, 0].real + a[1, 1].real
    t = 0.4 * p.period
    want = a[0, 1] * (1 - np.exp(-1j * w_shift * t)) / (1j * w_shift)
    assert abs(dissipative_amplitude(system, bath, protocol, 0, 1, t) - want) <= 1e-9 * abs(want)


def test_dissipative_amplitude_reaches_the_adiabatic_value():
    system, bath, protocol = three_level(eps=0.05, gamma_t=10.0, seed=6)
    a = connection_at(system, protocol, 0.0).matrix
    z = complex_rate(system, bath, a)
    c = dissipative_amplitude(system, bath, protocol, 1, 2, protocol.period)
    target = a[1, 2] / z[1, 2]
    assert abs(c - target) < 2 * math.exp(-10) * abs(target)


def test_dissipative_amplitude_arguments():
    system, bath, protocol = three_level()
    assert dissipative_amplitude(system, bath, protocol, 0, 1, 0.0) == 0j
    with pytest.raises(ValueError):
        dissipative_amplitude(system, bath, protocol, 1, 1, 1.0)
    with pytest.raises(ValueError):
        dissipative_amplitude(system, bath, protocol, 0, 1, 2 * protocol.period)
