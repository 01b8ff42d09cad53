"""Perturbative (adiabatic, dissipative) work expressions.

To first order in the drive, each coherence follows

    rho_mn(t) = -i Delta_mn c_mn(t),   c_mn(t) = int_0^t U_mn(t, s) A_mn(s) ds,

with U_mn(t, s) = exp(-int_s^t z_mn). Feeding this into the work integral and
integrating by parts splits W(T) into a metric part (friction, symmetric under
reversal), a Berry part (interference between the initial transient and the
loop phase, plus the connection-shift correction) and, for three or more
levels, a feedback part from second-order coherences.

Sign conventions (all quantities below are what the code returns):

* Q_mn(t) = -hbar omega_mn Delta_mn |A_mn|^2 / (omega_mn^2 + gamma_mn^2), so
  Q >= 0 for thermal initial states and W^(pm) >= 0.
* Lambda_mn(t) = sin(phi_mn) Q_mn(t) [A_mm - A_nn - d/dt arg A_mn], which is
  gauge invariant.
* W is the work done on the system, int Tr[rho dH/dt] dt, matching
  :func:`dape_sim.master_eq.evolve`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import NotConstantGenerator, OpenLoop
from .geometry import (
    DriveProtocol,
    GeometryReport,
    SystemSpec,
    boltzmann_populations,
    connection_at,
    dissipative_angle,
    dissipative_sin_cos,
    is_closed,
    loop_phase_differences,
    metric_and_length,
)
from .master_eq import BathSpec, complex_rate

REGIME_THRESHOLDS = (0.1, 10.0)
QUAD_EPSABS = 1e-13  # times hbar * max spacing


@dataclass(frozen=True, eq=False)
class DapeTerms:
    """Per ordered pair (m, n) quantities; diagonals are zero."""

    pop_diff: np.ndarray  # Delta_mn
    angle: np.ndarray  # phi_mn
    sin_angle: np.ndarray  # sin(phi_mn), from the rational form
    cos_angle: np.ndarray
    q0: np.ndarray  # Q_mn(0)
    berry: np.ndarray  # Phi_mn
    theta: np.ndarray  # omega_mn T - phi_mn - Phi_mn
    envelope: np.ndarray  # exp(-gamma T) sin(omega T - phi)
    epsilon: float
    period: float

    @property
    def pairs(self):
        d = self.pop_diff.shape[0]
        return [(m, n) for m in range(d) for n in range(d) if m != n]


@dataclass(frozen=True, eq=False)
class WorkReport:
    w_total: float
    w_pm: float
    w_pb: float
    w_f: float
    delta_w: float
    length_bound: float
    geometry: GeometryReport
    regime: str
    truncation: float
    epsilon: float
    terms: Optional[DapeTerms] = None
    delta_w_f: float = 0.0  # W_f(cw) - W_f(ccw); not part of delta_w

    @property
    def w_p(self) -> float:
        return self.w_pm + self.w_pb


def regime_of(gamma_t_values) -> str:
    g = np.asarray(gamma_t_values, dtype=float)
    lo, hi = REGIME_THRESHOLDS
    if np.max(g) <= lo:
        return "unitary"
    if np.min(g) >= hi:
        return "dissipative"
    return "crossover"


def _off_diagonal(d):
    return ~np.eye(d, dtype=bool)


def _q_prefactor(system, bath):
    """-hbar omega Delta / (omega^2 + gamma^2); Q_mn(t) = this * |A_mn(t)|^2."""
    pops = boltzmann_populations(system.energies, bath.beta)
    delta = pops[:, None] - pops[None, :]
    w = system.omega
    g = bath.dephasing
    with np.errstate(invalid="ignore", divide="ignore"):
        pref = -system.hbar * w * delta / (w**2 + g**2)
    np.fill_diagonal(pref, 0.0)
    return pref, delta


def _check(system, bath, protocol):
    if not is_closed(system, protocol):
        raise OpenLoop("work decomposition needs a closed protocol")
    bath.validate(system)


def dape_terms(system: SystemSpec, bath: BathSpec, protocol: DriveProtocol) -> DapeTerms:
    _check(system, bath, protocol)
    T = protocol.period
    pref, delta = _q_prefactor(system, bath)
    w = system.omega
    g = bath.dephasing
    phi = dissipative_angle(w, g)
    sin_phi, cos_phi = dissipative_sin_cos(w, g)
    a0 = connection_at(system, protocol, 0.0).matrix
    q0 = pref * np.abs(a0) ** 2
    big_phi = loop_phase_differences(system, protocol)
    theta = w * T - phi - big_phi
    env = np.exp(-g * T) * (np.sin(w * T) * cos_phi - np.cos(w * T) * sin_phi)
    off = _off_diagonal(system.dimension)
    for arr in (phi, sin_phi, cos_phi, theta, env):
        arr[~off] = 0.0
    return DapeTerms(
        pop_diff=delta,
        angle=phi,
        sin_angle=sin_phi,
        cos_angle=cos_phi,
        q0=q0,
        berry=big_phi,
        theta=theta,
        envelope=env,
        epsilon=protocol.epsilon(system),
        period=T,
    )


def _pair_integrands(system, bath, protocol, pref, sin_phi):
    """t -> (gamma Q(t), Lambda(t)) stacked as a (2, d, d) array."""
    g = bath.dephasing

    def f(t):
        s = connection_at(system, protocol, t, with_rate=True)
        a = s.matrix
        q = pref * np.abs(a) ** 2
        diag = a.diagonal().real
        shift = diag[:, None] - diag[None, :]
        # Q d(arg A)/dt written without dividing by |A|^2
        q_arg = pref * np.imag(a.conj() * s.rate)
        lam = sin_phi * (q * shift - q_arg)
        return np.stack([g * q, lam])

    return f


def _integrate_pairs(system, bath, protocol):
    pref, _ = _q_prefactor(system, bath)
    sin_phi, _ = dissipative_sin_cos(system.omega, bath.dephasing)
    sin_phi = sin_phi.copy()
    np.fill_diagonal(sin_phi, 0.0)
    f = _pair_integrands(system, bath, protocol, pref, sin_phi)
    T = protocol.period
    if protocol.is_generator:
        val = f(0.0) * T
    else:
        epsabs = QUAD_EPSABS * system.hbar * system.max_spacing
        val, _ = integrate.quad_vec(f, 0.0, T, epsabs=epsabs, epsrel=1e-11, limit=400)
    return val[0], val[1]


def metric_work(terms: DapeTerms, gamma_q_integral: np.ndarray) -> float:
    """W^(pm) = sum_{m != n} [cos(phi) Q(0) + gamma int Q dt]."""
    return float(np.sum(terms.cos_angle * terms.q0 + gamma_q_integral))


def berry_work(terms: DapeTerms, lambda_integral: np.ndarray, gamma: np.ndarray) -> float:
    """W^(pb) = sum_{m != n} [-Q(0) exp(-gamma T) cos(Theta) + int Lambda dt]."""
    decay = np.exp(-gamma * terms.period)
    return float(np.sum(-terms.q0 * decay * np.cos(terms.theta) + lambda_integral))


def feedback_work(system: SystemSpec, bath: BathSpec, protocol: DriveProtocol) -> float:
    """Second-order work from cyclic connection products A_mk A_kn A_nm.

    W^(f) = -2 hbar sum_{m != n} sum_{k != m, n} omega_mn Delta_mk
            Im int A_mk A_kn A_nm / (z_mk z_mn) dt.
    Identically zero for two levels.
    """
    d = system.dimension
    if d < 3:
        return 0.0
    _check(system, bath, protocol)
    pops = boltzmann_populations(system.energies, bath.beta)
    delta = pops[:, None] - pops[None, :]
    w = system.omega
    hbar = system.hbar

    def integrand(t):
        a = connection_at(system, protocol, t).matrix
        z = complex_rate(system, bath, a)
        total = 0.0
        for m in range(d):
            for n in range(d):
                if m == n:
                    continue
                for k in range(d):
                    if k == m or k == n:
                        continue
                    total += w[m, n] * delta[m, k] * np.imag(a[m, k] * a[k, n] * a[n, m] / (z[m, k] * z[m, n]))
        return -2.0 * hbar * total

    T = protocol.period
    if protocol.is_generator:
        return float(integrand(0.0) * T)
    epsabs = QUAD_EPSABS * hbar * system.max_spacing
    val, _ = integrate.quad(integrand, 0.0, T, epsabs=epsabs, epsrel=1e-11, limit=400)
    return float(val)


def chiral_from_terms(terms: DapeTerms, lambda_integral: np.ndarray) -> float:
    """Delta W = 2 sum_{m != n} [-Q(0) sin(Phi) f(T) + int Lambda dt]."""
    return float(2 * np.sum(-terms.q0 * np.sin(terms.berry) * terms.envelope + lambda_integral))


def chiral_difference_general(system: SystemSpec, bath: BathSpec, protocol: DriveProtocol) -> float:
    terms = dape_terms(system, bath, protocol)
    _, lam = _integrate_pairs(system, bath, protocol)
    return chiral_from_terms(terms, lam)


def chiral_difference_constant_generator(
    system: SystemSpec, bath: BathSpec, protocol: DriveProtocol, samples: int = 16
) -> float:
    """Closed form for drives whose connection is time independent.

    Delta W = 2 sum_{m != n} Q_mn [-sin(Phi_mn) f_mn(T) + Phi_mn sin(phi_mn)].
    Raises NotConstantGenerator when |A_mn(t)| changes by more than 1e-10
    over the loop.
    """
    if not protocol.is_generator:
        a0 = np.abs(connection_at(system, protocol, 0.0).matrix)
        for t in np.linspace(0.0, protocol.period, samples)[1:]:
            at = np.abs(connection_at(system, protocol, t).matrix)
            if np.max(np.abs(at - a0)) > 1e-10 * max(1.0, np.max(a0)):
                raise NotConstantGenerator("connection magnitude varies along the loop")
    terms = dape_terms(system, bath, protocol)
    return float(
        2 * np.sum(terms.q0 * (-np.sin(terms.berry) * terms.envelope + terms.berry * terms.sin_angle))
    )


def length_bound(report: GeometryReport, period: float, hbar: float = 1.0) -> float:
    """Lower bound hbar L^2 / T on the metric work."""
    return hbar * report.length**2 / period


def work_decomposition(
    system: SystemSpec,
    bath: BathSpec,
    protocol: DriveProtocol,
    include_feedback: bool = True,
    geometry_samples: int = 16,
) -> WorkReport:
    terms = dape_terms(system, bath, protocol)
    gq, lam = _integrate_pairs(system, bath, protocol)
    w_pm = metric_work(terms, gq)
    w_pb = berry_work(terms, lam, bath.dephasing)
    w_f, dw_f = 0.0, 0.0
    if include_feedback:
        w_f = feedback_work(system, bath, protocol)
        if w_f != 0.0:
            dw_f = w_f - feedback_work(system, bath, protocol.reversed())
    geom = metric_and_length(system, protocol, bath, samples=geometry_samples)
    T = protocol.period
    off = _off_diagonal(system.dimension)
    eps = terms.epsilon
    return WorkReport(
        w_total=w_pm + w_pb + w_f,
        w_pm=w_pm,
        w_pb=w_pb,
        w_f=w_f,
        delta_w=chiral_from_terms(terms, lam),
        length_bound=length_bound(geom, T, system.hbar),
        geometry=geom,
        regime=regime_of(bath.dephasing[off] * T),
        truncation=eps**3 * system.hbar * system.max_spacing * system.dimension**2,
        epsilon=eps,
        terms=terms,
        delta_w_f=dw_f,
    )


def propagator(system: SystemSpec, bath: BathSpec, protocol: DriveProtocol, m: int, n: int, t: float, s: float):
    """U_mn(t, s) = exp(-int_s^t z_mn)."""
    if protocol.is_generator:
        z = complex_rate(system, bath, connection_at(system, protocol, 0.0).matrix)[m, n]
        return complex(np.exp(-z * (t - s)))
    zf = lambda u: complex_rate(system, bath, connection_at(system, protocol, u).matrix)[m, n]
    re, _ = integrate.quad(lambda u: zf(u).real, s, t, limit=200)
    im, _ = integrate.quad(lambda u: zf(u).imag, s, t, limit=200)
    return complex(np.exp(-(re + 1j * im)))


def dissipative_amplitude(
    system: SystemSpec, bath: BathSpec, protocol: DriveProtocol, m: int, n: int, t: float, rtol: float = 1e-11
) -> complex:
    """c_mn(t) = int_0^t U_mn(t, s) A_mn(s) ds.

    Evaluated as the solution of dc/dt = A_mn - z_mn c with c(0) = 0, which is
    the same integral accumulated along t; the first-order coherence is
    -i Delta_mn c_mn(t).
    """
    if m == n:
        raise ValueError("m and n must differ")
    if t == 0:
        return 0j
    T = protocol.period
    if not (0.0 < t <= T * (1 + 1e-12)):
        raise ValueError(f"t={t} outside [0, T]")

    def rhs(s, y):
        a = connection_at(system, protocol, min(s, T)).matrix
        z = complex_rate(system, bath, a)[m, n]
        return np.array([a[m, n] - z * y[0]])

    wmax = abs(system.omega[m, n]) + float(bath.dephasing[m, n])
    sol = integrate.solve_ivp(
        rhs,
        (0.0, t),
        np.array([0j]),
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-3 / max(wmax, 1e-300),
        max_step=0.05 * 2 * math.pi / wmax,
    )
    return complex(sol.y[0, -1])
