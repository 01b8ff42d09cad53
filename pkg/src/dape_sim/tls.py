"""Two-level system in a uniformly precessing field.

H(t) = -(hbar omega / 2) n(t).sigma with n at fixed polar angle theta. The
clockwise protocol is generated by G = Omega sigma_z / 2 through
|n(t)> = exp(iGt)|n(0)>, so the adiabatic-frame gap is shifted to
omega_tilde = omega - Omega cos(theta) and the excited-minus-ground Berry phase
difference is Phi = 2 pi cos(theta). Counterclockwise flips the sign of Omega.

Besides the builder for the general simulator, this module holds the
closed-form expressions: loop length, chiral work difference in its
perturbative form and its unitary/dissipative limits, and the z-pinned
solution of the adiabatic-frame Bloch equations with its work integral.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate, linalg

from .errors import AdiabaticityViolation, ValidationError
from .geometry import DriveProtocol, SystemSpec, dissipative_angle, dissipative_sin_cos
from .master_eq import BathSpec

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def sin_cos(theta: float) -> tuple[float, float]:
    """sin and cos that are exact at the symmetric angles 0, pi/2 and pi."""
    if theta == 0.0:
        return 0.0, 1.0
    if theta == math.pi / 2:
        return 1.0, 0.0
    if theta == math.pi:
        return 0.0, -1.0
    return math.sin(theta), math.cos(theta)


def spinor_basis(theta: float, phi: float) -> np.ndarray:
    """Columns |+> (ground) and |-> (excited) of -(omega/2) n.sigma."""
    s, c = sin_cos(theta / 2) if theta != math.pi else (1.0, 0.0)
    e = np.exp(1j * phi)
    return np.array([[c, s], [e * s, -e * c]], dtype=complex)


@dataclass(frozen=True)
class TlsParams:
    """Parameters of the precessing-field model (hbar = 1 unless set).

    ``delta`` is the initial population difference tanh(beta hbar omega / 2);
    ``gamma_long`` defaults to 2 * gamma.
    """

    omega: float
    theta: float
    period: float
    gamma: float
    delta: float
    gamma_long: Optional[float] = None
    orientation: str = "cw"
    hbar: float = 1.0
    min_gap_ratio: float = 1e3

    def __post_init__(self):
        if self.gamma_long is None:
            object.__setattr__(self, "gamma_long", 2.0 * self.gamma)
        if self.orientation not in ("cw", "ccw"):
            raise ValidationError("orientation must be 'cw' or 'ccw'")
        if not (0.0 <= self.theta <= math.pi):
            raise ValidationError("theta must lie in [0, pi]")
        if not (self.omega > 0 and self.period > 0 and self.gamma >= 0 and self.gamma_long >= 0):
            raise ValidationError("omega, period must be positive and rates non-negative")
        if not (0.0 <= self.delta <= 1.0):
            raise ValidationError("delta must lie in [0, 1]")

    @property
    def sign(self) -> int:
        return 1 if self.orientation == "cw" else -1

    @property
    def drive(self) -> float:
        """Signed angular drive frequency Omega = +-2 pi / T."""
        return self.sign * 2 * math.pi / self.period

    @property
    def epsilon(self) -> float:
        return 2 * math.pi / (self.omega * self.period)

    @property
    def omega_tilde(self) -> float:
        return self.omega - self.drive * sin_cos(self.theta)[1]

    @property
    def berry_phase(self) -> float:
        return self.sign * 2 * math.pi * sin_cos(self.theta)[1]

    @property
    def beta(self) -> float:
        if self.delta >= 1.0:
            return math.inf
        return 2 * math.atanh(self.delta) / (self.hbar * self.omega)

    @property
    def dissipative_angle(self) -> float:
        return float(dissipative_angle(self.omega, self.gamma))

    @property
    def gamma_t(self) -> float:
        return self.gamma * self.period

    def reversed(self) -> "TlsParams":
        return replace(self, orientation="ccw" if self.orientation == "cw" else "cw")

    def validate(self):
        if self.epsilon > 0.3:
            raise AdiabaticityViolation(f"epsilon={self.epsilon:.3g} exceeds 0.3")
        if self.gamma > 0 and self.omega < self.min_gap_ratio * self.gamma:
            raise ValidationError(f"omega/gamma={self.omega / self.gamma:.3g} below {self.min_gap_ratio:g}")
        if self.omega_tilde <= 0:
            raise AdiabaticityViolation("shifted gap omega_tilde must stay positive")


def tls_build(params: TlsParams, min_gap_ratio: Optional[float] = None):
    """Generator-form system, protocol and bath for the general simulator.

    Levels are ordered (|+>, |->) with energies (-hbar omega/2, +hbar omega/2).
    """
    if min_gap_ratio is not None:
        params = replace(params, min_gap_ratio=min_gap_ratio)
    params.validate()
    w = params.omega
    system = SystemSpec(
        energies=np.array([-0.5, 0.5]) * params.hbar * w,
        basis0=spinor_basis(params.theta, 0.0),
        hbar=params.hbar,
    )
    big_omega = 2 * math.pi / params.period
    protocol = DriveProtocol(
        period=params.period,
        generator=0.5 * big_omega * SIGMA_Z,
        orientation=params.orientation,
    )
    bath = BathSpec.detailed_balance(
        system,
        params.beta,
        coupling=0.5 * params.gamma_long,
        dephasing=params.gamma,
        min_gap_ratio=params.min_gap_ratio,
        longitudinal_rate=params.gamma_long,
    )
    return system, protocol, bath


def tls_analytic_build(params: TlsParams):
    """Same model through the explicit spinor map with azimuth phi(t) = -Omega t."""
    params.validate()
    system = SystemSpec(
        energies=np.array([-0.5, 0.5]) * params.hbar * params.omega,
        eigenbasis=lambda r: spinor_basis(r[0], r[1]),
        hbar=params.hbar,
    )
    T = params.period
    big_omega = 2 * math.pi / T
    protocol = DriveProtocol(
        period=T,
        path=lambda t: np.array([params.theta, -big_omega * t]),
        velocity=lambda t: np.array([0.0, -big_omega]),
        orientation=params.orientation,
    )
    _, _, bath = tls_build(params)
    return system, protocol, bath


# ---------------------------------------------------------------------------
# closed-form expressions
# ---------------------------------------------------------------------------


def tls_length(params: TlsParams) -> float:
    """Thermodynamic length pi sin(theta) sqrt(2 Delta omega gamma / (omega^2 + gamma^2))."""
    w, g = params.omega, params.gamma
    s = sin_cos(params.theta)[0]
    return math.pi * s * math.sqrt(2 * params.delta * w * g / (w**2 + g**2))


def tls_q(params: TlsParams) -> float:
    """Q = hbar L^2 / (2 gamma T^2) = hbar omega Delta |A|^2 / (omega^2 + gamma^2)."""
    s = sin_cos(params.theta)[0]
    a2 = (math.pi * s / params.period) ** 2
    return params.hbar * params.omega * params.delta * a2 / (params.omega**2 + params.gamma**2)


def tls_chiral_exact_dape(params: TlsParams) -> float:
    """Chiral work difference from the perturbative expansion (finite gamma)."""
    w, g, T = params.omega, params.gamma, params.period
    sin_phi, cos_phi = (float(x) for x in dissipative_sin_cos(w, g))
    big_phi = params.berry_phase
    q = tls_q(params)
    # 2 hbar L^2/(gamma T^2) = 4 Q, finite as gamma -> 0
    # sin(wT - phi) expanded: subtracting phi from a large wT first costs digits
    lag = math.sin(w * T) * cos_phi - math.cos(w * T) * sin_phi
    return 4 * q * (-math.exp(-g * T) * math.sin(big_phi) * lag + big_phi * sin_phi)


def tls_chiral_unitary(params: TlsParams) -> float:
    """Unitary-regime limit: -(4 pi^2 hbar Delta sin^2 theta / (omega T^2)) sin(omega T) sin Phi."""
    s = sin_cos(params.theta)[0]
    w, T = params.omega, params.period
    amp = 4 * math.pi**2 * params.hbar * params.delta * s**2 / (w * T**2)
    return -amp * math.sin(w * T) * math.sin(params.berry_phase)


def tls_chiral_unitary_amplitude(params: TlsParams) -> float:
    """Fringe envelope |4 pi^2 hbar Delta sin^2 theta sin Phi / (omega T^2)|."""
    s = sin_cos(params.theta)[0]
    return abs(4 * math.pi**2 * params.hbar * params.delta * s**2 * math.sin(params.berry_phase)) / (
        params.omega * params.period**2
    )


def tls_chiral_dissipative(params: TlsParams) -> float:
    """Dissipative-regime limit 8 pi^2 hbar omega^2 gamma Delta sin^2 theta Phi / ((omega^2+gamma^2)^2 T^2)."""
    s = sin_cos(params.theta)[0]
    w, g, T = params.omega, params.gamma, params.period
    return (
        8 * math.pi**2 * params.hbar * w**2 * g * params.delta * s**2 * params.berry_phase
        / ((w**2 + g**2) ** 2 * T**2)
    )


def tls_chiral_exact_bloch(params: TlsParams) -> float:
    """Chiral work difference extracted from the z-pinned Bloch work."""
    w, g, T = params.omega, params.gamma, params.period
    big_phi = params.berry_phase
    s = sin_cos(params.theta)[0]
    # 2 hbar L^2 / gamma = 4 pi^2 hbar sin^2(theta) Delta omega / (omega^2 + gamma^2)
    pref = 4 * math.pi**2 * params.hbar * s**2 * params.delta * w / ((w**2 + g**2) ** 2 * T**2)
    osc = math.exp(-g * T) * (2 * w * g * math.cos(w * T) - (w**2 - g**2) * math.sin(w * T)) * math.sin(big_phi)
    return pref * (osc + 2 * w * g * big_phi)


def tls_work_exact(params: TlsParams, t: Optional[float] = None) -> float:
    """Work W(t) of the z-pinned Bloch solution (t defaults to the period)."""
    t = params.period if t is None else t
    w, g = params.omega, params.gamma
    wt = params.omega_tilde
    big_omega = params.drive
    s = sin_cos(params.theta)[0]
    pref = params.hbar * w * big_omega**2 * s**2 * params.delta / (2 * (wt**2 + g**2) ** 2)
    decay = math.exp(-g * t)
    body = (
        g * (wt**2 + g**2) * t
        + (wt**2 - g**2)
        - decay * ((wt**2 - g**2) * math.cos(wt * t) + 2 * g * wt * math.sin(wt * t))
    )
    return pref * body


def tls_work_dissipative_limit(params: TlsParams) -> float:
    """Leading-order periodic-steady-state work, equal to hbar L^2 / T."""
    s = sin_cos(params.theta)[0]
    w, g = params.omega, params.gamma
    return 2 * math.pi**2 * params.delta * s**2 * params.hbar * w * g / ((w**2 + g**2) * params.period)


@dataclass(frozen=True)
class BlochState:
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.x**2 + self.y**2 + self.z**2)


def bloch_closed_form(params: TlsParams, t: float) -> tuple[BlochState, float]:
    """z-pinned solution (x, y) with the gamma'-dependent population z, and W(t)."""
    g, gp = params.gamma, params.gamma_long
    wt = params.omega_tilde
    s = sin_cos(params.theta)[0]
    drive = params.drive * s  # Omega sin(theta)
    dlt = params.delta
    den = wt**2 + g**2
    decay = math.exp(-g * t)
    c, sn = math.cos(wt * t), math.sin(wt * t)
    src = dlt * drive / den
    y = src * (g - g * decay * c + wt * decay * sn)
    x = src * (-wt + decay * (wt * c + g * sn))

    if drive == 0.0:
        z = dlt
    else:
        dg = gp - g
        rden = dg**2 + wt**2
        pref = dlt * drive**2 / den
        if gp > 0:
            brace = g / gp + dg * den / (gp * rden) * math.exp(-gp * t)
        else:
            # gamma' -> 0 limit: no population recovery, z drifts with the work
            brace = g * t + (wt**2 - g**2) / den
        brace -= ((g * dg + wt**2) * c - wt * (gp - 2 * g) * sn) / rden * decay
        z = dlt - pref * brace
    return BlochState(x, y, z), tls_work_exact(params, t)


def bloch_rhs(params: TlsParams):
    """Right-hand side of the adiabatic-frame Bloch equations, plus dW/dt."""
    g, gp = params.gamma, params.gamma_long
    wt = params.omega_tilde
    drive = params.drive * sin_cos(params.theta)[0]
    dlt = params.delta
    wpow = 0.5 * params.hbar * params.omega * drive

    def f(t, u):
        x, y, z, _ = u
        return [
            -wt * y - g * x,
            wt * x + drive * z - g * y,
            -drive * y - gp * (z - dlt),
            wpow * y,
        ]

    return f


def bloch_ode(params: TlsParams, t_eval=None, tol: float = 1e-10):
    """Direct Runge-Kutta integration of the Bloch equations from (0, 0, Delta).

    Returns (times, xyz array of shape (3, n), work array).
    """
    T = params.period
    t_eval = np.linspace(0.0, T, 201) if t_eval is None else np.asarray(t_eval, dtype=float)
    scale = max(tls_work_dissipative_limit(params), tls_q(params), 1e-300)
    f = bloch_rhs(params)
    sol = integrate.solve_ivp(
        lambda t, u: np.array(f(t, u)) / np.array([1, 1, 1, scale]),
        (0.0, float(t_eval[-1])),
        [0.0, 0.0, params.delta, 0.0],
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-3,
        t_eval=t_eval,
        max_step=0.05 * 2 * math.pi / params.omega,
    )
    if sol.status != 0:
        raise RuntimeError(sol.message)
    return sol.t, sol.y[:3], sol.y[3] * scale


def bloch_expm(params: TlsParams, t: Optional[float] = None) -> tuple[BlochState, float]:
    """Full Bloch solution (z not pinned) and W(t) by one matrix exponential.

    The adiabatic-frame equations have constant coefficients, so the affine
    system for (x, y, z, W, 1) is propagated exactly.
    """
    t = params.period if t is None else t
    g, gp = params.gamma, params.gamma_long
    wt = params.omega_tilde
    drive = params.drive * sin_cos(params.theta)[0]
    dlt = params.delta
    scale = max(tls_work_dissipative_limit(params), tls_q(params), 1e-300)
    wpow = 0.5 * params.hbar * params.omega * drive / scale
    gen = np.array(
        [
            [-g, -wt, 0.0, 0.0, 0.0],
            [wt, -g, drive, 0.0, 0.0],
            [0.0, -drive, -gp, 0.0, gp * dlt],
            [0.0, wpow, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
        ]
    )
    u = linalg.expm(gen * t) @ np.array([0.0, 0.0, dlt, 0.0, 1.0])
    return BlochState(float(u[0]), float(u[1]), float(u[2])), float(u[3] * scale)


def bloch_chiral_numeric(params: TlsParams, tol: float = 1e-10, method: str = "rk") -> float:
    """cw minus ccw work of the full Bloch equations.

    ``method='rk'`` integrates with DOP853 at ``tol``; ``method='expm'`` uses
    the exact matrix-exponential propagator (``tol`` unused).
    """
    if method == "expm":
        return bloch_expm(params)[1] - bloch_expm(params.reversed())[1]
    if method != "rk":
        raise ValueError(f"unknown method {method!r}")
    fwd = bloch_ode(params, [0.0, params.period], tol)[2][-1]
    bwd = bloch_ode(params.reversed(), [0.0, params.period], tol)[2][-1]
    return float(fwd - bwd)


# ---------------------------------------------------------------------------
# experimental scale estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityReport:
    omega: float  # rad/s
    gamma: float  # rad/s
    period: float  # s
    epsilon: float
    gamma_t: float
    length: float
    berry_phase: float
    unitary_hz: float  # Delta W^(u)/h at this period
    unitary_amplitude_hz: float  # fringe envelope of Delta W^(u)/h
    dissipative_hz: float  # Delta W^(d)/h at this period
    perturbative_hz: float  # finite-gamma expression / h
    ensemble: int
    ensemble_unitary_hz: float
    ensemble_dissipative_hz: float

    @property
    def regime(self) -> str:
        if self.gamma_t <= 0.1:
            return "unitary"
        if self.gamma_t >= 10:
            return "dissipative"
        return "crossover"

    def as_dict(self) -> dict:
        out = asdict(self)
        out["regime"] = self.regime
        return out


def feasibility_estimate(
    omega_hz: float,
    gamma_hz: float,
    theta: float,
    delta: float,
    period: float,
    ensemble: int = 1,
) -> FeasibilityReport:
    """Per-spin and ensemble chiral work signals in Hz for lab parameters.

    Frequencies are ordinary frequencies (Hz); they are converted to angular
    frequencies once here and results are reported as Delta W / h.
    """
    p = TlsParams(
        omega=2 * math.pi * omega_hz,
        theta=theta,
        period=period,
        gamma=2 * math.pi * gamma_hz,
        delta=delta,
    )
    to_hz = 1.0 / (2 * math.pi)  # Delta W / h with hbar = 1 and energies in rad/s
    unitary = tls_chiral_unitary(p) * to_hz
    amp = tls_chiral_unitary_amplitude(p) * to_hz
    diss = tls_chiral_dissipative(p) * to_hz
    return FeasibilityReport(
        omega=p.omega,
        gamma=p.gamma,
        period=period,
        epsilon=p.epsilon,
        gamma_t=p.gamma_t,
        length=tls_length(p),
        berry_phase=p.berry_phase,
        unitary_hz=unitary,
        unitary_amplitude_hz=amp,
        dissipative_hz=diss,
        perturbative_hz=tls_chiral_exact_dape(p) * to_hz,
        ensemble=int(ensemble),
        ensemble_unitary_hz=amp * ensemble,
        ensemble_dissipative_hz=abs(diss) * ensemble,
    )
