"""Adiabatic-frame Born-Markov master equation and the work integral.

The density matrix is evolved in the instantaneous eigenbasis,

    d rho/dt = -i [E/hbar - A(t), rho] + D[rho],

where D moves populations with the rates w_mn (detailed balance) and damps
each coherence rho_mn at gamma_mn. Work is accumulated alongside the state as
W(t) = hbar sum_{m != n} omega_mn int Im[A_nm rho_mn] dt, which equals
int Tr[rho dH/dt] dt. This is the brute-force reference for the perturbative
expressions in :mod:`dape_sim.dape`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import (
    DetailedBalanceViolation,
    MissingConnections,
    OpenLoop,
    StiffnessFailure,
    ToleranceUnachievable,
)
from .geometry import DriveProtocol, SystemSpec, basis_at, boltzmann_populations, connection_at, is_closed

log = logging.getLogger(__name__)

TOL_RANGE = (1e-12, 1e-4)


@dataclass(frozen=True, eq=False)
class BathSpec:
    """Thermal bath: inverse temperature, population rates and dephasing.

    ``rates[m, n]`` is w_mn, the rate feeding level m from level n.
    ``dephasing[m, n]`` is gamma_mn (symmetric, off-diagonal entries used).
    """

    beta: float
    rates: np.ndarray
    dephasing: np.ndarray
    min_gap_ratio: float = 1e3
    longitudinal_rate: Optional[float] = None

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        deph = np.array(self.dephasing, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or deph.shape != rates.shape:
            raise ValueError("rates and dephasing must be square matrices of equal shape")
        np.fill_diagonal(rates, 0.0)
        np.fill_diagonal(deph, 0.0)
        if np.any(rates < 0):
            raise ValueError("population rates must be non-negative")
        if np.max(np.abs(deph - deph.T)) > 1e-15 * max(1.0, np.max(deph)):
            raise ValueError("dephasing rates must be symmetric")
        if np.any(deph[~np.eye(deph.shape[0], dtype=bool)] <= 0):
            raise ValueError("dephasing rates must be positive")
        if not (self.beta >= 0):
            raise ValueError("beta must be non-negative")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "dephasing", deph)

    @classmethod
    def detailed_balance(cls, system: SystemSpec, beta: float, coupling, dephasing, **kw) -> "BathSpec":
        """Rates w_mn = 2 k_mn / (1 + exp(beta (E_m - E_n))) for symmetric couplings k."""
        d = system.dimension
        k = np.broadcast_to(np.asarray(coupling, dtype=float), (d, d)).copy()
        if np.max(np.abs(k - k.T)) > 0:
            raise ValueError("coupling matrix must be symmetric")
        de = system.energies[:, None] - system.energies[None, :]
        with np.errstate(over="ignore", invalid="ignore"):
            rates = 2 * k / (1 + np.exp(beta * de))  # diagonal is 0 * inf at beta = inf
        g = np.broadcast_to(np.asarray(dephasing, dtype=float), (d, d)).copy()
        return cls(beta=beta, rates=rates, dephasing=g, **kw)

    def validate(self, system: SystemSpec):
        d = system.dimension
        if self.rates.shape != (d, d):
            raise ValueError("bath dimension does not match the system")
        system.check_gap_ratio(self.dephasing, self.min_gap_ratio)
        e = system.energies
        for m in range(d):
            for n in range(m + 1, d):
                wmn, wnm = self.rates[m, n], self.rates[n, m]
                if wmn == 0 and wnm == 0:
                    continue
                target = wnm * math.exp(-self.beta * (e[m] - e[n])) if np.isfinite(self.beta) else None
                if target is None:
                    ok = (wmn == 0) != (wnm == 0) and (wmn > 0) == (e[m] < e[n])
                else:
                    ok = abs(wmn - target) <= 1e-12 * max(wmn, target)
                if not ok:
                    raise DetailedBalanceViolation(f"rates ({m},{n}) violate detailed balance")


def thermal_state(system: SystemSpec, beta: float) -> np.ndarray:
    """Instantaneous thermal state; diagonal in the eigenbasis."""
    return np.diag(boltzmann_populations(system.energies, beta)).astype(complex)


def complex_rate(system: SystemSpec, bath: BathSpec, connection: np.ndarray) -> np.ndarray:
    """z_mn = i[omega_mn - A_mm + A_nn] + gamma_mn (diagonal left at zero)."""
    diag = connection.diagonal().real
    z = 1j * (system.omega - diag[:, None] + diag[None, :]) + bath.dephasing
    np.fill_diagonal(z, 0.0)
    return z


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: np.ndarray
    states: np.ndarray  # (n_t, d, d) in the instantaneous basis
    work: np.ndarray  # W(t_k) from the integrator
    connections: Optional[np.ndarray]  # (n_t, d, d)
    tol: float
    orientation: str
    min_eigenvalue: float
    n_rhs: int = 0

    @property
    def final_work(self) -> float:
        return float(self.work[-1])

    def trace_error(self) -> float:
        tr = np.einsum("kii->k", self.states)
        return float(np.max(np.abs(tr - 1.0)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.states - np.conj(np.swapaxes(self.states, 1, 2)))))

    def reporting_states(self) -> np.ndarray:
        """States with eigenvalues in [-1e-8, 0) clipped to zero (reporting only)."""
        out = np.empty_like(self.states)
        for k, rho in enumerate(self.states):
            h = 0.5 * (rho + rho.conj().T)
            vals, vecs = np.linalg.eigh(h)
            vals = np.where((vals < 0) & (vals >= -1e-8), 0.0, vals)
            out[k] = (vecs * vals) @ vecs.conj().T
        return out


def _dissipator(rates, dephasing):
    """Linear map on rho for the population transfer and dephasing terms."""
    out_rate = rates.sum(axis=0)  # sum_m w_mn, leaving level n

    def apply(rho):
        d_rho = -dephasing * rho
        p = rho.diagonal()
        d_pop = rates @ p - out_rate * p
        d_rho[np.diag_indices_from(d_rho)] = d_pop
        return d_rho

    return apply


def _points_per_period(tol: float) -> int:
    # composite Simpson error on e^{i omega t} scales as (omega h)^4 / 180
    n = 2 * np.pi / (180.0 * tol) ** 0.25
    return int(min(max(8, math.ceil(n)), 4096))


def evolve(
    system: SystemSpec,
    bath: BathSpec,
    protocol: DriveProtocol,
    tol: float = 1e-8,
    points_per_period: Optional[int] = None,
    cache_connections: bool = True,
    rho0: Optional[np.ndarray] = None,
) -> Trajectory:
    """Integrate the master equation over one period.

    The initial state is the thermal state of the bath unless ``rho0`` (given
    in the instantaneous eigenbasis at t = 0) is supplied.

    Uses the DOP853 embedded Runge-Kutta pair with step cap 0.05 * 2 pi / max|omega|;
    the work integral is carried as an extra state component so it shares the
    integrator's error control.
    """
    if not (TOL_RANGE[0] <= tol <= TOL_RANGE[1]):
        raise ToleranceUnachievable(f"tol={tol:g} outside {TOL_RANGE}")
    bath.validate(system)
    d = system.dimension
    T = protocol.period
    hbar = system.hbar
    e_over_hbar = np.diag(system.energies / hbar).astype(complex)
    omega = system.omega
    dissipate = _dissipator(bath.rates, bath.dephasing)
    wmax = system.max_spacing

    eps = protocol.epsilon(system)
    # order-of-magnitude work scale keeps the work component near unity
    w_scale = hbar * wmax * eps**2 * (1.0 + float(np.max(bath.dephasing)) * T) + 1e-300

    if protocol.is_generator:
        a_const = connection_at(system, protocol, 0.0).matrix
        a_const = 0.5 * (a_const + a_const.conj().T)
        conn = lambda t: a_const
    else:

        def conn(t):
            a = connection_at(system, protocol, min(max(t, 0.0), T)).matrix
            return 0.5 * (a + a.conj().T)

    counter = [0]

    def rhs(t, y):
        counter[0] += 1
        rho = y[:-1].reshape(d, d)
        a = conn(t)
        heff = e_over_hbar - a
        drho = -1j * (heff @ rho - rho @ heff) + dissipate(rho)
        power = hbar * np.sum(omega * np.imag(a.T * rho))
        out = np.empty_like(y)
        out[:-1] = drho.ravel()
        out[-1] = power / w_scale
        return out

    if rho0 is None:
        rho0 = thermal_state(system, bath.beta)
    else:
        rho0 = np.array(rho0, dtype=complex)
        if rho0.shape != (d, d):
            raise ValueError("rho0 shape does not match the system")
    y0 = np.concatenate([rho0.ravel(), [0.0]]).astype(complex)
    max_step = 0.05 * 2 * np.pi / wmax
    sol = integrate.solve_ivp(
        rhs,
        (0.0, T),
        y0,
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-3,
        max_step=max_step,
        dense_output=True,
    )
    if sol.status != 0:
        if "step size" in sol.message.lower():
            raise StiffnessFailure(sol.message)
        raise ToleranceUnachievable(sol.message)
    steps = np.diff(sol.t)
    if steps.size and np.min(steps[:-1] if steps.size > 1 else steps) < 1e-15 * T:
        raise StiffnessFailure("step size collapsed below 1e-15 T")

    n_per = points_per_period or _points_per_period(tol)
    n = int(math.ceil(T * wmax / (2 * np.pi) * n_per))
    n = max(n, 16)
    if n % 2 == 1:
        n += 1  # n intervals even -> n + 1 points for Simpson
    grid = np.linspace(0.0, T, n + 1)
    ys = sol.sol(grid)
    states = ys[:-1].T.reshape(-1, d, d)
    states[0] = rho0
    work = np.real(ys[-1]) * w_scale
    work[0] = 0.0
    work[-1] = np.real(sol.y[-1, -1]) * w_scale

    conns = None
    if cache_connections:
        if protocol.is_generator:
            conns = np.broadcast_to(a_const, (grid.size, d, d)).copy()
        else:
            conns = np.array([conn(t) for t in grid])

    min_eig = float(min(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() for r in states[:: max(1, len(states) // 400)]))
    if min_eig < -1e-8:
        log.warning("density matrix eigenvalue %.3e below -1e-8 (adiabatic-frame positivity)", min_eig)
    elif min_eig < 0:
        log.debug("small negative eigenvalue %.3e tolerated", min_eig)

    return Trajectory(
        grid=grid,
        states=states,
        work=work,
        connections=conns,
        tol=tol,
        orientation=protocol.orientation,
        min_eigenvalue=min_eig,
        n_rhs=counter[0],
    )


def work_accumulate(trajectory: Trajectory, system: SystemSpec) -> np.ndarray:
    """Recompute W(t) on the trajectory grid by composite Simpson quadrature."""
    if trajectory.connections is None:
        raise MissingConnections("trajectory was evolved without cached connections")
    a = trajectory.connections
    rho = trajectory.states
    power = system.hbar * np.einsum("mn,kmn->k", system.omega, np.imag(np.swapaxes(a, 1, 2) * rho))
    return integrate.cumulative_simpson(power, x=trajectory.grid, initial=0.0)


def lab_frame_density(system: SystemSpec, protocol: DriveProtocol, trajectory: Trajectory, k: int) -> np.ndarray:
    """Density operator at grid index k rotated back to the fixed basis."""
    v = basis_at(system, protocol, trajectory.grid[k])
    return v @ trajectory.states[k] @ v.conj().T


def chiral_difference_numeric(
    system: SystemSpec, bath: BathSpec, protocol: DriveProtocol, tol: float = 1e-8
) -> float:
    """W(T) for the given orientation minus W(T) for the reversed loop."""
    if not is_closed(system, protocol):
        raise OpenLoop("chiral work difference needs a closed protocol")
    fwd = evolve(system, bath, protocol, tol, cache_connections=False)
    bwd = evolve(system, bath, protocol.reversed(), tol, cache_connections=False)
    return fwd.final_work - bwd.final_work
