"""Fixed-spectrum Hamiltonian families and their adiabatic geometry.

A system is described by its (constant) energies and an instantaneous
eigenbasis, supplied either as a smooth map ``R -> columns`` evaluated along a
parameter path, or as a constant generator ``G`` with ``|n(t)> = exp(iGt)|n(0)>``.
Everything downstream (master equation, perturbative work expressions) only
needs the connection matrix ``A_mn(t) = i<m|d_t n>`` produced here.

Conventions: hbar = 1 unless ``SystemSpec.hbar`` says otherwise; time and
parameter derivatives are taken with gauge-aligned central differences,
Richardson-extrapolated once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DegenerateSpectrum, GaugeDiscontinuity, NonDifferentiablePath, OpenLoop

ORTHONORMAL_TOL = 1e-12
CLOSURE_TOL = 1e-12
# adjacent overlaps below this mean the basis jumped between samples
MIN_OVERLAP = 0.5
# smooth evolution over one stencil step rotates the phase by O(h); anything
# larger is a discontinuity in the supplied gauge
MAX_STENCIL_PHASE = np.pi / 4


def boltzmann_populations(energies, beta):
    """Thermal populations exp(-beta E_n)/Z; ``beta=np.inf`` gives the ground state."""
    energies = np.asarray(energies, dtype=float)
    if np.isinf(beta):
        pops = np.zeros_like(energies)
        pops[np.argmin(energies)] = 1.0
        return pops
    if beta < 0:
        raise ValueError("beta must be non-negative")
    x = -beta * (energies - energies.min())
    w = np.exp(x)
    return w / w.sum()


def dissipative_angle(omega, gamma):
    """Phase lag atan2(2 omega gamma, omega^2 - gamma^2) of a driven coherence.

    Continuous across omega = gamma; odd in omega; tends to 0 as gamma -> 0 and
    to +-pi as gamma -> inf.
    """
    omega = np.asarray(omega, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    return np.arctan2(2.0 * omega * gamma, omega**2 - gamma**2)


def dissipative_sin_cos(omega, gamma):
    """(sin phi, cos phi) of the dissipative angle as rational functions of omega, gamma.

    sin(arctan2(...)) loses relative accuracy as phi approaches pi; the
    rational forms 2 omega gamma / (omega^2 + gamma^2) and
    (omega^2 - gamma^2) / (omega^2 + gamma^2) do not. Entries with
    omega = gamma = 0 give (0, 1).
    """
    omega = np.asarray(omega, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    den = omega**2 + gamma**2
    safe = np.where(den > 0, den, 1.0)
    sin = np.where(den > 0, 2.0 * omega * gamma / safe, 0.0)
    cos = np.where(den > 0, (omega**2 - gamma**2) / safe, 1.0)
    return sin, cos


def _check_orthonormal(vecs, what="eigenbasis"):
    d = vecs.shape[1]
    err = np.max(np.abs(vecs.conj().T @ vecs - np.eye(d)))
    if err > ORTHONORMAL_TOL * 10:
        raise ValueError(f"{what} not orthonormal (max deviation {err:.2e})")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Constant, non-degenerate spectrum plus an instantaneous eigenbasis.

    ``eigenbasis`` maps a parameter vector to a (d, d) array whose columns are
    the eigenvectors in the order of ``energies``. It must be a smooth gauge
    along the path; diagonal connections are read in that gauge. For generator
    drives pass ``basis0`` (columns at t = 0) instead.
    """

    energies: np.ndarray
    eigenbasis: Optional[Callable[[np.ndarray], np.ndarray]] = None
    basis0: Optional[np.ndarray] = None
    hbar: float = 1.0

    def __post_init__(self):
        energies = np.atleast_1d(np.asarray(self.energies, dtype=float))
        object.__setattr__(self, "energies", energies)
        if energies.ndim != 1 or energies.size < 2:
            raise ValueError("need at least two energy levels")
        if self.eigenbasis is None and self.basis0 is None:
            raise ValueError("supply either an eigenbasis map or basis0")
        gaps = np.abs(energies[:, None] - energies[None, :])[~np.eye(energies.size, dtype=bool)]
        scale = max(np.max(np.abs(energies)), 1.0)
        if np.min(gaps) <= 1e-12 * scale:
            raise DegenerateSpectrum("energies must be non-degenerate")
        if self.basis0 is not None:
            b0 = np.asarray(self.basis0, dtype=complex)
            if b0.shape != (energies.size, energies.size):
                raise ValueError("basis0 must be a square matrix matching the number of levels")
            _check_orthonormal(b0, "basis0")
            object.__setattr__(self, "basis0", b0)

    @property
    def dimension(self) -> int:
        return self.energies.size

    @property
    def omega(self) -> np.ndarray:
        """Level spacings omega_mn = (E_m - E_n)/hbar."""
        e = self.energies / self.hbar
        return e[:, None] - e[None, :]

    @property
    def min_spacing(self) -> float:
        w = np.abs(self.omega)
        return float(np.min(w[~np.eye(self.dimension, dtype=bool)]))

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.abs(self.omega)))

    def check_gap_ratio(self, dephasing, min_ratio):
        """Raise DegenerateSpectrum unless every |omega_mn| >= min_ratio * max(gamma)."""
        gmax = float(np.max(dephasing))
        if gmax > 0 and self.min_spacing < min_ratio * gmax:
            raise DegenerateSpectrum(
                f"level spacing {self.min_spacing:.3g} below {min_ratio:g} x max dephasing {gmax:.3g}"
            )


@dataclass(frozen=True, eq=False)
class DriveProtocol:
    """Closed (or open) traversal of the control manifold over one period.

    Either ``path`` (t -> R) for systems with an eigenbasis map, or a constant
    Hermitian ``generator``. ``orientation='ccw'`` denotes the reversed
    traversal R(T - t) (generator -G); ``reversed()`` toggles it. ``path`` may
    be called slightly outside [0, T] by the finite-difference stencils.
    """

    period: float
    path: Optional[Callable[[float], np.ndarray]] = None
    generator: Optional[np.ndarray] = None
    velocity: Optional[Callable[[float], np.ndarray]] = None
    orientation: str = "cw"
    _gen_eig: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.orientation not in ("cw", "ccw"):
            raise ValueError("orientation must be 'cw' or 'ccw'")
        if (self.path is None) == (self.generator is None):
            raise ValueError("specify exactly one of path or generator")
        if self.generator is not None:
            g = np.asarray(self.generator, dtype=complex)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ValueError("generator must be a square matrix")
            if np.max(np.abs(g - g.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(g))):
                raise ValueError("generator must be Hermitian")
            object.__setattr__(self, "generator", g)
            object.__setattr__(self, "_gen_eig", np.linalg.eigh(g))

    @property
    def sign(self) -> int:
        return 1 if self.orientation == "cw" else -1

    @property
    def is_generator(self) -> bool:
        return self.generator is not None

    def reversed(self) -> "DriveProtocol":
        return DriveProtocol(
            period=self.period,
            path=self.path,
            generator=self.generator,
            velocity=self.velocity,
            orientation="ccw" if self.orientation == "cw" else "cw",
        )

    def parameters(self, t: float) -> np.ndarray:
        if self.path is None:
            return np.atleast_1d(np.asarray(self.sign * t, dtype=float))
        s = t if self.orientation == "cw" else self.period - t
        return np.atleast_1d(np.asarray(self.path(s), dtype=float))

    def parameter_velocity(self, t: float) -> np.ndarray:
        """dR/dt; generator drives use the elapsed phase R = +-t as coordinate."""
        if self.path is None:
            return np.atleast_1d(float(self.sign))
        if self.velocity is not None:
            s = t if self.orientation == "cw" else self.period - t
            return self.sign * np.atleast_1d(np.asarray(self.velocity(s), dtype=float))
        h = max(1e-5 * self.period, 1e-9)
        d1 = (self.parameters(t + h) - self.parameters(t - h)) / (2 * h)
        d2 = (self.parameters(t + h / 2) - self.parameters(t - h / 2)) / h
        return (4 * d2 - d1) / 3

    def propagator(self, t: float) -> np.ndarray:
        """exp(i sign G t) for generator drives."""
        vals, vecs = self._gen_eig
        return (vecs * np.exp(1j * self.sign * vals * t)) @ vecs.conj().T

    def epsilon(self, system: SystemSpec) -> float:
        """Adiabaticity parameter 2 pi / (omega_min T)."""
        return 2 * np.pi / (system.min_spacing * self.period)


@dataclass(frozen=True)
class ConnectionSample:
    time: float
    matrix: np.ndarray
    rate: Optional[np.ndarray] = None

    @property
    def diagonal(self) -> np.ndarray:
        # gauge dependent; only loop differences are physical
        return self.matrix.diagonal().real.copy()

    @property
    def phase_rate(self) -> Optional[np.ndarray]:
        """d/dt arg A_mn for m != n (zero where A_mn vanishes)."""
        if self.rate is None:
            return None
        a = self.matrix
        mag2 = np.abs(a) ** 2
        out = np.zeros(a.shape)
        ok = mag2 > 1e-300
        out[ok] = np.imag(a.conj()[ok] * self.rate[ok]) / mag2[ok]
        np.fill_diagonal(out, 0.0)
        return out


@dataclass(frozen=True)
class GeometryReport:
    berry_phase_diffs: np.ndarray  # Phi_mn, antisymmetric
    times: np.ndarray
    pair_metrics: np.ndarray  # (n_t, n_pairs, p, p) for pairs m < n
    metric: np.ndarray  # (n_t, p, p) thermodynamic metric
    speed: np.ndarray  # (n_t,)
    length: float
    pairs: tuple = ()
    weights: np.ndarray = None  # per-pair weight -Delta_mn sin(phi_mn)


def basis_at(system: SystemSpec, protocol: DriveProtocol, t: float) -> np.ndarray:
    """Instantaneous eigenvector columns |n(t)>."""
    if protocol.is_generator:
        if system.basis0 is None:
            return protocol.propagator(t) @ np.asarray(system.eigenbasis(protocol.parameters(0.0)), complex)
        return protocol.propagator(t) @ system.basis0
    return np.asarray(system.eigenbasis(protocol.parameters(t)), dtype=complex)


def _difference_step(period: float) -> float:
    return max(1e-6 * period, 1e-9)


def _aligned(ref, vecs):
    """Rotate each column of ``vecs`` so its overlap with ``ref`` is real positive."""
    ov = np.einsum("ij,ij->j", ref.conj(), vecs)
    mag = np.abs(ov)
    if np.any(mag < MIN_OVERLAP):
        raise NonDifferentiablePath(
            f"eigenbasis overlap {mag.min():.3f} between stencil points; path too coarse"
        )
    return vecs * (ov.conj() / mag), ov


def _stencil_derivative(func, x, h, ref):
    """Richardson-extrapolated central difference of a basis-valued function.

    Returns (aligned derivative, raw derivative). The aligned version removes
    per-column phase jumps and is exact for off-diagonal overlaps; the raw one
    keeps the supplied gauge for diagonal connections.
    """
    raw = {}
    aligned = {}
    for k in (h, h / 2):
        plus, ov_p = _aligned(ref, func(x + k))
        minus, ov_m = _aligned(ref, func(x - k))
        aligned[k] = (plus - minus) / (2 * k)
        raw_p = plus * (ov_p / np.abs(ov_p))
        raw_m = minus * (ov_m / np.abs(ov_m))
        if np.any(np.abs(np.angle(ov_p)) > MAX_STENCIL_PHASE) or np.any(
            np.abs(np.angle(ov_m)) > MAX_STENCIL_PHASE
        ):
            raw[k] = None
        else:
            raw[k] = (raw_p - raw_m) / (2 * k)
    d_al = (4 * aligned[h / 2] - aligned[h]) / 3
    d_raw = None
    if raw[h] is not None and raw[h / 2] is not None:
        d_raw = (4 * raw[h / 2] - raw[h]) / 3
    return d_al, d_raw


def _connection_matrix(system, protocol, t):
    if protocol.is_generator:
        b0 = basis_at(system, protocol, 0.0)
        return -protocol.sign * (b0.conj().T @ protocol.generator @ b0)
    v = basis_at(system, protocol, t)
    h = _difference_step(protocol.period)
    d_al, d_raw = _stencil_derivative(lambda s: basis_at(system, protocol, s), t, h, v)
    if d_raw is None:
        raise GaugeDiscontinuity(f"supplied eigenbasis changes phase discontinuously near t={t:.6g}")
    a = 1j * (v.conj().T @ d_al)
    np.fill_diagonal(a, 1j * np.einsum("ij,ij->j", v.conj(), d_raw))
    return a


def connection_at(system: SystemSpec, protocol: DriveProtocol, t: float, with_rate: bool = False) -> ConnectionSample:
    """Berry connection A_mn(t) = i<m(t)|d_t n(t)>.

    With ``with_rate`` the time derivative dA/dt is attached (needed for the
    phase rate d/dt arg A_mn). Generator drives give a constant matrix.
    """
    if not (-1e-12 * protocol.period <= t <= protocol.period * (1 + 1e-12)):
        raise ValueError(f"t={t} outside [0, T]")
    a = _connection_matrix(system, protocol, t)
    rate = None
    if with_rate:
        if protocol.is_generator:
            rate = np.zeros_like(a)
        else:
            h = 1e-3 * protocol.period
            f = lambda s: _connection_matrix(system, protocol, s)
            d1 = (f(t + h) - f(t - h)) / (2 * h)
            d2 = (f(t + h / 2) - f(t - h / 2)) / h
            rate = (4 * d2 - d1) / 3
    return ConnectionSample(time=float(t), matrix=a, rate=rate)


def is_closed(system: SystemSpec, protocol: DriveProtocol) -> bool:
    """True if every eigenprojector returns to itself after one period."""
    if protocol.path is not None:
        r0 = protocol.path(0.0)
        r1 = protocol.path(protocol.period)
        if np.linalg.norm(np.asarray(r1) - np.asarray(r0)) <= CLOSURE_TOL * max(1.0, np.linalg.norm(r0)):
            return True
    v0 = basis_at(system, protocol, 0.0)
    v1 = basis_at(system, protocol, protocol.period)
    ov = np.abs(np.einsum("ij,ij->j", v0.conj(), v1))
    return bool(np.all(np.abs(ov - 1.0) <= CLOSURE_TOL * 10))


def closure_phases(system: SystemSpec, protocol: DriveProtocol) -> np.ndarray:
    """arg <n(0)|n(T)>; zero for a single-valued gauge on a closed loop."""
    v0 = basis_at(system, protocol, 0.0)
    v1 = basis_at(system, protocol, protocol.period)
    return np.angle(np.einsum("ij,ij->j", v0.conj(), v1))


def _check_chain(system, protocol, samples):
    ts = np.linspace(0.0, protocol.period, samples + 1)
    prev = basis_at(system, protocol, ts[0])
    for t in ts[1:]:
        cur = basis_at(system, protocol, t)
        ov = np.abs(np.einsum("ij,ij->j", prev.conj(), cur))
        if np.any(ov < MIN_OVERLAP):
            raise GaugeDiscontinuity(f"adjacent eigenvector overlap {ov.min():.3f} near t={t:.6g}")
        prev = cur


def diagonal_loop_integrals(
    system: SystemSpec, protocol: DriveProtocol, epsabs: float = 1e-10, closure: bool = True
) -> np.ndarray:
    """Integral of A_nn over one period in the supplied gauge, closure-corrected.

    The default absolute tolerance sits at the finite-difference noise floor
    of the connection; asking for less makes the adaptive rule refine forever.
    """
    T = protocol.period
    if protocol.is_generator:
        integrals = connection_at(system, protocol, 0.0).diagonal * T
    else:
        integrals, _ = integrate.quad_vec(
            lambda t: connection_at(system, protocol, t).diagonal, 0.0, T, epsabs=epsabs, epsrel=1e-10, limit=200
        )
    if not closure:
        return integrals
    # non-periodic gauge: |n(T)> = e^{i alpha}|n(0)> adds alpha to the loop phase
    return integrals + closure_phases(system, protocol)


def loop_phase_differences(system: SystemSpec, protocol: DriveProtocol) -> np.ndarray:
    """Matrix Phi_mn = int (A_mm - A_nn) dt + (alpha_m - alpha_n).

    The closure difference is wrapped into (-pi, pi] so that a common phase
    such as exp(i pi) on every column (arg = +-pi numerically) cancels.
    """
    raw = diagonal_loop_integrals(system, protocol, closure=False)
    alpha = closure_phases(system, protocol)
    d_alpha = alpha[:, None] - alpha[None, :]
    d_alpha = -np.angle(np.exp(-1j * d_alpha))  # wrap to (-pi, pi]
    return raw[:, None] - raw[None, :] + d_alpha


def berry_phase_difference(
    system: SystemSpec,
    protocol: DriveProtocol,
    m: int,
    n: int,
    method: str = "quad",
    samples: int = 10_000,
) -> float:
    """Loop Berry phase difference Phi_mn = int_0^T (A_mm - A_nn) dt.

    ``method='quad'`` integrates the differentiated connection adaptively;
    ``method='loop'`` uses the discrete overlap product over ``samples``
    points (Richardson-combined with 2*samples), independent of any
    derivative.
    """
    if m == n:
        raise ValueError("m and n must differ")
    if not is_closed(system, protocol):
        raise OpenLoop("Berry phase difference needs a closed protocol")
    if not protocol.is_generator:
        _check_chain(system, protocol, min(samples, 2000))
    if method == "quad":
        return float(loop_phase_differences(system, protocol)[m, n])
    if method == "loop":
        p1 = _discrete_loop_phases(system, protocol, samples)
        p2 = _discrete_loop_phases(system, protocol, 2 * samples)
        p = (4 * p2 - p1) / 3
        return float(p[m] - p[n])
    raise ValueError(f"unknown method {method!r}")


def _discrete_loop_phases(system, protocol, samples):
    ts = np.linspace(0.0, protocol.period, samples + 1)
    acc = np.zeros(system.dimension)
    prev = basis_at(system, protocol, ts[0])
    for t in ts[1:]:
        cur = basis_at(system, protocol, t)
        ov = np.einsum("ij,ij->j", prev.conj(), cur)
        if np.any(np.abs(ov) < MIN_OVERLAP):
            raise GaugeDiscontinuity(f"adjacent eigenvector overlap below {MIN_OVERLAP} near t={t:.6g}")
        acc -= np.angle(ov)
        prev = cur
    return acc + closure_phases(system, protocol)


def pair_weights(system: SystemSpec, populations, dephasing) -> np.ndarray:
    """Symmetric weights -Delta_mn sin(phi_mn), non-negative for thermal states."""
    pops = np.asarray(populations, dtype=float)
    delta = pops[:, None] - pops[None, :]
    sin_phi, _ = dissipative_sin_cos(system.omega, np.asarray(dephasing, dtype=float))
    w = -delta * sin_phi
    np.fill_diagonal(w, 0.0)
    return w


def _parameter_overlaps(system, protocol, t):
    """<m|d_i n> for each control parameter i, shape (p, d, d)."""
    if protocol.is_generator:
        a = connection_at(system, protocol, t).matrix
        return (-1j * a * protocol.sign)[None, ...]
    r = protocol.parameters(t)
    v = np.asarray(system.eigenbasis(r), dtype=complex)
    out = []
    for i in range(r.size):
        h = 1e-6 * max(1.0, abs(r[i]))
        e = np.zeros_like(r)
        e[i] = 1.0
        d_al, _ = _stencil_derivative(lambda x: np.asarray(system.eigenbasis(r + x * e), complex), 0.0, h, v)
        out.append(v.conj().T @ d_al)
    return np.array(out)


def thermodynamic_speed(system: SystemSpec, protocol: DriveProtocol, weights: np.ndarray, t: float) -> float:
    """ds/dt = sqrt(sum_{m<n} w_mn |A_mn(t)|^2)."""
    a = connection_at(system, protocol, t).matrix
    iu = np.triu_indices(system.dimension, 1)
    return float(np.sqrt(max(np.sum(weights[iu] * np.abs(a[iu]) ** 2), 0.0)))


def metric_and_length(system: SystemSpec, protocol: DriveProtocol, bath, samples: int = 64) -> GeometryReport:
    """Thermodynamic metric samples, speed and loop length for a bath.

    ``bath`` needs ``beta`` and a ``dephasing`` matrix (see master_eq.BathSpec).
    Pair metrics are g^{mn}_ij = Re[<m|d_i n> conj(<m|d_j n>)]; the
    thermodynamic metric weights them by -Delta_mn sin(phi_mn).
    """
    if not is_closed(system, protocol):
        raise OpenLoop("thermodynamic length needs a closed protocol")
    dephasing = np.asarray(bath.dephasing, dtype=float)
    if np.any(dephasing[~np.eye(system.dimension, dtype=bool)] <= 0):
        raise ValueError("dephasing rates must be positive")
    system.check_gap_ratio(dephasing, getattr(bath, "min_gap_ratio", 0.0))
    pops = boltzmann_populations(system.energies, bath.beta)
    weights = pair_weights(system, pops, dephasing)
    T = protocol.period
    d = system.dimension
    iu = np.triu_indices(d, 1)
    pairs = tuple(zip(iu[0].tolist(), iu[1].tolist()))

    times = np.linspace(0.0, T, samples, endpoint=False)
    pm, metric, speed = [], [], []
    for t in times:
        ov = _parameter_overlaps(system, protocol, t)
        # (p, d, d) -> per pair (p, p)
        x = ov[:, iu[0], iu[1]]  # (p, n_pairs)
        g = np.real(x[:, None, :] * x.conj()[None, :, :])  # (p, p, n_pairs)
        g = np.moveaxis(g, -1, 0)
        pm.append(g)
        metric.append(np.einsum("k,kij->ij", weights[iu], g))
        speed.append(thermodynamic_speed(system, protocol, weights, t))

    if protocol.is_generator:
        length = speed[0] * T
    else:
        length, _ = integrate.quad(
            lambda t: thermodynamic_speed(system, protocol, weights, t), 0.0, T, epsabs=1e-13, epsrel=1e-9, limit=400
        )
    phi = loop_phase_differences(system, protocol)
    return GeometryReport(
        berry_phase_diffs=phi,
        times=times,
        pair_metrics=np.array(pm),
        metric=np.array(metric),
        speed=np.array(speed),
        length=float(length),
        pairs=pairs,
        weights=weights,
    )
