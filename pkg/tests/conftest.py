import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from dape_sim.geometry import DriveProtocol, SystemSpec
from dape_sim.master_eq import BathSpec
from dape_sim.tls import TlsParams

ACCEPTANCE_LINES = []


def tls_params(eps=0.01, gamma_t=1.0, theta=math.pi / 4, delta=0.1, **kw):
    T = 2 * math.pi / eps
    kw.setdefault("min_gap_ratio", 1.0)
    return TlsParams(omega=1.0, theta=theta, period=T, gamma=gamma_t / T, delta=delta, **kw)


def three_level(eps=0.01, gamma_t=1.0, beta=1.0, seed=1):
    """Random basis, integer-spectrum generator so the loop closes after one period."""
    u = unitary_group.rvs(3, random_state=seed)
    b0 = unitary_group.rvs(3, random_state=seed + 1)
    system = SystemSpec(energies=np.array([0.0, 1.0, 2.7]), basis0=b0)
    T = 2 * math.pi / eps
    gen = (2 * math.pi / T) * u @ np.diag([-1.0, 0.0, 1.0]) @ u.conj().T
    protocol = DriveProtocol(period=T, generator=gen)
    g = gamma_t / T
    bath = BathSpec.detailed_balance(system, beta, coupling=0.5 * g, dephasing=g, min_gap_ratio=1.0)
    return system, bath, protocol


def random_unitary_path(seed=0, dim=3):
    """Smooth closed eigenbasis map R = (s,) -> V(s) = exp(i K(s)) V0 with K periodic in s in [0, 1]."""
    rng = np.random.default_rng(seed)
    v0 = unitary_group.rvs(dim, random_state=seed + 10)
    hs = []
    for _ in range(2):
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        hs.append(0.3 * (a + a.conj().T))

    def k_of(s):
        return hs[0] * np.sin(2 * np.pi * s) + hs[1] * (1 - np.cos(2 * np.pi * s))

    def dk_of(s):
        return 2 * np.pi * (hs[0] * np.cos(2 * np.pi * s) + hs[1] * np.sin(2 * np.pi * s))

    def basis(r):
        vals, vecs = np.linalg.eigh(k_of(float(r[0])))
        return (vecs * np.exp(1j * vals)) @ vecs.conj().T @ v0

    return basis, k_of, dk_of, v0


@pytest.fixture
def tls():
    return tls_params()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
