import numpy as np
import pytest

from ssmdistill.linsys import DenseSSM, ModalSSM

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def random_stable_dense(rng, d, rho=None):
    """Dense SSM with spectral radius ``rho`` (random in [0.3, 0.99] if None)."""
    A = rng.standard_normal((d, d))
    rad = np.max(np.abs(np.linalg.eigvals(A)))
    target = rng.uniform(0.3, 0.99) if rho is None else rho
    A *= target / rad
    return DenseSSM(A, rng.standard_normal(d), rng.standard_normal(d), rng.standard_normal())


def random_modal(rng, pairs, rmin=0.5, rmax=0.95, h0=None):
    """Conjugate-closed modal system with ``pairs`` complex pairs."""
    r = rng.uniform(rmin, rmax, pairs)
    theta = rng.uniform(0.1, np.pi - 0.1, pairs)
    lam = r * np.exp(1j * theta)
    R = rng.standard_normal(pairs) + 1j * rng.standard_normal(pairs)
    poles = np.concatenate([lam, lam.conj()])
    res = np.concatenate([R, R.conj()]) / 2
    h0 = rng.standard_normal() if h0 is None else h0
    return ModalSSM(poles, res, h0, conjugate_closed=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
