"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the production code paths: qubit
precession uses the closed form cos/sin expansion, generic evolution uses
scipy's Pade-based expm, and sequential probabilities are evaluated by direct
projector-string algebra on raw numpy arrays.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest
import scipy.linalg

from lgcert.qcore import (
    DensityOperator,
    DichotomicObservable,
    Hamiltonian,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def u_precession(omega_t: float) -> np.ndarray:
    """Closed-form exp(-i (omega t / 2) sigma_x), independent of eigendecomposition."""
    half = omega_t / 2.0
    return np.cos(half) * I2 - 1j * np.sin(half) * SX


def expm_oracle(h_matrix: np.ndarray, t: float) -> np.ndarray:
    """Generic unitary via scipy's expm (Pade approximation)."""
    return scipy.linalg.expm(-1j * np.asarray(h_matrix) * t)


def proj_z(s: int) -> np.ndarray:
    return (I2 + s * SZ) / 2.0


def oracle_sequential(rho: np.ndarray, omega_times, final_only: bool = False):
    """Sequential-measurement table for qubit precession, by direct branch algebra."""
    out = {}
    for signs in itertools.product((1, -1), repeat=len(omega_times)):
        mat = rho.copy()
        t_prev = 0.0
        for ot, s in zip(omega_times, signs):
            u = u_precession(ot - t_prev)
            mat = u @ mat @ u.conj().T
            mat = proj_z(s) @ mat @ proj_z(s)
            t_prev = ot
        out[signs] = float(np.real(np.trace(mat)))
    return out


def oracle_quasi(rho: np.ndarray, omega_times, signs) -> float:
    """Re Tr(P_{s_n}(t_n) .. P_{s_1}(t_1) rho) by direct left multiplication."""
    mat = rho.copy()
    for ot, s in zip(omega_times, signs):
        u = u_precession(ot)
        p_t = u.conj().T @ proj_z(s) @ u
        mat = p_t @ mat
    return float(np.real(np.trace(mat)))


def random_density_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = a @ a.conj().T
    return m / np.trace(m)


def random_density(rng: np.random.Generator, d: int) -> DensityOperator:
    return DensityOperator(random_density_matrix(rng, d))


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2.0


def random_hamiltonian(rng: np.random.Generator, d: int) -> Hamiltonian:
    return Hamiltonian(random_hermitian(rng, d))


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_dichotomic(rng: np.random.Generator, d: int) -> DichotomicObservable:
    """Random +-1 observable with a balanced-as-possible eigenvalue split."""
    v = random_unitary(rng, d)
    signs = np.array([1 if k < (d + 1) // 2 else -1 for k in range(d)], dtype=float)
    return DichotomicObservable(v @ np.diag(signs) @ v.conj().T)


def random_times(rng: np.random.Generator, m: int) -> tuple[float, ...]:
    gaps = rng.uniform(0.2, 1.5, size=m)
    return tuple(np.cumsum(gaps))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
