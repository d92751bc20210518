"""Exact oracles for the Gaussian model V = x^2/2, W = beta x y"""

import numpy as np


def gaussian_precision(beta: float, n_particles: int) -> np.ndarray:
    """A = I + (beta/(N-1)) (1_{i != j})"""
    N = int(n_particles)
    if N < 2:
        raise ValueError(f"Need N >= 2, got {n_particles}")
    return np.eye(N) + beta / (N - 1) * (np.ones((N, N)) - np.eye(N))


def gaussian_covariance(beta: float, n_particles: int) -> np.ndarray:
    """Covariance of mu^(N) per coordinate: A^{-1}; requires A positive definite"""
    A = gaussian_precision(beta, n_particles)
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise ValueError(f"beta={beta} gives a non-normalisable Gibbs measure at N={n_particles}")
    return np.linalg.solve(A, np.eye(A.shape[0]))


def gaussian_rates(beta: float, n_particles: int) -> dict[str, float]:
    """Relaxation rates of the uniform and zero-sum modes, and the exact spectral gap"""
    N = int(n_particles)
    eigenvalues = np.linalg.eigvalsh(gaussian_precision(beta, N))
    return {
        "uniform": 1.0 + beta,
        "zero_sum": 1.0 - beta / (N - 1),
        "gap": float(eigenvalues[0]),
    }
