"""Shared oracles and data generators for the test suite.

Everything here is deliberately independent of the implementation paths
it checks: the QP oracle enumerates active sets, the assignment oracle
scans distances one by one, and the planted-subspace generator builds
data whose optimum is known by construction.
"""

import itertools

import numpy as np

from isarec.svm import rbf_kernel_matrix


def brute_force_dual_max(X, y, C, gamma):
    """Exact maximum of the soft-margin dual for tiny instances (n <= 6).

    Enumerates every active-set pattern (alpha_i in {0, C, free}), solves
    the equality-constrained stationarity system on the free variables,
    and keeps the best feasible candidate.  The optimum satisfies one of
    the patterns, so the best candidate is the exact solution.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    K = rbf_kernel_matrix(X, X, gamma)
    Q = (y[:, None] * y[None, :]) * K

    def objective(alpha):
        return alpha.sum() - 0.5 * alpha @ Q @ alpha

    best = -np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        alpha = np.zeros(n)
        free = [i for i, p in enumerate(pattern) if p == 2]
        bound = [i for i, p in enumerate(pattern) if p == 1]
        alpha[bound] = C
        if free:
            nf = len(free)
            A = np.zeros((nf + 1, nf + 1))
            A[:nf, :nf] = Q[np.ix_(free, free)]
            A[:nf, nf] = y[free]
            A[nf, :nf] = y[free]
            rhs = np.zeros(nf + 1)
            rhs[:nf] = 1.0 - Q[np.ix_(free, bound)] @ alpha[bound] if bound else 1.0
            rhs[nf] = -float(y[bound] @ alpha[bound]) if bound else 0.0
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            alpha[free] = sol[:nf]
        if np.any(alpha < -1e-9) or np.any(alpha > C + 1e-9):
            continue
        if abs(y @ alpha) > 1e-8:
            continue
        best = max(best, objective(np.clip(alpha, 0.0, C)))
    return best


def dual_objective_of_model(machine):
    """Dual objective value reached by a trained binary machine."""
    coefs = machine.dual_coefs
    alpha_sum = np.abs(coefs).sum()
    if len(coefs) == 0:
        return 0.0
    K = rbf_kernel_matrix(machine.support_vectors, machine.support_vectors, machine.gamma)
    return float(alpha_sum - 0.5 * coefs @ K @ coefs)


def check_kkt_bands(machine, X, y, kkt_tol):
    """Assert the KKT optimality bands on every training point.

    alpha is reconstructed by matching training rows against the stored
    support vectors, so this stays independent of solver internals.
    """
    from isarec.svm import decision_values

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    C = machine.C
    slack = kkt_tol * (1.0 + C)
    f = decision_values(machine, X)
    alpha = np.zeros(len(y))
    for sv, coef in zip(machine.support_vectors, machine.dual_coefs):
        matches = np.flatnonzero(np.all(np.isclose(X, sv, atol=1e-12), axis=1))
        assert len(matches) >= 1, "support vector not found among training points"
        alpha[matches[0]] = abs(coef)
    margins = y * f
    for i in range(len(y)):
        if alpha[i] <= 1e-12:
            assert margins[i] >= 1.0 - slack, f"alpha=0 point {i}: y f = {margins[i]}"
        elif alpha[i] >= C - 1e-9:
            assert margins[i] <= 1.0 + slack, f"alpha=C point {i}: y f = {margins[i]}"
        else:
            assert abs(margins[i] - 1.0) <= slack, f"free point {i}: y f = {margins[i]}"


def planted_subspace_data(seed, n_samples=2000, noise=0.01):
    """Sparse activations of two planted orthogonal 2-D subspaces in R^4.

    Each sample lives (up to noise) in exactly one subspace, with a
    heavy-tailed amplitude and uniform in-subspace direction.  Returns
    (X, A, B) with A, B the planted orthonormal 4x2 bases.
    """
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    A, B = Q[:, :2], Q[:, 2:]
    pick = rng.integers(0, 2, n_samples)
    amp = rng.laplace(0.0, 1.0, n_samples)
    phase = rng.uniform(0.0, 2.0 * np.pi, n_samples)
    dirs = np.stack([np.cos(phase), np.sin(phase)], axis=1)
    coords = amp[:, None] * dirs
    X = np.where(pick[:, None] == 0, coords @ A.T, coords @ B.T)
    return X + rng.normal(0.0, noise, X.shape), A, B


def max_principal_angle_deg(basis_a, basis_b):
    """Largest principal angle between two column-span subspaces, degrees."""
    qa = np.linalg.qr(basis_a)[0]
    qb = np.linalg.qr(basis_b)[0]
    s = np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), -1.0, 1.0)
    return float(np.degrees(np.arccos(s)).max())


def max_principal_angle_sin(basis_a, basis_b):
    """sin of the largest principal angle; accurate for tiny angles where
    the arccos route saturates at ~1e-8 radians."""
    qa = np.linalg.qr(basis_a)[0]
    qb = np.linalg.qr(basis_b)[0]
    residual = qa - qb @ (qb.T @ qa)
    return float(np.linalg.svd(residual, compute_uv=False).max())


def learned_group_bases(layer):
    """Column bases of each pooling group's filter span."""
    g = layer.group_size
    return [layer.W[i * g : (i + 1) * g].T for i in range(layer.n_groups)]
