"""RBF-kernel SVMs: SMO binary solver, one-vs-one multiclass, grid search.

The binary solver is sequential minimal optimization on the soft-margin
dual with a precomputed kernel matrix.  Each step picks the maximal
violating pair: the first index is the example violating the KKT
conditions the most, the second maximizes the error gap |E_i - E_j|.
Optimization stops when no pair violates the KKT conditions beyond
``kkt_tol``.  The bias is the average of y_i - f0(x_i) over free support
vectors (0 < alpha < C), or the midpoint of the feasible bias interval
when none are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

_QUAD_FLOOR = 1e-12  # guards the two-variable curvature denominator
_MAX_SMO_STEPS = 500_000


def _sq_dist_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(A**2, axis=1)[:, None]
        - 2.0 * A @ B.T
        + np.sum(B**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2); lies in (0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def rbf_kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * _sq_dist_matrix(A, B))


@dataclass
class BinarySvm:
    support_vectors: np.ndarray  # (s, d)
    dual_coefs: np.ndarray       # (s,), alpha_i * y_i
    bias: float
    gamma: float
    C: float


@dataclass
class SvmModel:
    """One binary machine per unordered class pair, combined by voting."""

    classes: list[str]
    machines: dict[tuple[str, str], BinarySvm]
    C: float
    gamma: float

    def __post_init__(self):
        expected = len(self.classes) * (len(self.classes) - 1) // 2
        if len(self.machines) != expected:
            raise ValueError(
                f"expected {expected} pairwise machines for {len(self.classes)} classes, "
                f"got {len(self.machines)}"
            )


@dataclass
class GridSearchResult:
    best_C: float
    best_gamma: float
    cv_accuracy: float
    grid: list[tuple[float, float, float]]
    folds_used: int
    folds_reduced: bool = field(default=False)


def train_binary_svm(
    X: np.ndarray, y: np.ndarray, C: float, gamma: float, kkt_tol: float = 1e-3
) -> BinarySvm:
    """Solve the soft-margin dual by SMO; y entries must be +1/-1."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with matching label vector")
    if not (np.all(np.abs(y) == 1.0)):
        raise ValueError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")
    if C <= 0:
        raise ValueError("C must be positive")

    n = X.shape[0]
    K = rbf_kernel_matrix(X, X, gamma)
    alpha = np.zeros(n)
    # Gradient of the minimization form 0.5 a'Qa - e'a with Q = yy' * K;
    # v = -y*G equals y_i - f0(x_i), the bias-free KKT score.
    G = -np.ones(n)

    pos = y > 0
    for _ in range(_MAX_SMO_STEPS):
        v = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        v_up = np.where(up, v, -np.inf)
        v_low = np.where(low, v, np.inf)
        i = int(np.argmax(v_up))
        j = int(np.argmin(v_low))
        m_val, M_val = v_up[i], v_low[j]
        if m_val - M_val <= kkt_tol:
            break

        quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], _QUAD_FLOOR)
        if y[i] != y[j]:
            L = max(0.0, alpha[j] - alpha[i])
            H = min(C, C + alpha[j] - alpha[i])
        else:
            L = max(0.0, alpha[i] + alpha[j] - C)
            H = min(C, alpha[i] + alpha[j])
        a_j = float(np.clip(alpha[j] + y[j] * (v[j] - v[i]) / quad, L, H))
        a_i = float(np.clip(alpha[i] - y[i] * y[j] * (a_j - alpha[j]), 0.0, C))
        # Snap to the box corners so rounding residue one ulp away from a
        # bound cannot keep an effectively-bound variable in the working
        # sets (which would stall the pair selection permanently).
        snap = 1e-10 * max(1.0, C)
        a_j = 0.0 if a_j < snap else (C if a_j > C - snap else a_j)
        a_i = 0.0 if a_i < snap else (C if a_i > C - snap else a_i)
        d_i, d_j = a_i - alpha[i], a_j - alpha[j]
        if d_i == 0.0 and d_j == 0.0:
            raise RuntimeError(
                f"SMO stalled on pair ({i}, {j}) with KKT gap {m_val - M_val:.3e}"
            )
        G += (d_i * y[i]) * (y * K[:, i]) + (d_j * y[j]) * (y * K[:, j])
        alpha[i], alpha[j] = a_i, a_j
    else:
        raise RuntimeError("SMO failed to converge within the step limit")

    v = -y * G  # y_i - f0(x_i) at the final iterate
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(v[free].mean())
    else:
        bias = float((m_val + M_val) / 2.0)

    sv = alpha > 0
    return BinarySvm(
        support_vectors=X[sv].copy(),
        dual_coefs=(alpha * y)[sv].copy(),
        bias=bias,
        gamma=float(gamma),
        C=float(C),
    )


def decision_values(machine: BinarySvm, X: np.ndarray) -> np.ndarray:
    """Decision values for rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = machine.support_vectors.shape[1] if machine.support_vectors.size else X.shape[1]
    if X.shape[1] != d:
        raise ValueError(f"feature dimension {X.shape[1]} != model dimension {d}")
    if machine.support_vectors.size == 0:
        return np.full(X.shape[0], machine.bias)
    k = rbf_kernel_matrix(X, machine.support_vectors, machine.gamma)
    return k @ machine.dual_coefs + machine.bias


def predict_binary(machine: BinarySvm, x: np.ndarray) -> float:
    """sum_i dual_coef_i K(sv_i, x) + bias."""
    return float(decision_values(machine, np.asarray(x, dtype=np.float64)[None, :])[0])


def train_multiclass(
    X: np.ndarray, labels, C: float, gamma: float, kkt_tol: float = 1e-3
) -> SvmModel:
    """One binary machine per class pair; class order is lexicographic.

    For the pair (a, b) with a < b, class a maps to +1 and b to -1, so a
    non-negative decision value votes for the lexicographically smaller
    class.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = list(labels)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    label_arr = np.array(labels)
    machines = {}
    for a, b in combinations(classes, 2):
        mask = (label_arr == a) | (label_arr == b)
        y = np.where(label_arr[mask] == a, 1.0, -1.0)
        machines[(a, b)] = train_binary_svm(X[mask], y, C, gamma, kkt_tol)
    return SvmModel(classes=classes, machines=machines, C=float(C), gamma=float(gamma))


def predict(model: SvmModel, x: np.ndarray) -> str:
    """Majority vote over pairwise machines.

    Vote ties break by the summed |decision value| of each class's winning
    machines, then lexicographically.
    """
    x = np.asarray(x, dtype=np.float64)
    votes = {c: 0 for c in model.classes}
    strength = {c: 0.0 for c in model.classes}
    for (a, b), machine in model.machines.items():
        val = predict_binary(machine, x)
        winner = a if val >= 0 else b
        votes[winner] += 1
        strength[winner] += abs(val)
    # classes are sorted, so min() on the (-votes, -strength) key is the
    # lexicographically first among full ties
    return min(model.classes, key=lambda c: (-votes[c], -strength[c], c))


def predict_many(model: SvmModel, X: np.ndarray) -> list[str]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return [predict(model, row) for row in X]


def _stratified_folds(labels: np.ndarray, n_folds: int, seed: int) -> np.ndarray:
    """Fold index per sample: classes shuffled independently, dealt round-robin."""
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.intp)
    for c in sorted(set(labels)):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        fold_of[idx] = np.arange(len(idx)) % n_folds
    return fold_of


def grid_search(
    X: np.ndarray,
    labels,
    grid_C,
    grid_gamma,
    folds: int = 5,
    seed: int = 0,
    kkt_tol: float = 1e-3,
) -> GridSearchResult:
    """Pick (C, gamma) by stratified k-fold cross-validation accuracy.

    Ties break toward smaller C, then smaller gamma.  When the rarest
    class has fewer members than ``folds``, the fold count is reduced to
    that size (flagged on the result); below 2 it is an error.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.array(list(labels))
    grid_C = list(grid_C)
    grid_gamma = list(grid_gamma)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if not grid_C or not grid_gamma:
        raise ValueError("parameter grid must be non-empty")
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    min_count = int(counts.min())
    if min_count < 2:
        raise ValueError(
            f"class {classes[np.argmin(counts)]!r} has {min_count} sample(s); "
            "cross-validation needs at least 2 per class"
        )
    folds_used = min(folds, min_count)
    fold_of = _stratified_folds(labels, folds_used, seed)

    results = []
    for C in grid_C:
        for gamma in grid_gamma:
            correct = total = 0
            for f in range(folds_used):
                train = fold_of != f
                model = train_multiclass(X[train], labels[train], C, gamma, kkt_tol)
                preds = predict_many(model, X[~train])
                correct += sum(p == t for p, t in zip(preds, labels[~train]))
                total += int((~train).sum())
            results.append((float(C), float(gamma), correct / total))

    best = min(results, key=lambda r: (-r[2], r[0], r[1]))
    return GridSearchResult(
        best_C=best[0],
        best_gamma=best[1],
        cv_accuracy=best[2],
        grid=results,
        folds_used=folds_used,
        folds_reduced=folds_used < folds,
    )
