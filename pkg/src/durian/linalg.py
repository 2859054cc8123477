"""Dense real-matrix primitives for perceptual difficulty scoring.

Covers the centered second-moment matrix of a patch-feature matrix, a cyclic
Jacobi eigenvalue solver for symmetric matrices, spectral entropy, and the
on-disk feature-matrix formats read by the ``entropy`` subcommand.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from durian.errors import (
    ConvergenceError,
    DegenerateInputError,
    DegenerateSpectrumError,
    InvalidInputError,
)

TOL_SYM = 1e-9
TOL_EIG = 1e-10
MAX_SWEEPS = 100
OFF_TOL = 1e-10


def _as_finite_matrix(a, name="matrix"):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def centered_second_moment(features, mode="patch"):
    """Return the (P-1)-scaled second-moment matrix of mean-centered patches.

    ``mode="patch"`` gives the P x P matrix ``X X^T / (P-1)`` where ``X`` is
    ``features`` with the patch-mean row subtracted; ``mode="feature"`` gives
    the d x d matrix ``X^T X / (P-1)``. Both share their nonzero eigenvalues.
    """
    F = _as_finite_matrix(features, "feature matrix")
    P = F.shape[0]
    if P < 2:
        raise DegenerateInputError(f"need at least 2 patches, got {P}")
    X = F - F.mean(axis=0, keepdims=True)
    if mode == "patch":
        C = X @ X.T
    elif mode == "feature":
        C = X.T @ X
    else:
        raise InvalidInputError(f"unknown mode {mode!r}; expected 'patch' or 'feature'")
    C /= P - 1
    # matmul may leave last-bit asymmetry
    return 0.5 * (C + C.T)


def eigvals_symmetric(matrix, max_sweeps=MAX_SWEEPS, tol=OFF_TOL):
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Returns all n eigenvalues sorted in descending order. Values in
    ``[-tol_eig, 0)`` with ``tol_eig = 1e-10 * sum|lambda|`` are clamped to 0.
    Convergence is declared once the off-diagonal Frobenius norm drops below
    ``tol`` times the Frobenius norm of the input.
    """
    A = _as_finite_matrix(matrix).copy()
    n, m = A.shape
    if n != m:
        raise InvalidInputError(f"matrix must be square, got {A.shape}")
    if n == 0:
        raise InvalidInputError("matrix is empty")
    scale = float(np.max(np.abs(A)))
    if np.max(np.abs(A - A.T)) > TOL_SYM * max(scale, 1.0):
        raise InvalidInputError("matrix is not symmetric within tolerance")
    A = 0.5 * (A + A.T)

    fro = math.sqrt(float(np.sum(A * A)))
    if fro == 0.0:
        return np.zeros(n)

    threshold = tol * fro
    upper = np.triu_indices(n, 1)
    for _ in range(max_sweeps + 1):
        off = math.sqrt(2.0 * float(np.sum(A[upper] ** 2)))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                gap = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(gap):
                    # rotation angle underflows; tan(phi) ~ apq / gap
                    t = apq / gap
                else:
                    theta = gap / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
    else:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")

    eig = np.diag(A).copy()
    tol_eig = TOL_EIG * float(np.sum(np.abs(eig)))
    eig[(eig < 0.0) & (eig >= -tol_eig)] = 0.0
    return np.sort(eig)[::-1]


def spectral_entropy(eigenvalues):
    """Shannon entropy (nats) of the eigenvalue distribution ``p_k = l_k / sum l``.

    Zero eigenvalues contribute nothing (0 log 0 = 0).
    """
    lam = np.asarray(eigenvalues, dtype=np.float64).ravel()
    if lam.size == 0 or not np.all(np.isfinite(lam)):
        raise InvalidInputError("spectrum must be a nonempty finite vector")
    tol_eig = TOL_EIG * float(np.sum(np.abs(lam)))
    if np.any(lam < -tol_eig):
        raise InvalidInputError("spectrum has negative eigenvalues; matrix is not PSD")
    lam = np.clip(lam, 0.0, None)
    total = float(lam.sum())
    if total <= 0.0:
        raise DegenerateSpectrumError("all eigenvalues are zero")
    p = lam / total
    # filter after dividing: subnormal eigenvalues can underflow to 0 here
    p = p[p > 0.0]
    return max(float(-np.sum(p * np.log(p))), 0.0)


def load_feature_matrix(path):
    """Read a feature matrix from text (``P d`` header) or ``.f64`` binary."""
    path = Path(path)
    if path.suffix == ".f64":
        raw = path.read_bytes()
        if len(raw) < 8:
            raise InvalidInputError(f"{path}: truncated header")
        P, d = struct.unpack("<II", raw[:8])
        body = raw[8:]
        if len(body) != 8 * P * d:
            raise InvalidInputError(f"{path}: expected {P * d} float64 values, got {len(body) / 8:g}")
        return _as_finite_matrix(np.frombuffer(body, dtype="<f8").reshape(P, d).copy(), str(path))

    tokens = path.read_text().split()
    if len(tokens) < 2:
        raise InvalidInputError(f"{path}: missing 'P d' header")
    try:
        P, d = int(tokens[0]), int(tokens[1])
        values = [float(t) for t in tokens[2:]]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    if P < 0 or d < 0 or len(values) != P * d:
        raise InvalidInputError(f"{path}: header says {P}x{d} but found {len(values)} values")
    return _as_finite_matrix(np.array(values).reshape(P, d), str(path))


def save_feature_matrix(path, features):
    F = _as_finite_matrix(features)
    path = Path(path)
    P, d = F.shape
    if path.suffix == ".f64":
        path.write_bytes(struct.pack("<II", P, d) + F.astype("<f8").tobytes())
        return
    lines = [f"{P} {d}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in F]
    path.write_text("\n".join(lines) + "\n")
