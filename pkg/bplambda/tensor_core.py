# bplambda/tensor_core.py v1.0
"""Dense float64 kernels: vectors, matrices and the rank-3 trace contraction.

Vec, Mat and Tensor3 are plain numpy arrays with 1, 2 and 3 axes. Every kernel
checks shapes explicitly and never relies on broadcasting. Batched variants take
one extra leading axis and process each batch item independently.
"""

from typing import Any

import numpy as np

from .errors import NonFiniteError, ShapeError

Vec = np.ndarray
Mat = np.ndarray
Tensor3 = np.ndarray

DTYPE = np.float64


def check_finite(arr: np.ndarray, what: str = "array") -> np.ndarray:
    """Raise NonFiniteError if arr holds NaN or inf"""
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite entries")
    return arr


def _coerce(data: Any, ndim: int, what: str) -> np.ndarray:
    arr = np.array(data, dtype=DTYPE)
    if arr.ndim != ndim:
        raise ShapeError(f"{what}: expected {ndim} axes, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{what}: empty")
    return check_finite(arr, what)


def as_vec(data: Any, what: str = "vec") -> Vec:
    return _coerce(data, 1, what)


def as_mat(data: Any, what: str = "mat") -> Mat:
    return _coerce(data, 2, what)


def identity(n: int) -> Mat:
    return np.eye(n, dtype=DTYPE)


def matvec(A: Mat, v: Vec) -> Vec:
    if A.ndim != 2 or v.ndim != 1 or A.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: {A.shape} x {v.shape}")
    return A @ v


def vecmat(v: Vec, A: Mat) -> Vec:
    """Row-vector product v^T A, i.e. the pullback of v through A"""
    if A.ndim != 2 or v.ndim != 1 or A.shape[0] != v.shape[0]:
        raise ShapeError(f"vecmat: {v.shape} x {A.shape}")
    return v @ A


def matmul(A: Mat, B: Mat) -> Mat:
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ShapeError(f"matmul: {A.shape} x {B.shape}")
    return A @ B


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a * x + y for identically shaped x and y"""
    if x.shape != y.shape:
        raise ShapeError(f"axpy: {x.shape} vs {y.shape}")
    return a * x + y


def outer(u: Vec, v: Vec) -> Mat:
    if u.ndim != 1 or v.ndim != 1:
        raise ShapeError(f"outer: {u.shape}, {v.shape}")
    return np.outer(u, v)


def trace_contract(A: Mat, e: Tensor3) -> np.ndarray:
    """Contract A (r, d0) with the first axis of e (d0, out, in).

    e is flattened to (d0, out*in), left-multiplied by A and reshaped back to
    (r, out, in). When r == 1 the leading axis is dropped and an (out, in)
    matrix is returned.
    """
    if A.ndim != 2 or e.ndim != 3:
        raise ShapeError(f"trace_contract: A {A.shape}, e {e.shape}")
    d0, out_dim, in_dim = e.shape
    if A.shape[1] != d0:
        raise ShapeError(f"trace_contract: A has {A.shape[1]} columns, e has d0={d0}")
    res = (A @ e.reshape(d0, out_dim * in_dim)).reshape(A.shape[0], out_dim, in_dim)
    if A.shape[0] == 1:
        return res[0]
    return res


def lift(m: Mat) -> Tensor3:
    """Inverse of the r == 1 squeeze in trace_contract"""
    if m.ndim != 2:
        raise ShapeError(f"lift: {m.shape}")
    return m[np.newaxis, :, :]


# Batched kernels (leading batch axis B)

def batch_pullback(v: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Per item v_b^T J_b: (B, n) x (B, n, m) -> (B, m)"""
    if v.ndim != 2 or J.ndim != 3 or J.shape[:2] != v.shape:
        raise ShapeError(f"batch_pullback: v {v.shape}, J {J.shape}")
    return np.matmul(v[:, np.newaxis, :], J)[:, 0, :]


def batch_trace_contract(A: np.ndarray, e: np.ndarray) -> np.ndarray:
    """trace_contract per batch item without the r == 1 squeeze.

    A: (B, r, d0), e: (B, d0, out, in) -> (B, r, out, in)
    """
    if A.ndim != 3 or e.ndim != 4 or A.shape[0] != e.shape[0] or A.shape[2] != e.shape[1]:
        raise ShapeError(f"batch_trace_contract: A {A.shape}, e {e.shape}")
    B, d0, out_dim, in_dim = e.shape
    flat = np.matmul(A, e.reshape(B, d0, out_dim * in_dim))
    return flat.reshape(B, A.shape[1], out_dim, in_dim)
