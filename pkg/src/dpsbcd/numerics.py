"""Dense linear-algebra kernels and seeded Gaussian sampling.

Everything here operates on plain 2-D float64 numpy arrays and is pure:
given the same inputs (including an explicit :class:`RngState`) the outputs
are bit-identical across calls, processes and platforms with the same BLAS.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "RngState",
    "derive_seed",
    "power_iteration",
    "solve_spd",
    "gaussian_sample",
    "fd_gradient",
]


def require_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite, non-empty 2-D float64 array or raise ValueError."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


def derive_seed(seed: int, *labels) -> int:
    """Derive a child seed from a parent seed and a sequence of labels.

    Uses blake2s over the decimal seed and the labels, so the derivation is
    stable across processes and Python versions (unlike hash()).
    """
    h = hashlib.blake2s(digest_size=8)
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


class RngState:
    """Explicit, replayable random stream.

    A value type around a PCG64 generator: the same seed plus the same
    sequence of draw calls reproduces the same numbers bit for bit. Streams
    are never shared; use :meth:`child` to derive independent sub-streams.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.draws = 0
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def child(self, *labels) -> "RngState":
        return RngState(derive_seed(self.seed, *labels))

    def standard_normal(self, rows: int, cols: int) -> np.ndarray:
        self.draws += 1
        return self._gen.standard_normal((rows, cols))

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self._gen.permutation(n)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        self.draws += 1
        return self._gen.uniform(low, high, size)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngState(seed={self.seed}, draws={self.draws})"


def gaussian_sample(rng: RngState, rows: int, cols: int, variance: float) -> np.ndarray:
    """Sample an i.i.d. zero-mean Gaussian matrix with the given entry variance.

    variance == 0 returns an exact zero matrix without consuming the stream.
    """
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    if rows <= 0 or cols <= 0:
        raise ValueError("rows and cols must be positive")
    if variance == 0.0:
        return np.zeros((rows, cols))
    return np.sqrt(variance) * rng.standard_normal(rows, cols)


_FALLBACK_SEED = 0x5EED  # only used when the all-ones start is degenerate


def power_iteration(
    a,
    max_iters: int = 100,
    tol: float = 1e-9,
    start: np.ndarray | None = None,
    return_vector: bool = False,
):
    """Approximate the spectral norm (largest singular value) of a matrix.

    Runs power iteration on A^T A with a deterministic start: the normalized
    all-ones vector, falling back to a fixed-seed random vector if that start
    is numerically in the null space. Stops after ``max_iters`` sweeps or when
    the relative change of the estimate drops below ``tol``.

    With ``return_vector=True`` also returns the final right singular-vector
    estimate, which callers can feed back as ``start`` to warm-start the next
    call on a nearby matrix.
    """
    a = require_matrix(a, "a")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be > 0")

    n = a.shape[1]
    if start is not None and np.linalg.norm(start) > 0:
        v = np.asarray(start, dtype=np.float64) / np.linalg.norm(start)
    else:
        v = np.full(n, 1.0 / np.sqrt(n))

    est = 0.0
    for _ in range(max_iters):
        w = a @ v
        s = float(np.linalg.norm(w))
        if s == 0.0:
            if np.count_nonzero(a) == 0:
                return (0.0, v) if return_vector else 0.0
            rng = np.random.Generator(np.random.PCG64(_FALLBACK_SEED))
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v_next = a.T @ w
        nv = float(np.linalg.norm(v_next))
        if nv == 0.0:
            est = s
            break
        v = v_next / nv
        new_est = float(np.linalg.norm(a @ v))
        if est > 0 and abs(new_est - est) <= tol * est:
            est = new_est
            break
        est = new_est
    return (est, v) if return_vector else est


def solve_spd(a, b) -> np.ndarray:
    """Solve A X = B for symmetric positive-definite A via Cholesky.

    Rejects asymmetric or indefinite systems instead of silently returning a
    least-squares answer.
    """
    a = require_matrix(a, "a")
    b = require_matrix(b, "b")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got {a.shape}")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: a {a.shape} vs b {b.shape}")
    scale = float(np.abs(a).max())
    if not np.allclose(a, a.T, atol=1e-10 * max(scale, 1.0), rtol=0.0):
        raise ValueError("a is not symmetric")
    try:
        factor = cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("a is not positive definite") from exc
    return cho_solve(factor, b, check_finite=False)


def fd_gradient(f, at, h: float = 1e-6) -> np.ndarray:
    """Entrywise central-difference gradient of a scalar function of a matrix.

    (f(x + h e_ij) - f(x - h e_ij)) / (2 h) for every entry, so it is an
    oracle that knows nothing about f's structure. Intended for tests: cost
    is two f evaluations per entry.
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    at = require_matrix(at, "at")
    grad = np.zeros_like(at)
    work = at.copy()
    for idx in np.ndindex(at.shape):
        orig = work[idx]
        work[idx] = orig + h
        up = f(work)
        work[idx] = orig - h
        down = f(work)
        work[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    if not np.isfinite(grad).all():
        raise ValueError("function produced non-finite values during differencing")
    return grad
