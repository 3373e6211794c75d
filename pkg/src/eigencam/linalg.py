"""Leading singular components of tall activation matrices.

``top_component`` finds the k-th right singular vector of an S x C matrix by
power iteration on its C x C Gram matrix, deflating components 1..k-1 first.
``jacobi_svd`` is a one-sided Jacobi SVD that shares no code with it and is
used as the reference in tests.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NoConvergence

__all__ = ["SvdComponent", "FullSvd", "gram", "top_component", "jacobi_svd", "canonical_sign"]

# 1 - |cos| between successive iterates; 1e-18 is a step angle of ~1.4e-9,
# which keeps vectors within 1e-4 of exact for gapped spectra
DEFAULT_TOL = 1e-18
DEFAULT_MAX_ITER = 10000

# below this fraction of trace(G) the deflated Gram matrix is treated as zero
_NULL_SPECTRUM_RTOL = 1e-12


@dataclass(frozen=True)
class SvdComponent:
    index: int
    sigma: float
    v: np.ndarray
    iterations: int = 0


@dataclass(frozen=True)
class FullSvd:
    U: np.ndarray
    sigmas: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.sigmas) @ self.V.T


def gram(m):
    """Return ``m.T @ m`` accumulated in float64, exactly symmetric."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    g = m.T @ m
    upper = np.triu(g)
    return upper + np.triu(g, 1).T


def canonical_sign(v):
    """Flip ``v`` so its largest-magnitude entry (first on ties) is positive."""
    v = np.asarray(v, dtype=np.float64)
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v.copy()


def _orthogonalize(x, basis):
    for b in basis:
        x = x - np.dot(b, x) * b
    return x


def _start_vector(c, previous):
    """All-ones direction, else e1, e2, ... projected away from ``previous``."""
    candidates = [np.full(c, 1.0 / np.sqrt(c))]
    candidates += [np.eye(c)[i] for i in range(c)]
    for x in candidates:
        x = _orthogonalize(x, previous)
        n = np.linalg.norm(x)
        if n >= 1e-12:
            return x / n
    raise DegenerateInput("no start vector survives deflation")


def top_component(m, k=1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """k-th singular value and right singular vector of ``m`` (S x C).

    Power iteration runs on the Gram matrix ``m.T @ m`` with Hotelling
    deflation of components ``1..k-1`` (each found by the same procedure).
    Iteration stops once ``1 - |<v_t, v_t+1>| < tol``.  The returned vector is
    sign-normalized by :func:`canonical_sign` and ``sigma = ||m v||``.

    Raises ``DegenerateInput`` for an all-zero matrix and ``NoConvergence``
    (carrying the last iterate) when ``max_iter`` is exhausted.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    c = m.shape[1]
    if not 1 <= k <= c:
        raise ValueError(f"component index {k} outside 1..{c}")
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    if not np.any(m):
        raise DegenerateInput("matrix is entirely zero")

    g = gram(m)
    null_level = _NULL_SPECTRUM_RTOL * np.trace(g)
    found = []
    result = None
    for index in range(1, k + 1):
        v, iterations = _power_iterate(g, found, null_level, tol, max_iter)
        v = canonical_sign(v)
        sigma = float(np.linalg.norm(m @ v))
        result = SvdComponent(index=index, sigma=sigma, v=v, iterations=iterations)
        found.append(v)
        g = g - sigma * sigma * np.outer(v, v)
    return result


def _power_iterate(g, previous, null_level, tol, max_iter):
    x = _start_vector(g.shape[0], previous)
    for it in range(1, max_iter + 1):
        y = _orthogonalize(g @ x, previous)
        n = np.linalg.norm(y)
        if n <= null_level:
            # remaining spectrum is numerically zero: any unit vector
            # orthogonal to the earlier components is a valid answer
            return x, it
        y /= n
        # 1 - |<x, y>| for unit vectors, without cancellation
        aligned = x if np.dot(x, y) >= 0 else -x
        if 0.5 * np.dot(y - aligned, y - aligned) < tol:
            return y, it
        x = y
    raise NoConvergence(
        f"power iteration did not converge in {max_iter} iterations",
        last_iterate=x,
        iterations=max_iter,
    )


def jacobi_svd(m, tol=1e-10, max_sweeps=60):
    """Full thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``FullSvd(U, sigmas, V)`` with ``r = min(S, C)`` columns and
    nonincreasing ``sigmas``.  Meant for small matrices.
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    s, c = a.shape
    if s < c:
        t = jacobi_svd(a.T, tol=tol, max_sweeps=max_sweeps)
        return FullSvd(U=t.V, sigmas=t.sigmas, V=t.U)

    v = np.eye(c)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(c - 1):
            for j in range(i + 1, c):
                alpha = np.dot(a[:, i], a[:, i])
                beta = np.dot(a[:, j], a[:, j])
                gamma = np.dot(a[:, i], a[:, j])
                if gamma == 0.0 or abs(gamma) < tol * np.sqrt(alpha * beta):
                    continue
                if abs(beta - alpha) > 1e300 * abs(gamma):
                    continue  # rotation angle underflows to zero
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                ai = a[:, i].copy()
                a[:, i] = cs * ai - sn * a[:, j]
                a[:, j] = sn * ai + cs * a[:, j]
                vi = v[:, i].copy()
                v[:, i] = cs * vi - sn * v[:, j]
                v[:, j] = sn * vi + cs * v[:, j]
        if not rotated:
            break

    sigmas = np.linalg.norm(a, axis=0)
    order = np.argsort(-sigmas, kind="stable")
    sigmas = sigmas[order]
    a = a[:, order]
    v = v[:, order]
    u = np.zeros((s, c))
    scale = sigmas[0] if sigmas[0] > 0 else 1.0
    for i in range(c):
        if sigmas[i] > 1e-14 * scale:
            u[:, i] = a[:, i] / sigmas[i]
        else:
            u[:, i] = _complete_column(u[:, :i])
    return FullSvd(U=u, sigmas=sigmas, V=v)


def _complete_column(q):
    """A unit vector orthogonal to the columns of ``q`` (Gram-Schmidt on e_i)."""
    basis = [q[:, i] for i in range(q.shape[1])]
    for i in range(q.shape[0]):
        x = np.zeros(q.shape[0])
        x[i] = 1.0
        for _ in range(2):
            x = _orthogonalize(x, basis)
        n = np.linalg.norm(x)
        if n > 1e-8:
            return x / n
    raise AssertionError("unreachable: column space is full")
