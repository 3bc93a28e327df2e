"""Dense complex linear-algebra kernels.

All routines operate on small (dim <= ~30) complex matrices and are pure
functions of their inputs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DimensionError",
    "DegenerateSpectrumError",
    "as_matrix",
    "hs_inner",
    "expm",
    "expm_hermitian",
    "svd",
    "dagger",
]

UNITARITY_TOL = 1e-10
RANK_THRESHOLD = 1e-300


class DimensionError(ValueError):
    """Raised on shape mismatch or a non-square matrix where one is required."""


class DegenerateSpectrumError(ArithmeticError):
    """Raised when a matrix is numerically rank deficient."""


def as_matrix(x, square: bool = False) -> np.ndarray:
    """Validate ``x`` as a finite 2-D complex matrix and return a copy."""
    m = np.array(x, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product ``Tr(a^dagger b)``."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


# Pade coefficients and backward-error thresholds (Higham 2005, Table 2.3).
_PADE_B = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0,
          13: 5.371920351148152e0}


def _pade_uv(a: np.ndarray, m: int):
    b = _PADE_B[m]
    ident = np.eye(a.shape[0], dtype=a.dtype)
    a2 = a @ a
    if m != 13:
        powers = [ident, a2]
        for _ in range(2, (m + 1) // 2):
            powers.append(powers[-1] @ a2)
        u = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
        v = sum(b[2 * k] * powers[k] for k in range(len(powers)))
        return a @ u, v
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def expm(x) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade core.

    Follows Higham's 2005 algorithm: the lowest Pade degree whose
    backward-error threshold covers ``||x||_1`` is used, otherwise the
    matrix is scaled by a power of two, exponentiated with the degree-13
    approximant and squared back.

    Parameters
    ----------
    x : array_like
        Square complex matrix.

    Returns
    -------
    numpy.ndarray
        ``exp(x)``.
    """
    a = as_matrix(x, square=True)
    norm1 = np.linalg.norm(a, 1)
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            u, v = _pade_uv(a, m)
            return np.linalg.solve(v - u, v + u)
    s = max(0, int(np.ceil(np.log2(norm1 / _THETA[13])))) if norm1 > 0 else 0
    u, v = _pade_uv(a / 2.0 ** s, 13)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def expm_hermitian(h) -> np.ndarray:
    """Exponential of a Hermitian matrix (or a stack of them) via ``eigh``."""
    h = np.asarray(h, dtype=np.complex128)
    if h.shape[-1] != h.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {h.shape}")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(w)[..., None, :]) @ dagger(v)


def svd(k):
    """Singular-value decomposition ``k = U diag(s) V^dagger``.

    No gauge fixing is applied to the singular vectors. Raises
    :class:`DegenerateSpectrumError` when the smallest singular value falls
    below ``1e-300`` after dividing out the largest one.
    """
    k = as_matrix(k, square=True)
    u, s, vh = np.linalg.svd(k)
    if s[0] == 0.0 or s[-1] / s[0] <= RANK_THRESHOLD:
        raise DegenerateSpectrumError(
            f"rank deficient matrix: singular values {s[0]:.3e} .. {s[-1]:.3e}")
    return u, s, dagger(vh)
