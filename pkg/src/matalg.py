"""Matrix-algebra foundation for the training designs.

Hermitian eigendecompositions with a deterministic ordering and phase
convention, SVD, Kronecker/vec calculus, positive part, Hermitian square
root, pseudoinverse, PSD tests and chi-square quantiles.
"""

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from scipy import special

from src.errors import DimensionError, NotHermitianError, NotPositiveSemidefiniteError

Order = Literal["ascending", "descending"]

ASYMMETRY_TOL = 1e-6
CLAMP_TOL = 1e-9
PINV_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class HermEig:
    """Eigendecomposition M = U diag(d) U^H with d sorted per `order`."""

    U: np.ndarray
    d: np.ndarray
    order: Order

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.d) @ self.U.conj().T


def _square(M) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M


def relative_asymmetry(M) -> float:
    """‖M − M^H‖_F relative to max(1, ‖M‖_F)."""
    M = _square(M)
    return float(np.linalg.norm(M - M.conj().T) / max(1.0, np.linalg.norm(M)))


def hermitian_part(M) -> np.ndarray:
    """Symmetrize M, rejecting asymmetry beyond the repair tolerance."""
    M = _square(M)
    asym = relative_asymmetry(M)
    if asym > ASYMMETRY_TOL:
        raise NotHermitianError(f"matrix is not Hermitian (relative asymmetry {asym:.3e})")
    return (M + M.conj().T) / 2


def fix_phases(U: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rotate each column so its first nonzero entry is real-positive.

    Returns the rotated matrix and the unit-modulus factors applied.
    """
    U = np.array(U, dtype=complex)
    phases = np.ones(U.shape[1], dtype=complex)
    for j in range(U.shape[1]):
        col = U[:, j]
        scale = np.max(np.abs(col)) if col.size else 0.0
        if scale == 0.0:
            continue
        k = int(np.argmax(np.abs(col) > 1e-8 * scale))
        phases[j] = np.conj(col[k]) / abs(col[k])
        U[:, j] = col * phases[j]
    return U, phases


def herm_eig(M, order: Order = "ascending") -> HermEig:
    """Eigendecomposition of a Hermitian matrix with controlled ordering.

    Ties between equal eigenvalues are broken by descending magnitude of
    the eigenvector's first nonzero component.
    """
    if order not in ("ascending", "descending"):
        raise ValueError(f"unknown order {order!r}")
    H = hermitian_part(M)
    d, U = np.linalg.eigh(H)
    U, _ = fix_phases(U)
    lead = np.array([_first_nonzero_magnitude(U[:, j]) for j in range(U.shape[1])])
    key = d if order == "ascending" else -d
    # Eigenvalues within the clamp tolerance count as equal for tie-breaking.
    scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
    rounded = np.round(key / (CLAMP_TOL * scale))
    idx = np.lexsort((-lead, rounded))
    return HermEig(U=U[:, idx], d=d[idx], order=order)


def _first_nonzero_magnitude(col: np.ndarray) -> float:
    scale = np.max(np.abs(col))
    if scale == 0.0:
        return 0.0
    return float(abs(col[np.argmax(np.abs(col) > 1e-8 * scale)]))


def svd(M) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD M = U diag(s) V^H, singular values descending.

    Columns of V follow the same phase convention as `herm_eig`; U absorbs
    the matching rotation so the product is unchanged.
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {M.shape}")
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    V, phases = fix_phases(Vh.conj().T)
    U = U * phases
    return U, s, V


def kron(A, B) -> np.ndarray:
    return np.kron(np.asarray(A), np.asarray(B))


def vec(M) -> np.ndarray:
    """Stack the columns of M."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v).ravel()
    if rows * cols != v.size:
        raise DimensionError(f"cannot reshape {v.size} entries into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def commutation_matrix(m: int, n: int) -> np.ndarray:
    """Permutation Π with vec(M^T) = Π vec(M) for every m×n matrix M."""
    if m < 1 or n < 1:
        raise DimensionError(f"commutation matrix needs m, n >= 1, got {m}, {n}")
    Pi = np.zeros((m * n, m * n))
    for i in range(m):
        for j in range(n):
            Pi[j + i * n, i + j * m] = 1.0
    return Pi


def positive_part(M) -> np.ndarray:
    """[M]_+ : negative (and numerically zero) eigenvalues replaced by 0."""
    eig = herm_eig(M)
    d = eig.d
    tol = CLAMP_TOL * (float(np.max(np.abs(d))) if d.size else 0.0)
    d = np.where(d > tol, d, 0.0)
    out = (eig.U * d) @ eig.U.conj().T
    return (out + out.conj().T) / 2


def herm_sqrt(M) -> np.ndarray:
    """PSD square root sharing the eigenvectors of M."""
    eig = herm_eig(M)
    d = eig.d
    scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
    if d.size and d[0] < -CLAMP_TOL * scale:
        raise NotPositiveSemidefiniteError(f"matrix has negative eigenvalue {d[0]:.3e}")
    root = np.sqrt(np.clip(d, 0.0, None))
    out = (eig.U * root) @ eig.U.conj().T
    return (out + out.conj().T) / 2


def pinv(M, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values below rtol·σ_max count as zero."""
    M = np.asarray(M)
    U, s, V = svd(M)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[1], M.shape[0]), dtype=np.result_type(M, float))
    keep = s >= rtol * s[0]
    return (V[:, keep] / s[keep]) @ U[:, keep].conj().T


def min_eig_herm(M) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(M))[0])


def is_psd(M, tol: float = 1e-9) -> bool:
    return min_eig_herm(M) >= -tol


def chi2_cdf(x: float, dof: int) -> float:
    return float(special.gammainc(dof / 2.0, x / 2.0)) if x > 0 else 0.0


def _chi2_pdf(x: float, dof: int) -> float:
    if x <= 0:
        return 0.0
    k = dof / 2.0
    return float(np.exp((k - 1.0) * np.log(x) - x / 2.0 - k * np.log(2.0) - special.gammaln(k)))


def chi2_quantile(alpha: float, dof: int, tol: float = 1e-12, max_iter: int = 200) -> float:
    """α-percentile of the chi-square distribution with `dof` degrees of freedom.

    Newton iteration on the regularized lower incomplete gamma, started at
    the Wilson-Hilferty approximation and kept inside a bisection bracket.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")

    z = float(special.ndtri(alpha))
    h = 2.0 / (9.0 * dof)
    x = dof * max(1.0 - h + z * np.sqrt(h), 1e-3) ** 3

    lo, hi = 0.0, max(2.0 * x, 1.0)
    while chi2_cdf(hi, dof) < alpha:
        lo, hi = hi, 2.0 * hi

    for _ in range(max_iter):
        err = chi2_cdf(x, dof) - alpha
        if abs(err) < tol:
            break
        if err > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        pdf = _chi2_pdf(x, dof)
        step = x - err / pdf if pdf > 0 else np.nan
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, hi):
            break
    return float(x)
