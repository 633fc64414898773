"""Gaussian beliefs carried as square-root factors, conjugate updates and the
Förstner distance between covariance matrices.

Covariances are never inverted: a belief stores ``sqrt_factor`` ``S`` with
``Gamma = S @ S.T`` and every update works on ``S`` directly, so singular
priors (``S`` with fewer columns than rows) pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import IndefiniteMatrixError, NumericalError

__all__ = [
    "GaussianBelief",
    "LowRankDowndate",
    "PosteriorApproximation",
    "symmetrize",
    "jittered_cholesky",
    "innovation_cholesky",
    "exact_posterior",
    "sample",
    "foerstner_distance",
    "downdate_foerstner",
]

CHOLESKY_JITTER = (1e-12, 1e-9)


def symmetrize(A):
    return (A + A.T) / 2


def _frozen(a, name, ndim):
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GaussianBelief:
    """Normal distribution ``N(mean, S S^T)`` stored through its square root.

    Parameters
    ----------
    mean : (d,) array_like
    sqrt_factor : (d, k) array_like
        Any ``S`` with ``S S^T`` equal to the covariance; ``k < d`` encodes a
        singular covariance.
    """

    mean: np.ndarray
    sqrt_factor: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean, "mean", 1)
        S = _frozen(self.sqrt_factor, "sqrt_factor", 2)
        if S.shape[0] != mean.shape[0]:
            raise ValueError(
                f"sqrt_factor has {S.shape[0]} rows but mean has length {mean.shape[0]}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sqrt_factor", S)

    @classmethod
    def from_covariance(cls, mean, cov):
        """Build a belief from a dense SPD covariance via jittered Cholesky."""
        return cls(mean, jittered_cholesky(np.asarray(cov, dtype=np.float64)))

    @classmethod
    def isotropic(cls, dim, variance, mean=None):
        """``N(mean, variance * I)``; the default mean is zero."""
        mean = np.zeros(dim) if mean is None else mean
        return cls(mean, np.sqrt(variance) * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        S = self.sqrt_factor
        return symmetrize(S @ S.T)

    def cholesky(self) -> np.ndarray:
        """Lower-triangular factor ``L`` with ``L L^T = S S^T``.

        Obtained from a QR factorization of ``S^T`` so the covariance itself is
        never formed. Raises :class:`IndefiniteMatrixError` when the
        covariance is singular.
        """
        S = self.sqrt_factor
        if S.shape[1] < S.shape[0]:
            raise IndefiniteMatrixError("covariance is rank deficient (k < d)")
        return _lower_from_qr(S.T, what="covariance")


@dataclass(frozen=True)
class LowRankDowndate:
    """Covariance of the form ``Gamma - B B^T`` with ``Gamma`` from ``base``.

    ``whitened`` optionally records ``X`` with ``B = S X`` where ``S`` is the
    base square-root factor; every posterior built in this package sets it,
    which enables :func:`downdate_foerstner`.
    """

    base: GaussianBelief
    factor: np.ndarray
    whitened: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        B = _frozen(self.factor, "factor", 2)
        if B.shape[0] != self.base.dim:
            raise ValueError(
                f"downdate factor has {B.shape[0]} rows, base dimension is {self.base.dim}"
            )
        object.__setattr__(self, "factor", B)
        if self.whitened is not None:
            X = _frozen(self.whitened, "whitened", 2)
            if X.shape != (self.base.sqrt_factor.shape[1], B.shape[1]):
                raise ValueError("whitened factor has inconsistent shape")
            object.__setattr__(self, "whitened", X)

    @property
    def rank_bound(self) -> int:
        return self.factor.shape[1]

    @property
    def covariance(self) -> np.ndarray:
        B = self.factor
        return symmetrize(self.base.covariance - B @ B.T)

    def variances(self) -> np.ndarray:
        """Diagonal of the represented covariance, without forming it."""
        S, B = self.base.sqrt_factor, self.factor
        return np.einsum("ij,ij->i", S, S) - np.einsum("ij,ij->i", B, B)


@dataclass(frozen=True)
class PosteriorApproximation:
    """Full-space posterior mean plus a low-rank downdate of the prior.

    ``reduced`` holds the r-dimensional posterior when the approximation was
    obtained from a reduced model. Unpacks as ``mean, downdate``.
    """

    mean: np.ndarray
    downdate: LowRankDowndate
    reduced: PosteriorApproximation | None = None

    def __iter__(self):
        yield self.mean
        yield self.downdate

    @property
    def covariance(self) -> np.ndarray:
        return self.downdate.covariance


def jittered_cholesky(A, jitters=CHOLESKY_JITTER):
    """Lower Cholesky factor of ``A + eps * trace(A)/n * I``.

    The first jitter is always applied; the second is tried once if the
    first factorization fails.
    """
    A = symmetrize(np.asarray(A, dtype=np.float64))
    n = A.shape[0]
    scale = np.trace(A) / n if n else 0.0
    for eps in jitters:
        try:
            return la.cholesky(A + eps * scale * np.eye(n), lower=True)
        except la.LinAlgError:
            continue
    raise IndefiniteMatrixError(
        f"Cholesky failed even with jitter {jitters[-1]:g} * trace/n"
    )


def _lower_from_qr(T, what):
    # T^T T = L L^T with L = R^T from the economic QR of T
    R = la.qr(T, mode="r")[0][: T.shape[1]]
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    L = (R * signs[:, None]).T
    diag = np.abs(np.diag(L))
    if diag.size and diag.min() <= np.finfo(float).eps * L.shape[0] * diag.max():
        raise IndefiniteMatrixError(f"{what} is numerically singular")
    return L


def innovation_cholesky(GS, noise: GaussianBelief):
    """Lower factor of the innovation covariance ``GS (GS)^T + Gamma_obs``.

    Computed from the QR factorization of the stacked square roots, which is
    the square-root form of the symmetric factorization.
    """
    GS = np.asarray(GS, dtype=np.float64)
    if GS.shape[0] != noise.dim:
        raise ValueError(
            f"forward operator has {GS.shape[0]} rows, noise dimension is {noise.dim}"
        )
    stacked = np.vstack([GS.T, noise.sqrt_factor.T])
    return _lower_from_qr(stacked, what="innovation covariance")


def _check_update_inputs(prior, G, noise, y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != noise.dim:
        raise ValueError(f"data vector must have shape ({noise.dim},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("data vector contains non-finite entries")
    if G.shape != (noise.dim, prior.dim):
        raise ValueError(
            f"forward operator must have shape ({noise.dim}, {prior.dim}), got {G.shape}"
        )
    if not np.all(np.isfinite(G)):
        raise ValueError("forward operator contains non-finite entries")
    return y


def exact_posterior(prior: GaussianBelief, G, noise: GaussianBelief, y):
    """Conjugate posterior of ``f ~ prior`` given ``y = G f + eps``.

    Returns
    -------
    PosteriorApproximation
        Mean ``mu + Gamma G^T Z^{-1} (y - G mu)`` and downdate factor
        ``B = Gamma G^T L^{-T}`` where ``Z = L L^T = G Gamma G^T + Gamma_obs``.
        Only the m-by-m innovation matrix is factorized.
    """
    G = np.asarray(G, dtype=np.float64)
    y = _check_update_inputs(prior, G, noise, y)
    S = prior.sqrt_factor
    GS = G @ S
    L = innovation_cholesky(GS, noise)
    alpha = la.solve_triangular(L, y - G @ prior.mean, lower=True)
    X = la.solve_triangular(L, GS, lower=True).T
    mean = prior.mean + S @ (X @ alpha)
    return PosteriorApproximation(mean, LowRankDowndate(prior, S @ X, whitened=X))


def sample(belief: GaussianBelief, rng: np.random.Generator, size=None):
    """Draw ``mean + S xi`` with ``xi`` standard normal.

    ``size=None`` returns one vector; an integer returns ``(size, d)``.
    """
    S = belief.sqrt_factor
    if size is None:
        return belief.mean + S @ rng.standard_normal(S.shape[1])
    xi = rng.standard_normal((size, S.shape[1]))
    return belief.mean + xi @ S.T


def foerstner_distance(A, Bc, null_tol=1e-10):
    """Förstner distance ``sqrt(sum ln^2 lambda_i)`` over the pencil ``(A, Bc)``.

    Both matrices are whitened by their sum ``M = A + Bc``. Directions where
    ``M`` falls below ``null_tol * max(trace A, trace Bc)`` are null in both
    operands and are dropped. In the remaining directions the whitened
    matrices add to the identity, so their common eigenvectors give
    ``lambda = a / b``. A direction that is null in exactly one operand makes
    the distance infinite.
    """
    A = symmetrize(np.asarray(A, dtype=np.float64))
    Bc = symmetrize(np.asarray(Bc, dtype=np.float64))
    if A.shape != Bc.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("Förstner distance needs two square matrices of equal size")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Bc))):
        raise ValueError("non-finite covariance entries")

    scale = max(np.trace(A), np.trace(Bc))
    if scale <= 0:
        return 0.0
    mu, U = la.eigh(A + Bc)
    keep = mu > null_tol * scale
    if not np.any(keep):
        return 0.0
    T = U[:, keep] / np.sqrt(mu[keep])
    At = symmetrize(T.T @ A @ T)
    Bt = symmetrize(T.T @ Bc @ T)
    a, E = la.eigh(At)
    b = np.einsum("ij,ij->j", E, Bt @ E)
    if np.any(a <= null_tol) or np.any(b <= null_tol):
        return np.inf
    return float(np.sqrt(np.sum(np.log(a / b) ** 2)))


def downdate_foerstner(first: LowRankDowndate, second: LowRankDowndate, null_tol=1e-10):
    """Förstner distance between two downdates of the same prior.

    With ``Gamma = S S^T`` and ``B = S X`` both covariances are congruent to
    ``I - X X^T`` through ``S``. When ``S`` has full column rank the pencil
    eigenvalues therefore equal those of the whitened pair, and they differ
    from one only on ``span[X1, X2]``. The distance is evaluated on that
    subspace of dimension at most ``r1 + r2``, which avoids the conditioning
    of ``Gamma`` altogether.
    """
    if first.base is not second.base and not (
        np.array_equal(first.base.sqrt_factor, second.base.sqrt_factor)
    ):
        raise ValueError("downdates must share the same prior")
    if first.whitened is None or second.whitened is None:
        raise ValueError("both downdates need whitened factors")
    X1, X2 = first.whitened, second.whitened
    Q = la.orth(np.hstack([X1, X2]))
    if Q.shape[1] == 0:
        return 0.0
    Y1, Y2 = Q.T @ X1, Q.T @ X2
    eye = np.eye(Q.shape[1])
    return foerstner_distance(eye - Y1 @ Y1.T, eye - Y2 @ Y2.T, null_tol=null_tol)
