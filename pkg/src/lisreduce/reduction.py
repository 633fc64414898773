"""Likelihood-informed and POD bases, Petrov-Galerkin reduced models and the
posterior approximations built on them.

Three pipelines share the same conjugate-update core:

* ``lis_mr_posterior``: Petrov-Galerkin model with the LIS trial/test pair
  ``(V, W)``; the online solve only touches ``m x r`` and ``r x r`` arrays.
* ``pod_posterior``: Galerkin model with ``V = W = Phi_r`` from state
  snapshots.
* ``olr_posterior``: full-dimensional update with the rank-r forward map
  ``G V W^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import RankError, SingularSystemError
from .forward import LinearForwardProblem
from .gaussian import (
    GaussianBelief,
    LowRankDowndate,
    PosteriorApproximation,
    innovation_cholesky,
    sample,
)

__all__ = [
    "RANK_RTOL",
    "ReductionBasis",
    "ReducedInverseProblem",
    "TruncatedOperator",
    "numerical_rank",
    "lis_basis",
    "pod_basis",
    "collect_snapshots",
    "reduce_petrov_galerkin",
    "lis_mr_posterior",
    "pod_posterior",
    "olr_forward",
    "olr_posterior",
    "projector_apply",
]

RANK_RTOL = 1e-12
LIFTS = ("mapped", "trial")
STIFFNESS_MODES = ("auto", "adjoint", "direct")


def numerical_rank(singular_values, rtol=RANK_RTOL) -> int:
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s >= rtol * s[0]))


def _fix_signs(vectors, *partners):
    """Make the largest-magnitude entry of each column positive.

    ``np.argmax`` returns the first maximizer, so ties go to the lowest index.
    The same flips are applied to the matching columns of ``partners``.
    """
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return (vectors * signs,) + tuple(p * signs for p in partners)


@dataclass(frozen=True)
class ReductionBasis:
    """Trial basis ``V`` and test basis ``W`` (both ``d x r``).

    ``delta`` holds the generalized singular values for ``kind="lis"`` and the
    snapshot singular values for ``kind="pod"`` (where ``W`` is ``V``).

    ``adjoint`` (``m x r``, LIS only) is the ``Z`` with ``W = G^T Z``. Since
    ``G = C K^{-1}`` this gives ``K W = C^T Z`` without touching ``K``.
    """

    V: np.ndarray
    W: np.ndarray
    delta: np.ndarray
    kind: str
    adjoint: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.V.shape != self.W.shape or self.V.ndim != 2:
            raise ValueError("trial and test bases must have the same d x r shape")
        if self.delta.shape != (self.V.shape[1],):
            raise ValueError("need one singular value per basis vector")
        if self.kind not in ("lis", "pod"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.adjoint is not None and (self.adjoint.ndim != 2 or self.adjoint.shape[1] != self.V.shape[1]):
            raise ValueError("adjoint coefficients need one column per basis vector")

    @property
    def r(self) -> int:
        return self.V.shape[1]

    @property
    def d(self) -> int:
        return self.V.shape[0]

    def truncate(self, r) -> ReductionBasis:
        """Leading ``r`` basis pairs."""
        if not 0 < r <= self.r:
            raise ValueError(f"cannot truncate a rank-{self.r} basis to {r}")
        adjoint = None if self.adjoint is None else self.adjoint[:, :r]
        return ReductionBasis(self.V[:, :r], self.W[:, :r], self.delta[:r], self.kind, adjoint)


def lis_basis(G, prior_sqrt, noise_sqrt, r=None) -> ReductionBasis:
    """Likelihood-informed subspace by square-root balancing.

    Takes the thin SVD ``S_obs^{-1} G S = sum delta_i omega_i nu_i^T`` and sets
    ``v_i = S nu_i`` and ``w_i = G^T S_obs^{-T} omega_i / delta_i``. Then
    ``W^T V = I`` holds by construction. Only the square root ``S`` enters, so
    the prior may be singular. ``S_obs^{-1}`` is applied through a triangular
    solve with the noise Cholesky factor.

    Parameters
    ----------
    G : (m, d) ndarray
    prior_sqrt : (d, k) ndarray
    noise_sqrt : (m, m) ndarray
        Any invertible square root of the noise covariance.
    r : int, optional
        Basis size. Defaults to the numerical rank of ``S_obs^{-1} G S``.
    """
    G = np.asarray(G, dtype=np.float64)
    S = np.asarray(prior_sqrt, dtype=np.float64)
    L_obs = GaussianBelief(np.zeros(G.shape[0]), noise_sqrt).cholesky()
    if G.shape[1] != S.shape[0]:
        raise ValueError("forward operator and prior square root have mismatched dimensions")

    A = la.solve_triangular(L_obs, G @ S, lower=True)
    omega, delta, nuT = la.svd(A, full_matrices=False)
    rank = numerical_rank(delta)
    r = rank if r is None else int(r)
    if r < 1 or r > rank:
        raise RankError(r, rank, what="S_obs^-1 G S")
    nu, omega = _fix_signs(nuT[:r].T, omega[:, :r])
    delta = delta[:r]
    V = S @ nu
    Z = la.solve_triangular(L_obs, omega, lower=True, trans="T") / delta
    return ReductionBasis(V, G.T @ Z, delta, "lis", adjoint=Z)


def pod_basis(snapshots, r) -> ReductionBasis:
    """Leading ``r`` left singular vectors of the snapshot matrix (no centering)."""
    U = np.asarray(snapshots, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] == 0:
        raise ValueError("need a d x N snapshot matrix with N >= 1")
    if r > min(U.shape):
        raise ValueError(f"rank {r} exceeds min(d, N) = {min(U.shape)}")
    phi, sigma, _ = la.svd(U, full_matrices=False)
    rank = numerical_rank(sigma)
    if r < 1 or r > rank:
        raise RankError(r, rank, what="snapshot matrix")
    (phi,) = _fix_signs(phi[:, :r])
    return ReductionBasis(phi, phi, sigma[:r], "pod")


def collect_snapshots(prob: LinearForwardProblem, N, rng: np.random.Generator):
    """States ``K^{-1} f^(j)`` for ``N`` prior draws ``f^(j)``, as columns."""
    if N < 0:
        raise ValueError("snapshot count must be non-negative")
    if N == 0:
        return np.empty((prob.d, 0))
    F = sample(prob.prior, rng, size=N).T
    return prob.system.solve(F)


@dataclass(frozen=True)
class ReducedInverseProblem:
    """Offline products of a (Petrov-)Galerkin reduction.

    ``K_hat``, ``C_hat``, ``G_hat`` and ``prior_hat`` define the reduced
    problem ``y = G_hat f_hat + eps`` with ``f_hat ~ N(W^T mu, W^T Gamma W)``.
    ``coupling`` (``S^T W``) and ``lift`` (``Gamma W``) map reduced updates
    back to the full space.
    """

    K_hat: np.ndarray
    C_hat: np.ndarray
    G_hat: np.ndarray
    prior_hat: GaussianBelief
    basis: ReductionBasis
    noise: GaussianBelief
    prior: GaussianBelief
    coupling: np.ndarray
    lift: np.ndarray

    @property
    def r(self) -> int:
        return self.G_hat.shape[1]

    @property
    def m(self) -> int:
        return self.G_hat.shape[0]


def reduce_petrov_galerkin(prob: LinearForwardProblem, basis: ReductionBasis, stiffness="auto"):
    """Project ``K u = f`` onto ``(V, W)``: ``K_hat = W^T K V``, ``C_hat = C V``.

    ``G_hat = C_hat K_hat^{-1}`` is obtained from an LU factorization with
    partial pivoting since ``K_hat`` is not symmetric in general.

    Parameters
    ----------
    stiffness : {"auto", "adjoint", "direct"}
        How ``W^T K V`` is evaluated. ``"direct"`` multiplies by ``K``.
        ``"adjoint"`` uses ``K W = C^T Z`` for an LIS basis, so
        ``K_hat = Z^T C_hat``. This is the same matrix, but it avoids the
        ``cond(K) * eps`` cancellation of the direct product, which otherwise
        puts a floor of about ``1e-11`` under the full-rank error on stiff
        models. ``"auto"`` picks ``"adjoint"`` when the basis carries ``Z``
        and ``W = G^T Z`` holds for this problem.
    """
    if basis.d != prob.d:
        raise ValueError(f"basis dimension {basis.d} does not match problem dimension {prob.d}")
    if stiffness not in STIFFNESS_MODES:
        raise ValueError(f"stiffness must be one of {STIFFNESS_MODES}, got {stiffness!r}")
    V, W = basis.V, basis.W
    C_hat = V[list(prob.obs.observed_indices), :]
    use_adjoint = stiffness != "direct" and _adjoint_matches(prob, basis)
    if stiffness == "adjoint" and not use_adjoint:
        raise ValueError("basis has no adjoint coefficients consistent with this problem")
    K_hat = basis.adjoint.T @ C_hat if use_adjoint else W.T @ (prob.system.K @ V)
    lu, piv = la.lu_factor(K_hat, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= np.finfo(float).eps * basis.r * pivots.max():
        raise SingularSystemError(f"reduced stiffness matrix of rank {basis.r} is singular")
    G_hat = la.lu_solve((lu, piv), C_hat.T, trans=1).T

    S = prob.prior.sqrt_factor
    coupling = S.T @ W
    # W^T Gamma W = R^T R without squaring the conditioning
    R = la.qr(coupling, mode="r")[0][: basis.r]
    prior_hat = GaussianBelief(W.T @ prob.prior.mean, R.T)
    for a in (K_hat, C_hat, G_hat, coupling):
        a.flags.writeable = False
    return ReducedInverseProblem(
        K_hat=K_hat,
        C_hat=C_hat,
        G_hat=G_hat,
        prior_hat=prior_hat,
        basis=basis,
        noise=prob.noise,
        prior=prob.prior,
        coupling=coupling,
        lift=S @ coupling,
    )


def _adjoint_matches(prob, basis, rtol=1e-10):
    Z = basis.adjoint
    if Z is None or Z.shape[0] != prob.m:
        return False
    return np.linalg.norm(prob.G.T @ Z - basis.W) <= rtol * np.linalg.norm(basis.W)


def _reduced_posterior(red: ReducedInverseProblem, y, lift):
    if lift not in LIFTS:
        raise ValueError(f"lift must be one of {LIFTS}, got {lift!r}")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (red.m,):
        raise ValueError(f"data vector must have shape ({red.m},), got {y.shape}")
    prior_hat, G_hat = red.prior_hat, red.G_hat
    S_hat = prior_hat.sqrt_factor
    L = innovation_cholesky(G_hat @ S_hat, red.noise)
    alpha = la.solve_triangular(L, y - G_hat @ prior_hat.mean, lower=True)
    # Y = G_hat^T L^{-T}, so Gamma_hat G_hat^T Z^{-1} = S_hat S_hat^T Y L^{-1}
    Y = la.solve_triangular(L, G_hat, lower=True).T
    X_hat = S_hat.T @ Y
    mean_hat = prior_hat.mean + S_hat @ (X_hat @ alpha)
    reduced = PosteriorApproximation(
        mean_hat, LowRankDowndate(prior_hat, S_hat @ X_hat, whitened=X_hat)
    )

    if lift == "mapped":
        mean = red.prior.mean + red.lift @ (Y @ alpha)
    else:
        mean = red.basis.V @ mean_hat
    downdate = LowRankDowndate(red.prior, red.lift @ Y, whitened=red.coupling @ Y)
    return PosteriorApproximation(mean, downdate, reduced=reduced)


def lis_mr_posterior(red: ReducedInverseProblem, y, lift="mapped"):
    """Posterior approximation from the LIS Petrov-Galerkin reduced model.

    The reduced posterior ``N(mu_hat_pos, Gamma_hat_pos)`` is the conjugate
    update of the r-dimensional problem. The full-space covariance is
    ``Gamma - Gamma W G_hat^T Z^{-1} G_hat W^T Gamma``.

    ``lift`` selects the full-space mean:

    ``"mapped"`` (default)
        ``mu + Gamma W G_hat^T Z^{-1} (y - G_hat W^T mu)``. This is the mean
        that belongs to the covariance above. For LIS bases ``Gamma W = V``, so
        it equals ``mu + V (mu_hat_pos - W^T mu)``: the prior mean outside the
        subspace is kept.
    ``"trial"``
        ``V mu_hat_pos``. This drops the prior mean outside ``span(V)``.
    """
    if red.basis.kind != "lis":
        raise ValueError("lis_mr_posterior needs a reduced problem built on an LIS basis")
    return _reduced_posterior(red, y, lift)


def pod_posterior(red: ReducedInverseProblem, y, lift="mapped"):
    """Posterior approximation from the Galerkin POD reduced model.

    Same structure as :func:`lis_mr_posterior` with ``V = W = Phi_r``. The
    prior is left untouched in the orthogonal complement of the POD basis.
    """
    if red.basis.kind != "pod":
        raise ValueError("pod_posterior needs a reduced problem built on a POD basis")
    return _reduced_posterior(red, y, lift)


@dataclass(frozen=True)
class TruncatedOperator:
    """Rank-r operator ``U diag(s) Vt``. ``Vt_sqrt`` caches ``Vt S`` for a prior."""

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray
    Vt_sqrt: np.ndarray

    def __matmul__(self, x):
        coeff = self.Vt @ np.asarray(x)
        scale = self.s if coeff.ndim == 1 else self.s[:, None]
        return self.U @ (scale * coeff)

    @property
    def shape(self):
        return (self.U.shape[0], self.Vt.shape[1])

    def dense(self):
        return (self.U * self.s) @ self.Vt


def olr_forward(prob: LinearForwardProblem, basis: ReductionBasis) -> TruncatedOperator:
    """Truncated SVD of ``G P = (G V) W^T``, computed from a QR of ``W``."""
    if basis.kind != "lis":
        raise ValueError("the optimal low-rank update needs an LIS basis")
    GV = prob.G @ basis.V
    Q, R = la.qr(basis.W, mode="economic")
    a, s, bt = la.svd(GV @ R.T, full_matrices=False)
    keep = numerical_rank(s)
    U, s, Vt = a[:, :keep], s[:keep], bt[:keep] @ Q.T
    return TruncatedOperator(U, s, Vt, Vt @ prob.prior.sqrt_factor)


def olr_posterior(prob: LinearForwardProblem, basis: ReductionBasis, y, operator=None):
    """Full-space posterior with ``G`` replaced by its rank-r projection ``G P``.

    The covariance is the optimal rank-r negative semi-definite update of the
    prior. Pass a precomputed ``operator`` from :func:`olr_forward` to keep
    the online cost at ``O(r (m + d))`` for the forward evaluations.
    """
    op = olr_forward(prob, basis) if operator is None else operator
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (prob.m,):
        raise ValueError(f"data vector must have shape ({prob.m},), got {y.shape}")
    prior = prob.prior
    S = prior.sqrt_factor
    GS = op.U @ (op.s[:, None] * op.Vt_sqrt)
    L = innovation_cholesky(GS, prob.noise)
    alpha = la.solve_triangular(L, y - op @ prior.mean, lower=True)
    X = la.solve_triangular(L, GS, lower=True).T
    mean = prior.mean + S @ (X @ alpha)
    return PosteriorApproximation(mean, LowRankDowndate(prior, S @ X, whitened=X))


def projector_apply(basis: ReductionBasis, f):
    """Oblique projection ``V (W^T f)`` onto the LIS."""
    return basis.V @ (basis.W.T @ np.asarray(f, dtype=np.float64))
