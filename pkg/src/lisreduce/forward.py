"""Static linear systems ``K u = f``, point observations and the forward map
``G = C K^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import ConfigError, SingularSystemError
from .gaussian import GaussianBelief, sample

__all__ = [
    "TRANSLATION",
    "ROTATION",
    "StaticLinearSystem",
    "ObservationOperator",
    "LinearForwardProblem",
    "apply_forward",
    "assemble_dense_G",
    "generate_data",
    "draw_observation_indices",
]

TRANSLATION = "translation"
ROTATION = "rotation"


class StaticLinearSystem:
    """Symmetric positive definite system with labelled degrees of freedom.

    Parameters
    ----------
    K : (d, d) array_like
        Stiffness matrix with boundary conditions already applied.
    dof_kinds : sequence of str, optional
        ``"translation"`` or ``"rotation"`` per dof. Defaults to all
        translational.
    coordinates : (d,) array_like, optional
        Position of the node carrying each dof.

    Notes
    -----
    The Cholesky factorization is computed on first use and cached;
    ``solve_count`` records how many right-hand sides went through it.
    """

    def __init__(self, K, dof_kinds=None, coordinates=None):
        K = np.array(K, dtype=np.float64)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"stiffness matrix must be square, got shape {K.shape}")
        if not np.all(np.isfinite(K)):
            raise ValueError("stiffness matrix contains non-finite entries")
        if not np.allclose(K, K.T, rtol=1e-12, atol=1e-12 * np.abs(K).max()):
            raise ValueError("stiffness matrix must be symmetric")
        K.flags.writeable = False
        d = K.shape[0]
        kinds = [TRANSLATION] * d if dof_kinds is None else list(dof_kinds)
        if len(kinds) != d or not set(kinds) <= {TRANSLATION, ROTATION}:
            raise ValueError("dof_kinds must label every dof as translation or rotation")
        coords = np.arange(d, dtype=float) if coordinates is None else np.asarray(coordinates, float)
        if coords.shape != (d,):
            raise ValueError("coordinates must have one entry per dof")
        self.K = K
        self.dof_kinds = tuple(kinds)
        self.coordinates = coords
        self._factor = None
        self.solve_count = 0

    @property
    def dim(self) -> int:
        return self.K.shape[0]

    @property
    def translational_dofs(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.dof_kinds) if k == TRANSLATION])

    def factor(self):
        if self._factor is None:
            try:
                self._factor = la.cho_factor(self.K, lower=True)
            except la.LinAlgError as exc:
                raise SingularSystemError(
                    "stiffness matrix is not positive definite; "
                    "are boundary conditions missing?"
                ) from exc
        return self._factor

    def solve(self, f):
        """Solve ``K u = f`` for a vector or a block of right-hand sides."""
        f = np.asarray(f, dtype=np.float64)
        u = la.cho_solve(self.factor(), f)
        self.solve_count += 1 if f.ndim == 1 else f.shape[1]
        return u

    def condition_number(self) -> float:
        w = la.eigvalsh(self.K)
        return float(w[-1] / w[0])


@dataclass(frozen=True)
class ObservationOperator:
    """Selection of ``m`` distinct dofs; the rows of ``C`` are unit vectors."""

    observed_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.observed_indices)
        if len(set(idx)) != len(idx):
            raise ValueError("observed indices must be distinct")
        object.__setattr__(self, "observed_indices", idx)

    @property
    def m(self) -> int:
        return len(self.observed_indices)

    def check(self, d):
        if any(i < 0 or i >= d for i in self.observed_indices):
            raise ValueError(f"observed indices must lie in [0, {d})")

    def matrix(self, d) -> np.ndarray:
        self.check(d)
        C = np.zeros((self.m, d))
        C[np.arange(self.m), list(self.observed_indices)] = 1.0
        return C

    def __call__(self, u):
        return np.asarray(u)[list(self.observed_indices)]


@dataclass
class LinearForwardProblem:
    """Linear Gaussian inverse problem ``y = C K^{-1} f + eps``."""

    system: StaticLinearSystem
    obs: ObservationOperator
    prior: GaussianBelief
    noise: GaussianBelief
    _G: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        d = self.system.dim
        self.obs.check(d)
        if self.prior.dim != d:
            raise ValueError(f"prior dimension {self.prior.dim} does not match system dimension {d}")
        if self.noise.dim != self.obs.m:
            raise ValueError(
                f"noise dimension {self.noise.dim} does not match {self.obs.m} observations"
            )

    @property
    def d(self) -> int:
        return self.system.dim

    @property
    def m(self) -> int:
        return self.obs.m

    @property
    def C(self) -> np.ndarray:
        return self.obs.matrix(self.d)

    @property
    def G(self) -> np.ndarray:
        """Dense forward operator, assembled once and then cached."""
        if self._G is None:
            self._G = assemble_dense_G(self)
        return self._G


def apply_forward(prob: LinearForwardProblem, f):
    """Return ``C u`` where ``K u = f``."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != prob.d:
        raise ValueError(f"forcing must have leading dimension {prob.d}, got {f.shape}")
    return prob.system.solve(f)[list(prob.obs.observed_indices)]


def assemble_dense_G(prob: LinearForwardProblem):
    """Materialize ``G`` row by row from ``m`` adjoint solves ``K x = C^T e_i``."""
    G = prob.system.solve(prob.C.T).T
    G.flags.writeable = False
    return G


def generate_data(prob: LinearForwardProblem, rng: np.random.Generator):
    """Draw ``f_true`` from the prior and ``y = G f_true + eps``."""
    f_true = sample(prob.prior, rng)
    eps = sample(prob.noise, rng)
    return f_true, apply_forward(prob, f_true) + eps


def draw_observation_indices(system: StaticLinearSystem, m, rng: np.random.Generator):
    """Sample ``m`` translational dofs uniformly without replacement.

    The indices are returned in ascending order.
    """
    candidates = system.translational_dofs
    if m > candidates.size:
        raise ConfigError(
            f"cannot observe {m} dofs: only {candidates.size} translational dofs available"
        )
    if m < 1:
        raise ConfigError("at least one observation is required")
    chosen = rng.choice(candidates, size=m, replace=False)
    return ObservationOperator(tuple(np.sort(chosen)))
