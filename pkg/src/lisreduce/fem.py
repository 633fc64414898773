"""One-dimensional structural testbeds: a clamped bar under axial load and a
free-free tunnel beam on a two-layer Winkler foundation.

Both loads are Gaussian random fields discretized by the midpoint method:
one field value per element, ``q ~ N(mu_Q 1, Gamma_QQ)``. The nodal load is
``f = L q`` with ``L`` the element integrals of the shape functions, so the
prior of ``f`` has square root ``L chol(Gamma_QQ)`` and rank at most ``n``.

Units follow the printed model constants verbatim (N and m for the bar, kN
and m for the tunnel); no conversion is attempted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import ROTATION, TRANSLATION, StaticLinearSystem
from .gaussian import GaussianBelief, jittered_cholesky

__all__ = [
    "RandomFieldSpec",
    "ModelBundle",
    "kernel_covariance",
    "element_midpoints",
    "bar_element_stiffness",
    "beam_element_stiffness",
    "winkler_element_matrix",
    "beam_load_integrals",
    "build_bar",
    "build_tunnel",
    "build_model",
    "tunnel_rigidity",
]


@dataclass(frozen=True)
class RandomFieldSpec:
    """Stationary Gaussian field with exponential covariance."""

    mean: float
    std: float
    corr_length: float
    kernel: str = "exponential"

    def __post_init__(self):
        if self.std <= 0 or self.corr_length <= 0:
            raise ValueError("std and corr_length must be positive")
        if self.kernel != "exponential":
            raise ValueError(f"unsupported kernel {self.kernel!r}")


@dataclass
class ModelBundle:
    """Everything needed to pose an inverse problem on one testbed."""

    name: str
    system: StaticLinearSystem
    prior: GaussianBelief
    load_map: np.ndarray
    field: RandomFieldSpec
    midpoints: np.ndarray
    constants: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.system.dim

    @property
    def n_elements(self) -> int:
        return self.load_map.shape[1]

    def nodal_load(self, q):
        """Nodal force vector for per-element load values ``q``."""
        return self.load_map @ np.asarray(q, dtype=np.float64)


def kernel_covariance(spec: RandomFieldSpec, midpoints):
    """``sigma^2 exp(-|z_i - z_j| / theta)`` evaluated at element midpoints."""
    z = np.asarray(midpoints, dtype=np.float64)
    dist = np.abs(z[:, None] - z[None, :])
    return spec.std**2 * np.exp(-dist / spec.corr_length)


def element_midpoints(length, n):
    return (np.arange(n) + 0.5) * (length / n)


def bar_element_stiffness(rigidity, h):
    return rigidity / h * np.array([[1.0, -1.0], [-1.0, 1.0]])


def beam_element_stiffness(EI, h):
    """Cubic Hermite (Euler-Bernoulli) bending matrix, dofs (w1, t1, w2, t2)."""
    return EI / h**3 * np.array(
        [
            [12.0, 6 * h, -12.0, 6 * h],
            [6 * h, 4 * h * h, -6 * h, 2 * h * h],
            [-12.0, -6 * h, 12.0, -6 * h],
            [6 * h, 2 * h * h, -6 * h, 4 * h * h],
        ]
    )


def winkler_element_matrix(k, h):
    """Consistent foundation matrix ``k * int N^T N``."""
    return k * h / 420.0 * np.array(
        [
            [156.0, 22 * h, 54.0, -13 * h],
            [22 * h, 4 * h * h, 13 * h, -3 * h * h],
            [54.0, 13 * h, 156.0, -22 * h],
            [-13 * h, -3 * h * h, -22 * h, 4 * h * h],
        ]
    )


def beam_load_integrals(h):
    """Integrals of the four cubic shape functions over one element."""
    return np.array([h / 2, h * h / 12, h / 2, -h * h / 12])


def build_bar(n=100, length=2.0, rigidity=4e8, load_mean=4e6, std_ratio=0.3, corr_ratio=0.5):
    """Cantilever bar ``D u'' + q = 0`` with ``u(0) = 0`` and ``u'(L) = 0``.

    Linear elements; the clamped node is eliminated, leaving ``d = n`` free
    displacement dofs ordered from the root to the tip.
    """
    if n < 2:
        raise ValueError("the bar needs at least 2 elements")
    h = length / n
    K = np.zeros((n + 1, n + 1))
    Lmap = np.zeros((n + 1, n))
    ke = bar_element_stiffness(rigidity, h)
    for e in range(n):
        K[e : e + 2, e : e + 2] += ke
        Lmap[e : e + 2, e] += h / 2
    K, Lmap = K[1:, 1:], Lmap[1:]
    coords = np.arange(1, n + 1) * h

    spec = RandomFieldSpec(load_mean, std_ratio * load_mean, corr_ratio * length)
    midpoints = element_midpoints(length, n)
    prior = _field_prior(spec, midpoints, Lmap)
    system = StaticLinearSystem(K, [TRANSLATION] * n, coords)
    constants = dict(length=length, rigidity=rigidity, n_elements=n, element_length=h)
    return ModelBundle("bar", system, prior, Lmap, spec, midpoints, constants)


def tunnel_rigidity(youngs_modulus=35e6, diameter=6.2, thickness=0.35, joint_factor=1 / 7):
    """Effective bending rigidity ``zeta E I / D`` of the segmented tunnel.

    Dividing the governing equation ``u'''' + k D u / (zeta E I) = q D / (zeta E I)``
    by ``D / (zeta E I)`` leaves the foundation term as plain ``k u``.
    """
    inertia = np.pi / 64 * (diameter**4 - (diameter - 2 * thickness) ** 4)
    return joint_factor * youngs_modulus * inertia / diameter


def build_tunnel(
    n=800,
    length=200.0,
    youngs_modulus=35e6,
    diameter=6.2,
    thickness=0.35,
    joint_factor=1 / 7,
    k_sand=33_000.0,
    k_clay=5_000.0,
    interface=None,
    load_mean=3.0,
    std_ratio=1.0,
    corr_ratio=0.5,
):
    """Free-free Euler-Bernoulli beam on a Winkler foundation.

    Sand supports elements whose midpoint lies before ``interface`` (midspan by
    default), clay the rest. No dof is constrained: the foundation removes the
    rigid-body modes, so ``K`` is positive definite with ``d = 2 (n + 1)``
    dofs ordered node by node as (settlement, rotation).
    """
    if n < 2 or n % 2:
        raise ValueError("the tunnel needs an even number of elements (>= 2)")
    interface = length / 2 if interface is None else interface
    h = length / n
    EI = tunnel_rigidity(youngs_modulus, diameter, thickness, joint_factor)
    d = 2 * (n + 1)
    K = np.zeros((d, d))
    Lmap = np.zeros((d, n))
    kb = beam_element_stiffness(EI, h)
    kf = winkler_element_matrix(1.0, h)
    ne = beam_load_integrals(h)
    midpoints = element_midpoints(length, n)
    for e in range(n):
        k = k_sand if midpoints[e] < interface else k_clay
        s = slice(2 * e, 2 * e + 4)
        K[s, s] += kb + k * kf
        Lmap[s, e] += ne
    kinds = [TRANSLATION, ROTATION] * (n + 1)
    coords = np.repeat(np.arange(n + 1) * h, 2)

    spec = RandomFieldSpec(load_mean, std_ratio * load_mean, corr_ratio * length)
    prior = _field_prior(spec, midpoints, Lmap)
    system = StaticLinearSystem(K, kinds, coords)
    constants = dict(
        length=length,
        youngs_modulus=youngs_modulus,
        diameter=diameter,
        thickness=thickness,
        joint_factor=joint_factor,
        effective_rigidity=EI,
        k_sand=k_sand,
        k_clay=k_clay,
        interface=interface,
        n_elements=n,
        element_length=h,
    )
    return ModelBundle("tunnel", system, prior, Lmap, spec, midpoints, constants)


def build_model(name, n=None):
    """Build a testbed by name with its default mesh unless ``n`` is given."""
    builders = {"bar": build_bar, "tunnel": build_tunnel}
    if name not in builders:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(builders)}")
    return builders[name]() if n is None else builders[name](n)


def _field_prior(spec, midpoints, Lmap):
    R = jittered_cholesky(kernel_covariance(spec, midpoints))
    mean = Lmap @ np.full(len(midpoints), spec.mean)
    return GaussianBelief(mean, Lmap @ R)
