"""Versioned ``.npz`` containers for models, bases and reduced problems, plus
Matrix Market export for checking operators with external tools.

A container is an ordinary ``.npz`` archive with one extra entry,
``__meta__``: a JSON document recording the container ``kind``, the format
``version`` and any scalar metadata.
"""

from __future__ import annotations

import json
import os

import numpy as np
import scipy.io
import scipy.sparse as sparse

from .errors import ConfigError
from .fem import ModelBundle, RandomFieldSpec
from .forward import StaticLinearSystem
from .gaussian import GaussianBelief
from .reduction import ReducedInverseProblem, ReductionBasis

__all__ = [
    "CONTAINER_VERSION",
    "save_container",
    "load_container",
    "save_model",
    "load_model",
    "save_basis",
    "load_basis",
    "save_reduced",
    "load_reduced",
    "export_matrix_market",
]

CONTAINER_VERSION = 1
_META = "__meta__"


def save_container(path, kind, arrays, meta=None):
    header = {"kind": kind, "version": CONTAINER_VERSION, **(meta or {})}
    payload = {name: np.asarray(a) for name, a in arrays.items()}
    payload[_META] = np.array(json.dumps(header, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_container(path, kind=None):
    """Return ``(arrays, meta)``; raises :class:`ConfigError` on a kind/version mismatch."""
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files if k != _META}
            meta = json.loads(str(data[_META])) if _META in data.files else None
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read container {path}: {exc}") from exc
    if meta is None:
        raise ConfigError(f"{path} is not a lisreduce container")
    if meta.get("version") != CONTAINER_VERSION:
        raise ConfigError(f"unsupported container version {meta.get('version')}")
    if kind is not None and meta.get("kind") != kind:
        raise ConfigError(f"{path} holds a {meta.get('kind')!r}, expected {kind!r}")
    return arrays, meta


def save_model(bundle: ModelBundle, path):
    arrays = {
        "K": bundle.system.K,
        "coordinates": bundle.system.coordinates,
        "prior_mean": bundle.prior.mean,
        "prior_sqrt": bundle.prior.sqrt_factor,
        "load_map": bundle.load_map,
        "midpoints": bundle.midpoints,
    }
    meta = {
        "name": bundle.name,
        "dof_kinds": list(bundle.system.dof_kinds),
        "field": {
            "mean": bundle.field.mean,
            "std": bundle.field.std,
            "corr_length": bundle.field.corr_length,
            "kernel": bundle.field.kernel,
        },
        "constants": {k: float(v) for k, v in bundle.constants.items()},
    }
    return save_container(path, "model", arrays, meta)


def load_model(path) -> ModelBundle:
    a, meta = load_container(path, "model")
    system = StaticLinearSystem(a["K"], meta["dof_kinds"], a["coordinates"])
    prior = GaussianBelief(a["prior_mean"], a["prior_sqrt"])
    return ModelBundle(
        meta["name"], system, prior, a["load_map"], RandomFieldSpec(**meta["field"]),
        a["midpoints"], meta["constants"],
    )


def save_basis(basis: ReductionBasis, path, meta=None):
    arrays = {"V": basis.V, "W": basis.W, "delta": basis.delta}
    if basis.adjoint is not None:
        arrays["adjoint"] = basis.adjoint
    return save_container(path, "basis", arrays, {"basis_kind": basis.kind, **(meta or {})})


def load_basis(path) -> ReductionBasis:
    a, meta = load_container(path, "basis")
    return ReductionBasis(a["V"], a["W"], a["delta"], meta["basis_kind"], a.get("adjoint"))


def save_reduced(red: ReducedInverseProblem, path, meta=None):
    """Store everything the online phase needs; no d x d array is written."""
    arrays = {
        "K_hat": red.K_hat,
        "C_hat": red.C_hat,
        "G_hat": red.G_hat,
        "prior_hat_mean": red.prior_hat.mean,
        "prior_hat_sqrt": red.prior_hat.sqrt_factor,
        "noise_sqrt": red.noise.sqrt_factor,
        "prior_mean": red.prior.mean,
        "prior_sqrt": red.prior.sqrt_factor,
        "coupling": red.coupling,
        "V": red.basis.V,
        "W": red.basis.W,
        "delta": red.basis.delta,
    }
    if red.basis.adjoint is not None:
        arrays["adjoint"] = red.basis.adjoint
    return save_container(path, "reduced", arrays, {"basis_kind": red.basis.kind, **(meta or {})})


def load_reduced(path) -> ReducedInverseProblem:
    a, meta = load_container(path, "reduced")
    prior = GaussianBelief(a["prior_mean"], a["prior_sqrt"])
    basis = ReductionBasis(a["V"], a["W"], a["delta"], meta["basis_kind"], a.get("adjoint"))
    return ReducedInverseProblem(
        K_hat=a["K_hat"],
        C_hat=a["C_hat"],
        G_hat=a["G_hat"],
        prior_hat=GaussianBelief(a["prior_hat_mean"], a["prior_hat_sqrt"]),
        basis=basis,
        noise=GaussianBelief(np.zeros(a["noise_sqrt"].shape[0]), a["noise_sqrt"]),
        prior=prior,
        coupling=a["coupling"],
        lift=prior.sqrt_factor @ a["coupling"],
    )


def export_matrix_market(directory, matrices, sparse_names=("K", "C")):
    """Write each array to ``<directory>/<name>.mtx``.

    Matrices listed in ``sparse_names`` use the coordinate format, others the
    dense array format. Returns the written paths.
    """
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, A in matrices.items():
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        target = os.path.join(directory, f"{name}.mtx")
        data = sparse.coo_matrix(A) if name in sparse_names else A
        scipy.io.mmwrite(target, data, precision=17)
        paths.append(target)
    return paths
