"""Datasets of unit-norm points: validation, synthetic generators, file I/O.

Points live column-wise in a p x n matrix. Every public constructor funnels
through :func:`normalize`, so a `Dataset` always holds unit-norm columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DatasetFileError,
    DimensionMismatch,
    MalformedHeader,
    NonFiniteEntry,
    ZeroVectorInput,
)

UNIT_NORM_TOL = 1e-12

FAMILIES = ("gaussian_contaminated", "multivariate_t", "sphere_uniform")
PROVENANCES = ("file", "gaussian-contaminated", "t-dist", "unit-sphere-uniform")

_FAMILY_PROVENANCE = {
    "gaussian_contaminated": "gaussian-contaminated",
    "multivariate_t": "t-dist",
    "sphere_uniform": "unit-sphere-uniform",
}


@dataclass(frozen=True)
class Dataset:
    """n unit-norm points in R^p, stored as the columns of `points`."""

    points: np.ndarray
    seed: Optional[int] = None
    provenance: str = "file"

    @property
    def p(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2:
            raise DimensionMismatch("points must be a p x n matrix")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        norms = np.linalg.norm(pts, axis=0)
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise ZeroVectorInput(int(bad[0]))
        if np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
            raise ValueError("columns must have unit norm; use normalize()")


@dataclass(frozen=True)
class ShapeMatrixSpec:
    """Population shape matrix: toeplitz (rho^{|i-j|}), identity, or explicit."""

    p: int
    kind: str = "toeplitz"
    rho: float = 0.85
    matrix: Optional[np.ndarray] = None

    def realize(self) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.p)
        if self.kind == "toeplitz":
            if not 0.0 < self.rho < 1.0:
                raise ValueError("toeplitz rho must lie in (0, 1)")
            idx = np.arange(self.p)
            return self.rho ** np.abs(idx[:, None] - idx[None, :])
        if self.kind == "explicit":
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.shape != (self.p, self.p):
                raise DimensionMismatch("explicit shape matrix has wrong size")
            return 0.5 * (m + m.T)
        raise ValueError(f"unknown shape kind {self.kind!r}")


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic data recipe: family, shape matrix, size, and seed."""

    p: int
    n: int
    family: str = "sphere_uniform"
    shape: Optional[ShapeMatrixSpec] = None
    rate_numerator: float = 0.9
    dof: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n <= self.p:
            raise ValueError("need n > p")
        if self.dof <= 0:
            raise ValueError("dof must be positive")
        if not 0.0 <= self.rate_numerator / self.p <= 1.0:
            raise ValueError("contamination probability must lie in [0, 1]")
        if self.shape is None:
            object.__setattr__(self, "shape", ShapeMatrixSpec(self.p, kind="identity"))
        elif self.shape.p != self.p:
            raise DimensionMismatch("shape spec dimension differs from p")


def normalize(points: np.ndarray, seed: Optional[int] = None,
              provenance: str = "file") -> Dataset:
    """Scale every column to unit Euclidean norm.

    Raises ZeroVectorInput (with the offending index) on a zero column.
    """
    pts = np.asarray(points, dtype=np.float64)
    norms = np.linalg.norm(pts, axis=0)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ZeroVectorInput(int(bad[0]))
    return Dataset(pts / norms, seed=seed, provenance=provenance)


def _smallest_eigvec(sigma: np.ndarray) -> np.ndarray:
    """Unit eigenvector for the smallest eigenvalue, first nonzero entry positive."""
    _, vecs = np.linalg.eigh(sigma)
    v = vecs[:, 0]
    nz = np.flatnonzero(np.abs(v) > 0)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


def generate(cfg: GeneratorConfig) -> Dataset:
    """Draw a dataset per `cfg`. Deterministic given `cfg.seed`.

    gaussian_contaminated: z_i ~ N(0, Sigma), each column independently
    replaced with probability rate_numerator/p by the unit eigenvector of
    Sigma's smallest eigenvalue.
    multivariate_t: z_i = g_i / sqrt(chi2_dof / dof), g_i ~ N(0, Sigma).
    sphere_uniform: g_i ~ N(0, I).
    All paths end with column normalization.
    """
    rng = np.random.default_rng(cfg.seed)
    p, n = cfg.p, cfg.n
    if cfg.family == "sphere_uniform":
        z = rng.standard_normal((p, n))
    else:
        sigma = cfg.shape.realize()
        chol = np.linalg.cholesky(sigma)
        z = chol @ rng.standard_normal((p, n))
        if cfg.family == "gaussian_contaminated":
            mask = rng.random(n) < cfg.rate_numerator / p
            if mask.any():
                z[:, mask] = _smallest_eigvec(sigma)[:, None]
        else:  # multivariate_t
            r = rng.chisquare(cfg.dof, n)
            z = z / np.sqrt(r / cfg.dof)
    return normalize(z, seed=cfg.seed, provenance=_FAMILY_PROVENANCE[cfg.family])


@dataclass(frozen=True)
class ConditionReport:
    """Necessary-condition flags for existence/uniqueness of the estimator."""

    rank_full: bool
    n_gt_p: bool
    n_ge_2p: bool

    @property
    def solvable(self) -> bool:
        return self.rank_full and self.n_gt_p


def check_necessary_conditions(data: Dataset) -> ConditionReport:
    """Cheaply checkable consequences of the existence assumptions.

    rank_full uses the numerical rank of the point matrix (singular values
    above p * eps * sigma_max). Full combinatorial verification over all
    subspaces / half-size subsets is intentionally not attempted.
    """
    p, n = data.p, data.n
    sv = np.linalg.svd(data.points, compute_uv=False)
    thresh = p * np.finfo(np.float64).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > thresh))
    return ConditionReport(rank_full=rank == p, n_gt_p=n > p, n_ge_2p=n >= 2 * p)


def save_points(data: Dataset, path) -> None:
    """Write the plain-text point file: header "p n", then n rows of p floats."""
    with open(path, "w") as fh:
        fh.write(f"{data.p} {data.n}\n")
        for i in range(data.n):
            fh.write(" ".join(f"{x:.17g}" for x in data.points[:, i]))
            fh.write("\n")


def load_points(path) -> Dataset:
    """Read a point file written by :func:`save_points`. Round-trip exact."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise MalformedHeader(f"expected 'p n' header, got {header!r}")
        try:
            p, n = int(header[0]), int(header[1])
        except ValueError as exc:
            raise MalformedHeader(str(exc)) from exc
        pts = np.empty((p, n))
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != p:
                raise DimensionMismatch(
                    f"row {i} has {len(parts)} entries, expected {p}")
            try:
                row = np.array([float(x) for x in parts])
            except ValueError as exc:
                raise DatasetFileError(
                    f"row {i}: unparseable float ({exc})") from exc
            if not np.all(np.isfinite(row)):
                j = int(np.flatnonzero(~np.isfinite(row))[0])
                raise NonFiniteEntry(i, j)
            pts[:, i] = row
    return Dataset(pts, provenance="file")
