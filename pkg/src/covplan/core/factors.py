"""Gaussian factors, measurement models and noise-weighted linearization."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import linalg as la

from covplan.core.errors import DimensionMismatchError, NotPositiveDefiniteError
from covplan.core.layout import Kind, StateLayout, VariableKey, unique_keys


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def compose(pose: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Apply a relative motion (expressed in the pose frame) to a planar pose."""
    c, s = np.cos(pose[2]), np.sin(pose[2])
    return np.array(
        [
            pose[0] + c * delta[0] - s * delta[1],
            pose[1] + s * delta[0] + c * delta[1],
            wrap_angle(pose[2] + delta[2]),
        ]
    )


def between(pose_a: np.ndarray, pose_b: np.ndarray) -> np.ndarray:
    """Relative pose of b expressed in the frame of a."""
    c, s = np.cos(pose_a[2]), np.sin(pose_a[2])
    dx, dy = pose_b[0] - pose_a[0], pose_b[1] - pose_a[1]
    return np.array([c * dx + s * dy, -s * dx + c * dy, wrap_angle(pose_b[2] - pose_a[2])])


def range_bearing(pose_value: np.ndarray, point: np.ndarray) -> np.ndarray:
    dx, dy = point[0] - pose_value[0], point[1] - pose_value[1]
    return np.array([np.hypot(dx, dy), wrap_angle(np.arctan2(dy, dx) - pose_value[2])])


def observed_point(pose_value: np.ndarray, measured: np.ndarray) -> np.ndarray:
    """Landmark position implied by a range-bearing measurement from a pose."""
    heading = pose_value[2] + measured[1]
    return pose_value[:2] + measured[0] * np.array([np.cos(heading), np.sin(heading)])


# ============================================================================
# Measurement models
# ============================================================================


class MeasurementModel:
    """h(x) for a factor over an ordered tuple of variables, with analytic Jacobians."""

    name = "model"

    def dim(self, keys: Sequence[VariableKey]) -> int:
        raise NotImplementedError

    def angular(self, keys: Sequence[VariableKey]) -> tuple[int, ...]:
        """Residual components that are angles and must be wrapped."""
        return ()

    def predict(self, values: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def jacobians(self, values: Sequence[np.ndarray]) -> list[np.ndarray]:
        raise NotImplementedError

    def signature(self) -> tuple:
        return (self.name,)


class PriorModel(MeasurementModel):
    name = "prior"

    def dim(self, keys):
        return keys[0].dim

    def angular(self, keys):
        return (2,) if keys[0].kind == Kind.pose else ()

    def predict(self, values):
        return np.array(values[0], dtype=float)

    def jacobians(self, values):
        return [np.eye(len(values[0]))]


class BetweenModel(MeasurementModel):
    """Relative pose for planar poses, plain difference for other kinds."""

    name = "between"

    def dim(self, keys):
        return keys[0].dim

    def angular(self, keys):
        return (2,) if keys[0].kind == Kind.pose else ()

    def predict(self, values):
        a, b = values
        if len(a) == 3:
            return between(a, b)
        return np.asarray(b, dtype=float) - np.asarray(a, dtype=float)

    def jacobians(self, values):
        a, b = values
        if len(a) != 3:
            eye = np.eye(len(a))
            return [-eye, eye]
        c, s = np.cos(a[2]), np.sin(a[2])
        dx, dy = b[0] - a[0], b[1] - a[1]
        ja = np.array(
            [
                [-c, -s, -s * dx + c * dy],
                [s, -c, -c * dx - s * dy],
                [0.0, 0.0, -1.0],
            ]
        )
        jb = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        return [ja, jb]


class RangeBearingModel(MeasurementModel):
    """Range and bearing from a planar pose to a 2-D landmark."""

    name = "range_bearing"

    def dim(self, keys):
        return 2

    def angular(self, keys):
        return (1,)

    def predict(self, values):
        return range_bearing(values[0], values[1])

    def jacobians(self, values):
        p, l = values
        dx, dy = l[0] - p[0], l[1] - p[1]
        q = dx * dx + dy * dy
        r = np.sqrt(q)
        jp = np.array([[-dx / r, -dy / r, 0.0], [dy / q, -dx / q, -1.0]])
        jl = np.array([[dx / r, dy / r], [-dy / q, dx / q]])
        return [jp, jl]


class LinearModel(MeasurementModel):
    """Affine model h(x) = sum_j H_j x_j."""

    name = "linear"

    def __init__(self, blocks: Sequence[np.ndarray]):
        self.blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]

    def dim(self, keys):
        return self.blocks[0].shape[0]

    def predict(self, values):
        return sum(h @ np.asarray(v, dtype=float) for h, v in zip(self.blocks, values))

    def jacobians(self, values):
        return [h.copy() for h in self.blocks]

    def signature(self):
        return (self.name, tuple(b.tobytes() for b in self.blocks))


PRIOR = PriorModel()
BETWEEN = BetweenModel()
RANGE_BEARING = RangeBearingModel()


# ============================================================================
# Factors
# ============================================================================


def whitening(covariance: np.ndarray, what: str = "noise covariance") -> np.ndarray:
    """Inverse Cholesky factor W of an SPD covariance (W^T W = covariance^-1)."""
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    if covariance.shape[0] != covariance.shape[1]:
        raise DimensionMismatchError(what, "square matrix", covariance.shape)
    c, info = la.lapack.dpotrf(covariance, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(what, info - 1 if info > 0 else None)
    lower = np.tril(c)
    return la.solve_triangular(lower, np.eye(covariance.shape[0]), lower=True)


@dataclass(eq=False)
class GaussianFactor:
    """r = h(X^I) + v with v ~ N(0, covariance); stored with the whitening matrix."""

    keys: tuple[VariableKey, ...]
    model: MeasurementModel
    measured: np.ndarray
    sqrt_information: np.ndarray
    label: str = field(default="")

    @classmethod
    def create(
        cls,
        keys: Sequence[VariableKey],
        model: MeasurementModel,
        measured,
        covariance,
        label: str = "",
    ) -> "GaussianFactor":
        keys = tuple(keys)
        measured = np.atleast_1d(np.asarray(measured, dtype=float))
        dim = model.dim(keys)
        if measured.shape != (dim,):
            raise DimensionMismatchError("measurement", (dim,), measured.shape)
        covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        if covariance.shape != (dim, dim):
            raise DimensionMismatchError("noise covariance", (dim, dim), covariance.shape)
        return cls(keys, model, measured, whitening(covariance), label)

    @property
    def dim(self) -> int:
        return self.measured.shape[0]

    def residual(self, values: Sequence[np.ndarray]) -> np.ndarray:
        """Unwhitened r - h(x), angles wrapped."""
        err = self.measured - self.model.predict(values)
        for i in self.model.angular(self.keys):
            err[i] = wrap_angle(err[i])
        return err

    def linearize(self, values: Sequence[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray]:
        """Whitened Jacobian blocks (one per key) and whitened residual."""
        w = self.sqrt_information
        blocks = [w @ j for j in self.model.jacobians(values)]
        return blocks, w @ self.residual(values)

    def error(self, values: Sequence[np.ndarray]) -> float:
        e = self.sqrt_information @ self.residual(values)
        return float(e @ e)

    def signature(self) -> tuple:
        """Exact identity used to compare factor templates."""
        return (
            self.keys,
            self.model.signature(),
            self.measured.tobytes(),
            self.sqrt_information.tobytes(),
        )


def prior_factor(key: VariableKey, value, covariance, label: str = "") -> GaussianFactor:
    return GaussianFactor.create((key,), PRIOR, value, covariance, label)


def between_factor(a: VariableKey, b: VariableKey, value, covariance, label="") -> GaussianFactor:
    return GaussianFactor.create((a, b), BETWEEN, value, covariance, label)


def range_bearing_factor(
    p: VariableKey, l: VariableKey, value, covariance, label: str = ""
) -> GaussianFactor:
    return GaussianFactor.create((p, l), RANGE_BEARING, value, covariance, label)


# ============================================================================
# Linearization
# ============================================================================


@dataclass
class NoiseWeightedJacobian:
    """Stacked whitened Jacobian A (m x layout.dim), stored sparse."""

    matrix: sp.csr_matrix
    layout: StateLayout
    involved: tuple[VariableKey, ...]

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def columns(self, keys: Sequence[VariableKey]) -> np.ndarray:
        """Dense column block belonging to the given variables."""
        idx = self.layout.indices(keys)
        return self.matrix[:, idx].toarray()

    def split(
        self, new_keys: Sequence[VariableKey]
    ) -> tuple[list[VariableKey], np.ndarray, np.ndarray]:
        """Partition into (old involved keys, A^I, A_new)."""
        new_set = set(new_keys)
        old = [k for k in self.involved if k not in new_set]
        return old, self.columns(old), self.columns(list(new_keys))


def values_for(factor: GaussianFactor, point: np.ndarray, layout: StateLayout) -> list[np.ndarray]:
    return [point[layout.slice(k)] for k in factor.keys]


def linearize_factors(
    factors: Sequence[GaussianFactor],
    point: np.ndarray,
    layout: StateLayout,
) -> tuple[NoiseWeightedJacobian, np.ndarray]:
    """Whitened Jacobian and residual of a factor batch at a linearization point."""
    point = np.asarray(point, dtype=float)
    if point.shape != (layout.dim,):
        raise DimensionMismatchError("linearization point", (layout.dim,), point.shape)

    rows, cols, data = [], [], []
    residuals = []
    involved = unique_keys(*(f.keys for f in factors))
    row = 0
    for factor in factors:
        missing = [k for k in factor.keys if k not in layout]
        if missing:
            raise DimensionMismatchError("factor variables", "keys in layout", missing)
        blocks, res = factor.linearize(values_for(factor, point, layout))
        for key, block in zip(factor.keys, blocks):
            r_idx, c_idx = np.meshgrid(
                np.arange(row, row + factor.dim),
                np.arange(layout.offset(key), layout.offset(key) + key.dim),
                indexing="ij",
            )
            rows.append(r_idx.ravel())
            cols.append(c_idx.ravel())
            data.append(block.ravel())
        residuals.append(res)
        row += factor.dim

    if factors:
        matrix = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(row, layout.dim),
        )
        residual = np.concatenate(residuals)
    else:
        matrix = sp.csr_matrix((0, layout.dim))
        residual = np.zeros(0)
    return NoiseWeightedJacobian(matrix, layout, tuple(involved)), residual


def linearize_blocks(
    factors: Sequence[GaussianFactor],
    values: dict[VariableKey, np.ndarray],
    keys: Sequence[VariableKey],
) -> np.ndarray:
    """Dense whitened Jacobian of a factor batch over an explicit key order.

    Values are looked up per variable, so this works without a full state layout
    (planning increments, relinearized factor subsets).
    """
    local = StateLayout(keys)
    a = np.zeros((sum(f.dim for f in factors), local.dim))
    row = 0
    for factor in factors:
        blocks, _ = factor.linearize([values[k] for k in factor.keys])
        for key, block in zip(factor.keys, blocks):
            a[row : row + factor.dim, local.slice(key)] += block
        row += factor.dim
    return a


@dataclass
class FactorGraph:
    """Factors plus the layout every factor's keys live in."""

    layout: StateLayout
    factors: list[GaussianFactor] = field(default_factory=list)

    def __post_init__(self):
        for factor in self.factors:
            self._check(factor)

    def _check(self, factor: GaussianFactor) -> None:
        missing = [k for k in factor.keys if k not in self.layout]
        if missing:
            raise DimensionMismatchError("factor variables", "keys in layout", missing)

    def add(self, factor: GaussianFactor) -> None:
        self._check(factor)
        self.factors.append(factor)

    def extend(self, new_keys: Sequence[VariableKey], factors: Sequence[GaussianFactor]) -> None:
        self.layout = self.layout.extend(new_keys)
        for factor in factors:
            self.add(factor)

    def touching(self, keys) -> list[int]:
        """Indices of factors involving any of the given variables."""
        keys = set(keys)
        return [i for i, f in enumerate(self.factors) if keys.intersection(f.keys)]
