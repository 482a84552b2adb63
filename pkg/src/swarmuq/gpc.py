"""Orthogonal polynomial bases for a scalar random input.

Each basis pairs a polynomial family with the probability law it is
orthogonal against (Legendre with the uniform law on [-1, 1], Hermite
with the standard Gaussian).  Quadrature weights absorb the probability
density, so every discrete integral here is an expectation: sum(w) == 1.

Coefficients follow the normalized convention throughout: projecting a
function f returns c_h = <f, P_h> / ||P_h||^2, so that reconstruction
sum_h c_h P_h(theta) inverts the projection for polynomial inputs and
mean/variance read directly off the coefficients.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, QuadratureInsufficiencyError


class PolynomialFamily(enum.Enum):
    """Supported expansion families; each fixes the law of the random input.

    Further classical pairings (Jacobi/Beta, Laguerre/Gamma, ...) can be
    added by registering a rule in ``_FAMILY_RULES``.
    """

    LEGENDRE = "legendre"  # theta ~ Uniform([-1, 1])
    HERMITE = "hermite"    # theta ~ Normal(0, 1)


def _legendre_quadrature(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    return nodes, weights / 2.0  # absorb the uniform density 1/2


def _hermite_quadrature(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    # Probabilists' convention: weight function exp(-x^2/2).
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    return nodes, weights / np.sqrt(2.0 * np.pi)


def _legendre_values(order: int, theta: np.ndarray) -> np.ndarray:
    """Legendre polynomials P_0..P_order at theta, via the three-term recurrence."""
    theta = np.asarray(theta, dtype=float)
    table = np.empty((order + 1,) + theta.shape)
    table[0] = 1.0
    if order >= 1:
        table[1] = theta
    for h in range(1, order):
        table[h + 1] = ((2 * h + 1) * theta * table[h] - h * table[h - 1]) / (h + 1)
    return table


def _hermite_values(order: int, theta: np.ndarray) -> np.ndarray:
    """Probabilists' Hermite polynomials He_0..He_order at theta."""
    theta = np.asarray(theta, dtype=float)
    table = np.empty((order + 1,) + theta.shape)
    table[0] = 1.0
    if order >= 1:
        table[1] = theta
    for h in range(1, order):
        table[h + 1] = theta * table[h] - h * table[h - 1]
    return table


_FAMILY_RULES = {
    PolynomialFamily.LEGENDRE: (_legendre_quadrature, _legendre_values),
    PolynomialFamily.HERMITE: (_hermite_quadrature, _hermite_values),
}


@dataclass(frozen=True)
class GpcBasis:
    """Orthogonal basis plus the Gauss rule of its probability law.

    Attributes
    ----------
    family : PolynomialFamily
    order : int
        Highest polynomial degree M; the basis has M + 1 modes.
    quad_nodes : ndarray, shape (Q,)
    quad_weights : ndarray, shape (Q,)
        Nonnegative, sum to 1 (they integrate the probability density).
    basis_table : ndarray, shape (M + 1, Q)
        Values P_h(theta_q).
    sq_norms : ndarray, shape (M + 1,)
        Squared norms ||P_h||^2 under the probability law.
    """

    family: PolynomialFamily
    order: int
    quad_nodes: np.ndarray
    quad_weights: np.ndarray
    basis_table: np.ndarray
    sq_norms: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.order + 1

    @property
    def n_nodes(self) -> int:
        return self.quad_nodes.size

    def eval_basis(self, theta) -> np.ndarray:
        """Values of all modes at arbitrary theta, shape (n_modes,) + theta.shape."""
        _, values = _FAMILY_RULES[self.family]
        return values(self.order, np.asarray(theta, dtype=float))

    def projection_matrix(self) -> np.ndarray:
        """Matrix P with P[q, h] = w_q P_h(theta_q) / ||P_h||^2.

        Node samples f(theta_q) are projected to coefficients by f @ P.
        """
        return (self.quad_weights[:, None] * self.basis_table.T) / self.sq_norms[None, :]


def build_basis(
    family: PolynomialFamily,
    order: int,
    quad_points: int | None = None,
) -> GpcBasis:
    """Construct a basis with its Gauss quadrature rule.

    ``quad_points`` defaults to 2 * (order + 1), exact for polynomial
    integrands up to degree 4 * order + 3; it must be at least order + 1
    so that the rule resolves products of any two basis modes.
    """
    if not isinstance(family, PolynomialFamily):
        raise ConfigurationError(f"unsupported polynomial family: {family!r}")
    if order < 0:
        raise ConfigurationError(f"expansion order must be >= 0, got {order}")
    if quad_points is None:
        quad_points = 2 * (order + 1)
    if quad_points < order + 1:
        raise QuadratureInsufficiencyError(
            f"{quad_points} quadrature nodes cannot resolve order {order} "
            f"(need at least {order + 1})"
        )
    rule, values = _FAMILY_RULES[family]
    nodes, weights = rule(quad_points)
    table = values(order, nodes)
    sq_norms = table**2 @ weights
    basis = GpcBasis(
        family=family,
        order=order,
        quad_nodes=nodes,
        quad_weights=weights,
        basis_table=table,
        sq_norms=sq_norms,
    )
    for arr in (basis.quad_nodes, basis.quad_weights, basis.basis_table, basis.sq_norms):
        arr.flags.writeable = False
    return basis


@dataclass(frozen=True)
class TensorBasis2D:
    """Tensorized basis for two independent random inputs.

    Joint modes are ordered with the second index fastest: mode (k, h)
    sits at flat position k * (M2 + 1) + h.  Joint quadrature nodes use
    the same layout over the (Q1 x Q2) grid, so the flattened attributes
    below expose the same interface as :class:`GpcBasis` and downstream
    quadrature code works unchanged.
    """

    basis1: GpcBasis
    basis2: GpcBasis
    quad_weights: np.ndarray = field(init=False)
    basis_table: np.ndarray = field(init=False)
    sq_norms: np.ndarray = field(init=False)
    nodes1: np.ndarray = field(init=False)
    nodes2: np.ndarray = field(init=False)

    def __post_init__(self):
        b1, b2 = self.basis1, self.basis2
        weights = np.kron(b1.quad_weights, b2.quad_weights)
        table = np.kron(b1.basis_table, b2.basis_table)
        sq_norms = np.kron(b1.sq_norms, b2.sq_norms)
        nodes1 = np.repeat(b1.quad_nodes, b2.n_nodes)
        nodes2 = np.tile(b2.quad_nodes, b1.n_nodes)
        for name, arr in (
            ("quad_weights", weights),
            ("basis_table", table),
            ("sq_norms", sq_norms),
            ("nodes1", nodes1),
            ("nodes2", nodes2),
        ):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_modes(self) -> int:
        return self.basis1.n_modes * self.basis2.n_modes

    @property
    def n_nodes(self) -> int:
        return self.basis1.n_nodes * self.basis2.n_nodes

    def mode_index(self, k: int, h: int) -> int:
        return k * self.basis2.n_modes + h

    def eval_basis(self, theta) -> np.ndarray:
        """Joint mode values at theta = (theta1, theta2)."""
        t1, t2 = theta
        v1 = self.basis1.eval_basis(t1)
        v2 = self.basis2.eval_basis(t2)
        return np.kron(v1, v2)

    def projection_matrix(self) -> np.ndarray:
        return (self.quad_weights[:, None] * self.basis_table.T) / self.sq_norms[None, :]


def project(samples_at_nodes, basis) -> np.ndarray:
    """Project node samples onto the basis: c_h = sum_q w_q f_q P_h(q) / ||P_h||^2.

    ``samples_at_nodes`` may carry leading batch axes; the node axis is last.
    """
    samples = np.asarray(samples_at_nodes, dtype=float)
    if samples.shape[-1] != basis.n_nodes:
        raise DimensionMismatchError(
            f"expected {basis.n_nodes} node samples, got {samples.shape[-1]}"
        )
    return samples @ basis.projection_matrix()


def reconstruct_at(coeffs, theta, basis) -> float | np.ndarray:
    """Evaluate the expansion sum_h c_h P_h(theta)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != basis.n_modes:
        raise DimensionMismatchError(
            f"expected {basis.n_modes} coefficients, got {coeffs.shape[-1]}"
        )
    values = basis.eval_basis(theta)
    out = np.tensordot(coeffs, values, axes=(-1, 0))
    return float(out) if np.ndim(out) == 0 else out


def expectation_and_variance(coeffs, basis) -> tuple[float, float]:
    """Mean and variance of the expanded random quantity.

    Orthogonality gives E = c_0 and Var = sum_{h>=1} c_h^2 ||P_h||^2.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != basis.n_modes:
        raise DimensionMismatchError(
            f"expected {basis.n_modes} coefficients, got {coeffs.shape[-1]}"
        )
    mean = float(coeffs[..., 0])
    variance = float(np.sum(coeffs[..., 1:] ** 2 * basis.sq_norms[1:]))
    return mean, variance
