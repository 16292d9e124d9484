"""Time-zero layer of the two-layer rotor model, conditioned on the time-t layer.

Conditioning the time-t spins on ``y`` weights a time-zero configuration by
``exp(-H_xy(x)) prod_i K_t(x_i - y_i)``, so the conditioned energy is::

    exact:        H_xy(x) - sum_i ln(2pi K_t(x_i - y_i))
    field_approx: H_xy(x) - sum_i h(t) cos(x_i - y_i),   h(t) = 2 exp(-t)

The field *aligns* ``x_i`` with ``y_i``. With the alternating target
``yspec`` (0 on even sites, pi on odd sites) the model has two ground
states exchanged by ``x -> 2pi - x``::

    x_ri = pi/2 - (-1)^i eps_t,   x_le = 3pi/2 + (-1)^i eps_t,
    sin(eps_t) = h(t) / (8 beta J)

Per nearest-neighbour pair the energy reduces to the cell function::

    cell(z, y) = -beta J cos(z - y) + h/4 (cos z - cos y)

where ``z`` sits on the sublattice whose target is pi (odd sites here) and
``y`` on the other one. ``parity="odd"`` flips the sign of the field term,
i.e. puts ``z`` on the other sublattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .circle_kernel import TWO_PI, effective_field, log_kernel
from .errors import RegimeError, UsageError
from .rotor_model import FieldSpec, LatticeShape, XYParams, plaquette_energies

__all__ = [
    "ConditionedParams",
    "GroundStatePair",
    "make_yspec",
    "yspec_fields",
    "conditioned_hamiltonian",
    "cell_energy",
    "cell_gradient",
    "cell_hessian",
    "minimize_cell",
    "ground_states",
    "classify_stationary",
]


@dataclass(frozen=True)
class ConditionedParams:
    beta: float
    J: float
    t: float

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.beta, self.J, self.t)):
            raise UsageError("beta, J, t must be finite")
        if self.beta <= 0 or self.J < 0 or self.t <= 0:
            raise UsageError(f"need beta > 0, J >= 0, t > 0; got {self}")

    @property
    def coupling(self) -> float:
        return self.beta * self.J

    @property
    def h(self) -> float:
        return effective_field(self.t)

    @property
    def field_ratio(self) -> float:
        """``h / (8 beta J)``; the closed-form ground states need it below 1."""
        return math.inf if self.coupling == 0 else self.h / (8.0 * self.coupling)

    @property
    def epsilon_t(self) -> float:
        r = self.field_ratio
        if r > 1:
            raise RegimeError(
                f"h/(8 beta J) = {r:.4g} > 1: field dominates coupling; "
                "low-temperature ground-state analysis inapplicable"
            )
        return math.asin(r)

    def xy_params(self) -> XYParams:
        return XYParams(self.beta, self.J)


def make_yspec(shape: LatticeShape | int) -> np.ndarray:
    """Alternating target: 0 where ``r + c`` is even, pi where odd."""
    if not isinstance(shape, LatticeShape):
        shape = LatticeShape(shape)
    return np.where(shape.parity() == 0, 0.0, np.pi)


def yspec_fields(p: ConditionedParams, shape: LatticeShape | int) -> FieldSpec:
    return FieldSpec.uniform(make_yspec(shape), p.h)


def conditioned_hamiltonian(x, y, p: ConditionedParams, form: str = "exact") -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise UsageError(f"shape mismatch: x {x.shape} vs y {y.shape}")
    LatticeShape.of(x)
    pair = -p.coupling * float(
        np.sum(np.cos(x - np.roll(x, -1, axis=1)) + np.cos(x - np.roll(x, -1, axis=0)))
    )
    if form == "exact":
        return pair - float(np.sum(log_kernel(x - y, p.t) + math.log(TWO_PI)))
    if form == "field_approx":
        return pair - p.h * float(np.sum(np.cos(x - y)))
    raise UsageError(f"unknown form {form!r}; expected 'exact' or 'field_approx'")


def _sign(parity):
    if parity not in ("even", "odd"):
        raise UsageError(f"parity must be 'even' or 'odd', got {parity!r}")
    return 1.0 if parity == "even" else -1.0


def cell_energy(z, y, p: ConditionedParams, parity: str = "even"):
    s = _sign(parity)
    return -p.coupling * np.cos(z - y) + s * 0.25 * p.h * (np.cos(z) - np.cos(y))


def cell_gradient(z, y, p: ConditionedParams, parity: str = "even"):
    s = _sign(parity)
    bj, q = p.coupling, 0.25 * p.h
    return np.array([bj * np.sin(z - y) - s * q * np.sin(z), -bj * np.sin(z - y) + s * q * np.sin(y)])


def cell_hessian(z, y, p: ConditionedParams, parity: str = "even"):
    s = _sign(parity)
    bj, q = p.coupling, 0.25 * p.h
    c = np.cos(z - y)
    return np.array([[bj * c - s * q * np.cos(z), -bj * c], [-bj * c, bj * c + s * q * np.cos(y)]])


_DIRECTIONS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)


def _refine(pt, p, tol, max_moves):
    best = float(cell_energy(pt[0], pt[1], p))
    step, moves = 0.01, 0
    while step >= tol and moves < max_moves:
        improved = False
        for d in _DIRECTIONS:
            cand = pt + step * d
            v = float(cell_energy(cand[0], cand[1], p))
            moves += 1
            if v < best:
                pt, best, improved = cand, v, True
                break
        if not improved:
            step *= 0.5
    res = optimize.minimize(
        lambda v: float(cell_energy(v[0], v[1], p)), pt,
        jac=lambda v: cell_gradient(v[0], v[1], p),
        hess=lambda v: cell_hessian(v[0], v[1], p),
        method="trust-exact", options={"gtol": 1e-13},
    )
    if res.fun < best:
        pt, best = res.x, float(res.fun)
    return pt, best


def minimize_cell(p: ConditionedParams, n_grid: int = 400, tol: float = 1e-12, max_moves: int = 20_000,
                  n_starts: int = 16):
    """Brute-force minimum of the cell function.

    Grid search, then compass descent over the coordinate directions and
    the two diagonals (step halved from 0.01 down to ``tol``), then a
    trust-region Newton polish with the analytic gradient and Hessian,
    from each of the ``n_starts`` lowest grid points.
    The polish matters when ``beta J >> h``: the valley is then long,
    narrow and slightly off-diagonal, and compass steps stall in it.
    Returns ``(z, y, value)``.
    """
    g = np.arange(n_grid) * (TWO_PI / n_grid)
    Z, Y = np.meshgrid(g, g, indexing="ij")
    vals = cell_energy(Z, Y, p).ravel()
    # several starts: grid values tie between saddles and the true basin
    starts = np.argsort(vals, kind="stable")[:n_starts]
    best_pt, best = None, math.inf
    for k in starts:
        pt, val = _refine(np.array([Z.flat[k], Y.flat[k]]), p, tol, max_moves)
        if val < best:
            best_pt, best = pt, val
    pt = best_pt
    return float(np.mod(pt[0], TWO_PI)), float(np.mod(pt[1], TWO_PI)), best


@dataclass(frozen=True)
class GroundStatePair:
    x_ri: np.ndarray
    x_le: np.ndarray
    epsilon_t: float
    m: float
    params: ConditionedParams = field(repr=False)
    oracle_epsilon: float | None = None
    oracle_cell_min: float | None = None


def ground_states(p: ConditionedParams, shape: LatticeShape | int, verify: bool = True) -> GroundStatePair:
    """Closed-form ground-state pair and the minimal plaquette energy ``m``.

    With ``verify`` the cell function is minimized by brute force
    (:func:`minimize_cell`) and the closed form is rejected if the search
    finds anything lower.
    """
    if not isinstance(shape, LatticeShape):
        shape = LatticeShape(shape)
    if p.field_ratio >= 1:
        raise RegimeError(
            f"h/(8 beta J) = {p.field_ratio:.4g} >= 1: field dominates coupling; "
            "low-temperature ground-state analysis inapplicable"
        )
    eps = p.epsilon_t
    sign = np.where(shape.parity() == 0, 1.0, -1.0)
    x_ri = np.pi / 2 - sign * eps
    x_le = 3 * np.pi / 2 + sign * eps
    m = float(plaquette_energies(x_ri, p.xy_params(), yspec_fields(p, shape))[0, 0])

    oracle_eps = oracle_min = None
    if verify:
        z, y, oracle_min = minimize_cell(p)
        closed = float(cell_energy(np.pi / 2 + eps, np.pi / 2 - eps, p))
        # the plaquette is half the sum of its four cells: m = 2 * min(cell)
        if oracle_min < closed - 1e-12 * max(1.0, abs(closed)):
            raise AssertionError(
                f"brute-force cell minimum {oracle_min!r} below closed form {closed!r}"
            )
        half = 0.5 * (np.mod(z - y + np.pi, TWO_PI) - np.pi)
        oracle_eps = abs(float(half))
    return GroundStatePair(x_ri, x_le, eps, m, p, oracle_eps, oracle_min)


def classify_stationary(z: float, y: float, p: ConditionedParams, parity: str = "even",
                        grad_tol: float = 1e-8, zero_tol: float = 1e-12) -> str:
    """Classify a stationary point of the cell function by its Hessian."""
    grad = cell_gradient(z, y, p, parity)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > grad_tol:
        raise UsageError(f"({z}, {y}) is not stationary: gradient norm {gnorm:.3g}")
    eig = np.linalg.eigvalsh(cell_hessian(z, y, p, parity))
    if np.any(np.abs(eig) < zero_tol):
        return "degenerate"
    if np.all(eig > 0):
        return "minimum"
    if np.all(eig < 0):
        return "maximum"
    return "saddle"
