"""Interacting rotor diffusions and Girsanov path weights.

Clock convention: every diffusion here has generator ``d^2/dx^2`` per site
(noise ``sqrt(2) dW``), matching the circle kernel ``exp(-n^2 t)``. The
interacting dynamics is::

    dX_i = (-U'(X_i) - beta dH/dx_i) dt + sqrt(2) dW_i,
    H(x) = -J sum_bonds cos(x_i - x_j)

Relative to driftless circle Brownian motion, Girsanov's theorem and Ito's
formula give the path density ``F = exp(-sum_A Phi_A)`` with::

    Phi_A = 1/2 phi_A(X_t) - 1/2 phi_A(X_0)
            - int_0^t [ 1/2 sum_{j in A} d_j^2 phi_A
                        - 1/4 sum_{B u C = A, B n C != 0} sum_{j in B n C} d_j phi_B d_j phi_C ] ds

where ``phi_A = -beta J cos(x_i - x_j)`` for a bond ``A``. Sets ``A`` are
single bonds and unions of two distinct bonds that share a site; the
latter carry only the cross terms of ``|grad H|^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .circle_kernel import TWO_PI, circular_distance, sample_increment, wrap_angle
from .errors import UsageError
from .rotor_model import LatticeShape, bond_list

__all__ = [
    "PathGrid",
    "Trajectory",
    "DriftSpec",
    "integrate_sde",
    "free_path",
    "free_propagate",
    "girsanov_integrand",
    "girsanov_potential",
    "girsanov_potentials",
    "girsanov_log_density",
    "girsanov_density",
    "free_path_batch",
    "reference_log_weight",
    "phibound_constant",
    "phibound_holds",
    "write_trajectory",
]


@dataclass(frozen=True)
class PathGrid:
    t_final: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_final) and self.t_final > 0):
            raise UsageError(f"t_final must be finite and > 0, got {self.t_final!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise UsageError(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def refine(self, factor: int = 2) -> "PathGrid":
        return PathGrid(self.t_final, self.n_steps * factor)


@dataclass
class Trajectory:
    grid: PathGrid
    states: np.ndarray  # (n_steps + 1, L, L)

    def __post_init__(self):
        if self.states.shape[0] != self.grid.n_steps + 1:
            raise UsageError(
                f"expected {self.grid.n_steps + 1} states, got {self.states.shape[0]}"
            )

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def coarsen(self, factor: int) -> "Trajectory":
        """Subsample every ``factor``-th state (same Brownian path, coarser grid)."""
        if self.grid.n_steps % factor:
            raise UsageError(f"{self.grid.n_steps} steps not divisible by {factor}")
        return Trajectory(PathGrid(self.grid.t_final, self.grid.n_steps // factor), self.states[::factor])


@dataclass(frozen=True)
class DriftSpec:
    """Drift of the rotor diffusion.

    ``mode`` is ``"interacting"``, ``"decoupled"`` (site ``site`` runs a free
    Brownian motion and every bond touching it is removed) or ``"free"``.
    ``u_prime`` is the derivative of the single-site potential, or None.
    """

    beta: float = 0.0
    J: float = 1.0
    u_prime: Callable[[np.ndarray], np.ndarray] | None = None
    mode: str = "interacting"
    site: int | None = None

    def __post_init__(self):
        if self.mode not in ("interacting", "decoupled", "free"):
            raise UsageError(f"unknown drift mode {self.mode!r}")
        if self.mode == "decoupled" and self.site is None:
            raise UsageError("decoupled mode needs a site index")
        if self.u_prime is not None:
            a, b = self.u_prime(np.array([0.0]))[0], self.u_prime(np.array([2 * np.pi - 1e-9]))[0]
            if abs(a - b) > 1e-6 * max(1.0, abs(a)):
                raise UsageError("u_prime must be 2pi-periodic")


def _xy_force(x, coupling, keep=None):
    """``-coupling * sum_{j~i} sin(x_i - x_j)`` on the torus (optionally masking bonds)."""
    fr = np.sin(x - np.roll(x, -1, axis=-1))
    fd = np.sin(x - np.roll(x, -1, axis=-2))
    if keep is not None:
        fr = fr * keep[0]
        fd = fd * keep[1]
    grad = fr - np.roll(fr, 1, axis=-1) + fd - np.roll(fd, 1, axis=-2)
    return -coupling * grad


def _decoupling_masks(L, site):
    r, c = divmod(site, L)
    right = np.ones((L, L))
    down = np.ones((L, L))
    # bonds stored at their left / upper endpoint
    right[r, c] = right[r, (c - 1) % L] = 0.0
    down[r, c] = down[(r - 1) % L, c] = 0.0
    return right, down


def _drift(x, drift: DriftSpec, keep):
    if drift.mode == "free":
        return np.zeros_like(x)
    b = _xy_force(x, drift.beta * drift.J, keep)
    if drift.u_prime is not None:
        b = b - drift.u_prime(x)
    if drift.mode == "decoupled":
        b.reshape(-1)[drift.site] = 0.0
    return b


def integrate_sde(initial, drift: DriftSpec, grid: PathGrid, rng) -> Trajectory:
    """Euler-Maruyama: ``X += b(X) dt + sqrt(2 dt) xi``, wrapped each step."""
    x = wrap_angle(np.array(initial, dtype=float))
    shape = LatticeShape.of(x)
    if grid.dt > 0.01:
        warnings.warn(f"dt = {grid.dt:.3g} > 0.01; Euler-Maruyama bias may be visible", stacklevel=2)
    keep = _decoupling_masks(shape.side, drift.site) if drift.mode == "decoupled" else None
    states = np.empty((grid.n_steps + 1,) + x.shape)
    states[0] = x
    dt, sd = grid.dt, math.sqrt(2.0 * grid.dt)
    for k in range(grid.n_steps):
        b = _drift(x, drift, keep)
        if not np.all(np.isfinite(b)):
            bad = int(np.flatnonzero(~np.isfinite(b))[0])
            raise FloatingPointError(f"non-finite drift at site {bad} (step {k})")
        x = wrap_angle(x + b * dt + sd * rng.standard_normal(x.shape))
        states[k + 1] = x
    return Trajectory(grid, states)


def free_path(initial, grid: PathGrid, rng) -> Trajectory:
    """Exact driftless circle Brownian path sampled on the grid."""
    x0 = wrap_angle(np.array(initial, dtype=float))
    LatticeShape.of(x0)
    steps = rng.normal(0.0, math.sqrt(2.0 * grid.dt), size=(grid.n_steps,) + x0.shape)
    unwrapped = x0 + np.concatenate([np.zeros((1,) + x0.shape), np.cumsum(steps, axis=0)])
    return Trajectory(grid, wrap_angle(unwrapped))


def free_propagate(initial, t: float, rng) -> np.ndarray:
    """Exact infinite-temperature evolution over time ``t``: independent kernel increments."""
    x0 = np.asarray(initial, dtype=float)
    if t == 0:
        return wrap_angle(x0.copy())
    return wrap_angle(x0 + sample_increment(t, rng, size=x0.shape))


def _check_pair(A, L):
    try:
        i, j = (int(s) for s in A)
    except (TypeError, ValueError):
        raise UsageError(f"A must be a pair of site indices, got {A!r}") from None
    ri, ci = divmod(i, L)
    rj, cj = divmod(j, L)
    dr, dc = (ri - rj) % L, (ci - cj) % L
    adjacent = (dr == 0 and dc in (1, L - 1)) or (dc == 0 and dr in (1, L - 1))
    if not (0 <= i < L * L and 0 <= j < L * L) or not adjacent:
        raise UsageError(f"{A!r} is not a nearest-neighbour pair on the L={L} torus")
    return i, j


def girsanov_integrand(x, A, u_prime, beta: float, J: float) -> float:
    """Bond contribution ``g_A`` to the log path density of the interacting
    dynamics relative to the ``U``-only dynamics (time integrand)::

        g_A = beta/2 sum_{i in A} (d_i^2 phi_A - U'(x_i) d_i phi_A)
              - beta^2/4 sum_{i in A} (d_i phi_A)^2,   phi_A = -J cos(x_i - x_j)
    """
    x = np.asarray(x, dtype=float)
    L = LatticeShape.of(x).side
    i, j = _check_pair(A, L)
    xi, xj = x.flat[i], x.flat[j]
    s, c = math.sin(xi - xj), math.cos(xi - xj)
    d_i, d_j = J * s, -J * s
    dd = J * c
    up_i = float(u_prime(np.array([xi]))[0]) if u_prime is not None else 0.0
    up_j = float(u_prime(np.array([xj]))[0]) if u_prime is not None else 0.0
    first = (dd - up_i * d_i) + (dd - up_j * d_j)
    return 0.5 * beta * first - 0.25 * beta**2 * (d_i**2 + d_j**2)


def _trapezoid(values, dt):
    return dt * (0.5 * values[0] + np.sum(values[1:-1], axis=0) + 0.5 * values[-1])


def girsanov_potential(A, traj: Trajectory, beta: float, J: float) -> float:
    """``Phi_A`` for a single bond ``A``, time integral by the trapezoid rule."""
    states = traj.states
    L = states.shape[-1]
    i, j = _check_pair(A, L)
    flat = states.reshape(states.shape[0], -1)
    d = flat[:, i] - flat[:, j]
    k = beta * J
    phi = -k * np.cos(d)
    integrand = 0.5 * 2.0 * k * np.cos(d) - 0.25 * 2.0 * (k * np.sin(d)) ** 2
    return 0.5 * (phi[-1] - phi[0]) - _trapezoid(integrand, traj.grid.dt)


def _flat(states):
    L = states.shape[-1]
    return states.reshape(states.shape[:-2] + (L * L,))


def girsanov_potentials(traj: Trajectory, beta: float, J: float) -> dict:
    """All nonzero ``Phi_A`` keyed by bond index ``(b,)`` or bond pair ``(b1, b2)``.

    Bonds are numbered as in :func:`rotor_model.bond_list`. ``traj.states``
    may carry extra batch axes between time and lattice axes, in which case
    every value is an array over the batch.
    """
    L = traj.states.shape[-1]
    bonds = bond_list(L)
    flat = _flat(traj.states)
    k = beta * J
    dt = traj.grid.dt
    out = {}
    grads = {}
    for b, (i, j) in enumerate(bonds):
        d = flat[..., i] - flat[..., j]
        phi = -k * np.cos(d)
        integrand = k * np.cos(d) - 0.5 * (k * np.sin(d)) ** 2
        out[(b,)] = 0.5 * (phi[-1] - phi[0]) - _trapezoid(integrand, dt)
        grads[(b, i)] = k * np.sin(d)
        grads[(b, j)] = -k * np.sin(d)
    for b1 in range(len(bonds)):
        for b2 in range(b1 + 1, len(bonds)):
            shared = set(bonds[b1]) & set(bonds[b2])
            if not shared:
                continue
            cross = sum(grads[(b1, s)] * grads[(b2, s)] for s in shared)
            # ordered pairs (B, C) and (C, B): -1/4 * 2 = -1/2
            out[(b1, b2)] = 0.5 * _trapezoid(cross, dt)
    return out


def _log_density_states(states, dt, k):
    """``-sum_A Phi_A`` from time-major states ``(T+1, ..., L, L)``."""
    cb = (np.cos(states - np.roll(states, -1, axis=-1)) + np.cos(states - np.roll(states, -1, axis=-2))).sum(axis=(-2, -1))
    energy = -k * cb
    lap = 2.0 * k * cb
    grad2 = (_xy_force(states, k) ** 2).sum(axis=(-2, -1))
    return -0.5 * (energy[-1] - energy[0]) + _trapezoid(0.5 * lap - 0.25 * grad2, dt)


def girsanov_log_density(traj: Trajectory, beta: float, J: float):
    """``-sum_A Phi_A`` evaluated through the site-gradient form::

        -1/2 (H(X_t) - H(X_0)) + int [1/2 Lap H - 1/4 |grad H|^2] ds

    Returns a float, or an array over the batch axes of ``traj.states``.
    """
    k = beta * J
    if k == 0:
        batch = traj.states.shape[1:-2]
        return np.zeros(batch) if batch else 0.0
    out = _log_density_states(traj.states, traj.grid.dt, k)
    return out if np.ndim(out) else float(out)


def girsanov_density(traj: Trajectory, beta: float, J: float):
    """Path density ``F^t = exp(-sum_A Phi_A)`` of the interacting XY
    dynamics (``U = 0``) w.r.t. free circle Brownian motion.

    ``traj`` must be a free path; then ``E[F^t] = 1``. Computed in log
    space and exponentiated once.
    """
    if beta * J == 0:
        batch = traj.states.shape[1:-2]
        return np.ones(batch) if batch else 1.0
    return np.exp(girsanov_log_density(traj, beta, J))


def free_path_batch(seeds, side: int, grid: PathGrid) -> Trajectory:
    """Free paths with uniform initial law, one rng stream per path.

    Path ``p`` uses ``default_rng(seeds[p])`` for its initial condition and
    its increments, so a path does not depend on the batch it is in.
    States are time-major: ``(n_steps + 1, n_paths, L, L)``.
    """
    LatticeShape(side)
    n = len(seeds)
    states = np.empty((grid.n_steps + 1, n, side, side))
    sd = math.sqrt(2.0 * grid.dt)
    for p, seed in enumerate(seeds):
        rng = np.random.default_rng(int(seed))
        x0 = rng.uniform(0.0, TWO_PI, size=(side, side))
        steps = rng.normal(0.0, sd, size=(grid.n_steps, side, side))
        states[0, p] = x0
        states[1:, p] = x0 + np.cumsum(steps, axis=0)
    return Trajectory(grid, wrap_angle(states))


def reference_log_weight(traj: Trajectory, beta: float, J: float, u_prime):
    """Log density of the interacting dynamics w.r.t. the ``U``-only dynamics::

        -beta/2 (H(X_t) - H(X_0)) + int sum_A g_A ds,   H = -J sum cos

    ``traj`` should be a path (or time-major batch) of the ``U``-only dynamics.
    """
    x = traj.states
    cb = (np.cos(x - np.roll(x, -1, axis=-1)) + np.cos(x - np.roll(x, -1, axis=-2))).sum(axis=(-2, -1))
    H = -J * cb
    grad = -_xy_force(x, J)
    lap = 2.0 * J * cb
    up = u_prime(x) if u_prime is not None else 0.0
    g = 0.5 * beta * (lap - (up * grad).sum(axis=(-2, -1))) - 0.25 * beta**2 * (grad**2).sum(axis=(-2, -1))
    out = -0.5 * beta * (H[-1] - H[0]) + _trapezoid(g, traj.grid.dt)
    return out if np.ndim(out) else float(out)


def phibound_constant(beta: float, J: float) -> float:
    """Constant ``C`` with ``|Phi_A| <= C (t + sup_{j in A} |X_j(t) - X_j(0)|)``.

    For a bond: ``sup|phi''| |A| + 1/4 sup|phi'|^2 * 2 = 2 k + k^2/2`` bounds
    the time integrand and ``sup|phi'| = k`` the endpoint term; bond pairs
    sharing one or two sites contribute at most ``k^2 / 2`` resp. ``k^2``.
    """
    k = beta * J
    return max(2 * k + 0.5 * k * k, k, k * k)


def phibound_holds(traj: Trajectory, beta: float, J: float, potentials: dict | None = None):
    """Check ``|Phi_A| <= C (t + sup_{j in A} d(X_j(t), X_j(0)))`` for every set ``A``.

    Returns a bool, or a boolean array over the batch axes of ``traj.states``.
    """
    if potentials is None:
        potentials = girsanov_potentials(traj, beta, J)
    L = traj.states.shape[-1]
    bonds = bond_list(L)
    C = phibound_constant(beta, J)
    disp = _flat(circular_distance(traj.final, traj.initial))
    t = traj.grid.t_final
    ok = np.ones(traj.states.shape[1:-2], dtype=bool)
    for key, value in potentials.items():
        sites = sorted({int(s) for b in key for s in bonds[b]})
        bound = C * (t + disp[..., sites].max(axis=-1))
        ok &= np.abs(value) <= bound
    return ok if ok.ndim else bool(ok)


def write_trajectory(path, traj: Trajectory) -> None:
    """Debug dump: one ``step site angle`` line per entry."""
    flat = traj.states.reshape(traj.states.shape[0], -1)
    with open(path, "w") as fh:
        for k, row in enumerate(flat):
            for s, v in enumerate(row):
                fh.write(f"{k} {s} {v:.17g}\n")
