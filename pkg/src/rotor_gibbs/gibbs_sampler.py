"""Metropolis sampling of finite-volume rotor Gibbs measures and quadrature oracles.

A :class:`LatticeModel` is a general bond graph (periodic torus, open box,
open chain) with energy::

    E(x) = -beta J sum_bonds cos(x_i - x_j) - sum_i (hx_i cos x_i + hy_i sin x_i)
           - sum_i ln(2pi K_t(x_i - y_i))        (optional kernel term)

plus an optional mask of frozen sites that are never updated. The kernel
term is the exact single-site weight of the conditioned model; the field
term alone is its first-harmonic approximation. The chain
kernel is compiled with numba; angles are carried internally in
``(-pi, pi]`` with the odd-symmetric wrap ``x - 2pi rint(x / 2pi)`` so that
a chain started from ``-x`` with negated proposal increments is the exact
mirror image of the chain started from ``x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .circle_kernel import CROSSOVER_TIME, TWO_PI, _fourier_terms, _gauss_terms, log_kernel, wrap_angle
from .errors import UsageError
from .rotor_model import FieldSpec, LatticeShape, XYParams, bond_list

__all__ = [
    "LatticeModel",
    "torus_model",
    "box_model",
    "chain_model",
    "conditioned_model",
    "SamplerConfig",
    "ObservableSeries",
    "metropolis_sweep",
    "run_chain",
    "batch_means_stderr",
    "exact_small_volume",
    "chessboard_check",
    "cube_reflections",
    "random_invariant_function",
    "BadProbeRow",
    "bad_config_probe",
    "write_series",
]

TUNE_INTERVAL = 100
TARGET_ACCEPTANCE = (0.4, 0.6)


@dataclass(frozen=True)
class LatticeModel:
    shape: tuple
    bonds: np.ndarray  # (n_bonds, 2) flat site indices; repeats allowed
    coupling: float  # beta * J
    hx: np.ndarray
    hy: np.ndarray
    frozen: np.ndarray  # bool per site
    stagger: np.ndarray  # +-1 per site, for M_UD
    kernel_t: float = 0.0  # 0 disables the kernel term
    kc: np.ndarray | None = None  # cos y_i of the kernel targets
    ks: np.ndarray | None = None  # sin y_i

    def __post_init__(self):
        n = self.n_sites
        if self.kc is None:
            object.__setattr__(self, "kc", np.zeros(n))
            object.__setattr__(self, "ks", np.zeros(n))
        if self.kernel_t < 0 or not np.isfinite(self.kernel_t):
            raise UsageError(f"kernel time must be finite and >= 0, got {self.kernel_t}")

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen)

    def neighbour_table(self):
        """CSR neighbour lists ``(indptr, indices)``; a repeated bond appears twice."""
        n = self.n_sites
        ends = np.concatenate([self.bonds, self.bonds[:, ::-1]])
        order = np.lexsort((np.arange(len(ends)), ends[:, 0]))
        ends = ends[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, ends[:, 0] + 1, 1)
        return np.cumsum(indptr), ends[:, 1].astype(np.int64).copy()

    def energy(self, config) -> float:
        x = np.asarray(config, dtype=float).ravel()
        if x.size != self.n_sites:
            raise UsageError(f"config has {x.size} sites, model has {self.n_sites}")
        i, j = self.bonds[:, 0], self.bonds[:, 1]
        pair = -self.coupling * float(np.sum(np.cos(x[i] - x[j])))
        return pair + float(np.sum(self.site_energy(x)))

    def site_energy(self, x):
        """Single-site energies ``-(hx cos x + hy sin x) - ln(2pi K_t(x - y))``."""
        out = -(self.hx * np.cos(x) + self.hy * np.sin(x))
        if self.kernel_t > 0:
            c = np.cos(x) * self.kc + np.sin(x) * self.ks
            sn = np.sin(x) * self.kc - np.cos(x) * self.ks
            out = out - (log_kernel(np.arctan2(sn, c), self.kernel_t) + math.log(TWO_PI))
        return out

    def kernel_tables(self):
        """Constants for the compiled kernel term: (t, fourier factors, n images)."""
        t = self.kernel_t
        if t <= 0:
            return 0.0, np.zeros(1), 0
        if t >= CROSSOVER_TIME:
            n = _fourier_terms(t)
            return t, np.exp(-(np.arange(1, n + 1, dtype=float) ** 2) * t), 0
        return t, np.zeros(1), _gauss_terms(t)


def _field_arrays(fields, shape):
    if fields is None:
        return np.zeros(int(np.prod(shape))), np.zeros(int(np.prod(shape)))
    if fields.target.shape != tuple(shape):
        raise UsageError(f"field shape {fields.target.shape} does not match lattice {shape}")
    hx, hy = fields.components()
    return hx.ravel().copy(), hy.ravel().copy()


def _frozen_mask(frozen, shape):
    if frozen is None:
        return np.zeros(int(np.prod(shape)), dtype=bool)
    frozen = np.asarray(frozen, dtype=bool)
    if frozen.shape != tuple(shape):
        raise UsageError(f"frozen mask shape {frozen.shape} does not match lattice {shape}")
    return frozen.ravel().copy()


def _kernel_arrays(kernel, shape):
    """``kernel = (t, targets)`` or None -> (t, cos y, sin y)."""
    if kernel is None:
        return 0.0, None, None
    t, targets = kernel
    targets = np.asarray(targets, dtype=float)
    if targets.shape != tuple(shape):
        raise UsageError(f"kernel target shape {targets.shape} does not match lattice {shape}")
    if not (np.isfinite(t) and t > 0):
        raise UsageError(f"kernel time must be finite and > 0, got {t}")
    c, s = FieldSpec.uniform(targets, 1.0).components()
    return float(t), c.ravel().copy(), s.ravel().copy()


def torus_model(side: int, params: XYParams, fields: FieldSpec | None = None, frozen=None,
                kernel=None) -> LatticeModel:
    """Periodic ``side x side`` torus; ``kernel=(t, targets)`` adds ``-ln 2pi K_t(x - y)`` per site."""
    shape = LatticeShape(side)
    hx, hy = _field_arrays(fields, (side, side))
    kt, kc, ks = _kernel_arrays(kernel, (side, side))
    return LatticeModel((side, side), bond_list(side), params.coupling, hx, hy,
                        _frozen_mask(frozen, (side, side)), np.where(shape.parity().ravel() == 0, 1.0, -1.0),
                        kt, kc, ks)


def box_model(side: int, params: XYParams, fields: FieldSpec | None = None, frozen=None,
              kernel=None) -> LatticeModel:
    """``side x side`` box with free (open) boundary bonds."""
    shape = LatticeShape(side)
    idx = np.arange(side * side).reshape(side, side)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    hx, hy = _field_arrays(fields, (side, side))
    kt, kc, ks = _kernel_arrays(kernel, (side, side))
    return LatticeModel((side, side), np.concatenate([right, down]), params.coupling, hx, hy,
                        _frozen_mask(frozen, (side, side)), np.where(shape.parity().ravel() == 0, 1.0, -1.0),
                        kt, kc, ks)


def conditioned_model(p, side: int, form: str = "exact", geometry: str = "torus", frozen=None) -> LatticeModel:
    """Time-zero layer conditioned on the alternating target, as a sampler model.

    ``form="exact"`` uses the full kernel weight, ``"field_approx"`` the
    aligning field ``h(t) cos(x_i - y_i)``.
    """
    from .conditioned_model import make_yspec, yspec_fields

    build = {"torus": torus_model, "box": box_model}.get(geometry)
    if build is None:
        raise UsageError(f"unknown geometry {geometry!r}")
    if form == "exact":
        return build(side, p.xy_params(), None, frozen, kernel=(p.t, make_yspec(side)))
    if form == "field_approx":
        return build(side, p.xy_params(), yspec_fields(p, side), frozen)
    raise UsageError(f"unknown form {form!r}; expected 'exact' or 'field_approx'")


def chain_model(n: int, params: XYParams, fields: FieldSpec | None = None, periodic: bool = False) -> LatticeModel:
    """Open (or periodic) chain of ``n`` rotors; fields indexed by chain position."""
    if n < 1:
        raise UsageError(f"chain needs at least one site, got {n}")
    bonds = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 2:
        bonds.append((n - 1, 0))
    bonds = np.array(bonds, dtype=np.int64).reshape(-1, 2)
    hx, hy = _field_arrays(fields, (n,))
    return LatticeModel((n,), bonds, params.coupling, hx, hy, np.zeros(n, dtype=bool),
                        np.where(np.arange(n) % 2 == 0, 1.0, -1.0))


@dataclass(frozen=True)
class SamplerConfig:
    sweeps: int  # total, burn-in included
    burn_in: int = 0
    proposal_width: float = 1.0
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        for name in ("sweeps", "burn_in", "thin", "seed"):
            v = getattr(self, name)
            if int(v) != v:
                raise UsageError(f"{name} must be an integer, got {v!r}")
        if self.burn_in < 0 or self.sweeps < self.burn_in:
            raise UsageError(f"need sweeps >= burn_in >= 0, got sweeps={self.sweeps}, burn_in={self.burn_in}")
        if not (0 < self.proposal_width <= np.pi):
            raise UsageError(f"proposal_width must lie in (0, pi], got {self.proposal_width}")
        if self.thin < 1:
            raise UsageError(f"thin must be >= 1, got {self.thin}")
        if not 0 <= self.seed < 2**64:
            raise UsageError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass
class ObservableSeries:
    sweep: np.ndarray
    m_lr: np.ndarray
    m_ud: np.ndarray
    energy: np.ndarray
    acc: np.ndarray
    probe: np.ndarray | None = None  # sin(x) at the probe site, if requested
    width: float = 0.0  # proposal width after tuning
    burn_in_m_lr: tuple = (math.nan, math.nan)  # (min, max) of M_LR during burn-in
    final: np.ndarray | None = field(default=None, repr=False)
    snapshots: list = field(default_factory=list, repr=False)  # (sweep, config)

    def __len__(self):
        return len(self.sweep)


@numba.njit(cache=True)
def _wrap_pm(v):
    return v - 2.0 * math.pi * np.rint(v / (2.0 * math.pi))


@numba.njit(cache=True)
def _log_2pi_kernel(c, s, t, fac, n_img):
    """``ln(2pi K_t)`` at the angle with cosine ``c`` and sine ``s``.

    Fourier branch (``fac`` holds exp(-n^2 t)) via the Chebyshev recurrence,
    image branch via a log-sum-exp over ``2 n_img + 1`` Gaussians.
    """
    if n_img == 0:
        tail = 0.0
        prev, cur = 1.0, c
        for n in range(fac.shape[0]):
            tail += fac[n] * cur
            prev, cur = cur, 2.0 * c * cur - prev
        return math.log1p(2.0 * tail)
    d = math.atan2(abs(s), c)
    top = -(d * d) / (4.0 * t)
    acc = 0.0
    for n in range(-n_img, n_img + 1):
        u = d - 2.0 * math.pi * n
        acc += math.exp(-(u * u) / (4.0 * t) - top)
    return top + math.log(acc) + math.log(2.0 * math.pi) - 0.5 * math.log(4.0 * math.pi * t)


@numba.njit(cache=True)
def _site(xv, i, hx, hy, kt, kc, ks, fac, n_img):
    cx = math.cos(xv)
    sx = math.sin(xv)
    e = -(hx[i] * cx + hy[i] * sx)
    if kt > 0.0:
        e -= _log_2pi_kernel(cx * kc[i] + sx * ks[i], sx * kc[i] - cx * ks[i], kt, fac, n_img)
    return e


@numba.njit(cache=True)
def _energy(x, indptr, indices, k, hx, hy, kt, kc, ks, fac, n_img):
    pair = 0.0
    single = 0.0
    for i in range(x.shape[0]):
        for p in range(indptr[i], indptr[i + 1]):
            pair += math.cos(x[i] - x[indices[p]])
        single += _site(x[i], i, hx, hy, kt, kc, ks, fac, n_img)
    return -0.5 * k * pair + single


@numba.njit(cache=True)
def _sweeps(x, indptr, indices, k, hx, hy, kt, kc, ks, fac, n_img, active, stagger, incr, acc_u,
            record, probe, acc_out, mlr_out, mud_out, e_out, probe_out):
    n_active = active.shape[0]
    n = x.shape[0]
    for s in range(incr.shape[0]):
        accepted = 0
        for a in range(n_active):
            i = active[a]
            old = x[i]
            new = _wrap_pm(old + incr[s, a])
            de = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                xj = x[indices[p]]
                de -= k * (math.cos(new - xj) - math.cos(old - xj))
            de += _site(new, i, hx, hy, kt, kc, ks, fac, n_img) - _site(old, i, hx, hy, kt, kc, ks, fac, n_img)
            if de <= 0.0 or acc_u[s, a] < math.exp(-de):
                x[i] = new
                accepted += 1
        acc_out[s] = accepted / n_active if n_active > 0 else 1.0
        if record[s]:
            slr = 0.0
            sud = 0.0
            for i in range(n):
                slr += math.sin(x[i])
                sud += stagger[i] * math.cos(x[i])
            mlr_out[s] = slr / n
            mud_out[s] = sud / n
            e_out[s] = _energy(x, indptr, indices, k, hx, hy, kt, kc, ks, fac, n_img)
            if probe >= 0:
                probe_out[s] = math.sin(x[probe])


def _check_config(config, model):
    x = np.asarray(config, dtype=float)
    if x.shape != tuple(model.shape):
        raise UsageError(f"config shape {x.shape} does not match model {model.shape}")
    return x


def _run_block(x, model, table, width, sign, rng, n, record, probe=-1):
    active = model.active
    u = rng.random((n, 2, active.size))
    incr = sign * (width * (2.0 * u[:, 0] - 1.0))
    acc = np.empty(n)
    mlr, mud, e, pr = np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    kt, fac, n_img = model.kernel_tables()
    _sweeps(x, table[0], table[1], model.coupling, model.hx, model.hy, kt, model.kc, model.ks, fac, n_img,
            active, model.stagger,
            np.ascontiguousarray(incr), np.ascontiguousarray(u[:, 1]), record, probe, acc, mlr, mud, e, pr)
    return acc, mlr, mud, e, pr


def metropolis_sweep(config, model: LatticeModel, width: float, rng):
    """One row-major sweep of single-site Metropolis updates.

    Proposal ``x_i + Uniform(-width, width)``, acceptance ``min(1, exp(-dE))``.
    Returns ``(new_config, accepted_fraction)``; the input is not modified.
    """
    x = _check_config(config, model)
    state = _wrap_pm(x.ravel().copy())
    acc, *_ = _run_block(state, model, model.neighbour_table(), width, 1.0, rng, 1, np.zeros(1, dtype=np.bool_))
    return wrap_angle(state).reshape(model.shape), float(acc[0])


def run_chain(initial, model: LatticeModel, cfg: SamplerConfig, mirror: bool = False,
              probe_site: int | None = None, snapshot_every: int = 0) -> ObservableSeries:
    """Run a Metropolis chain and record observables after burn-in.

    The proposal width is tuned during burn-in (every 100 sweeps, towards
    40-60% acceptance) and frozen afterwards. Every ``thin``-th sweep after
    burn-in is recorded: ``M_LR = mean sin x``, ``M_UD = mean (+-1) cos x``,
    the energy and that sweep's acceptance fraction.

    ``mirror=True`` runs the chain from the reflected start ``-x`` with
    every proposal increment negated. With a reflection-symmetric model the
    recorded ``M_LR`` series is then exactly the negation of the unmirrored
    one. ``snapshot_every > 0`` keeps a copy of the configuration every
    that many sweeps after burn-in.
    """
    x0 = _check_config(initial, model)
    state = _wrap_pm(x0.ravel().copy())
    sign = 1.0
    if mirror:
        state = -state
        sign = -1.0
    probe = -1 if probe_site is None else int(probe_site)
    if not -1 <= probe < model.n_sites:
        raise UsageError(f"probe site {probe_site} out of range")
    rng = np.random.default_rng(cfg.seed)
    table = model.neighbour_table()
    width = cfg.proposal_width

    lo, hi = math.inf, -math.inf
    done = 0
    while done < cfg.burn_in:
        n = min(TUNE_INTERVAL, cfg.burn_in - done)
        acc, mlr, *_ = _run_block(state, model, table, width, sign, rng, n, np.ones(n, dtype=np.bool_))
        lo, hi = min(lo, float(mlr.min())), max(hi, float(mlr.max()))
        rate = float(acc.mean())
        if n == TUNE_INTERVAL:
            if rate > TARGET_ACCEPTANCE[1]:
                width = min(width * 1.25, np.pi)
            elif rate < TARGET_ACCEPTANCE[0]:
                width = width * 0.8
        done += n

    n_rec = cfg.sweeps - cfg.burn_in
    parts = []
    snaps = []
    block = TUNE_INTERVAL * 10
    if snapshot_every > 0:
        block = min(block, snapshot_every)
    done = 0
    while done < n_rec:
        n = min(block, n_rec - done)
        if snapshot_every > 0:
            n = min(n, snapshot_every - done % snapshot_every)
        steps = cfg.burn_in + done + 1 + np.arange(n)
        record = ((steps - cfg.burn_in) % cfg.thin == 0)
        acc, mlr, mud, e, pr = _run_block(state, model, table, width, sign, rng, n, record, probe)
        parts.append((steps[record], mlr[record], mud[record], e[record], acc[record], pr[record]))
        done += n
        if snapshot_every > 0 and done % snapshot_every == 0:
            snaps.append((cfg.burn_in + done, wrap_angle(state.copy()).reshape(model.shape)))

    def cat(k):
        return np.concatenate([p[k] for p in parts]) if parts else np.empty(0)

    sweep = cat(0).astype(np.int64) if parts else np.empty(0, dtype=np.int64)
    return ObservableSeries(
        sweep=sweep, m_lr=cat(1), m_ud=cat(2), energy=cat(3), acc=cat(4),
        probe=cat(5) if probe >= 0 else None, width=width, burn_in_m_lr=(lo, hi),
        final=wrap_angle(state.copy()).reshape(model.shape), snapshots=snaps,
    )


def batch_means_stderr(values, n_batches: int = 32) -> float:
    """Standard error of the mean from non-overlapping batch means."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return math.nan
    nb = min(n_batches, v.size)
    size = v.size // nb
    means = v[: nb * size].reshape(nb, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(nb))


def write_series(path, series: ObservableSeries, meta: dict) -> None:
    """CSV ``sweep,M_LR,M_UD,energy,acc`` plus a ``.json`` sidecar with ``meta``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("sweep,M_LR,M_UD,energy,acc\n")
        for row in zip(series.sweep, series.m_lr, series.m_ud, series.energy, series.acc):
            fh.write(f"{int(row[0])},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},{row[4]:.17g}\n")
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# --- quadrature ------------------------------------------------------------

MAX_QUADRATURE_POINTS = 64**4


def _site_energy_one(model, s, a):
    e = -(model.hx[s] * np.cos(a) + model.hy[s] * np.sin(a))
    if model.kernel_t > 0:
        c = np.cos(a) * model.kc[s] + np.sin(a) * model.ks[s]
        sn = np.sin(a) * model.kc[s] - np.cos(a) * model.ks[s]
        e = e - (log_kernel(np.arctan2(sn, c), model.kernel_t) + math.log(TWO_PI))
    return e


def _quadrature(model: LatticeModel, n_grid: int, frozen_values=None):
    """Midpoint nodes per free site; returns (angles per site, normalized weights, log Z)."""
    if model.n_sites > 4:
        raise UsageError(f"exact quadrature supports at most 4 sites, model has {model.n_sites}")
    if n_grid < 1 or n_grid ** int(np.sum(~model.frozen)) > MAX_QUADRATURE_POINTS:
        raise UsageError(f"n_grid={n_grid} too large: cost n_grid^sites exceeds {MAX_QUADRATURE_POINTS}")
    nodes = (np.arange(n_grid) + 0.5) * (TWO_PI / n_grid)
    free = np.flatnonzero(~model.frozen)
    dims = len(free)
    fv = np.zeros(model.n_sites) if frozen_values is None else np.asarray(frozen_values, dtype=float).ravel()
    angles = []
    for s in range(model.n_sites):
        if model.frozen[s]:
            angles.append(np.full((1,) * dims, fv[s]))
        else:
            shp = [1] * dims
            shp[int(np.flatnonzero(free == s)[0])] = n_grid
            angles.append(nodes.reshape(shp))
    E = np.zeros((n_grid,) * dims)
    for i, j in model.bonds:
        E = E - model.coupling * np.cos(angles[i] - angles[j])
    for s in range(model.n_sites):
        E = E + _site_energy_one(model, s, angles[s])
    e0 = float(E.min())
    w = np.exp(-(E - e0))
    total = float(w.sum())
    log_z = math.log(total) - e0 + dims * math.log(TWO_PI / n_grid)
    return angles, w / total, log_z


@dataclass
class QuadratureTable:
    Z: float
    log_Z: float
    sin: np.ndarray
    cos: np.ndarray
    cos_diff: np.ndarray  # cos_diff[i, j] = <cos(x_i - x_j)>


def exact_small_volume(model: LatticeModel, n_grid: int, frozen_values=None) -> QuadratureTable:
    """Tensor-product midpoint quadrature of ``<f> = int f e^{-E} / Z`` on <= 4 sites."""
    angles, w, log_z = _quadrature(model, n_grid, frozen_values)
    n = model.n_sites

    def mean(f):
        return float(np.sum(w * f))

    sin = np.array([mean(np.sin(angles[i])) for i in range(n)])
    cos = np.array([mean(np.cos(angles[i])) for i in range(n)])
    cd = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            cd[i, j] = cd[j, i] = mean(np.cos(angles[i] - angles[j]))
    return QuadratureTable(math.exp(log_z) if log_z < 700 else math.inf, log_z, sin, cos, cd)


# --- chessboard estimate on the 2 x 2 torus ---------------------------------

def cube_reflections(v):
    """Images of corner angles ``(a, b, c, d)`` = (r,c), (r,c+1), (r+1,c), (r+1,c+1)
    under the two reflections of the elementary cube."""
    a, b, c, d = v
    return (b, a, d, c), (c, d, a, b)


def _plaquette_args(angles, dual_site, side=2):
    r, c = divmod(dual_site, side)
    r1, c1 = (r + 1) % side, (c + 1) % side
    return tuple(angles[rr * side + cc] for rr, cc in ((r, c), (r, c1), (r1, c), (r1, c1)))


def _check_invariant(f, rng, n_points=100, tol=1e-9):
    for _ in range(n_points):
        v = tuple(rng.uniform(0, TWO_PI, 4))
        base = float(f(*v))
        if base < -tol:
            raise UsageError(f"chessboard function is negative ({base:.3g}) at {v}")
        for img in cube_reflections(v):
            if abs(float(f(*img)) - base) > tol * max(1.0, abs(base)):
                raise UsageError(f"chessboard function is not reflection invariant at {v}")


def chessboard_check(f_set, model: LatticeModel, n_grid: int = 16, seed: int = 0):
    """Chessboard estimate on the 2 x 2 torus by full quadrature.

    ``f_set`` holds one nonnegative, cube-reflection-invariant function of
    four corner angles per dual site (four in total). Returns
    ``(lhs, rhs, holds)`` with ``lhs = <prod_a f_a(x_a)>``,
    ``rhs = prod_a <prod_b f_a(x_b)>^(1/4)`` and ``holds = lhs <= rhs + 1e-9``.
    """
    if model.shape != (2, 2) or not np.array_equal(model.bonds, bond_list(2)):
        raise UsageError("chessboard_check needs a model on the 2 x 2 torus")
    if len(f_set) != 4:
        raise UsageError(f"need one function per dual site (4), got {len(f_set)}")
    rng = np.random.default_rng(seed)
    for f in f_set:
        _check_invariant(f, rng)
    angles, w, _ = _quadrature(model, n_grid)
    n_dual = 4
    lhs_f = np.ones(w.shape)
    for a, f in enumerate(f_set):
        lhs_f = lhs_f * f(*_plaquette_args(angles, a))
    lhs = float(np.sum(w * lhs_f))
    rhs = 1.0
    for f in f_set:
        prod = np.ones(w.shape)
        for b in range(n_dual):
            prod = prod * f(*_plaquette_args(angles, b))
        rhs *= float(np.sum(w * prod)) ** (1.0 / n_dual)
    return lhs, rhs, bool(lhs <= rhs + 1e-9)


def random_invariant_function(rng, degree: int = 2, n_terms: int = 6):
    """Random positive trigonometric polynomial of four angles, symmetrized
    over the cube reflections. Shifted by the sum of |coefficients| plus 0.1."""
    freqs = rng.integers(-degree, degree + 1, size=(n_terms, 4))
    coef = rng.normal(size=n_terms)
    phase = rng.uniform(0, TWO_PI, size=n_terms)
    shift = float(np.sum(np.abs(coef))) + 0.1

    def g(a, b, c, d):
        out = 0.0
        for k in range(n_terms):
            n1, n2, n3, n4 = freqs[k]
            out = out + coef[k] * np.cos(n1 * a + n2 * b + n3 * c + n4 * d + phase[k])
        return out

    def f(a, b, c, d):
        return shift + 0.25 * (g(a, b, c, d) + g(b, a, d, c) + g(c, d, a, b) + g(d, c, b, a))

    return f


# --- bad-configuration probe -------------------------------------------------

@dataclass
class BadProbeRow:
    L: int
    mean_xi: float
    stderr_xi: float
    mean_eta: float
    stderr_eta: float

    @property
    def gap(self) -> float:
        return abs(self.mean_xi - self.mean_eta)

    @property
    def stderr(self) -> float:
        return math.hypot(self.stderr_xi, self.stderr_eta)

    def as_dict(self):
        d = asdict(self)
        d.update(gap=self.gap, stderr=self.stderr)
        return d


def bad_config_probe(L_list, p, outer_pair=(np.pi / 2, 3 * np.pi / 2), sampler_config: SamplerConfig | None = None,
                     form: str = "exact"):
    """Boundary sensitivity of ``<sin x_0>`` in the conditioned model.

    For each ``L`` the ``L x L`` box carries the alternating target fields;
    its outer ring is frozen to the angle ``xi`` (then ``eta``) and the bulk
    starts at the ring value. ``x_0`` is the site ``(L/2, L/2)``. The ``eta``
    run uses seed + 1. ``form`` selects the exact kernel weight or the
    field approximation.
    """
    cfg = sampler_config or SamplerConfig(sweeps=2000, burn_in=500, proposal_width=0.5, seed=0)
    rows = []
    for L in L_list:
        shape = LatticeShape(L)
        ring = np.ones((L, L), dtype=bool)
        ring[1:-1, 1:-1] = False
        model = conditioned_model(p, shape.side, form, geometry="box", frozen=ring)
        centre = (L // 2) * L + L // 2
        stats = []
        for k, value in enumerate(outer_pair):
            init = np.full((L, L), float(value))
            c = SamplerConfig(cfg.sweeps, cfg.burn_in, cfg.proposal_width, cfg.seed + k, cfg.thin)
            s = run_chain(init, model, c, probe_site=centre)
            stats.append((float(np.mean(s.probe)) if len(s) else math.nan, batch_means_stderr(s.probe)))
        rows.append(BadProbeRow(L, stats[0][0], stats[0][1], stats[1][0], stats[1][1]))
    return rows
