"""Planar rotors on an even periodic square lattice.

Configurations are ``(L, L)`` float arrays of angles in ``[0, 2pi)``; site
``(r, c)`` has row-major index ``r * L + c`` and parity ``(r + c) % 2``.
Bonds are the ``2 L^2`` (site, right neighbour) and (site, down neighbour)
pairs of the torus. For ``L = 2`` this is a multigraph: every adjacent pair
is joined by two bonds, and every function here counts both.

The Hamiltonian is::

    H(x) = -beta J sum_bonds cos(x_i - x_j) - sum_i h_i cos(x_i - y_i)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circle_kernel import TWO_PI, wrap_angle
from .errors import UsageError

__all__ = [
    "LatticeShape",
    "XYParams",
    "FieldSpec",
    "bond_list",
    "energy_total",
    "energy_delta",
    "dobrushin_sum",
    "plaquette_energy",
    "plaquette_energies",
    "plaquette_corners",
    "reflect",
    "rotate",
    "write_config",
    "read_config",
]


@dataclass(frozen=True)
class LatticeShape:
    side: int

    def __post_init__(self):
        if int(self.side) != self.side or self.side < 2 or self.side % 2:
            raise UsageError(f"lattice side must be an even integer >= 2, got {self.side!r}")

    @property
    def n_sites(self) -> int:
        return self.side * self.side

    def parity(self) -> np.ndarray:
        r, c = np.indices((self.side, self.side))
        return (r + c) % 2

    @classmethod
    def of(cls, config) -> "LatticeShape":
        config = np.asarray(config)
        if config.ndim != 2 or config.shape[0] != config.shape[1]:
            raise UsageError(f"configuration must be a square 2-d array, got shape {config.shape}")
        return cls(config.shape[0])


@dataclass(frozen=True)
class XYParams:
    beta: float
    J: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and np.isfinite(self.J)):
            raise UsageError("beta and J must be finite")
        if self.beta < 0 or self.J < 0:
            raise UsageError(f"need beta >= 0 and J >= 0, got beta={self.beta}, J={self.J}")

    @property
    def coupling(self) -> float:
        return self.beta * self.J


def _exact_cos_sin(y):
    """cos/sin that return exact 0/+-1 at the float multiples of pi/2.

    Keeps the field of an up/down target exactly symmetric under x -> -x.
    """
    y = np.asarray(y, dtype=float)
    c, s = np.cos(y), np.sin(y)
    for value, (cv, sv) in {
        0.0: (1.0, 0.0),
        np.pi / 2: (0.0, 1.0),
        np.pi: (-1.0, 0.0),
        3 * np.pi / 2: (0.0, -1.0),
    }.items():
        hit = y == value
        c = np.where(hit, cv, c)
        s = np.where(hit, sv, s)
    return c, s


@dataclass(frozen=True)
class FieldSpec:
    """Per-site field: coupling ``h_i`` to ``cos(x_i - y_i)``."""

    target: np.ndarray
    magnitude: np.ndarray

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float)
        magnitude = np.broadcast_to(np.asarray(self.magnitude, dtype=float), target.shape).copy()
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "magnitude", magnitude)

    @classmethod
    def uniform(cls, target, h: float) -> "FieldSpec":
        target = np.asarray(target, dtype=float)
        return cls(target, np.full(target.shape, float(h)))

    def components(self):
        """Return ``(h cos y, h sin y)`` so that ``h cos(x-y) = hx cos x + hy sin x``."""
        c, s = _exact_cos_sin(self.target)
        return self.magnitude * c, self.magnitude * s


def _check_config(config, fields=None) -> LatticeShape:
    shape = LatticeShape.of(config)
    if fields is not None and fields.target.shape != np.shape(config):
        raise UsageError(
            f"field shape {fields.target.shape} does not match configuration {np.shape(config)}"
        )
    return shape


def bond_list(side: int) -> np.ndarray:
    """``(2 L^2, 2)`` array of flat site indices, right bonds then down bonds."""
    L = side
    idx = np.arange(L * L).reshape(L, L)
    right = np.stack([idx.ravel(), np.roll(idx, -1, axis=1).ravel()], axis=1)
    down = np.stack([idx.ravel(), np.roll(idx, -1, axis=0).ravel()], axis=1)
    return np.concatenate([right, down])


def _field_energy(config, fields):
    if fields is None:
        return 0.0
    return -float(np.sum(fields.magnitude * np.cos(config - fields.target)))


def energy_total(config, params: XYParams, fields: FieldSpec | None = None) -> float:
    """Total energy of ``config`` on the periodic torus."""
    config = np.asarray(config, dtype=float)
    _check_config(config, fields)
    bonds = np.cos(config - np.roll(config, -1, axis=1)) + np.cos(config - np.roll(config, -1, axis=0))
    return -params.coupling * float(np.sum(bonds)) + _field_energy(config, fields)


def _site_coords(site, L):
    if isinstance(site, (tuple, list)):
        r, c = site
    else:
        if int(site) != site:
            raise UsageError(f"site index must be an integer, got {site!r}")
        r, c = divmod(int(site), L)
        if not 0 <= site < L * L:
            raise UsageError(f"site {site} out of range for L={L}")
    if not (0 <= r < L and 0 <= c < L):
        raise UsageError(f"site {site} out of range for L={L}")
    return int(r), int(c)


def energy_delta(config, site, new_angle: float, params: XYParams, fields: FieldSpec | None = None) -> float:
    """Energy change when the angle at ``site`` is replaced by ``new_angle``.

    Only the four incident bonds and the local field enter.
    """
    config = np.asarray(config, dtype=float)
    shape = _check_config(config, fields)
    L = shape.side
    r, c = _site_coords(site, L)
    old = config[r, c]
    nbrs = np.array(
        [config[r, (c + 1) % L], config[r, (c - 1) % L], config[(r + 1) % L, c], config[(r - 1) % L, c]]
    )
    de = -params.coupling * float(np.sum(np.cos(new_angle - nbrs) - np.cos(old - nbrs)))
    if fields is not None:
        h, y = fields.magnitude[r, c], fields.target[r, c]
        de -= h * (np.cos(new_angle - y) - np.cos(old - y))
    return de


def dobrushin_sum(params: XYParams, dimension: int = 2):
    """Dobrushin sum for the nearest-neighbour XY pair interaction.

    Each site lies in ``2d`` bonds, each bond has ``|A| - 1 = 1`` and the
    oscillation of ``-beta J cos`` is ``2 beta J``. The condition is the
    strict inequality ``sum < 2``.
    """
    if dimension < 1:
        raise UsageError(f"dimension must be >= 1, got {dimension}")
    total = 2 * dimension * 2.0 * params.coupling
    return total, total < 2.0


def plaquette_corners(dual_site, side: int):
    """Corner sites ``(r,c), (r,c+1), (r+1,c), (r+1,c+1)`` of the plaquette based at ``dual_site``."""
    r, c = _site_coords(dual_site, side)
    r1, c1 = (r + 1) % side, (c + 1) % side
    return [(r, c), (r, c1), (r1, c), (r1, c1)]


def plaquette_energies(config, params: XYParams, fields: FieldSpec | None = None) -> np.ndarray:
    """Energies of all ``L^2`` plaquettes, indexed by their base site.

    Half of each of the four edge terms plus a quarter of each corner's
    field term, so the plaquettes partition ``energy_total`` exactly.
    """
    x = np.asarray(config, dtype=float)
    _check_config(x, fields)
    xr = np.roll(x, -1, axis=1)  # (r, c+1)
    xd = np.roll(x, -1, axis=0)  # (r+1, c)
    xrd = np.roll(xr, -1, axis=0)  # (r+1, c+1)
    edges = np.cos(x - xr) + np.cos(xd - xrd) + np.cos(x - xd) + np.cos(xr - xrd)
    out = -0.5 * params.coupling * edges
    if fields is not None:
        site_field = -fields.magnitude * np.cos(x - fields.target)
        fr = np.roll(site_field, -1, axis=1)
        out = out + 0.25 * (site_field + fr + np.roll(site_field, -1, axis=0) + np.roll(fr, -1, axis=0))
    return out


def plaquette_energy(config, dual_site, params: XYParams, fields: FieldSpec | None = None) -> float:
    x = np.asarray(config, dtype=float)
    shape = _check_config(x, fields)
    (a, b, c, d) = plaquette_corners(dual_site, shape.side)
    edges = np.cos(x[a] - x[b]) + np.cos(x[c] - x[d]) + np.cos(x[a] - x[c]) + np.cos(x[b] - x[d])
    e = -0.5 * params.coupling * edges
    if fields is not None:
        e -= 0.25 * sum(fields.magnitude[s] * np.cos(x[s] - fields.target[s]) for s in (a, b, c, d))
    return float(e)


def reflect(config):
    """Left-right reflection ``x -> (2pi - x) mod 2pi``."""
    return wrap_angle(TWO_PI - np.asarray(config, dtype=float))


def rotate(config, angle: float):
    return wrap_angle(np.asarray(config, dtype=float) + angle)


def write_config(path, config) -> None:
    """Header ``L=<side>`` then one angle per line, row-major, 17 significant digits."""
    config = np.asarray(config, dtype=float)
    shape = LatticeShape.of(config)
    lines = [f"L={shape.side}"] + [f"{v:.17g}" for v in config.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path) -> np.ndarray:
    lines = Path(path).read_text().split()
    if not lines or not lines[0].startswith("L="):
        raise UsageError(f"{path}: missing 'L=<int>' header")
    L = int(lines[0][2:])
    LatticeShape(L)
    values = np.array([float(v) for v in lines[1:]])
    if values.size != L * L:
        raise UsageError(f"{path}: expected {L * L} angles, found {values.size}")
    if np.any(values < 0) or np.any(values >= TWO_PI):
        raise UsageError(f"{path}: angles must lie in [0, 2pi)")
    return values.reshape(L, L)
