import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotor_gibbs.circle_kernel import TWO_PI
from rotor_gibbs.errors import UsageError
from rotor_gibbs.rotor_model import (
    FieldSpec,
    LatticeShape,
    XYParams,
    bond_list,
    dobrushin_sum,
    energy_delta,
    energy_total,
    plaquette_corners,
    plaquette_energies,
    plaquette_energy,
    read_config,
    reflect,
    rotate,
    write_config,
)


def brute_energy(x, params, fields=None):
    """Independent double loop over sites and their right/down neighbours."""
    L = x.shape[0]
    e = 0.0
    for r in range(L):
        for c in range(L):
            for rr, cc in ((r, (c + 1) % L), ((r + 1) % L, c)):
                e -= params.beta * params.J * math.cos(x[r, c] - x[rr, cc])
            if fields is not None:
                e -= fields.magnitude[r, c] * math.cos(x[r, c] - fields.target[r, c])
    return e


def random_config(rng, L):
    return rng.uniform(0, TWO_PI, (L, L))


def test_lattice_shape_validation():
    for bad in (0, 1, 3, 5, 2.5):
        with pytest.raises(UsageError):
            LatticeShape(bad)
    assert LatticeShape(4).n_sites == 16


def test_params_validation():
    with pytest.raises(UsageError):
        XYParams(-1.0)
    with pytest.raises(UsageError):
        XYParams(1.0, -0.5)
    with pytest.raises(UsageError):
        XYParams(math.inf)


def test_energy_aligned():
    p = XYParams(1.3, 0.7)
    x = np.full((4, 4), 0.4)
    assert energy_total(x, p) == pytest.approx(-32 * 1.3 * 0.7, abs=1e-12)
    f = FieldSpec.uniform(x, 0.25)
    assert energy_total(x, p, f) == pytest.approx(-32 * 1.3 * 0.7 - 16 * 0.25, abs=1e-12)


def test_energy_matches_double_loop(rng):
    p = XYParams(0.8, 1.1)
    for L in (2, 4, 6):
        x = random_config(rng, L)
        f = FieldSpec(random_config(rng, L), rng.normal(size=(L, L)))
        assert energy_total(x, p, f) == pytest.approx(brute_energy(x, p, f), abs=1e-12)


def test_energy_shape_mismatch():
    with pytest.raises(UsageError):
        energy_total(np.zeros((4, 4)), XYParams(1.0), FieldSpec.uniform(np.zeros((2, 2)), 1.0))
    with pytest.raises(UsageError):
        energy_total(np.zeros((4, 2)), XYParams(1.0))


def test_energy_delta_zero_move(rng):
    x = random_config(rng, 4)
    assert energy_delta(x, 5, x.flat[5], XYParams(1.0)) == 0


def test_energy_delta_flip_aligned():
    p = XYParams(1.0, 1.0)
    x = np.zeros((4, 4))
    # flipping one spin by pi breaks four aligned bonds: +2 beta J each
    assert energy_delta(x, (1, 2), math.pi, p) == pytest.approx(8.0, abs=1e-12)
    after = x.copy()
    after[1, 2] = math.pi
    assert energy_total(after, p) - energy_total(x, p) == pytest.approx(8.0, abs=1e-12)


def test_energy_delta_consistency(rng):
    p = XYParams(0.9, 1.2)
    L = 4
    x = random_config(rng, L)
    f = FieldSpec(random_config(rng, L), rng.normal(size=(L, L)))
    worst = 0.0
    for _ in range(10_000):
        site = int(rng.integers(L * L))
        new = rng.uniform(0, TWO_PI)
        after = x.copy()
        after.flat[site] = new
        oracle = energy_total(after, p, f) - energy_total(x, p, f)
        worst = max(worst, abs(energy_delta(x, site, new, p, f) - oracle))
        x = after
    assert worst <= 1e-10


def test_energy_delta_range():
    with pytest.raises(UsageError):
        energy_delta(np.zeros((4, 4)), 16, 0.0, XYParams(1.0))
    with pytest.raises(UsageError):
        energy_delta(np.zeros((4, 4)), (4, 0), 0.0, XYParams(1.0))


def test_dobrushin_examples():
    assert dobrushin_sum(XYParams(0.2), 2) == (pytest.approx(1.6), True)
    total, ok = dobrushin_sum(XYParams(0.25), 2)
    assert total == 2.0 and not ok
    assert dobrushin_sum(XYParams(0.0), 2) == (0.0, True)
    with pytest.raises(UsageError):
        dobrushin_sum(XYParams(0.1), 0)


@given(st.floats(0, 5), st.integers(1, 4))
def test_dobrushin_linear(bj, d):
    total, ok = dobrushin_sum(XYParams(bj), d)
    assert total == pytest.approx(4 * d * bj)
    assert ok == (total < 2)


def test_plaquette_all_zero():
    assert plaquette_energy(np.zeros((4, 4)), 0, XYParams(1.0)) == pytest.approx(-2.0)


def test_plaquette_resummation(rng):
    p = XYParams(1.7)
    for L in (2, 4, 8):
        x = random_config(rng, L)
        f = FieldSpec(random_config(rng, L), rng.normal(size=(L, L)))
        pe = plaquette_energies(x, p, f)
        assert float(pe.sum()) == pytest.approx(energy_total(x, p, f), abs=1e-10)
        for a in range(L * L):
            assert plaquette_energy(x, a, p, f) == pytest.approx(pe.flat[a], abs=1e-12)


def test_plaquette_corners():
    assert plaquette_corners(15, 4) == [(3, 3), (3, 0), (0, 3), (0, 0)]
    with pytest.raises(UsageError):
        plaquette_corners(16, 4)


def test_bond_list():
    b = bond_list(4)
    assert b.shape == (32, 2)
    assert len(bond_list(2)) == 8  # doubled bonds on the smallest torus


@given(st.floats(-10, 10))
@settings(max_examples=50)
def test_rotation_invariance(c):
    x = np.random.default_rng(1).uniform(0, TWO_PI, (4, 4))
    p = XYParams(1.1)
    assert energy_total(rotate(x, c), p) == pytest.approx(energy_total(x, p), abs=1e-12)


def test_reflection_invariance(rng):
    L = 6
    p = XYParams(0.7)
    for _ in range(20):
        x = random_config(rng, L)
        target = rng.choice([0.0, math.pi], size=(L, L))
        f = FieldSpec(target, rng.normal(size=(L, L)))
        assert energy_total(reflect(x), p, f) == pytest.approx(energy_total(x, p, f), abs=1e-12)


def test_config_roundtrip(tmp_path, rng):
    x = random_config(rng, 4)
    path = tmp_path / "cfg.txt"
    write_config(path, x)
    assert path.read_text().splitlines()[0] == "L=4"
    assert np.array_equal(read_config(path), x)


def test_read_config_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0.1\n0.2\n")
    with pytest.raises(UsageError):
        read_config(p)
    p.write_text("L=2\n0.1\n0.2\n")
    with pytest.raises(UsageError):
        read_config(p)
    p.write_text("L=2\n0.1\n0.2\n0.3\n7.0\n")
    with pytest.raises(UsageError):
        read_config(p)
