import json
import math

import numpy as np
import pytest
from scipy import special

from rotor_gibbs.circle_kernel import TWO_PI
from rotor_gibbs.conditioned_model import ConditionedParams, conditioned_hamiltonian, make_yspec, yspec_fields
from rotor_gibbs.errors import UsageError
from rotor_gibbs.gibbs_sampler import (
    SamplerConfig,
    bad_config_probe,
    batch_means_stderr,
    box_model,
    chain_model,
    chessboard_check,
    conditioned_model,
    cube_reflections,
    exact_small_volume,
    metropolis_sweep,
    random_invariant_function,
    run_chain,
    torus_model,
    write_series,
)
from rotor_gibbs.rotor_model import FieldSpec, XYParams, energy_total


def test_config_validation():
    with pytest.raises(UsageError):
        SamplerConfig(10, burn_in=20)
    with pytest.raises(UsageError):
        SamplerConfig(10, proposal_width=0.0)
    with pytest.raises(UsageError):
        SamplerConfig(10, proposal_width=4.0)
    with pytest.raises(UsageError):
        SamplerConfig(10, thin=0)
    with pytest.raises(UsageError):
        SamplerConfig(10, seed=-1)
    SamplerConfig(10, burn_in=10)


def test_neighbour_table_degrees():
    m = torus_model(4, XYParams(1.0))
    indptr, _ = m.neighbour_table()
    assert np.all(np.diff(indptr) == 4)
    b = box_model(4, XYParams(1.0))
    deg = np.diff(b.neighbour_table()[0]).reshape(4, 4)
    assert deg[0, 0] == 2 and deg[0, 1] == 3 and deg[1, 1] == 4


def test_model_energy_matches_lattice_energy(rng):
    p = XYParams(0.8, 1.1)
    f = FieldSpec(rng.uniform(0, TWO_PI, (4, 4)), rng.normal(size=(4, 4)))
    m = torus_model(4, p, f)
    x = rng.uniform(0, TWO_PI, (4, 4))
    assert m.energy(x) == pytest.approx(energy_total(x, p, f), abs=1e-12)


@pytest.mark.parametrize("t", [0.7, 2.0, 4.0])
def test_conditioned_model_energy(rng, t):
    p = ConditionedParams(1.3, 1.0, t)
    y = make_yspec(4)
    x = rng.uniform(0, TWO_PI, (4, 4))
    for form in ("exact", "field_approx"):
        m = conditioned_model(p, 4, form)
        assert m.energy(x) == pytest.approx(conditioned_hamiltonian(x, y, p, form), abs=1e-12)


@pytest.mark.parametrize("t", [0.7, 4.0])
def test_compiled_energy_matches(rng, t):
    p = ConditionedParams(1.3, 1.0, t)
    m = conditioned_model(p, 4)
    s = run_chain(rng.uniform(0, TWO_PI, (4, 4)), m, SamplerConfig(50, 0, 0.5, seed=3))
    assert s.energy[-1] == pytest.approx(m.energy(s.final), abs=1e-10)
    assert s.m_lr[-1] == pytest.approx(np.mean(np.sin(s.final)), abs=1e-12)


def test_metropolis_sweep_leaves_input(rng):
    m = torus_model(4, XYParams(1.0))
    x = rng.uniform(0, TWO_PI, (4, 4))
    before = x.copy()
    y, acc = metropolis_sweep(x, m, 0.5, rng)
    assert np.array_equal(x, before)
    assert 0 <= acc <= 1 and np.all((y >= 0) & (y < TWO_PI))
    with pytest.raises(UsageError):
        metropolis_sweep(np.zeros((2, 2)), m, 0.5, rng)


def test_run_chain_reproducible():
    m = torus_model(4, XYParams(1.0))
    cfg = SamplerConfig(600, 200, 0.5, seed=11)
    a = run_chain(np.zeros((4, 4)), m, cfg)
    b = run_chain(np.zeros((4, 4)), m, cfg)
    assert np.array_equal(a.m_lr, b.m_lr) and np.array_equal(a.energy, b.energy)
    assert len(a) == 400 and a.sweep[0] == 201


def test_thinning():
    m = torus_model(4, XYParams(1.0))
    s = run_chain(np.zeros((4, 4)), m, SamplerConfig(300, 100, 0.5, seed=1, thin=10))
    assert list(s.sweep) == list(range(110, 301, 10))


def test_empty_series():
    m = torus_model(4, XYParams(1.0))
    s = run_chain(np.zeros((4, 4)), m, SamplerConfig(100, 100, 0.5))
    assert len(s) == 0 and s.final.shape == (4, 4)


def test_mirror_is_exact_negation():
    p = ConditionedParams(2.0, 1.0, 2.0)
    x0 = np.random.default_rng(0).uniform(0, TWO_PI, (4, 4))
    for form in ("exact", "field_approx"):
        m = conditioned_model(p, 4, form)
        cfg = SamplerConfig(2000, 300, 0.5, seed=9)
        a = run_chain(x0, m, cfg)
        b = run_chain(x0, m, cfg, mirror=True)
        assert np.array_equal(a.m_lr, -b.m_lr)


def test_snapshots():
    m = torus_model(4, XYParams(1.0))
    s = run_chain(np.zeros((4, 4)), m, SamplerConfig(1100, 100, 0.5, seed=2), snapshot_every=250)
    assert [k for k, _ in s.snapshots] == [350, 600, 850, 1100]
    assert np.array_equal(s.snapshots[-1][1], s.final)


def test_width_tuning_targets_acceptance():
    m = torus_model(8, XYParams(3.0))
    s = run_chain(np.zeros((8, 8)), m, SamplerConfig(4000, 2000, 3.0, seed=4))
    assert 0.3 < s.acc.mean() < 0.7


def test_single_site_von_mises():
    h = 1.2
    m = chain_model(1, XYParams(0.0), FieldSpec(np.zeros(1), np.full(1, h)))
    exact = exact_small_volume(m, 256)
    assert exact.cos[0] == pytest.approx(special.i1(h) / special.i0(h), abs=1e-12)
    assert exact.log_Z == pytest.approx(math.log(TWO_PI * special.i0(h)), abs=1e-12)
    s = run_chain(np.zeros(1), m, SamplerConfig(200_000, 1000, 1.0, seed=5))
    # M_UD of a single even site is cos x
    assert abs(s.m_ud.mean() - exact.cos[0]) <= 4 * batch_means_stderr(s.m_ud)


def test_two_site_bond_expectation():
    k = 1.7
    m = chain_model(2, XYParams(k))
    q = exact_small_volume(m, 128)
    assert q.cos_diff[0, 1] == pytest.approx(special.i1(k) / special.i0(k), abs=1e-12)
    assert q.log_Z == pytest.approx(math.log(TWO_PI**2 * special.i0(k)), abs=1e-12)
    assert np.allclose(q.sin, 0, atol=1e-12)


def test_quadrature_limits():
    with pytest.raises(UsageError):
        exact_small_volume(torus_model(4, XYParams(1.0)), 8)
    with pytest.raises(UsageError):
        exact_small_volume(torus_model(2, XYParams(1.0)), 65)


def test_quadrature_frozen_sites():
    frozen = np.array([True, False])
    m = chain_model(2, XYParams(1.1))
    m = type(m)(m.shape, m.bonds, m.coupling, m.hx, m.hy, frozen, m.stagger)
    q = exact_small_volume(m, 256, frozen_values=[0.0, 0.0])
    # the free site feels a field of strength beta J towards 0
    assert q.cos[1] == pytest.approx(special.i1(1.1) / special.i0(1.1), abs=1e-12)


def test_batch_means_iid(rng):
    v = rng.normal(size=64_000)
    assert batch_means_stderr(v) == pytest.approx(1 / math.sqrt(v.size), rel=0.35)
    assert math.isnan(batch_means_stderr([1.0]))


def test_write_series(tmp_path):
    m = torus_model(4, XYParams(1.0))
    s = run_chain(np.zeros((4, 4)), m, SamplerConfig(20, 10, 0.5, seed=1))
    path = tmp_path / "series.csv"
    write_series(path, s, {"seed": 1})
    lines = path.read_text().splitlines()
    assert lines[0] == "sweep,M_LR,M_UD,energy,acc" and len(lines) == 11
    assert float(lines[1].split(",")[1]) == s.m_lr[0]
    assert json.loads(path.with_suffix(".json").read_text()) == {"seed": 1}


def test_cube_reflections_involutions():
    v = (1, 2, 3, 4)
    for img in cube_reflections(v):
        assert set(cube_reflections(img)) >= {v}


def test_random_invariant_function(rng):
    f = random_invariant_function(rng)
    for _ in range(50):
        v = rng.uniform(0, TWO_PI, 4)
        assert f(*v) > 0
        for img in cube_reflections(tuple(v)):
            assert f(*img) == pytest.approx(f(*v), abs=1e-12)


def test_chessboard_equality_for_constants():
    p = ConditionedParams(1.0, 1.0, 2.0)
    m = torus_model(2, p.xy_params(), yspec_fields(p, 2))
    one = lambda a, b, c, d: np.ones(np.broadcast(a, b, c, d).shape)
    lhs, rhs, holds = chessboard_check([one] * 4, m, 8)
    assert lhs == pytest.approx(1.0) and rhs == pytest.approx(1.0) and holds


def test_chessboard_random(rng):
    p = ConditionedParams(2.0, 1.0, 2.0)
    m = torus_model(2, p.xy_params(), yspec_fields(p, 2))
    fs = [random_invariant_function(rng) for _ in range(4)]
    lhs, rhs, holds = chessboard_check(fs, m, 12)
    assert holds and lhs > 0


def test_chessboard_rejects_bad_functions():
    m = torus_model(2, XYParams(1.0))
    asym = lambda a, b, c, d: 2.0 + np.cos(a)
    with pytest.raises(UsageError):
        chessboard_check([asym] * 4, m, 8)
    neg = lambda a, b, c, d: np.cos(a) + np.cos(b) + np.cos(c) + np.cos(d)
    with pytest.raises(UsageError):
        chessboard_check([neg] * 4, m, 8)
    with pytest.raises(UsageError):
        chessboard_check([asym] * 4, torus_model(4, XYParams(1.0)), 8)


def test_bad_config_probe_rows():
    p = ConditionedParams(20.0, 1.0, 2.0)
    rows = bad_config_probe([4, 6], p, sampler_config=SamplerConfig(600, 100, 0.5, seed=1))
    assert [r.L for r in rows] == [4, 6]
    for r in rows:
        assert r.mean_xi > 0.5 and r.mean_eta < -0.5
        assert r.as_dict()["gap"] == pytest.approx(r.gap)


def test_infinite_temperature_uniform():
    from scipy import stats

    m = torus_model(4, XYParams(0.0))
    # width pi makes every accepted proposal an independent uniform draw
    s = run_chain(np.zeros((4, 4)), m, SamplerConfig(100_000, 0, math.pi, seed=6), snapshot_every=10)
    assert np.all(s.acc == 1.0)
    x = np.concatenate([c.ravel() for _, c in s.snapshots])
    assert stats.kstest(x, "uniform", args=(0, TWO_PI)).pvalue > 0.01


def test_order_parameters_bounded(rng):
    m = conditioned_model(ConditionedParams(1.0, 1.0, 2.0), 4)
    s = run_chain(rng.uniform(0, TWO_PI, (4, 4)), m, SamplerConfig(2000, 100, 0.5, seed=1))
    for v in (s.m_lr, s.m_ud):
        assert np.all(np.abs(v) <= 1)
    assert np.all((s.acc >= 0) & (s.acc <= 1))


# The per-spin thermal spread at beta J = 20 is about 0.14 rad, so the maximum
# over 64 spins exceeds 0.2 rad in typical configurations; kept as stated.
@pytest.mark.xfail(strict=True, reason="thermal spread at beta J = 20 exceeds 0.2 rad for some spin")
def test_low_temperature_confinement():
    from rotor_gibbs.circle_kernel import circular_distance
    from rotor_gibbs.conditioned_model import ground_states

    p = ConditionedParams(20.0, 1.0, 2.0)
    gs = ground_states(p, 8)
    s = run_chain(gs.x_ri, conditioned_model(p, 8), SamplerConfig(1000, 0, 0.5, seed=17))
    assert np.max(circular_distance(s.final, gs.x_ri)) < 0.2


def test_low_temperature_spin_wave_spread():
    from rotor_gibbs.conditioned_model import ground_states

    L, bj = 8, 20.0
    p = ConditionedParams(bj, 1.0, 2.0)
    gs = ground_states(p, L)
    # harmonic approximation: var(x_i - mean x) = (1/N) sum_{k != 0} 1 / (beta J lambda_k)
    k = TWO_PI * np.arange(L) / L
    lam = (4 - 2 * np.cos(k)[:, None] - 2 * np.cos(k)[None, :]).ravel()[1:]
    predicted = float(np.sum(1 / lam)) / (L * L) / bj
    s = run_chain(gs.x_ri, conditioned_model(p, L), SamplerConfig(21_000, 1000, 0.5, seed=5), snapshot_every=100)
    spread = []
    for _, c in s.snapshots:
        d = c - gs.x_ri
        spread.append(np.var(d - TWO_PI * np.rint(d / TWO_PI)))
    assert np.mean(spread) == pytest.approx(predicted, rel=0.05)


def test_two_site_mcmc_bond():
    k = 1.0
    m = chain_model(2, XYParams(k))
    q = exact_small_volume(m, 256)
    s = run_chain(np.zeros(2), m, SamplerConfig(201_000, 1000, 1.0, seed=12), snapshot_every=2)
    x = np.array([c for _, c in s.snapshots])
    v = np.cos(x[:, 0] - x[:, 1])
    assert abs(v.mean() - q.cos_diff[0, 1]) <= 3 * batch_means_stderr(v)


def test_quadrature_trivial_cases():
    q = exact_small_volume(torus_model(2, XYParams(0.0)), 32)
    assert np.allclose(q.sin, 0, atol=1e-10)
    off = q.cos_diff[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 0, atol=1e-10)
    p = ConditionedParams(1.5, 1.0, 1.0)
    qs = exact_small_volume(torus_model(2, p.xy_params(), yspec_fields(p, 2)), 32)
    assert np.all(np.abs(qs.sin) <= 1e-12)
    one = exact_small_volume(chain_model(1, XYParams(0.0), FieldSpec(np.zeros(1), np.ones(1))), 64)
    assert one.cos[0] == pytest.approx(0.4463900, abs=5e-8)


def test_quadrature_z_against_riemann_sum():
    k, h = 1.3, 0.6
    m = chain_model(2, XYParams(k), FieldSpec(np.array([0.0, math.pi]), np.full(2, h)))
    n = 32
    total = 0.0
    for a in range(n):
        for b in range(n):
            xa, xb = (a + 0.5) * TWO_PI / n, (b + 0.5) * TWO_PI / n
            e = -k * math.cos(xa - xb) - h * math.cos(xa) + h * math.cos(xb)
            total += math.exp(-e)
    z_half = total * (TWO_PI / n) ** 2
    z = exact_small_volume(m, 2 * n).Z
    # midpoint rule on a periodic analytic integrand converges geometrically
    assert z == pytest.approx(z_half, rel=1e-9)


def test_chessboard_constants():
    m = torus_model(2, XYParams(0.7))
    c = lambda a, b, cc, d: np.full(np.broadcast(a, b, cc, d).shape, 1.7)
    lhs, rhs, holds = chessboard_check([c] * 4, m, 6)
    assert lhs == pytest.approx(1.7**4) and rhs == pytest.approx(1.7**4) and holds


def test_bad_probe_near_ground_state_limit():
    rows = bad_config_probe([8], ConditionedParams(200.0, 1.0, 2.0), sampler_config=SamplerConfig(3000, 500, 0.5, seed=2))
    assert rows[0].gap >= 1.5


def test_bad_probe_symmetric_outputs():
    r = bad_config_probe([6], ConditionedParams(1.0, 1.0, 2.0), sampler_config=SamplerConfig(20_000, 1000, 0.5, seed=3))[0]
    assert abs(r.mean_xi + r.mean_eta) <= 3 * r.stderr
