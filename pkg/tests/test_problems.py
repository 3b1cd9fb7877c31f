"""Benchmark problem generators and the Monte Carlo fluence oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnrte.equations import q_name
from pnrte.problems import (ProblemSpec, SingularRiskError, floor_sigma_t,
                            make_checkerboard, make_heterogeneous,
                            make_pointsource, mc_fluence_oracle,
                            mc_total_absorbed, source_voxel, vacuum_fraction,
                            validate_for_solve)

SQRT_4PI = math.sqrt(4 * math.pi)


# ---------------------------------------------------------------------------
# checkerboard
# ---------------------------------------------------------------------------

def test_checkerboard_resolution_and_extent():
    spec = make_checkerboard()
    assert spec.res == (71, 71)
    assert spec.extent == (7.0, 7.0)


def block_center_index(spec, bx, by):
    h = spec.h
    return (int((bx + 0.5) / h), int((by + 0.5) / h))


def test_checkerboard_center_block_is_scattering_source():
    spec = make_checkerboard()
    i, j = block_center_index(spec, 3, 3)
    st_f = spec.field_array("sigma_t")
    q = spec.field_array(q_name(0, 0))
    assert st_f[i, j] == 1.0
    assert q[i, j] == pytest.approx(1 / SQRT_4PI)


def test_checkerboard_absorber_blocks():
    spec = make_checkerboard()
    st_f = spec.field_array("sigma_t")
    ss_f = spec.field_array("sigma_s")
    # enumerate the standard lattice mask
    absorbers = [(bx, by) for bx in range(1, 6) for by in range(1, 6)
                 if (bx + by) % 2 == 0 and (bx, by) != (3, 3)]
    assert len(absorbers) == 12
    for bx, by in absorbers:
        i, j = block_center_index(spec, bx, by)
        assert st_f[i, j] == 10.0 and ss_f[i, j] == 0.0
    # everything else scatters
    i, j = block_center_index(spec, 0, 0)
    assert st_f[i, j] == 1.0 and ss_f[i, j] == 1.0


def test_checkerboard_mirror_symmetric():
    spec = make_checkerboard()
    for name in ("sigma_t", "sigma_s", q_name(0, 0)):
        arr = spec.field_array(name)
        np.testing.assert_array_equal(arr, arr.T)


def test_spec_rejects_super_unitary_albedo():
    with pytest.raises(ValueError):
        ProblemSpec(dim=2, origin=(0, 0), extent=(1.0, 1.0), res=(4, 4),
                    fields={"sigma_t": np.ones((4, 4)),
                            "sigma_s": 2 * np.ones((4, 4))})


# ---------------------------------------------------------------------------
# point source
# ---------------------------------------------------------------------------

def test_pointsource_parameters():
    spec = make_pointsource(res=80)
    assert spec.res == (80, 80, 80)
    st_f = spec.field_array("sigma_t")
    ss_f = spec.field_array("sigma_s")
    assert float(st_f.min()) == float(st_f.max()) == 8.0
    assert float(ss_f.min()) == float(ss_f.max()) == pytest.approx(7.2)


def test_pointsource_total_power_is_one():
    spec = make_pointsource(res=16)
    q = spec.field_array(q_name(0, 0))
    # int Q dV dw = sum_voxels h^3 * Q00 * sqrt(4 pi)
    power = float(q.sum()) * spec.h ** 3 * SQRT_4PI
    assert power == pytest.approx(1.0, abs=1e-12)
    assert q[source_voxel(spec)] > 0


def test_pointsource_min_resolution():
    with pytest.raises(ValueError):
        make_pointsource(res=4)


# ---------------------------------------------------------------------------
# heterogeneous volume
# ---------------------------------------------------------------------------

def test_heterogeneous_deterministic():
    a = make_heterogeneous(seed=7, res=24)
    b = make_heterogeneous(seed=7, res=24)
    np.testing.assert_array_equal(a.field_array("sigma_t"),
                                  b.field_array("sigma_t"))
    c = make_heterogeneous(seed=8, res=24)
    assert not np.array_equal(a.field_array("sigma_t"),
                              c.field_array("sigma_t"))


def test_heterogeneous_vacuum_fraction_in_band():
    for seed in (0, 1, 2, 3):
        spec = make_heterogeneous(seed=seed, res=32)
        frac = vacuum_fraction(spec)
        assert 0.05 <= frac <= 0.40, f"seed {seed}: vacuum fraction {frac}"


def test_heterogeneous_bounds_and_albedo():
    spec = make_heterogeneous(seed=0, res=24)
    st_f = spec.field_array("sigma_t")
    ss_f = spec.field_array("sigma_s")
    assert float(st_f.min()) == 0.0
    assert float(st_f.max()) <= 20.0
    np.testing.assert_allclose(ss_f, 0.9 * st_f, atol=1e-12)


def test_vacuum_rejected_at_admission():
    spec = make_heterogeneous(seed=0, res=16)
    with pytest.raises(SingularRiskError):
        validate_for_solve(spec)
    validate_for_solve(floor_sigma_t(spec, 0.5))


# ---------------------------------------------------------------------------
# sigma_t flooring
# ---------------------------------------------------------------------------

def test_floor_rule_values():
    spec = make_heterogeneous(seed=0, res=16)
    out = floor_sigma_t(spec, 0.5)
    st_f = out.field_array("sigma_t")
    assert float(st_f.min()) == 0.5
    orig = spec.field_array("sigma_t")
    np.testing.assert_array_equal(st_f, np.maximum(orig, 0.5))
    assert np.all(out.field_array("sigma_s") <= st_f + 1e-12)
    ps = floor_sigma_t(make_pointsource(res=16), 0.5)
    assert float(ps.field_array("sigma_t").max()) == 8.0


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.01, max_value=5.0),
       st.floats(min_value=0.01, max_value=5.0))
def test_floor_idempotent_and_monotone(tau_a, tau_b):
    spec = make_heterogeneous(seed=3, res=8)
    once = floor_sigma_t(spec, tau_a)
    twice = floor_sigma_t(once, tau_a)
    np.testing.assert_array_equal(once.field_array("sigma_t"),
                                  twice.field_array("sigma_t"))
    lo, hi = sorted((tau_a, tau_b))
    a = floor_sigma_t(spec, lo).field_array("sigma_t")
    b = floor_sigma_t(spec, hi).field_array("sigma_t")
    assert np.all(b >= a - 1e-15)


def test_generated_specs_are_finite_and_admissible():
    for spec in (make_checkerboard(res=21), make_pointsource(res=12),
                 make_heterogeneous(seed=1, res=12)):
        st_f = spec.field_array("sigma_t")
        ss_f = spec.field_array("sigma_s")
        assert np.all(np.isfinite(st_f)) and np.all(np.isfinite(ss_f))
        assert np.all(ss_f <= st_f + 1e-12)


# ---------------------------------------------------------------------------
# Monte Carlo oracle
# ---------------------------------------------------------------------------

def test_mc_pure_absorber_matches_attenuation():
    """albedo = 0: fluence is exactly exp(-sigma_t r) / (4 pi r^2)."""
    sigma_t = 2.0
    edges = np.linspace(0.1, 1.3, 7)
    flu, err = mc_fluence_oracle(sigma_t, 0.0, edges, n_paths=400_000, seed=4)
    r_mid = 0.5 * (edges[:-1] + edges[1:])
    # bin-averaged analytic value: int exp(-s r)/(4 pi r^2) * 4 pi r^2 dr / V
    for k in range(len(r_mid)):
        lo, hi = edges[k], edges[k + 1]
        vol = 4 / 3 * math.pi * (hi ** 3 - lo ** 3)
        exact = ((math.exp(-sigma_t * lo) - math.exp(-sigma_t * hi))
                 / (sigma_t * vol))
        assert abs(flu[k] - exact) <= 3 * err[k] + 1e-12, f"shell {k}"


def test_mc_energy_conservation():
    absorbed = mc_total_absorbed(3.0, 0.7, n_paths=200_000, seed=5)
    assert absorbed == pytest.approx(1.0, abs=0.01)


def test_mc_reproducible_with_seed():
    edges = np.linspace(0.05, 0.8, 5)
    a, _ = mc_fluence_oracle(4.0, 0.5, edges, n_paths=20_000, seed=11)
    b, _ = mc_fluence_oracle(4.0, 0.5, edges, n_paths=20_000, seed=11)
    np.testing.assert_array_equal(a, b)


def test_mc_requires_paths():
    with pytest.raises(ValueError):
        mc_fluence_oracle(1.0, 0.5, [0, 1], n_paths=0)
