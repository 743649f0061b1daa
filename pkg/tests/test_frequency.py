"""Frequency profiles, monotonicity, blow-ups, tangent maps and decay rates."""
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aqlab.catalog import random_catalog
from aqlab.experiments import (adversarial_radial, case_b_winding, case_c, perturbed_b, perturbed_c, perturbed_q1,
                               x2_map)
from aqlab.frequency import (blowup, check_monotone, compute_beta, fit_decay, profile, profile_exact, tangent)
from aqlab.geometry import HalfDiskMesh, from_functions
from aqlab.solver import solve_branched
from aqlab.traces import TraceLoop

MESH = HalfDiskMesh.square(256, 1e-8)


@pytest.fixture(scope="module")
def solved():
    cache = {}

    def get(name, angles=256):
        key = (name, angles)
        if key not in cache:
            fx = {"c": case_c(), "x2": x2_map(), "pc": perturbed_c(0.25), "pq1": perturbed_q1(0.25),
                  "pb": perturbed_b(0.25), "b": case_b_winding()}[name]
            cache[key] = solve_branched(fx.trace(angles // 2), mesh=HalfDiskMesh.square(angles, 1e-8))
        return cache[key]

    return get


def test_case_c_closed_forms():
    r = np.geomspace(1e-4, 1, 20)
    p = profile_exact(case_c(), r)
    assert np.allclose(p.D, math.pi * r ** (4 / 3), rtol=1e-12)
    assert np.allclose(p.H, 1.5 * math.pi * r ** (7 / 3), rtol=1e-12)
    assert np.abs(p.I - 2 / 3).max() < 1e-12


def test_sampled_case_c_is_flat():
    p = profile(case_c().on_mesh(MESH))
    # the discrete energy of the sampled map carries the O(h^2) quadrature error uniformly in r
    assert p.alpha == pytest.approx(2 / 3, abs=1e-4)
    assert p.alpha_spread < 1e-9


def test_solver_profiles(solved):
    for name, al in (("c", 2 / 3), ("x2", 1.0)):
        p = profile(solved(name))
        assert p.alpha == pytest.approx(al, abs=2e-3)
        assert p.alpha_spread < 1e-3
        assert check_monotone(p) < 1e-9


def test_zero_map_verdict():
    z = from_functions(MESH, lambda r, t: np.zeros(r.shape + t.shape[1:] + (2, 1)),
                       lambda r, t: np.zeros(r.shape + t.shape[1:] + (1, 1)), 2, 1)
    assert profile(z).verdict == "locally constant"


def test_profile_only_at_the_centre():
    with pytest.raises(ValueError):
        profile(case_c().on_mesh(MESH), x0=(0.5, 0.0))


def test_catalog_maps_have_constant_frequency():
    rng = np.random.default_rng(11)
    for _ in range(10):
        f = random_catalog(rng)
        p = profile_exact(f, np.geomspace(1e-3, 1, 12))
        assert check_monotone(p) == 0.0 or check_monotone(p) < 1e-12
        assert np.abs(p.I - float(f.alpha)).max() < 1e-10


def test_monotonicity_of_perturbed_winding(solved):
    assert check_monotone(profile(solved("pb"))) <= 1e-3


def test_non_minimizer_breaks_monotonicity():
    fu, fl = adversarial_radial()
    f = from_functions(MESH, fu, fl, 2, 1)
    assert check_monotone(profile(f)) > 0.1


def test_energy_identity_converges_at_second_order():
    res = []
    for a in (128, 256):
        p = profile(solve_branched(perturbed_q1(0.25).trace(a // 2), mesh=HalfDiskMesh.square(a, 1e-8)))
        res.append(p.hder_residual)
    assert math.log2(res[0] / res[1]) > 1.8


# ------------------------------------------------------------------ blow-ups

def test_blowup_has_unit_energy_and_is_idempotent():
    f = case_c().on_mesh(MESH)
    k = MESH.rings // 2
    b = blowup(f, k)
    assert b.energy() + profile(b).D[0] == pytest.approx(1.0, rel=1e-9)
    bb = blowup(b, b.mesh.rings - 1)
    assert np.abs(bb.upper - b.upper).max() < 1e-9


def test_blowup_of_homogeneous_map_is_a_rescaling():
    f = case_c().on_mesh(MESH)
    k = MESH.rings // 3
    b = blowup(f, k)
    ref = case_c().on_mesh(b.mesh)
    s = float(np.abs(b.upper).max() / np.abs(ref.upper).max())
    assert np.abs(b.upper - s * ref.upper).max() < 1e-9 * s


def test_blowup_of_zero_map():
    z = from_functions(MESH, lambda r, t: np.zeros(r.shape + t.shape[1:] + (1, 1)),
                       lambda r, t: np.zeros(r.shape + t.shape[1:] + (0, 1)), 1, 1)
    with pytest.raises(ValueError):
        blowup(z, 10)


# ------------------------------------------------------------------ tangent

def test_tangent_of_case_c(solved):
    t = tangent(solved("c"))
    assert t.classification.case == "c"
    assert t.deviation.max() < 1e-6


def test_tangent_of_x2(solved):
    t = tangent(solved("x2"))
    assert t.classification.case == "a"
    assert t.classification.map.l == 1


def test_tangent_of_perturbed_case_c(solved):
    t = tangent(solved("pc"))
    assert t.classification.case == "c"
    assert t.slope is not None and t.slope > 1 / 3


# -------------------------------------------------------------------- rates

@pytest.mark.parametrize("alpha, q, beta", [(Fraction(1), 1, Fraction(1)), (Fraction(2, 3), 2, Fraction(1, 3)),
                                            (Fraction(1, 2), 1, Fraction(1, 2)), (Fraction(1, 2), 2, Fraction(1, 6))])
def test_compute_beta_values(alpha, q, beta):
    assert compute_beta(alpha, q) == beta


@given(st.integers(1, 30), st.integers(1, 12), st.integers(1, 6))
def test_compute_beta_is_positive_and_at_most_one(p, d, q):
    b = compute_beta(Fraction(p, d), q)
    assert 0 < b <= 1
    assert compute_beta(Fraction(p, d), q + 1) <= b


def test_compute_beta_rejects_nonpositive():
    with pytest.raises(ValueError):
        compute_beta(Fraction(0), 1)


def test_exact_homogeneity_branch():
    p = profile_exact(case_c(), np.geomspace(1e-4, 1, 40))
    fit = fit_decay(p, Fraction(2, 3), 2)
    assert fit.exact and fit.passes
    assert abs(fit.D0 - fit.alpha_limit * fit.H0) <= 1e-10 * fit.D0


def test_perturbed_single_sheet_rate(solved):
    # two modes r sin(t) + eps r^2 sin(2t): I - 1 = eps^2 r^2 / (1 + eps^2 r^2) to leading order,
    # so the fitted exponent is twice the mode gap and clears the floor of 1
    fit = fit_decay(profile(solved("pq1")), Fraction(1), 1)
    assert not fit.exact
    assert fit.beta_floor == 1.0
    assert fit.beta_hat == pytest.approx(2.0, abs=0.1)
    assert fit.passes


def test_perturbed_winding_rate_floor(solved):
    # three sheets: the k = 3 term (floor(5/2) + 1 - 5/2) / 5 sets the floor
    fit = fit_decay(profile(solved("pb")), Fraction(1, 2), 3)
    assert fit.beta_floor == pytest.approx(1 / 10)
    assert fit.passes
