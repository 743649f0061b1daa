"""Boundary loops: sheet tracking, decomposition, unrolling and half-wave series."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aqlab.aq import matched_sq
from aqlab.experiments import case_b_winding, case_c, random_fourier, x2_map
from aqlab.geometry import HalfDiskMesh
from aqlab.traces import (ResolutionError, TraceLoop, UnrolledSheet, decompose_trace, extend_halfwave,
                          fourier_halfwave, halfwave_eval, select_sheets, trace_from_functions, unroll, unroll_map,
                          unwind)


def test_select_constant_pair():
    V = np.zeros((20, 2, 1))
    assert np.array_equal(select_sheets(V), V)


def test_select_crossing_lines():
    t = np.linspace(-1, 1, 41)
    V = np.sort(np.stack([t, -t], -1), axis=-1)[..., None]
    S = select_sheets(V)[..., 0]
    assert np.allclose(np.sort(S, axis=1), np.sort(V[..., 0], axis=1))
    # either branch choice at the crossing is a valid pair of Lipschitz selections
    assert np.abs(np.diff(S, axis=0)).max() <= 0.05 + 1e-12


def test_select_flags_ambiguous_samples():
    d = 1e-3
    V = np.array([[[-d, 0.0], [d, 0.0]], [[0.0, -1.0], [0.0, 1.0]]])
    with pytest.raises(ResolutionError, match="insufficient resolution"):
        select_sheets(V)


@given(st.integers(0, 2 ** 31))
def test_selections_respect_the_derivative_bound(seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, 200)[:, None]
    V = np.stack([np.sin(3 * t + rng.normal()) + rng.normal() for _ in range(3)], 1)
    V = rng.permuted(V, axis=1)
    S = select_sheets(V, check=False)
    jump_multi = np.sqrt(matched_sq(V[:-1], V[1:]))
    jump_sel = np.abs(np.diff(S, axis=0))[..., 0]
    assert np.all(jump_sel.max(axis=1) <= jump_multi + 1e-12)
    assert np.allclose(np.sort(S, axis=1), np.sort(V, axis=1))


def test_trace_shape_contract():
    with pytest.raises(ValueError, match="upper.q must equal lower.q"):
        TraceLoop(np.zeros((5, 2, 1)), np.zeros((5, 2, 1)))


def test_single_sheet_arc_is_one_block():
    g = x2_map().trace(64)
    dec = decompose_trace(g)
    assert dec.g0.q == 1 and dec.blocks == ()


def test_case_c_is_one_half_block():
    dec = decompose_trace(case_c().trace(256))
    assert dec.g0.q == 2 and dec.blocks == ()
    zeta = unwind(dec.g0)[:, 0]
    assert np.abs(zeta - np.sin(np.linspace(0, 2 * np.pi, zeta.size))).max() < 1e-14


def test_winding_block_over_zero_sheet():
    dec = decompose_trace(case_b_winding().trace(256))
    assert dec.g0.q == 1
    assert [(b.q, b.k) for b in dec.blocks] == [(2, 1)]
    z = unwind(dec.blocks[0])
    ph = 2 * np.pi * np.arange(z.shape[0]) / z.shape[0]
    assert np.abs(z - np.stack([np.cos(ph), np.sin(ph)], -1)).max() < 1e-14


@given(st.integers(0, 2 ** 31))
def test_decomposition_reconstructs_the_trace(seed):
    g = random_fourier(np.random.default_rng(seed), max_q=4, n=3).trace(128)
    try:
        dec = decompose_trace(g)
    except ResolutionError:
        return
    rec = dec.reconstruct()
    assert dec.q == g.q
    assert math.sqrt(matched_sq(rec.upper, g.upper).max()) <= 1e-8 * g.scale()
    assert dec.g0.irreducible and all(b.irreducible for b in dec.blocks)


def test_interface_violation_is_rejected():
    g = trace_from_functions(32, lambda t: np.cos(t)[:, None, None] + 1.0, lambda t: np.zeros((t.size, 0, 1)), 1, 1)
    with pytest.raises(ValueError, match="interface condition"):
        decompose_trace(g)


def test_json_round_trip():
    g = case_b_winding().trace(32)
    h = TraceLoop.from_json(g.to_json())
    assert matched_sq(h.upper, g.upper).max() == 0.0 and matched_sq(h.lower, g.lower).max() == 0.0


# ---------------------------------------------------------------- unrolling

@pytest.fixture(scope="module")
def chart_c():
    mesh = HalfDiskMesh.square(512, 1e-8)
    return UnrolledSheet.from_function(mesh, 2, True, lambda rho, ph: rho * np.sin(ph))


def test_unrolled_linear_chart_is_case_c(chart_c):
    f = unroll_map(chart_c)
    ref = case_c().on_mesh(chart_c.mesh)
    assert math.sqrt(matched_sq(f.upper, ref.upper).max()) < 1e-13
    assert math.sqrt(matched_sq(f.lower, ref.lower).max()) < 1e-13


def test_unroll_energy_identities(chart_c):
    f = unroll_map(chart_c)
    assert chart_c.energy() == pytest.approx(math.pi, rel=1e-4)
    assert f.energy() == pytest.approx(chart_c.energy(), rel=1e-4)
    assert chart_c.boundary_energy() * (2 / 3) == pytest.approx(2 * math.pi / 3, rel=1e-4)


def test_zero_chart():
    mesh = HalfDiskMesh.square(32, 1e-3)
    s = UnrolledSheet.from_function(mesh, 3, True, lambda rho, ph: 0 * rho * ph)
    up, lo = unroll(s)
    assert up.shape[2] == 3 and lo.shape[2] == 2
    assert s.energy() == 0.0 and not up.any()


# -------------------------------------------------------- half-wave series

PH = np.linspace(0, 2 * np.pi, 1025)


def test_halfwave_single_modes():
    c = fourier_halfwave(np.sin(PH / 2)).coeffs[:, 0]
    assert c[0] == pytest.approx(1.0, abs=1e-14) and np.abs(c[1:]).max() < 1e-14
    c = fourier_halfwave(np.sin(PH)).coeffs[:, 0]
    assert c[1] == pytest.approx(1.0, abs=1e-14) and np.abs(np.delete(c, 1)).max() < 1e-14


def test_halfwave_reconstruction():
    z = PH * (2 * np.pi - PH) * np.cos(PH)
    s = fourier_halfwave(z, modes=1023)
    assert np.abs(halfwave_eval(s, PH)[:, 0] - z).max() < 1e-10


def test_halfwave_rejects_nonzero_ends():
    with pytest.raises(ValueError):
        fourier_halfwave(np.cos(PH))


@pytest.mark.parametrize("mode, energy, boundary", [(2, math.pi, math.pi), (1, math.pi / 2, math.pi / 4)])
def test_halfwave_extension_energies(mode, energy, boundary):
    s = fourier_halfwave(np.sin(mode * PH / 2), modes=4)
    assert s.energy() == pytest.approx(energy, rel=1e-12)
    assert s.boundary_energy() == pytest.approx(boundary, rel=1e-12)
    mesh = HalfDiskMesh.square(512, 1e-8)
    chart = UnrolledSheet.from_function(mesh, 1, True, lambda rho, ph: extend_halfwave(s, rho, ph))
    assert chart.energy() == pytest.approx(energy, rel=1e-4)


def test_halfwave_ratio_saturates_for_the_first_mode():
    s = fourier_halfwave(np.sin(PH / 2))
    assert s.energy() / s.boundary_energy() == pytest.approx(2.0, rel=1e-12)


def test_zero_series():
    s = fourier_halfwave(np.zeros_like(PH))
    assert s.energy() == 0.0 and s.boundary_energy() == 0.0
