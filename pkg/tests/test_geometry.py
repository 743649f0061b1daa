"""Half-disk mesh, interface maps, straightening and interface reduction."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aqlab.catalog import catalog
from aqlab.geometry import (AnalyticInterface, HalfDiskMesh, InterfaceMap, add_interface, assemble_energy,
                            avgsym_residual, from_functions, harmonic_extend, normalize_average, reflect, straighten,
                            subtract_interface)

MESH = HalfDiskMesh.square(128, 1e-6)


def x2_map(mesh=MESH):
    return from_functions(mesh, lambda r, t: r * np.sin(t), lambda r, t: np.zeros(r.shape + t.shape[1:] + (0,)), 1, 1)


def test_reflect_examples():
    assert reflect([1.0, 2.0]).tolist() == [1.0, -2.0]
    assert reflect([3.5, 0.0]).tolist() == [3.5, 0.0]


@given(arrays(float, (5, 2), elements=st.floats(-1e6, 1e6)))
def test_reflect_is_an_involution(x):
    assert np.array_equal(reflect(reflect(x)), x)


def test_mesh_validation():
    with pytest.raises(ValueError):
        HalfDiskMesh(1, 8, 0.1)
    with pytest.raises(ValueError):
        HalfDiskMesh(4, 7, 0.1)
    with pytest.raises(ValueError):
        HalfDiskMesh(4, 8, 1.5)
    m = HalfDiskMesh.square(64, 1e-4)
    assert m.kappa == pytest.approx(1.0, rel=0.05)
    assert HalfDiskMesh.from_json(m.to_json()) == m


def test_axis_nodes_lie_on_the_axis():
    assert not MESH.upper_xy[:, [0, MESH.m], 1].any()
    assert not MESH.lower_xy[:, [0, MESH.m], 1].any()


def test_sheet_count_contract():
    U = np.zeros((MESH.rings, MESH.m + 1, 2, 1))
    with pytest.raises(ValueError, match="upper.q must equal lower.q"):
        InterfaceMap(MESH, U, U)


def test_constant_map_has_zero_energy():
    f = from_functions(MESH, lambda r, t: np.full(r.shape + t.shape[1:] + (2, 1), 3.0),
                       lambda r, t: np.full(r.shape + t.shape[1:] + (1, 1), 3.0), 2, 1)
    assert f.energy() == 0.0


def test_x2_energy_converges_at_second_order():
    errs = []
    for a in (64, 128, 256):
        errs.append(abs(x2_map(HalfDiskMesh.square(a, 1e-8)).energy() - math.pi / 2))
    assert errs[-1] < 1e-4
    assert math.log2(errs[0] / errs[1]) > 1.8 and math.log2(errs[1] / errs[2]) > 1.8


def test_case_c_energy():
    f = catalog("c", c=[1.0]).on_mesh(HalfDiskMesh.square(256, 1e-8))
    assert f.energy() == pytest.approx(math.pi, rel=1e-3)


@given(st.integers(1, MESH.rings - 2))
def test_energy_is_additive_over_annuli(k):
    f = catalog("c", c=[1.0]).on_mesh(MESH)
    parts = assemble_energy(f, (0, k)) + assemble_energy(f, (k, MESH.rings))
    assert parts == pytest.approx(f.energy(), rel=1e-14)


def test_map_serialization_round_trip():
    f = catalog("c", c=[1.0]).on_mesh(HalfDiskMesh.square(16, 1e-2))
    g = InterfaceMap.from_json(f.to_json())
    assert np.array_equal(g.upper, f.upper) and np.array_equal(g.lower, f.lower)


# ----------------------------------------------------------- straightening

def test_zero_interface_straightens_to_identity():
    st_ = straighten(AnalyticInterface(()), 1.0)
    z = np.array([0.3 + 0.2j, -0.5j])
    assert np.array_equal(st_.forward(z), z)


def test_straightening_hits_the_graph():
    st_ = straighten(AnalyticInterface((1.0,)), 0.2)
    assert st_.forward(0.1) == pytest.approx(0.1 + 0.01j, abs=1e-16)
    w = 0.15 * np.exp(1j * np.linspace(0, 2 * np.pi, 50))
    assert np.abs(st_.forward(st_.inverse(w)) - w).max() < 1e-12


def test_straightening_radius_too_large():
    with pytest.raises(ValueError, match="radius too large for invertibility"):
        straighten(AnalyticInterface((1.0,)), 1.0)


# ------------------------------------------------------ harmonic extension

def test_harmonic_extension_examples():
    x1, x2 = np.array([0.3, -0.7, 0.1]), np.array([0.2, 0.5, -0.4])
    assert not harmonic_extend([0.0])(x1, x2).any()
    assert harmonic_extend([0.0, 1.0])(x1, x2)[:, 0] == pytest.approx(x1)
    assert harmonic_extend([0.0, 0.0, 1.0])(x1, x2)[:, 0] == pytest.approx(x1 ** 2 - x2 ** 2)


@given(arrays(float, (4,), elements=st.floats(-5, 5)))
def test_harmonic_extension_has_zero_laplacian(c):
    p = harmonic_extend(list(c))
    x, y, h = 0.31, -0.27, 1e-3
    lap = (p(x + h, y) + p(x - h, y) + p(x, y + h) + p(x, y - h) - 4 * p(x, y)) / h ** 2
    assert abs(float(lap[0])) < 1e-4 * max(1.0, float(np.abs(c).max()))
    assert p(np.array(0.6), np.array(0.0))[0] == pytest.approx(np.polyval(c[::-1], 0.6))


def test_harmonic_extension_rejects_functions():
    with pytest.raises(ValueError, match="unsupported boundary class"):
        harmonic_extend(lambda t: t)


def test_subtract_linear_extension():
    f = from_functions(MESH, lambda r, t: r * np.cos(t), lambda r, t: np.zeros(r.shape + t.shape[1:] + (0,)), 1, 1)
    ext = harmonic_extend([0.0, 1.0], 1)
    g = subtract_interface(f, ext)
    assert np.abs(g.upper).max() < 1e-15
    back = add_interface(g, ext)
    assert np.abs(back.upper - f.upper).max() < 1e-15


def test_subtract_zero_is_identity():
    f = catalog("c", c=[1.0]).on_mesh(MESH)
    g = subtract_interface(f, harmonic_extend([0.0], 1))
    assert np.array_equal(g.upper, f.upper) and g.phi is None


# ----------------------------------------------------- average normalization

def _two_sheet_fixture(mesh):
    y = mesh.upper_xy[..., 1]
    yl = mesh.lower_xy[..., 1]
    U = np.stack([y, 0 * y], -1)[..., None]
    return InterfaceMap(mesh, U, np.zeros(yl.shape + (1, 1)))


def test_normalize_average_hand_example():
    f = _two_sheet_fixture(MESH)
    g = normalize_average(f)
    y = MESH.upper_xy[..., 1]
    yl = MESH.lower_xy[..., 1]
    want = np.sort(np.stack([2 * y / 3, -y / 3], -1), axis=-1)
    assert np.abs(np.sort(g.upper[..., 0], axis=-1) - want).max() < 1e-15
    assert np.abs(g.lower[..., 0, 0] - (-yl / 3)).max() < 1e-15
    assert avgsym_residual(g) < 1e-15
    assert g.interface_residual() == 0.0


def test_normalize_average_is_idempotent():
    g = normalize_average(_two_sheet_fixture(MESH))
    h = normalize_average(g)
    assert np.abs(h.upper - g.upper).max() < 1e-15


def test_case_c_already_symmetric():
    f = catalog("c", c=[1.0]).on_mesh(MESH)
    assert avgsym_residual(f) < 1e-14
    assert np.abs(normalize_average(f).upper - f.upper).max() < 1e-14


def test_normalize_average_mean_mismatch():
    y = MESH.upper_xy[..., 1]
    U = np.stack([y, 0 * y + 1.0], -1)[..., None]
    f = InterfaceMap(MESH, U, np.zeros(y.shape + (1, 1)))
    with pytest.raises(ValueError, match="interface mean mismatch"):
        normalize_average(f)
