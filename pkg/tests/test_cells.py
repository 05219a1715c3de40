from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from contract_upscale.cells import (CellPopulation, DensityField, SamplingConfig, SplitMix64,
                                    constant_density, density_from_positions, gaussian1d,
                                    gaussian2d, place_cells_random_2d, random_cells_1d,
                                    read_cells_csv, round_half_away, sample_cells_1d,
                                    sample_cells_2d, sine1d, write_cells_csv)
from contract_upscale.errors import DataError, DomainError
from contract_upscale.mesh import Rect, build_mesh_1d, build_tri_mesh_2d


def test_splitmix64_reference_stream():
    # first outputs for seed 0 of the published reference implementation
    g = SplitMix64(0)
    assert g.next_u64() == 0xE220A8397B1DCDAF
    assert g.next_u64() == 0x6E789E6AA1B965F4
    assert g.next_u64() == 0x06C45D188009454F


def test_uniform_in_unit_interval():
    g = SplitMix64(12345)
    vals = [g.uniform() for _ in range(1000)]
    assert min(vals) >= 0.0 and max(vals) < 1.0


@pytest.mark.parametrize("x, expected", [(0.5, 1), (1.5, 2), (2.5, 3), (-0.5, -1), (0.49, 0), (2.4999, 2)])
def test_round_half_away(x, expected):
    assert round_half_away(x) == expected


def test_sample_constant_density_1d():
    cells = sample_cells_1d(constant_density(10.0), 1.0, SamplingConfig(bin_length=0.5))
    assert cells.count == 10
    assert np.allclose(cells.positions, np.arange(10) * 0.1 + 0.05, atol=1e-15)


def test_sample_zero_density_is_empty():
    cells = sample_cells_1d(constant_density(0.0), 7.0, SamplingConfig())
    assert cells.count == 0


def test_sample_gaussian1d_count_matches_quadrature_oracle():
    dens = gaussian1d(50.0, 3.5, 0.1)
    d = 0.35
    expected = 0
    for k in range(20):
        val, _ = quad(lambda x: float(dens(x)), k * d, (k + 1) * d, epsabs=1e-12, points=[3.5])
        expected += round_half_away(val)
    cells = sample_cells_1d(dens, 7.0, SamplingConfig(bin_length=d))
    assert cells.count == expected
    assert abs(cells.count - 50) <= 2


def test_sample_sine_density_nonnegative_counts():
    cells = sample_cells_1d(sine1d(40.0, 2.0), 7.0, SamplingConfig())
    mesh = build_mesh_1d(7.0, 0.35)
    counts = density_from_positions(mesh, cells).counts
    assert np.all(counts >= 0)
    assert cells.count > 0


def test_sample_rejects_negative_density():
    neg = DensityField("constant", {"value": -1.0})
    with pytest.raises(DataError):
        sample_cells_1d(neg, 1.0, SamplingConfig(bin_length=0.5))


def test_sampling_config_validation():
    with pytest.raises(DomainError):
        SamplingConfig(bin_length=0.0)
    with pytest.raises(DomainError):
        SamplingConfig(placement="poisson")
    with pytest.raises(DomainError):
        sample_cells_1d(constant_density(1.0), 1.0, SamplingConfig(bin_length=2.0))


def test_seeded_random_sampling_is_deterministic():
    cfg = SamplingConfig(0.35, "seeded_random", seed=99)
    a = sample_cells_1d(sine1d(), 7.0, cfg)
    b = sample_cells_1d(sine1d(), 7.0, cfg)
    assert np.array_equal(a.positions, b.positions)
    assert np.all(np.diff(a.positions) >= 0)


def test_sample_2d_constant_square():
    cells = sample_cells_2d(constant_density(4.0, 2), Rect(0, 0, 1, 1), SamplingConfig())
    expected = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
    assert np.allclose(cells.positions, expected)


def test_sample_2d_small_mass_rounds_to_zero():
    cells = sample_cells_2d(constant_density(0.49, 2), Rect(0, 0, 2, 2), SamplingConfig())
    assert cells.count == 0


def test_sample_gaussian2d_count_matches_oracle():
    from scipy.integrate import dblquad
    dens = gaussian2d(50.0)
    expected = 0
    for j in range(-10, 10):
        for i in range(-10, 10):
            if max(abs(i + 0.5), abs(j + 0.5)) > 6:
                continue   # mass there is far below 0.5
            val, _ = dblquad(lambda y, x: float(dens(np.array([[x, y]]))[0]), i, i + 1, j, j + 1,
                             epsabs=1e-10)
            expected += round_half_away(val)
    cells = sample_cells_2d(dens, Rect(-10, -10, 10, 10), SamplingConfig())
    assert cells.count == expected


def test_place_random_2d():
    region = Rect(-5, -5, 5, 5)
    assert place_cells_random_2d(0, region, 1).count == 0
    a = place_cells_random_2d(196, region, 42)
    b = place_cells_random_2d(196, region, 42)
    assert a.count == 196
    assert np.array_equal(a.positions, b.positions)
    assert np.all(region.contains(a.positions))
    g = SplitMix64(42)
    assert a.positions[0, 0] == -5 + g.uniform() * 10
    assert a.positions[0, 1] == -5 + g.uniform() * 10


def test_random_cells_1d_sorted_inside():
    c = random_cells_1d(100, 2.0, 5.0, seed=3)
    assert np.all(np.diff(c.positions) >= 0)
    assert np.all((c.positions > 2.0) & (c.positions < 5.0))


def test_density_from_positions_1d():
    mesh = build_mesh_1d(1.0, 0.1)
    d = density_from_positions(mesh, CellPopulation(np.array([0.35]), 1))
    expected = np.zeros(10)
    expected[3] = 10.0
    assert np.allclose(d.values, expected)


def test_density_from_positions_tie_goes_to_lower_element():
    mesh = build_mesh_1d(1.0, 0.25)
    d = density_from_positions(mesh, CellPopulation(np.array([0.5]), 1))
    assert d.counts.tolist() == [0, 1, 0, 0]


def test_density_from_positions_2d_hand_value():
    # 0.2 x 0.2 quads, so every triangle has area 0.02
    mesh = build_tri_mesh_2d(Rect(0, 0, 0.4, 0.4), 0.2)
    pts = np.array([[0.15, 0.02], [0.18, 0.05], [0.19, 0.1]])   # below the diagonal of quad 0
    d = density_from_positions(mesh, CellPopulation(pts, 2))
    assert d.counts[0] == 3
    assert d.values[0] == pytest.approx(150.0)


def test_density_from_positions_outside_names_cell():
    mesh = build_mesh_1d(1.0, 0.1)
    with pytest.raises(DataError, match="cell 1"):
        density_from_positions(mesh, CellPopulation(np.array([0.5, 1.5]), 1))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 300), st.integers(0, 2**32))
def test_density_conserves_count_1d(n, seed):
    mesh = build_mesh_1d(7.0, 0.07)
    cells = random_cells_1d(n, 0.01, 6.99, seed)
    d = density_from_positions(mesh, cells)
    assert np.sum(d.values * mesh.element_lengths()) == pytest.approx(n, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 200), st.integers(0, 2**32))
def test_density_conserves_count_2d(n, seed):
    mesh = build_tri_mesh_2d(Rect(-2, -2, 2, 2), 0.5)
    cells = place_cells_random_2d(n, Rect(-1.5, -1.5, 1.5, 1.5), seed)
    d = density_from_positions(mesh, cells)
    assert np.sum(d.values * mesh.geometry()[0]) == pytest.approx(n, abs=1e-9)


def test_round_trip_counts_through_sampling():
    # piecewise density aligned with the mesh, sampled with bin = element
    mesh = build_mesh_1d(7.0, 0.35)
    rng = np.random.default_rng(5)
    counts = rng.integers(0, 6, mesh.n_elements).astype(float)
    dens = DensityField(mesh=mesh, values=counts / mesh.element_lengths())
    cells = sample_cells_1d(dens, 7.0, SamplingConfig(bin_length=0.35))
    back = density_from_positions(mesh, cells)
    assert np.array_equal(back.counts, counts)


def test_piecewise_density_evaluation():
    mesh = build_mesh_1d(1.0, 0.5)
    dens = DensityField(mesh=mesh, values=np.array([2.0, 3.0]))
    assert dens(np.array([0.25, 0.75])).tolist() == [2.0, 3.0]
    assert dens.dimension == 1 and not dens.is_analytic


def test_presets_formulas():
    assert gaussian1d(50, 3.5, 0.1)(3.5) == pytest.approx(50 / math.sqrt(2 * math.pi * 0.01))
    assert sine1d(40, 2)(1.0) == pytest.approx(40 * abs(math.sin(2.0)))
    assert gaussian2d(50)(np.array([[0.0, 0.0]]))[0] == pytest.approx(50 / (2 * math.pi))
    assert gaussian2d(50).dimension == 2


def test_cells_csv_round_trip(tmp_path):
    for cells in (random_cells_1d(20, 1, 2, 4), place_cells_random_2d(20, Rect(0, 0, 1, 1), 4),
                  CellPopulation(np.zeros(0), 1)):
        p = tmp_path / "cells.csv"
        write_cells_csv(cells, p)
        back = read_cells_csv(p)
        assert back.dimension == cells.dimension
        assert np.array_equal(back.positions, cells.positions)


def test_empty_cells_csv_is_header_only(tmp_path):
    p = tmp_path / "cells.csv"
    write_cells_csv(CellPopulation(np.zeros(0), 1), p)
    assert p.read_text() == "x\n"


def test_read_cells_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("z\n1\n")
    with pytest.raises(DataError):
        read_cells_csv(p)
    p.write_text("x,y\n1\n")
    with pytest.raises(DataError):
        read_cells_csv(p)
