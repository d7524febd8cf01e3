"""Lattice geometry, transform pair and interpolation accuracy."""

import numpy as np
import pytest

from magweyl.grid import (
    BoxGrid,
    PhaseGridFunction,
    KernelSample,
    partial_fourier,
    partial_fourier_inv,
    symbol_from_kernel_full,
    kernel_from_symbol_full,
    shift_q,
)


def test_axis_symmetric_no_origin():
    g = BoxGrid(dim=2, half_length=3.0, n=24)
    ax = g.axis()
    assert np.allclose(ax, -ax[::-1])
    assert np.abs(ax).min() > 0
    assert abs(ax[0] + 3.0 - g.delta / 2) < 1e-14
    assert abs(ax[-1] - 3.0 + g.delta / 2) < 1e-14


def test_momentum_axis_covers_nyquist():
    g = BoxGrid(dim=1, half_length=3.0, n=24)
    p = g.momentum().axis()
    assert abs(p[0] + np.pi / g.delta) < 1e-14
    assert abs(p[1] - p[0] - np.pi / g.half_length) < 1e-14
    assert 0.0 in p


def test_grid_validation():
    with pytest.raises(ValueError):
        BoxGrid(dim=0, half_length=1.0, n=8)
    with pytest.raises(ValueError):
        BoxGrid(dim=2, half_length=1.0, n=9)
    with pytest.raises(ValueError):
        BoxGrid(dim=2, half_length=-1.0, n=8)
    with pytest.raises(ValueError):
        BoxGrid(dim=2, half_length=1.0, n=8, bc="absorbing")


def test_transform_round_trip_2d():
    rng = np.random.default_rng(201)
    g = BoxGrid(dim=2, half_length=2.0, n=16)
    vals = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    back = kernel_from_symbol_full(symbol_from_kernel_full(vals, g), g)
    assert np.abs(back - vals).max() < 1e-13


def test_parseval_on_grid():
    rng = np.random.default_rng(202)
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    vals = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    f = symbol_from_kernel_full(vals, g)
    lhs = np.sum(np.abs(vals) ** 2) * g.cell_volume
    rhs = np.sum(np.abs(f) ** 2) * g.momentum().weight
    assert abs(lhs - rhs) < 1e-12 * lhs


def test_constant_symbol_gives_unit_point_mass():
    # the symbol 1 corresponds to the kernel delta_0 / delta^N, the grid
    # representation of a unit point mass under the node weight delta^N
    g = BoxGrid(dim=2, half_length=3.0, n=24)
    ones = PhaseGridFunction(grid=g, values=np.ones((24, 24), dtype=complex))
    ker = partial_fourier_inv(ones)
    k = ker.disp_count // 2
    peak = ker.values[k, k]
    assert abs(peak - 1.0 / g.cell_volume) < 1e-9
    rest = ker.values.copy()
    rest[k, k] = 0.0
    assert np.abs(rest).max() < 1e-9


def test_plane_wave_symbol_shifts_forward():
    # exp(i p a) has kernel concentrated at displacement +a
    g = BoxGrid(dim=1, half_length=3.0, n=24)
    a = 3 * g.delta
    f = PhaseGridFunction(grid=g, values=np.exp(1j * g.momentum().axis() * a))
    ker = partial_fourier_inv(f)
    ax = ker.disp_axis()
    j = int(np.argmax(np.abs(ker.values)))
    assert abs(ax[j] - a) < 1e-12
    assert abs(ker.values[j] - 1.0 / g.delta) < 1e-9


def test_kernel_truncation_records_tail():
    g = BoxGrid(dim=1, half_length=4.0, n=64)
    # wide symbol = narrow kernel (width 1/4), so radius 1.5 covers 6 sigma
    f = PhaseGridFunction.sample(lambda p: np.exp(-np.sum(p**2, -1) / 32), g)
    full = partial_fourier_inv(f)
    trunc = partial_fourier_inv(f, r_disp=1.5)
    assert trunc.disp_count < full.disp_count
    assert trunc.disp_radius <= 1.5 + 1e-12
    dropped = np.abs(full.values).sum() - np.abs(trunc.values).sum()
    assert abs(trunc.tail_mass - (dropped * g.delta + full.tail_mass)) < 1e-12
    assert 0 < trunc.tail_mass < 1e-4


def test_symbol_kernel_symbol_identity_without_truncation():
    rng = np.random.default_rng(203)
    g = BoxGrid(dim=2, half_length=2.0, n=12)
    vals = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    f = PhaseGridFunction(grid=g, values=vals)
    # max_disp_count still drops the unpaired row at -L; rebuild from the
    # full transform to check the exact identity
    full = kernel_from_symbol_full(vals, g)
    again = symbol_from_kernel_full(full, g)
    assert np.abs(again - vals).max() < 1e-12


def test_q_dependent_sampling_layout():
    g = BoxGrid(dim=1, half_length=2.0, n=8)

    def sym(q, p):
        return q[..., 0] * 1.0 + 1j * p[..., 0]

    f = PhaseGridFunction.sample(sym, g, q_independent=False)
    assert f.values.shape == (8, 8)
    assert np.allclose(f.values.real, g.axis()[:, None])
    assert np.allclose(f.values.imag, g.momentum().axis()[None, :])


def test_kernel_sample_validation():
    g = BoxGrid(dim=1, half_length=2.0, n=8)
    with pytest.raises(ValueError):
        KernelSample(grid=g, values=np.zeros((8, 4)), q_independent=False)  # even disp
    with pytest.raises(ValueError):
        KernelSample(grid=g, values=np.zeros((8, 9)), q_independent=False)  # too wide
    ks = KernelSample(grid=g, values=np.zeros(7, dtype=complex), q_independent=True)
    assert ks.disp_count == 7
    assert ks.as_q_dependent().shape == (8, 7)


def test_involution_axis_helpers():
    g = BoxGrid(dim=2, half_length=2.0, n=8)
    ks = KernelSample(
        grid=g,
        values=np.arange(5 * 5, dtype=complex).reshape(5, 5),
        q_independent=True,
    )
    m = ks.disp_mesh()
    assert m.shape == (5, 5, 2)
    assert np.allclose(m[2, 2], 0.0)
    assert np.allclose(m, -m[::-1, ::-1])


def test_interior_mask():
    g = BoxGrid(dim=2, half_length=4.0, n=16)
    mask = g.interior_mask(collar=1.0)
    assert mask.shape == (16, 16)
    ax = g.axis()
    for i in range(16):
        for j in range(16):
            want = abs(ax[i]) < 3.0 and abs(ax[j]) < 3.0
            assert mask[i, j] == want


@pytest.mark.parametrize("scheme,order", [("linear", 2), ("cubic", 4)])
def test_half_shift_convergence(scheme, order):
    # interpolation error at the half lattice decays at the stated order
    errs = []
    for n in (32, 64):
        g = BoxGrid(dim=1, half_length=4.0, n=n)
        ax = g.axis()
        vals = np.exp(-(ax**2)) * np.cos(ax)
        got = shift_q(vals, g, [1], scheme=scheme)
        want = np.exp(-((ax + g.delta / 2) ** 2)) * np.cos(ax + g.delta / 2)
        pad = 4
        errs.append(np.abs(got - want)[pad:-pad].max())
    ratio = errs[0] / errs[1]
    assert ratio > 2 ** (order - 0.8)


def test_whole_shifts_are_exact():
    rng = np.random.default_rng(204)
    g = BoxGrid(dim=2, half_length=2.0, n=8)
    vals = rng.normal(size=(8, 8))
    got = shift_q(vals, g, [2, -4])  # +1 and -2 whole steps
    want = np.zeros_like(vals)
    want[:-1, 2:] = vals[1:, :-2]
    assert np.abs(got - want).max() == 0.0


def test_periodic_shift_wraps():
    rng = np.random.default_rng(205)
    g = BoxGrid(dim=1, half_length=2.0, n=8, bc="periodic")
    vals = rng.normal(size=8)
    got = shift_q(vals, g, [2])
    assert np.abs(got - np.roll(vals, -1)).max() == 0.0


def test_linear_half_shift_never_overshoots():
    # sup stability of the 2-point stencil: output within input bounds
    rng = np.random.default_rng(206)
    g = BoxGrid(dim=1, half_length=2.0, n=16)
    vals = rng.uniform(0.0, 1.0, 16)
    got = shift_q(vals, g, [1], scheme="linear")
    assert got.min() >= -1e-15 and got.max() <= 1.0 + 1e-15
