"""Twisted kernel algebra: product routes, involution, representation."""

import numpy as np
import pytest
from scipy.signal import fftconvolve

from magweyl.fields import (
    GaugeFunction,
    MagneticField,
    gauge_shift,
    transversal_gauge,
)
from magweyl.grid import BoxGrid, KernelSample, MomentumGrid, PhaseGridFunction
from magweyl.crossed import (
    BandedOperator,
    UnitizedKernel,
    delta_kernel,
    kernel_from_func,
    kernel_lincomb,
    l1_norm,
    load_matrix_bin,
    load_matrix_csv,
    multiplier_kernel,
    op_norm,
    op_weyl,
    rep,
    rep_banded,
    save_matrix_bin,
    save_matrix_csv,
    twisted_involution,
    twisted_product,
    twisted_product_reference,
)


def gauss_kernel(cq, cx, sq=0.8, sx=0.5, amp=1.0):
    """Complex Gaussian in base point and displacement, exact callable."""

    def f(q, x):
        q = np.asarray(q, float)
        x = np.asarray(x, float)
        dq = np.sum((q - np.asarray(cq)) ** 2, axis=-1)
        dx = np.sum((x - np.asarray(cx)) ** 2, axis=-1)
        return amp * np.exp(-dq / (2 * sq**2) - dx / (2 * sx**2)) * (1.0 + 0.3j)

    return f


def variable_field():
    def b(p):
        p = np.asarray(p, float)
        return 0.8 + 0.5 * np.exp(-np.sum(p * p, axis=-1) / 3.0)

    return MagneticField.from_scalar_2d(b)


def pair_on(grid, disp_count, attach=True):
    phi = kernel_from_func(
        gauss_kernel([0.3, -0.2], [0.1, 0.0]), grid, disp_count=disp_count, attach_func=attach
    )
    psi = kernel_from_func(
        gauss_kernel([-0.1, 0.4], [0.0, -0.2], amp=0.7), grid, disp_count=disp_count, attach_func=attach
    )
    return phi, psi


# ---------------------------------------------------------------------------
# product routes
# ---------------------------------------------------------------------------


def test_b_zero_qindep_is_plain_convolution():
    # oracle: ordinary convolution in the displacement variable
    rng = np.random.default_rng(31)
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    b = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    oracle = fftconvolve(a, b) * g.cell_volume
    phi = KernelSample(grid=g, values=a, q_independent=True)
    psi = KernelSample(grid=g, values=b, q_independent=True)
    prod = twisted_product(phi, psi, MagneticField.zero(2))
    assert prod.q_independent
    assert np.abs(prod.values - oracle).max() < 1e-10


@pytest.mark.parametrize("attach", [True, False])
def test_tilde_route_agreement_all_fields(attach):
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    phi, psi = pair_on(g, 7, attach=attach)
    fields = [MagneticField.zero(2), MagneticField.constant_2d(0.9), variable_field()]
    for fld in fields:
        p = twisted_product(phi, psi, fld, sheet="tilde")
        r = twisted_product_reference(phi, psi, fld, sheet="tilde")
        assert np.abs(p.values - r.values).max() < 1e-12


def test_tilde_route_agreement_mixed_inputs():
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    phi, _ = pair_on(g, 7, attach=True)
    _, psi = pair_on(g, 7, attach=False)
    fld = variable_field()
    p = twisted_product(phi, psi, fld, sheet="tilde")
    r = twisted_product_reference(phi, psi, fld, sheet="tilde")
    assert np.abs(p.values - r.values).max() < 1e-12


def test_tilde_route_agreement_qindep_against_variable_field():
    # base-point independent kernels but a non-constant field: the general
    # path with padded broadcast factors
    rng = np.random.default_rng(32)
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    b = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    phi = KernelSample(grid=g, values=a, q_independent=True)
    psi = KernelSample(grid=g, values=b, q_independent=True)
    fld = variable_field()
    # order-16 circulation: random kernels weight the largest displacement
    # triangles fully, so the two phase quadratures must both be converged
    p = twisted_product(phi, psi, fld, sheet="tilde", order=16)
    r = twisted_product_reference(phi, psi, fld, sheet="tilde", order=16)
    assert not p.q_independent
    assert np.abs(p.values - r.values).max() < 1e-12


def test_qindep_const_fast_path_matches_reference():
    rng = np.random.default_rng(33)
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    a = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
    b = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    phi = KernelSample(grid=g, values=a, q_independent=True)
    psi = KernelSample(grid=g, values=b, q_independent=True)
    fld = MagneticField.constant_2d(0.9)
    p = twisted_product(phi, psi, fld)
    r = twisted_product_reference(phi, psi, fld)
    assert p.q_independent and r.q_independent
    assert np.abs(p.values - r.values).max() < 1e-12


def test_centered_route_agreement_refines():
    # recentering interpolates on odd displacement rows; the gap to the
    # exact route must shrink with the step
    fld = MagneticField.constant_2d(0.9)
    errs = []
    for n, dc in [(12, 7), (24, 13)]:
        g = BoxGrid(dim=2, half_length=3.0, n=n)
        phi, psi = pair_on(g, dc)
        p = twisted_product(phi, psi, fld, scheme="cubic")
        r = twisted_product_reference(phi, psi, fld)
        errs.append(np.abs(p.values[..., 3, 3] - r.values[..., 3, 3]).max())
    assert errs[1] < errs[0] / 2.5


def test_delta_is_two_sided_unit():
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    dl = delta_kernel(g)
    fld = variable_field()
    phi, _ = pair_on(g, 7)
    for k in (phi, phi_as_array(phi)):
        left = twisted_product(dl, k, fld)
        right = twisted_product(k, dl, fld)
        assert np.abs(left.values - k.values).max() == 0.0
        assert np.abs(right.values - k.values).max() == 0.0


def phi_as_array(k):
    return KernelSample(grid=k.grid, values=k.values.copy(), q_independent=k.q_independent)


def test_multiplier_closed_form_matches_reference():
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    fld = variable_field()
    _, psi = pair_on(g, 7)
    v = multiplier_kernel(lambda q: 1.0 / (1.0 + np.sum(q * q, axis=-1)), g)
    left = twisted_product(v, psi, fld)
    right = twisted_product(psi, v, fld)
    lref = twisted_product_reference(v, psi, fld)
    rref = twisted_product_reference(psi, v, fld)
    assert np.abs(left.values - lref.values).max() < 1e-12
    assert np.abs(right.values - rref.values).max() < 1e-12


def test_tail_mass_recorded_and_warns():
    rng = np.random.default_rng(34)
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    a = rng.normal(size=(7, 7))
    phi = KernelSample(grid=g, values=a, q_independent=True)
    with pytest.warns(UserWarning, match="discarded"):
        prod = twisted_product(phi, phi, MagneticField.zero(2), out_disp_count=3)
    assert prod.tail_mass > 0
    assert prod.meta.get("tail_warning")


def test_product_submultiplicative_l1():
    # linear interpolation never overshoots, so the norm inequality is exact
    rng = np.random.default_rng(35)
    g = BoxGrid(dim=1, half_length=4.0, n=16)
    fld = MagneticField.zero(1)
    for _ in range(5):
        a = rng.normal(size=(16, 7)) + 1j * rng.normal(size=(16, 7))
        b = rng.normal(size=(16, 7)) + 1j * rng.normal(size=(16, 7))
        phi = KernelSample(grid=g, values=a)
        psi = KernelSample(grid=g, values=b)
        prod = twisted_product(phi, psi, fld)
        assert l1_norm(prod) <= l1_norm(phi) * l1_norm(psi) + prod.tail_mass + 1e-10


# ---------------------------------------------------------------------------
# involution
# ---------------------------------------------------------------------------


def test_involution_is_involutive():
    rng = np.random.default_rng(36)
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    vals = rng.normal(size=(8, 8, 5, 5)) + 1j * rng.normal(size=(8, 8, 5, 5))
    k = KernelSample(grid=g, values=vals)
    back = twisted_involution(twisted_involution(k))
    assert np.abs(back.values - k.values).max() == 0.0
    assert l1_norm(back) == l1_norm(k)


def test_involution_fixed_point_real_even():
    g = BoxGrid(dim=1, half_length=3.0, n=8)
    x = g.disp_axis(5)
    vals = np.exp(-np.abs(x))
    k = KernelSample(grid=g, values=np.broadcast_to(vals, (8, 5)).copy())
    flipped = twisted_involution(k)
    assert np.abs(flipped.values - k.values).max() == 0.0


def test_involution_antihomomorphism_on_tilde_sheet():
    # (phi <> psi)^inv ~(r;x) = conj((phi <> psi)~(r+x;-x)), all on-lattice
    g = BoxGrid(dim=2, half_length=3.0, n=10)
    phi, psi = pair_on(g, 5)
    fld = variable_field()
    P = twisted_product(phi, psi, fld, sheet="tilde")
    Q = twisted_product(twisted_involution(psi), twisted_involution(phi), fld, sheet="tilde")
    d = P.disp_count
    kk = d // 2
    n = g.n
    worst = 0.0
    for j1 in range(d):
        for j2 in range(d):
            s1, s2 = j1 - kk, j2 - kk
            r1 = np.arange(max(0, -s1), n - max(0, s1))
            r2 = np.arange(max(0, -s2), n - max(0, s2))
            lhs = Q.values[np.ix_(r1, r2)][:, :, j1, j2]
            rhs = np.conj(P.values[np.ix_(r1 + s1, r2 + s2)][:, :, d - 1 - j1, d - 1 - j2])
            worst = max(worst, np.abs(lhs - rhs).max())
    assert worst < 1e-12


def test_rep_star_property():
    g = BoxGrid(dim=2, half_length=3.0, n=10)
    phi, _ = pair_on(g, 5, attach=False)
    pot = transversal_gauge(variable_field())
    M = rep(pot, phi).mat
    Ms = rep(pot, twisted_involution(phi)).mat
    assert np.abs(Ms - M.conj().T).max() < 1e-12


# ---------------------------------------------------------------------------
# L1 norm
# ---------------------------------------------------------------------------


def test_l1_norm_zero():
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    k = KernelSample(grid=g, values=np.zeros((5, 5)), q_independent=True)
    assert l1_norm(k) == 0.0


def test_l1_norm_gaussian_analytic():
    # q-independent Gaussian in x: the norm is the plain integral
    g = BoxGrid(dim=1, half_length=6.0, n=96)
    s = 0.6
    x = g.disp_axis(g.max_disp_count())
    vals = np.exp(-(x**2) / (2 * s**2))
    k = KernelSample(grid=g, values=vals, q_independent=True)
    exact = np.sqrt(2 * np.pi) * s
    assert abs(l1_norm(k) - exact) < 1e-6


def test_l1_norm_triangle_inequality():
    rng = np.random.default_rng(37)
    g = BoxGrid(dim=1, half_length=3.0, n=12)
    for _ in range(10):
        a = rng.normal(size=(12, 7)) + 1j * rng.normal(size=(12, 7))
        b = rng.normal(size=(12, 7)) + 1j * rng.normal(size=(12, 7))
        ka = KernelSample(grid=g, values=a)
        kb = KernelSample(grid=g, values=b)
        s = kernel_lincomb([(1.0, ka), (1.0, kb)])
        assert l1_norm(s) <= l1_norm(ka) + l1_norm(kb) + 1e-12


# ---------------------------------------------------------------------------
# representation
# ---------------------------------------------------------------------------


def test_rep_multiplier_is_diagonal():
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    a = lambda q: np.sum(q, axis=-1) + 0.5
    k = multiplier_kernel(a, g)
    pot = transversal_gauge(MagneticField.constant_2d(0.7))
    M = rep(pot, k).mat
    pts = g.points()
    assert np.abs(M - np.diag(a(pts))).max() < 1e-13


def test_rep_fourier_diagonalization_periodic():
    # A=0, base-point independent kernel on the periodic box: eigenvalues
    # are the transform samples at the momentum nodes
    rng = np.random.default_rng(38)
    g = BoxGrid(dim=1, half_length=4.0, n=16, bc="periodic")
    vals = rng.normal(size=9) + 1j * rng.normal(size=9)
    vals = vals + np.conj(vals[::-1])
    k = KernelSample(grid=g, values=vals, q_independent=True)
    pot = transversal_gauge(MagneticField.zero(1))
    ev = np.sort(np.linalg.eigvalsh(rep(pot, k).mat))
    full = np.zeros(g.n, dtype=complex)
    for i in range(9):
        full[(i - 4) % g.n] = vals[i]
    p = MomentumGrid(g).axis()
    y = np.arange(g.n) * g.delta
    f = (np.exp(1j * np.outer(p, y)) @ full) * g.delta
    assert np.abs(f.imag).max() < 1e-12
    assert np.abs(np.sort(f.real) - ev).max() < 1e-10


def test_rep_contractivity_on_random_kernels():
    rng = np.random.default_rng(39)
    g = BoxGrid(dim=1, half_length=3.0, n=16)
    pot = transversal_gauge(MagneticField.zero(1))
    for _ in range(100):
        vals = rng.normal(size=(16, 9)) + 1j * rng.normal(size=(16, 9))
        k = KernelSample(grid=g, values=vals)
        M = rep(pot, k).mat
        assert np.linalg.norm(M, 2) <= l1_norm(k) + 1e-12


def test_homomorphism_refinement_sweep():
    # operator-norm defect of rep(phi <> psi) vs rep(phi) rep(psi) must
    # shrink at least fourfold per halving of the step
    def profile(c, amp):
        def f(q, x):
            q = np.asarray(q, float)
            x = np.asarray(x, float)
            xr = np.clip(np.abs(x).squeeze(-1) / 1.2, 0, 1)
            bump = np.where(xr < 1, np.exp(1.0 - 1.0 / (1.0 - xr**2 + 1e-300)), 0.0)
            qq = q.squeeze(-1)
            gq = np.exp(-((qq - c) ** 2) / 0.98) * (1.0 + 0.2 * np.sin(qq))
            return amp * bump * gq * (1.0 + 0.4j)

        return f

    fld = MagneticField.zero(1)
    pot = transversal_gauge(fld)
    defects = []
    for n in (16, 32, 64):
        g = BoxGrid(dim=1, half_length=4.0, n=n)
        dc = 2 * int(round(1.4 / g.delta)) + 1
        phi = kernel_from_func(profile(0.4, 1.0), g, disp_count=dc, attach_func=False)
        psi = kernel_from_func(profile(-0.7, 0.8), g, disp_count=dc, attach_func=False)
        prod = twisted_product(phi, psi, fld, scheme="cubic")
        Mp = rep(pot, prod, scheme="cubic").mat
        Ma = rep(pot, phi, scheme="cubic").mat @ rep(pot, psi, scheme="cubic").mat
        defects.append(np.linalg.norm(Mp - Ma, 2))
    assert defects[1] <= defects[0] / 4
    assert defects[2] <= defects[1] / 4


def test_homomorphism_exact_on_tilde_sheet():
    # with the output window wide enough the sheared-sheet product satisfies
    # the representation identity to rounding
    g = BoxGrid(dim=2, half_length=3.0, n=12)
    phi, psi = pair_on(g, 5, attach=False)
    fld = MagneticField.constant_2d(0.5)
    pot = transversal_gauge(fld)
    prod = twisted_product(phi, psi, fld, sheet="tilde")
    assert prod.tail_mass == 0.0
    Mp = rep(pot, prod).mat
    Ma = rep(pot, phi).mat @ rep(pot, psi).mat
    assert np.abs(Mp - Ma).max() < 1e-13


def test_gauge_covariance_of_rep():
    g = BoxGrid(dim=2, half_length=3.0, n=10)
    phi, _ = pair_on(g, 5)
    fld = MagneticField.constant_2d(0.8)
    pot = transversal_gauge(fld)
    rho = GaugeFunction(
        func=lambda q: q[..., 0] * q[..., 1],
        grad=lambda q: np.stack([q[..., 1], q[..., 0]], axis=-1),
    )
    pot2 = gauge_shift(pot, rho)
    M1 = rep(pot, phi).mat
    M2 = rep(pot2, phi).mat
    u = np.exp(1j * rho.func(g.points()))
    assert np.abs(u[:, None] * M1 * np.conj(u)[None, :] - M2).max() < 1e-10


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------


def test_op_weyl_potential_is_diagonal():
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    V = lambda q: 1.0 / (1.0 + np.sum(q * q, axis=-1))
    pot = transversal_gauge(MagneticField.constant_2d(0.4))

    def symbol(q, p):
        return V(q)

    M = op_weyl(pot, symbol, g, q_independent=False).mat
    assert np.abs(M - np.diag(V(g.points()))).max() < 1e-10


def test_op_weyl_momentum_multiplier_plane_waves():
    # band-limited symbol: its kernel is exactly one lattice step wide, so
    # plane waves are exact eigenvectors with eigenvalue h(p)
    g = BoxGrid(dim=1, half_length=4.0, n=16, bc="periodic")
    pot = transversal_gauge(MagneticField.zero(1))
    d = g.delta

    def h(p):
        return 2.0 * (1.0 - np.cos(p[..., 0] * d)) / d**2 + 0.7

    M = op_weyl(pot, h, g, r_disp=1.2 * d).mat
    pts = g.points()[:, 0]
    for m in (-3, 0, 5):
        p = m * np.pi / g.half_length
        wave = np.exp(1j * p * pts)
        resid = M @ wave - h(np.array([[p]])) * wave
        assert np.abs(resid).max() < 1e-10


def test_real_symbol_gives_hermitian_matrix():
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    pot = transversal_gauge(MagneticField.constant_2d(0.6))

    def symbol(q, p):
        return np.sum(p * p, axis=-1) + 0.1 * np.exp(-np.sum(q * q, axis=-1))

    out = op_weyl(pot, symbol, g, q_independent=False, r_disp=1.5)
    assert out.hermitian
    assert np.abs(out.mat - out.mat.conj().T).max() <= 1e-12 * np.abs(out.mat).max()


# ---------------------------------------------------------------------------
# operator utilities
# ---------------------------------------------------------------------------


def test_banded_matches_dense_action():
    g = BoxGrid(dim=2, half_length=3.0, n=10)
    phi, _ = pair_on(g, 5)
    pot = transversal_gauge(variable_field())
    band = rep_banded(pot, phi)
    dense = band.to_dense()
    rng = np.random.default_rng(40)
    v = rng.normal(size=dense.shape[0]) + 1j * rng.normal(size=dense.shape[0])
    assert np.abs(band.matvec(v) - dense @ v).max() < 1e-12
    assert np.abs(band.rmatvec(v) - dense.conj().T @ v).max() < 1e-12


def test_banded_periodic_wraps():
    g = BoxGrid(dim=1, half_length=3.0, n=8, bc="periodic")
    vals = np.zeros(3, dtype=complex)
    vals[2] = 1.0 / g.delta  # pure one-step shift
    k = KernelSample(grid=g, values=vals, q_independent=True)
    pot = transversal_gauge(MagneticField.zero(1))
    band = rep_banded(pot, k)
    v = np.arange(8.0) + 0j
    out = band.matvec(v)
    assert np.abs(out - np.roll(v, -1)).max() < 1e-13


def test_op_norm_matches_svd():
    rng = np.random.default_rng(41)
    m = rng.normal(size=(40, 40)) + 1j * rng.normal(size=(40, 40))
    assert abs(op_norm(m) - np.linalg.norm(m, 2)) < 1e-10
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    phi, _ = pair_on(g, 5)
    band = rep_banded(transversal_gauge(variable_field()), phi)
    assert abs(op_norm(band, tol=1e-8) - np.linalg.norm(band.to_dense(), 2)) < 1e-4


def test_matrix_export_roundtrip(tmp_path):
    rng = np.random.default_rng(42)
    m = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    pb = tmp_path / "m.bin"
    pc = tmp_path / "m.csv"
    save_matrix_bin(pb, m)
    save_matrix_csv(pc, m)
    assert np.array_equal(load_matrix_bin(pb), m)
    assert np.array_equal(load_matrix_csv(pc), m)


# ---------------------------------------------------------------------------
# unitization
# ---------------------------------------------------------------------------


def test_unitized_product_expands_distributively():
    g = BoxGrid(dim=2, half_length=3.0, n=10)
    phi, psi = pair_on(g, 5, attach=False)
    fld = MagneticField.constant_2d(0.5)
    a = UnitizedKernel(scalar=0.7 - 0.2j, kernel=phi)
    b = UnitizedKernel(scalar=-0.3 + 0.1j, kernel=psi)
    ab = a.product(b, fld)
    manual = kernel_lincomb(
        [
            (a.scalar, psi),
            (b.scalar, phi),
            (1.0, twisted_product(phi, psi, fld)),
        ]
    )
    assert abs(ab.scalar - a.scalar * b.scalar) < 1e-14
    assert np.abs(ab.kernel.values - manual.values).max() < 1e-12
    assert ab.norm() <= a.norm() * b.norm() + 1e-10


def test_unitized_involution_and_norm():
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    phi, _ = pair_on(g, 5, attach=False)
    u = UnitizedKernel(scalar=0.4 + 0.9j, kernel=phi)
    us = u.involution()
    assert us.scalar == np.conj(u.scalar)
    assert abs(us.norm() - u.norm()) < 1e-14
    assert abs(u.norm() - (abs(u.scalar) + l1_norm(phi))) < 1e-14


def test_unitized_scalar_unit_acts_trivially():
    g = BoxGrid(dim=2, half_length=3.0, n=8)
    phi, _ = pair_on(g, 5, attach=False)
    one = UnitizedKernel(scalar=1.0)
    u = UnitizedKernel(scalar=0.0, kernel=phi)
    prod = one.product(u, MagneticField.constant_2d(0.5))
    assert abs(prod.scalar) == 0.0
    assert np.abs(prod.kernel.values - phi.values).max() < 1e-13
