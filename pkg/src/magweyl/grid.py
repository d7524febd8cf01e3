"""Box discretization, dual momentum lattice and the partial Fourier pair.

Geometry conventions, used consistently by every other module:

* configuration nodes per axis: x_j = (j - (n-1)/2) * delta, j = 0..n-1,
  with delta = 2 L / n.  The node set is symmetric under negation and
  contains no node at the origin; differences of nodes live on the integer
  displacement lattice which does contain 0.
* momentum nodes per axis: p_m = (m - n/2) * pi / L, m = 0..n-1, covering
  [-pi/delta, pi/delta) with spacing pi / L.
* measures: configuration sums carry weight delta^N per node, momentum sums
  carry weight (2L)^-N per node.  With these weights the forward transform
  (displacement to momentum)

      f(p) = sum_y exp(+i p.y) phi(y) delta^N

  and its inverse are mutually inverse and Parseval holds exactly on the
  grid:  sum_y |phi|^2 delta^N = sum_p |f|^2 (2L)^-N.

Kernels of phase-space symbols are stored as ``KernelSample``: values over
(base point, displacement) with the displacement window truncated to
|x|_inf <= R_disp and the discarded mass recorded.  Base-point independent
kernels drop the q axes entirely; several hot paths dispatch on that flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "BoxGrid",
    "MomentumGrid",
    "PhaseGridFunction",
    "KernelSample",
    "partial_fourier",
    "partial_fourier_inv",
    "shift_q",
]


@dataclass(frozen=True)
class BoxGrid:
    """Uniform symmetric lattice on the centered box [-L, L]^dim."""

    dim: int
    half_length: float
    n: int
    bc: str = "truncated"

    def __post_init__(self):
        if not 1 <= self.dim <= 3:
            raise ValueError("dimension must be 1, 2 or 3")
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError("node count per axis must be even and at least 4")
        if self.half_length <= 0:
            raise ValueError("half length must be positive")
        if self.bc not in ("truncated", "periodic"):
            raise ValueError("boundary condition must be 'truncated' or 'periodic'")

    @property
    def delta(self) -> float:
        return 2.0 * self.half_length / self.n

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.delta ** self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates of one axis."""
        return (np.arange(self.n) - (self.n - 1) / 2.0) * self.delta

    def mesh(self) -> np.ndarray:
        """All nodes as an array of shape (n, ..., n, dim)."""
        axes = [self.axis()] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        """All nodes flattened in C order, shape (size, dim)."""
        return self.mesh().reshape(self.size, self.dim)

    def momentum(self) -> "MomentumGrid":
        return MomentumGrid(box=self)

    def disp_axis(self, count: int) -> np.ndarray:
        """Displacement coordinates, ``count`` odd, symmetric around 0."""
        if count % 2 != 1:
            raise ValueError("displacement count must be odd")
        k = count // 2
        return np.arange(-k, k + 1) * self.delta

    def full_disp_axis(self) -> np.ndarray:
        """The n-point displacement lattice paired with the momentum axis."""
        return (np.arange(self.n) - self.n / 2) * self.delta

    def max_disp_count(self) -> int:
        """Largest symmetric displacement window, |x| <= L - delta."""
        return self.n - 1

    def disp_count_for_radius(self, r_disp: float) -> int:
        if r_disp <= 0:
            raise ValueError("displacement radius must be positive")
        k = int(np.floor(r_disp / self.delta + 1e-9))
        k = min(k, self.n // 2 - 1)
        return 2 * k + 1

    def interior_mask(self, collar: float) -> np.ndarray:
        """Boolean mask of nodes at distance > collar from the box boundary."""
        ax = self.axis()
        inner = np.abs(ax) < self.half_length - collar
        mask = inner
        for _ in range(self.dim - 1):
            mask = np.logical_and.outer(mask, inner)
        return mask

    def with_n(self, n: int) -> "BoxGrid":
        return BoxGrid(dim=self.dim, half_length=self.half_length, n=n, bc=self.bc)


@dataclass(frozen=True)
class MomentumGrid:
    """Dual lattice of a BoxGrid with its summation weight."""

    box: BoxGrid

    @property
    def spacing(self) -> float:
        return np.pi / self.box.half_length

    @property
    def weight(self) -> float:
        """Measure carried by one momentum node, (2L)^-dim."""
        return (2.0 * self.box.half_length) ** (-self.box.dim)

    @property
    def p_max(self) -> float:
        return np.pi / self.box.delta

    def axis(self) -> np.ndarray:
        n = self.box.n
        return (np.arange(n) - n / 2) * self.spacing

    def mesh(self) -> np.ndarray:
        axes = [self.axis()] * self.box.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


# ---------------------------------------------------------------------------
# partial Fourier transform between displacement and momentum axes
# ---------------------------------------------------------------------------


def _alternating(n: int) -> np.ndarray:
    s = np.ones(n)
    s[1::2] = -1.0
    return s


def _axis_phase(values: np.ndarray, axes: tuple, n: int) -> np.ndarray:
    """Multiply by (-1)^index along each of the given axes."""
    out = values
    s = _alternating(n)
    for ax in axes:
        shape = [1] * out.ndim
        shape[ax] = n
        out = out * s.reshape(shape)
    return out


def symbol_from_kernel_full(values: np.ndarray, grid: BoxGrid, axes: Optional[tuple] = None) -> np.ndarray:
    """Forward transform over full displacement axes (length n each).

    f[m] = sum_j exp(i p_m y_j) phi[j] delta  per axis; the symmetric node
    offsets contribute alternating sign vectors around a plain FFT.
    """
    n = grid.n
    if axes is None:
        axes = tuple(range(values.ndim - grid.dim, values.ndim))
    c = (-1.0) ** (n // 2)
    work = _axis_phase(values.astype(complex, copy=False), axes, n)
    work = np.fft.ifftn(work, axes=axes)
    work = _axis_phase(work, axes, n)
    scale = (grid.delta * c * n) ** len(axes)
    return work * scale


def kernel_from_symbol_full(values: np.ndarray, grid: BoxGrid, axes: Optional[tuple] = None) -> np.ndarray:
    """Inverse transform over momentum axes, returning full displacement axes."""
    n = grid.n
    if axes is None:
        axes = tuple(range(values.ndim - grid.dim, values.ndim))
    c = (-1.0) ** (n // 2)
    work = _axis_phase(values.astype(complex, copy=False), axes, n)
    work = np.fft.fftn(work, axes=axes)
    work = _axis_phase(work, axes, n)
    scale = (c / (2.0 * grid.half_length)) ** len(axes)
    return work * scale


# ---------------------------------------------------------------------------
# phase-space functions and sampled kernels
# ---------------------------------------------------------------------------


@dataclass
class PhaseGridFunction:
    """Symbol values on the (base point, momentum) product lattice.

    Base-point independent symbols store only the momentum axes and set
    ``q_independent``; the layout is then (n,)*dim.  Otherwise the layout is
    (n,)*dim + (n,)*dim with base-point axes first.
    """

    grid: BoxGrid
    values: np.ndarray
    q_independent: bool = True

    def __post_init__(self):
        want = self.grid.dim if self.q_independent else 2 * self.grid.dim
        if self.values.ndim != want:
            raise ValueError(f"expected {want} value axes, got {self.values.ndim}")

    @classmethod
    def sample(cls, func: Callable, grid: BoxGrid, q_independent: bool = True) -> "PhaseGridFunction":
        pmesh = grid.momentum().mesh()
        if q_independent:
            return cls(grid=grid, values=np.asarray(func(pmesh), dtype=complex), q_independent=True)
        qmesh = grid.mesh()
        dim = grid.dim
        q = qmesh.reshape((grid.n,) * dim + (1,) * dim + (dim,))
        p = pmesh.reshape((1,) * dim + (grid.n,) * dim + (dim,))
        return cls(grid=grid, values=np.asarray(func(q, p), dtype=complex), q_independent=False)

    def copy(self) -> "PhaseGridFunction":
        return PhaseGridFunction(self.grid, self.values.copy(), self.q_independent)


@dataclass
class KernelSample:
    """Sampled integral kernel over (base point, displacement).

    ``values`` has the displacement axes last, each of odd length
    2K+1 <= n-1, symmetric around displacement 0.  Base-point independent
    kernels drop the q axes and set ``q_independent``.  ``func``, when
    present, evaluates the kernel exactly at arbitrary off-lattice base
    points (used to avoid interpolation for analytically known inputs).
    ``tail_mass`` records the L1 mass discarded by displacement truncation.
    """

    grid: BoxGrid
    values: np.ndarray
    q_independent: bool = False
    func: Optional[Callable] = None
    tail_mass: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        dim = self.grid.dim
        want = dim if self.q_independent else 2 * dim
        if self.values.ndim != want:
            raise ValueError(f"expected {want} value axes, got {self.values.ndim}")
        for ax in range(dim):
            count = self.values.shape[-dim + ax]
            if count % 2 != 1:
                raise ValueError("displacement axes must have odd length")
            if count > self.grid.n - 1:
                raise ValueError("displacement window exceeds the box")

    @property
    def disp_count(self) -> int:
        return self.values.shape[-1]

    @property
    def disp_radius(self) -> float:
        return (self.disp_count // 2) * self.grid.delta

    def disp_axis(self) -> np.ndarray:
        return self.grid.disp_axis(self.disp_count)

    def disp_mesh(self) -> np.ndarray:
        axes = [self.disp_axis()] * self.grid.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def as_q_dependent(self) -> np.ndarray:
        """Values broadcast over the q axes (view when possible)."""
        if not self.q_independent:
            return self.values
        dim = self.grid.dim
        shape = (self.grid.n,) * dim + self.values.shape
        return np.broadcast_to(self.values.reshape((1,) * dim + self.values.shape), shape)

    def copy(self) -> "KernelSample":
        return KernelSample(self.grid, self.values.copy(), self.q_independent, self.func, self.tail_mass)

    def sup_over_q(self) -> np.ndarray:
        """Pointwise sup over base points, one value per displacement node."""
        if self.q_independent:
            return np.abs(self.values)
        dim = self.grid.dim
        return np.abs(self.values).max(axis=tuple(range(dim)))


def _pad_disp_to_full(values: np.ndarray, grid: BoxGrid, dim_disp_axes: int) -> np.ndarray:
    """Embed truncated displacement axes into the full n-point lattice."""
    n = grid.n
    out_shape = list(values.shape)
    pads = []
    for ax in range(values.ndim - dim_disp_axes, values.ndim):
        count = values.shape[ax]
        k = count // 2
        lo = n // 2 - k  # position of -k*delta in the full axis
        pads.append((lo, n - lo - count))
        out_shape[ax] = n
    pad_spec = [(0, 0)] * (values.ndim - dim_disp_axes) + pads
    return np.pad(values, pad_spec)


def partial_fourier(kernel: KernelSample) -> PhaseGridFunction:
    """Transform a sampled kernel to its phase-space symbol."""
    grid = kernel.grid
    dim = grid.dim
    full = _pad_disp_to_full(kernel.values, grid, dim)
    symbol = symbol_from_kernel_full(full, grid, axes=tuple(range(full.ndim - dim, full.ndim)))
    return PhaseGridFunction(grid=grid, values=symbol, q_independent=kernel.q_independent)


def partial_fourier_inv(
    symbol: PhaseGridFunction,
    r_disp: Optional[float] = None,
    disp_count: Optional[int] = None,
) -> KernelSample:
    """Transform a symbol to its kernel, truncating the displacement window.

    The default window is the largest symmetric one (radius L - delta).
    The L1 mass dropped by the truncation is recorded in ``tail_mass``; the
    unpaired displacement row at -L is always dropped.
    """
    grid = symbol.grid
    dim = grid.dim
    full = kernel_from_symbol_full(
        symbol.values, grid, axes=tuple(range(symbol.values.ndim - dim, symbol.values.ndim))
    )
    if disp_count is None:
        if r_disp is None:
            disp_count = grid.max_disp_count()
        else:
            disp_count = grid.disp_count_for_radius(r_disp)
    k = disp_count // 2
    n = grid.n
    sl = [slice(None)] * (full.ndim - dim) + [slice(n // 2 - k, n // 2 + k + 1)] * dim
    kept = full[tuple(sl)].copy()
    if symbol.q_independent:
        total = np.abs(full)
        kept_abs = np.abs(kept)
    else:
        total = np.abs(full).max(axis=tuple(range(dim)))
        kept_abs = np.abs(kept).max(axis=tuple(range(dim)))
    tail = float(total.sum() - kept_abs.sum()) * grid.cell_volume
    return KernelSample(
        grid=grid,
        values=kept,
        q_independent=symbol.q_independent,
        tail_mass=tail,
    )


# ---------------------------------------------------------------------------
# base-point shifts on the half lattice
# ---------------------------------------------------------------------------

_HALF_STENCILS = {
    "linear": np.array([0.5, 0.5]),
    "cubic": np.array([-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0]),
}


def _shift_axis_int(values: np.ndarray, ax: int, steps: int, periodic: bool) -> np.ndarray:
    """Shift samples so that out[j] = in[j + steps] along one axis."""
    if steps == 0:
        return values
    if periodic:
        return np.roll(values, -steps, axis=ax)
    n = values.shape[ax]
    out = np.zeros_like(values)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if steps > 0:
        if steps < n:
            src[ax] = slice(steps, n)
            dst[ax] = slice(0, n - steps)
            out[tuple(dst)] = values[tuple(src)]
    else:
        s = -steps
        if s < n:
            src[ax] = slice(0, n - s)
            dst[ax] = slice(s, n)
            out[tuple(dst)] = values[tuple(src)]
    return out


def _half_step_axis(values: np.ndarray, ax: int, scheme: str, periodic: bool) -> np.ndarray:
    """Interpolate to the +delta/2 offset lattice along one axis.

    out[j] ~ in at position j + 1/2, using a symmetric stencil; outside
    samples are zero in truncated mode and wrap in periodic mode.
    """
    st = _HALF_STENCILS[scheme]
    half = len(st) // 2
    out = np.zeros(values.shape, dtype=values.dtype)
    for i, c in enumerate(st):
        out += c * _shift_axis_int(values, ax, i - half + 1, periodic)
    return out


def shift_q(
    values: np.ndarray,
    grid: BoxGrid,
    half_steps,
    scheme: str = "cubic",
    q_axes: Optional[tuple] = None,
) -> np.ndarray:
    """Evaluate a q-grid array at base points shifted by a half-lattice vector.

    ``half_steps`` gives the shift per axis in units of delta/2 (integers).
    Even entries are exact lattice translations; odd entries additionally
    interpolate to the half-offset lattice with the chosen symmetric stencil
    ('linear' is 2nd order and never overshoots, 'cubic' is 4th order).
    Truncated grids zero-extend past the boundary, periodic grids wrap.
    """
    if scheme not in _HALF_STENCILS:
        raise ValueError("scheme must be 'linear' or 'cubic'")
    periodic = grid.bc == "periodic"
    if q_axes is None:
        q_axes = tuple(range(grid.dim))
    out = values
    for ax, h in zip(q_axes, half_steps):
        h = int(h)
        if h % 2 == 0:
            out = _shift_axis_int(out, ax, h // 2, periodic)
        else:
            # floor(h/2) whole steps plus one half step up
            out = _half_step_axis(out, ax, scheme, periodic)
            whole = (h - 1) // 2
            out = _shift_axis_int(out, ax, whole, periodic)
    return out
