"""Gain kernels for the delay-compensated rim controller.

Two families of kernels appear.  The axial Volterra pair (``forward_kernel``,
``inverse_kernel``) maps the advection-free error state to a plain heat state
and back; both have closed forms through one entire Bessel-type power series.
The per-wavenumber predictor kernels couple the reconstructed actuation
history to the state over the delay horizon; they are sine series in the
integration variable with exponential growth factors in the other, and their
sine coefficients are fixed one-dimensional integrals of the edge profile of
the Volterra kernels.

:class:`KernelBasis` holds everything that depends only on the plant
coefficients and the grid (sine coefficients, quadrature contraction tables,
Volterra weight matrices).  :class:`KernelSet` adds the delay-estimate
dependent exponential tables and is rebuilt whenever the estimate moves by
more than the rebuild tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KernelTruncationError
from .geometry import CylinderGrid
from .quadrature import (
    exp_conv,
    exp_lattice_weights,
    exp_pair_weights,
    interp_quadratic,
    simpson_trap_row_weights,
    sine_weights,
)


@dataclass(frozen=True)
class PlantCoeffs:
    """Reaction and advection coefficients of one state channel."""

    reaction: complex
    advection: complex

    @property
    def shifted_reaction(self) -> complex:
        """Effective growth rate after the exponential change of variables
        that removes the advection term."""
        return self.reaction - self.advection**2 / 4.0


def bessel_ratio(y):
    """Entire continuation of ``I1(sqrt(y)) / sqrt(y)``.

    Power series ``sum_m y^m / (2^(2m+1) m! (m+1)!)``; for negative real
    arguments this equals ``J1(sqrt(-y)) / sqrt(-y)``, which is what makes a
    single routine serve both Volterra kernels.  Terms are added until they
    fall below 1e-16 of the running sum.
    """
    y = np.asarray(y, dtype=complex)
    term = np.full(y.shape, 0.5, dtype=complex)
    acc = term.copy()
    for m in range(300):
        term = term * y / (4.0 * (m + 1) * (m + 2))
        acc += term
        if np.all(np.abs(term) <= 1e-16 * (np.abs(acc) + 1e-300)):
            break
    return acc if acc.shape else complex(acc)


def _kernel_values(s, tau, coeffs: PlantCoeffs, sign: float):
    lam = coeffs.shifted_reaction
    return -lam * tau * bessel_ratio(sign * lam * (np.asarray(s) ** 2 - np.asarray(tau) ** 2))


def _check_domain(s, tau):
    s = np.asarray(s, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(s < -1e-12) or np.any(s > 1.0 + 1e-12):
        raise ValueError("first argument must lie in [0, 1]")
    if np.any(tau < -1e-12) or np.any(tau - s > 1e-12):
        raise ValueError("second argument must lie in [0, s]")


def forward_kernel(s, tau, coeffs: PlantCoeffs):
    """Volterra kernel of the state-flattening transform.

    Defined on the triangle ``0 <= tau <= s <= 1``; vanishes on ``tau = 0``
    and equals ``-(shifted_reaction/2) * s`` on the diagonal.
    """
    _check_domain(s, tau)
    return _kernel_values(s, tau, coeffs, 1.0)


def inverse_kernel(s, tau, coeffs: PlantCoeffs):
    """Volterra kernel of the inverse transform (oscillatory branch)."""
    _check_domain(s, tau)
    return _kernel_values(s, tau, coeffs, -1.0)


def sine_basis(i_max: int, x: np.ndarray) -> np.ndarray:
    """Matrix ``sin(i*pi*x)`` with harmonic index down the rows."""
    freqs = np.pi * np.arange(1, i_max + 1)
    return np.sin(np.outer(freqs, x))


class KernelBasis:
    """Delay-independent kernel data for one channel on one grid.

    Construction fills, in order: the edge profiles of the Volterra kernels
    on a refinement of the axial grid; their sine coefficients (exact
    sine-weighted quadrature of the piecewise-quadratic edge interpolant);
    the triangular composition table coupling the inverse Volterra kernel
    into the sine basis; and plain Volterra quadrature matrices on the
    production grid.
    """

    def __init__(self, coeffs: PlantCoeffs, grid: CylinderGrid, i_max: int = 64,
                 refine: int = 12):
        if i_max < 8:
            raise ValueError(f"series truncation order must be >= 8, got {i_max}")
        if refine < 4:
            raise ValueError(f"refinement factor must be >= 4, got {refine}")
        self.coeffs = coeffs
        self.grid = grid
        self.i_max = i_max
        self.refine = refine

        M, h = grid.M, grid.h_s
        m_ref = refine * (M - 1) + 1
        h_ref = h / refine
        xi = np.linspace(0.0, 1.0, m_ref)
        freqs = np.pi * np.arange(1, i_max + 1)

        k_edge = _kernel_values(1.0, xi, coeffs, 1.0)
        l_edge = _kernel_values(1.0, xi, coeffs, -1.0)
        w_sine_ref = sine_weights(freqs, m_ref, h_ref)
        #: sine coefficients of the forward/inverse kernel edge profiles
        self.fwd_sine = w_sine_ref @ k_edge
        self.inv_sine = w_sine_ref @ l_edge
        signs = np.where(np.arange(1, i_max + 1) % 2 == 0, 1.0, -1.0)
        #: sine-series coefficients of the edge tau-derivative at tau = 1
        self.fwd_edge = freqs * signs * self.fwd_sine
        self.inv_edge = freqs * signs * self.inv_sine

        #: per-harmonic contraction weights on the production grid
        self.mode_sine = sine_weights(freqs, M, h)

        # Triangular composition: running inverse-Volterra integrals of each
        # nodal cardinal function, evaluated on the refined grid, then pushed
        # into the sine basis.  Row r of `lam_rows` integrates the inverse
        # kernel against samples over [0, xi_r].
        tri_ref = self._row_weight_matrix(m_ref, h_ref)
        l_full = _kernel_values(xi[:, None], xi[None, :], coeffs, -1.0)
        lam_rows = tri_ref * l_full
        cardinals = interp_quadratic(np.eye(M), refine)  # (M, m_ref)
        lam_of_cardinal = lam_rows @ cardinals.T  # (m_ref, M)
        #: weights turning node samples into the sine coefficients of their
        #: running inverse-Volterra integral
        self.composition = w_sine_ref @ lam_of_cardinal
        #: weights for the inverse-kernel edge integral over the full span
        self.edge_weights = lam_of_cardinal[-1].copy()

        # Volterra matrices restricted back to the production nodes.  The
        # refined pair routes node samples through the cardinal interpolants
        # and integrates on the fine grid, which removes the closure-panel
        # error of the literal rules below (the interpolation error of the
        # samples themselves, cubic in the coarse spacing, remains).
        k_full = _kernel_values(xi[:, None], xi[None, :], coeffs, 1.0)
        self.volterra_fwd_refined = ((tri_ref * k_full) @ cardinals.T)[::refine]
        self.volterra_inv_refined = lam_of_cardinal[::refine].copy()

        # Literal Volterra quadrature matrices on the production grid.
        tri = self._row_weight_matrix(M, h)
        s_col = grid.s[:, None]
        tau_row = grid.s[None, :]
        mask = tau_row <= s_col
        self.volterra_fwd = tri * np.where(mask, _kernel_values(s_col, tau_row, coeffs, 1.0), 0.0)
        self.volterra_inv = tri * np.where(mask, _kernel_values(s_col, tau_row, coeffs, -1.0), 0.0)

    @staticmethod
    def _row_weight_matrix(m: int, h: float) -> np.ndarray:
        rows = np.zeros((m, m))
        for r in range(1, m):
            rows[r, : r + 1] = simpson_trap_row_weights(r, h)
        return rows


class KernelSet:
    """Delay-estimate snapshot of the predictor kernels.

    Wavenumber enters only through ``n**2``, so tables are indexed by ``|n|``.
    ``rates[a, i]`` is the growth exponent of harmonic ``i`` for ``|n| = a``
    in the predictor kernel; ``inv_rates`` the (always decaying) analogue in
    the inverse kernel.
    """

    def __init__(self, basis: KernelBasis, delay_estimate: float):
        grid = basis.grid
        if delay_estimate <= 0.0:
            raise ValueError(f"delay estimate must be positive, got {delay_estimate}")
        self.basis = basis
        self.grid = grid
        self.delay = float(delay_estimate)

        lam = basis.coeffs.shifted_reaction
        n_abs = np.arange(grid.N // 2 + 1)
        i2pi2 = (np.pi * np.arange(1, basis.i_max + 1)) ** 2
        self.rates = self.delay * (lam - n_abs[:, None] ** 2 - i2pi2[None, :])
        self.inv_rates = -self.delay * (n_abs[:, None] ** 2 + i2pi2[None, :]).astype(complex)
        #: exp(rates * s) on the axial grid, shape (|n| count, i_max, M)
        self.exp_s = np.exp(self.rates[:, :, None] * grid.s[None, None, :])
        self.inv_exp_s = np.exp(self.inv_rates[:, :, None] * grid.s[None, None, :])
        # Weight of the newest node value inside the final convolution pair
        # step (the lag kernel runs backwards, so this is the weight of the
        # zero-lag node); needed to solve the command fixed point at the rim.
        self.endpoint_w = exp_pair_weights(self.rates, grid.h_s)[0]

        self._check_truncation()
        self._gamma_cache: dict[int, np.ndarray] = {}
        self._eta_cache: dict[int, np.ndarray] = {}
        self._hist_solve_cache: dict[int, np.ndarray] = {}
        self._lattice_cache: tuple[float, np.ndarray] | None = None

    # -- bookkeeping -----------------------------------------------------

    def _check_truncation(self) -> None:
        """Tail test where the series converges slowest (one step off the
        launch edge, widest wavenumber 0)."""
        h = self.grid.h_s
        mags = 2.0 * np.abs(self.basis.fwd_sine) * np.abs(np.exp(self.rates[0] * h))
        total = mags.sum()
        if total == 0.0:
            return
        rel = mags[-1] / total
        if rel > 1e-10:
            raise KernelTruncationError(
                f"last retained harmonic still contributes {rel:.3e} of the "
                f"series one node off the edge; raise the truncation order "
                f"(currently {self.basis.i_max})"
            )

    def matches(self, delay_estimate: float, tol: float) -> bool:
        return abs(self.delay - delay_estimate) <= tol

    @property
    def peak_gain(self) -> float:
        """Largest exponential magnification across all table entries."""
        return float(np.max(np.abs(self.exp_s)))

    def index(self, n: int) -> int:
        a = abs(int(n))
        if a > self.grid.N // 2:
            raise KeyError(f"wavenumber {n} beyond grid band +-{self.grid.N // 2}")
        return a

    def rates_for_modes(self, modes: np.ndarray) -> np.ndarray:
        """Growth-rate rows aligned with an explicit wavenumber vector."""
        return self.rates[np.abs(np.asarray(modes, dtype=int))]

    def command_lattice(self, dt_record: float) -> np.ndarray:
        """History weights on the raw command-record lattice, per ``|n|`` row.

        ``w[a, j]`` multiplies the scaled command recorded ``j`` steps ago so
        that ``sum_j w[a, j] * cmd(t - j*dt)`` is the edge-kernel history
        integral of the command law for wavenumber row ``a``; ``j = 0`` is
        the slot of the command being solved for.  Integrating the records
        where they live -- instead of resampling them onto the sparser axial
        grid -- keeps the command recursion from amplifying record-rate
        components that a coarse resampling would alias into the band the
        kernel weights heavily.  Cached per spacing.
        """
        if dt_record <= 0.0:
            raise ValueError(f"record spacing must be positive, got {dt_record}")
        if self._lattice_cache is None or self._lattice_cache[0] != float(dt_record):
            edge = self.basis.fwd_edge
            rows = [
                2.0 * (edge @ exp_lattice_weights(row / self.delay,
                                                  dt_record, self.delay))
                for row in self.rates
            ]
            self._lattice_cache = (float(dt_record), np.stack(rows))
        return self._lattice_cache[1]

    # -- kernel tables (lazy; used by tests, oracles, diagnostics) --------

    def predictor_table(self, n: int) -> np.ndarray:
        """Values of the predictor kernel on the (s, tau) grid for mode n."""
        a = self.index(n)
        if a not in self._gamma_cache:
            sin_tab = sine_basis(self.basis.i_max, self.grid.s)
            self._gamma_cache[a] = 2.0 * np.einsum(
                "ir,ij->rj", self.exp_s[a], sin_tab * self.basis.fwd_sine[:, None]
            )
        return self._gamma_cache[a]

    def inverse_table(self, n: int) -> np.ndarray:
        """Values of the inverse predictor kernel on the (s, tau) grid."""
        a = self.index(n)
        if a not in self._eta_cache:
            sin_tab = sine_basis(self.basis.i_max, self.grid.s)
            self._eta_cache[a] = 2.0 * np.einsum(
                "ir,ij->rj", self.inv_exp_s[a], sin_tab * self.basis.inv_sine[:, None]
            )
        return self._eta_cache[a]

    def edge_derivative(self, n: int) -> np.ndarray:
        """tau-derivative of the predictor kernel at the far edge tau = 1,
        tabulated along s (truncated series value)."""
        a = self.index(n)
        return 2.0 * np.einsum("ir,i->r", self.exp_s[a], self.basis.fwd_edge)

    def history_kernel(self, n: int, sigma) -> np.ndarray:
        """Convolution kernel tying past commands into the target state.

        Equals minus the edge derivative evaluated at lag ``sigma``.  The
        underlying function has an integrable inverse-square-root blow-up at
        ``sigma = 0``; a truncated series evaluated there returns the finite
        partial sum, so quadrature against this function must use product
        rules rather than node sampling (the production path does).
        """
        a = self.index(n)
        e = np.exp(np.multiply.outer(np.asarray(sigma, dtype=float), self.rates[a]))
        return -2.0 * e @ self.basis.fwd_edge

    def inverse_history_kernel(self, n: int, sigma) -> np.ndarray:
        """Inverse-transform analogue of :meth:`history_kernel`."""
        a = self.index(n)
        e = np.exp(np.multiply.outer(np.asarray(sigma, dtype=float), self.inv_rates[a]))
        return -2.0 * e @ self.basis.inv_edge

    def history_solve_matrix(self, n: int) -> np.ndarray:
        """Dense map from a transport profile to its target-history image.

        Row ``r`` holds the weights producing the history value at node ``r``
        from the raw profile (identity plus the running-convolution part), so
        undoing the history transform is one dense solve against this matrix.
        """
        a = self.index(n)
        if a not in self._hist_solve_cache:
            m = self.grid.M
            conv = exp_conv(self.rates[a], np.eye(m), self.grid.h_s)
            mat = np.eye(m, dtype=complex) + 2.0 * self.delay * np.einsum(
                "i,ijr->rj", self.basis.fwd_edge, conv
            )
            self._hist_solve_cache[a] = mat
        return self._hist_solve_cache[a]


def heat_ring_kernel(s: float, dtheta, delay: float, n_max: int):
    """Periodic heat kernel on the unit circle, truncated at ``|n| <= n_max``.

    Normalised so its angular integral is exactly 1 for every ``s``.
    """
    dtheta = np.asarray(dtheta, dtype=float)
    n = np.arange(1, n_max + 1)
    damping = np.exp(-delay * n**2 * s)
    return (1.0 + 2.0 * np.cos(np.multiply.outer(dtheta, n)) @ damping) / (2.0 * np.pi)


def predictor_kernel_2d(ks: KernelSet, s: float, tau, dtheta, n_max: int | None = None):
    """Physical-space predictor kernel: angular heat kernel times the
    wavenumber-zero axial series.  Used by the quadrature realization of the
    rim control law and as a cross-check oracle for the spectral one."""
    if n_max is None:
        n_max = ks.grid.N // 2
    tau = np.asarray(tau, dtype=float)
    ring = heat_ring_kernel(s, dtheta, ks.delay, n_max)
    axial = 2.0 * np.exp(ks.rates[0] * s) * ks.basis.fwd_sine @ sine_basis(
        ks.basis.i_max, tau
    )
    return np.multiply.outer(axial, ring)
