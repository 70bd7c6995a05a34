"""Cylinder-surface grid, fields, and angular Fourier mode stacks.

The computational domain is the lateral surface of a unit-height cylinder:
axial coordinate ``s`` in ``[0, 1]`` sampled at ``M`` nodes including both
rims, and angle ``theta`` in ``[-pi, pi)`` sampled at ``N`` periodic nodes.
A :class:`Field` stores one scalar per surface node; a :class:`ModeStack`
stores, per angular wavenumber ``n``, the complex coefficient profile along
``s``.  The two are linked by :meth:`CylinderGrid.analyze` and
:meth:`CylinderGrid.synthesize`, which are exact inverses on the grid.
"""

from __future__ import annotations

import numpy as np

from .quadrature import simpson_weights

TWO_PI = 2.0 * np.pi


class CylinderGrid:
    """Uniform tensor grid on the cylinder surface.

    ``M`` must be odd (so axial integrals can use composite Simpson) and at
    least 3; ``N`` must be even and at least 4 so the angular wavenumbers form
    the usual symmetric band ``-N/2 .. N/2 - 1``.
    """

    def __init__(self, M: int, N: int):
        M, N = int(M), int(N)
        if M < 3 or M % 2 == 0:
            raise ValueError(f"axial node count M must be odd and >= 3, got {M}")
        if N < 4 or N % 2 == 1:
            raise ValueError(f"angular node count N must be even and >= 4, got {N}")
        self.M = M
        self.N = N
        self.h_s = 1.0 / (M - 1)
        self.h_theta = TWO_PI / N
        self.s = np.linspace(0.0, 1.0, M)
        self.theta = -np.pi + self.h_theta * np.arange(N)
        #: wavenumbers in ascending order, -N/2 .. N/2 - 1
        self.modes = np.arange(-(N // 2), N // 2)
        # Phase factors mapping FFT bins (frequency n mod N) onto our
        # theta origin at -pi:  exp(-i n theta_0) = (-1)^n.
        self._parity = np.where(self.modes % 2 == 0, 1.0, -1.0)
        self._simpson_s = simpson_weights(M, self.h_s)

    def __eq__(self, other):
        return isinstance(other, CylinderGrid) and (self.M, self.N) == (other.M, other.N)

    def __hash__(self):
        return hash((self.M, self.N))

    def __repr__(self):
        return f"CylinderGrid(M={self.M}, N={self.N})"

    # -- spectral transforms -------------------------------------------------

    def analyze(self, field: "Field | np.ndarray") -> "ModeStack":
        """Angular Fourier coefficients of a field, one profile per mode.

        The coefficient of mode ``n`` at axial node ``i`` is the rectangle-rule
        angular average ``(1/2pi) sum_j f(s_i, theta_j) exp(-i n theta_j) h_theta``,
        which on a periodic grid is exact for band-limited data.
        """
        vals = field.values if isinstance(field, Field) else np.asarray(field)
        if vals.shape != (self.M, self.N):
            raise ValueError(f"field shape {vals.shape} does not match grid {(self.M, self.N)}")
        spec = np.fft.fftshift(np.fft.fft(vals, axis=1), axes=1) / self.N
        coeffs = (spec * self._parity).T  # (N modes, M)
        return ModeStack(self, np.ascontiguousarray(coeffs))

    def synthesize(self, stack: "ModeStack | np.ndarray", kind: str = "complex") -> "Field":
        """Reassemble a field from its mode stack; exact inverse of analyze.

        ``kind='real'`` asserts the coefficients carry conjugate symmetry and
        returns a real-valued field (the tiny imaginary residue is dropped).
        """
        coeffs = stack.coeffs if isinstance(stack, ModeStack) else np.asarray(stack)
        if coeffs.shape != (self.N, self.M):
            raise ValueError(f"mode stack shape {coeffs.shape} does not match grid")
        spec = (coeffs.T * self._parity) * self.N
        vals = np.fft.ifft(np.fft.ifftshift(spec, axes=1), axis=1)
        if kind == "real":
            return Field(self, vals.real.copy())
        return Field(self, vals)

    def analyze_profile(self, values: np.ndarray) -> np.ndarray:
        """Fourier coefficients of a single ring profile (length ``N``)."""
        values = np.asarray(values)
        if values.shape != (self.N,):
            raise ValueError(f"profile length {values.shape} does not match N={self.N}")
        return np.fft.fftshift(np.fft.fft(values)) / self.N * self._parity

    def analyze_rows(self, values: np.ndarray) -> np.ndarray:
        """Fourier coefficients of a stack of ring profiles, row by row.

        Accepts any ``(..., N)`` array (a delay window, a snapshot sequence)
        and transforms the last axis; each row matches
        :meth:`analyze_profile` exactly.
        """
        values = np.asarray(values)
        if values.shape[-1] != self.N:
            raise ValueError(f"last axis {values.shape[-1]} does not match N={self.N}")
        return np.fft.fftshift(np.fft.fft(values, axis=-1), axes=-1) / self.N * self._parity

    def synthesize_profile(self, coeffs: np.ndarray, kind: str = "complex") -> np.ndarray:
        """Ring profile from mode coefficients; inverse of analyze_profile."""
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (self.N,):
            raise ValueError(f"coefficient count {coeffs.shape} does not match N={self.N}")
        vals = np.fft.ifft(np.fft.ifftshift(coeffs * self._parity * self.N))
        return vals.real.copy() if kind == "real" else vals

    # -- calculus on the grid ------------------------------------------------

    def d_s(self, vals: np.ndarray) -> np.ndarray:
        """First axial derivative: central inside, one-sided 2nd order at rims."""
        out = np.empty_like(vals)
        h = self.h_s
        out[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * h)
        out[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
        out[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * h)
        return out

    def d_theta(self, vals: np.ndarray) -> np.ndarray:
        """First angular derivative (central differences, periodic wrap)."""
        return (np.roll(vals, -1, axis=1) - np.roll(vals, 1, axis=1)) / (2.0 * self.h_theta)

    def d2_s(self, vals: np.ndarray) -> np.ndarray:
        """Second axial derivative; one-sided 2nd-order stencils at the rims."""
        out = np.empty_like(vals)
        h2 = self.h_s**2
        out[1:-1] = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / h2
        out[0] = (2.0 * vals[0] - 5.0 * vals[1] + 4.0 * vals[2] - vals[3]) / h2
        out[-1] = (2.0 * vals[-1] - 5.0 * vals[-2] + 4.0 * vals[-3] - vals[-4]) / h2
        return out

    def d2_theta(self, vals: np.ndarray) -> np.ndarray:
        """Second angular derivative (periodic three-point stencil)."""
        return (np.roll(vals, -1, axis=1) - 2.0 * vals + np.roll(vals, 1, axis=1)) / self.h_theta**2


class Field:
    """Scalar samples on a :class:`CylinderGrid`, complex or real valued."""

    def __init__(self, grid: CylinderGrid, values: np.ndarray):
        values = np.asarray(values)
        if values.shape != (grid.M, grid.N):
            raise ValueError(
                f"values shape {values.shape} does not match grid ({grid.M}, {grid.N})"
            )
        self.grid = grid
        self.values = values

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def l2_norm(self) -> float:
        """Surface L2 norm: Simpson along s, rectangle rule around theta."""
        g = self.grid
        ring = np.sum(np.abs(self.values) ** 2, axis=1) * g.h_theta
        return float(np.sqrt(np.abs(g._simpson_s @ ring)))

    def h1_norm(self) -> float:
        """Sobolev H1 norm from finite-difference first partials."""
        g = self.grid
        total = (
            self.l2_norm() ** 2
            + Field(g, g.d_s(self.values)).l2_norm() ** 2
            + Field(g, g.d_theta(self.values)).l2_norm() ** 2
        )
        return float(np.sqrt(total))

    def h2_norm(self) -> float:
        """H2 norm: adds both pure second partials and twice the mixed one."""
        g = self.grid
        mixed = g.d_theta(g.d_s(self.values))
        total = (
            self.h1_norm() ** 2
            + Field(g, g.d2_s(self.values)).l2_norm() ** 2
            + 2.0 * Field(g, mixed).l2_norm() ** 2
            + Field(g, g.d2_theta(self.values)).l2_norm() ** 2
        )
        return float(np.sqrt(total))

    def laplacian(self) -> "Field":
        """Discrete surface Laplacian (axial + angular second differences).

        Rim rows use one-sided second-order stencils so the array is fully
        populated; callers that impose Dirichlet data overwrite those rows.
        """
        g = self.grid
        return Field(g, g.d2_s(self.values) + g.d2_theta(self.values))


class ModeStack:
    """Per-wavenumber complex profiles along the cylinder axis.

    ``coeffs[k]`` is the length-``M`` profile of mode ``n = grid.modes[k]``;
    modes are stored in ascending wavenumber order.
    """

    def __init__(self, grid: CylinderGrid, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (grid.N, grid.M):
            raise ValueError(
                f"coeffs shape {coeffs.shape} does not match ({grid.N}, {grid.M})"
            )
        self.grid = grid
        self.coeffs = coeffs

    def copy(self) -> "ModeStack":
        return ModeStack(self.grid, self.coeffs.copy())

    def mode(self, n: int) -> np.ndarray:
        """Profile of wavenumber ``n`` (view into the stack)."""
        idx = n + self.grid.N // 2
        if not 0 <= idx < self.grid.N:
            raise KeyError(f"mode {n} outside band [{-self.grid.N // 2}, {self.grid.N // 2 - 1}]")
        return self.coeffs[idx]

    def conjugate_symmetry_defect(self) -> float:
        """Max mismatch between mode ``-n`` and ``conj(mode n)`` plus any
        imaginary part of the unpaired extreme mode."""
        g = self.grid
        worst = float(np.max(np.abs(self.coeffs[0].imag), initial=0.0))  # unpaired -N/2
        worst = max(worst, float(np.max(np.abs(self.coeffs[g.N // 2].imag))))
        for n in range(1, g.N // 2):
            a = self.mode(n)
            b = self.mode(-n)
            worst = max(worst, float(np.max(np.abs(b - np.conj(a)))))
        return worst

    def enforce_conjugate_symmetry(self) -> "ModeStack":
        """Project onto the conjugate-symmetric subspace (real synthesis).

        Paired modes are averaged, the zero mode and the unpaired extreme
        mode are made real.  Mutates in place and returns self.
        """
        g = self.grid
        half = g.N // 2
        self.coeffs[half] = self.coeffs[half].real
        self.coeffs[0] = self.coeffs[0].real  # unpaired mode -N/2
        for n in range(1, half):
            avg = 0.5 * (self.coeffs[half + n] + np.conj(self.coeffs[half - n]))
            self.coeffs[half + n] = avg
            self.coeffs[half - n] = np.conj(avg)
        return self
