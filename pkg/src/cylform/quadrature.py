"""Quadrature helpers for kernel-weighted integrals on uniform grids.

Most integrals in this package have the shape ``int K(tau) v(tau) dtau`` where
``K`` is a closed-form kernel (often an exponential ``exp(z*tau)`` or a sine
``sin(i*pi*tau)`` with large rate/frequency) and ``v`` is a state profile known
only at the grid nodes.  Sampling oscillatory or boundary-layer kernels at the
nodes and applying a generic rule aliases badly once the kernel varies faster
than the grid, so instead we fix the state model -- piecewise quadratic on
node pairs, matching the resolution assumptions of composite Simpson -- and
integrate the kernel against that interpolant *exactly*.  The weights returned
here do precisely that; for ``z -> 0`` they reduce to the classic Simpson
weights, which is a handy sanity check.

All node counts are expected to be odd (even number of panels) unless noted.
"""

from __future__ import annotations

import numpy as np

# Terms kept in the small-argument series for the exponential moments; with
# |z*h| <= 1 the truncation error is below 1e-19.
_SERIES_TERMS = 24


def simpson_weights(m: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``m`` nodes (odd) with spacing ``h``."""
    if m < 3 or m % 2 == 0:
        raise ValueError(f"Simpson rule needs an odd node count >= 3, got {m}")
    w = np.full(m, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


def simpson_trap_row_weights(j: int, h: float) -> np.ndarray:
    """Weights for ``int_0^{s_j}`` over nodes ``0..j`` of a uniform grid.

    Even panel counts use composite Simpson; an odd count is closed with a
    single trapezoid panel at the far end.  ``j == 0`` yields an empty rule.
    """
    if j == 0:
        return np.zeros(1)
    if j == 1:
        return np.array([0.5 * h, 0.5 * h])
    if j % 2 == 0:
        return simpson_weights(j + 1, h)
    w = np.zeros(j + 1)
    w[:j] = simpson_weights(j, h)
    w[j - 1] += 0.5 * h
    w[j] += 0.5 * h
    return w


def _exp_moments(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scaled moments ``int_0^1 x^p exp(u*x) dx`` for ``p = 0, 1, 2``.

    Evaluated in the unit variable; callers rescale by the panel width.  A
    Taylor series takes over below ``|u| = 1`` where the closed forms lose
    digits to cancellation.
    """
    u = np.asarray(u, dtype=complex)
    m0 = np.empty_like(u)
    m1 = np.empty_like(u)
    m2 = np.empty_like(u)

    small = np.abs(u) <= 1.0
    if np.any(small):
        us = u[small]
        t0 = np.zeros_like(us)
        t1 = np.zeros_like(us)
        t2 = np.zeros_like(us)
        upow = np.ones_like(us)
        fact = 1.0
        for q in range(_SERIES_TERMS):
            if q > 0:
                fact *= q
                upow = upow * us
            t0 += upow / (fact * (q + 1))
            t1 += upow / (fact * (q + 2))
            t2 += upow / (fact * (q + 3))
        m0[small], m1[small], m2[small] = t0, t1, t2
    big = ~small
    if np.any(big):
        ub = u[big]
        e = np.exp(ub)
        m0[big] = (e - 1.0) / ub
        m1[big] = (ub * e - e + 1.0) / ub**2
        m2[big] = (ub**2 * e - 2.0 * ub * e + 2.0 * e - 2.0) / ub**3
    return m0, m1, m2


def exp_pair_weights(z: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Node weights of ``int_0^{2h} exp(z*x) q(x) dx`` for quadratic ``q``.

    Returns the coefficients of the three nodes ``x = 0, h, 2h``.  ``z`` may be
    any complex array; the result broadcasts over it.
    """
    z = np.asarray(z, dtype=complex)
    width = 2.0 * h
    m0, m1, m2 = _exp_moments(z * width)
    # Un-scale: int x^p e^{zx} over [0, 2h] = (2h)^{p+1} * m_p(u).
    m0 = m0 * width
    m1 = m1 * width**2
    m2 = m2 * width**3
    w0 = (m2 - 3.0 * h * m1 + 2.0 * h**2 * m0) / (2.0 * h**2)
    w1 = (2.0 * h * m1 - m2) / h**2
    w2 = (m2 - h * m1) / (2.0 * h**2)
    return w0, w1, w2


def exp_lin_weights(z: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Node weights of ``int_0^h exp(z*(h - x)) q(x) dx`` for linear ``q``."""
    z = np.asarray(z, dtype=complex)
    m0, m1, _ = _exp_moments(z * h)
    # int e^{z(h-x)} (1 - x/h) dx = h * m1(u); int e^{z(h-x)} x/h dx = h*(m0 - m1).
    a = h * m1
    b = h * (m0 - m1)
    return a, b


def exp_lattice_weights(z: np.ndarray, h: float, span: float) -> np.ndarray:
    """Weights ``W`` with ``W @ v = int_0^span exp(z*x) v(x) dx``.

    ``v`` is piecewise *linear* on the lattice ``x_j = j*h`` -- the natural
    model for a signal recorded at a fixed cadence -- and the kernel is
    integrated against that interpolant exactly, interval by interval.  The
    span need not be a lattice multiple: a trailing partial interval keeps
    the chord of its covering pair and clips the kernel at ``span``.  Shape:
    ``z.shape + (n,)`` with ``n`` the smallest node count covering the span.
    """
    if h <= 0 or span <= 0:
        raise ValueError("lattice spacing and span must be positive")
    z = np.asarray(z, dtype=complex)
    n_full = int(np.floor(span / h + 1e-9))
    rem = span - n_full * h
    if rem < 1e-9 * h:
        rem = 0.0
    n = n_full + (2 if rem > 0.0 else 1)
    out = np.zeros(z.shape + (n,), dtype=complex)
    if n_full > 0:
        a, b = exp_lin_weights(z, h)
        # Flip the orientation: against e^{zx} the left node pairs with b.
        starts = np.exp(np.multiply.outer(z, h * np.arange(n_full)))
        out[..., :n_full] += starts * b[..., None]
        out[..., 1:n_full + 1] += starts * a[..., None]
    if rem > 0.0:
        m0, m1, _ = _exp_moments(z * rem)
        base = np.exp(z * (n_full * h))
        out[..., n_full] += base * (rem * m0 - (rem * rem / h) * m1)
        out[..., n_full + 1] += base * (rem * rem / h) * m1
    return out


def exp_half_weights(z: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Node weights of ``int_0^h exp(z*(h - x)) q(x) dx`` for quadratic ``q``.

    ``q`` is the parabola through the nodes ``x = 0, h, 2h`` even though only
    the first half of that span is integrated; the kernel's exponent is
    measured from the half's upper end.  At ``z = 0`` this reduces to the
    classic half-interval rule ``(5h/12, 2h/3, -h/12)``.
    """
    z = np.asarray(z, dtype=complex)
    m0, m1, m2 = _exp_moments(z * h)
    e0 = m0 * h
    e1 = m1 * h**2
    e2 = m2 * h**3
    # Moments of x^p against e^{z(h-x)} on [0, h], via the flip y = h - x.
    mu0 = e0
    mu1 = h * e0 - e1
    mu2 = h**2 * e0 - 2.0 * h * e1 + e2
    g0 = (mu2 - 3.0 * h * mu1 + 2.0 * h**2 * mu0) / (2.0 * h**2)
    g1 = (2.0 * h * mu1 - mu2) / h**2
    g2 = (mu2 - h * mu1) / (2.0 * h**2)
    return g0, g1, g2


def exp_weights(z: np.ndarray, m: int, h: float) -> np.ndarray:
    """Weights ``W`` with ``W @ v = int_0^{(m-1)h} exp(z*tau) v(tau) dtau``.

    ``v`` is modelled as piecewise quadratic over consecutive node pairs, so
    ``m`` must be odd.  Shape: ``z.shape + (m,)``.
    """
    if m < 3 or m % 2 == 0:
        raise ValueError(f"need an odd node count >= 3, got {m}")
    z = np.asarray(z, dtype=complex)
    w0, w1, w2 = exp_pair_weights(z, h)
    npairs = (m - 1) // 2
    starts = 2.0 * h * np.arange(npairs)
    # exp(z * tau_{2k}) prefactor for each pair.
    pref = np.exp(np.multiply.outer(z, starts))
    out = np.zeros(z.shape + (m,), dtype=complex)
    out[..., 0:m - 2:2] += pref * w0[..., None]
    out[..., 1:m - 1:2] += pref * w1[..., None]
    out[..., 2:m:2] += pref * w2[..., None]
    return out


def sine_weights(freqs: np.ndarray, m: int, h: float) -> np.ndarray:
    """Weights for ``int_0^{(m-1)h} sin(f*tau) v(tau) dtau`` (quadratic ``v``)."""
    return exp_weights(1j * np.asarray(freqs, dtype=float), m, h).imag


def exp_conv(z: np.ndarray, values: np.ndarray, h: float) -> np.ndarray:
    """Running convolution ``I(s_r) = int_0^{s_r} exp(z*(s_r - tau)) v(tau) dtau``.

    ``values`` holds ``v`` at the grid nodes along its last axis; ``z`` is a
    rate array that broadcasts against the leading axes of ``values`` (a new
    leading axis is prepended for it).  Every node value is the exact
    convolution of the piecewise-quadratic interpolant of ``v`` (breakpoints
    at even nodes): even rows advance by a full pair, odd rows by the first
    half of the covering pair.  The recurrence form keeps the update stable
    for arbitrarily stiff ``z``.

    Returns an array of shape ``z.shape + values.shape`` with the convolution
    evaluated at every node ``s_r``.
    """
    values = np.asarray(values)
    m = values.shape[-1]
    if m % 2 == 0:
        raise ValueError("exp_conv expects an odd node count")
    z = np.asarray(z, dtype=complex)
    # Broadcast shape for per-rate factors against z.shape + values.shape[:-1].
    bshape = z.shape + (1,) * (values.ndim - 1)
    zb = z.reshape(bshape)
    step = np.exp(zb * h)
    step2 = np.exp(zb * 2.0 * h)
    # Quadratic weights for int_0^{2h} e^{z(2h-x)} q(x) dx: reversing the
    # integration variable swaps the outer Lagrange basis functions.
    w0, w1, w2 = exp_pair_weights(z, h)
    c0, c1, c2 = w2.reshape(bshape), w1.reshape(bshape), w0.reshape(bshape)
    g0, g1, g2 = (g.reshape(bshape) for g in exp_half_weights(z, h))

    out = np.zeros(z.shape + values.shape, dtype=complex)
    acc = np.zeros(z.shape + values.shape[:-1], dtype=complex)
    v = np.broadcast_to(values, z.shape + values.shape)
    for r in range(2, m, 2):
        out[..., r - 1] = acc * step + (
            g0 * v[..., r - 2] + g1 * v[..., r - 1] + g2 * v[..., r]
        )
        acc = acc * step2 + (
            c0 * v[..., r - 2] + c1 * v[..., r - 1] + c2 * v[..., r]
        )
        out[..., r] = acc
    return out


def exp_conv_paired(z: np.ndarray, values: np.ndarray, h: float) -> np.ndarray:
    """Like :func:`exp_conv`, but pairing rates with profiles axis-by-axis.

    ``z`` has shape ``(..., K)`` and ``values`` shape ``(..., M)``; the leading
    axes broadcast against each other (they are *shared*, not stacked the way
    ``exp_conv`` stacks them).  The result has shape ``(..., K, M)``: entry
    ``[..., k, r]`` convolves profile ``values[...]`` with rate ``z[..., k]``.
    One call therefore serves a whole stack of angular modes, each carrying
    its own family of exponential rates.
    """
    values = np.asarray(values)
    m = values.shape[-1]
    if m % 2 == 0:
        raise ValueError("exp_conv_paired expects an odd node count")
    z = np.asarray(z, dtype=complex)
    step = np.exp(z * h)
    step2 = np.exp(z * 2.0 * h)
    w0, w1, w2 = exp_pair_weights(z, h)
    c0, c1, c2 = w2, w1, w0  # reversed kernel, as in exp_conv
    g0, g1, g2 = exp_half_weights(z, h)

    lead = np.broadcast_shapes(z.shape[:-1], values.shape[:-1])
    k = z.shape[-1]
    out = np.zeros(lead + (k, m), dtype=complex)
    acc = np.zeros(lead + (k,), dtype=complex)
    v = values[..., None, :]  # broadcast profile across the rate axis
    for r in range(2, m, 2):
        out[..., r - 1] = acc * step + (
            g0 * v[..., r - 2] + g1 * v[..., r - 1] + g2 * v[..., r]
        )
        acc = acc * step2 + (
            c0 * v[..., r - 2] + c1 * v[..., r - 1] + c2 * v[..., r]
        )
        out[..., r] = acc
    return out


def phi_funcs(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First two phi-functions of exponential integrators.

    ``phi1(x) = (e^x - 1)/x`` and ``phi2(x) = (e^x - 1 - x)/x^2``, continued
    through ``x = 0`` by their power series (used below ``|x| = 0.5`` where
    the closed forms cancel).  Cross products of two exponentials over a
    sliding interval reduce to these, which is how the adaptation-drift
    tables stay finite when two rates coincide.
    """
    x = np.asarray(x, dtype=complex)
    p1 = np.empty_like(x)
    p2 = np.empty_like(x)
    small = np.abs(x) < 0.5
    if np.any(small):
        xs = x[small]
        t1 = np.zeros_like(xs)
        t2 = np.zeros_like(xs)
        term = np.ones_like(xs)
        fact = 1.0
        for q in range(16):
            if q > 0:
                fact *= q
                term = term * xs
            t1 += term / (fact * (q + 1))
            t2 += term / (fact * (q + 1) * (q + 2))
        p1[small], p2[small] = t1, t2
    big = ~small
    if np.any(big):
        xb = x[big]
        e = np.exp(xb)
        p1[big] = (e - 1.0) / xb
        p2[big] = (e - 1.0 - xb) / xb**2
    return p1, p2


def interp_quadratic(values: np.ndarray, refine: int) -> np.ndarray:
    """Sample the piecewise-quadratic interpolant on a ``refine``-times grid.

    ``values`` has nodes on its last axis (odd count).  The output has
    ``refine * (m - 1) + 1`` nodes and reproduces the input at the originals.
    Used by tests to evaluate reference quadratures against the same state
    model the production weights assume.
    """
    values = np.asarray(values)
    m = values.shape[-1]
    if m % 2 == 0:
        raise ValueError("interp_quadratic expects an odd node count")
    npairs = (m - 1) // 2
    # Local coordinate 0..2 across each pair, sampled at refine*2 + 1 points.
    x = np.linspace(0.0, 2.0, 2 * refine + 1)
    l0 = 0.5 * (x - 1.0) * (x - 2.0)
    l1 = x * (2.0 - x)
    l2 = 0.5 * x * (x - 1.0)
    fine = np.empty(values.shape[:-1] + (refine * (m - 1) + 1,), dtype=values.dtype)
    for k in range(npairs):
        seg = (
            values[..., 2 * k, None] * l0
            + values[..., 2 * k + 1, None] * l1
            + values[..., 2 * k + 2, None] * l2
        )
        lo = 2 * refine * k
        fine[..., lo:lo + 2 * refine + 1] = seg
    return fine
