"""Spherical harmonics: associated Legendre polynomials, complex and real
bases, the moment-coupling coefficients, and numerical projection.

Conventions (fixed, right-handed, z-up): theta is the polar angle from +z,
phi the azimuth from +x toward +y.  The Condon-Shortley phase (-1)^m lives in
the complex basis, NOT in the associated Legendre polynomial -- most library
conventions differ, so assoc_legendre here is phase-free.

The real basis combines conjugate pairs so that m>0 carries cos(m phi) and
m<0 carries sin(|m| phi), both with positive prefactor.
"""

from __future__ import annotations

import math

import numpy as np


class ShDomainError(ValueError):
    pass


class ShIndexError(ValueError):
    pass


class CouplingDomainError(ValueError):
    """Radicand of a coupling coefficient is negative: the requested index
    combination is outside the region the moment equations reference, which
    indicates an equation-builder bug rather than a user error."""


def assoc_legendre(l, m, x):
    """P^{l,m}(x) WITHOUT the Condon-Shortley factor, 0 <= m <= l.

    Accepts scalars or numpy arrays for x.
    """
    if m < 0 or m > l:
        raise ShDomainError(f"assoc_legendre requires 0 <= m <= l, got ({l},{m})")
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0 + 1e-12):
        raise ShDomainError("assoc_legendre argument outside [-1, 1]")
    xa = np.clip(xa, -1.0, 1.0)
    # P^{m,m} = (2m-1)!! (1-x^2)^{m/2}, then upward recurrence in l
    somx2 = np.sqrt(1.0 - xa * xa)
    pmm = np.ones_like(xa)
    fact = 1.0
    for _ in range(m):
        pmm = pmm * (fact * somx2)
        fact += 2.0
    if l == m:
        return pmm if pmm.shape else float(pmm)
    pmmp1 = xa * (2 * m + 1) * pmm
    if l == m + 1:
        return pmmp1 if pmmp1.shape else float(pmmp1)
    for ll in range(m + 2, l + 1):
        pll = (xa * (2 * ll - 1) * pmmp1 - (ll + m - 1) * pmm) / (ll - m)
        pmm, pmmp1 = pmmp1, pll
    return pmmp1 if pmmp1.shape else float(pmmp1)


def complex_sh(l, m, theta, phi):
    """Complex basis Y^{l,m}(theta, phi) with Condon-Shortley phase."""
    if abs(m) > l:
        raise ShIndexError(f"|m| > l for ({l},{m})")
    if m < 0:
        return (-1) ** m * np.conj(complex_sh(l, -m, theta, phi))
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    norm = math.sqrt((2 * l + 1) / (4 * math.pi)
                     * math.factorial(l - m) / math.factorial(l + m))
    val = ((-1) ** m * norm * np.exp(1j * m * phi)
           * assoc_legendre(l, m, np.cos(theta)))
    return val if np.asarray(val).shape else complex(val)


def real_sh(l, m, theta, phi):
    """Real basis: the conjugate-pair combination of complex_sh.

    m=0 equals complex_sh exactly; for m != 0 the imaginary part of the
    defining combination vanishes identically and is discarded.
    """
    if abs(m) > l:
        raise ShIndexError(f"|m| > l for ({l},{m})")
    if m == 0:
        val = np.real(complex_sh(l, 0, theta, phi))
    elif m < 0:
        val = np.real((1j / math.sqrt(2))
                      * (complex_sh(l, m, theta, phi)
                         - (-1) ** m * complex_sh(l, -m, theta, phi)))
    else:
        val = np.real((1 / math.sqrt(2))
                      * (complex_sh(l, -m, theta, phi)
                         + (-1) ** m * complex_sh(l, m, theta, phi)))
    return val if np.asarray(val).shape else float(val)


# ---------------------------------------------------------------------------
# moment-coupling coefficients
# ---------------------------------------------------------------------------

_COUPLING_KINDS = "abcdef"


def coupling(kind, l, m):
    """Closed-form coupling coefficients tying band l to bands l +/- 1.

    Zero numerators return 0.0 (e.g. b at |m| = l); a negative radicand
    raises CouplingDomainError.
    """
    if kind == "a":
        num = (l - m + 1) * (l + m + 1)
        den = (2 * l + 3) * (2 * l + 1)
    elif kind == "b":
        num = (l - m) * (l + m)
        den = (2 * l + 1) * (2 * l - 1)
    elif kind == "c":
        num = (l + m + 1) * (l + m + 2)
        den = (2 * l + 3) * (2 * l + 1)
    elif kind == "d":
        num = (l - m) * (l - m - 1)
        den = (2 * l + 1) * (2 * l - 1)
    elif kind == "e":
        num = (l - m + 1) * (l - m + 2)
        den = (2 * l + 3) * (2 * l + 1)
    elif kind == "f":
        num = (l + m) * (l + m - 1)
        den = (2 * l + 1) * (2 * l - 1)
    else:
        raise ValueError(f"coupling kind must be one of '{_COUPLING_KINDS}'")
    if num == 0:
        return 0.0
    if num * den < 0:
        raise CouplingDomainError(
            f"negative radicand for {kind}^({l},{m}); "
            "out-of-range coupling request")
    return math.sqrt(num / den)


def lambda_l(l):
    """Zonal convolution eigenvalue sqrt(4 pi / (2l + 1))."""
    return math.sqrt(4.0 * math.pi / (2 * l + 1))


_SQRT2 = math.sqrt(2.0)


def beta_x(m):
    """x-axis selector for the m != 0 moment equations: gates the e/f pair
    at m = -1 and doubles it (2/sqrt2) at m = +1."""
    if m == -1:
        return 0.0
    if m == 1:
        return _SQRT2
    return 1.0


def beta_y(m):
    """y-axis selector, mirror image of beta_x."""
    if m == -1:
        return _SQRT2
    if m == 1:
        return 0.0
    return 1.0


# ---------------------------------------------------------------------------
# quadrature and projection
# ---------------------------------------------------------------------------

def sphere_quadrature(n_theta=64, n_phi=128):
    """Product rule on the sphere: Gauss-Legendre in cos(theta) times a
    uniform (trapezoid on a periodic interval) rule in phi.

    Returns (theta, phi, w) as broadcastable 2-D arrays with sum(w) = 4 pi;
    spectrally accurate for band-limited integrands.
    """
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)[:, None]
    phi = (np.arange(n_phi) * 2.0 * math.pi / n_phi)[None, :]
    w = wx[:, None] * np.full((1, n_phi), 2.0 * math.pi / n_phi)
    return theta, phi, w


def project_function(f, N, n_theta=64, n_phi=128):
    """Project a spherical function onto the real basis up to band N.

    f(theta, phi) must accept broadcast arrays.  Returns a list of
    ((l, m), coefficient) in (l, m) order.
    """
    theta, phi, w = sphere_quadrature(n_theta, n_phi)
    fv = f(theta + 0 * phi, phi + 0 * theta)
    out = []
    for l in range(N + 1):
        for m in range(-l, l + 1):
            basis = real_sh(l, m, theta + 0 * phi, phi + 0 * theta)
            out.append(((l, m), float(np.sum(w * fv * basis))))
    return out


def reconstruct(coeffs, theta, phi):
    """Sum coeff * real_sh over a ((l, m), value) list."""
    acc = 0.0
    for (l, m), c in coeffs:
        acc = acc + c * real_sh(l, m, theta, phi)
    return acc


def hg_phase(g):
    """Henyey-Greenstein phase function of cos(theta), pole-aligned and
    normalized to integrate to 1 over the sphere."""
    def f(theta, phi):
        mu = np.cos(theta)
        return ((1.0 - g * g)
                / (4.0 * math.pi * (1.0 + g * g - 2.0 * g * mu) ** 1.5))
    return f


def zonal_phase_coefficients(g, N, n_theta=64, n_phi=128):
    """p^{l,0} for a Henyey-Greenstein phase function, by projection."""
    coeffs = project_function(hg_phase(g), N, n_theta, n_phi)
    return [c for (lm, c) in coeffs if lm[1] == 0]
