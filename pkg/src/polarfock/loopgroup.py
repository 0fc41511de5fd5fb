"""Fourier-truncated multiplication operators on L^2 of the circle.

Multiplication by g acts as convolution on Fourier modes, M_g e_l =
sum_k g_{k-l} e_k, with the polarization split at Fourier index 0.  These
operators furnish the concrete witness that the Schwinger cocycle is
non-trivial: commuting multiplication operators with non-zero cocycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linop import ModeWindow, PolarizedOperator
from .central_ext import schwinger_cocycle

QUADRATURE_NODES = 4096  # trapezoid on the circle; spectral for band-limited g


@dataclass(frozen=True)
class FourierFunction:
    """Coefficients g_l for l in [-L, L]."""

    coefficients: np.ndarray = field(repr=False)
    real_valued: bool = False

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("coefficients must be a 1-d array of odd length")
        if self.real_valued:
            if np.abs(c - np.conj(c[::-1])).max() > 1e-12:
                raise ValueError("real_valued flag violated: g_{-l} != conj(g_l)")
        object.__setattr__(self, "coefficients", c)

    @property
    def band(self) -> int:
        return (self.coefficients.size - 1) // 2

    def coeff(self, l: int) -> complex:
        if abs(l) > self.band:
            return 0.0 + 0.0j
        return complex(self.coefficients[l + self.band])

    def values(self, t: np.ndarray) -> np.ndarray:
        """g(t) = sum_l g_l exp(2 pi i l t) on the unit-period circle."""
        t = np.asarray(t, dtype=float)
        ls = np.arange(-self.band, self.band + 1)
        return (self.coefficients[None, :] * np.exp(2j * np.pi * t[:, None] * ls)).sum(
            axis=1
        )

    def derivative_values(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        ls = np.arange(-self.band, self.band + 1)
        w = 2j * np.pi * ls * self.coefficients
        return (w[None, :] * np.exp(2j * np.pi * t[:, None] * ls)).sum(axis=1)


def from_coefficients(pairs: dict[int, complex], real_valued: bool = False) -> FourierFunction:
    band = max(abs(l) for l in pairs) if pairs else 0
    c = np.zeros(2 * band + 1, dtype=complex)
    for l, v in pairs.items():
        c[l + band] = v
    return FourierFunction(c, real_valued=real_valued)


def sine() -> FourierFunction:
    """sin(2 pi t)."""
    return from_coefficients({1: -0.5j, -1: 0.5j}, real_valued=True)


def cosine() -> FourierFunction:
    """cos(2 pi t)."""
    return from_coefficients({1: 0.5, -1: 0.5}, real_valued=True)


def mult_operator(g: FourierFunction, window: ModeWindow) -> PolarizedOperator:
    """Banded convolution matrix of M_g on the window (edge-truncated)."""
    modes = window.mode_indices()
    dim = window.dim
    m = np.zeros((dim, dim), dtype=complex)
    for col, l in enumerate(modes):
        for row, k in enumerate(modes):
            if abs(k - l) <= g.band:
                m[row, col] = g.coeff(k - l)
    return PolarizedOperator(window, m)


def hs_offdiag_norm(g: FourierFunction) -> float:
    """Closed form ||[eps, M_g]||_2 = 2 sqrt(sum_l |l| |g_l|^2)."""
    ls = np.arange(-g.band, g.band + 1)
    return 2.0 * float(np.sqrt(np.sum(np.abs(ls) * np.abs(g.coefficients) ** 2)))


def loop_cocycle(h: FourierFunction, g: FourierFunction) -> complex:
    """Schwinger cocycle of multiplication operators, - sum_l l h_l g_{-l}.

    Cross-checked against the integral form (1/2 pi i) \\int h g' dt by
    circle-trapezoid quadrature (exact for band-limited input).
    """
    fourier_sum = 0.0 + 0.0j
    for l in range(-max(h.band, g.band), max(h.band, g.band) + 1):
        fourier_sum -= l * h.coeff(l) * g.coeff(-l)
    t = np.arange(QUADRATURE_NODES) / QUADRATURE_NODES
    integrand = h.values(t) * g.derivative_values(t)
    quadrature = integrand.mean() / (2j * np.pi)
    if abs(fourier_sum - quadrature) > 1e-10 * max(1.0, abs(fourier_sum)):
        raise AssertionError(
            f"cocycle formulas disagree: sum {fourier_sum} vs integral {quadrature}"
        )
    return complex(fourier_sum)


def window_cocycle(h: FourierFunction, g: FourierFunction, window: ModeWindow) -> complex:
    """Schwinger cocycle of the truncated multiplication operators."""
    return schwinger_cocycle(mult_operator(h, window), mult_operator(g, window))


def fourier_to_json(g: FourierFunction) -> dict:
    return {
        "L": g.band,
        "re": g.coefficients.real.tolist(),
        "im": g.coefficients.imag.tolist(),
    }


def fourier_from_json(payload: dict) -> FourierFunction:
    try:
        band = int(payload["L"])
        re = np.asarray(payload["re"], dtype=float)
        im = np.asarray(payload["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed fourier payload: {exc}") from exc
    if re.shape != im.shape or re.size != 2 * band + 1:
        raise ValueError("coefficient arrays must have length 2L+1")
    return FourierFunction(re + 1j * im)
