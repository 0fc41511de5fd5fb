import numpy as np
import pytest
from scipy.integrate import quad

from polarfock import central_ext as ce, linop, loopgroup as lg
from polarfock.linop import ModeWindow


def band_limited(rng, band, real=True):
    c = rng.standard_normal(2 * band + 1) + 1j * rng.standard_normal(2 * band + 1)
    if real:
        c = 0.5 * (c + np.conj(c[::-1]))
    return lg.FourierFunction(c, real_valued=real)


class TestMultOperator:
    def test_constant(self):
        g = lg.from_coefficients({0: 2.5 + 0.5j})
        m = lg.mult_operator(g, ModeWindow(3, 3))
        assert np.allclose(m.entries, (2.5 + 0.5j) * np.eye(6))

    def test_single_mode_shift(self):
        g = lg.from_coefficients({1: 1.0})
        m = lg.mult_operator(g, ModeWindow(2, 2))
        expected = np.zeros((4, 4))
        for col in range(3):
            expected[col + 1, col] = 1.0
        assert np.allclose(m.entries, expected)

    def test_product_is_convolution_in_interior(self, rng):
        # M_g M_h = M_{gh} away from the band edges; gh by coefficient
        # convolution (independent oracle via numpy.convolve)
        g = band_limited(rng, 2)
        h = band_limited(rng, 1)
        window = ModeWindow(8, 8)
        prod = lg.mult_operator(g, window).entries @ lg.mult_operator(h, window).entries
        gh = lg.FourierFunction(np.convolve(g.coefficients, h.coefficients))
        direct = lg.mult_operator(gh, window).entries
        interior = slice(3, 13)  # modes within band-sum of both edges
        assert np.allclose(prod[interior, interior], direct[interior, interior], atol=1e-12)


class TestHsOffdiag:
    def test_constant_vanishes(self):
        assert lg.hs_offdiag_norm(lg.from_coefficients({0: 3.0})) == 0.0

    def test_single_mode(self):
        assert lg.hs_offdiag_norm(lg.from_coefficients({1: 1.0})) == pytest.approx(2.0)

    def test_cosine(self):
        assert lg.hs_offdiag_norm(lg.cosine()) == pytest.approx(np.sqrt(2.0))

    def test_matches_window_ss_defect(self, rng):
        g = band_limited(rng, 3)
        window = ModeWindow(6, 6)  # window >= 2L
        hs_pm, hs_mp, _ = linop.ss_defect(lg.mult_operator(g, window))
        assert 2.0 * np.sqrt(hs_pm**2 + hs_mp**2) == pytest.approx(
            lg.hs_offdiag_norm(g), abs=1e-10
        )


class TestLoopCocycle:
    def test_antisymmetry_diagonal(self, rng):
        h = band_limited(rng, 2)
        assert lg.loop_cocycle(h, h) == 0

    def test_sin_cos_witness(self):
        value = lg.loop_cocycle(lg.sine(), lg.cosine())
        assert value == pytest.approx(0.5j, abs=1e-12)

    def test_quadrature_oracle(self, rng):
        # independent adaptive quadrature of (1/2 pi i) int h g' dt
        h = band_limited(rng, 2)
        g = band_limited(rng, 2)

        def integrand(t):
            return (h.values(np.array([t])) * g.derivative_values(np.array([t])))[0]

        re, _ = quad(lambda t: integrand(t).real, 0.0, 1.0, limit=200)
        im, _ = quad(lambda t: integrand(t).imag, 0.0, 1.0, limit=200)
        oracle = (re + 1j * im) / (2j * np.pi)
        assert lg.loop_cocycle(h, g) == pytest.approx(oracle, abs=1e-10)

    def test_bilinear(self, rng):
        h1 = band_limited(rng, 1, real=False)
        h2 = band_limited(rng, 1, real=False)
        g = band_limited(rng, 2, real=False)
        lam = 1.3 - 0.4j
        combined = lg.FourierFunction(lam * h1.coefficients + h2.coefficients)
        assert lg.loop_cocycle(combined, g) == pytest.approx(
            lam * lg.loop_cocycle(h1, g) + lg.loop_cocycle(h2, g), abs=1e-12
        )

    def test_antisymmetric(self, rng):
        h = band_limited(rng, 2, real=False)
        g = band_limited(rng, 2, real=False)
        assert lg.loop_cocycle(h, g) == pytest.approx(-lg.loop_cocycle(g, h), abs=1e-12)

    def test_real_inputs_purely_imaginary(self, rng):
        for _ in range(5):
            h = band_limited(rng, 3)
            g = band_limited(rng, 3)
            assert abs(lg.loop_cocycle(h, g).real) <= 1e-12


class TestNonTrivialityWitness:
    def test_commuting_with_nonzero_cocycle(self):
        # the concrete witness: [M_h, M_g] = 0 in the window interior while
        # the cocycle is i/2 != 0
        window = ModeWindow(8, 8)
        mh = lg.mult_operator(lg.sine(), window).entries
        mg = lg.mult_operator(lg.cosine(), window).entries
        comm = mh @ mg - mg @ mh
        interior = slice(2, 14)
        assert np.abs(comm[interior, interior]).max() == 0.0
        assert lg.loop_cocycle(lg.sine(), lg.cosine()) != 0

    def test_window_cocycle_matches_closed_form(self):
        window = ModeWindow(8, 8)
        assert lg.window_cocycle(lg.sine(), lg.cosine(), window) == pytest.approx(
            0.5j, abs=1e-10
        )

    def test_window_convergence_monotone(self, rng):
        # band larger than the smallest window: |error| decreases with the
        # window and vanishes once the window holds the band
        h = band_limited(rng, 10)
        g = band_limited(rng, 10)
        exact = lg.loop_cocycle(h, g)
        errs = [
            abs(lg.window_cocycle(h, g, ModeWindow(n, n)) - exact) for n in (8, 16, 32)
        ]
        assert errs[0] >= errs[1] >= errs[2]
        assert errs[2] <= 1e-8


def test_fourier_json_roundtrip(rng):
    g = band_limited(rng, 2)
    back = lg.fourier_from_json(lg.fourier_to_json(g))
    assert np.allclose(back.coefficients, g.coefficients)


def test_fourier_validation():
    with pytest.raises(ValueError):
        lg.FourierFunction(np.ones(4))  # even length
    with pytest.raises(ValueError):
        lg.FourierFunction(np.array([1j, 0.0, 1j]), real_valued=True)
    with pytest.raises(ValueError):
        lg.fourier_from_json({"L": 2, "re": [0, 0, 0], "im": [0, 0, 0]})
