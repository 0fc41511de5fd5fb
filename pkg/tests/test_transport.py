import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm, logm

from polarfock import central_ext as ce, linop, sampling, transport
from polarfock.linop import ModeWindow, PolarizedOperator
from polarfock.transport import SampledPath


def constant_identity_path(window, nodes=65):
    ts = np.linspace(0.0, 1.0, nodes)
    eye = PolarizedOperator.identity(window)
    return SampledPath(ts, tuple(eye for _ in ts))


def block_diagonal_path(rng, window, nodes=201):
    gen = sampling.random_antihermitian(rng, window, 0.5).entries
    n = window.neg_count
    gen[:n, n:] = 0.0
    gen[n:, :n] = 0.0
    ts = np.linspace(0.0, 1.0, nodes)
    ops = tuple(PolarizedOperator(window, expm(t * gen)) for t in ts)
    return SampledPath(ts, ops)


class TestConnectionEval:
    def test_constant_path(self, rng):
        w = ModeWindow(2, 2)
        g = sampling.random_tau_domain_unitary(rng, w)
        zero = np.zeros((w.dim, w.dim))
        q = np.eye(w.pos_count)
        assert ce is not None
        assert transport.connection_eval(g, zero, q, np.zeros((2, 2))) == 0.0

    def test_block_diagonal_with_q_equals_a(self, rng):
        # unitary diagonal path with q = a: all terms cancel
        w = ModeWindow(2, 2)
        u = sampling.random_block_diagonal_unitary(rng, w)
        gen = sampling.random_antihermitian(rng, w, 0.5).entries
        gen[:2, 2:] = 0.0
        gen[2:, :2] = 0.0
        gdot = gen @ u.entries
        a = u.entries[2:, 2:]
        adot = gdot[2:, 2:]
        val = transport.connection_eval(u, gdot, a, adot)
        assert abs(val) <= 1e-12

    def test_right_invariance(self, rng):
        # the right-invariant form is unchanged under right translation of
        # the whole configuration (g, q) -> (g k, q q_k)
        w = ModeWindow(2, 2)
        g = sampling.random_tau_domain_unitary(rng, w)
        k = sampling.random_tau_domain_unitary(rng, w)
        x = sampling.random_antihermitian(rng, w).entries
        gdot = x @ g.entries
        q = ce.section_tau(g).q
        qdot = 0.3 * sampling.gaussian_matrix(rng, 2)
        val = transport.connection_eval(g, gdot, q, qdot)
        gk = g @ k
        qk = ce.section_tau(k).q
        val_translated = transport.connection_eval(gk, gdot @ k.entries, q @ qk, qdot @ qk)
        assert val_translated == pytest.approx(val, abs=1e-10)

    def test_left_variant_differs_by_odd_blocks(self, rng):
        w = ModeWindow(2, 2)
        g = sampling.random_tau_domain_unitary(rng, w)
        gdot = sampling.gaussian_matrix(rng, w.dim)
        q = np.eye(2, dtype=complex)
        qdot = np.zeros((2, 2))
        right = transport.connection_eval(g, gdot, q, qdot, "right")
        left = transport.connection_eval(g, gdot, q, qdot, "left")
        ginv = np.linalg.inv(g.entries)
        beta, gamma = ginv[2:, :2], ginv[:2, 2:]
        bdot, cdot = gdot[2:, :2], gdot[:2, 2:]
        expected = -np.trace(bdot @ gamma) + np.trace(beta @ cdot)
        assert right - left == pytest.approx(expected, abs=1e-12)


class TestParallelTransport:
    def test_constant_identity(self):
        res = transport.parallel_transport(constant_identity_path(ModeWindow(2, 2)))
        assert res.phase == pytest.approx(1.0)
        assert res.det_q == pytest.approx(1.0)

    def test_block_diagonal_unitary_tau_phase_one(self, rng):
        w = ModeWindow(2, 2)
        path = block_diagonal_path(rng, w)
        res = transport.parallel_transport(path)
        assert res.phase == pytest.approx(1.0, abs=1e-12)
        # det q equals det a(T) for diagonal paths
        a_end = path.ops[-1].entries[2:, 2:]
        assert res.det_q == pytest.approx(np.linalg.det(a_end), abs=1e-9)

    def test_unitary_paths_keep_unit_determinant(self, rng):
        w = ModeWindow(2, 2)
        path = sampling.smooth_unitary_path(rng, w, 801, strength=0.4)
        res = transport.parallel_transport(path)
        assert abs(abs(res.det_q) - 1.0) <= 1e-8

    def test_lift_endpoint_is_consistent(self, rng):
        w = ModeWindow(2, 2)
        path = sampling.smooth_unitary_path(rng, w, 401, strength=0.4)
        res = transport.parallel_transport(path)
        lift = res.lift_endpoint()
        a_end = path.ops[-1].entries[2:, 2:]
        lam = np.linalg.det(np.linalg.solve(a_end, lift.q))
        assert lam == pytest.approx(res.phase, rel=1e-10)

    def test_requires_identity_start(self, rng):
        w = ModeWindow(2, 2)
        ts = np.linspace(0, 1, 8)
        op = sampling.haar_unitary(rng, w)
        with pytest.raises(ValueError, match="identity"):
            transport.parallel_transport(SampledPath(ts, tuple(op for _ in ts)))

    def test_domain_exit_reports_time(self):
        # rotation through pi/2 makes the ++ block singular
        w = ModeWindow(1, 1)
        ts = np.linspace(0.0, 1.0, 41)
        ops = tuple(
            PolarizedOperator(
                w,
                np.array(
                    [
                        [np.cos(np.pi * t / 2), -np.sin(np.pi * t / 2)],
                        [np.sin(np.pi * t / 2), np.cos(np.pi * t / 2)],
                    ],
                    dtype=complex,
                ),
            )
            for t in ts
        )
        with pytest.raises(ce.SectionDomainError, match="t = 1"):
            transport.parallel_transport(SampledPath(ts, ops))

    def test_insufficient_sampling_reported(self, rng):
        w = ModeWindow(1, 1)
        ts = np.array([0.0, 0.5, 1.0])
        gen = np.array([[0, -1], [1, 0]], dtype=complex)
        ops = tuple(PolarizedOperator(w, expm(1.4 * t * gen)) for t in ts)
        with pytest.raises(ValueError, match="insufficient sampling"):
            SampledPath(ts, ops).check_smoothness(bound=1.0)


class TestSemigroup:
    def test_degenerate_leg(self, rng):
        w = ModeWindow(2, 2)
        path = sampling.smooth_unitary_path(rng, w, 101, strength=0.3)
        assert transport.check_semigroup(path, 0, 0, 100) <= 1e-12

    def test_smooth_random_unitary_path(self, rng):
        w = ModeWindow(3, 3)
        path = sampling.smooth_unitary_path(rng, w, 241, strength=0.45)
        assert transport.check_semigroup(path, 0, 110, 240) <= 1e-8

    def test_left_variant_fails(self, rng):
        # documents why the right-invariant variant is the time evolution
        w = ModeWindow(3, 3)
        path = sampling.smooth_unitary_path(rng, w, 201, strength=0.5)
        assert transport.check_semigroup(path, 0, 90, 200, variant="left") > 1e-4


class TestHolonomyLoop:
    @pytest.mark.parametrize("delta", [0.0, 0.25, 0.5, 0.9])
    def test_matches_exponential(self, delta):
        phase = transport.holonomy_loop(delta, 512)
        assert abs(phase - np.exp(2j * np.pi * delta)) <= 1e-6

    def test_quarter_turn_is_i(self):
        assert transport.holonomy_loop(0.25, 512) == pytest.approx(1j, abs=1e-6)

    def test_half_turn_is_minus_one(self):
        assert transport.holonomy_loop(0.5, 512) == pytest.approx(-1.0, abs=1e-6)

    @pytest.mark.parametrize("flat", [False, True])
    def test_quadrature_oracle(self, flat):
        # independent oracle: adaptive quadrature of phi-dot (r^2 - 1)
        delta = 0.7
        if flat:
            n_wind = int(np.ceil(8.0 * delta / 4.5))
            amp = 8.0 * delta / (5.0 * n_wind)

            def integrand(t):
                rho = amp * np.sin(np.pi * t) ** 4
                phi_dot = -2.0 * np.pi * n_wind * (1.0 - np.cos(2.0 * np.pi * t))
                return phi_dot * ((1.0 - rho) - 1.0)

        else:
            n_wind = int(np.ceil(2.0 * delta / 0.9))
            amp = 2.0 * delta / n_wind

            def integrand(t):
                rho = amp * np.sin(np.pi * t) ** 2
                return -2.0 * np.pi * n_wind * ((1.0 - rho) - 1.0)

        total, _ = quad(integrand, 0.0, 1.0, limit=200)
        oracle = np.exp(1j * total)
        loop = transport.holonomy_loop_path(delta, 2048, flat_ends=flat)
        assert transport.parallel_transport(loop).phase == pytest.approx(
            oracle, abs=1e-7
        )
        assert oracle == pytest.approx(np.exp(2j * np.pi * delta), abs=1e-12)

    def test_step_halving_improves(self):
        for delta in (0.25, 0.5, 0.9):
            target = np.exp(2j * np.pi * delta)
            coarse = abs(transport.holonomy_loop(delta, 256) - target)
            fine = abs(transport.holonomy_loop(delta, 512) - target)
            assert coarse >= 3.5 * fine

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            transport.holonomy_loop(1.2, 256)
        with pytest.raises(ValueError):
            transport.holonomy_loop(0.5, 32)


class TestCausalFactorization:
    def test_identity_second_segment(self, rng):
        w = ModeWindow(2, 2)
        p1 = sampling.pulse_unitary_path(rng, w, 161, strength=0.3)
        ts2 = p1.times[-1] + np.linspace(0.0, 0.5, 81)  # matching node spacing
        eye = PolarizedOperator.identity(w)
        p2 = SampledPath(ts2, tuple(eye for _ in ts2))
        assert transport.causal_factorization(p1, p2) <= 1e-8  # semigroup tolerance

    def test_two_segments_compose(self, rng):
        # pulse-like segments keep the composite C^1 at the junction
        w = ModeWindow(2, 2)
        p1 = sampling.pulse_unitary_path(rng, w, 161, strength=0.4)
        raw = sampling.pulse_unitary_path(rng, w, 161, strength=0.3)
        p2 = SampledPath(p1.times[-1] + raw.times, raw.ops)
        assert transport.causal_factorization(p1, p2) <= 1e-8

    def test_time_gap_rejected(self, rng):
        w = ModeWindow(2, 2)
        p1 = sampling.pulse_unitary_path(rng, w, 33, strength=0.2)
        p2 = SampledPath(p1.times + 5.0, p1.ops)
        with pytest.raises(ValueError, match="start where"):
            transport.causal_factorization(p1, p2)


class TestGeometryProperties:
    def test_reparametrization_invariance(self):
        delta = 0.5
        nodes = 1024
        base = transport.parallel_transport(transport.holonomy_loop_path(delta, nodes))
        u = np.linspace(0.0, 1.0, nodes + 1)
        psi = u - 0.1 * np.sin(2 * np.pi * u) / (2 * np.pi)
        n_wind = int(np.ceil(2 * delta / 0.9))
        amp = 2 * delta / n_wind
        rho = amp * np.sin(np.pi * psi) ** 2
        r = np.sqrt(1 - rho)
        phi = -2 * np.pi * n_wind * psi
        a, b = r * np.exp(1j * phi), np.sqrt(rho)
        w = ModeWindow(1, 1)
        ops = tuple(
            PolarizedOperator(w, np.array([[np.conj(ai), -np.conj(bi)], [bi, ai]]))
            for ai, bi in zip(a, b)
        )
        warped = transport.parallel_transport(SampledPath(u, ops))
        assert abs(base.phase - warped.phase) <= 1e-8

    def test_curvature_matches_schwinger_cocycle(self, rng):
        # phase around a small commutator square of purely odd right-invariant
        # generators approximates exp(area c(X, Y)) to O(area^2)
        w = ModeWindow(2, 2)

        def odd_gen():
            m = sampling.gaussian_matrix(rng, w.dim, scale=0.4)
            m[:2, :2] = 0.0
            m[2:, 2:] = 0.0
            return 0.5 * (m - m.conj().T)

        x, y = odd_gen(), odd_gen()
        c = ce.schwinger_cocycle(
            PolarizedOperator(w, x), PolarizedOperator(w, y)
        )

        def square_phase(s, nseg=200):
            ts, ops = [0.0], [np.eye(w.dim, dtype=complex)]
            cur = np.eye(w.dim, dtype=complex)
            t0 = 0.0
            for gen, sign in ((y, 1), (x, 1), (y, -1), (x, -1)):
                for i in range(1, nseg + 1):
                    ops.append(expm(sign * s * i / nseg * gen) @ cur)
                    ts.append(t0 + s * i / nseg)
                cur = expm(sign * s * gen) @ cur
                t0 += s
            closing = logm(cur)
            for i in range(1, nseg + 1):
                ops.append(expm((1.0 - i / nseg) * closing))
                ts.append(t0 + s * i / nseg)
            path = SampledPath(
                np.asarray(ts), tuple(PolarizedOperator(w, m) for m in ops)
            )
            return transport.parallel_transport(path).det_q

        defects = []
        for s in (0.1, 0.05):
            area = s * s
            defects.append(abs(square_phase(s) - np.exp(area * c)))
            assert defects[-1] <= 10.0 * area**2
        assert defects[0] / defects[1] >= 10.0  # order >= 2 in the area


def test_path_json_roundtrip(rng, tmp_path):
    w = ModeWindow(2, 2)
    path = sampling.smooth_unitary_path(rng, w, 9, strength=0.2)
    fname = tmp_path / "path.json"
    transport.save_path(path, fname)
    back = transport.load_path(fname)
    assert np.allclose(back.times, path.times)
    for a, b in zip(back.ops, path.ops):
        assert np.allclose(a.entries, b.entries)


def test_path_validation(rng):
    w = ModeWindow(1, 1)
    eye = PolarizedOperator.identity(w)
    with pytest.raises(ValueError):
        SampledPath(np.array([0.0, 0.0]), (eye, eye))  # not increasing
    with pytest.raises(ValueError):
        SampledPath(np.array([0.0, 1.0]), (eye,))  # length mismatch
