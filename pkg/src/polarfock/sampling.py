"""Seeded random generators used by the property suites and CLI selftests."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.stats import unitary_group

from .linop import ModeWindow, PolarizedOperator, block_split, rank
from .polarization import Polarization


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def gaussian_matrix(rng, n: int, m: int | None = None, scale: float = 1.0) -> np.ndarray:
    m = n if m is None else m
    return scale * (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m)))


def random_operator(rng, window: ModeWindow, scale: float = 1.0) -> PolarizedOperator:
    return PolarizedOperator(window, gaussian_matrix(rng, window.dim, scale=scale))


def haar_unitary(rng, window: ModeWindow) -> PolarizedOperator:
    u = unitary_group.rvs(window.dim, random_state=rng)
    return PolarizedOperator(window, u)


def random_tau_domain_unitary(rng, window: ModeWindow, attempts: int = 64) -> PolarizedOperator:
    """Haar unitary resampled until the ++ block is safely invertible."""
    for _ in range(attempts):
        u = haar_unitary(rng, window)
        a, _, _, _ = block_split(u)
        s = np.linalg.svd(a, compute_uv=False)
        if s[-1] > 1e-3:
            return u
    raise RuntimeError("could not sample a tau-domain unitary")


def random_antihermitian(rng, window: ModeWindow, scale: float = 1.0) -> PolarizedOperator:
    m = gaussian_matrix(rng, window.dim, scale=scale)
    return PolarizedOperator(window, 0.5 * (m - m.conj().T))


def random_block_diagonal_unitary(rng, window: ModeWindow) -> PolarizedOperator:
    n, p = window.neg_count, window.pos_count
    d = unitary_group.rvs(n, random_state=rng)
    a = unitary_group.rvs(p, random_state=rng)
    m = np.zeros((window.dim, window.dim), dtype=complex)
    m[:n, :n] = d
    m[n:, n:] = a
    return PolarizedOperator(window, m)


def random_subspace(rng, window: ModeWindow, dim: int) -> Polarization:
    if not 1 <= dim < window.dim:
        raise ValueError("need 1 <= dim < window dim")
    u = unitary_group.rvs(window.dim, random_state=rng)
    return Polarization(window, u[:, :dim])


def random_sl_factor(rng, n: int, scale: float = 0.3) -> np.ndarray:
    """Random invertible matrix normalized to determinant one."""
    m = np.eye(n) + gaussian_matrix(rng, n, scale=scale)
    det = np.linalg.det(m)
    return m / det ** (1.0 / n)


def smooth_unitary_path(rng, window: ModeWindow, nodes: int, strength: float = 0.6):
    """exp of a few smooth anti-Hermitian modes, starting at the identity."""
    times = np.linspace(0.0, 1.0, nodes)
    gens = [random_antihermitian(rng, window, scale=strength).entries for _ in range(2)]
    phases = rng.uniform(0.5, 1.5, size=2)
    ops = []
    for t in times:
        x = np.sin(np.pi * t * phases[0]) * gens[0] + (
            1.0 - np.cos(np.pi * t * phases[1])
        ) * gens[1]
        ops.append(PolarizedOperator(window, expm(x)))
    from .transport import SampledPath

    return SampledPath(times, tuple(ops))


def pulse_unitary_path(rng, window: ModeWindow, nodes: int, strength: float = 0.5):
    """Unitary segment with vanishing endpoint derivatives (pulse-like).

    Suitable for gluing into composites: the flat ends keep the composite
    C^1 at the junctions, like a compactly supported field evolution.
    """
    times = np.linspace(0.0, 1.0, nodes)
    gens = [random_antihermitian(rng, window, scale=strength).entries for _ in range(2)]
    b1 = times - np.sin(2 * np.pi * times) / (2 * np.pi)
    b2 = 0.5 * times - np.sin(4 * np.pi * times) / (8 * np.pi)
    ops = [
        PolarizedOperator(window, expm(u1 * gens[0] + u2 * gens[1]))
        for u1, u2 in zip(b1, b2)
    ]
    from .transport import SampledPath

    return SampledPath(times, tuple(ops))


def random_commensurable_pair(rng, window: ModeWindow, shared: int, extra_v: int, extra_w: int):
    """Two subspaces sharing exactly a `shared`-dimensional intersection."""
    total = shared + extra_v + extra_w
    if total >= window.dim:
        raise ValueError("window too small for the requested pair")
    u = unitary_group.rvs(window.dim, random_state=rng)
    common = u[:, :shared]
    v = Polarization(window, np.hstack([common, u[:, shared : shared + extra_v]]))
    w = Polarization(
        window,
        np.hstack([common, u[:, shared + extra_v : shared + extra_v + extra_w]]),
    )
    return v, w
