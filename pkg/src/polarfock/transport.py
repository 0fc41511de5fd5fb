"""Right-invariant parallel transport of implementer phases.

A path of window operators is supplied as samples; derivatives are
reconstructed with three-point stencils (central in the interior,
one-sided at the ends) and the connection integrand is integrated with a
composite trapezoid plus one Richardson level on uniform grids.

Two scalars are reported per transport:

* ``phase``  -- the tau-trivialization component det(a(T)^{-1} q(T)),
  i.e. exp of the regularized integral tr[da (alpha - a^{-1}) + db gamma];
* ``det_q`` -- det q(T) of the lifted pair, exp of tr[da alpha + db gamma].

det_q is a class invariant of the lift and composes exactly under
right-translated concatenation (the semigroup and causal checks use it);
the trivialization component alone picks up the group 2-cocycle instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .linop import RANK_RTOL, ModeWindow, PolarizedOperator, operator_from_json, operator_to_json
from .central_ext import ExtElement, SectionDomainError


@dataclass(frozen=True)
class SampledPath:
    times: np.ndarray
    ops: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("need at least two samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        ops = tuple(self.ops)
        if len(ops) != t.size:
            raise ValueError("one operator per time node required")
        window = ops[0].window
        for op in ops:
            if op.window != window:
                raise ValueError("all operators must share one window")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "ops", ops)

    @property
    def window(self) -> ModeWindow:
        return self.ops[0].window

    def __len__(self) -> int:
        return len(self.ops)

    def starts_at_identity(self, tol: float = 1e-10) -> bool:
        eye = np.eye(self.window.dim)
        return bool(np.linalg.norm(self.ops[0].entries - eye, 2) <= tol)

    def check_smoothness(self, bound: float = 50.0) -> float:
        """Largest ||g_{i+1}-g_i|| / dt; raises above the configured bound."""
        worst = 0.0
        for i in range(len(self.ops) - 1):
            dt = self.times[i + 1] - self.times[i]
            step = np.linalg.norm(self.ops[i + 1].entries - self.ops[i].entries, 2)
            worst = max(worst, step / dt)
        if worst > bound:
            raise ValueError(
                f"insufficient sampling: max |dg|/dt = {worst:.3g} exceeds bound {bound}"
            )
        return worst

    def right_translated(self, index: int) -> "SampledPath":
        """Path t -> g(t) g(t_index)^{-1}, starting at the identity there."""
        base = np.linalg.inv(self.ops[index].entries)
        ops = tuple(
            PolarizedOperator(self.window, op.entries @ base) for op in self.ops
        )
        return SampledPath(self.times, ops)

    def segment(self, i0: int, i1: int) -> "SampledPath":
        return SampledPath(self.times[i0 : i1 + 1], self.ops[i0 : i1 + 1])


@dataclass(frozen=True)
class TransportResult:
    phase: complex                       # det(a(T)^{-1} q(T))
    det_q: complex                       # det q(T), multiplicative
    contributions: np.ndarray = field(repr=False)
    order: int = 2
    steps: int = 0
    variant: str = "right"
    endpoint: PolarizedOperator | None = field(default=None, repr=False)

    def lift_endpoint(self) -> ExtElement:
        """Representative (g(T), q) with det(a^{-1} q) equal to the phase."""
        a_end = _blocks(self.endpoint)[0]
        p = self.endpoint.window.pos_count
        d = np.eye(p, dtype=complex)
        d[0, 0] = self.phase
        return ExtElement(self.endpoint, a_end @ d)


def _blocks(op: PolarizedOperator):
    n = op.window.neg_count
    m = op.entries
    return m[n:, n:], m[n:, :n], m[:n, n:], m[:n, :n]


def _deriv_weights(xs: np.ndarray, at: float) -> np.ndarray:
    """Lagrange differentiation weights at ``at`` through the nodes xs."""
    k = xs.size
    w = np.zeros(k)
    for j in range(k):
        denom = np.prod([xs[j] - xs[m] for m in range(k) if m != j])
        total = 0.0
        for n_idx in range(k):
            if n_idx == j:
                continue
            total += np.prod(
                [at - xs[m] for m in range(k) if m != j and m != n_idx]
            )
        w[j] = total / denom
    return w


def _derivatives(times, mats):
    """Five-point (clamped near the ends) stencil derivatives per node."""
    n = len(mats)
    width = min(5, n)
    out = []
    for i in range(n):
        lo = min(max(0, i - width // 2), n - width)
        idx = range(lo, lo + width)
        w = _deriv_weights(times[lo : lo + width], times[i])
        out.append(sum(wj * mats[j] for wj, j in zip(w, idx)))
    return out


def _integrands(path: SampledPath, variant: str):
    """Per-node values of the full and regularized connection integrands."""
    mats = [op.entries for op in path.ops]
    derivs = _derivatives(path.times, mats)
    n = path.window.neg_count
    full = np.zeros(len(mats), dtype=complex)
    reg = np.zeros(len(mats), dtype=complex)
    for i, (g, gdot) in enumerate(zip(mats, derivs)):
        a = g[n:, n:]
        s = np.linalg.svd(a, compute_uv=False)
        scale = max(np.abs(g).max(), 1e-300)
        if s[-1] <= 1e-12 * scale:
            raise SectionDomainError(
                f"path leaves the tau domain at t = {path.times[i]}"
            )
        ginv = np.linalg.inv(g)
        alpha = ginv[n:, n:]
        beta = ginv[n:, :n]
        gamma = ginv[:n, n:]
        a_inv = np.linalg.inv(a)
        adot = gdot[n:, n:]
        bdot = gdot[n:, :n]
        cdot = gdot[:n, n:]
        if variant == "right":
            full[i] = np.trace(adot @ alpha) + np.trace(bdot @ gamma)
            reg[i] = full[i] - np.trace(adot @ a_inv)
        elif variant == "left":
            full[i] = np.trace(alpha @ adot) + np.trace(beta @ cdot)
            reg[i] = full[i] - np.trace(a_inv @ adot)
        else:
            raise ValueError("variant must be 'right' or 'left'")
    return full, reg


def connection_eval(
    g: PolarizedOperator,
    gdot: np.ndarray,
    q: np.ndarray,
    qdot: np.ndarray,
    variant: str = "right",
) -> complex:
    """Connection one-form on the tangent (gdot, qdot) at (g, q).

    Right-invariant: -tr[da alpha + db gamma - dq q^{-1}];
    left-invariant (Mickelsson-Langmann): -tr[alpha da + beta dc - q^{-1} dq].
    """
    n = g.window.neg_count
    gm = g.entries
    a = gm[n:, n:]
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= 1e-12 * max(np.abs(gm).max(), 1e-300):
        raise SectionDomainError("outside W: ++ block singular")
    q = np.atleast_2d(np.asarray(q, dtype=complex))
    qdot = np.atleast_2d(np.asarray(qdot, dtype=complex))
    sq = np.linalg.svd(q, compute_uv=False)
    if sq[-1] <= RANK_RTOL * max(sq[0], 1e-300):
        raise SectionDomainError("q component singular")
    ginv = np.linalg.inv(gm)
    gdot = np.asarray(gdot, dtype=complex)
    adot = gdot[n:, n:]
    bdot = gdot[n:, :n]
    cdot = gdot[:n, n:]
    alpha = ginv[n:, n:]
    beta = ginv[n:, :n]
    gamma = ginv[:n, n:]
    if variant == "right":
        val = (
            np.trace(adot @ alpha)
            + np.trace(bdot @ gamma)
            - np.trace(qdot @ np.linalg.inv(q))
        )
    elif variant == "left":
        val = (
            np.trace(alpha @ adot)
            + np.trace(beta @ cdot)
            - np.trace(np.linalg.inv(q) @ qdot)
        )
    else:
        raise ValueError("variant must be 'right' or 'left'")
    return -complex(val)


def _is_uniform(times: np.ndarray) -> bool:
    dt = np.diff(times)
    return bool(np.abs(dt - dt[0]).max() <= 1e-12 * max(abs(dt[0]), 1e-300))


def parallel_transport(path: SampledPath, variant: str = "right") -> TransportResult:
    """Horizontal-lift phase along a sampled path starting at the identity."""
    if not path.starts_at_identity(1e-8):
        raise ValueError("path must start at the identity")
    path.check_smoothness()
    full, reg = _integrands(path, variant)
    t = path.times
    i_full = np.trapezoid(full, t)
    i_reg = np.trapezoid(reg, t)
    pieces = 0.5 * (reg[1:] + reg[:-1]) * np.diff(t)
    order = 2
    n_intervals = len(t) - 1
    if n_intervals % 2 == 0 and n_intervals >= 4 and _is_uniform(t):
        sub = SampledPath(t[::2], path.ops[::2])
        full2, reg2 = _integrands(sub, variant)
        i_full = (4.0 * i_full - np.trapezoid(full2, t[::2])) / 3.0
        i_reg = (4.0 * i_reg - np.trapezoid(reg2, t[::2])) / 3.0
        order = 4
    return TransportResult(
        phase=complex(np.exp(i_reg)),
        det_q=complex(np.exp(i_full)),
        contributions=pieces,
        order=order,
        steps=n_intervals,
        variant=variant,
        endpoint=path.ops[-1],
    )


def check_semigroup(
    path: SampledPath, i0: int, i1: int, i2: int, variant: str = "right"
) -> float:
    """|det_q(t2,t0) - det_q(t2,t1) det_q(t1,t0)| on right-translated legs.

    Degenerate legs (coinciding indices) carry unit phase.
    """
    if not 0 <= i0 <= i1 <= i2 < len(path) or i0 == i2:
        raise ValueError("need node indices i0 <= i1 <= i2 spanning the path")
    base = path.right_translated(i0)
    whole = parallel_transport(base.segment(i0, i2), variant)
    first = (
        parallel_transport(base.segment(i0, i1), variant).det_q if i1 > i0 else 1.0
    )
    if i1 < i2:
        second_leg = base.right_translated(i1).segment(i1, i2)
        second = parallel_transport(second_leg, variant).det_q
    else:
        second = 1.0
    return float(abs(whole.det_q - second * first))


def causal_factorization(
    path_a1: SampledPath, path_a2: SampledPath, variant: str = "right"
) -> float:
    """|phase(composite) - phase(A2) phase(A1)| for identity-based segments.

    The composite runs path_a1 and then path_a2 right-translated onto the
    endpoint of path_a1; both inputs must start at the identity.
    """
    if not (path_a1.starts_at_identity(1e-8) and path_a2.starts_at_identity(1e-8)):
        raise ValueError("both segments must start at the identity")
    if path_a1.window != path_a2.window:
        raise ValueError("window mismatch")
    if abs(path_a1.times[-1] - path_a2.times[0]) > 1e-9:
        raise ValueError("second segment must start where the first ends")
    end = path_a1.ops[-1].entries
    times = np.concatenate([path_a1.times, path_a2.times[1:]])
    ops = list(path_a1.ops) + [
        PolarizedOperator(path_a1.window, op.entries @ end) for op in path_a2.ops[1:]
    ]
    composite = SampledPath(times, tuple(ops))
    whole = parallel_transport(composite, variant)
    first = parallel_transport(path_a1, variant)
    second = parallel_transport(path_a2, variant)
    return float(abs(whole.det_q - second.det_q * first.det_q))


# ---------------------------------------------------------------------------
# explicit holonomy loop


def holonomy_loop_path(delta: float, nodes: int, flat_ends: bool = False) -> SampledPath:
    """Closed U(2)-embedded loop whose transported phase is exp(2 pi i delta).

    a(t) = r(t) exp(i phi(t)), b(t) = sqrt(1 - r^2(t)).  The default
    profile winds linearly, phi = -2 pi n_w t, over the occupation bump
    rho = 1 - r^2 = A sin^2(pi t) with A = 2 delta / n_w; the closed form
    oint phi-dot (r^2 - 1) dt = 2 pi n_w A/2 gives the phase, and the
    winding count n_w keeps A below 0.9 for every delta in [0, 1).

    With ``flat_ends`` all first derivatives vanish at the seam
    (rho = A sin^4, phi-dot proportional to sin^2), so the loop glues C^1
    onto flat path segments for detour composites, at the cost of a larger
    quadrature constant.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if nodes < 64:
        raise ValueError("need at least 64 nodes")
    t = np.linspace(0.0, 1.0, nodes + 1)
    if flat_ends:
        n_wind = max(1, math.ceil(8.0 * delta / (5.0 * 0.9)))
        amp = 8.0 * delta / (5.0 * n_wind)
        rho = amp * np.sin(np.pi * t) ** 4
        phi = -2.0 * np.pi * n_wind * (t - np.sin(2.0 * np.pi * t) / (2.0 * np.pi))
    else:
        n_wind = max(1, math.ceil(2.0 * delta / 0.9))
        amp = 2.0 * delta / n_wind
        rho = amp * np.sin(np.pi * t) ** 2
        phi = -2.0 * np.pi * n_wind * t
    r = np.sqrt(1.0 - rho)
    a = r * np.exp(1j * phi)
    b = np.sqrt(rho)
    window = ModeWindow(1, 1)
    ops = []
    for ai, bi in zip(a, b):
        m = np.array([[np.conj(ai), -np.conj(bi)], [bi, ai]], dtype=complex)
        ops.append(PolarizedOperator(window, m))
    return SampledPath(t, tuple(ops))


def holonomy_loop(delta: float, nodes: int = 512) -> complex:
    """Transported phase of the explicit loop; equals exp(2 pi i delta)."""
    return parallel_transport(holonomy_loop_path(delta, nodes)).phase


# ---------------------------------------------------------------------------
# path files


def path_to_json(path: SampledPath) -> dict:
    return {
        "nodes": [
            {"t": float(t), "op": operator_to_json(op)}
            for t, op in zip(path.times, path.ops)
        ]
    }


def path_from_json(payload: dict) -> SampledPath:
    try:
        nodes = payload["nodes"]
        times = [float(item["t"]) for item in nodes]
        ops = tuple(operator_from_json(item["op"]) for item in nodes)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed path payload: {exc}") from exc
    return SampledPath(np.asarray(times), ops)


def save_path(path: SampledPath, fname) -> None:
    with open(fname, "w", encoding="utf-8") as fh:
        json.dump(path_to_json(path), fh)


def load_path(fname) -> SampledPath:
    with open(fname, encoding="utf-8") as fh:
        return path_from_json(json.load(fh))
