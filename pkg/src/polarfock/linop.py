"""Polarized complex linear algebra on a finite mode window.

The one-particle space is spanned by modes e_{-n}, ..., e_{-1} (negative
half) and e_0, ..., e_{m-1} (positive half).  The canonical basis order is
negatives ascending, then positives ascending, so the sign operator is
eps = diag(-1, ..., -1, +1, ..., +1).  Operators are stored as dense
complex matrices in that order; blocks a, b, c, d refer to the
(+ <- +), (+ <- -), (- <- +), (- <- -) compressions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Relative singular-value threshold shared by all rank decisions.
RANK_RTOL = 1e-9


class InvariantViolationError(RuntimeError):
    """A quantity that is guaranteed by construction came out wrong."""


@dataclass(frozen=True)
class ModeWindow:
    """Finite truncation of the polarized mode lattice.

    Parameters
    ----------
    neg_count : int
        Number of negative modes e_{-neg_count}, ..., e_{-1}.
    pos_count : int
        Number of positive modes e_0, ..., e_{pos_count-1}.
    """

    neg_count: int
    pos_count: int

    def __post_init__(self):
        if self.neg_count < 1 or self.pos_count < 1:
            raise ValueError("window needs at least one mode on each side")

    @property
    def dim(self) -> int:
        return self.neg_count + self.pos_count

    def mode_indices(self) -> list[int]:
        """Signed mode labels in canonical (storage) order."""
        return list(range(-self.neg_count, 0)) + list(range(self.pos_count))

    def position(self, mode: int) -> int:
        """Storage position of a signed mode label."""
        if -self.neg_count <= mode < 0:
            return mode + self.neg_count
        if 0 <= mode < self.pos_count:
            return self.neg_count + mode
        raise ValueError(f"mode {mode} outside window {self}")

    def eps(self) -> np.ndarray:
        e = np.ones(self.dim)
        e[: self.neg_count] = -1.0
        return np.diag(e).astype(complex)


@dataclass(frozen=True)
class PolarizedOperator:
    """Dense operator on a mode window, canonical basis order."""

    window: ModeWindow
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.window.dim, self.window.dim):
            raise ValueError(
                f"entries shape {m.shape} does not match window dim {self.window.dim}"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("entries must be finite")
        object.__setattr__(self, "entries", m)

    @staticmethod
    def identity(window: ModeWindow) -> "PolarizedOperator":
        return PolarizedOperator(window, np.eye(window.dim, dtype=complex))

    @staticmethod
    def eps(window: ModeWindow) -> "PolarizedOperator":
        return PolarizedOperator(window, window.eps())

    def blocks(self):
        return block_split(self)

    def adjoint(self) -> "PolarizedOperator":
        return PolarizedOperator(self.window, self.entries.conj().T)

    def __matmul__(self, other: "PolarizedOperator") -> "PolarizedOperator":
        if self.window != other.window:
            raise ValueError("window mismatch")
        return PolarizedOperator(self.window, self.entries @ other.entries)

    def is_unitary(self, tol: float = 1e-10) -> bool:
        d = self.entries.conj().T @ self.entries - np.eye(self.window.dim)
        return bool(np.linalg.norm(d, 2) <= tol)


@dataclass(frozen=True)
class WindowedOperator:
    """Finite proxy for an operator that is a mode shift outside the window.

    ``fill='identity'`` means the operator acts as the identity pattern on
    out-of-window modes, relabelled by ``charge_offset`` steps; the core
    holds only window-to-window couplings (boundary columns that map out of
    the window are zero by construction).
    """

    core: PolarizedOperator
    fill: str = "identity"
    charge_offset: int = 0

    def __post_init__(self):
        if self.fill != "identity":
            raise ValueError("only identity fill is supported")
        _check_fill_consistency(self.core, self.charge_offset)


def _check_fill_consistency(core: PolarizedOperator, offset: int) -> None:
    """A q-shift fill forces zero columns/rows at the window boundary."""
    w = core.window
    m = core.entries
    q = offset
    scale = max(np.abs(m).max(), 1.0)
    if q > 0:
        # highest q positive columns map out of the window; lowest q negative
        # rows receive only from out of the window
        cols = m[:, w.dim - q :]
        rows = m[:q, :]
    elif q < 0:
        cols = m[:, : -q]
        rows = m[w.dim + q :, :]
    else:
        return
    if np.abs(cols).max() > 1e-12 * scale or np.abs(rows).max() > 1e-12 * scale:
        raise ValueError("core entries inconsistent with declared charge_offset")


def shift_operator(window: ModeWindow, k: int = 1) -> WindowedOperator:
    """Windowed proxy of the mode shift e_j -> e_{j+k}."""
    if abs(k) >= window.dim:
        raise ValueError("shift larger than window")
    m = np.zeros((window.dim, window.dim), dtype=complex)
    for col in range(window.dim):
        row = col + k
        if 0 <= row < window.dim:
            m[row, col] = 1.0
    return WindowedOperator(PolarizedOperator(window, m), charge_offset=k)


def block_split(T: PolarizedOperator):
    """Return (a, b, c, d) = (++, +-, -+, --) blocks of T."""
    n = T.window.neg_count
    m = T.entries
    a = m[n:, n:]
    b = m[n:, :n]
    c = m[:n, n:]
    d = m[:n, :n]
    return a, b, c, d


def block_assemble(window: ModeWindow, a, b, c, d) -> PolarizedOperator:
    """Inverse of block_split."""
    n, p = window.neg_count, window.pos_count
    m = np.zeros((window.dim, window.dim), dtype=complex)
    m[n:, n:] = np.asarray(a, dtype=complex).reshape(p, p)
    m[n:, :n] = np.asarray(b, dtype=complex).reshape(p, n)
    m[:n, n:] = np.asarray(c, dtype=complex).reshape(n, p)
    m[:n, :n] = np.asarray(d, dtype=complex).reshape(n, n)
    return PolarizedOperator(window, m)


def operator_norm(m: np.ndarray) -> float:
    """Largest singular value, computed by SVD."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[0])


def schatten_norm(T: np.ndarray, p: int) -> float:
    """Schatten norm: p=1 sums singular values, p=2 is Frobenius."""
    if p not in (1, 2):
        raise ValueError("only p in {1, 2} is supported")
    m = np.atleast_2d(np.asarray(T, dtype=complex))
    if m.size == 0:
        return 0.0
    if p == 2:
        return float(np.linalg.norm(m, "fro"))
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def fredholm_det(T: np.ndarray) -> complex:
    """Determinant of a finite matrix (LU with partial pivoting).

    At truncation the trace-class precondition of the infinite-dimensional
    Fredholm determinant is vacuous; the ordinary determinant is exact.
    """
    m = np.atleast_2d(np.asarray(T, dtype=complex))
    if m.shape[0] != m.shape[1]:
        raise ValueError("determinant needs a square matrix")
    return complex(np.linalg.det(m))


def eps_norm(T: PolarizedOperator) -> float:
    """Banach-algebra norm ||T|| + ||T_{+-}||_2 + ||T_{-+}||_2."""
    _, b, c, _ = block_split(T)
    return operator_norm(T.entries) + schatten_norm(b, 2) + schatten_norm(c, 2)


def ss_defect(U: PolarizedOperator):
    """Hilbert-Schmidt sizes of the odd blocks and of [eps, U].

    Returns (hs_pm, hs_mp, hs_comm) and guarantees the block identity
    (1/4) hs_comm^2 = hs_pm^2 + hs_mp^2 to 1e-12 relative.
    """
    _, b, c, _ = block_split(U)
    hs_pm = schatten_norm(b, 2)
    hs_mp = schatten_norm(c, 2)
    eps = U.window.eps()
    comm = eps @ U.entries - U.entries @ eps
    hs_comm = schatten_norm(comm, 2)
    lhs = 0.25 * hs_comm**2
    rhs = hs_pm**2 + hs_mp**2
    scale = max(lhs, rhs, 1e-300)
    if abs(lhs - rhs) > 1e-12 * scale and max(lhs, rhs) > 1e-28:
        raise InvariantViolationError(
            f"commutator identity violated: {lhs} vs {rhs}"
        )
    return hs_pm, hs_mp, hs_comm


def rank(m: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank by singular values above rtol * largest."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def fredholm_index(W: WindowedOperator, block: str) -> int:
    """Index of the ++ or -- block including the fill contribution.

    Square in-window compressions carry index ker - coker; the identity
    fill shifted by charge_offset adds -offset (++) or +offset (--).
    """
    if block not in ("++", "--"):
        raise ValueError("block must be '++' or '--'")
    a, _, _, d = block_split(W.core)
    blk = a if block == "++" else d
    r = rank(blk)
    finite = (blk.shape[1] - r) - (blk.shape[0] - r)
    contribution = -W.charge_offset if block == "++" else W.charge_offset
    return finite + contribution


def operator_to_json(T: PolarizedOperator) -> dict:
    return {
        "neg": T.window.neg_count,
        "pos": T.window.pos_count,
        "re": T.entries.real.tolist(),
        "im": T.entries.imag.tolist(),
    }


def operator_from_json(payload: dict) -> PolarizedOperator:
    try:
        window = ModeWindow(int(payload["neg"]), int(payload["pos"]))
        re = np.asarray(payload["re"], dtype=float)
        im = np.asarray(payload["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed operator payload: {exc}") from exc
    if re.shape != im.shape:
        raise ValueError("re/im shape mismatch")
    if re.ndim != 2 or re.shape[0] != re.shape[1]:
        raise ValueError("operator payload must be square")
    if re.shape[0] != window.dim:
        raise ValueError("operator dimension does not match window")
    return PolarizedOperator(window, re + 1j * im)


def save_operator(T: PolarizedOperator, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(operator_to_json(T), fh)


def load_operator(path) -> PolarizedOperator:
    with open(path, encoding="utf-8") as fh:
        return operator_from_json(json.load(fh))
