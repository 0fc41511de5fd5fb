"""Truncated fermionic Fock space over a mode window.

States live on the occupation basis of all window modes; a basis state is
a bitmask whose bit i is the canonical mode position i.  The vacuum has
every negative mode occupied and every positive mode empty.

Sign convention (used everywhere, including the hole operators): a mode
operator acting at canonical position k picks up (-1)^(number of occupied
positions below k).  The field operator is then simply
Psi(f) = sum_k conj(f_k) c_k over all window modes, and the extra (-1)^n
of the antiparticle sector is carried by the global ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from .linop import (
    RANK_RTOL,
    InvariantViolationError,
    ModeWindow,
    PolarizedOperator,
    block_split,
)
from .polarization import AdmissibleBasis, Polarization
from .central_ext import schwinger_cocycle


class DegenerateVacuumError(RuntimeError):
    """Transformed vacuum not resolvable at this truncation."""


# ---------------------------------------------------------------------------
# occupation bookkeeping


@dataclass(frozen=True)
class OccupationState:
    window: ModeWindow
    occupied: int  # bitmask over canonical positions

    def __post_init__(self):
        if not 0 <= self.occupied < (1 << self.window.dim):
            raise ValueError("bitmask outside window")

    @staticmethod
    def vacuum(window: ModeWindow) -> "OccupationState":
        return OccupationState(window, (1 << window.neg_count) - 1)

    @staticmethod
    def from_modes(window: ModeWindow, modes) -> "OccupationState":
        mask = 0
        for mode in modes:
            mask |= 1 << window.position(mode)
        return OccupationState(window, mask)

    def modes(self) -> list[int]:
        labels = self.window.mode_indices()
        return [labels[i] for i in range(self.window.dim) if self.occupied >> i & 1]

    @property
    def charge(self) -> int:
        n = self.window.neg_count
        negmask = (1 << n) - 1
        filled_neg = bin(self.occupied & negmask).count("1")
        filled_pos = bin(self.occupied >> n).count("1")
        return filled_pos - (n - filled_neg)


@dataclass
class FockVector:
    """Sparse complex amplitudes over occupation bitmasks."""

    window: ModeWindow
    amplitudes: dict[int, complex] = field(default_factory=dict)

    @staticmethod
    def basis_state(state: OccupationState) -> "FockVector":
        return FockVector(state.window, {state.occupied: 1.0 + 0.0j})

    @staticmethod
    def vacuum(window: ModeWindow) -> "FockVector":
        return FockVector.basis_state(OccupationState.vacuum(window))

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(v) ** 2 for v in self.amplitudes.values())))

    def inner(self, other: "FockVector") -> complex:
        # antilinear in the first argument
        small, big = self.amplitudes, other.amplitudes
        if len(big) < len(small):
            return np.conj(other.inner(self))
        return complex(
            sum(np.conj(v) * big.get(k, 0.0) for k, v in small.items())
        )

    def scaled(self, c: complex) -> "FockVector":
        return FockVector(self.window, {k: c * v for k, v in self.amplitudes.items()})

    def add(self, other: "FockVector") -> "FockVector":
        out = dict(self.amplitudes)
        for k, v in other.amplitudes.items():
            out[k] = out.get(k, 0.0) + v
        return FockVector(self.window, out)

    def chop(self, tol: float = 0.0) -> "FockVector":
        return FockVector(
            self.window, {k: v for k, v in self.amplitudes.items() if abs(v) > tol}
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros(1 << self.window.dim, dtype=complex)
        for k, v in self.amplitudes.items():
            out[k] = v
        return out

    @staticmethod
    def from_dense(window: ModeWindow, arr: np.ndarray, tol: float = 0.0) -> "FockVector":
        idx = np.nonzero(np.abs(arr) > tol)[0]
        return FockVector(window, {int(i): complex(arr[i]) for i in idx})


def charge_conjugate(vec: FockVector) -> FockVector:
    """Charge conjugation as complex conjugation in the canonical basis."""
    return FockVector(vec.window, {k: np.conj(v) for k, v in vec.amplitudes.items()})


def vector_to_json(vec: FockVector) -> dict:
    entries = []
    for mask in sorted(vec.amplitudes):
        state = OccupationState(vec.window, mask)
        amp = vec.amplitudes[mask]
        entries.append(
            {"occupied": state.modes(), "re": float(amp.real), "im": float(amp.imag)}
        )
    return {
        "neg": vec.window.neg_count,
        "pos": vec.window.pos_count,
        "amplitudes": entries,
    }


def vector_from_json(payload: dict) -> FockVector:
    try:
        window = ModeWindow(int(payload["neg"]), int(payload["pos"]))
        entries = payload["amplitudes"]
        amps: dict[int, complex] = {}
        for item in entries:
            state = OccupationState.from_modes(window, item["occupied"])
            amps[state.occupied] = float(item["re"]) + 1j * float(item["im"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed fock-vector payload: {exc}") from exc
    return FockVector(window, amps)


# ---------------------------------------------------------------------------
# operators on the occupation basis


@dataclass(frozen=True)
class FockOperator:
    window: ModeWindow
    matrix: sps.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return 1 << self.window.dim

    def apply(self, vec: FockVector) -> FockVector:
        return FockVector.from_dense(vec.window, self.matrix @ vec.to_dense())

    def adjoint(self) -> "FockOperator":
        return FockOperator(self.window, self.matrix.conj().T.tocsr())

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.window, (self.matrix @ other.matrix).tocsr())

    def __add__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.window, (self.matrix + other.matrix).tocsr())

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.window, (self.matrix - other.matrix).tocsr())

    def scaled(self, c: complex) -> "FockOperator":
        return FockOperator(self.window, (c * self.matrix).tocsr())

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_unitary(self, tol: float = 1e-10) -> bool:
        d = self.to_dense()
        return bool(
            np.linalg.norm(d.conj().T @ d - np.eye(self.dim), 2) <= tol
        )


def anticommutator(x: FockOperator, y: FockOperator) -> FockOperator:
    return x @ y + y @ x


def commutator(x: FockOperator, y: FockOperator) -> FockOperator:
    return x @ y - y @ x


def identity_op(window: ModeWindow) -> FockOperator:
    return FockOperator(window, sps.identity(1 << window.dim, dtype=complex, format="csr"))


@lru_cache(maxsize=64)
def _mode_ops(neg: int, pos: int):
    """Elementary annihilators c_k per canonical position (creators = adjoints)."""
    window = ModeWindow(neg, pos)
    dim = 1 << window.dim
    states = np.arange(dim, dtype=np.int64)
    lowers = []
    for k in range(window.dim):
        bit = 1 << k
        occ = (states & bit) != 0
        src = states[occ]
        dst = src ^ bit
        below = src & (bit - 1)
        signs = np.ones(src.size)
        for j in range(k):
            signs *= np.where((below >> j) & 1, -1.0, 1.0)
        m = sps.csr_matrix(
            (signs.astype(complex), (dst, src)), shape=(dim, dim)
        )
        lowers.append(m)
    return window, lowers


def _lowering(window: ModeWindow, k: int) -> sps.csr_matrix:
    return _mode_ops(window.neg_count, window.pos_count)[1][k]


def _weighted_lowering(window: ModeWindow, weights: np.ndarray) -> sps.csr_matrix:
    dim = 1 << window.dim
    out = sps.csr_matrix((dim, dim), dtype=complex)
    for k, w in enumerate(weights):
        if w != 0:
            out = out + w * _lowering(window, k)
    return out.tocsr()


def _support_halves(window: ModeWindow, f: np.ndarray):
    f = np.asarray(f, dtype=complex).ravel()
    if f.size != window.dim:
        raise ValueError("vector length must match window dimension")
    n = window.neg_count
    return f[:n], f[n:]


def create_annihilate(kind: str, window: ModeWindow, f: np.ndarray) -> FockOperator:
    """CAR operators a, a*, b, b* for a vector in the matching half-space.

    a/a* act on positive modes, b/b* on negative ones (hole operators).
    a and b* are antilinear in f, matching {a(f), a*(g)} = <f, g> with the
    inner product antilinear in its first slot.
    """
    neg_part, pos_part = _support_halves(window, f)
    tol = 1e-12 * max(np.abs(f).max(), 1e-300)
    n = window.neg_count
    weights = np.zeros(window.dim, dtype=complex)
    if kind in ("a", "a*"):
        if np.abs(neg_part).max(initial=0.0) > tol:
            raise ValueError("a-kind operators need support in H+")
        weights[n:] = pos_part
    elif kind in ("b", "b*"):
        if np.abs(pos_part).max(initial=0.0) > tol:
            raise ValueError("b-kind operators need support in H-")
        weights[:n] = neg_part
    else:
        raise ValueError("kind must be one of a, a*, b, b*")
    if kind in ("a", "b*"):
        m = _weighted_lowering(window, np.conj(weights))
    else:
        m = _weighted_lowering(window, np.conj(weights)).conj().T.tocsr()
    return FockOperator(window, m)


def field_op(window: ModeWindow, f: np.ndarray) -> FockOperator:
    """Psi(f) = a(P+ f) + b*(P- f); antilinear in f."""
    f = np.asarray(f, dtype=complex).ravel()
    if f.size != window.dim:
        raise ValueError("vector length must match window dimension")
    return FockOperator(window, _weighted_lowering(window, np.conj(f)))


def field_op_star(window: ModeWindow, f: np.ndarray) -> FockOperator:
    return field_op(window, f).adjoint()


def dgamma(A: PolarizedOperator) -> FockOperator:
    """Normal-ordered second quantization :A Psi* Psi:.

    Equals sum_ij A_ij c_i^dag c_j minus tr(A_--), which fixes
    <Omega, dGamma(A) Omega> = 0 and satisfies
    [dGamma(A), Psi*(f)] = Psi*(A f).
    """
    window = A.window
    dim = 1 << window.dim
    m = sps.csr_matrix((dim, dim), dtype=complex)
    ent = A.entries
    for i in range(window.dim):
        ci_dag = _lowering(window, i).conj().T
        row = ent[i]
        nz = np.nonzero(np.abs(row) > 0)[0]
        if nz.size == 0:
            continue
        acc = sps.csr_matrix((dim, dim), dtype=complex)
        for j in nz:
            acc = acc + row[j] * _lowering(window, j)
        m = m + ci_dag @ acc
    _, _, _, d_block = block_split(A)
    shift = complex(np.trace(d_block))
    m = m - shift * sps.identity(dim, dtype=complex, format="csr")
    return FockOperator(window, m.tocsr())


def charge_operator(window: ModeWindow) -> FockOperator:
    return dgamma(PolarizedOperator.identity(window))


def anomaly_check(A: PolarizedOperator, B: PolarizedOperator, tol: float = 1e-10) -> complex:
    """Scalar residue of [dGamma(A), dGamma(B)] - dGamma([A, B]).

    Raises if the residue is not a multiple of the identity; the value
    equals the Schwinger cocycle (checked by the caller or tests).
    """
    if A.window != B.window:
        raise ValueError("window mismatch")
    window = A.window
    comm_lift = commutator(dgamma(A), dgamma(B))
    lift_comm = dgamma(
        PolarizedOperator(window, A.entries @ B.entries - B.entries @ A.entries)
    )
    residue = (comm_lift - lift_comm).to_dense()
    c = complex(np.trace(residue) / residue.shape[0])
    off = residue - c * np.eye(residue.shape[0])
    scale = max(np.abs(residue).max(), 1.0)
    if np.abs(off).max() > tol * scale:
        raise InvariantViolationError("anomaly residue is not scalar")
    return c


# ---------------------------------------------------------------------------
# Bogoliubov implementation


def kernel_dims(U: PolarizedOperator):
    """(dim ker U++, dim ker U*--, dim ker U--, dim ker U*++) with the
    pairing guaranteed for window unitaries."""
    if not U.is_unitary(1e-10):
        raise ValueError("kernel_dims needs a unitary operator")
    a, _, _, d = block_split(U)

    def dims(m):
        s = np.linalg.svd(m, compute_uv=False)
        cut = RANK_RTOL * max(s[0], 1e-300) if s.size else 0.0
        r = int(np.sum(s > cut))
        return m.shape[1] - r, m.shape[0] - r  # (ker, ker of adjoint)

    ker_pp, ker_pp_star = dims(a)
    ker_mm, ker_mm_star = dims(d)
    if ker_pp != ker_mm_star or ker_mm != ker_pp_star:
        raise InvariantViolationError("kernel-dimension pairing violated")
    return ker_pp, ker_mm_star, ker_mm, ker_pp_star


def _null_spaces(m: np.ndarray, rtol: float = RANK_RTOL):
    """(left-null ONB, pseudo-inverse, surviving singular values)."""
    u, s, vh = np.linalg.svd(m)
    cut = rtol * max(s[0] if s.size else 0.0, 1e-300)
    keep = s > cut
    r = int(np.sum(keep))
    left_null = u[:, r:]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    pinv = vh.conj().T[:, :r] @ np.diag(inv[:r]) @ u.conj().T[:r, :]
    return left_null, pinv, s[keep]


def bogoliubov_implement(
    U: PolarizedOperator, phase: complex = 1.0 + 0.0j, unitary_tol: float = 1e-10
) -> FockOperator:
    """Fock implementation of a window unitary.

    The transformed vacuum is N phase prod a*(f_l) prod b*(g_m)
    exp(A a* b*) Omega with A = U_{+-} (U_{--})^{-1} on im(U_{--}),
    {f_l} an ONB of ker U*_{++} and {g_m} an ONB of ker U*_{--}.  N is the
    product of the non-negligible singular values of U_{++} (the
    determinant formula of the theorem, with kernel directions removed).
    The full operator maps each CAR monomial through Psi -> Psi o U.
    """
    window = U.window
    if abs(abs(phase) - 1.0) > 1e-12:
        raise ValueError("phase must have unit modulus")
    if not U.is_unitary(unitary_tol):
        raise ValueError("bogoliubov_implement needs a unitary operator")
    a, b, c, d = block_split(U)
    n, p = window.neg_count, window.pos_count

    s_mm = np.linalg.svd(d, compute_uv=False)
    cut = RANK_RTOL * max(s_mm[0] if s_mm.size else 0.0, 1e-300)
    surviving = s_mm[s_mm > cut]
    if surviving.size and surviving.min() < 1e-6:
        raise DegenerateVacuumError(
            "U_-- nearly singular: transformed vacuum not resolvable"
        )

    g_basis, d_pinv, _ = _null_spaces(d)
    f_basis, _, s_pp = _null_spaces(a)
    pair = b @ d_pinv  # H- -> H+
    norm_const = float(np.prod(s_pp)) if s_pp.size else 1.0

    # pairing operator sum_{jk} pair[j,k] a*(e_j) b*(e_k) on the window
    dim = 1 << window.dim
    x = sps.csr_matrix((dim, dim), dtype=complex)
    for j in range(p):
        col = pair[j]
        nz = np.nonzero(np.abs(col) > 0)[0]
        if nz.size == 0:
            continue
        holes = sps.csr_matrix((dim, dim), dtype=complex)
        for k in nz:
            holes = holes + col[k] * _lowering(window, k)
        x = x + _lowering(window, n + j).conj().T @ holes

    vac = FockVector.vacuum(window).to_dense()
    term = vac.copy()
    total = vac.copy()
    order = 1
    while True:
        term = (x @ term) / order
        if not np.any(term):
            break
        total += term
        order += 1
    for m_idx in range(g_basis.shape[1] - 1, -1, -1):
        g = np.zeros(window.dim, dtype=complex)
        g[:n] = g_basis[:, m_idx]
        total = create_annihilate("b*", window, g).matrix @ total
    for l_idx in range(f_basis.shape[1] - 1, -1, -1):
        f = np.zeros(window.dim, dtype=complex)
        f[n:] = f_basis[:, l_idx]
        total = create_annihilate("a*", window, f).matrix @ total
    new_vacuum = norm_const * phase * total
    if abs(np.linalg.norm(new_vacuum) - 1.0) > 1e-8:
        raise DegenerateVacuumError(
            f"transformed vacuum norm {np.linalg.norm(new_vacuum):.3e} != 1"
        )

    # extend through the intertwining relation, column by column
    ent = U.entries
    columns = np.zeros((dim, dim), dtype=complex)
    vac_mask = OccupationState.vacuum(window).occupied
    transformed_create = [
        _weighted_lowering(window, np.conj(ent[:, k])).conj().T.tocsr()
        for k in range(window.dim)
    ]
    transformed_annihilate = [
        _weighted_lowering(window, np.conj(ent[:, k])) for k in range(window.dim)
    ]
    for mask in range(dim):
        created = [k for k in range(n, window.dim) if mask >> k & 1]
        holes = [k for k in range(n) if not mask >> k & 1]
        # sign of the reference monomial on the vacuum
        sign_vec = np.zeros(dim, dtype=complex)
        sign_vec[vac_mask] = 1.0
        out = new_vacuum.copy()
        for k in reversed(holes):
            sign_vec = _lowering(window, k) @ sign_vec
            out = transformed_annihilate[k] @ out
        for k in reversed(created):
            sign_vec = _lowering(window, k).conj().T @ sign_vec
            out = transformed_create[k] @ out
        sigma = sign_vec[mask]
        if abs(abs(sigma) - 1.0) > 1e-12:
            raise InvariantViolationError("monomial bookkeeping lost a state")
        columns[:, mask] = out / sigma
    gamma = FockOperator(window, sps.csr_matrix(columns))
    ortho = np.linalg.norm(columns.conj().T @ columns - np.eye(dim), 2)
    if ortho > 1e-10:
        raise InvariantViolationError(
            f"implementer failed unitarity check: {ortho:.3e}"
        )
    return gamma


def verify_intertwining(G: FockOperator, U: PolarizedOperator) -> float:
    """max_k || G Psi(e_k) G* - Psi(U e_k) || over the canonical basis."""
    window = U.window
    gd = G.to_dense()
    gh = gd.conj().T
    worst = 0.0
    for k in range(window.dim):
        e = np.zeros(window.dim, dtype=complex)
        e[k] = 1.0
        lhs = gd @ field_op(window, e).to_dense() @ gh
        rhs = field_op(window, U.entries @ e).to_dense()
        worst = max(worst, float(np.linalg.norm(lhs - rhs, 2)))
    return worst


def projective_ratio(G1: FockOperator, G2: FockOperator):
    """Scalar c with G1 ~ c G2, plus the residual after matching."""
    d1, d2 = G1.to_dense(), G2.to_dense()
    c = np.trace(d2.conj().T @ d1) / np.trace(d2.conj().T @ d2)
    residual = float(np.linalg.norm(d1 - c * d2, 2))
    return complex(c), residual


# ---------------------------------------------------------------------------
# Pfluecker coordinates


def pflucker_inner(z: AdmissibleBasis, w: AdmissibleBasis) -> complex:
    """det(z^H w); the finite shadow of the DET-bundle pairing."""
    if z.map.shape != w.map.shape:
        raise ValueError("admissible bases have different reference dimension")
    return complex(np.linalg.det(z.map.conj().T @ w.map))


def occupation_basis_map(state: OccupationState) -> AdmissibleBasis:
    """Admissible basis of the span of the occupied modes, in mode order.

    Pfluecker inner products of these maps reproduce the occupation-basis
    inner products, realizing the wedge <-> particle/antiparticle
    isomorphism at truncation.
    """
    window = state.window
    positions = [i for i in range(window.dim) if state.occupied >> i & 1]
    if not 1 <= len(positions) < window.dim:
        raise ValueError("occupation map needs a proper nonempty subspace")
    basis = np.zeros((window.dim, len(positions)), dtype=complex)
    for col, posn in enumerate(positions):
        basis[posn, col] = 1.0
    target = Polarization(window, basis)
    return AdmissibleBasis(target, basis, ref_defect=0.0)
