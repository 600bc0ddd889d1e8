"""Restricted Jacobians, numerical rank and the depth-comparison criteria.

All rank decisions use one rule: a singular value counts iff it exceeds
``rank_tol * max(sigma_1, 1)``. Decisions with a singular value within a
factor 10 of that threshold are flagged borderline.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, QuiverVLMCError
from .informative import (fiber_decomposition, informative_jacobian, informative_jacobian_fd, model_chart)
from .chain import state_space
from .model import EXACT_DEPTH, ParamModel
from .quiver import update

RANK_TOL = 1e-8
TOL_ZERO = 1e-8
TOL_NONZERO = 1e-4
FD_STEP = 1e-5


@dataclass(frozen=True)
class TangentBlock:
    """Linear subspace of parameter directions, given by basis columns."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[1]:
            norms = np.linalg.norm(B, axis=0)
            if np.any(norms == 0) or np.linalg.svd(B / norms, compute_uv=False)[-1] <= 1e-10:
                raise InputError("tangent block basis is not linearly independent")
        B = B.copy()
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    @classmethod
    def full(cls, d: int) -> "TangentBlock":
        return cls(np.eye(d))

    @classmethod
    def span(cls, *vectors) -> "TangentBlock":
        return cls(np.array(vectors, dtype=float).T)

    @classmethod
    def empty(cls, d: int) -> "TangentBlock":
        return cls(np.zeros((d, 0)))

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def p(self) -> int:
        return self.basis.shape[1]


def _block(model: ParamModel, T) -> TangentBlock:
    if T is None:
        return TangentBlock.full(model.dim)
    T = T if isinstance(T, TangentBlock) else TangentBlock(T)
    if T.d != model.dim:
        raise InputError(f"tangent block lives in R^{T.d}, model has dimension {model.dim}")
    return T


@dataclass(frozen=True)
class RestrictedJacobian:
    """``Dq^(depth)(theta0)`` restricted to a tangent block, in full flattened coordinates."""

    depth: int
    matrix: np.ndarray
    method: str
    labels: Tuple[str, ...] = ()

    @property
    def shape(self):
        return self.matrix.shape


def restricted_jacobian(model: ParamModel, theta0, depth: int, T=None, method: str = "analytic",
                        step: float = FD_STEP) -> RestrictedJacobian:
    T = _block(model, T)
    if method == "analytic":
        M = informative_jacobian(model, theta0, depth) @ T.basis
    elif method in ("fd", "finite-difference"):
        M = informative_jacobian_fd(model, theta0, depth, T.basis, step)
        method = "finite-difference"
    else:
        raise InputError(f"unknown Jacobian method {method!r}")
    space = state_space(model, depth)
    labels = tuple(f"{''.join(y)}->{''.join(z)}" for y in space.states for z in space.states)
    return RestrictedJacobian(depth, M, method, labels)


def reduced_jacobian(model: ParamModel, L: RestrictedJacobian) -> np.ndarray:
    return model_chart(model, L.depth).reduce_jacobian(L.matrix)


# -- numerical linear algebra -------------------------------------------------

def _mat(M) -> np.ndarray:
    return M.matrix if isinstance(M, RestrictedJacobian) else np.asarray(M, dtype=float)


def singular_values(M) -> np.ndarray:
    M = _mat(M)
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def rank_threshold(sv: np.ndarray, rank_tol: float = RANK_TOL) -> float:
    return rank_tol * max(float(sv[0]) if sv.size else 0.0, 1.0)


def numerical_rank(M, rank_tol: float = RANK_TOL) -> int:
    sv = singular_values(M)
    return int(np.sum(sv > rank_threshold(sv, rank_tol)))


def is_borderline(M, rank_tol: float = RANK_TOL) -> bool:
    """True when some singular value lies within a factor 10 of the rank threshold."""
    sv = singular_values(M)
    thr = rank_threshold(sv, rank_tol)
    return bool(np.any((sv > thr / 10) & (sv < thr * 10)))


def _orient(v: np.ndarray) -> np.ndarray:
    """Deterministic sign: first entry of non-negligible size is positive."""
    for x in v:
        if abs(x) > 1e-12:
            return v if x > 0 else -v
    return v


def kernel_basis(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal kernel basis as columns (trailing right singular vectors)."""
    M = _mat(M)
    p = M.shape[1]
    if M.shape[0] == 0 or p == 0:
        return np.eye(p)
    _, sv, Vt = np.linalg.svd(M)
    r = int(np.sum(sv > rank_threshold(sv, rank_tol)))
    K = Vt[r:].T
    return np.column_stack([_orient(K[:, i]) for i in range(K.shape[1])]) if K.shape[1] else np.zeros((p, 0))


def row_space_basis(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal complement of the kernel (leading right singular vectors)."""
    M = _mat(M)
    p = M.shape[1]
    if M.shape[0] == 0 or p == 0:
        return np.zeros((p, 0))
    _, sv, Vt = np.linalg.svd(M)
    r = int(np.sum(sv > rank_threshold(sv, rank_tol)))
    return Vt[:r].T


def image_basis(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    M = _mat(M)
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(sv > rank_threshold(sv, rank_tol)))
    return U[:, :r]


@dataclass(frozen=True)
class KernelInclusion:
    """Result of testing ``Ker(L_a) ⊂ Ker(L_b)``; ``factor`` satisfies ``L_b ≈ factor @ L_a``."""

    included: bool
    rank_a: int
    rank_stacked: int
    factor: Optional[np.ndarray] = None
    residual: Optional[float] = None

    def __bool__(self):
        return self.included


def kernel_included(L_a, L_b, rank_tol: float = RANK_TOL) -> KernelInclusion:
    A, B = _mat(L_a), _mat(L_b)
    if A.shape[1] != B.shape[1]:
        raise InputError("kernel inclusion needs matrices with the same column dimension")
    ra = numerical_rank(A, rank_tol)
    rs = numerical_rank(np.vstack([A, B]), rank_tol)
    if rs != ra:
        return KernelInclusion(False, ra, rs)
    if A.size == 0:
        factor = np.zeros((B.shape[0], A.shape[0]))
    else:
        sv = singular_values(A)
        factor = B @ np.linalg.pinv(A, rcond=rank_threshold(sv, rank_tol) / max(sv[0], 1e-300))
    residual = float(np.linalg.norm(factor @ A - B)) if B.size else 0.0
    return KernelInclusion(True, ra, rs, factor, residual)


# -- depth comparison ---------------------------------------------------------

@dataclass
class SufficiencyReport:
    depths: Tuple[int, int]
    rank_m: int
    rank_r: int
    singular_values_m: np.ndarray
    singular_values_r: np.ndarray
    kernel_m: np.ndarray
    kernel_r: np.ndarray
    quotient_dim: int
    quotient_rank_m: int
    verdict: str
    witness: Optional[np.ndarray] = None
    witness_norms: Optional[Dict[str, float]] = None
    equivalences: Optional[Dict[str, bool]] = None
    borderline: bool = False

    @property
    def sufficient(self) -> bool:
        return self.verdict == "sufficient"


def _spectral(M) -> float:
    sv = singular_values(M)
    return float(sv[0]) if sv.size else 0.0


def _smallest_nonzero_sv(M, rank_tol=RANK_TOL) -> float:
    sv = singular_values(M)
    nz = sv[sv > rank_threshold(sv, rank_tol)] if sv.size else sv
    return float(nz[-1]) if nz.size else 0.0


def compare_depths(L_m, L_r, rank_tol: float = RANK_TOL) -> SufficiencyReport:
    """Sufficiency of the coarse map ``L_m`` relative to ``L_r`` on a common tangent block."""
    Lm, Lr = _mat(L_m), _mat(L_r)
    dm = L_m.depth if isinstance(L_m, RestrictedJacobian) else None
    dr = L_r.depth if isinstance(L_r, RestrictedJacobian) else None
    p = Lm.shape[1]
    rank_m, rank_r = numerical_rank(Lm, rank_tol), numerical_rank(Lr, rank_tol)
    Q = row_space_basis(Lr, rank_tol)
    Lm_q = Lm @ Q
    quotient_rank = numerical_rank(Lm_q, rank_tol) if Q.shape[1] else 0
    verdict = "sufficient" if rank_m == rank_r else "strict-loss"
    witness = norms = None
    if verdict == "strict-loss":
        W = kernel_basis(Lm_q, rank_tol)
        if W.shape[1] == 0:
            raise QuiverVLMCError("rank drop without a quotient kernel vector; ranks are inconsistent")
        lifted = Q @ W
        _, _, Vt = np.linalg.svd(Lr @ lifted)
        h = _orient(lifted @ Vt[0])
        h = h / np.linalg.norm(h)
        witness = h
        norms = {"coarse": float(np.linalg.norm(Lm @ h)), "fine": float(np.linalg.norm(Lr @ h))}
    equiv = None
    if rank_r == p and p > 0:
        equiv = {
            "not_sufficient": not kernel_included(Lm, Lr, rank_tol).included,
            "witness_exists": witness is not None,
            "coarse_kernel_nontrivial": kernel_basis(Lm, rank_tol).shape[1] > 0,
            "coarse_rank_deficient": rank_m < p,
        }
    return SufficiencyReport(
        depths=(dm, dr), rank_m=rank_m, rank_r=rank_r,
        singular_values_m=singular_values(Lm), singular_values_r=singular_values(Lr),
        kernel_m=kernel_basis(Lm, rank_tol), kernel_r=kernel_basis(Lr, rank_tol),
        quotient_dim=Q.shape[1], quotient_rank_m=quotient_rank, verdict=verdict,
        witness=witness, witness_norms=norms, equivalences=equiv,
        borderline=is_borderline(Lm, rank_tol) or is_borderline(Lr, rank_tol))


def witness_contract(report: SufficiencyReport, L_m, L_r, tol_zero=TOL_ZERO, tol_nonzero=TOL_NONZERO) -> bool:
    """Scale-relative check that the witness is invisible at depth m and visible at depth r."""
    h = report.witness
    if h is None:
        return False
    nh = np.linalg.norm(h)
    Lm, Lr = _mat(L_m), _mat(L_r)
    zero_ok = np.linalg.norm(Lm @ h) <= tol_zero * nh * max(_spectral(Lm), 1e-300)
    nonzero_ok = np.linalg.norm(Lr @ h) >= tol_nonzero * nh * _smallest_nonzero_sv(Lr)
    return bool(zero_ok and nonzero_ok)


def sufficiency_report(model: ParamModel, theta0, m: int, r: int, T=None, rank_tol: float = RANK_TOL,
                       method: str = "analytic") -> SufficiencyReport:
    if m > r:
        raise InputError(f"coarse depth {m} exceeds fine depth {r}")
    L_m = restricted_jacobian(model, theta0, m, T, method)
    L_r = restricted_jacobian(model, theta0, r, T, method)
    return compare_depths(L_m, L_r, rank_tol)


# -- selected coordinates ----------------------------------------------------

def coordinate_map_jacobian(model: ParamModel, theta0, m: int, pairs: Sequence[Tuple[Sequence[str], str]],
                            T=None, method: str = "analytic") -> np.ndarray:
    """Rows ``D q_{y, U(y, a)}`` restricted to ``T`` for the selected ``(y, a)`` pairs.

    ``method="product-rule"`` assembles each row from the stationary fiber
    representation instead of reading it off the full Jacobian.
    """
    T = _block(model, T)
    space = state_space(model, m)
    n = len(space)
    flat_idx = []
    for y, a in pairs:
        y = tuple(y)
        if y not in space.index:
            raise InputError(f"{''.join(y)!r} is not a visible state at depth {m}")
        z = update(model.quiver, y, a)
        if z not in space.index:
            raise InputError(f"appending {a!r} to {''.join(y)!r} leaves the visible support")
        flat_idx.append(space.index[y] * n + space.index[z])
    if not pairs:
        return np.zeros((0, T.p))
    if method == "product-rule":
        rows = [fiber_decomposition(model, theta0, tuple(y), a).gradient for y, a in pairs]
        return np.array(rows) @ T.basis
    L = restricted_jacobian(model, theta0, m, T, method)
    return L.matrix[flat_idx]


@dataclass(frozen=True)
class CoordinateCertificate:
    certified: bool
    factorization: bool
    rank_drop: bool
    rank_selected: int
    rank_fine: int
    failing: Tuple[str, ...]
    consistent: Optional[bool] = None


def selected_coordinate_criterion(model: ParamModel, theta0, m: int, r: int, T, pairs,
                                  rank_tol: float = RANK_TOL) -> CoordinateCertificate:
    """Certify strict loss from a coordinate family: Ker(M_I) ⊂ Ker(L_m) and rank(M_I) < rank(L_r)."""
    if m >= r:
        raise InputError("selected-coordinate criterion needs m < r")
    T = _block(model, T)
    M_I = coordinate_map_jacobian(model, theta0, m, pairs, T)
    L_m = restricted_jacobian(model, theta0, m, T)
    L_r = restricted_jacobian(model, theta0, r, T)
    a = kernel_included(M_I, L_m, rank_tol).included
    rI, rr = numerical_rank(M_I, rank_tol), numerical_rank(L_r, rank_tol)
    b = rI < rr
    failing = tuple(name for name, ok in (("factorization", a), ("rank_drop", b)) if not ok)
    consistent = None
    if a and b:
        consistent = compare_depths(L_m, L_r, rank_tol).verdict == "strict-loss"
    return CoordinateCertificate(a and b, a, b, rI, rr, failing, consistent)


# -- minimal window ------------------------------------------------------------

@dataclass
class MinimalWindow:
    m_star: Optional[int]
    M_max: int
    ranks: Dict[int, int]
    singular_values: Dict[int, List[float]]
    errors: Dict[int, str] = field(default_factory=dict)
    monotonicity_violations: List[Tuple[int, int]] = field(default_factory=list)
    borderline: Dict[int, bool] = field(default_factory=dict)

    @property
    def attained(self) -> bool:
        return self.m_star is not None


def minimal_window(model: ParamModel, theta0, T=None, M_max: int = 3, rank_tol: float = RANK_TOL) -> MinimalWindow:
    """Smallest depth whose restricted Jacobian has full column rank ``dim T``.

    Depths that raise a degeneracy error are recorded and skipped. In the
    exact-depth regime the scan also checks ``rank(L_m) <= rank(L_l)`` for
    every pair ``m < l`` of scanned depths.
    """
    if M_max < 1:
        raise InputError("M_max must be >= 1")
    T = _block(model, T)
    ranks, svs, errors, border = {}, {}, {}, {}
    for m in range(1, M_max + 1):
        try:
            L = restricted_jacobian(model, theta0, m, T)
        except QuiverVLMCError as exc:
            errors[m] = f"{type(exc).__name__}: {exc}"
            continue
        ranks[m] = numerical_rank(L, rank_tol)
        svs[m] = singular_values(L).tolist()
        border[m] = is_borderline(L, rank_tol)
    m_star = 1 if T.p == 0 else next((m for m in sorted(ranks) if ranks[m] == T.p), None)
    violations = []
    if model.regime == EXACT_DEPTH:
        for m, l in itertools.combinations(sorted(ranks), 2):
            if ranks[m] > ranks[l]:
                violations.append((m, l))
    return MinimalWindow(m_star, M_max, ranks, svs, errors, violations, border)


def candidate_pairs(model: ParamModel, m: int) -> List[Tuple[Tuple[str, ...], str]]:
    """Free (reduced-chart) coordinates at depth ``m`` as ``(y, a)`` pairs."""
    return [(y, z[-1]) for y, z in model_chart(model, m).retained_pairs()]


def propose_family(model: ParamModel, theta0, m: int, r: int, T=None, rank_tol: float = RANK_TOL,
                   max_size: int = 4):
    """Greedy search over families of free coordinates, smallest first."""
    T = _block(model, T)
    cands = candidate_pairs(model, m)
    L_m = restricted_jacobian(model, theta0, m, T)
    rank_r = numerical_rank(restricted_jacobian(model, theta0, r, T), rank_tol)
    space = state_space(model, m)
    n = len(space)
    rows = {}
    for y, a in cands:
        rows[(y, a)] = L_m.matrix[space.index[y] * n + space.index[update(model.quiver, y, a)]]
    for size in range(1, min(max_size, len(cands)) + 1):
        for fam in itertools.combinations(cands, size):
            M_I = np.array([rows[c] for c in fam])
            if numerical_rank(M_I, rank_tol) < rank_r and kernel_included(M_I, L_m.matrix, rank_tol).included:
                return list(fam)
    return None


@dataclass
class GlobalVerdict:
    applicable: bool
    full_rank_at_r: bool
    families: Dict[int, Optional[list]]
    certificates: Dict[int, Optional[CoordinateCertificate]]
    confirmed: bool
    m_star_scan: Optional[int]
    reason: str = ""


def verify_minimal_global(model: ParamModel, theta0, T=None, r: Optional[int] = None,
                          families: Optional[Dict[int, list]] = None, rank_tol: float = RANK_TOL) -> GlobalVerdict:
    """Check full rank at depth ``r`` and a rank-dropping coordinate family at every ``m < r``.

    Missing families are proposed with :func:`propose_family`. On success the
    conclusion ``m_* = r`` is cross-checked against :func:`minimal_window`.
    """
    T = _block(model, T)
    r = model.depth if r is None else r
    families = dict(families or {})
    scan = minimal_window(model, theta0, T, r, rank_tol)
    full = scan.ranks.get(r) == T.p
    if not full:
        return GlobalVerdict(False, False, {}, {}, False, scan.m_star,
                             f"rank at depth {r} is {scan.ranks.get(r)}, not dim T = {T.p}")
    fams, certs = {}, {}
    ok = True
    for m in range(1, r):
        fam = families.get(m)
        if fam is None:
            fam = propose_family(model, theta0, m, r, T, rank_tol)
        fams[m] = fam
        if fam is None:
            certs[m] = None
            ok = False
            continue
        certs[m] = selected_coordinate_criterion(model, theta0, m, r, T, fam, rank_tol)
        ok = ok and certs[m].certified
    confirmed = ok and scan.m_star == r
    reason = "" if ok else "no certifying coordinate family at some depth"
    if ok and scan.m_star != r:
        reason = f"hypotheses hold but the rank scan gives m_* = {scan.m_star}"
    return GlobalVerdict(True, True, fams, certs, confirmed, scan.m_star, reason)


# -- chart invariance ------------------------------------------------------------

def random_linear_chart(rng: np.random.Generator, d: int, max_cond: float = 100.0) -> np.ndarray:
    """Random invertible matrix with condition number below ``max_cond``."""
    if d == 0:
        return np.zeros((0, 0))
    while True:
        D = rng.normal(size=(d, d))
        if np.linalg.cond(D) < max_cond:
            return D


@dataclass
class ChartInvariance:
    invariant: bool
    ranks: Dict[int, int]
    ranks_pulled: Dict[int, int]
    verdicts: Dict[Tuple[int, int], Tuple[str, str]]
    m_star: Tuple[Optional[int], Optional[int]]
    max_jacobian_gap: float
    D: np.ndarray


def chart_invariance_check(model: ParamModel, theta0, T=None, depths: Sequence[int] = (1, 2), seed: int = 0,
                           D: Optional[np.ndarray] = None, rank_tol: float = RANK_TOL) -> ChartInvariance:
    """Recompute everything under ``theta = theta0 + D t`` with the block ``D^{-1} T``.

    The restricted Jacobians in block coordinates must coincide (chain rule),
    hence ranks, sufficiency verdicts and ``m_*`` must agree.
    """
    T = _block(model, T)
    if D is None:
        D = random_linear_chart(np.random.default_rng(seed), model.dim)
    D = np.asarray(D, dtype=float)
    if not np.allclose(theta0, model.theta0):
        model = model.with_theta0(theta0)
    pulled = model.reparameterize(D)
    T_pulled = TangentBlock(np.linalg.solve(D, T.basis))
    t0 = pulled.theta0
    depths = sorted(depths)
    ranks, ranks_p, gap = {}, {}, 0.0
    Ls, Lps = {}, {}
    for m in depths:
        Ls[m] = restricted_jacobian(model, theta0, m, T)
        Lps[m] = restricted_jacobian(pulled, t0, m, T_pulled)
        ranks[m] = numerical_rank(Ls[m], rank_tol)
        ranks_p[m] = numerical_rank(Lps[m], rank_tol)
        scale = max(1.0, np.abs(Ls[m].matrix).max(initial=0.0))
        gap = max(gap, float(np.abs(Ls[m].matrix - Lps[m].matrix).max(initial=0.0)) / scale)
    verdicts = {}
    for m, r in itertools.combinations(depths, 2):
        verdicts[(m, r)] = (compare_depths(Ls[m], Ls[r], rank_tol).verdict,
                            compare_depths(Lps[m], Lps[r], rank_tol).verdict)
    M_max = max(depths)
    ms = (minimal_window(model, theta0, T, M_max, rank_tol).m_star,
          minimal_window(pulled, t0, T_pulled, M_max, rank_tol).m_star)
    invariant = ranks == ranks_p and all(a == b for a, b in verdicts.values()) and ms[0] == ms[1]
    return ChartInvariance(invariant, ranks, ranks_p, verdicts, ms, gap, D)


# -- LAN kernel alignment -------------------------------------------------------

@dataclass(frozen=True)
class KernelAlignment:
    hypothesis_holds: bool
    aligned: Optional[bool]
    min_form_eigenvalue: float
    message: str = ""


def psd_sqrt(J: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (J + J.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def kernel_alignment(L, J, rank_tol: float = RANK_TOL, form_tol: float = 1e-10) -> KernelAlignment:
    """Compare the kernels of ``J^{1/2} L`` and ``L``.

    Requires ``J`` symmetric PSD and positive definite on ``im(L)``;
    otherwise reports the hypothesis as violated without a kernel claim.
    """
    Lm = _mat(L)
    J = np.asarray(J, dtype=float)
    if J.shape != (Lm.shape[0], Lm.shape[0]):
        raise InputError(f"J must be {Lm.shape[0]}x{Lm.shape[0]}")
    if not np.allclose(J, J.T, atol=1e-12):
        return KernelAlignment(False, None, float("nan"), "J is not symmetric")
    if np.linalg.eigvalsh(J).min(initial=0.0) < -1e-12:
        return KernelAlignment(False, None, float("nan"), "J is not positive semidefinite")
    B = image_basis(Lm, rank_tol)
    lam = float(np.linalg.eigvalsh(B.T @ J @ B).min()) if B.shape[1] else float("inf")
    if lam <= form_tol:
        return KernelAlignment(False, None, lam, "quadratic form of J is not positive definite on im(L)")
    Lam = psd_sqrt(J) @ Lm
    aligned = kernel_included(Lam, Lm, rank_tol).included and kernel_included(Lm, Lam, rank_tol).included
    return KernelAlignment(True, aligned, lam)
