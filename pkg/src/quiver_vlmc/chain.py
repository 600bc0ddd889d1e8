"""Boundary-window Markov chains, stationary laws and their derivatives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegeneracyError, InputError, ModelValidityError
from .model import EDGE_HOMOGENEOUS, ParamModel
from .quiver import VisibleStateSpace, enumerate_states, suffix, update

STOCHASTIC_TOL = 1e-9
COND_LIMIT = 1e12


@dataclass(frozen=True)
class TransitionArray:
    """Dense row-stochastic matrix on a visible state space.

    ``mask[i, j]`` is True for a structural (forced) zero.
    """

    space: VisibleStateSpace
    matrix: np.ndarray
    mask: np.ndarray

    @property
    def n(self) -> int:
        return len(self.space)

    @property
    def flat(self) -> np.ndarray:
        return self.matrix.ravel()

    def with_matrix(self, matrix) -> "TransitionArray":
        return TransitionArray(self.space, np.asarray(matrix, dtype=float), self.mask)


@dataclass(frozen=True)
class StationaryLaw:
    space: VisibleStateSpace
    probs: np.ndarray

    def __getitem__(self, word) -> float:
        return float(self.probs[self.space.index[tuple(word)]])

    def as_dict(self) -> dict:
        return {"".join(s): float(p) for s, p in zip(self.space.states, self.probs)}


@dataclass(frozen=True)
class ChainStructure:
    """Sparsity pattern of the depth-``depth`` chain and the expression behind each entry."""

    space: VisibleStateSpace
    rows: np.ndarray
    cols: np.ndarray
    edges: Tuple[str, ...]
    exprs: tuple

    @property
    def mask(self) -> np.ndarray:
        n = len(self.space)
        m = np.ones((n, n), dtype=bool)
        m[self.rows, self.cols] = False
        return m


def _strong_components(adj: np.ndarray) -> Tuple[int, np.ndarray]:
    return connected_components(csr_matrix(adj), directed=True, connection="strong")


def _closed_classes(adj: np.ndarray) -> List[np.ndarray]:
    """Strongly connected components with no exits and at least one internal transition."""
    ncomp, labels = _strong_components(adj)
    out = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        sub_rows = adj[members]
        leaves = np.any(sub_rows[:, labels != c])
        internal = np.any(sub_rows[:, members])
        if not leaves and internal:
            out.append(members)
    return out


def _candidate_transitions(model: ParamModel, states, theta) -> np.ndarray:
    index = {s: i for i, s in enumerate(states)}
    adj = np.zeros((len(states), len(states)), dtype=bool)
    for i, y in enumerate(states):
        if not model.has_row(y):
            continue
        for a, ex in model.row(y):
            z = update(model.quiver, y, a)
            if z in index and ex.evaluate(theta) > 1e-12:
                adj[i, index[z]] = True
    return adj


def state_space(model: ParamModel, depth: int) -> VisibleStateSpace:
    """Visible state space ``S_depth`` of the model.

    Exact-depth regime: the unique closed communicating class of the
    depth-``max(depth, r)`` chain at ``theta0``, truncated to ``depth``.
    Edge-homogeneous regime: admissible words avoiding forced zeros whose last
    edge carries an extension law.
    """
    if depth < 1:
        raise InputError("depth must be >= 1")
    key = ("space", depth)
    if key in model._cache:
        return model._cache[key]
    q = model.quiver
    if model.regime == EDGE_HOMOGENEOUS:
        cand = enumerate_states(q, depth, model.forced_zeros)
        space = VisibleStateSpace(depth, tuple(w for w in cand if model.has_row(w)))
    elif depth < model.depth:
        fine = state_space(model, model.depth)
        space = VisibleStateSpace(depth, tuple(sorted({suffix(z, depth) for z in fine})))
    else:
        cand = enumerate_states(q, depth, model.forced_zeros).states
        adj = _candidate_transitions(model, cand, model.theta0)
        classes = _closed_classes(adj)
        if len(classes) != 1:
            names = [["".join(cand[i]) for i in c] for c in classes]
            raise DegeneracyError(
                f"depth-{depth} chain of {model.name!r} has {len(classes)} closed classes "
                f"(support components: {names}); a unique irreducible support is required")
        space = VisibleStateSpace(depth, tuple(cand[i] for i in sorted(classes[0])))
    if len(space) == 0:
        raise DegeneracyError(f"visible state space at depth {depth} is empty")
    model._cache[key] = space
    return space


def chain_structure(model: ParamModel, depth: Optional[int] = None) -> ChainStructure:
    """Transition pattern of the boundary chain at a Markov depth (``depth >= r``)."""
    depth = model.depth if depth is None else depth
    if depth < model.depth:
        raise InputError(f"the depth-{depth} window is not Markov for a depth-{model.depth} model")
    key = ("structure", depth)
    if key in model._cache:
        return model._cache[key]
    space = state_space(model, depth)
    rows, cols, edges, exprs = [], [], [], []
    for i, y in enumerate(space.states):
        for a, ex in model.row(y):
            z = update(model.quiver, y, a)
            if z not in space.index:
                raise ModelValidityError(
                    f"transition {''.join(y)} -> {''.join(z)} leaves the visible support at depth {depth}")
            rows.append(i)
            cols.append(space.index[z])
            edges.append(a)
            exprs.append(ex)
    st = ChainStructure(space, np.array(rows, dtype=int), np.array(cols, dtype=int), tuple(edges), tuple(exprs))
    model._cache[key] = st
    return st


def transition_matrix(model: ParamModel, theta, depth: Optional[int] = None) -> TransitionArray:
    """Transition array with entry ``(y, U(y, a)) = mu_theta(a | y)``."""
    theta = model.check_theta(theta)
    st = chain_structure(model, depth)
    n = len(st.space)
    P = np.zeros((n, n))
    try:
        vals = [ex.evaluate(theta) for ex in st.exprs]
    except ZeroDivisionError:
        raise ModelValidityError(f"an entry of {model.name!r} divides by zero at {theta.tolist()}") from None
    P[st.rows, st.cols] = vals
    if P.min(initial=0.0) < -STOCHASTIC_TOL or P.max(initial=0.0) > 1 + STOCHASTIC_TOL:
        raise ModelValidityError(f"transition entries of {model.name!r} leave [0, 1] at {theta.tolist()}")
    err = np.abs(P.sum(axis=1) - 1.0)
    if err.max(initial=0.0) > STOCHASTIC_TOL:
        bad = st.space.states[int(np.argmax(err))]
        raise ModelValidityError(f"row {''.join(bad)!r} is not stochastic (error {err.max():.3g})")
    return TransitionArray(st.space, P, st.mask)


def transition_derivatives(model: ParamModel, theta, depth: Optional[int] = None) -> np.ndarray:
    """``dP[j] = dP/dtheta_j``, shape ``(d, n, n)``."""
    theta = model.check_theta(theta)
    st = chain_structure(model, depth)
    n = len(st.space)
    dP = np.zeros((model.dim, n, n))
    for r, c, ex in zip(st.rows, st.cols, st.exprs):
        dP[:, r, c] = ex.value_and_grad(theta)[1]
    return dP


def _as_matrix(P) -> np.ndarray:
    return P.matrix if isinstance(P, TransitionArray) else np.asarray(P, dtype=float)


def support_components(P, tol: float = 1e-12) -> List[List[int]]:
    """Strongly connected components of the digraph of entries above ``tol``."""
    M = _as_matrix(P)
    ncomp, labels = _strong_components(M > tol)
    return [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]


def is_irreducible(P, tol: float = 1e-12) -> bool:
    """Strong connectivity of the transition digraph."""
    M = _as_matrix(P)
    if M.shape[0] == 0:
        return False
    return _strong_components(M > tol)[0] == 1


class _Resolvent:
    """LU factorization of ``A = I - P + 1 1^T`` shared by the stationary law and its derivatives."""

    def __init__(self, P):
        M = _as_matrix(P)
        n = M.shape[0]
        A = np.eye(n) - M + np.ones((n, n))
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            comps = support_components(M)
            if isinstance(P, TransitionArray):
                comps = [["".join(P.space.states[i]) for i in c] for c in comps]
            raise DegeneracyError(
                f"I - P + 11^T is numerically singular (cond {cond:.3g}); support components: {comps}")
        self.lu = scipy.linalg.lu_factor(A)
        self.pi = scipy.linalg.lu_solve(self.lu, np.ones(n), trans=1)

    def left_solve(self, row: np.ndarray) -> np.ndarray:
        """``x`` with ``x A = row``."""
        return scipy.linalg.lu_solve(self.lu, row, trans=1)


def stationary(P) -> StationaryLaw:
    """Stationary law ``pi = 1^T (I - P + 1 1^T)^{-1}``."""
    res = _Resolvent(P)
    M = _as_matrix(P)
    pi = res.pi
    space = P.space if isinstance(P, TransitionArray) else None
    resid = np.max(np.abs(pi @ M - pi)) if pi.size else 0.0
    if resid > 1e-10 or abs(pi.sum() - 1.0) > 1e-10:
        raise DegeneracyError(f"stationary solve is inaccurate (residual {resid:.3g})")
    return StationaryLaw(space, pi)


def stationary_derivative(P, dP, law: Optional[StationaryLaw] = None) -> np.ndarray:
    """Directional derivative ``dpi = pi dP A^{-1}``.

    ``dP`` may be a single ``(n, n)`` direction or a stack ``(k, n, n)``; the
    result then has shape ``(k, n)``.
    """
    M = _as_matrix(P)
    dP = np.asarray(dP, dtype=float)
    single = dP.ndim == 2
    stack = dP[None] if single else dP
    if stack.shape[1:] != M.shape:
        raise InputError("dP has the wrong shape")
    if stack.size and np.max(np.abs(stack.sum(axis=2))) > 1e-10:
        raise InputError("perturbation dP must have zero row sums")
    if isinstance(P, TransitionArray) and stack.size and np.any(stack[:, P.mask] != 0.0):
        raise InputError("perturbation dP must vanish on forced zeros")
    res = _Resolvent(P)
    pi = res.pi if law is None else law.probs
    out = np.array([res.left_solve(pi @ D) for D in stack]).reshape(stack.shape[0], M.shape[0])
    return out[0] if single else out


def mixing_report(model: ParamModel, theta) -> dict:
    """Irreducibility and minimum stationary mass at ``theta`` (depth ``r`` chain)."""
    P = transition_matrix(model, theta)
    out = {"irreducible": is_irreducible(P)}
    if out["irreducible"]:
        out["min_stationary_mass"] = float(stationary(P).probs.min())
    return out


def box_corners(model: ParamModel, inset: float = 1e-6, max_dim: int = 10) -> np.ndarray:
    """Corners of the parameter box pulled slightly inward (all ``2^d`` up to ``max_dim``)."""
    lo, hi = model.box
    d = model.dim
    if d == 0:
        return np.zeros((1, 0))
    if d > max_dim:
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, size=(2 ** max_dim, d))
    else:
        bits = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    width = hi - lo
    return np.where(bits == 1, hi - inset * width, lo + inset * width)

