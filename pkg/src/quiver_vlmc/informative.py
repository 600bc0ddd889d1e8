"""Stationary visible transition laws and the maps relating different depths.

The depth-``m`` informative vector is the flattened stationary one-step
transition law of the length-``m`` boundary window. In the exact-depth
regime it is obtained from the depth-``max(m, r)`` chain by fiber averaging;
in the edge-homogeneous regime every coordinate is an edge-level extension
probability.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .chain import (TransitionArray, chain_structure, state_space, stationary, stationary_derivative,
                    transition_derivatives, transition_matrix)
from .errors import DegeneracyError, InputError
from .model import EDGE_HOMOGENEOUS, ParamModel
from .quiver import VisibleStateSpace, Word, suffix, update

FIBER_MASS_TOL = 1e-14


@dataclass(frozen=True)
class InformativeVector:
    """Flattened visible transition law on ``space``; ``mask`` flags forced zeros."""

    depth: int
    space: VisibleStateSpace
    flat: np.ndarray
    mask: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        n = len(self.space)
        return self.flat.reshape(n, n)

    def coord(self, y, y2) -> float:
        n = len(self.space)
        return float(self.flat[self.space.index[tuple(y)] * n + self.space.index[tuple(y2)]])

    def as_transition_array(self) -> TransitionArray:
        n = len(self.space)
        return TransitionArray(self.space, self.matrix.copy(), self.mask.reshape(n, n))


def _projection(fine: VisibleStateSpace, coarse: VisibleStateSpace) -> np.ndarray:
    """0/1 matrix ``E[z, y] = 1`` iff ``z`` truncates to ``y``."""
    E = np.zeros((len(fine), len(coarse)))
    for i, z in enumerate(fine.states):
        y = suffix(z, coarse.depth)
        if y not in coarse.index:
            raise InputError(f"state {''.join(z)!r} truncates outside the coarse space")
        E[i, coarse.index[y]] = 1.0
    return E


def _coarse_space(p: TransitionArray, m: int) -> VisibleStateSpace:
    return VisibleStateSpace(m, tuple(sorted({suffix(z, m) for z in p.space.states})))


def _fiber_masses(pi: np.ndarray, E: np.ndarray, coarse: VisibleStateSpace) -> np.ndarray:
    mass = pi @ E
    bad = np.flatnonzero(mass <= FIBER_MASS_TOL)
    if bad.size:
        y = "".join(coarse.states[bad[0]])
        raise DegeneracyError(f"visible state {y!r} has zero stationary fiber mass")
    return mass


def factorization_map(p: TransitionArray, m: int, space: Optional[VisibleStateSpace] = None) -> InformativeVector:
    """Fiber-averaged visible law ``G_{r,m}(p)`` of a depth-``r`` chain ``p``."""
    r = p.space.depth
    if m > r or m < 1:
        raise InputError(f"cannot truncate a depth-{r} chain to depth {m}")
    if m == r:
        return InformativeVector(r, p.space, p.flat.copy(), p.mask.ravel().copy())
    coarse = _coarse_space(p, m) if space is None else space
    E = _projection(p.space, coarse)
    pi = stationary(p).probs
    mass = _fiber_masses(pi, E, coarse)
    G = (E.T @ (pi[:, None] * p.matrix) @ E) / mass[:, None]
    allowed = (E.T @ (~p.mask).astype(float) @ E) > 0
    return InformativeVector(m, coarse, G.ravel(), (~allowed).ravel())


def _markov_depth(model: ParamModel, m: int) -> int:
    return m if model.regime == EDGE_HOMOGENEOUS else max(m, model.depth)


def informative(model: ParamModel, theta, m: int) -> InformativeVector:
    """Depth-``m`` informative vector ``q^(m)(theta)``."""
    if m < 1:
        raise InputError("depth must be >= 1")
    R = _markov_depth(model, m)
    P = transition_matrix(model, theta, R)
    if R == m:
        return InformativeVector(m, P.space, P.flat.copy(), P.mask.ravel().copy())
    return factorization_map(P, m, state_space(model, m))


def informative_jacobian(model: ParamModel, theta, m: int) -> np.ndarray:
    """Analytic Jacobian of ``q^(m)`` in theta, shape ``(|S_m|^2, d)``.

    Differentiates the fiber-averaging formula with the quotient rule, using
    exact entry gradients and the resolvent form of the stationary derivative.
    """
    R = _markov_depth(model, m)
    P = transition_matrix(model, theta, R)
    dP = transition_derivatives(model, theta, R)
    n = P.n
    if R == m:
        return dP.reshape(model.dim, n * n).T
    coarse = state_space(model, m)
    E = _projection(P.space, coarse)
    law = stationary(P)
    pi = law.probs
    dpi = stationary_derivative(P, dP, law) if model.dim else np.zeros((0, n))
    mass = _fiber_masses(pi, E, coarse)
    G = (E.T @ (pi[:, None] * P.matrix) @ E) / mass[:, None]
    k = len(coarse)
    out = np.zeros((k * k, model.dim))
    for j in range(model.dim):
        dnum = E.T @ (dpi[j][:, None] * P.matrix + pi[:, None] * dP[j]) @ E
        dmass = dpi[j] @ E
        out[:, j] = ((dnum - G * dmass[:, None]) / mass[:, None]).ravel()
    return out


def informative_jacobian_fd(model: ParamModel, theta, m: int, directions: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``q^(m)`` along the columns of ``directions``."""
    theta = model.check_theta(theta)
    directions = np.asarray(directions, dtype=float).reshape(model.dim, -1)
    cols = []
    for t in directions.T:
        plus = informative(model, theta + step * t, m).flat
        minus = informative(model, theta - step * t, m).flat
        cols.append((plus - minus) / (2 * step))
    n = len(state_space(model, m))
    return np.array(cols).T if cols else np.zeros((n * n, 0))


# -- reduced coordinates ----------------------------------------------------

@dataclass(frozen=True)
class ReducedChart:
    """Linear chart keeping every unmasked coordinate except the last one of each row."""

    depth: int
    space: VisibleStateSpace
    mask: np.ndarray
    retained: np.ndarray
    dropped: np.ndarray

    @property
    def size(self) -> int:
        return int(self.retained.size)

    @property
    def ambient(self) -> int:
        return len(self.space) ** 2

    def retained_pairs(self) -> List[Tuple[Word, Word]]:
        n = len(self.space)
        return [(self.space.states[k // n], self.space.states[k % n]) for k in self.retained]

    def reduce(self, v) -> np.ndarray:
        flat = v.flat if isinstance(v, InformativeVector) else np.asarray(v, dtype=float)
        if flat.shape[0] != self.ambient:
            raise InputError(f"vector has length {flat.shape[0]}, chart expects {self.ambient}")
        return flat[self.retained]

    def reconstruct(self, reduced) -> InformativeVector:
        reduced = np.asarray(reduced, dtype=float)
        if reduced.shape != (self.size,):
            raise InputError(f"reduced vector has shape {reduced.shape}, chart expects ({self.size},)")
        n = len(self.space)
        flat = np.zeros(self.ambient)
        flat[self.retained] = reduced
        for i in range(n):
            k = self.dropped[i]
            if k >= 0:
                flat[k] = 1.0 - flat[i * n:(i + 1) * n].sum()
        return InformativeVector(self.depth, self.space, flat, self.mask.copy())

    def reduce_jacobian(self, J: np.ndarray) -> np.ndarray:
        J = np.asarray(J, dtype=float)
        if J.shape[0] != self.ambient:
            raise InputError(f"Jacobian has {J.shape[0]} rows, chart expects {self.ambient}")
        return J[self.retained]


def reduced_chart(space: VisibleStateSpace, mask: np.ndarray) -> ReducedChart:
    n = len(space)
    mask = np.asarray(mask, dtype=bool).reshape(n * n)
    retained, dropped = [], np.full(n, -1, dtype=int)
    for i in range(n):
        free = [i * n + j for j in range(n) if not mask[i * n + j]]
        if free:
            dropped[i] = free[-1]
            retained.extend(free[:-1])
    return ReducedChart(space.depth, space, mask, np.array(retained, dtype=int), dropped)


def model_chart(model: ParamModel, m: int) -> ReducedChart:
    key = ("chart", m)
    if key not in model._cache:
        q = informative(model, model.theta0, m)
        model._cache[key] = reduced_chart(q.space, q.mask)
    return model._cache[key]


def factorization_jacobian_fd(p: TransitionArray, m: int, step: float = 1e-6,
                              space: Optional[VisibleStateSpace] = None) -> np.ndarray:
    """Finite-difference Jacobian of ``G_{r,m}`` at ``p`` in the reduced chart of depth ``r``.

    Column ``k`` perturbs the ``k``-th retained coordinate and compensates in
    the dropped coordinate of its row, so every probe stays in the affine set.
    """
    chart = reduced_chart(p.space, p.mask)
    base = chart.reduce(p.flat)
    cols = []
    for k in range(chart.size):
        e = np.zeros(chart.size)
        e[k] = step
        plus = factorization_map(chart.reconstruct(base + e).as_transition_array(), m, space).flat
        minus = factorization_map(chart.reconstruct(base - e).as_transition_array(), m, space).flat
        cols.append((plus - minus) / (2 * step))
    return np.array(cols).T


# -- hidden fibers ----------------------------------------------------------

@dataclass(frozen=True)
class FiberDecomposition:
    """Stationary fiber representation of one visible coordinate ``q_{y, U(y, a)}``."""

    y: Word
    a: str
    fiber: Tuple[Word, ...]
    weights: np.ndarray
    values: np.ndarray
    dweights: np.ndarray
    dvalues: np.ndarray

    @property
    def value(self) -> float:
        return float(self.weights @ self.values)

    @property
    def gradient(self) -> np.ndarray:
        """Product rule: ``sum alpha dzeta + sum zeta dalpha``."""
        return self.dvalues @ self.weights + self.dweights @ self.values


def fiber_decomposition(model: ParamModel, theta, y: Sequence[str], a: str) -> FiberDecomposition:
    y = tuple(y)
    m = len(y)
    R = _markov_depth(model, m)
    P = transition_matrix(model, theta, R)
    space = P.space
    update(model.quiver, y, a)  # admissibility
    fiber_idx = [i for i, z in enumerate(space.states) if suffix(z, m) == y]
    if not fiber_idx:
        raise InputError(f"visible state {''.join(y)!r} has an empty hidden fiber")
    fiber = tuple(space.states[i] for i in fiber_idx)
    targets = [space.index.get(update(model.quiver, z, a)) for z in fiber]
    dP = transition_derivatives(model, theta, R)
    law = stationary(P)
    pi = law.probs
    dpi = stationary_derivative(P, dP, law) if model.dim else np.zeros((0, P.n))
    pf = pi[fiber_idx]
    mass = pf.sum()
    if mass <= FIBER_MASS_TOL:
        raise DegeneracyError(f"visible state {''.join(y)!r} has zero stationary fiber mass")
    alpha = pf / mass
    dpf = dpi[:, fiber_idx]
    dalpha = (dpf - np.outer(dpf.sum(axis=1), alpha)) / mass
    zeta = np.array([P.matrix[i, t] if t is not None else 0.0 for i, t in zip(fiber_idx, targets)])
    dzeta = np.array([dP[:, i, t] if t is not None else np.zeros(model.dim)
                      for i, t in zip(fiber_idx, targets)]).T.reshape(model.dim, len(fiber))
    return FiberDecomposition(y, a, fiber, alpha, zeta, dalpha, dzeta)


# -- edge-homogeneous regime ------------------------------------------------

@dataclass(frozen=True)
class EdgeVector:
    pairs: Tuple[Tuple[str, str], ...]
    values: np.ndarray


def edge_pairs(model: ParamModel) -> Tuple[Tuple[str, str], ...]:
    if model.regime != EDGE_HOMOGENEOUS:
        raise InputError("edge-extension pairs are defined for edge-homogeneous models")
    return tuple((ctx[-1], a) for ctx, row in model.rows.items() for a, _ in row)


def edge_vector_rho(model: ParamModel, theta) -> EdgeVector:
    """Edge-level law ``(mu(a | e))`` over admissible, non-forced pairs in canonical order."""
    theta = model.check_theta(theta)
    pairs = edge_pairs(model)
    vals = np.array([dict(model.rows[(e,)])[a].evaluate(theta) for e, a in pairs])
    return EdgeVector(pairs, vals)


@dataclass(frozen=True)
class CopyMaps:
    """Coordinate-copy maps ``F`` and coordinate-selection maps ``H`` at two depths."""

    pairs: Tuple[Tuple[str, str], ...]
    depths: Tuple[int, int]
    F: Dict[int, np.ndarray]
    H: Dict[int, np.ndarray]
    represented: bool
    missing: Optional[dict] = None

    def G(self, src: int, dst: int) -> np.ndarray:
        """``F_dst H_src``: maps the depth-``src`` vector to the depth-``dst`` vector."""
        return self.F[dst] @ self.H[src]


def _copy_select(model: ParamModel, depth: int, pairs):
    space = state_space(model, depth)
    n = len(space)
    col = {p: k for k, p in enumerate(pairs)}
    F = np.zeros((n * n, len(pairs)))
    H = np.zeros((len(pairs), n * n))
    chosen = set()
    missing = []
    for i, y in enumerate(space.states):
        for a, _ in model.row(y):
            z = update(model.quiver, y, a)
            if z not in space.index:
                continue
            k = col[(y[-1], a)]
            flat = i * n + space.index[z]
            F[flat, k] = 1.0
            if k not in chosen:
                H[k, flat] = 1.0
                chosen.add(k)
    for k, p in enumerate(pairs):
        if k not in chosen:
            missing.append(p)
    return F, H, missing


def homogeneous_copy_maps(model: ParamModel, m: int, n: int) -> CopyMaps:
    """Fixed 0/1 maps with ``q^(l) = F_l rho`` and ``H_l q^(l) = rho`` at depths ``m`` and ``n``."""
    pairs = edge_pairs(model)
    F, H = {}, {}
    missing = None
    for depth in dict.fromkeys((m, n)):
        F[depth], H[depth], miss = _copy_select(model, depth, pairs)
        if miss and missing is None:
            missing = {"depth": depth, "pair": list(miss[0])}
    return CopyMaps(pairs, (m, n), F, H, missing is None, missing)


def homogeneous_cross_check(model: ParamModel, theta, m: int) -> float:
    """Max gap between the fiber-averaged law and the direct edge-level formula at depth ``m``.

    Meaningful for an exact-depth model whose law depends only on the last
    edge; a large value flags an inconsistent model.
    """
    q = informative(model, theta, m)
    theta = model.check_theta(theta)
    direct = np.zeros_like(q.flat)
    by_last = {}
    for ctx, row in model.rows.items():
        by_last.setdefault(ctx[-1], row)
    n = len(q.space)
    for i, y in enumerate(q.space.states):
        for a, ex in by_last.get(y[-1], ()):
            z = update(model.quiver, y, a)
            if z in q.space.index:
                direct[i * n + q.space.index[z]] = ex.evaluate(theta)
    return float(np.max(np.abs(direct - q.flat)))


def markov_structure(model: ParamModel, m: int):
    """Chain structure used to compute the depth-``m`` map (depth ``max(m, r)``)."""
    return chain_structure(model, _markov_depth(model, m))
