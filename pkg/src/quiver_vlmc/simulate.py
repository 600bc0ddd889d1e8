"""Trajectory simulation and the plug-in minimal-window estimator.

Trajectories are sampled from the depth-``r`` boundary chain, which is Markov.
Empirical informative maps at any depth are read off the edge sequence by
sliding windows, and plug-in Jacobians are central differences of those maps
between trajectories simulated at ``theta0 +- delta t_j``.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .chain import state_space, transition_matrix
from .errors import DomainError, EstimatorDegeneracyError, InputError
from .model import ParamModel
from .quiver import VisibleStateSpace, Word, is_admissible, suffix
from .rank import TangentBlock, _block, minimal_window, restricted_jacobian, singular_values

SEED_POLICIES = ("independent", "crn")
BURN_IN_FACTOR = 10


@dataclass(frozen=True)
class Trajectory:
    """Path ``initial + edges``; ``initial`` is the word reached after burn-in."""

    initial: Word
    edges: Tuple[str, ...]
    seed: Optional[int] = None
    burn_in: int = 0
    stream: Tuple[int, ...] = ()
    theta: Tuple[float, ...] = ()

    @property
    def n(self) -> int:
        return len(self.edges)

    @property
    def path(self) -> Word:
        return self.initial + self.edges


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None or (isinstance(seed, (int, np.integer)) and seed >= 0):
        return np.random.SeedSequence(seed)
    raise InputError(f"seed must be a non-negative integer, got {seed!r}")


def simulate(model: ParamModel, theta, n: int, seed=0, initial: Optional[Sequence[str]] = None,
             depth: Optional[int] = None, burn_in: Optional[int] = None) -> Trajectory:
    """Sample ``n`` appended edges from ``mu_theta(. | current context)``.

    Parameters
    ----------
    model : ParamModel
    theta : array_like
        Parameter in the model box.
    n : int
        Number of recorded edges.
    seed : int or numpy.random.SeedSequence
    initial : sequence of str, optional
        Starting word; its length-``r`` suffix must be a visible state of the
        depth-``r`` chain. Defaults to the first visible state.
    depth : int, optional
        Largest window depth that will be read from the trajectory; the
        returned ``initial`` word has at least this length.
    burn_in : int, optional
        Discarded steps, default ``10 * |S_r|``, never fewer than ``depth``.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    r = model.depth
    depth = max(r, depth or r)
    P = transition_matrix(model, theta)
    space = P.space
    if initial is None:
        start = space.states[0]
    else:
        start = tuple(initial)
        if len(start) < r or not is_admissible(model.quiver, start):
            raise DomainError(f"initial word {''.join(start)!r} must be admissible with length >= {r}")
        if suffix(start, r) not in space.index:
            raise DomainError(f"initial context {''.join(suffix(start, r))!r} is not a visible state")
    if burn_in is None:
        burn_in = BURN_IN_FACTOR * len(space)
    burn_in = max(int(burn_in), depth)

    ss = _seed_sequence(seed)
    u = np.random.default_rng(ss).random(burn_in + n)

    # per-state cumulative laws over the positive entries
    cums, nexts = [], []
    for i in range(len(space)):
        cols = np.flatnonzero(P.matrix[i] > 0.0)
        if cols.size == 0:
            raise DomainError(f"context {''.join(space.states[i])!r} has an all-zero row")
        c = np.cumsum(P.matrix[i, cols])
        c[-1] = np.inf
        cums.append(c[:-1].tolist())
        nexts.append(cols.tolist())
    last_edge = [w[-1] for w in space.states]

    s = space.index[suffix(start, r)]
    states = [0] * (burn_in + n)
    for t, ut in enumerate(u.tolist()):
        s = nexts[s][bisect_right(cums[s], ut)]
        states[t] = s
    edges = [last_edge[i] for i in states]
    walked = start + tuple(edges[:burn_in])
    return Trajectory(
        initial=walked[-depth:], edges=tuple(edges[burn_in:]),
        seed=int(ss.entropy) if isinstance(ss.entropy, int) else None,
        burn_in=burn_in, stream=tuple(ss.spawn_key),
        theta=tuple(float(x) for x in np.atleast_1d(theta)))


# -- empirical informative maps ------------------------------------------------

@dataclass(frozen=True)
class EmpiricalInformative:
    """Empirical transition frequencies of the depth-``m`` window process.

    Rows of unvisited states are NaN and listed in ``missing``.
    """

    depth: int
    space: VisibleStateSpace
    counts: np.ndarray
    matrix: np.ndarray
    missing: Tuple[Word, ...]

    @property
    def flat(self) -> np.ndarray:
        return self.matrix.ravel()


def _window_codes(seq: np.ndarray, m: int, base: int) -> np.ndarray:
    weights = base ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return sliding_window_view(seq, m) @ weights


def empirical_informative(traj: Trajectory, m: int, space: Union[VisibleStateSpace, ParamModel]) -> EmpiricalInformative:
    """Count ``Z_t -> Z_{t+1}`` over the ``n`` recorded steps of ``traj``.

    ``space`` is the visible state space at depth ``m`` or a model to take it from.
    """
    if isinstance(space, ParamModel):
        space = state_space(space, m)
    if space.depth != m:
        raise InputError(f"state space has depth {space.depth}, expected {m}")
    if len(traj.initial) < m:
        raise InputError(f"trajectory initial word is shorter than the window depth {m}")
    alphabet = sorted({e for w in space.states for e in w} | set(traj.path))
    code_of = {e: k for k, e in enumerate(alphabet)}
    seq = np.array([code_of[e] for e in traj.path[len(traj.initial) - m:]], dtype=np.int64)
    base = len(alphabet)
    codes = _window_codes(seq, m, base)
    state_codes = _window_codes(np.array([code_of[e] for w in space.states for e in w], dtype=np.int64), m, base)[::m]
    order = np.argsort(state_codes)
    pos = np.searchsorted(state_codes[order], codes)
    pos = np.clip(pos, 0, len(order) - 1)
    bad = state_codes[order][pos] != codes
    if np.any(bad):
        t = int(np.flatnonzero(bad)[0])
        word = traj.path[len(traj.initial) - m + t: len(traj.initial) + t]
        raise DomainError(f"window {''.join(word)!r} is not a visible state at depth {m}")
    idx = order[pos]
    k = len(space)
    counts = np.bincount(idx[:-1] * k + idx[1:], minlength=k * k).reshape(k, k).astype(float)
    totals = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = counts / totals[:, None]
    missing = tuple(space.states[i] for i in np.flatnonzero(totals == 0))
    return EmpiricalInformative(m, space, counts, matrix, missing)


# -- plug-in Jacobians -------------------------------------------------------------

@dataclass(frozen=True)
class PluginJacobian:
    depth: int
    matrix: np.ndarray
    n: int
    delta: float
    seeds: Tuple = ()
    seed_policy: str = "crn"


def _evaluation_streams(seed, p: int, policy: str):
    """Seed sequences for the ``(+delta, -delta)`` pair of each direction."""
    if policy not in SEED_POLICIES:
        raise InputError(f"seed_policy must be one of {SEED_POLICIES}, got {policy!r}")
    ss = _seed_sequence(seed)
    if policy == "crn":
        kids = ss.spawn(p)
        return [(k, k) for k in kids]
    kids = ss.spawn(2 * p)
    return [(kids[2 * j], kids[2 * j + 1]) for j in range(p)]


def plugin_jacobians(model: ParamModel, theta0, depths: Iterable[int], T=None, n: int = 100_000,
                     delta: float = 0.05, seed=0, seed_policy: str = "crn") -> Dict[int, PluginJacobian]:
    """Plug-in restricted Jacobians at several depths from one set of trajectories.

    Column ``j`` is ``(q_hat(theta0 + delta t_j) - q_hat(theta0 - delta t_j)) / (2 delta)``.
    With ``seed_policy="crn"`` both evaluations of a direction reuse one
    uniform stream.
    """
    depths = sorted(set(depths))
    if not depths or depths[0] < 1:
        raise InputError("depths must be positive integers")
    if delta <= 0:
        raise InputError("delta must be positive")
    T = _block(model, T)
    theta0 = np.asarray(theta0, dtype=float)
    spaces = {m: state_space(model, m) for m in depths}
    for j in range(T.p):
        for sgn in (1, -1):
            pt = theta0 + sgn * delta * T.basis[:, j]
            if not model.in_box(pt):
                raise DomainError(f"theta0 {'+' if sgn > 0 else '-'} delta*t_{j} = {pt.tolist()} leaves the box")
    cols = {m: np.zeros((len(spaces[m]) ** 2, T.p)) for m in depths}
    streams = _evaluation_streams(seed, T.p, seed_policy)
    for j, (s_plus, s_minus) in enumerate(streams):
        q = {}
        for sgn, ss in ((1, s_plus), (-1, s_minus)):
            traj = simulate(model, theta0 + sgn * delta * T.basis[:, j], n, ss, depth=depths[-1])
            for m in depths:
                emp = empirical_informative(traj, m, spaces[m])
                if emp.missing:
                    raise EstimatorDegeneracyError(
                        f"no observed transitions from state {''.join(emp.missing[0])!r} at depth {m} "
                        f"(direction {j}, sign {sgn:+d}, n={n})")
                q[(m, sgn)] = emp.flat
        for m in depths:
            cols[m][:, j] = (q[(m, 1)] - q[(m, -1)]) / (2.0 * delta)
    seeds = (seed,) if not isinstance(seed, np.random.SeedSequence) else (seed.entropy,)
    return {m: PluginJacobian(m, cols[m], n, delta, seeds, seed_policy) for m in depths}


def plugin_jacobian(model: ParamModel, theta0, m: int, T=None, n: int = 100_000, delta: float = 0.05,
                    seed=0, seed_policy: str = "crn") -> PluginJacobian:
    return plugin_jacobians(model, theta0, [m], T, n, delta, seed, seed_policy)[m]


def sigma_p(J, p: int) -> float:
    """``p``-th singular value; 0 when the matrix has fewer than ``p`` rows or ``p == 0``."""
    M = J.matrix if isinstance(J, PluginJacobian) else np.asarray(J, dtype=float)
    if p == 0:
        return float("inf")
    if M.shape[0] < p:
        return 0.0
    sv = singular_values(M)
    return float(sv[p - 1]) if sv.size >= p else 0.0


def minimal_window_estimate(jacobians, gamma: float, p: int) -> int:
    """``min{m : sigma_p(J_m) > gamma}`` over depths ``1..M``, else ``M + 1``.

    ``jacobians`` is a sequence ordered by depth starting at 1, or a mapping
    ``depth -> matrix``.
    """
    if isinstance(jacobians, dict):
        items = sorted(jacobians.items())
    else:
        items = list(enumerate(jacobians, start=1))
    M = max((m for m, _ in items), default=0)
    for m, J in items:
        if sigma_p(J, p) > gamma:
            return m
    return M + 1


def oracle_gap(model: ParamModel, theta0, T=None, M_max: int = 3) -> float:
    """Half the ``p``-th singular value of the analytic ``L_{m_*}``."""
    T = _block(model, T)
    mw = minimal_window(model, theta0, T, M_max)
    if mw.m_star is None:
        raise DomainError(f"the minimal window is not attained up to depth {M_max}")
    return 0.5 * sigma_p(restricted_jacobian(model, theta0, mw.m_star, T).matrix, T.p)


@dataclass
class EstimationRun:
    estimates: Dict[int, int]
    gamma: float
    M: int
    p: int
    sigmas: Dict[int, Dict[int, float]] = field(default_factory=dict)
    failures: Dict[int, str] = field(default_factory=dict)

    def hits(self, target: int) -> int:
        return sum(v == target for v in self.estimates.values())


def estimate_minimal_window(model: ParamModel, theta0, T=None, M: int = 3, gamma: Optional[float] = None,
                            n: int = 200_000, delta: float = 0.05, seeds: Iterable[int] = range(20),
                            seed_policy: str = "crn") -> EstimationRun:
    """Run the plug-in estimator once per seed; ``gamma`` defaults to :func:`oracle_gap`."""
    T = _block(model, T)
    if gamma is None:
        gamma = oracle_gap(model, theta0, T, M)
    run = EstimationRun({}, float(gamma), M, T.p)
    for s in seeds:
        try:
            Js = plugin_jacobians(model, theta0, range(1, M + 1), T, n, delta, s, seed_policy)
        except EstimatorDegeneracyError as exc:
            run.failures[s] = str(exc)
            continue
        run.sigmas[s] = {m: sigma_p(J, T.p) for m, J in Js.items()}
        run.estimates[s] = minimal_window_estimate(Js, gamma, T.p)
    return run


# -- trajectory text export ----------------------------------------------------------

def save_trajectory(traj: Trajectory, path) -> None:
    """Newline-delimited edge ids preceded by ``#`` metadata lines."""
    lines = [
        f"# initial: {' '.join(traj.initial)}",
        f"# seed: {traj.seed}",
        f"# stream: {' '.join(map(str, traj.stream))}",
        f"# burn_in: {traj.burn_in}",
        f"# theta: {' '.join(repr(x) for x in traj.theta)}",
    ]
    Path(path).write_text("\n".join(lines + list(traj.edges)) + "\n")


def load_trajectory(path) -> Trajectory:
    meta, edges = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            edges.append(line.strip())
    seed = meta.get("seed", "None")
    return Trajectory(
        initial=tuple(meta.get("initial", "").split()), edges=tuple(edges),
        seed=None if seed == "None" else int(seed), burn_in=int(meta.get("burn_in", 0)),
        stream=tuple(int(x) for x in meta.get("stream", "").split()),
        theta=tuple(float(x) for x in meta.get("theta", "").split()))
