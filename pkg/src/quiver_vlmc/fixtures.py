"""Reference models: the depth-two branching quiver and random generators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import state_space
from .errors import DegeneracyError, InputError
from .model import EDGE_HOMOGENEOUS, EXACT_DEPTH, ParamModel
from .quiver import Quiver, admissible_words

BRANCHING_EDGES = (("b", "0", "1"), ("c", "2", "1"), ("a", "1", "3"), ("d", "3", "0"), ("e", "3", "2"))
BRANCHING_ORDER = ("ba", "ad", "db", "ae", "ec", "ca")


def branching_quiver() -> Quiver:
    return Quiver(("0", "1", "2", "3"), BRANCHING_EDGES)


@dataclass(frozen=True)
class BranchingOracle:
    """Closed-form quantities of the branching model at ``(eta1, eta2)``."""

    eta1: float
    eta2: float

    @property
    def D(self) -> float:
        return self.eta2 + 1.0 - self.eta1

    @property
    def pi(self) -> dict:
        """Stationary law keyed by state label."""
        w = np.array([self.eta2] * 3 + [1.0 - self.eta1] * 3) / (3.0 * self.D)
        return dict(zip(BRANCHING_ORDER, w))

    @property
    def q2_reduced(self) -> np.ndarray:
        return np.array([self.eta1, self.eta2])

    @property
    def q1_reduced(self) -> float:
        return self.eta2 / self.D

    @property
    def dq2_reduced(self) -> np.ndarray:
        return np.eye(2)

    @property
    def dq1_reduced(self) -> np.ndarray:
        return np.array([[self.eta2, 1.0 - self.eta1]]) / self.D ** 2

    @property
    def kernel_direction(self) -> np.ndarray:
        return np.array([1.0 - self.eta1, -self.eta2])

    @property
    def fiber_weights_a(self) -> dict:
        """Stationary weights of the hidden states ``ba``, ``ca`` given the visible edge ``a``."""
        return {"ba": self.eta2 / self.D, "ca": (1.0 - self.eta1) / self.D}


def branching_rows(eta1="p0", eta2="p1") -> dict:
    return {
        ("b", "a"): {"d": eta1, "e": f"1 - ({eta1})"},
        ("c", "a"): {"d": eta2, "e": f"1 - ({eta2})"},
        ("a", "d"): {"b": 1},
        ("d", "b"): {"a": 1},
        ("a", "e"): {"c": 1},
        ("e", "c"): {"a": 1},
    }


def build_branching_fixture(eta1: float, eta2: float, box=None):
    """Exact-depth-2 branching model with parameters ``(p0, p1) = (eta1, eta2)`` and its oracle."""
    if not (0.0 < eta1 < 1.0 and 0.0 < eta2 < 1.0):
        raise InputError(f"(eta1, eta2) = ({eta1}, {eta2}) must lie in the open unit square")
    model = ParamModel(branching_quiver(), EXACT_DEPTH, 2, branching_rows(), [eta1, eta2],
                       box=box, name="branching")
    return model, BranchingOracle(float(eta1), float(eta2))


def cycle_model(n: int = 3) -> ParamModel:
    """Deterministic ``n``-cycle with no parameters."""
    q = Quiver(tuple(str(i) for i in range(n)), tuple((f"x{i}", str(i), str((i + 1) % n)) for i in range(n)))
    rows = {(f"x{i}",): {f"x{(i + 1) % n}": 1} for i in range(n)}
    return ParamModel(q, EDGE_HOMOGENEOUS, 1, rows, [], name=f"cycle{n}")


def loop_model() -> ParamModel:
    q = Quiver(("0",), (("l", "0", "0"),))
    return ParamModel(q, EDGE_HOMOGENEOUS, 1, {("l",): {"l": 1}}, [], name="loop")


def two_loop_model(w: float = 0.3) -> ParamModel:
    """Two loops at one vertex with law ``(p0, 1 - p0)`` independent of the last edge."""
    q = Quiver(("0",), (("u", "0", "0"), ("v", "0", "0")))
    rows = {(e,): {"u": "p0", "v": "1 - p0"} for e in ("u", "v")}
    return ParamModel(q, EDGE_HOMOGENEOUS, 1, rows, [w], name="two-loop")


def source_edge_model(w: float = 0.4) -> ParamModel:
    """Edge-homogeneous model whose edge ``x`` has no incoming edge.

    ``x`` is a visible state at depth 1 but ends no admissible word of length
    two or more, so the pair ``(x, y)`` is unrepresented at deeper windows.
    """
    q = Quiver(("0", "1"), (("x", "0", "1"), ("y", "1", "1"), ("z", "1", "1")))
    rows = {(e,): {"y": "p0", "z": "1 - p0"} for e in ("x", "y", "z")}
    return ParamModel(q, EDGE_HOMOGENEOUS, 1, rows, [w], name="source-edge")


# -- random generators ------------------------------------------------------

def random_strong_quiver(rng: np.random.Generator, n_vertices: int = 3, n_edges: Optional[int] = None) -> Quiver:
    """Random strongly connected quiver with a Hamiltonian cycle plus extra edges."""
    if n_edges is None:
        n_edges = int(rng.integers(n_vertices + 1, 2 * n_vertices + 1))
    order = rng.permutation(n_vertices)
    edges = [(order[i], order[(i + 1) % n_vertices]) for i in range(n_vertices)]
    while len(edges) < n_edges:
        edges.append((int(rng.integers(n_vertices)), int(rng.integers(n_vertices))))
    return Quiver(tuple(str(v) for v in range(n_vertices)),
                  tuple((f"e{k}", str(s), str(t)) for k, (s, t) in enumerate(edges)))


def _rational_row(rng, edges, d, scale=1.0):
    """``mu_k = g_k / sum g`` with ``g_k = a_k + sum_j b_kj p_j`` positive on the unit box."""
    if len(edges) == 1:
        return {edges[0]: 1}
    a = rng.uniform(0.2, 1.0, size=len(edges))
    b = rng.uniform(0.0, scale, size=(len(edges), d)) * (rng.random((len(edges), d)) < 0.7)
    terms = []
    for k in range(len(edges)):
        s = repr(float(a[k])) + "".join(f" + {float(b[k, j])!r}*p{j}" for j in range(d) if b[k, j] > 0)
        terms.append(f"({s})")
    den = " + ".join(terms)
    return {e: f"{terms[k]} / ({den})" for k, e in enumerate(edges)}


def random_exact_depth_model(rng: np.random.Generator, n_vertices: int = 3, depth: int = 2, d: int = 2,
                             max_tries: int = 200) -> ParamModel:
    """Random exact-depth model with rational rows, irreducible by rejection.

    Every length-``depth`` context gets its own random row, so the law
    generically depends on the full context.
    """
    for _ in range(max_tries):
        q = random_strong_quiver(rng, n_vertices)
        contexts = list(admissible_words(q, depth))
        if not any(len(q.successors(c[-1])) > 1 for c in contexts):
            continue
        rows = {c: _rational_row(rng, q.successors(c[-1]), d) for c in contexts}
        theta0 = rng.uniform(0.3, 0.7, size=d)
        box = np.stack([np.full(d, 0.05), np.full(d, 0.95)], axis=1)
        model = ParamModel(q, EXACT_DEPTH, depth, rows, theta0, box=box, name="random-exact")
        try:
            if len(state_space(model, depth)) == len(contexts):
                return model
        except DegeneracyError:
            continue
    raise RuntimeError("could not generate an irreducible random model")


def random_edge_homogeneous_model(rng: np.random.Generator, n_vertices: int = 3, d: int = 2) -> ParamModel:
    q = random_strong_quiver(rng, n_vertices)
    rows = {(e,): _rational_row(rng, q.successors(e), d) for e in q.edge_ids}
    theta0 = rng.uniform(0.3, 0.7, size=d)
    box = np.stack([np.full(d, 0.05), np.full(d, 0.95)], axis=1)
    return ParamModel(q, EDGE_HOMOGENEOUS, 1, rows, theta0, box=box, name="random-homogeneous")
