"""Finite quivers, admissible words and boundary-window combinatorics.

Words are plain tuples of edge ids. Vertices are never stored on a word;
incidence is always read back from the owning :class:`Quiver`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Sequence, Tuple

from .errors import InputError

Word = Tuple[str, ...]


@dataclass(frozen=True)
class Quiver:
    """Finite directed multigraph.

    Parameters
    ----------
    vertices : sequence of str
        Vertex ids.
    edges : sequence of (edge_id, source, target)
        Parallel edges and loops are allowed; edge ids must be unique.
    """

    vertices: Tuple[str, ...]
    edges: Tuple[Tuple[str, str, str], ...]
    _src: Dict[str, str] = field(init=False, repr=False, compare=False)
    _tgt: Dict[str, str] = field(init=False, repr=False, compare=False)
    _out: Dict[str, Tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = tuple(str(v) for v in self.vertices)
        edges = tuple((str(e), str(s), str(t)) for e, s, t in self.edges)
        if len(set(vertices)) != len(vertices):
            raise InputError("duplicate vertex ids")
        vset = set(vertices)
        src, tgt = {}, {}
        for e, s, t in edges:
            if e in src:
                raise InputError(f"duplicate edge id {e!r}")
            if s not in vset or t not in vset:
                raise InputError(f"edge {e!r} references an undeclared vertex ({s!r} -> {t!r})")
            src[e], tgt[e] = s, t
        out = {v: tuple(sorted(e for e, s, _ in edges if s == v)) for v in vertices}
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_src", src)
        object.__setattr__(self, "_tgt", tgt)
        object.__setattr__(self, "_out", out)

    @property
    def edge_ids(self) -> Tuple[str, ...]:
        """Edge ids in canonical (sorted) order."""
        return tuple(sorted(self._src))

    def has_edge(self, e: str) -> bool:
        return e in self._src

    def source(self, e: str) -> str:
        self._check(e)
        return self._src[e]

    def target(self, e: str) -> str:
        self._check(e)
        return self._tgt[e]

    def out_edges(self, v: str) -> Tuple[str, ...]:
        return self._out[v]

    def successors(self, e: str) -> Tuple[str, ...]:
        """Edges that may be appended after ``e``."""
        return self._out[self.target(e)]

    def _check(self, e):
        if e not in self._src:
            raise InputError(f"unknown edge id {e!r}")


@dataclass(frozen=True)
class VisibleStateSpace:
    """Ordered set of admissible words of a common length ``depth``."""

    depth: int
    states: Tuple[Word, ...]
    index: Dict[Word, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states = tuple(tuple(s) for s in self.states)
        if any(len(s) != self.depth for s in states):
            raise InputError(f"all states must have length {self.depth}")
        if len(set(states)) != len(states):
            raise InputError("duplicate states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "index", {s: i for i, s in enumerate(states)})

    def __len__(self):
        return len(self.states)

    def __iter__(self) -> Iterator[Word]:
        return iter(self.states)

    def __contains__(self, w) -> bool:
        return tuple(w) in self.index

    def labels(self, sep: str = "") -> list:
        return [sep.join(s) for s in self.states]


def is_admissible(q: Quiver, w: Sequence[str]) -> bool:
    """True iff consecutive edges of ``w`` are incident in ``q``."""
    for e in w:
        if not q.has_edge(e):
            raise InputError(f"unknown edge id {e!r}")
    return all(q.target(x) == q.source(y) for x, y in zip(w, w[1:]))


def suffix(w: Sequence[str], m: int) -> Word:
    """The right boundary word: last ``m`` edges of ``w``."""
    if m < 0 or m > len(w):
        raise InputError(f"cannot take suffix of length {m} from a word of length {len(w)}")
    return tuple(w[len(w) - m:])


def update(q: Quiver, y: Sequence[str], a: str) -> Word:
    """Append ``a`` to ``y`` and truncate back to ``len(y)``."""
    if len(y) < 1:
        raise InputError("update needs a nonempty word")
    if q.source(a) != q.target(y[-1]):
        raise InputError(f"edge {a!r} is not admissible after {''.join(y)!r}")
    return tuple(y[1:]) + (a,)


def contains_forced_zero(w: Sequence[str], forced_zeros: Iterable[Tuple[Word, str]]) -> bool:
    """True iff some forced-zero transition ``context -> a`` occurs inside ``w``."""
    w = tuple(w)
    for ctx, a in forced_zeros:
        k = len(ctx) + 1
        pattern = tuple(ctx) + (a,)
        for i in range(len(w) - k + 1):
            if w[i:i + k] == pattern:
                return True
    return False


def admissible_words(q: Quiver, m: int) -> Iterator[Word]:
    """All admissible words of length ``m``, in lexicographic order."""
    if m < 1:
        raise InputError("depth must be >= 1")

    def grow(prefix):
        if len(prefix) == m:
            yield prefix
            return
        for a in q.successors(prefix[-1]):
            yield from grow(prefix + (a,))

    for e in q.edge_ids:
        yield from grow((e,))


def enumerate_states(q: Quiver, m: int, forced_zeros: Iterable[Tuple[Word, str]] = ()) -> VisibleStateSpace:
    """Admissible length-``m`` words avoiding all forced-zero transitions."""
    fz = [(tuple(c), a) for c, a in forced_zeros]
    states = [w for w in admissible_words(q, m) if not contains_forced_zero(w, fz)]
    return VisibleStateSpace(m, tuple(sorted(states)))


def word_from_string(q: Quiver, text: str) -> Word:
    """Parse ``"b a d"`` (whitespace separated) or ``"bad"`` (single-char ids)."""
    parts = text.split()
    if len(parts) == 1 and not q.has_edge(parts[0]) and all(q.has_edge(c) for c in parts[0]):
        parts = list(parts[0])
    for e in parts:
        if not q.has_edge(e):
            raise InputError(f"unknown edge id {e!r} in word {text!r}")
    return tuple(parts)


def fiber_partition(states: Sequence[Word], m: int) -> Dict[Word, Tuple[int, ...]]:
    """Group indices of ``states`` by their length-``m`` suffix."""
    groups = {}
    for i, z in enumerate(states):
        groups.setdefault(suffix(z, m), []).append(i)
    return {y: tuple(ix) for y, ix in sorted(groups.items())}


__all__ = [
    "Quiver", "Word", "VisibleStateSpace", "is_admissible", "suffix", "update",
    "enumerate_states", "admissible_words", "contains_forced_zero", "word_from_string",
    "fiber_partition",
]
