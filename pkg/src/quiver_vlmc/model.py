"""Parameterized extension laws on a quiver.

A :class:`ParamModel` maps a context key (the last ``r`` edges of the path,
``r = 1`` in the edge-homogeneous regime) to a row of appended-edge
probabilities, each an :class:`~quiver_vlmc.expr.Expr` in the parameters.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .errors import DomainError, InputError, ModelValidityError
from .expr import Const, Expr, affine_reparam, as_expr, fold, substitute
from .quiver import Quiver, Word, is_admissible, suffix

EXACT_DEPTH = "exact_depth"
EDGE_HOMOGENEOUS = "edge_homogeneous"

ROW_SUM_TOL = 1e-12
NONZERO_TOL = 1e-12
VALUE_TOL = 1e-9
N_VALIDATION_POINTS = 100


class ParamModel:
    """Right-growth extension law ``mu_theta(a | context)``.

    Parameters
    ----------
    quiver : Quiver
    regime : {"exact_depth", "edge_homogeneous"}
    depth : int
        Context length ``r``; forced to 1 for the edge-homogeneous regime.
    rows : mapping
        ``context word -> {edge: expression}``. Expressions may be strings,
        numbers or :class:`Expr`. Admissible edges missing from a row are
        structural zeros.
    theta0 : array_like
        Base point; its length fixes the parameter dimension.
    box : (lo, hi), optional
        Open parameter box. Defaults to :func:`default_box`.
    forced_zeros : iterable of (context, edge), optional
        Declared structural zeros; must not overlap listed row entries.
    """

    def __init__(self, quiver: Quiver, regime: str, depth: int, rows: Mapping, theta0,
                 box=None, forced_zeros: Iterable = (), name: str = "model", validate: bool = True):
        if regime not in (EXACT_DEPTH, EDGE_HOMOGENEOUS):
            raise InputError(f"unknown regime {regime!r}")
        if regime == EDGE_HOMOGENEOUS:
            depth = 1
        if depth < 1:
            raise InputError("context depth must be >= 1")
        self.quiver = quiver
        self.regime = regime
        self.depth = int(depth)
        self.name = name
        self.theta0 = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
        self.theta0.setflags(write=False)
        self.dim = self.theta0.size

        parsed: Dict[Word, Tuple[Tuple[str, Expr], ...]] = {}
        for ctx, entries in rows.items():
            ctx = tuple(ctx)
            if len(ctx) != self.depth:
                raise InputError(f"context {''.join(ctx)!r} has length {len(ctx)}, expected {self.depth}")
            if not is_admissible(quiver, ctx):
                raise InputError(f"context {''.join(ctx)!r} is not an admissible word")
            allowed = quiver.successors(ctx[-1])
            row = []
            for a, ex in sorted(dict(entries).items()):
                if a not in allowed:
                    raise InputError(f"edge {a!r} is not admissible after context {''.join(ctx)!r}")
                ex = fold(as_expr(ex))
                if any(j >= self.dim for j in ex.params()):
                    raise InputError(f"expression {ex} uses a parameter beyond dimension {self.dim}")
                row.append((a, ex))
            if not row:
                raise InputError(f"empty row for context {''.join(ctx)!r}")
            parsed[ctx] = tuple(row)
        self.rows = dict(sorted(parsed.items()))

        declared = set()
        for ctx, a in forced_zeros:
            ctx = tuple(ctx)
            if ctx in self.rows and any(b == a for b, _ in self.rows[ctx]):
                raise InputError(f"forced zero ({''.join(ctx)}, {a}) is also a listed entry")
            declared.add((ctx, a))
        implicit = {(ctx, a) for ctx, row in self.rows.items()
                    for a in quiver.successors(ctx[-1]) if a not in dict(row)}
        self.declared_zeros = frozenset(declared)
        self.forced_zeros = frozenset(declared | implicit)

        self.box = default_box(self) if box is None else _as_box(box, self.dim)
        if not self.in_box(self.theta0):
            raise DomainError(f"theta0 {self.theta0.tolist()} is not inside the parameter box")
        self._cache = {}
        if validate:
            self.validate()

    # -- evaluation ---------------------------------------------------------

    def context_key(self, context: Sequence[str]) -> Word:
        if len(context) < self.depth:
            raise InputError(f"context {''.join(context)!r} is shorter than the model depth {self.depth}")
        return suffix(tuple(context), self.depth)

    def row(self, context: Sequence[str]) -> Tuple[Tuple[str, Expr], ...]:
        key = self.context_key(context)
        try:
            return self.rows[key]
        except KeyError:
            raise ModelValidityError(f"no extension law for context {''.join(key)!r}") from None

    def has_row(self, context) -> bool:
        return self.context_key(context) in self.rows

    def entry(self, context, a) -> Optional[Expr]:
        """Expression for ``mu(a | context)``; ``None`` for a structural zero."""
        key = self.context_key(context)
        if self.quiver.source(a) != self.quiver.target(key[-1]):
            raise InputError(f"edge {a!r} is not admissible after {''.join(key)!r}")
        for b, ex in self.row(key):
            if b == a:
                return ex
        return None

    def in_box(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return theta.shape == self.theta0.shape and bool(np.all(theta > self.box[0]) and np.all(theta < self.box[1]))

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != self.theta0.shape:
            raise DomainError(f"theta has shape {theta.shape}, expected {self.theta0.shape}")
        if not self.in_box(theta):
            raise DomainError(f"theta {theta.tolist()} lies outside the parameter box")
        return theta

    # -- structure ----------------------------------------------------------

    def validate(self, n_points: int = N_VALIDATION_POINTS) -> None:
        """Row-sum identity, nonvanishing entries and value range at quasi-random box points."""
        pts = sample_box(self, n_points, seed=0)
        for ctx, row in self.rows.items():
            label = "".join(ctx)
            for a, ex in row:
                if isinstance(ex, Const) and ex.value == 0.0:
                    raise ModelValidityError(f"entry ({label}, {a}) is identically zero; declare it a forced zero")
            symbolic_one = fold(_sum_exprs([ex for _, ex in row]))
            vals = np.array([[_safe_eval(ex, t, label, a) for _, ex in row] for t in pts])
            for k, (a, _) in enumerate(row):
                if np.max(np.abs(vals[:, k])) < NONZERO_TOL:
                    raise ModelValidityError(f"entry ({label}, {a}) vanishes at every sampled parameter")
            if vals.min() < -VALUE_TOL or vals.max() > 1 + VALUE_TOL:
                raise ModelValidityError(f"row {label!r} leaves [0, 1] inside the parameter box")
            if not (isinstance(symbolic_one, Const) and symbolic_one.value == 1.0):
                err = np.max(np.abs(vals.sum(axis=1) - 1.0))
                if err > ROW_SUM_TOL:
                    raise ModelValidityError(f"row {label!r} does not sum to 1 (max error {err:.3g})")

    def box_array(self) -> np.ndarray:
        """Box as a ``(d, 2)`` array of ``[lo, hi]`` rows."""
        return np.stack(self.box, axis=1).reshape(self.dim, 2)

    def with_box(self, box) -> "ParamModel":
        return ParamModel(self.quiver, self.regime, self.depth, self.rows, self.theta0, box=box,
                          forced_zeros=self.declared_zeros, name=self.name)

    def with_theta0(self, theta0) -> "ParamModel":
        """Same law re-based at ``theta0``; keeps the box when it still contains the point."""
        box = self.box_array() if self.in_box(theta0) else None
        return ParamModel(self.quiver, self.regime, self.depth, self.rows, theta0, box=box,
                          forced_zeros=self.declared_zeros, name=self.name)

    def reparameterize(self, D, new_theta0=None) -> "ParamModel":
        """Pull back along ``theta = theta0 + D (t - t0)``."""
        D = np.asarray(D, dtype=float)
        if D.shape[0] != self.dim:
            raise InputError("reparameterization matrix has the wrong number of rows")
        t0 = np.zeros(D.shape[1]) if new_theta0 is None else np.asarray(new_theta0, dtype=float)
        shift = self.theta0 - D @ t0
        subs = affine_reparam(shift, D)
        rows = {ctx: {a: fold(substitute(ex, subs)) for a, ex in row} for ctx, row in self.rows.items()}
        return ParamModel(self.quiver, self.regime, self.depth, rows, t0,
                          forced_zeros=self.declared_zeros, name=f"{self.name}[reparam]")

    def __repr__(self):
        return (f"ParamModel(name={self.name!r}, regime={self.regime!r}, depth={self.depth}, "
                f"dim={self.dim}, contexts={len(self.rows)})")


def _sum_exprs(exprs: List[Expr]) -> Expr:
    acc: Expr = Const(0.0)
    for ex in exprs:
        acc = acc + ex
    return acc


def _safe_eval(ex: Expr, theta, label, a) -> float:
    try:
        v = ex.evaluate(theta)
    except ZeroDivisionError:
        raise ModelValidityError(f"entry ({label}, {a}) divides by zero inside the parameter box") from None
    if not np.isfinite(v):
        raise ModelValidityError(f"entry ({label}, {a}) is not finite inside the parameter box")
    return v


def _as_box(box, dim) -> Tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(box, dtype=float)
    if arr.shape == (0,) and dim == 0:
        arr = arr.reshape(0, 2)
    if arr.shape != (dim, 2):
        raise InputError(f"box must have shape ({dim}, 2) with rows [lo, hi]")
    lo, hi = arr[:, 0], arr[:, 1]
    if np.any(lo >= hi):
        raise InputError("box lower bounds must be below upper bounds")
    lo, hi = lo.copy(), hi.copy()
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


def _entries_inside(model: ParamModel, theta) -> bool:
    for row in model.rows.values():
        for _, ex in row:
            if isinstance(ex, Const):
                continue
            try:
                v = ex.evaluate(theta)
            except ZeroDivisionError:
                return False
            if not (0.0 < v < 1.0):
                return False
    return True


def default_box(model: ParamModel, shrink: float = 0.9, n_scan: int = 400, n_bisect: int = 50):
    """Largest axis-aligned box keeping every non-constant entry in (0, 1) along coordinate scans.

    Each half-width is found by a grid scan followed by bisection, then
    multiplied by ``shrink``. Directions that never leave (0, 1) are capped at
    ``10 * max(1, |theta0_j|)``. The box is then shrunk toward ``theta0``
    until its corners and interior sample points are valid too.
    """
    theta0 = model.theta0
    if not _entries_inside(model, theta0):
        raise DomainError("some non-constant entry is not in (0, 1) at theta0")
    lo, hi = theta0.copy(), theta0.copy()
    for j in range(model.dim):
        cap = 10.0 * max(1.0, abs(theta0[j]))
        for sign in (-1.0, 1.0):
            def ok(s):
                t = theta0.copy()
                t[j] += sign * s
                return _entries_inside(model, t)

            grid = cap * np.linspace(0.0, 1.0, n_scan + 1)[1:]
            good, bad = 0.0, None
            for s in grid:
                if ok(s):
                    good = s
                else:
                    bad = s
                    break
            if bad is None:
                reach = cap
            else:
                for _ in range(n_bisect):
                    mid = 0.5 * (good + bad)
                    if ok(mid):
                        good = mid
                    else:
                        bad = mid
                reach = good
            if sign < 0:
                lo[j] = theta0[j] - shrink * reach
            else:
                hi[j] = theta0[j] + shrink * reach
    # axis scans do not control corners once parameters are mixed; shrink until the box is clean
    for _ in range(60):
        if _box_clean(model, lo, hi):
            break
        lo = theta0 - 0.8 * (theta0 - lo)
        hi = theta0 + 0.8 * (hi - theta0)
    else:
        raise DomainError("could not find a parameter box around theta0 with valid entries")
    return _as_box(np.stack([lo, hi], axis=1), model.dim)


def _box_clean(model: ParamModel, lo, hi, n_points: int = 64) -> bool:
    d = model.dim
    if d == 0:
        return _entries_inside(model, model.theta0)
    if d <= 10:
        bits = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    else:
        bits = np.random.default_rng(0).integers(0, 2, size=(1024, d))
    pts = [np.where(b == 1, hi, lo) for b in bits]
    pts.extend(lo + u * (hi - lo) for u in qmc.Halton(d, scramble=True, seed=1).random(n_points))
    return all(_entries_inside(model, t) for t in pts)


def sample_box(model: ParamModel, n: int, seed: int = 0, margin: float = 0.0) -> np.ndarray:
    """``n`` quasi-random points strictly inside the box (scrambled Halton)."""
    if model.dim == 0:
        return np.zeros((n, 0))
    u = qmc.Halton(model.dim, scramble=True, seed=seed).random(n)
    u = margin + (1 - 2 * margin) * np.clip(u, 1e-9, 1 - 1e-9)
    lo, hi = model.box
    return lo + u * (hi - lo)


def eval_mu(model: ParamModel, theta, context: Sequence[str], a: str) -> float:
    """Extension probability ``mu_theta(a | context)``."""
    theta = model.check_theta(theta)
    ex = model.entry(context, a)
    if ex is None:
        return 0.0
    v = _safe_eval(ex, theta, "".join(model.context_key(context)), a)
    if v < -VALUE_TOL or v > 1 + VALUE_TOL:
        raise ModelValidityError(f"mu({a} | {''.join(context)}) = {v} is not a probability")
    return v


def grad_mu(model: ParamModel, theta, context: Sequence[str], a: str) -> np.ndarray:
    """Exact gradient of :func:`eval_mu` in theta."""
    theta = model.check_theta(theta)
    ex = model.entry(context, a)
    if ex is None:
        return np.zeros(model.dim)
    try:
        return ex.value_and_grad(theta)[1]
    except ZeroDivisionError:
        raise ModelValidityError(f"entry ({''.join(context)}, {a}) divides by zero") from None


@dataclass(frozen=True)
class RegimeVerdict:
    """Outcome of a sampled structural check; ``witness`` names the first violation."""

    holds: bool
    witness: Optional[dict] = None

    def __bool__(self):
        return self.holds


def _row_values(model, ctx, theta) -> Dict[str, float]:
    return {a: ex.evaluate(theta) for a, ex in model.rows[ctx]}


def check_edge_homogeneous(model: ParamModel, theta_samples, tol: float = 1e-12) -> RegimeVerdict:
    """Whether the law depends only on the last edge of the context at every sample."""
    if model.regime == EDGE_HOMOGENEOUS:
        return RegimeVerdict(True)
    by_last: Dict[str, List[Word]] = {}
    for ctx in model.rows:
        by_last.setdefault(ctx[-1], []).append(ctx)
    for theta in np.atleast_2d(theta_samples):
        theta = model.check_theta(theta)
        for last, ctxs in sorted(by_last.items()):
            ref = ctxs[0]
            ref_vals = _row_values(model, ref, theta)
            for other in ctxs[1:]:
                vals = _row_values(model, other, theta)
                for a in sorted(set(ref_vals) | set(vals)):
                    x, y = ref_vals.get(a, 0.0), vals.get(a, 0.0)
                    if abs(x - y) > tol:
                        return RegimeVerdict(False, {
                            "contexts": ["".join(ref), "".join(other)], "edge": a,
                            "theta": theta.tolist(), "difference": abs(x - y)})
    return RegimeVerdict(True)


def check_exact_depth_witness(model: ParamModel, k: int, theta_samples, tol: float = 1e-9) -> RegimeVerdict:
    """Search for contexts agreeing on their last ``k`` edges but with different laws.

    ``holds`` is True when a witness was found. A False verdict only means no
    witness appeared at the sampled parameters.
    """
    if k < 1:
        raise InputError("depth k must be >= 1")
    if k >= model.depth:
        raise InputError(f"k={k} must be smaller than the model depth {model.depth}")
    groups: Dict[Word, List[Word]] = {}
    for ctx in model.rows:
        groups.setdefault(suffix(ctx, k), []).append(ctx)
    for theta in np.atleast_2d(theta_samples):
        theta = model.check_theta(theta)
        for key, ctxs in sorted(groups.items()):
            for i, xi in enumerate(ctxs):
                vi = _row_values(model, xi, theta)
                for xj in ctxs[i + 1:]:
                    vj = _row_values(model, xj, theta)
                    for a in sorted(set(vi) | set(vj)):
                        diff = abs(vi.get(a, 0.0) - vj.get(a, 0.0))
                        if diff > tol:
                            return RegimeVerdict(True, {
                                "contexts": ["".join(xi), "".join(xj)], "edge": a,
                                "theta": theta.tolist(), "difference": diff})
    return RegimeVerdict(False)
