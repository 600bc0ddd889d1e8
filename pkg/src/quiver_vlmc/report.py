"""Config-driven rank report.

:func:`run_analysis` bundles regime checks, per-depth Jacobian ranks, all
pairwise sufficiency comparisons, the minimal window and, when requested, an
estimation run into one JSON-serializable dict. Same config and seeds give a
byte-identical report.
"""
from __future__ import annotations

import itertools
import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import chain as _chain
from . import model as _model
from ._version import __version__
from .chain import box_corners, is_irreducible, mixing_report, state_space, transition_matrix
from .config import AnalysisConfig
from .errors import QuiverVLMCError
from .informative import homogeneous_cross_check, informative, model_chart
from .model import EDGE_HOMOGENEOUS, EXACT_DEPTH, check_edge_homogeneous, check_exact_depth_witness, sample_box
from .rank import (TOL_NONZERO, TOL_ZERO, compare_depths, is_borderline, kernel_basis, minimal_window,
                   numerical_rank, restricted_jacobian, singular_values, verify_minimal_global,
                   witness_contract)
from .simulate import estimate_minimal_window, oracle_gap

N_REGIME_SAMPLES = 20
EDGE_FORMULA_TOL = 1e-10


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def tolerances(cfg: AnalysisConfig) -> dict:
    return {
        "rank_tol": cfg.rank_tol,
        "fd_step": cfg.fd_step,
        "witness_tol_zero": TOL_ZERO,
        "witness_tol_nonzero": TOL_NONZERO,
        "row_sum_tol": _model.ROW_SUM_TOL,
        "stochastic_tol": _chain.STOCHASTIC_TOL,
        "resolvent_cond_limit": _chain.COND_LIMIT,
        "borderline_factor": 10.0,
    }


def regime_checks(model) -> dict:
    """Sampled structural checks plus irreducibility at theta0 and near the box corners."""
    samples = sample_box(model, N_REGIME_SAMPLES, seed=0)
    out: dict = {"declared": model.regime}
    if model.regime == EXACT_DEPTH:
        hom = check_edge_homogeneous(model, samples)
        out["edge_homogeneous"] = {"holds": hom.holds, "witness": hom.witness}
        out["exact_depth_witnesses"] = {}
        for k in range(1, model.depth):
            v = check_exact_depth_witness(model, k, samples)
            out["exact_depth_witnesses"][k] = {"found": v.holds, "witness": v.witness}
    out["theta0"] = mixing_report(model, model.theta0)
    corners = []
    for c in box_corners(model):
        try:
            irr = is_irreducible(transition_matrix(model, c))
        except QuiverVLMCError as exc:
            corners.append({"theta": c, "error": f"{type(exc).__name__}: {exc}"})
            continue
        corners.append({"theta": c, "irreducible": irr})
    out["box_corners"] = corners
    return out


def depth_entry(cfg: AnalysisConfig, m: int, L, edge_law: bool = False) -> dict:
    """Per-depth summary; ``edge_law`` adds the gap to the direct last-edge formula."""
    model = cfg.model
    T = cfg.T
    space = state_space(model, m)
    chart = model_chart(model, m)
    q = informative(model, model.theta0, m)
    fd = restricted_jacobian(model, model.theta0, m, T, method="fd", step=cfg.fd_step)
    scale = max(1.0, float(np.abs(L.matrix).max(initial=0.0)))
    entry = {
        "states": space.labels(" "),
        "free_coordinates": chart.size,
        "informative_reduced": chart.reduce(q.flat),
        "rank": numerical_rank(L, cfg.rank_tol),
        "singular_values": singular_values(L),
        "kernel_basis": kernel_basis(L, cfg.rank_tol).T,
        "borderline": is_borderline(L, cfg.rank_tol),
        "fd_relative_gap": float(np.abs(L.matrix - fd.matrix).max(initial=0.0)) / scale,
    }
    if edge_law:
        gap = homogeneous_cross_check(model, model.theta0, m)
        entry["edge_formula_gap"] = gap
        entry["edge_formula_consistent"] = gap <= EDGE_FORMULA_TOL
    return entry


def comparison_entry(cfg: AnalysisConfig, Lm, Lr) -> dict:
    rep = compare_depths(Lm, Lr, cfg.rank_tol)
    out = {
        "depths": [Lm.depth, Lr.depth],
        "verdict": rep.verdict,
        "rank_m": rep.rank_m,
        "rank_r": rep.rank_r,
        "quotient_dim": rep.quotient_dim,
        "quotient_rank_m": rep.quotient_rank_m,
        "borderline": rep.borderline,
    }
    if rep.witness is not None:
        out["witness"] = rep.witness
        out["witness_norms"] = rep.witness_norms
        out["witness_contract"] = witness_contract(rep, Lm, Lr)
    if rep.equivalences is not None:
        out["equivalences"] = rep.equivalences
    return out


def synthesis(model, ranks: dict, comparisons: list) -> dict:
    """Top-level verdict: equal ranks, monotone comparison, or a violation."""
    vals = [ranks[m] for m in sorted(ranks)]
    if len(set(vals)) <= 1:
        verdict = "locally equivalent"
    elif all(a <= b for a, b in zip(vals, vals[1:])):
        verdict = "monotone"
    else:
        verdict = "non-monotone"
    strict = [c["depths"] for c in comparisons if c["verdict"] == "strict-loss"]
    return {"verdict": verdict, "regime": model.regime, "strict_loss_pairs": strict}


def estimation_entry(cfg: AnalysisConfig, m_star: Optional[int]) -> dict:
    est = cfg.estimation
    model = cfg.model
    gamma = est.gamma if est.gamma is not None else oracle_gap(model, model.theta0, cfg.T, est.M)
    run = estimate_minimal_window(model, model.theta0, cfg.T, est.M, gamma, est.n, est.delta,
                                  est.seeds, est.seed_policy)
    counts: dict = {}
    for v in run.estimates.values():
        counts[v] = counts.get(v, 0) + 1
    return {
        "n": est.n, "delta": est.delta, "M": est.M, "seed_policy": est.seed_policy,
        "gamma": gamma, "gamma_source": "config" if est.gamma is not None else "analytic gap / 2",
        "seeds": list(est.seeds),
        "estimates": {str(s): v for s, v in sorted(run.estimates.items())},
        "sigma_p": {str(s): run.sigmas[s] for s in sorted(run.sigmas)},
        "counts": dict(sorted(counts.items())),
        "failures": {str(s): msg for s, msg in sorted(run.failures.items())},
        "analytic_m_star": m_star,
        "hits": run.hits(m_star) if m_star is not None else None,
    }


def run_analysis(cfg: AnalysisConfig, estimate: Optional[bool] = None) -> dict:
    """Build the full report; ``estimate`` overrides whether the estimation section runs."""
    model = cfg.model
    T = cfg.T
    theta0 = model.theta0
    report: dict = {
        "tool": {"name": "quiver_vlmc", "version": __version__},
        "tolerances": tolerances(cfg),
        "model": {"name": model.name, "regime": model.regime, "depth": model.depth, "dim": model.dim,
                  "theta0": theta0, "box": model.box_array()},
        "tangent_block": T.basis.T,
        "regime_checks": regime_checks(model),
    }
    Ls = {m: restricted_jacobian(model, theta0, m, T) for m in cfg.depths}
    edge_law = model.regime == EDGE_HOMOGENEOUS or report["regime_checks"]["edge_homogeneous"]["holds"]
    report["depths"] = {m: depth_entry(cfg, m, Ls[m], edge_law) for m in cfg.depths}
    comps = [comparison_entry(cfg, Ls[m], Ls[r]) for m, r in itertools.combinations(cfg.depths, 2)]
    report["comparisons"] = comps
    ranks = {m: report["depths"][m]["rank"] for m in cfg.depths}
    report["synthesis"] = synthesis(model, ranks, comps)

    mw = minimal_window(model, theta0, T, cfg.M_max, cfg.rank_tol)
    report["minimal_window"] = {
        "m_star": mw.m_star, "M_max": mw.M_max, "dim_T": T.p, "ranks": mw.ranks,
        "errors": mw.errors, "monotonicity_violations": mw.monotonicity_violations,
        "borderline": mw.borderline,
    }
    if model.regime == EXACT_DEPTH and model.depth >= 2:
        gv = verify_minimal_global(model, theta0, T, model.depth, cfg.families or None, cfg.rank_tol)
        report["global_certificate"] = {
            "applicable": gv.applicable, "confirmed": gv.confirmed, "m_star_scan": gv.m_star_scan,
            "reason": gv.reason,
            "families": {m: None if f is None else [[" ".join(y), a] for y, a in f] for m, f in gv.families.items()},
            "certificates": {m: None if c is None else {"certified": c.certified, "failing": c.failing,
                                                         "rank_selected": c.rank_selected,
                                                         "rank_fine": c.rank_fine, "consistent": c.consistent}
                             for m, c in gv.certificates.items()},
        }
    run_est = cfg.estimation is not None if estimate is None else estimate
    if run_est and cfg.estimation is not None:
        report["estimation"] = estimation_entry(cfg, mw.m_star)
    return _jsonable(report)


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps(report))
