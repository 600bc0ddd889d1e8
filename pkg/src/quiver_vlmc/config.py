"""YAML analysis configuration.

A config has a required ``model`` section and optional ``analysis``,
``estimation`` and ``output`` entries::

    model:
      name: branching
      quiver:
        vertices: ["0", "1", "2", "3"]
        edges: [[b, "0", "1"], [c, "2", "1"], [a, "1", "3"], [d, "3", "0"], [e, "3", "2"]]
      regime: exact_depth          # or edge_homogeneous
      depth: 2
      theta0: [0.2, 0.8]
      box: [[0.01, 0.99], [0.01, 0.99]]   # optional
      rows:
        "b a": {d: p0, e: 1 - p0}
        "c a": {d: p1, e: 1 - p1}
        "a d": {b: 1}
      forced_zeros: []             # optional list of [context, edge]
    analysis:
      tangent_block: [[1, 0], [0, 1]]   # basis vectors; omit for R^d
      depths: [1, 2, 3]
      M_max: 3
      rank_tol: 1.0e-8
      fd_step: 1.0e-5
      families: {1: [[a, d]]}          # optional selected coordinates
    estimation:
      n: 200000
      delta: 0.05
      gamma: null                      # null: half the analytic gap
      seeds: 20                        # count, or explicit list
      M: 3
      seed_policy: crn                 # or independent
    output: report.json

Unknown keys are rejected. Contexts are written as space-separated edge ids
(or concatenated when every id is one character).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .errors import ConfigError, InputError
from .model import EDGE_HOMOGENEOUS, EXACT_DEPTH, ParamModel
from .quiver import Quiver, word_from_string
from .rank import FD_STEP, RANK_TOL, TangentBlock
from .simulate import SEED_POLICIES

_MODEL_KEYS = {"name", "quiver", "regime", "depth", "theta0", "box", "rows", "forced_zeros"}
_QUIVER_KEYS = {"vertices", "edges"}
_ANALYSIS_KEYS = {"tangent_block", "depths", "M_max", "rank_tol", "fd_step", "families"}
_ESTIMATION_KEYS = {"n", "delta", "gamma", "seeds", "M", "seed_policy"}
_TOP_KEYS = {"model", "analysis", "estimation", "output"}


@dataclass
class EstimationConfig:
    n: int = 200_000
    delta: float = 0.05
    gamma: Optional[float] = None
    seeds: Tuple[int, ...] = tuple(range(20))
    M: int = 3
    seed_policy: str = "crn"


@dataclass
class AnalysisConfig:
    model: ParamModel
    tangent_block: Optional[TangentBlock] = None
    depths: Tuple[int, ...] = (1, 2, 3)
    M_max: int = 3
    rank_tol: float = RANK_TOL
    fd_step: float = FD_STEP
    families: Dict[int, list] = field(default_factory=dict)
    estimation: Optional[EstimationConfig] = None
    output: Optional[str] = None
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def T(self) -> TangentBlock:
        return self.tangent_block if self.tangent_block is not None else TangentBlock.full(self.model.dim)


def _check_keys(section: Any, allowed: set, where: str) -> dict:
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(map(str, section)) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return section


def _number(x, where: str) -> float:
    # PyYAML reads "1e-8" (no dot) as a string
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number, got {x!r}") from None


def _integer(x, where: str, minimum: int = 0) -> int:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ConfigError(f"{where} must be an integer, got {x!r}")
    try:
        v = float(x)
    except ValueError:
        raise ConfigError(f"{where} must be an integer, got {x!r}") from None
    if v != int(v) or v < minimum:
        raise ConfigError(f"{where} must be an integer >= {minimum}, got {x!r}")
    return int(v)


def _quiver(sec) -> Quiver:
    sec = _check_keys(sec, _QUIVER_KEYS, "model.quiver")
    if "vertices" not in sec or "edges" not in sec:
        raise ConfigError("model.quiver needs 'vertices' and 'edges'")
    vertices = tuple(str(v) for v in sec["vertices"])
    edges = sec["edges"]
    if isinstance(edges, dict):
        edges = [[k, *v] for k, v in edges.items()]
    out = []
    for e in edges:
        if not isinstance(e, (list, tuple)) or len(e) != 3:
            raise ConfigError(f"quiver edge {e!r} must be [id, source, target]")
        out.append(tuple(str(x) for x in e))
    return Quiver(vertices, tuple(out))


def _word(q: Quiver, text, where: str):
    if isinstance(text, (list, tuple)):
        text = " ".join(map(str, text))
    try:
        return word_from_string(q, str(text))
    except InputError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _expr_text(x, where: str):
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ConfigError(f"{where} must be a number or expression string, got {x!r}")
    return x


def build_model(sec) -> ParamModel:
    sec = _check_keys(sec, _MODEL_KEYS, "model")
    for key in ("quiver", "regime", "theta0", "rows"):
        if key not in sec:
            raise ConfigError(f"model section is missing {key!r}")
    q = _quiver(sec["quiver"])
    regime = str(sec["regime"])
    if regime not in (EXACT_DEPTH, EDGE_HOMOGENEOUS):
        raise ConfigError(f"model.regime must be {EXACT_DEPTH!r} or {EDGE_HOMOGENEOUS!r}, got {regime!r}")
    depth = _integer(sec.get("depth", 1), "model.depth", 1)
    theta0 = [_number(x, "model.theta0") for x in (sec["theta0"] or [])]
    if not isinstance(sec["rows"], dict):
        raise ConfigError("model.rows must map contexts to rows")
    rows = {}
    for ctx, row in sec["rows"].items():
        where = f"model.rows[{ctx!r}]"
        if not isinstance(row, dict):
            raise ConfigError(f"{where} must map edge ids to expressions")
        w = _word(q, ctx, where)
        for a in row:
            if not q.has_edge(str(a)):
                raise ConfigError(f"{where}: unknown edge id {a!r}")
        rows[w] = {str(a): _expr_text(v, f"{where}[{a!r}]") for a, v in row.items()}
    zeros = []
    for z in sec.get("forced_zeros") or []:
        if not isinstance(z, (list, tuple)) or len(z) != 2:
            raise ConfigError(f"forced zero {z!r} must be [context, edge]")
        if not q.has_edge(str(z[1])):
            raise ConfigError(f"forced zero {z!r}: unknown edge id {z[1]!r}")
        zeros.append((_word(q, z[0], "model.forced_zeros"), str(z[1])))
    box = None
    if sec.get("box") is not None:
        box = np.array([[_number(x, "model.box") for x in b] for b in sec["box"]], dtype=float)
    try:
        return ParamModel(q, regime, depth, rows, theta0, box=box, forced_zeros=zeros,
                          name=str(sec.get("name", "model")))
    except InputError as exc:
        raise ConfigError(f"model: {exc}") from None


def _analysis(sec, model: ParamModel) -> dict:
    sec = _check_keys(sec, _ANALYSIS_KEYS, "analysis")
    out: Dict[str, Any] = {}
    if sec.get("tangent_block") is not None:
        vecs = [[_number(x, "analysis.tangent_block") for x in v] for v in sec["tangent_block"]]
        if any(len(v) != model.dim for v in vecs):
            raise ConfigError(f"analysis.tangent_block vectors must have length {model.dim}")
        try:
            out["tangent_block"] = TangentBlock(np.array(vecs, dtype=float).T.reshape(model.dim, len(vecs)))
        except InputError as exc:
            raise ConfigError(f"analysis.tangent_block: {exc}") from None
    if "depths" in sec:
        depths = sorted({_integer(m, "analysis.depths", 1) for m in sec["depths"]})
        if not depths:
            raise ConfigError("analysis.depths must be nonempty")
        out["depths"] = tuple(depths)
    if "M_max" in sec:
        out["M_max"] = _integer(sec["M_max"], "analysis.M_max", 1)
    for key in ("rank_tol", "fd_step"):
        if key in sec:
            v = _number(sec[key], f"analysis.{key}")
            if v <= 0:
                raise ConfigError(f"analysis.{key} must be positive")
            out[key] = v
    if sec.get("families"):
        fams = {}
        for m, pairs in sec["families"].items():
            m = _integer(m, "analysis.families depth", 1)
            fam = []
            for p in pairs:
                if not isinstance(p, (list, tuple)) or len(p) != 2:
                    raise ConfigError(f"family entry {p!r} must be [context, edge]")
                fam.append((_word(model.quiver, p[0], "analysis.families"), str(p[1])))
            fams[m] = fam
        out["families"] = fams
    return out


def _estimation(sec) -> Optional[EstimationConfig]:
    if sec is None:
        return None
    sec = _check_keys(sec, _ESTIMATION_KEYS, "estimation")
    est = EstimationConfig()
    if "n" in sec:
        est.n = _integer(sec["n"], "estimation.n", 1)
    if "delta" in sec:
        est.delta = _number(sec["delta"], "estimation.delta")
        if est.delta <= 0:
            raise ConfigError("estimation.delta must be positive")
    if sec.get("gamma") is not None:
        est.gamma = _number(sec["gamma"], "estimation.gamma")
    if "seeds" in sec:
        s = sec["seeds"]
        if isinstance(s, list):
            est.seeds = tuple(_integer(x, "estimation.seeds", 0) for x in s)
        else:
            est.seeds = tuple(range(_integer(s, "estimation.seeds", 1)))
    if "M" in sec:
        est.M = _integer(sec["M"], "estimation.M", 1)
    if "seed_policy" in sec:
        pol = str(sec["seed_policy"])
        if pol not in SEED_POLICIES:
            raise ConfigError(f"estimation.seed_policy must be one of {SEED_POLICIES}")
        est.seed_policy = pol
    return est


def parse_config(data: Any) -> AnalysisConfig:
    data = _check_keys(data, _TOP_KEYS, "config")
    if "model" not in data:
        raise ConfigError("config has no 'model' section")
    model = build_model(data["model"])
    cfg = AnalysisConfig(model=model, **_analysis(data.get("analysis"), model),
                         estimation=_estimation(data.get("estimation")), raw=data)
    if data.get("output") is not None:
        cfg.output = str(data["output"])
    return cfg


def load_config(path) -> AnalysisConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {str(path)!r} is not valid YAML: {exc}") from None
    return parse_config(data)


def model_section(model: ParamModel) -> dict:
    """Inverse of :func:`build_model` for emitting configs."""
    return {
        "name": model.name,
        "quiver": {"vertices": list(model.quiver.vertices), "edges": [list(e) for e in model.quiver.edges]},
        "regime": model.regime,
        "depth": model.depth,
        "theta0": [float(x) for x in model.theta0],
        "box": [[float(lo), float(hi)] for lo, hi in zip(*model.box)],
        "rows": {" ".join(ctx): {a: str(ex) for a, ex in row} for ctx, row in model.rows.items()},
        "forced_zeros": [[" ".join(c), a] for c, a in sorted(model.declared_zeros)],
    }


def dump_config(data: dict) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)
