"""Experiment configuration: TOML documents (or a JSON run manifest) to typed settings.

Layout (all sections optional except where a kind needs them)::

    kind = "verify-rn"        # simulate | kernel | verify-wang | verify-rlsi
                              # verify-rn | convergence | sweep
    seed = 42

    [diffusion]
    type = "standard"         # or "drift"
    dims = 1
    drift = "tanh"            # catalog name, or an inline table (see drift_from_dict)
    noise_scale = 1.0

    [grid]                    # parameter grids, each a non-empty list
    t = [1.0]
    q = [1.5, 2.0]
    alpha = [2.0]
    functions = ["rational"]
    points = [[0.0, 0.0]]     # (p..., xi...)
    pairs = [[[1.0, 0.0], [0.0, 0.0]]]
    shifts = [{h = [0.0], k = [1.0]}]
    styles = ["ex315"]
    ranks = [2, 4, 8]

    [method]
    name = "quadrature"       # or "mc"
    n = 100000
    steps = 64

    [oracle]                  # verify-rn: Monte Carlo check of the exact norm
    n = 1000000

    [simulate]
    sampler = "exact"         # exact terminal draws, or "path"
    t = 1.0
    start = [0.0, 0.0]
    n = 1000
    T = 1.0
    steps = 100
    replicates = 1
    n_coords = 1

    [convergence]
    target = "standard"       # generalized | sequence
    T = 1.0
    steps = 100
    replicates = 100

    [output]
    dir = "out"
    name = "report"
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import drift as drift_mod
from .bounds import STYLES
from .testfunctions import REGISTRY

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

KINDS = ("simulate", "kernel", "verify-wang", "verify-rlsi", "verify-rn", "convergence", "sweep")
SEED_ENV = "KOLMOQI_SEED"


class ConfigError(ValueError):
    pass


def load_document(path: str | Path) -> dict:
    """Read a TOML config, or the ``config`` echo inside a JSON run manifest."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return doc.get("config", doc)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _get(doc: dict, dotted: str, default=None):
    cur = doc
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def _num(doc, dotted, default=None, *, positive=False, integer=False):
    v = _get(doc, dotted, default)
    if v is None:
        raise ConfigError(f"field '{dotted}': required")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{dotted}': expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"field '{dotted}': expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"field '{dotted}': must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _list(doc, dotted, default=None) -> list:
    v = _get(doc, dotted, default)
    if v is None:
        raise ConfigError(f"field '{dotted}': required")
    if not isinstance(v, list):
        raise ConfigError(f"field '{dotted}': expected a list")
    if not v:
        raise ConfigError(f"field '{dotted}': empty parameter grid")
    return v


def _num_list(doc, dotted, default=None, *, gt=None) -> list[float]:
    out = []
    for i, v in enumerate(_list(doc, dotted, default)):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"field '{dotted}[{i}]': expected a number, got {v!r}")
        if gt is not None and not v > gt:
            raise ConfigError(f"field '{dotted}[{i}]': must exceed {gt}, got {v!r}")
        out.append(float(v))
    return out


def _vector(v, where: str) -> list[float]:
    if not isinstance(v, list) or not v or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
        raise ConfigError(f"field '{where}': expected a non-empty list of numbers")
    return [float(a) for a in v]


def drift_from_dict(d, where: str = "diffusion.drift", dims: int = 8) -> drift_mod.DriftSpec:
    """Catalog name, or ``{kind, components = [{indices, profile, ...params, m?, M?}]}``."""
    if isinstance(d, str):
        cat = drift_mod.builtin_drifts(max(dims, 3))
        if d not in cat:
            raise ConfigError(f"field '{where}': unknown drift {d!r}; catalog: {sorted(cat)}")
        return cat[d]
    if not isinstance(d, dict):
        raise ConfigError(f"field '{where}': expected a catalog name or a table")
    comps = []
    for j, c in enumerate(_list(d, "components")):
        w = f"{where}.components[{j}]"
        if not isinstance(c, dict):
            raise ConfigError(f"field '{w}': expected a table")
        name = c.get("profile", "linear")
        cls = drift_mod.PROFILES.get(name)
        if cls is None:
            raise ConfigError(f"field '{w}.profile': unknown profile {name!r}")
        params = {k: v for k, v in c.items() if k not in ("profile", "indices", "m", "M")}
        try:
            prof = cls(**params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field '{w}': {exc}") from None
        idx = c.get("indices")
        if not isinstance(idx, list) or not idx or not all(isinstance(i, int) and i >= 1 for i in idx):
            raise ConfigError(f"field '{w}.indices': expected a non-empty list of positive integers")
        lo, hi = prof.slope_bounds()
        comps.append(drift_mod.DriftComponent(tuple(idx), prof, float(c.get("m", lo)), float(c.get("M", hi))))
    try:
        return drift_mod.DriftSpec(
            tuple(comps),
            kind=d.get("kind", "finite"),
            coefficient_decay=d.get("coefficient_decay"),
            label=d.get("label", "custom"),
        )
    except ValueError as exc:
        raise ConfigError(f"field '{where}': {exc}") from None


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    doc: dict
    workers: int = 1
    diffusion: object = None  # None (standard) or DriftSpec
    dims: int = 1
    noise_scale: float = 1.0
    out_dir: str = "."
    name: str = ""
    children: list = field(default_factory=list)


def resolve_seed(doc: dict, flag: int | None, env: dict) -> int:
    if flag is not None:
        seed = flag
    elif env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"environment {SEED_ENV}: not an integer") from None
    else:
        seed = doc.get("seed")
        if seed is None:
            raise ConfigError("field 'seed': required (no wall-clock seeding)")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"field 'seed': expected an integer in [0, 2^64), got {seed!r}")
    return seed


def parse(doc: dict, kind: str | None = None, seed: int | None = None, env: dict | None = None) -> ExperimentConfig:
    """Validate a config document; ``kind`` comes from the subcommand when given."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a table")
    doc_kind = doc.get("kind")
    if kind is None or kind == "run":
        kind = doc_kind
    elif doc_kind is not None and doc_kind != kind:
        raise ConfigError(f"field 'kind': config says {doc_kind!r} but the subcommand is {kind!r}")
    if kind not in KINDS:
        raise ConfigError(f"field 'kind': expected one of {KINDS}, got {kind!r}")
    s = resolve_seed(doc, seed, env or {})
    cfg = ExperimentConfig(kind=kind, seed=s, doc=doc)
    cfg.workers = _num(doc, "workers", 1, positive=True, integer=True)
    cfg.out_dir = str(_get(doc, "output.dir", "."))
    cfg.name = str(_get(doc, "output.name", kind))
    dtype = _get(doc, "diffusion.type", "standard")
    cfg.dims = _num(doc, "diffusion.dims", 1, positive=True, integer=True)
    cfg.noise_scale = _num(doc, "diffusion.noise_scale", 1.0, positive=True)
    if dtype == "drift":
        cfg.diffusion = drift_from_dict(_get(doc, "diffusion.drift"), dims=cfg.dims)
    elif dtype != "standard":
        raise ConfigError(f"field 'diffusion.type': expected 'standard' or 'drift', got {dtype!r}")
    _validate_kind(cfg)
    return cfg


def _validate_kind(cfg: ExperimentConfig):
    doc, k = cfg.doc, cfg.kind
    if k == "sweep":
        exps = _list(doc, "experiments")
        for i, sub in enumerate(exps):
            if not isinstance(sub, dict):
                raise ConfigError(f"field 'experiments[{i}]': expected a table")
            child = dict(sub)
            child.setdefault("workers", cfg.workers)
            child["seed"] = cfg.seed
            try:
                c = parse(child, None, cfg.seed)
            except ConfigError as exc:
                raise ConfigError(f"experiments[{i}]: {exc}") from None
            if c.kind == "sweep":
                raise ConfigError(f"field 'experiments[{i}].kind': sweeps do not nest")
            c.out_dir = cfg.out_dir
            c.name = str(_get(sub, "output.name", f"{cfg.name}_{i}_{c.kind}"))
            cfg.children.append(c)
        return
    if k in ("verify-wang", "verify-rlsi"):
        for i, f in enumerate(_list(doc, "grid.functions")):
            if f not in REGISTRY:
                raise ConfigError(f"field 'grid.functions[{i}]': unknown function {f!r}")
        _num_list(doc, "grid.t", gt=0)
        method = _get(doc, "method.name", "quadrature")
        if method not in ("quadrature", "mc"):
            raise ConfigError(f"field 'method.name': expected 'quadrature' or 'mc', got {method!r}")
        if method == "quadrature" and cfg.diffusion is not None:
            raise ConfigError("field 'method.name': quadrature needs the standard diffusion")
        _num(doc, "method.n", 100_000, positive=True, integer=True)
        _num(doc, "method.steps", 64, positive=True, integer=True)
    if k == "verify-wang":
        _num_list(doc, "grid.alpha", gt=1)
        for i, pr in enumerate(_list(doc, "grid.pairs")):
            if not isinstance(pr, list) or len(pr) != 2:
                raise ConfigError(f"field 'grid.pairs[{i}]': expected [x, x']")
            for j in range(2):
                _check_point(cfg, pr[j], f"grid.pairs[{i}][{j}]")
    if k == "verify-rlsi":
        for i, pt in enumerate(_list(doc, "grid.points")):
            _check_point(cfg, pt, f"grid.points[{i}]")
    if k == "verify-rn":
        _num_list(doc, "grid.q", gt=1)
        _num_list(doc, "grid.t", gt=0)
        for i, st in enumerate(_list(doc, "grid.styles")):
            if st not in STYLES:
                raise ConfigError(f"field 'grid.styles[{i}]': unknown style {st!r}; choose from {STYLES}")
        for i, sh in enumerate(_list(doc, "grid.shifts")):
            if not isinstance(sh, dict):
                raise ConfigError(f"field 'grid.shifts[{i}]': expected a table {{h = [...], k = [...]}}")
            _vector(sh.get("h", [0.0]), f"grid.shifts[{i}].h")
            _vector(sh.get("k", [0.0]), f"grid.shifts[{i}].k")
        _num(doc, "oracle.n", 0, integer=True)
    if k == "kernel":
        _num_list(doc, "grid.t", gt=0)
        for i, pt in enumerate(_list(doc, "grid.points")):
            _check_point(cfg, pt, f"grid.points[{i}]")
        if cfg.diffusion is not None:
            raise ConfigError("field 'diffusion.type': the kernel is known for the standard diffusion only")
    if k == "simulate":
        sampler = _get(doc, "simulate.sampler", "exact")
        if sampler == "exact":
            if cfg.diffusion is not None:
                raise ConfigError("field 'simulate.sampler': exact sampling needs the standard diffusion")
            _num(doc, "simulate.t", 1.0, positive=True)
            _num(doc, "simulate.n", 1000, positive=True, integer=True)
            _check_point(cfg, _get(doc, "simulate.start", [0.0] * (2 * cfg.dims)), "simulate.start")
        elif sampler == "path":
            _num(doc, "simulate.T", 1.0, positive=True)
            _num(doc, "simulate.steps", 100, positive=True, integer=True)
            _num(doc, "simulate.replicates", 1, positive=True, integer=True)
            _num(doc, "simulate.n_coords", cfg.dims, positive=True, integer=True)
        else:
            raise ConfigError(f"field 'simulate.sampler': expected 'exact' or 'path', got {sampler!r}")
    if k == "convergence":
        ranks = _list(doc, "grid.ranks")
        if not all(isinstance(r, int) and r >= 1 for r in ranks):
            raise ConfigError("field 'grid.ranks': expected positive integers")
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise ConfigError("field 'grid.ranks': must be strictly increasing")
        target = _get(doc, "convergence.target", "standard")
        if target not in ("standard", "generalized", "sequence"):
            raise ConfigError(f"field 'convergence.target': unknown target {target!r}")
        if target != "standard" and cfg.diffusion is None:
            raise ConfigError(f"field 'diffusion': target {target!r} needs a drift")
        _num(doc, "convergence.T", 1.0, positive=True)
        _num(doc, "convergence.steps", 100, positive=True, integer=True)
        _num(doc, "convergence.replicates", 100, positive=True, integer=True)


def _check_point(cfg: ExperimentConfig, pt, where: str):
    v = _vector(pt, where)
    r = cfg.diffusion.r if cfg.diffusion is not None else cfg.dims
    if len(v) != cfg.dims + r:
        raise ConfigError(f"field '{where}': expected {cfg.dims + r} entries (p..., xi...), got {len(v)}")
    return v
