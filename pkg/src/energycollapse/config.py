"""YAML run configuration.

A run is one document::

    model: asymptotic          # or finite_time
    sigma: 1.0
    t_end: 23.3                # asymptotic only; finite_time uses T
    steps: 4096
    n_paths: 10000
    master_seed: 20240501
    spectrum:
      - {energy: -1.0, multiplicity: 1}
      - {energy: 0.0}
    psi0:                      # (re, im) per basis vector
      - [0.7071067811865476, 0.0]
      - [0.0, 0.7071067811865476]
    observable: [0.0, 1.0]     # optional diagonal of G
    outputs: [trajectories, summary, verify]
    output_times: [0.0, 1.0, 2.0]   # optional
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .closedform import Asymptotic, FiniteTime, ModelKind
from .noise import PathGrid, SeedPolicy
from .spectrum import InitialState, Spectrum

OUTPUT_KINDS = ("trajectories", "summary", "verify")
_KNOWN = {
    "model", "sigma", "T", "t_end", "steps", "n_paths", "master_seed", "spectrum", "psi0",
    "observable", "outputs", "output_times", "trajectory_paths", "convergence", "timechange",
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field and line."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    sigma: float
    steps: int
    n_paths: int
    master_seed: int
    energies: tuple
    multiplicities: tuple
    psi0: tuple  # complex amplitudes
    T: Optional[float] = None
    t_end: Optional[float] = None
    observable: Optional[tuple] = None
    outputs: tuple = ("summary",)
    output_times: Optional[tuple] = None
    trajectory_paths: int = 10  # paths written to the trajectory CSV
    convergence: dict = field(default_factory=dict)
    timechange: dict = field(default_factory=dict)

    @property
    def horizon(self) -> float:
        return self.T if self.model == "finite_time" else self.t_end

    def model_kind(self) -> ModelKind:
        if self.model == "finite_time":
            return FiniteTime(self.sigma, self.T)
        return Asymptotic(self.sigma)

    def spectrum(self) -> Spectrum:
        return Spectrum(self.energies, self.multiplicities)

    def initial_state(self) -> InitialState:
        return InitialState(np.array(self.psi0, dtype=complex))

    def grid(self) -> PathGrid:
        return PathGrid(self.horizon, self.steps)

    def seed_policy(self) -> SeedPolicy:
        return SeedPolicy(self.master_seed)

    def with_overrides(self, seed: Optional[int] = None, paths: Optional[int] = None) -> "RunConfig":
        out = self
        if seed is not None:
            out = replace(out, master_seed=int(seed))
        if paths is not None:
            if paths < 1:
                raise ConfigError("--paths must be >= 1")
            out = replace(out, n_paths=int(paths))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["psi0"] = [[a.real, a.imag] for a in self.psi0]
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (seed included)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}
    mapping["__lines__"] = lines
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _fail(doc, key, msg, source):
    line = doc.get("__lines__", {}).get(key) if isinstance(doc, dict) else None
    where = f"{source}:{line}" if line else source
    raise ConfigError(f"{where}: field '{key}': {msg}")


def _number(doc, key, source, kind=float, required=True):
    if key not in doc:
        if required:
            _fail(doc, key, "missing", source)
        return None
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(doc, key, f"expected a number, got {v!r}", source)
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            _fail(doc, key, f"expected an integer, got {v!r}", source)
        return int(v)
    if not np.isfinite(v):
        _fail(doc, key, "must be finite", source)
    return float(v)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: expected a mapping at top level")

    unknown = sorted(k for k in doc if not k.startswith("__") and k not in _KNOWN)
    if unknown:
        _fail(doc, unknown[0], "unknown field", source)

    model = doc.get("model")
    if model not in ("asymptotic", "finite_time"):
        _fail(doc, "model", f"must be 'asymptotic' or 'finite_time', got {model!r}", source)
    sigma = _number(doc, "sigma", source)
    if sigma <= 0:
        _fail(doc, "sigma", "must be positive", source)
    T = t_end = None
    if model == "finite_time":
        if "t_end" in doc:
            _fail(doc, "t_end", "not allowed for the finite_time model (use T)", source)
        T = _number(doc, "T", source)
        if T <= 0:
            _fail(doc, "T", "must be positive", source)
    else:
        if "T" in doc:
            _fail(doc, "T", "not allowed for the asymptotic model (use t_end)", source)
        t_end = _number(doc, "t_end", source)
        if t_end <= 0:
            _fail(doc, "t_end", "must be positive", source)
    steps = _number(doc, "steps", source, int)
    if steps < 2:
        _fail(doc, "steps", "must be >= 2", source)
    n_paths = _number(doc, "n_paths", source, int)
    if n_paths < 1:
        _fail(doc, "n_paths", "must be >= 1", source)
    seed = _number(doc, "master_seed", source, int)
    if not 0 <= seed < 2**64:
        _fail(doc, "master_seed", "must be a 64-bit unsigned integer", source)

    levels = doc.get("spectrum")
    if not isinstance(levels, list) or not levels:
        _fail(doc, "spectrum", "must be a non-empty list of levels", source)
    energies, mults = [], []
    for lvl in levels:
        if not isinstance(lvl, dict):
            _fail(doc, "spectrum", f"level entries must be mappings, got {lvl!r}", source)
        energies.append(_number(lvl, "energy", source))
        m = _number(lvl, "multiplicity", source, int, required=False)
        mults.append(1 if m is None else m)

    amps = doc.get("psi0")
    if not isinstance(amps, list) or not amps:
        _fail(doc, "psi0", "must be a list of [re, im] pairs", source)
    psi0 = []
    for a in amps:
        if (not isinstance(a, list) or len(a) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in a)):
            _fail(doc, "psi0", f"entries must be [re, im] pairs, got {a!r}", source)
        psi0.append(complex(a[0], a[1]))

    observable = doc.get("observable")
    if observable is not None:
        if not isinstance(observable, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in observable):
            _fail(doc, "observable", "must be a list of real numbers", source)
        observable = tuple(float(x) for x in observable)

    outputs = doc.get("outputs", ["summary"])
    if not isinstance(outputs, list) or any(o not in OUTPUT_KINDS for o in outputs):
        _fail(doc, "outputs", f"entries must be among {OUTPUT_KINDS}", source)

    output_times = doc.get("output_times")
    if output_times is not None:
        if not isinstance(output_times, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in output_times):
            _fail(doc, "output_times", "must be a list of times", source)
        horizon = T if T is not None else t_end
        if any(x < 0 or x > horizon for x in output_times):
            _fail(doc, "output_times", f"times must lie in [0, {horizon}]", source)
        output_times = tuple(float(x) for x in output_times)

    traj_paths = _number(doc, "trajectory_paths", source, int, required=False)
    extra = {}
    for key in ("convergence", "timechange"):
        sect = doc.get(key, {})
        if not isinstance(sect, dict):
            _fail(doc, key, "must be a mapping", source)
        extra[key] = {k: v for k, v in sect.items() if not k.startswith("__")}

    cfg = RunConfig(
        model=model, sigma=sigma, steps=steps, n_paths=n_paths, master_seed=seed,
        energies=tuple(energies), multiplicities=tuple(mults), psi0=tuple(psi0),
        T=T, t_end=t_end, observable=observable, outputs=tuple(outputs), output_times=output_times,
        trajectory_paths=10 if traj_paths is None else traj_paths, **extra,
    )
    # semantic checks that need the assembled objects
    try:
        spec = cfg.spectrum()
    except ValueError as exc:
        _fail(doc, "spectrum", str(exc), source)
    if len(psi0) != spec.dimension:
        _fail(doc, "psi0", f"has {len(psi0)} amplitudes, spectrum dimension is {spec.dimension}", source)
    try:
        cfg.initial_state()
    except ValueError as exc:
        _fail(doc, "psi0", str(exc), source)
    if observable is not None and len(observable) != spec.dimension:
        _fail(doc, "observable", f"needs {spec.dimension} entries", source)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
