"""Experiment configuration files.

A configuration is a YAML document validated against
``schema/config.schema.json`` and then cross-checked (dimensions, droop set
versus generator kinds). Bundled scenarios can be referred to by name.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .dynamics import DescriptorSystem, GeneratorKind, GeneratorParams, Trajectory, assemble_descriptor, simulate
from .errors import ConfigParseError, ConfigValidationError, InputError
from .netmodel import Laplacian, NetworkTopology, generator_laplacian

SCHEMA_VERSION = 1
SCENARIO_PACKAGE = "swingid.scenarios"
NETWORK_FILES = {"ieee39_network", "ieee39_reduced"}


@lru_cache(maxsize=None)
def config_schema() -> dict:
    text = resources.files("swingid").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def bundled_scenarios() -> list[str]:
    names = (p.name for p in resources.files(SCENARIO_PACKAGE).iterdir())
    return sorted(n[:-5] for n in names if n.endswith(".yaml") and n[:-5] not in NETWORK_FILES)


@dataclass(frozen=True)
class EstimatorSpec:
    method: str = "unconstrained"
    droop_set: tuple[int, ...] = ()
    d_max: float = math.inf


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment: network, generators, noise, sampling and estimator."""

    name: str
    laplacian: Laplacian
    params: GeneratorParams
    sigma: np.ndarray
    ts: float
    horizon: int
    seed: int
    estimator: EstimatorSpec
    delta0: np.ndarray
    omega0: np.ndarray
    source: str | None = None

    @property
    def size(self) -> int:
        return self.params.size

    def system(self) -> DescriptorSystem:
        return assemble_descriptor(self.laplacian, self.params, self.sigma, self.ts)

    def simulate(self, seed: int | None = None, steps: int | None = None) -> Trajectory:
        return simulate(
            self.system(),
            self.delta0,
            self.omega0,
            steps=self.horizon if steps is None else steps,
            seed=self.seed if seed is None else seed,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with some fields changed; a scalar ``sigma`` is broadcast."""
        if "sigma" in changes:
            sigma = np.array(changes["sigma"], dtype=float)
            changes["sigma"] = np.full(self.size, float(sigma)) if sigma.ndim == 0 else sigma
        new = dataclasses.replace(self, **changes)
        new.system()
        return new

    def resolved(self) -> dict:
        """Every setting, defaults included, as plain JSON-compatible data."""
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "network": {
                "node_labels": list(self.laplacian.node_labels),
                "laplacian": np.asarray(self.laplacian.matrix).tolist(),
            },
            "generators": [
                {"m": float(m), "d": float(d), "kind": k.value}
                for m, d, k in zip(self.params.m, self.params.d, self.params.kind)
            ],
            "sigma": self.sigma.tolist(),
            "ts": self.ts,
            "horizon": self.horizon,
            "seed": self.seed,
            "initial_state": {"delta": self.delta0.tolist(), "omega": self.omega0.tolist()},
            "estimator": {
                "method": self.estimator.method,
                "droop_set": list(self.estimator.droop_set),
                "d_max": None if math.isinf(self.estimator.d_max) else self.estimator.d_max,
            },
        }

    @property
    def fingerprint(self) -> str:
        canonical = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _read_yaml(path: Path):
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        where = f"line {line}" if line else "unknown line"
        raise ConfigParseError(f"{path}: YAML syntax error at {where}: {getattr(exc, 'problem', exc)}", line=line) from None


def _field_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _validate_schema(data, schema_ref=None, origin="config"):
    schema = config_schema()
    if schema_ref is not None:
        schema = {**schema, "$ref": schema_ref}
        for key in ("required", "properties", "additionalProperties", "type"):
            schema.pop(key, None)
    validator = jsonschema.Draft202012Validator(schema)
    error = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if error is not None:
        field = _field_path(error.absolute_path)
        raise ConfigValidationError(f"{origin}: {field}: {error.message}", field=field)


def resolve_config_path(name_or_path) -> Path:
    """Return the file for a path or for the name of a bundled scenario."""
    path = Path(name_or_path)
    if path.exists() or path.suffix in (".yaml", ".yml") or path.parent != Path("."):
        return path
    candidate = resources.files(SCENARIO_PACKAGE).joinpath(f"{name_or_path}.yaml")
    if candidate.is_file():
        return Path(str(candidate))
    return path


def load_config(name_or_path) -> ExperimentConfig:
    """Load, validate and resolve an experiment configuration."""
    path = resolve_config_path(name_or_path)
    data = _read_yaml(path)
    return config_from_dict(data, base_dir=path.parent, source=str(path))


def _load_network(spec: dict, base_dir: Path | None, origin: str) -> tuple[Laplacian, tuple[int, ...] | None]:
    if "file" in spec:
        net_path = Path(spec["file"])
        if not net_path.is_absolute() and base_dir is not None:
            net_path = base_dir / net_path
        net = _read_yaml(net_path)
        if not isinstance(net, dict) or "file" in net:
            raise ConfigValidationError(f"{net_path}: network file must hold a laplacian or topology", field="network.file")
        _validate_schema(net, "#/$defs/network", origin=str(net_path))
        return _load_network(net, net_path.parent, str(net_path))
    try:
        if "topology" in spec:
            t = spec["topology"]
            topo = NetworkTopology(t["n_buses"], t["edges"], t["generator_buses"])
            return generator_laplacian(topo), topo.generator_buses
        labels = tuple(spec.get("node_labels", ()))
        return Laplacian(np.array(spec["laplacian"], dtype=float), labels), (labels or None)
    except InputError as exc:
        raise ConfigValidationError(f"{origin}: network: {exc}", field="network") from None


def config_from_dict(data, base_dir=None, source=None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from parsed YAML data."""
    origin = source or "config"
    if not isinstance(data, dict):
        raise ConfigValidationError(f"{origin}: top level must be a mapping", field="<root>")
    _validate_schema(data, origin=origin)
    base_dir = Path(base_dir) if base_dir is not None else None

    laplacian, bus_labels = _load_network(data["network"], base_dir, origin)
    gens = data["generators"]
    n = len(gens)
    if laplacian.size != n:
        raise ConfigValidationError(
            f"{origin}: generators: {n} generators but the network Laplacian is {laplacian.size}x{laplacian.size}",
            field="generators",
        )
    for i, g in enumerate(gens):
        if "bus" in g and bus_labels is not None and g["bus"] != bus_labels[i]:
            raise ConfigValidationError(
                f"{origin}: generators[{i}].bus: {g['bus']} does not match network node {bus_labels[i]}",
                field=f"generators[{i}].bus",
            )

    m = [float(g["m"]) for g in gens]
    d = [float(g["d"]) for g in gens]
    kinds = [g.get("kind", GeneratorKind.DROOP.value if g["m"] == 0 else GeneratorKind.SYNCHRONOUS.value) for g in gens]
    for i, (mi, ki) in enumerate(zip(m, kinds)):
        if (mi == 0) != (ki == GeneratorKind.DROOP.value):
            raise ConfigValidationError(
                f"{origin}: generators[{i}].m: m={mi} is inconsistent with kind={ki} (m is zero exactly for droop)",
                field=f"generators[{i}].m",
            )
    params = GeneratorParams(m, d, kinds)

    sigma = np.array(data["sigma"], dtype=float)
    if sigma.ndim == 0:
        sigma = np.full(n, float(sigma))
    elif sigma.shape != (n,):
        raise ConfigValidationError(f"{origin}: sigma: expected {n} values, got {sigma.size}", field="sigma")

    init = data.get("initial_state") or {}
    vectors = {}
    for key in ("delta", "delta_deg", "omega"):
        if key in init:
            vec = np.array(init[key], dtype=float)
            if vec.shape != (n,):
                raise ConfigValidationError(
                    f"{origin}: initial_state.{key}: expected {n} values, got {vec.size}", field=f"initial_state.{key}"
                )
            vectors[key] = vec
    delta0 = vectors.get("delta", np.deg2rad(vectors["delta_deg"]) if "delta_deg" in vectors else np.zeros(n))
    omega0 = vectors.get("omega", np.zeros(n))

    est = data.get("estimator") or {}
    droop_nodes = params.droop_nodes
    droop_set = tuple(sorted(est.get("droop_set", droop_nodes)))
    if any(i > n for i in droop_set):
        raise ConfigValidationError(f"{origin}: estimator.droop_set: nodes must lie in 1..{n}", field="estimator.droop_set")
    if set(droop_set) != set(droop_nodes):
        raise ConfigValidationError(
            f"{origin}: estimator.droop_set: {list(droop_set)} differs from the droop generators {list(droop_nodes)}",
            field="estimator.droop_set",
        )
    d_max = est.get("d_max")
    spec = EstimatorSpec(
        method=est.get("method", "unconstrained").replace("-", "_"),
        droop_set=droop_set,
        d_max=math.inf if d_max is None else float(d_max),
    )

    name = data.get("name") or (Path(source).stem if source else "config")
    return ExperimentConfig(
        name=name,
        laplacian=laplacian,
        params=params,
        sigma=sigma,
        ts=float(data["ts"]),
        horizon=int(data["horizon"]),
        seed=int(data.get("seed", 0)),
        estimator=spec,
        delta0=delta0,
        omega0=omega0,
        source=source,
    )
