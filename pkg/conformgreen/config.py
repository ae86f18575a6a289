"""Experiment files.

An experiment is a YAML document with the sections ``domain``, ``metric``,
``configuration`` and ``run``, for example::

    domain:
      curve: disk            # or {kind: wavy, amplitude: 0.1, mode: 3}, or {fourier: [...]}
      target_h: 0.05
      refine: 0
    metric:
      psi: "1 + 0.3*x"       # or psi_csv: psi.csv
    configuration:
      interior: [[0.3, 0.0]]
      boundary: []
      sigmas: [1.0]
      h: {kind: zero}
    run:
      seed: 0
      starts: 8

Only ``domain`` is required; the other sections have defaults.
"""
import logging
import types
import typing as T
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError, ConformGreenError
from .fem import ConformalMetric, ScalarField
from .interaction import Configuration, LogPotential, ZeroPotential
from .mesh import DOMAINS, BoundaryCurve, Mesh, build_domain


logger = logging.getLogger(__name__)


SECTIONS = {
    "domain": {"curve", "target_h", "refine", "mesh_file"},
    "metric": {"psi", "psi_csv"},
    "configuration": {"interior", "boundary", "sigmas", "h"},
    "run": {"seed", "starts", "gtol", "dedup_radius", "hessian_step", "robin_step_factor", "workers"},
}

RUN_DEFAULTS = {
    "seed": 0,
    "starts": 8,
    "gtol": None,
    "dedup_radius": None,
    "hessian_step": None,
    "robin_step_factor": None,
    "workers": 1,
}


def _frozen(mapping):
    return types.MappingProxyType(dict(mapping))


def _check_keys(name, section, allowed, required=()):
    if not isinstance(section, dict):
        raise ConfigError(f"Section [{name}] must be a mapping")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    missing = set(required) - set(section)
    if missing:
        raise ConfigError(f"Missing key(s) in [{name}]: {', '.join(sorted(missing))}")


def build_curve(entry) -> BoundaryCurve:
    """Curve from a domain name, a ``{kind: name, ...}`` mapping or a ``{fourier: ...}`` mapping"""
    if isinstance(entry, str):
        entry = {"kind": entry}
    if not isinstance(entry, dict):
        raise ConfigError("domain.curve must be a name or a mapping")
    entry = dict(entry)
    try:
        if "fourier" in entry:
            return BoundaryCurve(entry.pop("fourier"), **entry)
        kind = entry.pop("kind", None)
        if kind not in DOMAINS:
            raise ConfigError(f"Unknown domain {kind!r}; choose one of {', '.join(DOMAINS)}")
        return DOMAINS[kind](**entry)
    except TypeError as error:
        raise ConfigError(f"Bad curve parameters: {error}") from None


def build_h_term(entry, m):
    if entry is None:
        return ZeroPotential()
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError("configuration.h needs a 'kind'")
    kind = entry["kind"]
    if kind == "zero":
        _check_keys("configuration.h", entry, {"kind"})
        return ZeroPotential()
    if kind == "log_potential":
        _check_keys("configuration.h", entry, {"kind", "weights", "potential"}, {"weights", "potential"})
        if len(entry["weights"]) != m:
            raise ConfigError(f"configuration.h needs {m} weights")
        return LogPotential(str(entry["potential"]), entry["weights"])
    raise ConfigError(f"Unknown h kind {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment; `build` produces the numerical objects"""

    domain: T.Mapping
    metric: T.Mapping = field(default_factory=lambda: _frozen({}))
    configuration: T.Mapping = field(default_factory=lambda: _frozen({}))
    run: T.Mapping = field(default_factory=lambda: _frozen(RUN_DEFAULTS))
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, data, base_dir=Path(".")):
        if not isinstance(data, dict):
            raise ConfigError("An experiment file must contain a mapping")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown section(s): {', '.join(sorted(unknown))}")
        if "domain" not in data:
            raise ConfigError("Missing section [domain]")
        _check_keys("domain", data["domain"], SECTIONS["domain"])
        if "curve" not in data["domain"] and "mesh_file" not in data["domain"]:
            raise ConfigError("[domain] needs 'curve' or 'mesh_file'")
        metric = data.get("metric") or {}
        _check_keys("metric", metric, SECTIONS["metric"])
        if len(metric) > 1:
            raise ConfigError("[metric] takes either 'psi' or 'psi_csv'")
        configuration = data.get("configuration") or {}
        _check_keys("configuration", configuration, SECTIONS["configuration"])
        run = data.get("run") or {}
        _check_keys("run", run, SECTIONS["run"])
        return cls(
            _frozen(data["domain"]),
            _frozen(metric),
            _frozen(configuration),
            _frozen({**RUN_DEFAULTS, **run}),
            Path(base_dir),
        )

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            with open(path) as stream:
                data = yaml.safe_load(stream)
        except OSError as error:
            raise ConfigError(f"Cannot read {path}: {error.strerror}") from None
        except yaml.YAMLError as error:
            raise ConfigError(f"Invalid YAML in {path}: {error}") from None
        logger.info("Loaded experiment %s", path)
        return cls.from_dict(data, path.parent)

    def build_mesh(self) -> Mesh:
        domain = self.domain
        curve = build_curve(domain["curve"]) if "curve" in domain else None
        if "mesh_file" in domain:
            mesh = Mesh.read(self.base_dir / domain["mesh_file"], curve=curve)
        else:
            if "target_h" not in domain:
                raise ConfigError("[domain] needs 'target_h' to build a mesh")
            mesh = build_domain(curve, float(domain["target_h"]))
        for _ in range(int(domain.get("refine", 0))):
            mesh = mesh.refine()
        return mesh

    def build_metric(self, mesh) -> ConformalMetric:
        if "psi_csv" in self.metric:
            field = ScalarField.from_csv(mesh, self.base_dir / self.metric["psi_csv"])
            return ConformalMetric(mesh, field.values)
        if "psi" in self.metric:
            return ConformalMetric.from_expression(mesh, str(self.metric["psi"]))
        return ConformalMetric.flat(mesh)

    def build_configuration(self) -> T.Optional[Configuration]:
        section = self.configuration
        if not section:
            return None
        interior = section.get("interior") or []
        boundary = section.get("boundary") or []
        sigmas = section.get("sigmas")
        if sigmas is None:
            raise ConfigError("[configuration] needs 'sigmas'")
        try:
            return Configuration(interior, boundary, sigmas, build_h_term(section.get("h"), len(sigmas)))
        except ConformGreenError as error:
            raise ConfigError(f"Bad configuration: {error}") from None

    def build(self):
        """(mesh, metric, configuration); the configuration is None when the section is absent"""
        mesh = self.build_mesh()
        return mesh, self.build_metric(mesh), self.build_configuration()

    def header(self):
        """Run parameters echoed into output headers"""
        return {key: value for key, value in self.run.items() if value is not None}
