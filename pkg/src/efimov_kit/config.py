"""
Run configuration: one JSON document describing masses, couplings, grids and
ladders for every command.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from efimov_kit.errors import ConfigurationError
from efimov_kit.model.core import SystemConfig
from efimov_kit.three_body.faddeev import GridSpec
from efimov_kit.two_body.determinant import resonant_config

CACHE_ENV = "EFIMOV_KIT_CACHE"
RUNTIME_FIELDS = ("output_dir", "cache_dir", "threads")

Triple = Tuple[float, float, float]


@dataclass(frozen=True)
class CouplingSpec:
    """``mode="resonant"`` scales mu_alpha^0 by ``factors``; ``"explicit"`` uses ``values``."""

    mode: str = "resonant"
    factors: Triple = (1.0, 1.0, 1.0)
    values: Optional[Triple] = None


@dataclass(frozen=True)
class QuadratureSpec:
    resolutions: Tuple[int, ...] = (48, 64, 96, 128)
    lattice_tol: float = 1e-4
    branch_resolution: int = 17
    root_tol: float = 1e-10
    scan: int = 24


@dataclass(frozen=True)
class SobolevSpec:
    lam: float = 1.0
    ell_max: int = 40
    n: int = 600
    order: int = 64


@dataclass(frozen=True)
class LadderSpec:
    z: Tuple[float, ...] = (-1e-1, -1e-2, -1e-3, -1e-4, -1e-5)
    K: Tuple[float, ...] = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
    r: Tuple[float, ...] = (10.0, 15.0, 20.0, 30.0, 40.0)
    deltas: Tuple[float, ...] = (1e-5, 1e-4, 1e-3, 1e-2)
    k_points: Tuple[Triple, ...] = ((0.0, 0.0, 0.0), (0.3, 0.0, 0.0), (1.0, 0.0, 0.0), (0.5, 0.3, 0.1))
    K_points: Tuple[Triple, ...] = ((0.0, 0.0, 0.0), (0.3, 0.0, 0.0))
    direction: Triple = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration; ``to_dict(from_dict(d))`` reproduces ``d``."""

    masses: Triple
    couplings: CouplingSpec = field(default_factory=CouplingSpec)
    strict_hypothesis: bool = False
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    sobolev: SobolevSpec = field(default_factory=SobolevSpec)
    ladders: LadderSpec = field(default_factory=LadderSpec)
    agreement_tol: float = 0.3
    output_dir: str = "results"
    cache_dir: Optional[str] = None
    threads: Optional[int] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        Raises:
            ConfigurationError: On unknown keys, wrong shapes or invalid values.
        """
        if not isinstance(data, dict):
            raise ConfigurationError("Run configuration must be a JSON object")
        _check_keys(cls, data, "run configuration")
        if "masses" not in data:
            raise ConfigurationError("Run configuration needs 'masses'")
        try:
            config = cls(
                masses=_triple(data["masses"], "masses"),
                couplings=_couplings(data.get("couplings", {})),
                strict_hypothesis=bool(data.get("strict_hypothesis", False)),
                quadrature=_section(QuadratureSpec, data.get("quadrature", {}), "quadrature"),
                grid=_section(GridSpec, data.get("grid", {}), "grid"),
                sobolev=_section(SobolevSpec, data.get("sobolev", {}), "sobolev"),
                ladders=_ladders(data.get("ladders", {})),
                agreement_tol=float(data.get("agreement_tol", 0.3)),
                output_dir=str(data.get("output_dir", "results")),
                cache_dir=data.get("cache_dir"),
                threads=data.get("threads"),
                seed=int(data.get("seed", 0)),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"Invalid run configuration: {e}")
        config._validate()
        return config

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
        return cls.from_dict(data)

    def _validate(self) -> None:
        if min(self.masses) <= 0:
            raise ConfigurationError(f"Masses must be positive: {self.masses}")
        c = self.couplings
        if c.mode not in ("resonant", "explicit"):
            raise ConfigurationError(f"Unknown coupling mode: {c.mode}")
        if c.mode == "explicit" and c.values is None:
            raise ConfigurationError("Explicit couplings need 'values'")
        if min(c.factors) <= 0 or (c.values is not None and min(c.values) <= 0):
            raise ConfigurationError("Couplings must be positive")
        q = self.quadrature
        if min(q.resolutions) <= 0 or q.branch_resolution < 2 or q.scan <= 0:
            raise ConfigurationError("Resolutions must be positive")
        s = self.sobolev
        if s.lam <= 0 or s.ell_max < 0 or s.n <= 0 or s.order <= 0:
            raise ConfigurationError("Sobolev settings must be positive")
        for name in ("z", "K", "r", "deltas"):
            ladder = getattr(self.ladders, name)
            if list(ladder) != sorted(ladder):
                raise ConfigurationError(f"Ladder '{name}' must be sorted ascending")
        if any(z >= 0 for z in self.ladders.z):
            raise ConfigurationError("Energy ladder must be negative")
        if any(k <= 0 or k >= math.pi for k in self.ladders.K):
            raise ConfigurationError("Momentum ladder must lie in (0, pi)")
        if any(d <= 0 for d in self.ladders.deltas) or any(r <= 0 for r in self.ladders.r):
            raise ConfigurationError("Ladders of deltas and r must be positive")
        if self.threads is not None and int(self.threads) < 1:
            raise ConfigurationError("threads must be at least 1")
        if self.agreement_tol <= 0:
            raise ConfigurationError("agreement_tol must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self, *sections: str) -> str:
        """
        First 16 hex digits of the SHA-256 of the canonical JSON of ``sections``,
        by default every section except the run locations and thread count.
        """
        data = self.to_dict()
        names = sections or tuple(k for k in data if k not in RUNTIME_FIELDS)
        data = {name: data[name] for name in names}
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def system(self) -> SystemConfig:
        """SystemConfig with the configured couplings resolved."""
        if self.couplings.mode == "explicit":
            return SystemConfig(*self.masses, *self.couplings.values, self.strict_hypothesis)
        return resonant_config(
            self.masses,
            self.couplings.factors,
            strict_hypothesis=self.strict_hypothesis,
        )

    def with_overrides(
        self,
        output_dir: Optional[str] = None,
        cache_dir: Optional[str] = None,
        threads: Optional[int] = None,
    ) -> "RunConfig":
        return replace(
            self,
            output_dir=output_dir if output_dir is not None else self.output_dir,
            cache_dir=cache_dir if cache_dir is not None else self.cache_dir,
            threads=threads if threads is not None else self.threads,
        )

    @staticmethod
    def schema() -> Dict[str, Any]:
        """JSON schema of the configuration document."""
        number = {"type": "number"}
        triple = {"type": "array", "items": number, "minItems": 3, "maxItems": 3}
        ladder = {"type": "array", "items": number}
        return {
            "$schema": "https://json-schema.org/draft/2020-12/schema",
            "title": "efimov-kit run configuration",
            "type": "object",
            "required": ["masses"],
            "additionalProperties": False,
            "properties": {
                "masses": triple,
                "couplings": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "mode": {"enum": ["resonant", "explicit"]},
                        "factors": triple,
                        "values": {"anyOf": [triple, {"type": "null"}]},
                    },
                },
                "strict_hypothesis": {"type": "boolean"},
                "quadrature": _object_schema(QuadratureSpec),
                "grid": _object_schema(GridSpec),
                "sobolev": _object_schema(SobolevSpec),
                "ladders": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "z": ladder,
                        "K": ladder,
                        "r": ladder,
                        "deltas": ladder,
                        "k_points": {"type": "array", "items": triple},
                        "K_points": {"type": "array", "items": triple},
                        "direction": triple,
                    },
                },
                "agreement_tol": number,
                "output_dir": {"type": "string"},
                "cache_dir": {"type": ["string", "null"]},
                "threads": {"type": ["integer", "null"]},
                "seed": {"type": "integer"},
            },
        }


def resolve_cache_dir(flag: Optional[str], config: RunConfig, environ: Dict[str, str]) -> Optional[str]:
    """--cache flag, then the environment variable, then the config file."""
    return flag or environ.get(CACHE_ENV) or config.cache_dir


def _object_schema(cls) -> Dict[str, Any]:
    kinds = {int: "integer", float: "number", str: "string", bool: "boolean"}
    props = {}
    for f in fields(cls):
        default = f.default
        if isinstance(default, tuple):
            props[f.name] = {"type": "array", "items": {"type": "number"}}
        else:
            props[f.name] = {"type": kinds.get(type(default), "number")}
    return {"type": "object", "additionalProperties": False, "properties": props}


def _check_keys(cls, data: Dict[str, Any], where: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"Unknown key(s) in {where}: {sorted(unknown)}")


def _triple(value: Any, name: str) -> Triple:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigurationError(f"'{name}' must be a list of three numbers")
    return tuple(float(v) for v in value)


def _section(cls, data: Dict[str, Any], name: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"'{name}' must be an object")
    _check_keys(cls, data, name)
    values = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        raw = data[f.name]
        default = f.default
        if isinstance(default, tuple):
            values[f.name] = tuple(type(default[0])(v) for v in raw)
        elif isinstance(default, bool):
            values[f.name] = bool(raw)
        else:
            values[f.name] = type(default)(raw)
    return cls(**values)


def _couplings(data: Dict[str, Any]) -> CouplingSpec:
    if not isinstance(data, dict):
        raise ConfigurationError("'couplings' must be an object")
    _check_keys(CouplingSpec, data, "couplings")
    values = data.get("values")
    return CouplingSpec(
        mode=str(data.get("mode", "resonant")),
        factors=_triple(data.get("factors", (1.0, 1.0, 1.0)), "couplings.factors"),
        values=None if values is None else _triple(values, "couplings.values"),
    )


def _ladders(data: Dict[str, Any]) -> LadderSpec:
    if not isinstance(data, dict):
        raise ConfigurationError("'ladders' must be an object")
    _check_keys(LadderSpec, data, "ladders")
    defaults = LadderSpec()
    values = {}
    for name in ("z", "K", "r", "deltas"):
        if name in data:
            values[name] = tuple(float(v) for v in data[name])
    for name in ("k_points", "K_points"):
        if name in data:
            values[name] = tuple(_triple(v, f"ladders.{name}") for v in data[name])
    if "direction" in data:
        values["direction"] = _triple(data["direction"], "ladders.direction")
    return replace(defaults, **values)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
