"""Engine configuration: one versioned JSON document holding every tunable."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .assembly import FAILURE_POLICIES, AssemblyConfig
from .curation import CurationConfig
from .errors import ParseError, ProcSceneError
from .hierarchy import parse_hierarchy
from .records import FLOOR
from .scene import Boundary

FORMAT_VERSION = 1


class ConfigError(ParseError):
    """Invalid configuration; ``field`` holds the dotted path of the offending entry."""


@dataclass
class FitParams:
    k: int = 4
    lam: float = 0.0
    min_count: int = 8
    tol: float = 1e-6
    max_iters: int = 200


@dataclass
class GenerationParams:
    scene_type: str = "bedroom"
    n_max: int = 6
    k: float = 2.0


@dataclass
class AssemblyParams:
    boundary_min: list[float] = field(default_factory=lambda: [-2.0, -2.5, 0.0])
    boundary_max: list[float] = field(default_factory=lambda: [2.0, 2.5, 3.0])
    max_attempts: int = 64
    gravity_enabled: bool = True
    rejection_enabled: bool = True
    failure_policy: str = "skip"
    cell_size: float = 0.5


@dataclass
class CurationParams:
    vertical_gap_max: float = 0.03
    overlap_min: float = 0.5
    displacement_max: float = 0.10
    exclude_floor_only: bool = True
    rule_table: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class EngineConfig:
    taxonomy: list[str] = field(default_factory=list)
    templates: dict[str, Any] = field(default_factory=dict)
    asset_library: dict[str, list[float]] = field(default_factory=dict)
    curation: CurationParams = field(default_factory=CurationParams)
    fit: FitParams = field(default_factory=FitParams)
    generation: GenerationParams = field(default_factory=GenerationParams)
    assembly: AssemblyParams = field(default_factory=AssemblyParams)
    master_seed: int = 0
    scene_count: int = 10

    def boundary(self) -> Boundary:
        return Boundary(self.assembly.boundary_min, self.assembly.boundary_max)

    def assembly_config(self) -> AssemblyConfig:
        a = self.assembly
        return AssemblyConfig(
            max_attempts=a.max_attempts,
            seed=self.master_seed,
            gravity_enabled=a.gravity_enabled,
            rejection_enabled=a.rejection_enabled,
            failure_policy=a.failure_policy,
            cell_size=a.cell_size,
        )

    def curation_config(self) -> CurationConfig:
        c = self.curation
        rules = {(r["anchor"], r["dependent"]): float(r["k"]) for r in c.rule_table}
        return CurationConfig(c.vertical_gap_max, c.overlap_min, c.displacement_max, rules, c.exclude_floor_only)

    def to_document(self) -> dict:
        return {"format_version": FORMAT_VERSION, **asdict(self)}

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=2) + "\n"

    def validate(self) -> None:
        """Check bounds and cross-references; raises ConfigError naming the field path."""
        taxonomy = set(self.taxonomy)
        if len(taxonomy) != len(self.taxonomy):
            raise ConfigError("duplicate categories", field="taxonomy")
        if FLOOR in taxonomy:
            raise ConfigError("'floor' is implicit and may not be listed", field="taxonomy")

        def need_category(cat: str, path: str) -> None:
            if cat != FLOOR and cat not in taxonomy:
                raise ConfigError(f"unknown category {cat!r}", field=path)

        for name, doc in self.templates.items():
            try:
                spec = parse_hierarchy(doc)
            except ProcSceneError as exc:
                raise ConfigError(str(exc), field=f"templates.{name}") from exc
            for node in spec.support.nodes:
                need_category(spec.category(node), f"templates.{name}")
        for cat, size in self.asset_library.items():
            need_category(cat, f"asset_library.{cat}")
            if len(size) != 3 or not all(float(v) > 0 for v in size):
                raise ConfigError("asset size must be three positive extents", field=f"asset_library.{cat}")
        for i, rule in enumerate(self.curation.rule_table):
            path = f"curation.rule_table[{i}]"
            if set(rule) != {"anchor", "dependent", "k"}:
                raise ConfigError("rule needs exactly 'anchor', 'dependent' and 'k'", field=path)
            need_category(rule["anchor"], f"{path}.anchor")
            need_category(rule["dependent"], f"{path}.dependent")
            if not float(rule["k"]) >= 1:
                raise ConfigError("k must be >= 1", field=f"{path}.k")
        c = self.curation
        _positive(c.vertical_gap_max, "curation.vertical_gap_max")
        _positive(c.displacement_max, "curation.displacement_max")
        if not 0 < c.overlap_min <= 1:
            raise ConfigError("must lie in (0, 1]", field="curation.overlap_min")

        f = self.fit
        _int_at_least(f.k, 1, "fit.k")
        _int_at_least(f.min_count, 1, "fit.min_count")
        _int_at_least(f.max_iters, 1, "fit.max_iters")
        if f.lam < 0:
            raise ConfigError("must be nonnegative", field="fit.lam")
        _positive(f.tol, "fit.tol")

        g = self.generation
        if g.scene_type not in self.templates:
            raise ConfigError(f"no template for scene type {g.scene_type!r}", field="generation.scene_type")
        _int_at_least(g.n_max, 0, "generation.n_max")
        if g.k < 0:
            raise ConfigError("must be nonnegative", field="generation.k")

        a = self.assembly
        try:
            self.boundary()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), field="assembly.boundary_min") from exc
        _int_at_least(a.max_attempts, 1, "assembly.max_attempts")
        if a.failure_policy not in FAILURE_POLICIES:
            raise ConfigError(f"must be one of {FAILURE_POLICIES}", field="assembly.failure_policy")
        _positive(a.cell_size, "assembly.cell_size")
        _int_at_least(self.master_seed, 0, "master_seed")
        _int_at_least(self.scene_count, 0, "scene_count")


def _positive(v, path: str) -> None:
    if not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError("must be a positive number", field=path)


def _int_at_least(v, lo: int, path: str) -> None:
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        raise ConfigError(f"must be an integer >= {lo}", field=path)


_SECTIONS = {
    "curation": CurationParams,
    "fit": FitParams,
    "generation": GenerationParams,
    "assembly": AssemblyParams,
}


def config_from_document(doc: Mapping, base: EngineConfig | None = None) -> EngineConfig:
    """Overlay ``doc`` on ``base`` (or the built-in defaults) and validate.

    Unknown keys are rejected so that typos do not pass silently.
    """
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported format version {version!r}", field="format_version")
    if base is None:
        from .fixtures import bedroom_config

        base = bedroom_config()
    merged = base.to_document()
    for key, value in doc.items():
        if key not in merged:
            raise ConfigError("unknown key", field=key)
        if key in _SECTIONS:
            if not isinstance(value, Mapping):
                raise ConfigError("expected an object", field=key)
            for sub in value:
                if sub not in merged[key]:
                    raise ConfigError("unknown key", field=f"{key}.{sub}")
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    merged.pop("format_version")
    sections = {name: cls(**merged.pop(name)) for name, cls in _SECTIONS.items()}
    cfg = EngineConfig(**merged, **sections)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> EngineConfig:
    if path is None:
        from .fixtures import bedroom_config

        cfg = bedroom_config()
        cfg.validate()
        return cfg
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from exc
    return config_from_document(doc)
