"""Per-relation statistical layout predictor.

Dependents are modeled in the support box's canonical frame, where the
support becomes the cube ``[-0.5, 0.5]^3``: centers are rotated into the
support frame and divided per axis by the support size, sizes are divided
per axis, and rotations are expressed relative to the support rotation.
A table maps each (support, functional, dependent) category triple to a
mixture fitted in that frame.
"""

from __future__ import annotations

import logging
import zlib
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import mol
from .errors import DegenerateFrame, InsufficientData, ParseError, UnknownRelation
from .geometry import OrientedBox
from .mol import LineReader, MixtureOfLogistics
from .records import RelationTupleRecord

logger = logging.getLogger(__name__)

NO_FUNCTIONAL = "-"
DEFAULT_MIN_COUNT = 8
SIZE_SNAP_TOLERANCE = 0.2


@dataclass(frozen=True, order=True)
class RelationKey:
    support: str
    functional: str | None
    dependent: str

    def coarse(self) -> "RelationKey":
        return RelationKey(self.support, None, self.dependent)

    def labels(self) -> tuple[str, str, str]:
        return (self.support, self.functional or NO_FUNCTIONAL, self.dependent)

    def __str__(self) -> str:
        return "(" + ", ".join(self.labels()) + ")"

    def sort_key(self) -> tuple[str, str, str]:
        return self.labels()


@dataclass(frozen=True)
class LocalFrame:
    origin: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray


def local_frame(support: OrientedBox) -> LocalFrame:
    if np.any(support.size < 1e-12):
        raise DegenerateFrame(f"support has a zero extent: {support.size}")
    return LocalFrame(support.center, support.matrix, 1.0 / support.size)


def to_local_vector(support: OrientedBox, v) -> np.ndarray:
    """World box vector -> support-local box vector (a linear map on raw entries)."""
    frame = local_frame(support)
    v = np.asarray(v, dtype=float)
    r = frame.rotation
    out = np.empty_like(v)
    out[..., 0:3] = ((v[..., 0:3] - frame.origin) @ r) * frame.scale
    out[..., 3:6] = v[..., 3:6] * frame.scale
    out[..., 6:9] = v[..., 6:9] @ r
    out[..., 9:12] = v[..., 9:12] @ r
    return out


def from_local_vector(support: OrientedBox, v) -> np.ndarray:
    frame = local_frame(support)
    v = np.asarray(v, dtype=float)
    r = frame.rotation
    out = np.empty_like(v)
    out[..., 0:3] = frame.origin + (v[..., 0:3] * support.size) @ r.T
    out[..., 3:6] = v[..., 3:6] * support.size
    out[..., 6:9] = v[..., 6:9] @ r.T
    out[..., 9:12] = v[..., 9:12] @ r.T
    return out


def to_local(support: OrientedBox, dep: OrientedBox) -> np.ndarray:
    return to_local_vector(support, dep.to_vector())


def from_local(support: OrientedBox, v) -> OrientedBox:
    """Inverse of :func:`to_local`; the output rotation is re-orthonormalized."""
    return OrientedBox.from_vector(from_local_vector(support, v))


def snap_size(sampled_size, asset_size, tolerance: float = SIZE_SNAP_TOLERANCE) -> np.ndarray:
    """Keep the asset's proportions, scaled toward the sampled volume by at most ``tolerance``."""
    asset_size = np.asarray(asset_size, dtype=float)
    sampled_volume = float(np.prod(np.abs(np.asarray(sampled_size, dtype=float))))
    factor = np.cbrt(sampled_volume / float(np.prod(asset_size)))
    factor = float(np.clip(factor, 1.0 - tolerance, 1.0 + tolerance))
    return asset_size * factor


@dataclass(frozen=True)
class WorldMixture:
    """A support-local mixture viewed in world coordinates.

    Sampling draws in the local frame and maps through the support pose, so
    draws transform exactly with the support.
    """

    local: MixtureOfLogistics
    support: OrientedBox
    key: RelationKey | None = None

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return from_local_vector(self.support, mol.sample(self.local, rng, size))

    def log_density(self, x) -> float | np.ndarray:
        # center and size blocks each carry a Jacobian of prod(support.size)
        log_jac = 2.0 * float(np.sum(np.log(self.support.size)))
        return mol.log_density(self.local, to_local_vector(self.support, x)) - log_jac

    def as_mixture(self) -> MixtureOfLogistics:
        """World-frame parameters.

        Exact when the support is axis-aligned up to axis permutations; for
        other yaws the scales are the closest per-axis approximation.
        """
        loc = from_local_vector(self.support, self.local.loc)
        perm = np.abs(self.support.matrix)
        scale = np.empty_like(self.local.scale)
        scale[:, 0:3] = (self.local.scale[:, 0:3] * self.support.size) @ perm.T
        scale[:, 3:6] = self.local.scale[:, 3:6] * self.support.size
        scale[:, 6:9] = self.local.scale[:, 6:9] @ perm.T
        scale[:, 9:12] = self.local.scale[:, 9:12] @ perm.T
        return MixtureOfLogistics(self.local.weights, loc, scale)


@dataclass
class PredictorTable:
    entries: dict[RelationKey, MixtureOfLogistics] = field(default_factory=dict)
    counts: dict[RelationKey, int] = field(default_factory=dict)
    min_count: int = DEFAULT_MIN_COUNT

    def lookup(self, key: RelationKey) -> tuple[RelationKey, MixtureOfLogistics]:
        """Exact key first, then the key with the functional anchor dropped."""
        if key in self.entries:
            return key, self.entries[key]
        if key.functional is not None:
            coarse = key.coarse()
            if coarse in self.entries:
                return coarse, self.entries[coarse]
        raise UnknownRelation(f"no predictor entry for {key} or its coarse fallback")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: RelationKey) -> bool:
        return key in self.entries


def predict(table: PredictorTable, key: RelationKey, support: OrientedBox) -> WorldMixture:
    used, theta = table.lookup(key)
    return WorldMixture(theta, support, used)


def training_groups(records: Iterable[RelationTupleRecord]) -> dict[RelationKey, np.ndarray]:
    """Local-frame samples per key.

    Every record also contributes to its coarse key, which pools all
    functional anchors for the same (support, dependent) pair.
    """
    groups: dict[RelationKey, list[np.ndarray]] = defaultdict(list)
    for rec in records:
        sup, fnc, dep = rec.key_labels
        v = to_local(rec.support.box, rec.dependent.box)
        if fnc is not None:
            groups[RelationKey(sup, fnc, dep)].append(v)
        groups[RelationKey(sup, None, dep)].append(v)
    return {k: np.array(v) for k, v in sorted(groups.items(), key=lambda kv: kv[0].sort_key())}


def key_seed(seed: int, key: RelationKey) -> np.random.Generator:
    tag = zlib.crc32("|".join(key.labels()).encode("utf-8"))
    return np.random.default_rng([int(seed), tag])


def fit_table(
    records: Iterable[RelationTupleRecord],
    k: int = 4,
    lam: float = 0.0,
    min_count: int = DEFAULT_MIN_COUNT,
    tol: float = 1e-6,
    max_iters: int = 200,
    seed: int = 0,
    workers: int = 1,
) -> PredictorTable:
    """Fit one mixture per relation key with at least ``min_count`` samples.

    Raises:
        InsufficientData: if ``records`` is empty.
    """
    records = list(records)
    if not records:
        raise InsufficientData("no relation records to fit")
    groups = training_groups(records)
    todo = [(key, x) for key, x in groups.items() if len(x) >= min_count]
    for key, x in groups.items():
        if len(x) < min_count:
            logger.info("key %s has %d samples (< %d); relying on fallback", key, len(x), min_count)

    def _fit(item):
        key, x = item
        try:
            return key, mol.fit_em(x, k=k, lam=lam, max_iters=max_iters, tol=tol, rng=key_seed(seed, key))
        except InsufficientData as exc:
            logger.warning("skipping %s: %s", key, exc)
            return key, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(_fit, todo))
    else:
        fitted = [_fit(item) for item in todo]

    table = PredictorTable(min_count=min_count)
    for key, theta in fitted:
        if theta is not None:
            table.entries[key] = theta
            table.counts[key] = len(groups[key])
    return table


# ---------------------------------------------------------------------------
# parameter files

_TABLE_MAGIC = "mol-table"


def _check_label(label: str) -> str:
    if not label or any(ch.isspace() for ch in label) or label == NO_FUNCTIONAL:
        raise ValueError(f"category label {label!r} cannot be written to a parameter file")
    return label


def dumps_params(table: PredictorTable) -> str:
    lines = [
        _TABLE_MAGIC,
        f"format_version {mol.FORMAT_VERSION}",
        f"min_count {table.min_count}",
        f"entries {len(table.entries)}",
    ]
    for key in sorted(table.entries, key=RelationKey.sort_key):
        sup, fnc, dep = key.labels()
        _check_label(sup)
        _check_label(dep)
        if key.functional is not None:
            _check_label(fnc)
        lines.append(f"entry {sup} {fnc} {dep}")
        lines.append(f"count {table.counts.get(key, 0)}")
        lines.extend(mol.format_mixture(table.entries[key]))
    return "\n".join(lines) + "\n"


def loads_params(text: str) -> PredictorTable:
    reader = LineReader(text.splitlines())
    reader.expect(_TABLE_MAGIC, 0)
    mol.check_version(reader)
    min_count = reader.expect_int("min_count")
    n = reader.expect_int("entries")
    table = PredictorTable(min_count=min_count)
    for _ in range(n):
        line, (sup, fnc, dep) = reader.expect("entry", 3)
        key = RelationKey(sup, None if fnc == NO_FUNCTIONAL else fnc, dep)
        if key in table.entries:
            raise ParseError(f"duplicate entry {key}", line=line, field="entry")
        count_line = reader.line_no
        count = reader.expect_int("count")
        if count < 0:
            raise ParseError("count must be nonnegative", line=count_line, field="count")
        table.entries[key] = mol.parse_mixture(reader)
        table.counts[key] = count
    if not reader.exhausted:
        raise ParseError("trailing content after declared entries", line=reader.line_no)
    return table


def save_params(table: PredictorTable, path: str | Path) -> None:
    Path(path).write_text(dumps_params(table))


def load_params(path: str | Path) -> PredictorTable:
    return loads_params(Path(path).read_text())
