"""Pipeline configuration, dataset manifests, and seed derivation.

One master seed drives every random choice in a run. Each consumer
draws from a named sub-stream (``matchgen``, ``registration``,
``synth``) derived from the master seed, so re-running any single stage
reproduces its exact results regardless of what else ran.

A dataset is described by a pairs manifest: JSON with a ``pairs`` list,
each entry naming a model and the per-view depth/mask/camera/pose
(optionally feature) files. Paths are resolved relative to the manifest
file, and every referenced file must exist at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .io import read_json
from .losses import LossParams
from .matcher import MatchParams
from .matchgen import DEFAULT_MIN_MATCHES, DEFAULT_NN_RADIUS
from .metrics import MetricParams
from .registration import RegistrationParams

_SEED_STREAMS = {"matchgen": 1, "registration": 2, "synth": 3}


def derive_seed(seed: int, stream: str) -> int:
    """Sub-seed for one named consumer of the master seed."""
    if stream not in _SEED_STREAMS:
        raise ValueError(
            f"unknown seed stream {stream!r}; expected one of {sorted(_SEED_STREAMS)}"
        )
    ss = np.random.SeedSequence([int(seed), _SEED_STREAMS[stream]])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ViewPaths:
    depth: Path
    mask: Path
    camera: Path
    pose: Path
    features: Path | None = None


@dataclass(frozen=True)
class PairEntry:
    pair_id: str
    model: Path
    anchor: ViewPaths
    query: ViewPaths
    pred_mask_anchor: Path | None = None
    pred_mask_query: Path | None = None


def _resolve(base: Path, value, required: bool, what: str) -> Path | None:
    if value is None:
        if required:
            raise ConfigError(f"manifest entry is missing {what}")
        return None
    path = (base / value).resolve() if not Path(value).is_absolute() else Path(value)
    if not path.exists():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def _load_view(base: Path, data: dict, pair_id: str, side: str) -> ViewPaths:
    if not isinstance(data, dict):
        raise ConfigError(f"pair {pair_id}: {side} view must be an object")
    return ViewPaths(
        depth=_resolve(base, data.get("depth"), True, f"{pair_id}/{side} depth"),
        mask=_resolve(base, data.get("mask"), True, f"{pair_id}/{side} mask"),
        camera=_resolve(base, data.get("camera"), True, f"{pair_id}/{side} camera"),
        pose=_resolve(base, data.get("pose"), True, f"{pair_id}/{side} pose"),
        features=_resolve(base, data.get("features"), False, f"{pair_id}/{side} features"),
    )


def load_pairs(manifest_path) -> list[PairEntry]:
    """Load and validate a pairs manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise ConfigError(f"pairs manifest does not exist: {manifest_path}")
    try:
        payload = read_json(manifest_path)
    except ValueError as exc:
        raise ConfigError(f"pairs manifest is not valid JSON: {exc}") from exc
    entries = payload.get("pairs")
    if not isinstance(entries, list) or len(entries) == 0:
        raise ConfigError("pairs manifest must contain a non-empty 'pairs' list")

    base = manifest_path.parent
    pairs = []
    for i, entry in enumerate(entries):
        pair_id = str(entry.get("id", f"pair_{i:04d}"))
        pairs.append(
            PairEntry(
                pair_id=pair_id,
                model=_resolve(base, entry.get("model"), True, f"{pair_id} model"),
                anchor=_load_view(base, entry.get("anchor"), pair_id, "anchor"),
                query=_load_view(base, entry.get("query"), pair_id, "query"),
                pred_mask_anchor=_resolve(
                    base, entry.get("pred_mask_anchor"), False, f"{pair_id} pred anchor mask"
                ),
                pred_mask_query=_resolve(
                    base, entry.get("pred_mask_query"), False, f"{pair_id} pred query mask"
                ),
            )
        )
    ids = [p.pair_id for p in pairs]
    if len(set(ids)) != len(ids):
        raise ConfigError("pair ids must be unique")
    return pairs


@dataclass(frozen=True)
class EvalConfig:
    """Everything a pipeline run needs, bundled and validated."""

    pairs_file: Path | None = None
    output_dir: Path | None = None
    match: MatchParams = field(default_factory=MatchParams)
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    loss: LossParams = field(default_factory=LossParams)
    metrics: MetricParams = field(default_factory=MetricParams)
    nn_radius: float = DEFAULT_NN_RADIUS
    min_matches: int = DEFAULT_MIN_MATCHES
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.nn_radius <= 0:
            raise ConfigError("nn_radius must be positive")
        if self.min_matches < 0:
            raise ConfigError("min_matches must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def to_dict(self) -> dict:
        def params_dict(obj):
            return {f.name: getattr(obj, f.name) for f in fields(obj)}

        return {
            "pairs_file": None if self.pairs_file is None else str(self.pairs_file),
            "output_dir": None if self.output_dir is None else str(self.output_dir),
            "match": params_dict(self.match),
            "registration": params_dict(self.registration),
            "loss": params_dict(self.loss),
            "metrics": params_dict(self.metrics),
            "nn_radius": self.nn_radius,
            "min_matches": self.min_matches,
            "workers": self.workers,
            "seed": self.seed,
        }


def _build_params(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"config section {section!r} has unknown keys: {sorted(unknown)}"
        )
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config section {section!r} is invalid: {exc}") from exc


def load_config(path=None, defaults=None, **overrides) -> EvalConfig:
    """Build an EvalConfig from an optional JSON file plus overrides.

    Precedence: explicit overrides (e.g. command-line flags) beat the
    file, which beats ``defaults`` (e.g. environment variables), which
    beat the built-in values. Override values of None are ignored, so
    flags can be passed through unconditionally.
    """
    data: dict = dict(defaults or {})
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file does not exist: {path}")
        try:
            file_data = read_json(path)
        except ValueError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update(file_data)
        base = path.parent

    known = {f.name for f in fields(EvalConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"config has unknown keys: {sorted(unknown)}")

    sections = {
        "match": MatchParams,
        "registration": RegistrationParams,
        "loss": LossParams,
        "metrics": MetricParams,
    }
    kwargs: dict = {}
    for name, cls in sections.items():
        section_data = dict(data.get(name, {}))
        section_overrides = overrides.pop(name, None) or {}
        section_data.update(
            {k: v for k, v in section_overrides.items() if v is not None}
        )
        kwargs[name] = _build_params(cls, section_data, name)

    for name in ("nn_radius", "min_matches", "workers", "seed"):
        if overrides.get(name) is not None:
            kwargs[name] = overrides[name]
        elif name in data:
            kwargs[name] = data[name]

    for name in ("pairs_file", "output_dir"):
        value = overrides.get(name)
        if value is None:
            value = data.get(name)
            if value is not None and not Path(value).is_absolute():
                value = base / value
        if value is not None:
            kwargs[name] = Path(value)

    leftover = {
        k for k, v in overrides.items()
        if v is not None and k not in known
    }
    if leftover:
        raise ConfigError(f"unknown config overrides: {sorted(leftover)}")
    try:
        return EvalConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
