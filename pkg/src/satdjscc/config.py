"""JSON configuration document: environments, link, model, train, eval, data.

Keys are fixed; unknown keys are rejected so typos fail loudly. Keys whose
name starts with an underscore are ignored everywhere (comment convention).
Loo parameters coming from a config must be finite; the -inf sentinels are
reserved for test constructors.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import EnvironmentTable, LooParameters, MarkovChain, ShadowState
from .errors import ConfigError
from .linkbudget import LinkParameters
from .model import ModelConfig

_LINK_KEYS = {
    "orbit_height_m", "carrier_freq_hz", "tx_power_w", "tx_gain_dbi",
    "rx_gain_dbi", "bandwidth_hz", "noise_figure_db", "snr_db_override",
}
_ENV_KEYS = {"environment", "chain", "entries"}
_ENTRY_KEYS = {"state", "elevation_deg", "alpha_db", "psi_db", "mp_db"}
_MODEL_KEYS = {
    "input_shape", "compression_ratio", "filters_per_block", "kernel",
    "block_strides", "attention_enabled", "attention_hidden", "power_constraint",
}
_TRAIN_KEYS = {
    "batch_size", "epochs", "learning_rate", "learning_rate_after_drop",
    "lr_drop_epoch", "conditions", "fading", "seed",
}
_EVAL_KEYS = {"trials_per_image", "conditions", "fading", "snr_sweep"}
_CONDITION_KEYS = {"environment", "state", "elevation_deg", "snr_db"}
_DATA_KEYS = {"dir", "synthetic", "split", "resize_to"}
_SYNTH_KEYS = {"count", "shape", "seed"}
_TOP_KEYS = {"environments", "link", "model", "train", "eval", "data"}


def _reject_unknown(doc, allowed, where):
    unknown = {k for k in doc if not k.startswith("_")} - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def _require(doc, key, where):
    if key not in doc:
        raise ConfigError(f"missing key {key!r} in {where}")
    return doc[key]


def _finite_number(value, where):
    if not isinstance(value, (int, float)) or isinstance(value, bool) \
            or not math.isfinite(value):
        raise ConfigError(f"{where} must be a finite number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class ConditionRef:
    """Unresolved condition reference as written in the config."""

    environment: str
    state: ShadowState
    elevation_deg: float
    snr_db: float | None = None


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 32
    epochs: int = 0
    learning_rate: float = 1e-3
    learning_rate_after_drop: float = 1e-4
    lr_drop_epoch: int = 50
    conditions: tuple = ()
    fading: str = "loo"
    seed: int = 0


@dataclass(frozen=True)
class EvalSection:
    trials_per_image: int = 10
    conditions: tuple = ()
    fading: str = "loo"
    snr_sweep: tuple = ()


@dataclass(frozen=True)
class SynthSection:
    count: int = 16
    shape: tuple = (16, 16, 3)
    seed: int = 7


@dataclass(frozen=True)
class DataSection:
    dir: str | None = None
    synthetic: SynthSection = field(default_factory=SynthSection)
    split: tuple = (0.75, 0.125, 0.125)
    resize_to: tuple | None = None


@dataclass(frozen=True)
class AppConfig:
    environments: dict
    link: LinkParameters | None
    snr_db_override: float | None
    model: ModelConfig | None
    train: TrainSection
    eval: EvalSection
    data: DataSection

    def environment(self, name):
        try:
            return self.environments[name]
        except KeyError:
            raise ConfigError(
                f"environment {name!r} not present in config "
                f"(have {sorted(self.environments)})"
            ) from None


def _parse_environment(doc, index):
    where = f"environments[{index}]"
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(doc, _ENV_KEYS, where)
    name = _require(doc, "environment", where)
    chain_doc = _require(doc, "chain", where)
    try:
        chain = MarkovChain(transition=np.asarray(chain_doc, dtype=float))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}.chain is invalid: {exc}") from exc
    entries = {}
    for j, entry in enumerate(_require(doc, "entries", where)):
        ewhere = f"{where}.entries[{j}]"
        _reject_unknown(entry, _ENTRY_KEYS, ewhere)
        state = ShadowState.parse(_require(entry, "state", ewhere))
        elevation = _finite_number(_require(entry, "elevation_deg", ewhere),
                                   f"{ewhere}.elevation_deg")
        params = LooParameters(
            alpha_db=_finite_number(_require(entry, "alpha_db", ewhere),
                                    f"{ewhere}.alpha_db"),
            psi_db=_finite_number(_require(entry, "psi_db", ewhere),
                                  f"{ewhere}.psi_db"),
            mp_db=_finite_number(_require(entry, "mp_db", ewhere),
                                 f"{ewhere}.mp_db"),
        )
        key = (state, elevation)
        if key in entries:
            raise ConfigError(f"{ewhere} duplicates {state.label}@{elevation}")
        entries[key] = params
    try:
        return EnvironmentTable(environment=name, entries=entries, chain=chain)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_link(doc):
    _reject_unknown(doc, _LINK_KEYS, "link")
    override = doc.get("snr_db_override")
    if override is not None:
        override = _finite_number(override, "link.snr_db_override")
    kwargs = {}
    for key in sorted(_LINK_KEYS - {"snr_db_override"}):
        kwargs[key] = _finite_number(_require(doc, key, "link"), f"link.{key}")
    try:
        return LinkParameters(**kwargs), override
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"link: {exc}") from exc


def _parse_condition(doc, where):
    _reject_unknown(doc, _CONDITION_KEYS, where)
    snr = doc.get("snr_db")
    if snr is not None:
        snr = _finite_number(snr, f"{where}.snr_db")
    return ConditionRef(
        environment=_require(doc, "environment", where),
        state=ShadowState.parse(_require(doc, "state", where)),
        elevation_deg=_finite_number(_require(doc, "elevation_deg", where),
                                     f"{where}.elevation_deg"),
        snr_db=snr,
    )


def _parse_train(doc):
    _reject_unknown(doc, _TRAIN_KEYS, "train")
    conditions = tuple(
        _parse_condition(c, f"train.conditions[{i}]")
        for i, c in enumerate(doc.get("conditions", ()))
    )
    fading = doc.get("fading", "loo")
    if fading not in ("loo", "unit", "zero"):
        raise ConfigError(f"train.fading must be loo|unit|zero, got {fading!r}")
    section = TrainSection(
        batch_size=int(doc.get("batch_size", 32)),
        epochs=int(doc.get("epochs", 0)),
        learning_rate=float(doc.get("learning_rate", 1e-3)),
        learning_rate_after_drop=float(doc.get("learning_rate_after_drop", 1e-4)),
        lr_drop_epoch=int(doc.get("lr_drop_epoch", 50)),
        conditions=conditions,
        fading=fading,
        seed=int(doc.get("seed", 0)),
    )
    if section.learning_rate <= 0 or section.learning_rate_after_drop <= 0:
        raise ConfigError("train learning rates must be > 0")
    if section.batch_size < 1:
        raise ConfigError(f"train.batch_size must be >= 1, got {section.batch_size}")
    return section


def _parse_eval(doc):
    _reject_unknown(doc, _EVAL_KEYS, "eval")
    conditions = tuple(
        _parse_condition(c, f"eval.conditions[{i}]")
        for i, c in enumerate(doc.get("conditions", ()))
    )
    fading = doc.get("fading", "loo")
    if fading not in ("loo", "unit", "zero"):
        raise ConfigError(f"eval.fading must be loo|unit|zero, got {fading!r}")
    return EvalSection(
        trials_per_image=int(doc.get("trials_per_image", 10)),
        conditions=conditions,
        fading=fading,
        snr_sweep=tuple(float(s) for s in doc.get("snr_sweep", ())),
    )


def _parse_data(doc):
    _reject_unknown(doc, _DATA_KEYS, "data")
    synth_doc = doc.get("synthetic", {})
    _reject_unknown(synth_doc, _SYNTH_KEYS, "data.synthetic")
    synth = SynthSection(
        count=int(synth_doc.get("count", 16)),
        shape=tuple(int(v) for v in synth_doc.get("shape", (16, 16, 3))),
        seed=int(synth_doc.get("seed", 7)),
    )
    resize_to = doc.get("resize_to")
    if resize_to is not None:
        resize_to = tuple(int(v) for v in resize_to)
        if len(resize_to) != 2:
            raise ConfigError(f"data.resize_to must be [height, width], got {resize_to}")
    split = tuple(float(f) for f in doc.get("split", (0.75, 0.125, 0.125)))
    return DataSection(dir=doc.get("dir"), synthetic=synth, split=split,
                       resize_to=resize_to)


def parse_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be an object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    environments = {}
    for i, env_doc in enumerate(doc.get("environments", ())):
        table = _parse_environment(env_doc, i)
        if table.environment in environments:
            raise ConfigError(f"duplicate environment {table.environment!r}")
        environments[table.environment] = table
    link, override = (None, None)
    if "link" in doc:
        link, override = _parse_link(doc["link"])
    model = None
    if "model" in doc:
        _reject_unknown(doc["model"], _MODEL_KEYS, "model")
        try:
            model = ModelConfig.from_dict(doc["model"])
        except KeyError as exc:
            raise ConfigError(f"model section missing key {exc}") from exc
    return AppConfig(
        environments=environments,
        link=link,
        snr_db_override=override,
        model=model,
        train=_parse_train(doc.get("train", {})),
        eval=_parse_eval(doc.get("eval", {})),
        data=_parse_data(doc.get("data", {})),
    )


def load_config(path):
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
