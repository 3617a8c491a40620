"""Flat ``key = value`` run configuration with typed, documented defaults."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import date
from typing import Any, Mapping, Sequence

from .absorption import BergerParams
from .pipeline import Settings
from .sindy import SindyHyper, SparseModel
from .synthetic import DEFAULT_TRUE_MODEL, SynthSpec
from .timeseries import ShiftConfig, shift_grid


class ConfigError(ValueError):
    pass


def _model_text(model: SparseModel) -> str:
    return ", ".join(f"{name} = {coef!r}" for name, coef in model.as_dict().items())


# key -> (type, default, description)
SCHEMA: dict[str, tuple[str, Any, str]] = {
    "data.path": ("str", "", "input CSV or XML; empty means <output.dir>/dataset.csv"),
    "data.format": ("str", "auto", "csv, xml or auto (by file extension)"),
    "data.tz": ("str", "UTC", "time zone whose midnights cut the data into days"),
    "data.max_gap_minutes": ("float", 30.0, "longest glucose gap repaired by interpolation"),
    "split.train": ("int", 11, "number of leading complete days used for training"),
    "shifts.bolus": ("ints", [1, 2, 3, 4, 5, 6], "candidate bolus delays in 5-minute steps"),
    "shifts.carbs": ("ints", [1, 2, 3, 4, 5, 6], "candidate carb delays in 5-minute steps"),
    "berger.s": ("float", 1.6, "absorption shape"),
    "berger.a": ("float", 5.2, "half-absorption time slope"),
    "berger.b": ("float", 41.0, "half-absorption time factor or intercept"),
    "berger.t50_form": ("str", "product", "product (a*D*b) or affine (a*D+b)"),
    "berger.k": ("float", 1.0, "plasma decay rate per model time unit"),
    "berger_carbs.s": ("str", "", "carb override of berger.s; empty inherits"),
    "berger_carbs.a": ("str", "", "carb override of berger.a; empty inherits"),
    "berger_carbs.b": ("str", "", "carb override of berger.b; empty inherits"),
    "berger_carbs.t50_form": ("str", "", "carb override of berger.t50_form; empty inherits"),
    "berger_carbs.k": ("str", "", "carb override of berger.k; empty inherits"),
    "sindy.threshold": ("float", 0.1, "STLSQ threshold in normalized coefficient space"),
    "sindy.ridge": ("float", 1e-6, "ridge penalty"),
    "sindy.max_degree": ("int", 2, "highest monomial degree in the library"),
    "sindy.max_iter": ("int", 20, "STLSQ iteration cap"),
    "sindy.trig": ("bool", False, "add sin/cos of each variable to the library"),
    "sindy.alignment": ("str", "hold", "hold (interval means) or sample (pointwise) library"),
    "sim.substeps": ("int", 4, "RK4 substeps per 5-minute grid step"),
    "sim.guard_min": ("float", 0.0, "lower glucose bound before clamping"),
    "sim.guard_max": ("float", 1000.0, "upper glucose bound before clamping"),
    "sim.time_unit_minutes": ("float", 5.0, "model time unit of dG/dt"),
    "grid.top_fraction": ("float", 0.10, "share of models kept per shift in the grid search"),
    "output.dir": ("str", "out", "directory receiving every artifact"),
    "seed": ("int", 0, "random seed for synthetic data"),
    "jobs": ("int", 0, "worker processes; 0 means available CPUs"),
    "synth.n_days": ("int", 17, "days of synthetic data"),
    "synth.noise_sd": ("float", 0.0, "Gaussian glucose noise in mg/dL"),
    "synth.bolus_shift": ("int", 6, "planted bolus delay in steps"),
    "synth.carb_shift": ("int", 1, "planted carb delay in steps"),
    "synth.g0": ("float", 120.0, "glucose at the start of the first day"),
    "synth.start_date": ("str", "2027-05-01", "first synthetic calendar day"),
    "synth.model": ("str", _model_text(DEFAULT_TRUE_MODEL), "planted model as 'term = coef' pairs"),
}


def _parse_value(key: str, kind: str, raw: Any) -> Any:
    try:
        if kind == "int":
            if isinstance(raw, bool):
                raise ValueError
            value = int(raw) if not isinstance(raw, str) else int(raw.strip())
            return value
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind == "ints":
            if isinstance(raw, (list, tuple)):
                return [int(v) for v in raw]
            return [int(v) for v in str(raw).replace(" ", "").split(",") if v]
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: cannot read {raw!r} as {kind}") from None


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_model_text(text: str) -> SparseModel:
    """Read ``"1 = 12, C = 30, B·G = -0.5"`` (``*`` works for ``·``)."""
    coefs = {}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise ConfigError(f"model entry {part.strip()!r} is not 'term = coefficient'")
        name, value = part.split("=", 1)
        try:
            coefs[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"model entry {part.strip()!r} has a non-numeric coefficient") from None
    try:
        return SparseModel.from_dict(coefs, provenance={"source": "planted"})
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad planted model {text!r}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration: every key in :data:`SCHEMA`, typed."""

    values: Mapping[str, Any]

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, Any]], base: "RunConfig | None" = None) -> "RunConfig":
        values = dict(base.values) if base else {k: v[1] for k, v in SCHEMA.items()}
        for key, raw in pairs:
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(key, SCHEMA[key][0], raw)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls.from_pairs([])

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def with_overrides(self, pairs: Sequence[tuple[str, Any]]) -> "RunConfig":
        return RunConfig.from_pairs(pairs, self)

    def validate(self) -> None:
        if self["split.train"] < 2:
            raise ConfigError("split.train must be at least 2")
        if not self["shifts.bolus"] or not self["shifts.carbs"]:
            raise ConfigError("shift lists must not be empty")
        if self["data.format"] not in ("auto", "csv", "xml"):
            raise ConfigError(f"data.format must be auto, csv or xml, got {self['data.format']!r}")
        if self["jobs"] < 0:
            raise ConfigError("jobs must be >= 0")
        try:
            date.fromisoformat(self["synth.start_date"])
        except ValueError:
            raise ConfigError(f"synth.start_date {self['synth.start_date']!r} is not YYYY-MM-DD") from None
        # construct derived objects so bad values fail early
        try:
            self.settings()
            self.shift_grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        parse_model_text(self["synth.model"])

    # derived objects

    def berger(self, channel: str = "bolus") -> BergerParams:
        fields = {}
        for name, kind in (("s", float), ("a", float), ("b", float), ("t50_form", str), ("k", float)):
            value = self[f"berger.{name}"]
            if channel == "carbs" and self[f"berger_carbs.{name}"] != "":
                value = _parse_value(f"berger_carbs.{name}", "float" if kind is float else "str",
                                     self[f"berger_carbs.{name}"])
            fields[name] = value
        return BergerParams(**fields)

    def hyper(self) -> SindyHyper:
        return SindyHyper(threshold=self["sindy.threshold"], ridge=self["sindy.ridge"],
                          max_degree=self["sindy.max_degree"], max_iter=self["sindy.max_iter"],
                          trig=self["sindy.trig"], alignment=self["sindy.alignment"])

    def resolved_jobs(self) -> int:
        return self["jobs"] or (os.cpu_count() or 1)

    def settings(self) -> Settings:
        if not self["sim.guard_min"] < self["sim.guard_max"]:
            raise ValueError("sim.guard_min must be below sim.guard_max")
        if self["sindy.alignment"] not in ("hold", "sample"):
            raise ValueError(f"sindy.alignment must be hold or sample, got {self['sindy.alignment']!r}")
        if not 0 < self["grid.top_fraction"] <= 1:
            raise ValueError("grid.top_fraction must be in (0, 1]")
        return Settings(berger_bolus=self.berger("bolus"), berger_carbs=self.berger("carbs"),
                        hyper=self.hyper(), substeps=self["sim.substeps"],
                        guard=(self["sim.guard_min"], self["sim.guard_max"]),
                        time_unit_minutes=self["sim.time_unit_minutes"],
                        top_fraction=self["grid.top_fraction"], jobs=self.resolved_jobs())

    def shift_grid(self) -> list[ShiftConfig]:
        return shift_grid(self["shifts.bolus"], self["shifts.carbs"])

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(n_days=self["synth.n_days"], true_model=parse_model_text(self["synth.model"]),
                         true_shifts=ShiftConfig(self["synth.bolus_shift"], self["synth.carb_shift"]),
                         noise_sd=self["synth.noise_sd"], seed=self["seed"], g0=self["synth.g0"],
                         start_date=date.fromisoformat(self["synth.start_date"]),
                         berger_bolus=self.berger("bolus"), berger_carbs=self.berger("carbs"),
                         time_unit_minutes=self["sim.time_unit_minutes"], substeps=self["sim.substeps"],
                         guard=(self["sim.guard_min"], self["sim.guard_max"]), tz=self["data.tz"])

    # serialisation

    def as_dict(self) -> dict:
        return {k: self.values[k] for k in SCHEMA}

    def to_text(self) -> str:
        lines = []
        for key, (_, _, doc) in SCHEMA.items():
            lines.append(f"# {doc}")
            lines.append(f"{key} = {_format_value(self.values[key])}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str, source: str = "<config>") -> list[tuple[str, str]]:
    """Read ``key = value`` lines; ``#`` starts a comment line."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path: str | None, overrides: Sequence[tuple[str, Any]] = ()) -> RunConfig:
    """Defaults, then the file at ``path`` (text or a ``run_meta.json``), then ``overrides``."""
    pairs: list[tuple[str, Any]] = []
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        if path.endswith(".json"):
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
            pairs = list(doc.get("config", doc).items())
        else:
            pairs = parse_config_text(text, path)
    return RunConfig.from_pairs(list(pairs) + list(overrides))
