"""Flat key-value run configuration with dotted section keys.

A config file is UTF-8 text, one ``section.key=value`` per line (``#``
comments allowed).  The same syntax drives ``--set`` overrides, which are
applied after the file and recorded in the resolved snapshot, keeping
every run directory diffable.  Unknown keys are rejected by name with the
nearest valid key suggested.
"""

from __future__ import annotations

import difflib
import os
from dataclasses import dataclass, field

from .proto import Stage1Config
from .seqmodel import Stage2Config


class ConfigError(ValueError):
    """Unknown key, unparsable value, or violated constraint."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


# key -> (parser, default-as-string or None meaning unset)
KNOWN_KEYS: dict[str, tuple] = {
    "data.association": (str, None),
    "data.drug_sim": (str, None),
    "data.disease_sim": (str, None),
    "data.drug_ids": (str, ""),
    "data.disease_ids": (str, ""),
    "stage1.d0": (int, "1024"),
    "stage1.hidden": (int, "1024"),
    "stage1.lr": (float, "0.01"),
    "stage1.lr_min": (float, "0.0"),
    "stage1.epochs": (int, "300"),
    "stage1.pair_batch": (int, "4096"),
    "stage1.weight_decay": (float, "0.01"),
    "stage2.d_w": (int, "64"),
    "stage2.temperature": (float, "2.0"),
    "stage2.heads": (int, "4"),
    "stage2.l_max": (int, "32"),
    "stage2.lr": (float, "0.0001"),
    "stage2.lr_min": (float, "0.0"),
    "stage2.epochs": (int, "30"),
    "stage2.batch_size": (int, "128"),
    "stage2.weight_decay": (float, "0.01"),
    "stage2.embed_decay": (_parse_bool, "true"),
    "stage2.fusion_activation": (str, "relu"),
    "stage2.pool": (str, "flatten"),
    "protocol.folds": (int, "10"),
    "protocol.repeats": (int, "10"),
    "protocol.lambdas": (_parse_float_list, "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"),
    "protocol.d0_values": (_parse_int_list, "64,128,256,512,1024"),
    "protocol.temperatures": (_parse_float_list, "1,2,3,4,5"),
    "protocol.drugs": (str, "auto"),
    "protocol.n_drugs": (int, "20"),
    "protocol.disease": (str, "0"),
    "protocol.k": (int, "10"),
    "seed": (int, "0"),
    "out": (str, ""),
}


@dataclass
class RunConfig:
    """Typed view of a resolved key-value config."""

    raw: dict[str, str]
    stage1: Stage1Config
    stage2: Stage2Config
    data_paths: dict[str, str]
    protocol: dict[str, object]
    seed: int
    out: str

    def dataset_args(self) -> dict[str, str | None]:
        return {
            "association_path": self.data_paths["data.association"],
            "drug_sim_path": self.data_paths["data.drug_sim"],
            "disease_sim_path": self.data_paths["data.disease_sim"],
            "drug_ids_path": self.data_paths["data.drug_ids"] or None,
            "disease_ids_path": self.data_paths["data.disease_ids"] or None,
        }


def _reject_unknown(key: str) -> None:
    if key not in KNOWN_KEYS:
        close = difflib.get_close_matches(key, KNOWN_KEYS.keys(), n=1)
        hint = f" (nearest valid key: {close[0]})" if close else ""
        raise ConfigError(f"unknown config key {key!r}{hint}")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Key-value lines to a dict; rejects unknown keys and bad syntax."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        _reject_unknown(key)
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def apply_overrides(values: dict[str, str], overrides: list[str]) -> dict[str, str]:
    """Apply repeatable key=value overrides on top of the file values."""
    merged = dict(values)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        _reject_unknown(key)
        merged[key] = value.strip()
    return merged


def resolve(values: dict[str, str]) -> RunConfig:
    """Fill defaults, parse types, and construct the stage configs."""
    raw: dict[str, str] = {}
    typed: dict[str, object] = {}
    for key, (parser, default) in KNOWN_KEYS.items():
        if key in values:
            raw[key] = values[key]
        elif default is not None:
            raw[key] = default
        else:
            raw[key] = ""
        if key.startswith("data."):
            typed[key] = raw[key]
            continue
        try:
            typed[key] = parser(raw[key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config key {key}: cannot parse {raw[key]!r} ({exc})") from None
    try:
        stage1 = Stage1Config(
            d0=typed["stage1.d0"],
            hidden=typed["stage1.hidden"],
            lr=typed["stage1.lr"],
            lr_min=typed["stage1.lr_min"],
            epochs=typed["stage1.epochs"],
            pair_batch=typed["stage1.pair_batch"],
            weight_decay=typed["stage1.weight_decay"],
        )
        stage2 = Stage2Config(
            d0=typed["stage1.d0"],
            d_w=typed["stage2.d_w"],
            temperature=typed["stage2.temperature"],
            heads=typed["stage2.heads"],
            l_max=typed["stage2.l_max"],
            lr=typed["stage2.lr"],
            lr_min=typed["stage2.lr_min"],
            epochs=typed["stage2.epochs"],
            batch_size=typed["stage2.batch_size"],
            weight_decay=typed["stage2.weight_decay"],
            embed_decay=typed["stage2.embed_decay"],
            fusion_activation=typed["stage2.fusion_activation"],
            pool=typed["stage2.pool"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    protocol = {
        "folds": typed["protocol.folds"],
        "repeats": typed["protocol.repeats"],
        "lambdas": typed["protocol.lambdas"],
        "d0_values": typed["protocol.d0_values"],
        "temperatures": typed["protocol.temperatures"],
        "drugs": typed["protocol.drugs"],
        "n_drugs": typed["protocol.n_drugs"],
        "disease": typed["protocol.disease"],
        "k": typed["protocol.k"],
    }
    data_paths = {key: typed[key] for key in KNOWN_KEYS if key.startswith("data.")}
    return RunConfig(
        raw=raw,
        stage1=stage1,
        stage2=stage2,
        data_paths=data_paths,
        protocol=protocol,
        seed=typed["seed"],
        out=typed["out"],
    )


def load_config(path: str, overrides: list[str] | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        values = parse_config_text(fh.read(), source=path)
    if overrides:
        values = apply_overrides(values, overrides)
    return resolve(values)


def validate_config(cfg: RunConfig, check_paths: bool = True) -> tuple[list[str], list[str]]:
    """All validation checks with their outcomes: (passed lines, failed lines)."""
    passed: list[str] = []
    failed: list[str] = []

    def check(ok: bool, description: str, detail: str = ""):
        if ok:
            passed.append(f"ok: {description}")
        else:
            failed.append(f"FAIL: {description}" + (f" ({detail})" if detail else ""))

    d1 = cfg.stage1.d0 + cfg.stage2.d_w
    check(
        d1 % cfg.stage2.heads == 0,
        f"d0 + d_w = {d1} divisible by {cfg.stage2.heads} heads",
        f"{d1} % {cfg.stage2.heads} = {d1 % cfg.stage2.heads}",
    )
    check(cfg.stage1.d0 >= 2, f"prototype extent {cfg.stage1.d0} >= 2")
    check(cfg.stage1.lr > 0, f"stage1 lr {cfg.stage1.lr} > 0")
    check(cfg.stage2.lr > 0, f"stage2 lr {cfg.stage2.lr} > 0")
    check(cfg.stage2.temperature >= 0, f"temperature {cfg.stage2.temperature} >= 0")
    check(cfg.stage2.l_max >= 1, f"l_max {cfg.stage2.l_max} >= 1")
    check(cfg.protocol["folds"] >= 2, f"folds {cfg.protocol['folds']} >= 2")
    check(cfg.protocol["repeats"] >= 1, f"repeats {cfg.protocol['repeats']} >= 1")
    check(cfg.protocol["k"] >= 1, f"k {cfg.protocol['k']} >= 1")
    lams = cfg.protocol["lambdas"]
    check(
        all(0.0 < l <= 1.0 for l in lams),
        "all retained fractions in (0,1]",
        f"values {lams}",
    )
    check(
        all(t >= 0 for t in cfg.protocol["temperatures"]),
        "all sweep temperatures >= 0",
    )
    check(
        all(d >= 2 for d in cfg.protocol["d0_values"]),
        "all sweep prototype extents >= 2",
    )
    if cfg.protocol["drugs"] != "auto":
        try:
            _parse_int_list(cfg.protocol["drugs"])
            check(True, "protocol.drugs parses as an index list")
        except ValueError:
            check(False, "protocol.drugs parses as an index list", cfg.protocol["drugs"])
    if check_paths:
        for key in ("data.association", "data.drug_sim", "data.disease_sim"):
            path = cfg.data_paths[key]
            if not path:
                check(False, f"{key} is set", "missing required path")
            else:
                check(os.path.isfile(path), f"{key} file exists", path)
        for key in ("data.drug_ids", "data.disease_ids"):
            path = cfg.data_paths[key]
            if path:
                check(os.path.isfile(path), f"{key} file exists", path)
    return passed, failed


def write_resolved(cfg: RunConfig, path: str) -> None:
    """Persist the resolved config (defaults filled, overrides applied)."""
    lines = [f"{key}={cfg.raw[key]}" for key in sorted(cfg.raw)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
