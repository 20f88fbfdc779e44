"""Experiment configuration: flat dotted key-value text, defaults, canonical form and hash"""

import hashlib
import os
from typing import Any, Callable, Dict, Optional, Tuple

from loguru import logger

from models.aggregator_state import AggregatorState
from models.attack_config import AttackConfig
from models.experiment import DataConfig, ExperimentConfig, FLConfig
from models.mask import CAPPED_MASK_KINDS, MaskPolicy
from models.network import DEFAULT_SHAPES, ModelSpec, final_fc_segment, parameter_count
from services.attack_service import known_attack
from utils.errors import ConfigError, InvalidParameterError

# CLI / config mask method names -> MaskPolicy kinds
MASK_METHODS = {
    "random": "random_global",
    "random-layer": "random_layerwise",
    "erk": "erk",
    "force": "force",
    "snip": "snip",
}


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parser: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else parser(text)
    return parse


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default); None defaults are filled in by resolve() or left absent
KEYS: Dict[str, Tuple[Callable[[str], Any], Any]] = {
    "seed": (int, 0),
    "model.arch": (str, "mlp2"),
    "model.input_shape": (_optional(str), None),
    "model.hidden": (_optional(str), None),
    "model.classes": (_optional(int), None),
    "data.source": (str, "blobs"),
    "data.dir": (_optional(str), None),
    "data.blobs.per_class": (int, 200),
    "data.blobs.dim": (_optional(int), None),
    "data.blobs.spread": (float, 0.3),
    "data.blobs.test_per_class": (int, 100),
    "data.partition": (str, "iid"),
    "data.alpha": (float, 1.0),
    "fl.clients": (int, 25),
    "fl.byzantine": (int, 5),
    "fl.beta": (float, 0.9),
    "fl.epochs": (int, 10),
    "fl.batch_size": (int, 32),
    "fl.lr": (_optional(float), None),
    "fl.lr_decay": (float, 0.1),
    "fl.lr_decay_at": (float, 0.75),
    "agg.kind": (str, "mean"),
    "agg.tau": (float, 1.0),
    "agg.clip_iters": (int, 1),
    "agg.krum_neighborhood": (_optional(int), None),
    "agg.krum_rule": (str, "classic"),
    "agg.multikrum_select": (_optional(int), None),
    "agg.rfa_eps": (float, 1e-8),
    "agg.rfa_max_iters": (int, 100),
    "agg.rfa_tol": (float, 1e-6),
    "agg.p": (int, 100),
    "agg.base": (str, "bulyan"),
    "attack.kind": (str, "none"),
    "attack.z": (_optional(float), None),
    "attack.z1_policy": (str, "fixed"),
    "attack.z1_max": (_optional(float), None),
    "attack.z2_max": (float, 1.5),
    "attack.z_hi": (float, 10.0),
    "attack.tol": (float, 1e-3),
    "attack.sign": (int, -1),
    "attack.mask_path": (_optional(str), None),
    "mask.method": (str, "random-layer"),
    "mask.delta": (float, 0.005),
    "mask.critical": (parse_bool, False),
    "mask.fc_cap": (_optional(float), None),
    "mask.steps": (int, 10),
    "mask.batch_size": (int, 32),
}

DEFAULT_LR = 0.1
SIGNSGD_LR = 0.01


def parse_model_spec(text: str, seed: int = 0) -> ModelSpec:
    """
    Parse "mlp2", "cnn2", "mlp2:784-64-10" or "cnn2:1x28x28-16-32-10"

    Args:
        text: Model spec string
        seed: Initialization seed stored in the spec

    Returns:
        ModelSpec
    """
    arch, _, sizes = text.strip().partition(":")
    try:
        if not sizes:
            return ModelSpec.default(arch, seed)
        parts = sizes.split("-")
        input_shape = tuple(int(s) for s in parts[0].split("x"))
        numbers = [int(p) for p in parts[1:]]
        if len(numbers) < 2:
            raise ConfigError(f"Model spec '{text}' needs hidden size(s) and a class count")
        return ModelSpec(arch, input_shape, numbers[-1], tuple(numbers[:-1]), seed)
    except (ValueError, InvalidParameterError) as e:
        raise ConfigError(f"Invalid model spec '{text}': {e}") from e


class ConfigService:
    """Parse, resolve, canonicalize and hash experiment configurations"""

    @staticmethod
    def parse_config_text(text: str) -> Dict[str, str]:
        """
        Parse `key = value` lines; blank lines and lines starting with # are ignored

        Raises:
            ConfigError: malformed line, unknown key or duplicate key
        """
        raw: Dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
            if key not in KEYS:
                raise ConfigError(f"line {lineno}: unknown key '{key}'")
            if key in raw:
                raise ConfigError(f"line {lineno}: duplicate key '{key}'")
            raw[key] = value
        return raw

    @staticmethod
    def resolve(raw: Dict[str, str]) -> Dict[str, Any]:
        """Typed config with every default filled in (None = unset optional key)"""
        resolved: Dict[str, Any] = {}
        for key, (parser, default) in KEYS.items():
            if key in raw:
                try:
                    resolved[key] = parser(raw[key])
                except ValueError as e:
                    raise ConfigError(f"Invalid value for '{key}': {raw[key]!r} ({e})") from e
            else:
                resolved[key] = default

        arch = resolved["model.arch"]
        if arch not in DEFAULT_SHAPES:
            raise ConfigError(f"Unsupported architecture '{arch}'")
        shapes = DEFAULT_SHAPES[arch]
        if resolved["model.input_shape"] is None:
            resolved["model.input_shape"] = "x".join(str(s) for s in shapes["input_shape"])
        if resolved["model.hidden"] is None:
            resolved["model.hidden"] = "-".join(str(h) for h in shapes["hidden"])
        if resolved["model.classes"] is None:
            resolved["model.classes"] = shapes["classes"]
        if resolved["fl.lr"] is None:
            resolved["fl.lr"] = SIGNSGD_LR if resolved["agg.kind"] == "signsgd" else DEFAULT_LR
        return resolved

    @staticmethod
    def canonicalize(resolved: Dict[str, Any]) -> str:
        """Sorted `key = value` lines; unset optional keys are omitted"""
        lines = [f"{key} = {_format_value(value)}" for key, value in sorted(resolved.items()) if value is not None]
        return "\n".join(lines) + "\n"

    @staticmethod
    def config_hash(resolved: Dict[str, Any]) -> str:
        return hashlib.sha256(ConfigService.canonicalize(resolved).encode("utf-8")).hexdigest()

    @staticmethod
    def model_spec(resolved: Dict[str, Any]) -> ModelSpec:
        try:
            input_shape = tuple(int(s) for s in str(resolved["model.input_shape"]).split("x"))
            hidden = tuple(int(h) for h in str(resolved["model.hidden"]).split("-"))
            return ModelSpec(resolved["model.arch"], input_shape, resolved["model.classes"], hidden, resolved["seed"])
        except (ValueError, InvalidParameterError) as e:
            raise ConfigError(f"Invalid model section: {e}") from e

    @staticmethod
    def build_experiment_config(resolved: Dict[str, Any]) -> ExperimentConfig:
        """
        Validate a resolved config and build the ExperimentConfig

        Raises:
            ConfigError: any invalid value or inconsistent combination
        """
        spec = ConfigService.model_spec(resolved)
        r = resolved
        attack_kind = r["attack.kind"]
        if not known_attack(attack_kind):
            raise ConfigError(f"Attack '{attack_kind}' is not available (register it with register_attack)")
        if r["mask.method"] not in MASK_METHODS:
            raise ConfigError(f"Unknown mask method '{r['mask.method']}'")
        if r["data.blobs.dim"] is not None and r["data.blobs.dim"] != spec.input_size:
            raise ConfigError(
                f"data.blobs.dim = {r['data.blobs.dim']} does not match the model input size {spec.input_size}"
            )
        if r["agg.kind"] == "gas" and r["agg.p"] > parameter_count(spec):
            raise ConfigError(f"agg.p = {r['agg.p']} exceeds the parameter count {parameter_count(spec)}")
        clients = r["fl.clients"]
        if r["agg.krum_neighborhood"] is not None and not 1 <= r["agg.krum_neighborhood"] <= clients - 1:
            raise ConfigError(f"agg.krum_neighborhood = {r['agg.krum_neighborhood']} must lie in [1, {clients - 1}]")
        if r["agg.multikrum_select"] is not None and not 1 <= r["agg.multikrum_select"] <= clients:
            raise ConfigError(f"agg.multikrum_select = {r['agg.multikrum_select']} must lie in [1, {clients}]")
        if r["mask.fc_cap"] is not None and MASK_METHODS[r["mask.method"]] not in CAPPED_MASK_KINDS:
            raise ConfigError(f"mask.fc_cap needs mask.method force or snip, got '{r['mask.method']}'")

        try:
            caps = ()
            if r["mask.fc_cap"] is not None:
                caps = ((final_fc_segment(spec), r["mask.fc_cap"]),)
            return ExperimentConfig(
                model=spec,
                data=DataConfig(
                    source=r["data.source"],
                    directory=r["data.dir"],
                    blobs_per_class=r["data.blobs.per_class"],
                    blobs_dim=r["data.blobs.dim"],
                    blobs_spread=r["data.blobs.spread"],
                    blobs_test_per_class=r["data.blobs.test_per_class"],
                    partition=r["data.partition"],
                    alpha=r["data.alpha"],
                ),
                fl=FLConfig(
                    clients=r["fl.clients"],
                    byzantine=r["fl.byzantine"],
                    beta=r["fl.beta"],
                    epochs=r["fl.epochs"],
                    batch_size=r["fl.batch_size"],
                    lr=r["fl.lr"],
                    lr_decay=r["fl.lr_decay"],
                    lr_decay_at=r["fl.lr_decay_at"],
                ),
                aggregator=AggregatorState(
                    kind=r["agg.kind"],
                    byzantine=r["fl.byzantine"],
                    tau=r["agg.tau"],
                    clip_iters=r["agg.clip_iters"],
                    krum_neighborhood=r["agg.krum_neighborhood"],
                    krum_rule=r["agg.krum_rule"],
                    multikrum_select=r["agg.multikrum_select"],
                    rfa_eps=r["agg.rfa_eps"],
                    rfa_max_iters=r["agg.rfa_max_iters"],
                    rfa_tol=r["agg.rfa_tol"],
                    p=r["agg.p"],
                    base=r["agg.base"],
                ),
                attack=AttackConfig(
                    kind=attack_kind,
                    z=r["attack.z"],
                    z1_policy=r["attack.z1_policy"],
                    z1_max=r["attack.z1_max"],
                    z2_max=r["attack.z2_max"],
                    z_hi=r["attack.z_hi"],
                    tol=r["attack.tol"],
                    sign=r["attack.sign"],
                ),
                mask=MaskPolicy(
                    kind=MASK_METHODS[r["mask.method"]],
                    delta=r["mask.delta"],
                    critical=r["mask.critical"],
                    caps=caps,
                    seed=r["seed"],
                    steps=r["mask.steps"],
                    batch_size=r["mask.batch_size"],
                ),
                mask_path=r["attack.mask_path"],
                seed=r["seed"],
            )
        except InvalidParameterError as e:
            raise ConfigError(str(e)) from e

    @staticmethod
    def load_config(path: str, seed: Optional[int] = None) -> Tuple[Dict[str, Any], ExperimentConfig]:
        """
        Read, resolve and validate a config file

        Args:
            path: Config file path
            seed: Overrides the file's seed when given

        Returns:
            (resolved flat config, ExperimentConfig)
        """
        if not os.path.isfile(path):
            raise ConfigError(f"Config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            raw = ConfigService.parse_config_text(f.read())
        resolved = ConfigService.resolve(raw)
        if seed is not None:
            resolved["seed"] = seed
        cfg = ConfigService.build_experiment_config(resolved)
        logger.info(f"[CONFIG] ✅ Loaded {path} (seed {resolved['seed']})")
        return resolved, cfg
