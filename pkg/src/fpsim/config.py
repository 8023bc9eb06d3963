"""Experiment configuration: JSON loading, defaults, strict validation.

Unknown keys are rejected (with their path) rather than silently
ignored, so a typo like "warmup_rounds" fails fast instead of running a
subtly different experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from fpsim.federation import STRATEGIES, FederationConfig


class ConfigError(ValueError):
    """Invalid or malformed experiment configuration."""


@dataclass
class DataConfig:
    train: int = 4096
    test: int = 512
    reference: int = 64
    classes: int = 8
    shape: tuple[int, int, int] = (3, 32, 32)
    alpha: float = 0.5
    noise_sigma: float = 0.1
    max_positives: int = 3


@dataclass
class ArchConfig:
    conv_channels: tuple[int, ...] = (8, 16)
    dense_units: tuple[int, ...] = (64,)


@dataclass
class ExperimentConfig:
    seed: int = 0
    clients: int = 4
    rounds: int = 20
    local_epochs: int = 3
    warmup: int = 9
    batch_size: int = 64
    learning_rate: float = 1e-3
    lrp_epsilon: float = 1e-9
    lrp_bias: str = "denominator"
    lrp_logits: str = "full"
    mask_timing: str = "every_step"
    strategies: tuple[str, ...] = ("standard", "proposed")
    pruning_rates: tuple[float, ...] = (0.2,)
    data: DataConfig = field(default_factory=DataConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)

    def federation_config(self, q: float) -> FederationConfig:
        return FederationConfig(
            clients=self.clients,
            rounds=self.rounds,
            local_epochs=self.local_epochs,
            warmup=self.warmup,
            pruning_rate=q,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            lrp_epsilon=self.lrp_epsilon,
            lrp_bias=self.lrp_bias,
            lrp_logits=self.lrp_logits,
            mask_timing=self.mask_timing,
        )

    def cells(self) -> list[tuple[str, float]]:
        """Sweep cells: standard once, each other strategy at each rate."""
        out: list[tuple[str, float]] = []
        if "standard" in self.strategies:
            out.append(("standard", 0.0))
        for strat in self.strategies:
            if strat == "standard":
                continue
            for q in self.pruning_rates:
                out.append((strat, q))
        return out


def _want(value, kinds, path: str):
    if isinstance(value, bool) and bool not in (
        kinds if isinstance(kinds, tuple) else (kinds,)
    ):
        raise ConfigError(f"{path}: expected {kinds}, got bool")
    if not isinstance(value, kinds):
        names = (
            ", ".join(k.__name__ for k in kinds)
            if isinstance(kinds, tuple)
            else kinds.__name__
        )
        raise ConfigError(
            f"{path}: expected {names}, got {type(value).__name__}"
        )
    return value


def _int(raw: dict, key: str, default: int, path: str, minimum: int = None,
         maximum: int = None) -> int:
    v = raw.pop(key, default)
    v = _want(v, int, f"{path}{key}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}{key}: must be >= {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(f"{path}{key}: must be <= {maximum}, got {v}")
    return v


def _float(raw: dict, key: str, default: float, path: str,
           minimum: float = None, exclusive_max: float = None) -> float:
    v = raw.pop(key, default)
    v = float(_want(v, (int, float), f"{path}{key}"))
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}{key}: must be >= {minimum}, got {v}")
    if exclusive_max is not None and v >= exclusive_max:
        raise ConfigError(
            f"{path}{key}: must be < {exclusive_max}, got {v}"
        )
    return v


def _choice(raw: dict, key: str, default: str, path: str,
            allowed: tuple[str, ...]) -> str:
    v = raw.pop(key, default)
    v = _want(v, str, f"{path}{key}")
    if v not in allowed:
        raise ConfigError(
            f"{path}{key}: must be one of {list(allowed)}, got {v!r}"
        )
    return v


def _reject_unknown(raw: dict, path: str):
    if raw:
        key = sorted(raw)[0]
        raise ConfigError(f"unknown key: {path}{key}")


def _parse_data(raw: dict) -> DataConfig:
    raw = dict(_want(raw, dict, "data"))
    p = "data."
    train = _int(raw, "train", 4096, p, minimum=1)
    test = _int(raw, "test", 512, p, minimum=1)
    reference = _int(raw, "reference", 64, p, minimum=1)
    classes = _int(raw, "classes", 8, p, minimum=1)
    shape_raw = raw.pop("shape", [3, 32, 32])
    shape_raw = _want(shape_raw, list, "data.shape")
    if len(shape_raw) != 3 or not all(
        isinstance(x, int) and not isinstance(x, bool) and x >= 1
        for x in shape_raw
    ):
        raise ConfigError(
            f"data.shape: expected three positive integers, got {shape_raw!r}"
        )
    alpha = _float(raw, "alpha", 0.5, p)
    if alpha <= 0:
        raise ConfigError(f"data.alpha: must be > 0, got {alpha}")
    noise_sigma = _float(raw, "noise_sigma", 0.1, p, minimum=0.0)
    max_positives = _int(raw, "max_positives", 3, p, minimum=1,
                         maximum=classes)
    _reject_unknown(raw, p)
    return DataConfig(
        train=train,
        test=test,
        reference=reference,
        classes=classes,
        shape=tuple(shape_raw),
        alpha=alpha,
        noise_sigma=noise_sigma,
        max_positives=max_positives,
    )


def _parse_arch(raw: dict) -> ArchConfig:
    raw = dict(_want(raw, dict, "arch"))

    def channel_list(key: str, default: list[int], minimum_len: int):
        v = _want(raw.pop(key, default), list, f"arch.{key}")
        if len(v) < minimum_len or not all(
            isinstance(x, int) and not isinstance(x, bool) and x >= 1
            for x in v
        ):
            raise ConfigError(
                f"arch.{key}: expected positive integers "
                f"(at least {minimum_len}), got {v!r}"
            )
        return tuple(v)

    conv = channel_list("conv_channels", [8, 16], 1)
    dense = channel_list("dense_units", [64], 0)
    _reject_unknown(raw, "arch.")
    return ArchConfig(conv_channels=conv, dense_units=dense)


def parse_config(raw: dict) -> ExperimentConfig:
    raw = dict(_want(raw, dict, "config"))
    p = ""
    seed = _int(raw, "seed", 0, p, minimum=0)
    clients = _int(raw, "clients", 4, p, minimum=1)
    rounds = _int(raw, "rounds", 20, p, minimum=1)
    local_epochs = _int(raw, "local_epochs", 3, p, minimum=1)
    warmup = _int(raw, "warmup", 9, p, minimum=1)
    if warmup > rounds:
        raise ConfigError(
            f"warmup: must be <= rounds ({rounds}), got {warmup}"
        )
    batch_size = _int(raw, "batch_size", 64, p, minimum=1)
    learning_rate = _float(raw, "learning_rate", 1e-3, p)
    if learning_rate <= 0:
        raise ConfigError(
            f"learning_rate: must be > 0, got {learning_rate}"
        )
    lrp_epsilon = _float(raw, "lrp_epsilon", 1e-9, p, minimum=0.0)
    lrp_bias = _choice(raw, "lrp_bias", "denominator", p,
                       ("denominator", "exclude"))
    lrp_logits = _choice(raw, "lrp_logits", "full", p, ("full", "positive"))
    mask_timing = _choice(raw, "mask_timing", "every_step", p,
                          ("every_step", "at_upload"))

    strategies_raw = _want(
        raw.pop("strategies", ["standard", "proposed"]), list, "strategies"
    )
    if not strategies_raw:
        raise ConfigError("strategies: must not be empty")
    for s in strategies_raw:
        if s not in STRATEGIES:
            raise ConfigError(
                f"strategies: must be drawn from {list(STRATEGIES)}, "
                f"got {s!r}"
            )
    if len(set(strategies_raw)) != len(strategies_raw):
        raise ConfigError("strategies: duplicate entries")

    rates_raw = _want(raw.pop("pruning_rates", [0.2]), list, "pruning_rates")
    rates = []
    for i, q in enumerate(rates_raw):
        q = float(_want(q, (int, float), f"pruning_rates[{i}]"))
        if not 0 <= q < 1:
            raise ConfigError(
                f"pruning_rates[{i}]: must lie in [0, 1), got {q}"
            )
        rates.append(q)
    non_standard = [s for s in strategies_raw if s != "standard"]
    if non_standard and not rates:
        raise ConfigError(
            "pruning_rates: must not be empty when a pruning strategy "
            "is listed"
        )

    data_cfg = _parse_data(raw.pop("data", {}))
    arch_cfg = _parse_arch(raw.pop("arch", {}))
    if data_cfg.train < clients:
        raise ConfigError(
            f"data.train: need at least one sample per client "
            f"({clients}), got {data_cfg.train}"
        )
    _reject_unknown(raw, p)
    return ExperimentConfig(
        seed=seed,
        clients=clients,
        rounds=rounds,
        local_epochs=local_epochs,
        warmup=warmup,
        batch_size=batch_size,
        learning_rate=learning_rate,
        lrp_epsilon=lrp_epsilon,
        lrp_bias=lrp_bias,
        lrp_logits=lrp_logits,
        mask_timing=mask_timing,
        strategies=tuple(strategies_raw),
        pruning_rates=tuple(rates),
        data=data_cfg,
        arch=arch_cfg,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: "
            f"{e.msg}"
        ) from e
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from e
    return parse_config(raw)
