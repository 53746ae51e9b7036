"""Run configuration: built-in defaults < key=value config file < command-line flags."""

from __future__ import annotations

from pathlib import Path

from .attention import AttentionVariant
from .training import DEFAULT_LAMBDAS, DEFAULT_LEARNING_RATES


class ConfigError(ValueError):
    pass


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_str(text):
    return None if text in (None, "", "none") else str(text)


# key -> (parser, default)
SCHEMA = {
    "data_dir": (_opt_str, None),
    "output_dir": (_opt_str, "runs/default"),
    "lambda": (float, 0.5),
    "lr": (float, 5e-5),
    "epochs": (int, 50),
    "batch_size": (int, 32),
    "seed": (int, 1),
    "seeds": (_ints, []),
    "variant": (str, AttentionVariant.FULL.value),
    "lrs": (_floats, list(DEFAULT_LEARNING_RATES)),
    "lambdas": (_floats, list(DEFAULT_LAMBDAS)),
    "constrain_bio": (_bool, False),
    "d_model": (int, 64),
    "n_layers": (int, 2),
    "n_heads": (int, 4),
    "dropout": (float, 0.1),
    "max_len": (int, 128),
    "weight_decay": (float, 0.01),
    "max_grad_norm": (float, 1.0),
    "plots": (_bool, True),
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def resolve(flags: dict, config_path: str | Path | None = None) -> dict:
    """Merge defaults, config file and non-None flags, then type-check."""
    merged = {k: default for k, (_, default) in SCHEMA.items()}
    if config_path:
        merged.update(parse_config_file(config_path))
    merged.update({k: v for k, v in flags.items() if k in SCHEMA and v is not None})
    out = {}
    for key, (parse, _) in SCHEMA.items():
        try:
            out[key] = parse(merged[key]) if merged[key] is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {merged[key]!r}") from exc
    if not 0.0 < out["lambda"] < 1.0:
        raise ConfigError("lambda must be in (0,1)")
    for lam in out["lambdas"]:
        if not 0.0 < lam < 1.0:
            raise ConfigError("lambda must be in (0,1)")
    try:
        AttentionVariant(out["variant"])
    except ValueError:
        choices = ", ".join(v.value for v in AttentionVariant)
        raise ConfigError(f"variant must be one of {choices}") from None
    return out


def dump(config: dict) -> str:
    lines = []
    for key in SCHEMA:
        value = config[key]
        if isinstance(value, (list, tuple)):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={'' if value is None else value}")
    return "\n".join(lines) + "\n"
