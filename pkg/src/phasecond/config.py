"""Run configuration: one flat dataclass, serialized as key=value lines.

CLI flags override file values; the effective config is echoed into every
run directory and hashed into checkpoints so a loaded model can refuse
mismatched settings.
"""

import hashlib
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

DEFAULT_PATH = "LQ->LQ->Fo->LS->Fi->LS->Fi"
ITERATIVE_ALIGNER_PATH = "(LQ->Fi->LS->Fi)x2"


@dataclass
class RunConfig:
    # architecture
    path: str = DEFAULT_PATH
    hidden: int = 128
    fusion_layers: int = 2
    pointer_hops: int = 2
    max_span: int = 15
    mask_diagonal: bool = False
    # features
    word_dim: int = 100
    char_dim: int = 16
    char_filters: int = 100
    char_width: int = 5
    feat_dim: int = 8
    use_pos: bool = False
    use_ner: bool = False
    use_qtype: bool = True
    vectors: str = ""
    freeze_pretrained: bool = True
    # optimization
    dropout: float = 0.2
    lr: float = 0.0006
    batch_size: int = 32
    epochs: int = 30
    grad_clip: float = 5.0
    seed: int = 0
    early_stop_train_em: float = 0.0
    early_stop_dev_em: float = 0.0
    # data
    train_data: str = ""
    dev_data: str = ""

    def validate(self):
        if self.hidden < 1:
            raise ConfigError("hidden size must be positive")
        if self.fusion_layers < 1:
            raise ConfigError("fusion_layers must be >= 1")
        if self.pointer_hops < 1:
            raise ConfigError("pointer_hops must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_span < 1:
            raise ConfigError("max_span must be >= 1")
        return self


def to_text(cfg):
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    canonical = "\n".join(sorted(f"{k}={v}" for k, v in asdict(cfg).items()))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _coerce(name, kind, raw):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected {kind.__name__}, got {raw!r}") from None


def apply_overrides(cfg, overrides):
    """Set fields from a {name: string-or-value} mapping, with type coercion."""
    known = {f.name: f.type for f in fields(cfg)}
    types = {"int": int, "float": float, "bool": bool, "str": str}
    for name, value in overrides.items():
        if name not in known:
            raise ConfigError(f"unknown config key: {name}")
        kind = types.get(known[name], str) if isinstance(known[name], str) else known[name]
        if isinstance(value, str):
            value = _coerce(name, kind, value)
        setattr(cfg, name, value)
    return cfg


def from_file(path):
    cfg = RunConfig()
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            overrides[key.strip()] = value
    return apply_overrides(cfg, overrides)
