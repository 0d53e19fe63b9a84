"""Model hyper-parameters and their ``key = value`` file format."""

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import ValidationError


@dataclass(frozen=True)
class ModelConfig:
    n_vocab: int = 1000
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ffn: int = 256
    max_seq: int = 128
    k_scale: float = 100.0
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name != "seed" and not getattr(self, f.name) > 0:
                raise ValidationError(f"{f.name} must be positive, got {getattr(self, f.name)}")
        if self.d_model % self.n_heads:
            raise ValidationError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")

    @property
    def head_dim(self):
        return self.d_model // self.n_heads

    def replace(self, **kw):
        return ModelConfig(**{**asdict(self), **kw})

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text):
        """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or key not in types:
                raise ValidationError(f"line {lineno}: cannot parse {raw!r}")
            try:
                kw[key] = float(value) if types[key] in (float, "float") else int(value)
            except ValueError:
                raise ValidationError(f"line {lineno}: bad value for {key}: {value!r}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_text())


TOY = ModelConfig()
