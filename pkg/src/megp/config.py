"""Run configuration and the six shipped model presets."""

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

PROB_SUM_TOL = 1e-9


@dataclass
class MegpConfig:
    """Everything one evolutionary run needs besides the data and seed."""

    n_populations: int = 2
    pop_size: int = 30
    max_generations: int = 150
    stall_generations: int = 30
    genes_per_individual: int = 10
    max_tree_depth: int = 10
    ef_iso: float = 0.133
    ef_en: float = 0.0
    p_en: float = 0.0
    p_c: float = 0.84
    p_m: float = 0.14
    p_r: float = 0.02
    const_range: tuple = (-10.0, 10.0)
    tournament_size: int = 3
    epochs: int = 1000
    learning_rate: float = 0.001
    batch_divisor: int = 50
    ensemble_max_evals: int | None = None
    pairing: str = "rank"
    seed: int = 0

    def validate(self) -> None:
        if self.n_populations < 1:
            raise ConfigError("n_populations must be >= 1")
        if self.pop_size < 2:
            raise ConfigError("pop_size must be >= 2")
        if self.max_generations < 0:
            raise ConfigError("max_generations must be >= 0")
        if self.stall_generations < 1:
            raise ConfigError("stall_generations must be >= 1")
        if self.genes_per_individual < 1:
            raise ConfigError("genes_per_individual must be >= 1")
        if self.max_tree_depth < 1:
            raise ConfigError("max_tree_depth must be >= 1")
        if abs(self.p_c + self.p_m + self.p_r - 1.0) > PROB_SUM_TOL:
            raise ConfigError("p_c + p_m + p_r must sum to 1")
        for name in ("p_c", "p_m", "p_r", "p_en"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.ef_iso < 0 or self.ef_en < 0 or self.ef_iso + self.ef_en > 1:
            raise ConfigError("ef_iso and ef_en must be nonnegative with sum <= 1")
        if len(self.const_range) != 2 or self.const_range[0] >= self.const_range[1]:
            raise ConfigError("const_range must be (lo, hi) with lo < hi")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_divisor < 1:
            raise ConfigError("batch_divisor must be >= 1")
        if self.ensemble_max_evals is not None and self.ensemble_max_evals < 1:
            raise ConfigError("ensemble_max_evals must be >= 1")
        if self.pairing not in ("rank", "random"):
            raise ConfigError("pairing must be 'rank' or 'random'")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["const_range"] = list(self.const_range)
        if self.n_populations == 1:
            # single-population runs have no ensemble machinery
            del d["p_en"], d["ef_en"]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "MegpConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "const_range" in kwargs:
            kwargs["const_range"] = tuple(kwargs["const_range"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def with_overrides(self, **overrides) -> "MegpConfig":
        cfg = replace(self, **overrides)
        cfg.validate()
        return cfg


def default_model_configs() -> dict:
    """The six shipped presets: one baseline, five ensemble-probability mixes."""
    bgp = MegpConfig(n_populations=1, pop_size=60, ef_iso=0.133, ef_en=0.0, p_en=0.0)
    variants = {
        "MEGP_0": (0.133, 0.0, 0.0),
        "MEGP_25": (0.1, 0.033, 0.25),
        "MEGP_50": (0.066, 0.066, 0.5),
        "MEGP_75": (0.033, 0.1, 0.75),
        "MEGP_100": (0.0, 0.133, 1.0),
    }
    configs = {"BGP": bgp}
    for name, (ef_iso, ef_en, p_en) in variants.items():
        configs[name] = MegpConfig(n_populations=2, pop_size=30,
                                   ef_iso=ef_iso, ef_en=ef_en, p_en=p_en)
    return configs
