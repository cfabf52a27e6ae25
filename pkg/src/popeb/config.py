"""Flat ``key = value`` experiment configuration.

Every experiment has a full set of defaults; a config file only lists the
keys it changes. Lists are comma separated and integer ranges may be written
``0-19``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .core import check_seed

EXPERIMENTS = ("gamma-poisson", "blr", "gmm", "lda")

METHODS = {
    "gamma-poisson": ("bayes", "eb", "popeb-map", "popeb-fb"),
    "blr": ("bayes", "popeb-map", "popeb-fb"),
    "gmm": ("cavi", "bumpvi"),
    "lda": ("cavi", "bumpvi"),
}

DEFAULTS = {
    "gamma-poisson": {
        "methods": "bayes,eb,popeb-map,popeb-fb",
        "seeds": "0-19",
        "B": "100",
        "n": "500",
        "n_test": "2000",
        "rate1": "5",
        "rate2": "50",
        "contamination": "0.05",
        "prior_shape": "2.5",
        "prior_rate": "0.5",
        "sharp_shape": "500",
        "sharp_rate": "100",
        "priors": "base,sharp",
        "pmf_kmax": "100",
    },
    "blr": {
        "methods": "bayes,popeb-map,popeb-fb",
        "seeds": "0",
        "B": "25",
        "n": "252",
        "split": str(200 / 252),
        "n_splits": "6",
        "data": "synthetic",
        "target_scale": "1.0",
        "n_features": "14",
        "outlier_frac": "0.05",
    },
    "gmm": {
        "methods": "cavi,bumpvi",
        "seeds": "0-9",
        "B": "10",
        "rho": "0.1",
        "K": "5,10",
        "n": "2500",
        "split": "0.8",
        "data": "synthetic",
        "dim": "10",
        "n_clusters": "8",
        "contamination": "0.05",
        "criterion": "params",
        "tol": "1e-3",
        "cavi_tol": "1e-3",
        "max_iter": "500",
    },
    "lda": {
        "methods": "cavi,bumpvi",
        "seeds": "0-9",
        "B": "10",
        "rho": "0.05",
        "K": "2,4,8",
        "n": "300",
        "split": str(2 / 3),
        "data": "synthetic",
        "vocab": "",
        "V": "500",
        "n_topics": "6",
        "doc_length": "80",
        "contamination": "0.05",
        "eta": "0.005",
        "criterion": "params",
        "tol": "1e-2",
        "cavi_tol": "1e-2",
        "max_iter": "500",
        "score_iters": "20",
        "top_words": "10",
    },
}


class ConfigError(ValueError):
    pass


def parse_int_list(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_list(text: str) -> list[str]:
    return [p.strip() for p in str(text).split(",") if p.strip()]


def read_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key] = value
    return values


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict[str, str] = field(default_factory=dict)
    out: Path = Path("results")

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        unknown = set(self.values) - set(DEFAULTS[self.experiment]) - {"experiment", "out"}
        if unknown:
            raise ConfigError(f"unknown keys for {self.experiment}: {sorted(unknown)}")
        if "experiment" in self.values and self.values["experiment"] != self.experiment:
            raise ConfigError(
                f"config is for {self.values['experiment']!r}, not {self.experiment!r}"
            )
        merged = dict(DEFAULTS[self.experiment])
        merged.update({k: v for k, v in self.values.items() if k not in ("experiment", "out")})
        self.values = merged
        bad = set(self.methods) - set(METHODS[self.experiment])
        if bad or not self.methods:
            raise ConfigError(f"invalid methods {sorted(bad)} for {self.experiment}")
        if "split" in self.values and not 0 < self.float("split") < 1:
            raise ConfigError("split fraction must lie in (0, 1)")
        for s in self.seeds:
            check_seed(s)

    @classmethod
    def load(cls, experiment, path=None, out=None, seed=None) -> "ExperimentConfig":
        values = read_config_file(path) if path else {}
        if seed is not None:
            values["seeds"] = str(check_seed(seed))
        out = Path(out) if out is not None else Path(values.get("out", "results"))
        return cls(experiment, values, out)

    # typed access

    def get(self, key) -> str:
        return self.values[key]

    def int(self, key) -> int:
        return int(float(self.values[key]))

    def float(self, key) -> float:
        return float(self.values[key])

    def ints(self, key) -> list[int]:
        return parse_int_list(self.values[key])

    @property
    def methods(self) -> list[str]:
        return parse_list(self.values["methods"])

    @property
    def seeds(self) -> list[int]:
        return parse_int_list(self.values["seeds"])

    def canonical(self) -> str:
        """Resolved settings that determine results (seeds and output dir excluded)."""
        items = sorted((k, v) for k, v in self.values.items() if k != "seeds")
        return "".join(f"{k}={v}\n" for k, v in [("experiment", self.experiment), *items])

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]
