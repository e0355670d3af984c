"""Flat key = value experiment configuration.

Schema (first non-blank line must be the header ``critwin-config v1``)::

    critwin-config v1
    experiment = susceptibility      # window_scan | tail | susceptibility |
                                     # local_limit | coupling_audit | verify | gen
    gamma = 0, 0.3                   # list of floats
    n = 10000, 100000                # list of ints (1e6 style accepted)
    alpha = -10, 0, 5                # window parameters ...
    # beta = 0.15                    # ... or absolute betas (not both)
    kernel = polynomial              # or exponential_lower
    seeds = 1..20                    # list and/or inclusive ranges a..b
    k_grid = 1, 8, 16, 32            # tail / local_limit thresholds
    reps = 1000                      # draws per seed (local_limit, coupling_audit)
    v = 1, 2, 5                      # coupling start vertices (v = m)
    modes = lower, upper             # coupling embeddings
    max_edges = 50000000             # caps: graph edge guard
    max_particles = 1000000          #        particles per tree
    wall_time = 3600                 #        seconds per cell
    output = results/run             # output path prefix

``#`` starts a comment. Unknown keys are an error.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from ..model import Kernel, ModelParams, resolve_beta

HEADER = "critwin-config v1"
EXPERIMENTS = ("window_scan", "tail", "susceptibility", "local_limit", "coupling_audit",
               "verify", "gen")
_KEYS = {"experiment", "gamma", "n", "alpha", "beta", "kernel", "seeds", "k_grid", "reps",
         "v", "modes", "max_edges", "max_particles", "wall_time", "output"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Caps:
    max_edges: int | None = None
    max_particles: int = 10**6
    wall_time: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    gamma: tuple[float, ...] = (0.0,)
    n: tuple[int, ...] = (1000,)
    alpha: tuple[float, ...] | None = None
    beta: tuple[float, ...] | None = None
    kernel: Kernel = Kernel.POLYNOMIAL
    seeds: tuple[int, ...] = (1,)
    k_grid: tuple[int, ...] = ()
    reps: int = 100
    v: tuple[int, ...] = (1,)
    modes: tuple[str, ...] = ("lower", "upper")
    caps: Caps = field(default_factory=Caps)
    output: str = "critwin"
    text: str = ""

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("gamma", "n", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"grid {name!r} must be nonempty")
        if (self.alpha is None) == (self.beta is None):
            if self.experiment != "verify":
                raise ConfigError("give exactly one of alpha and beta")
        for grid in (self.alpha, self.beta):
            if grid is not None and not grid:
                raise ConfigError("alpha/beta grid must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(not (0 <= s < 2**64) for s in self.seeds):
            raise ConfigError("seeds must be 64-bit unsigned integers")
        if list(self.k_grid) != sorted(set(self.k_grid)) or any(k < 1 for k in self.k_grid):
            raise ConfigError("k_grid must be strictly increasing positive integers")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        for mode in self.modes:
            if mode not in ("lower", "upper"):
                raise ConfigError(f"unknown mode {mode!r}")
        if self.experiment != "verify":
            for p in self.cells():
                try:
                    resolve_beta(p)
                except ValueError as exc:
                    raise ConfigError(f"cell {p} not resolvable: {exc}") from exc

    def window_values(self) -> list[tuple[str, float]]:
        if self.alpha is not None:
            return [("alpha", a) for a in self.alpha]
        return [("beta", b) for b in (self.beta or ())]

    def params(self, gamma: float, n: int, key: str, value: float) -> ModelParams:
        kw = {key: value}
        return ModelParams(gamma=gamma, n=n, kernel=self.kernel, **kw)

    def cells(self) -> list[ModelParams]:
        return [self.params(g, n, k, val) for g in self.gamma for n in self.n
                for k, val in self.window_values()]

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        if not offset:
            return self
        from dataclasses import replace
        return replace(self, seeds=tuple((s + offset) % 2**64 for s in self.seeds))

    def echo(self) -> dict:
        return {
            "experiment": self.experiment, "gamma": list(self.gamma), "n": list(self.n),
            "alpha": None if self.alpha is None else list(self.alpha),
            "beta": None if self.beta is None else list(self.beta),
            "kernel": self.kernel.value, "seeds": list(self.seeds),
            "k_grid": list(self.k_grid), "reps": self.reps, "v": list(self.v),
            "modes": list(self.modes),
            "caps": {"max_edges": self.caps.max_edges, "max_particles": self.caps.max_particles,
                     "wall_time": self.caps.wall_time},
            "output": self.output,
        }

    def content_hash(self) -> str:
        """Git-style blob hash of the configuration text."""
        data = self.text.encode()
        return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _num(tok: str, kind):
    tok = tok.strip()
    try:
        if kind is int:
            f = float(tok)
            if not f.is_integer():
                raise ValueError
            return int(tok) if tok.lstrip("-").isdigit() else int(f)
        return float(tok)
    except ValueError:
        raise ConfigError(f"bad {kind.__name__} {tok!r}") from None


def _list(val: str, kind) -> tuple:
    out = []
    for tok in val.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if kind is int and ".." in tok:
            a, b = tok.split("..", 1)
            lo, hi = _num(a, int), _num(b, int)
            if hi < lo:
                raise ConfigError(f"empty range {tok!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(_num(tok, kind))
    return tuple(out)


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse a config; ``experiment`` (e.g. from the CLI subcommand) fills in or
    must agree with the file's ``experiment`` key."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != HEADER:
        raise ConfigError(f"first line must be {HEADER!r}")
    raw: dict[str, str] = {}
    for ln in lines[1:]:
        if "=" not in ln:
            raise ConfigError(f"expected key = value, got {ln!r}")
        k, v = (s.strip() for s in ln.split("=", 1))
        if k not in _KEYS:
            raise ConfigError(f"unknown key {k!r}")
        if k in raw:
            raise ConfigError(f"duplicate key {k!r}")
        raw[k] = v
    exp = raw.get("experiment", "").replace("-", "_") or None
    if experiment is not None:
        experiment = experiment.replace("-", "_")
        if exp is not None and exp != experiment:
            raise ConfigError(f"config is for {exp!r}, not {experiment!r}")
        exp = experiment
    if exp is None:
        raise ConfigError("missing 'experiment'")
    kw: dict = {"experiment": exp, "text": text}
    if "gamma" in raw:
        kw["gamma"] = _list(raw["gamma"], float)
    if "n" in raw:
        kw["n"] = _list(raw["n"], int)
    if "alpha" in raw:
        kw["alpha"] = _list(raw["alpha"], float)
    if "beta" in raw:
        kw["beta"] = _list(raw["beta"], float)
    if "kernel" in raw:
        try:
            kw["kernel"] = Kernel(raw["kernel"])
        except ValueError:
            raise ConfigError(f"unknown kernel {raw['kernel']!r}") from None
    if "seeds" in raw:
        kw["seeds"] = _list(raw["seeds"], int)
    if "k_grid" in raw:
        kw["k_grid"] = _list(raw["k_grid"], int)
    if "reps" in raw:
        kw["reps"] = _num(raw["reps"], int)
    if "v" in raw:
        kw["v"] = _list(raw["v"], int)
    if "modes" in raw:
        kw["modes"] = tuple(m.strip() for m in raw["modes"].split(",") if m.strip())
    caps = {}
    if "max_edges" in raw:
        caps["max_edges"] = _num(raw["max_edges"], int)
    if "max_particles" in raw:
        caps["max_particles"] = _num(raw["max_particles"], int)
    if "wall_time" in raw:
        caps["wall_time"] = _num(raw["wall_time"], float)
    kw["caps"] = Caps(**caps)
    if "output" in raw:
        kw["output"] = raw["output"]
    return ExperimentConfig(**kw)


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), experiment)
