"""Flat ``key=value`` run configuration with command-line overrides.

A config file holds one assignment per line; ``#`` starts a comment.
Overrides given as ``key=value`` strings win over the file. Values ending
in ``.path`` and the keys in :data:`PATH_KEYS` are paths: relative ones are
resolved against the config file's directory (overrides against the
working directory).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .graph import KnowledgeGraph, RelationLayer, build_graph, load_layer, load_node_types
from .rotate import TrainConfig
from .split import SplitBundle, read_manifest, split_disease_gene
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


PATH_KEYS = frozenset({"nodes", "out", "model", "split.dir", "external.truth", "external.list",
                       "external.excise", "eval.truth", "params"})

DEFAULTS: dict[str, str] = {
    "seed": "0",
    "out": "out",
    "dg_layer": "DG",
    "pp_layer": "PP",
    "gene_type": "gene",
    "ks": "10,30,100",
    "report.hits": "30",
    "split.ratios": "0.8,0.1,0.1",
    "split.cover": "all",
    "search.budget": "20",
    "search.warmup": "5",
    "search.grace": "2",
    "search.weight_low": "0.01",
    "search.weight_high": "100",
    "search.enqueue_uniform": "true",
    "baseline.limit": "200",
    "baseline.restart_grid": "0.1,0.3,0.5,0.7,0.9",
    "baseline.tol": "1e-10",
    "baseline.skip": "",
    "baseline.hits": "30,100",
    "external.k": "50",
}
for _f in dataclasses.fields(TrainConfig):
    if _f.name not in ("relation_weight", "seed"):
        DEFAULTS[f"train.{_f.name}"] = str(_f.default).lower() if isinstance(_f.default, bool) else str(_f.default)
for _f in dataclasses.fields(SynthConfig):
    if _f.name != "seed":
        DEFAULTS[f"synth.{_f.name}"] = str(_f.default)


def parse_assignments(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{no}: empty key")
        out[key] = value
    return out


def _is_path(key: str) -> bool:
    return key in PATH_KEYS or key.endswith(".path")


def _resolve(value: str, base: Path) -> str:
    if not value:
        return value
    p = Path(value)
    return str(p if p.is_absolute() else (base / p).resolve())


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, str]

    @classmethod
    def load(cls, path=None, overrides: Iterable[str] = (), cwd=None) -> "RunConfig":
        """Defaults, then the file, then a ``params`` file (e.g. searched
        best parameters), then the overrides."""
        cwd = Path(cwd or Path.cwd())
        file_values: dict[str, str] = {}
        base = cwd
        if path is not None:
            path = Path(path)
            file_values = parse_assignments(_read(path).splitlines(), str(path))
            base = path.resolve().parent
        flag_values = parse_assignments(overrides, "--set")
        layers = [(file_values, base), (flag_values, cwd)]
        params = flag_values.get("params") or file_values.get("params")
        if params:
            root = cwd if flag_values.get("params") else base
            ppath = Path(_resolve(params, root))
            layers.insert(1, (parse_assignments(_read(ppath).splitlines(), str(ppath)), ppath.parent))
        merged = dict(DEFAULTS)
        merged["out"] = _resolve(DEFAULTS["out"], base)
        for values, root in layers:
            for k, v in values.items():
                merged[k] = _resolve(v, root) if _is_path(k) else v
        return cls(merged)

    # --- typed access ----------------------------------------------------
    def has(self, key: str) -> bool:
        return bool(self.values.get(key, ""))

    def get(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default

    def _typed(self, key: str, conv, what: str):
        raw = self.get(key)
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r}: expected {what}, got {raw!r}") from None

    def int(self, key: str) -> int:
        return self._typed(key, int, "an integer")

    def float(self, key: str) -> float:
        return self._typed(key, float, "a number")

    def bool(self, key: str) -> bool:
        def conv(s):
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        return self._typed(key, conv, "a boolean")

    def list(self, key: str) -> list[str]:
        return [x.strip() for x in self.get(key, "").split(",") if x.strip()]

    def floats(self, key: str) -> tuple[float, ...]:
        return self._typed(key, lambda s: tuple(float(x) for x in s.split(",") if x.strip()), "numbers")

    def ints(self, key: str) -> tuple[int, ...]:
        return self._typed(key, lambda s: tuple(int(x) for x in s.split(",") if x.strip()), "integers")

    def path(self, key: str) -> Path:
        value = self.get(key)
        if not value:
            raise ConfigError(f"missing config key {key!r}")
        return Path(value)

    def prefixed(self, prefix: str) -> dict[str, str]:
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def header(self) -> dict[str, str]:
        return dict(sorted(self.values.items()))

    def with_values(self, **values: str) -> "RunConfig":
        return RunConfig({**self.values, **values})

    @property
    def seed(self) -> int:
        return self.int("seed")

    @property
    def out(self) -> Path:
        return self.path("out")


# --- builders from a config --------------------------------------------------

def train_config(cfg: RunConfig) -> TrainConfig:
    kwargs = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name in ("relation_weight", "seed"):
            continue
        key = f"train.{f.name}"
        kind = type(f.default)
        kwargs[f.name] = cfg.bool(key) if kind is bool else cfg.int(key) if kind is int else cfg.float(key)
    kwargs["relation_weight"] = {r: float(v) for r, v in sorted(cfg.prefixed("weight.").items())}
    kwargs["seed"] = cfg.seed
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training settings: {exc}") from exc


def synth_config(cfg: RunConfig) -> SynthConfig:
    return SynthConfig.from_mapping({**cfg.prefixed("synth."), "seed": cfg.get("seed")})


def load_layers(cfg: RunConfig) -> tuple[list[RelationLayer], dict[str, str]]:
    tags = cfg.list("layers")
    if not tags:
        raise ConfigError("config key 'layers' must list at least one layer tag")
    layers = []
    for tag in tags:
        layers.append(load_layer(cfg.path(f"layer.{tag}.path"), tag,
                                 cfg.get(f"layer.{tag}.relation", tag),
                                 cfg.bool(f"layer.{tag}.symmetric") if cfg.has(f"layer.{tag}.symmetric")
                                 else False))
    return layers, load_node_types(cfg.path("nodes"))


def load_graph(cfg: RunConfig) -> tuple[list[RelationLayer], dict[str, str], KnowledgeGraph]:
    layers, types = load_layers(cfg)
    return layers, types, build_graph(layers, types)


def disease_gene_split(cfg: RunConfig, graph: KnowledgeGraph) -> SplitBundle:
    """The fixed disease-gene split: read from ``split.dir`` when given,
    otherwise recomputed from the seed (identical on every call)."""
    from .experiment import substream_seed

    if cfg.has("split.dir"):
        bundle = read_manifest(cfg.path("split.dir"))
        dg = graph.layer(cfg.get("dg_layer"))
        unknown = [t for t in bundle.valid + bundle.test if t not in set(dg.triples)]
        if unknown:
            raise ConfigError(f"split manifest holds {len(unknown)} triples absent from layer {dg.tag}")
        return bundle
    return split_disease_gene(graph, cfg.floats("split.ratios"), substream_seed(cfg.seed, "split"),
                              cfg.get("dg_layer"), cfg.get("split.cover"))
