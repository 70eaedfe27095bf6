"""Run configuration: INI-style ``key = value`` files with sections, or JSON."""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import nn
from .baselines import SgdConfig, SlpsoConfig
from .errors import ConfigError, GmwError
from .hybrid import GmwConfig

ALGORITHMS = ("sgd", "slpso", "gmw-sgd", "gmw-sgd-moo")
PARAM_CLASSES = {"sgd": SgdConfig, "slpso": SlpsoConfig, "gmw-sgd": GmwConfig, "gmw-sgd-moo": GmwConfig}
# run-level keys that are not algorithm parameters
_RUN_KEYS = {"seed", "eval_budget"}

# conv(4, 5x5) / pool 4 / dense 16: 3,507 parameters for three CIFAR classes
DESK_CNN = "conv2d(3,4,5,5,1,0) relu maxpool(4,4) flatten dense(196,16) relu dense(16,{classes})"


@dataclass
class DataConfig:
    kind: str = "blobs"
    path: Optional[str] = None
    classes: Optional[list] = None
    n: int = 3000
    dims: int = 100
    blob_classes: int = 3
    spread: float = 4.0
    center_box: float = 1.0
    test_fraction: float = 0.5
    data_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("blobs", "cifar10"):
            raise ConfigError(f"data.kind must be 'blobs' or 'cifar10', got {self.kind!r}")
        if self.kind == "cifar10" and not self.path:
            raise ConfigError("data.path is required for cifar10")
        if isinstance(self.classes, int):
            self.classes = [self.classes]
        if isinstance(self.classes, str):
            self.classes = [int(c) for c in self.classes.replace(",", " ").split()]


@dataclass
class RunConfig:
    algorithm: str
    seed: int = 0
    eval_budget: Optional[int] = None
    out_dir: str = "runs/latest"
    data: DataConfig = field(default_factory=DataConfig)
    network: Optional[dict] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"algorithm {self.algorithm!r} is not one of: {', '.join(ALGORITHMS)}"
            )
        if isinstance(self.data, dict):
            self.data = build(DataConfig, self.data, "data")
        self.algo_config()  # validate early

    def algo_config(self):
        """Algorithm parameter dataclass with defaults filled in."""
        cls = PARAM_CLASSES[self.algorithm]
        values = dict(self.params)
        values["seed"] = self.seed
        values["eval_budget"] = self.eval_budget
        return build(cls, values, self.algorithm)

    def network_spec(self, n_features=None, n_classes=None) -> nn.NetworkSpec:
        if self.network:
            try:
                return nn.NetworkSpec.from_dict(self.network)
            except (KeyError, GmwError) as exc:
                raise ConfigError(f"network: {exc}") from None
        if self.data.kind == "cifar10":
            if not self.data.classes or len(self.data.classes) == 10:
                return nn.default_cifar_spec()
            return nn.NetworkSpec.from_text(DESK_CNN.format(classes=len(self.data.classes)), (3, 32, 32))
        return nn.mlp_spec([n_features or self.data.dims, 32, n_classes or self.data.blob_classes])

    def to_dict(self) -> dict:
        """Fully resolved echo: every value that influences the run."""
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "eval_budget": self.eval_budget,
            "data": dataclasses.asdict(self.data),
            "network": self.network_spec().to_dict(),
            "params": {k: v for k, v in self.algo_config().to_dict().items() if k not in _RUN_KEYS},
        }

    @classmethod
    def from_dict(cls, data: dict, out_dir: Optional[str] = None) -> "RunConfig":
        data = dict(data)
        per_algorithm = data.pop("algorithm_params", {})
        unknown = set(data) - {"algorithm", "seed", "eval_budget", "budget", "out_dir", "data", "network", "params"}
        if unknown:
            raise ConfigError(f"unknown run fields: {', '.join(sorted(unknown))}")
        if "algorithm" not in data:
            raise ConfigError("algorithm is required")
        if "budget" in data:
            data["eval_budget"] = data.pop("budget")
        if out_dir is not None:
            data["out_dir"] = out_dir
        data["params"] = {**data.get("params", {}), **per_algorithm.get(data["algorithm"], {})}
        return cls(**data)


def _coerce(value, default, name):
    if not isinstance(value, str):
        return value
    text = value.strip()
    if text.lower() in ("none", "null", ""):
        return None
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None
    if default is None and not name.endswith(".path"):
        for conv in (int, float):
            try:
                return conv(text)
            except ValueError:
                pass
    return text


def build(cls, values: dict, section: str):
    """Instantiate dataclass ``cls`` from loosely typed values, naming bad fields."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(
            f"{section}: unknown parameter(s) {', '.join(sorted(unknown))}; "
            f"permitted: {', '.join(fields)}"
        )
    kwargs = {}
    for name, raw in values.items():
        f = fields[name]
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[name] = _coerce(raw, default, f"{section}.{name}")
    try:
        return cls(**kwargs)
    except GmwError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def parse_ini(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config file: {exc}") from None
    out = {}
    if cp.has_section("run"):
        for k, v in cp.items("run"):
            key = {"budget": "eval_budget", "out": "out_dir"}.get(k, k)
            if key == "seed":
                v = int(v)
            elif key == "eval_budget":
                v = _coerce(v, None, "run.eval_budget")
            out[key] = v
    if cp.has_section("data"):
        out["data"] = dict(cp.items("data"))
    if cp.has_section("network"):
        net = dict(cp.items("network"))
        if "input_shape" in net:
            net["input_shape"] = [int(v) for v in net["input_shape"].replace(",", " ").split()]
        out["network"] = net
    if cp.has_section("params"):
        out["params"] = dict(cp.items("params"))
    per_algorithm = {s: dict(cp.items(s)) for s in cp.sections() if s in ALGORITHMS}
    if per_algorithm:
        out["algorithm_params"] = per_algorithm
    unknown = set(cp.sections()) - {"run", "data", "network", "params", *ALGORITHMS}
    if unknown:
        raise ConfigError(f"config file: unknown section(s) {', '.join(sorted(unknown))}")
    return out


def load_config(path) -> dict:
    """Raw dict from a JSON or INI-style file (JSON detected by content)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return parse_ini(text)
