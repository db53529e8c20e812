"""Experiment configuration: a small line-oriented `key = value` format.

Dotted keys reach into nested component configs (`learner.retrace.gamma
= 0.97`). Types come from the dataclass defaults, so the parser needs
no separate schema, and every diagnostic carries the offending line.
An `arm` names one of the standard task-set presets; an explicit
`tasks` list overrides it.
"""

import dataclasses
from dataclasses import dataclass, field

from bicup.env.bic import EnvConfig
from bicup.gated import NetSizes
from bicup.learner import LearnerConfig
from bicup.tasks import tasks_from_labels

# preset task sets: labels plus whether critics drop the image group
ARMS = {
    "features_only": (("1F", "2F", "3F", "4F", "5F"), False),
    "pixels_only": (("1P", "2P", "3P", "4P", "5P"), False),
    "mixed": (("1F", "2F", "3F", "4F", "5F",
               "1P", "2P", "3P", "4P", "5P"), False),
    "mixed_asymmetric": (("1F", "2F", "3F", "4F", "5F",
                          "1P", "2P", "3P", "4P", "5P"), True),
    "features_distractor": (("1F", "2F", "3F", "4F", "5F", "8F"), False),
    "shaped_asymmetric": (("5F", "6F", "7F", "5P", "6P", "7P"), True),
}

MODES = ("sequential", "threaded")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    arm: str = "features_only"
    tasks: tuple = ()                 # labels; empty means "use the arm"
    asymmetric: bool = False
    episodes: int = 3000
    episode_len: int = 500
    switch_period: int = 100          # steps between intention redraws
    eval_every: int = 1               # episodes between evaluations
    learner_ratio: float = 1.0        # learner steps per environment step
    explore_eps: float = 0.0          # per-step uniform-action probability
    mode: str = "threaded"
    seeds: tuple = (0, 1, 2, 3, 4)
    out_dir: str = "runs/exp"
    checkpoint_every: int = 0         # episodes; 0 keeps only the final one
    replay_capacity: int = 100_000
    max_use: int = 2500
    learner_metrics: bool = False
    env: EnvConfig = field(default_factory=EnvConfig)
    sizes: NetSizes = field(default_factory=NetSizes)
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def task_specs(self) -> list:
        return tasks_from_labels(self.tasks, asymmetric=self.asymmetric)

    def eval_labels(self) -> tuple:
        specs = self.task_specs()
        return tuple(t.label for t in specs if t.reward_id == 5)

    def validate(self) -> None:
        if not self.tasks:
            raise ConfigError("no tasks configured")
        if self.episodes < 1 or self.episode_len < 1:
            raise ConfigError("episodes and episode_len must be positive")
        if self.switch_period < 1 or self.episode_len % self.switch_period:
            raise ConfigError(
                f"switch_period {self.switch_period} must divide "
                f"episode_len {self.episode_len}")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be positive")
        if self.learner_ratio < 0:
            raise ConfigError("learner_ratio must be >= 0")
        if not 0.0 <= self.explore_eps < 1.0:
            raise ConfigError("explore_eps must be in [0, 1)")
        if self.mode not in MODES:
            raise ConfigError(f"mode {self.mode!r} not in {MODES}")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if self.replay_capacity < self.episode_len:
            raise ConfigError("replay_capacity below one episode")
        try:
            for t in self.task_specs():
                t.validate()
            self.learner.validate()
            self.env.physics.validate()
            self.env.rewards.validate()
            self.env.render.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from None


def _cast(raw: str, template, key: str, line_no: int):
    raw = raw.strip()
    where = f"line {line_no}: {key}"
    if isinstance(template, bool):
        if raw.lower() in ("true", "false"):
            return raw.lower() == "true"
        raise ConfigError(f"{where}: expected true/false, got {raw!r}")
    if isinstance(template, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if isinstance(template, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    if isinstance(template, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        elem = template[0] if template else None
        return tuple(_cast_elem(p, elem, where) for p in parts)
    if isinstance(template, str):
        return raw
    raise ConfigError(f"{where}: unsupported value type {type(template).__name__}")


def _cast_elem(part: str, elem, where: str):
    if elem is None:
        for conv in (int, float):
            try:
                return conv(part)
            except ValueError:
                pass
        return part
    if isinstance(elem, bool):
        return part.lower() == "true"
    try:
        return type(elem)(part)
    except ValueError:
        raise ConfigError(f"{where}: bad element {part!r}") from None


def _apply(obj, path, raw: str, key: str, line_no: int):
    names = {f.name for f in dataclasses.fields(obj)}
    head = path[0]
    if head not in names:
        raise ConfigError(f"line {line_no}: unknown key {key!r}")
    current = getattr(obj, head)
    if len(path) == 1:
        if dataclasses.is_dataclass(current):
            raise ConfigError(
                f"line {line_no}: {key!r} names a section, set a field in it")
        return dataclasses.replace(
            obj, **{head: _cast(raw, current, key, line_no)})
    if not dataclasses.is_dataclass(current):
        raise ConfigError(f"line {line_no}: unknown key {key!r}")
    return dataclasses.replace(
        obj, **{head: _apply(current, path[1:], raw, key, line_no)})


def parse_config_text(text: str, name: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    seen = set()
    for line_no, full_line in enumerate(text.splitlines(), start=1):
        line = full_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{name}, line {line_no}: expected 'key = value', got "
                f"{full_line.strip()!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        try:
            cfg = _apply(cfg, key.split("."), raw, key, line_no)
        except ConfigError as e:
            raise ConfigError(f"{name}, {e}") from None
        seen.add(key)
    if cfg.arm not in ARMS and not cfg.tasks:
        raise ConfigError(f"{name}: unknown arm {cfg.arm!r}, expected one of "
                          f"{sorted(ARMS)} (or an explicit task list)")
    if not cfg.tasks:
        labels, arm_asym = ARMS[cfg.arm]
        cfg = dataclasses.replace(cfg, tasks=labels)
        if "asymmetric" not in seen:
            cfg = dataclasses.replace(cfg, asymmetric=arm_asym)
    try:
        cfg.validate()
    except ConfigError as e:
        raise ConfigError(f"{name}: {e}") from None
    return cfg


def parse_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config_text(f.read(), name=str(path))


def apply_override(cfg: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply one command line 'key=value' override to a parsed config.

    Validation is skipped so overrides can stack; call validate() once
    after the last one.
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r}: expected key=value")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    try:
        return _apply(cfg, key.split("."), raw, key, 0)
    except ConfigError as e:
        msg = str(e).replace("line 0: ", "", 1)
        raise ConfigError(f"override: {msg}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Flat dump of every field; parses back to an equal config."""
    lines = []

    def walk(obj, prefix):
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            key = f"{prefix}{f.name}"
            if dataclasses.is_dataclass(value):
                walk(value, key + ".")
            else:
                lines.append(f"{key} = {_format(value)}")

    walk(cfg, "")
    return "\n".join(lines) + "\n"
