"""Task definitions: reward index plus per-network state-group filters.

Observations are split into three groups: "proprio" (arm-side readings,
always required so the policy's inputs stay Markov), "features" (ball
readings from the tracker) and "image" (stacked camera frames). Each
task carries one binary filter per network telling which groups its
policy and its critic consume. Filters are the only thing that differs
between a features-based and a pixels-based variant of the same reward.
"""

from dataclasses import dataclass, replace

GROUPS = ("proprio", "features", "image")
NUM_REWARDS = 8


@dataclass(frozen=True)
class FilterVector:
    """Binary gate per state group."""

    proprio: bool
    features: bool
    image: bool

    def enabled(self) -> tuple:
        return tuple(g for g in GROUPS if getattr(self, g))

    def astuple(self) -> tuple:
        return (self.proprio, self.features, self.image)

    def validate(self) -> None:
        if not self.proprio or not (self.features or self.image):
            raise ValueError(
                f"filter {self.astuple()} leaves the state non-Markov: proprio "
                "plus at least one of features/image must be enabled")


FEATURES_FILTER = FilterVector(proprio=True, features=True, image=False)
PIXELS_FILTER = FilterVector(proprio=True, features=False, image=True)
ALL_FILTER = FilterVector(proprio=True, features=True, image=True)


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    reward_id: int
    policy_filter: FilterVector
    critic_filter: FilterVector
    label: str = ""

    def validate(self) -> None:
        if not 1 <= self.reward_id <= NUM_REWARDS:
            raise ValueError(f"reward id {self.reward_id} outside 1..{NUM_REWARDS}")
        self.policy_filter.validate()
        self.critic_filter.validate()


def task_from_label(label: str, task_id: int, asymmetric: bool = False) -> TaskSpec:
    """Parse labels like "5F" or "3P": reward index plus state-space suffix.

    asymmetric=True switches every critic to the features filter
    regardless of what the policy sees (cheap critic, pixels-free).
    """
    label = label.strip().upper()
    if len(label) < 2 or label[-1] not in ("F", "P"):
        raise ValueError(f"bad task label {label!r}, expected e.g. '5F' or '2P'")
    try:
        reward_id = int(label[:-1])
    except ValueError:
        raise ValueError(f"bad task label {label!r}") from None
    policy = FEATURES_FILTER if label[-1] == "F" else PIXELS_FILTER
    critic = FEATURES_FILTER if asymmetric else policy
    task = TaskSpec(task_id=task_id, reward_id=reward_id,
                    policy_filter=policy, critic_filter=critic, label=label)
    task.validate()
    return task


def tasks_from_labels(labels, asymmetric: bool = False) -> list:
    tasks = [task_from_label(lab, i, asymmetric) for i, lab in enumerate(labels)]
    if len({t.label for t in tasks}) != len(tasks):
        raise ValueError(f"duplicate task labels in {list(labels)}")
    return tasks


def with_critic_filter(task: TaskSpec, critic_filter: FilterVector) -> TaskSpec:
    new = replace(task, critic_filter=critic_filter)
    new.validate()
    return new
