"""bicup: multi-task off-policy RL with per-task state spaces, plus a
planar ball-in-a-cup environment and an experiment harness."""

__version__ = "0.1.0"
