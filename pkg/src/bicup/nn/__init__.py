from bicup.nn.layers import LayerSpec, ShapeError
from bicup.nn.network import Network, TapeError
from bicup.nn.adam import AdamState, adam_init, adam_step
from bicup.nn.gradcheck import finite_diff_check
from bicup.nn.checkpoint import save_params, load_params

__all__ = [
    "LayerSpec", "ShapeError", "Network", "TapeError",
    "AdamState", "adam_init", "adam_step",
    "finite_diff_check", "save_params", "load_params",
]
