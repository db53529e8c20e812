"""Gated multi-task actor and critic networks.

Every network is the same three-part pipeline: per-group encoders, an
element-wise sum merge gated by the task's filter vector, then a shared
trunk feeding one small head per task. Disabled groups contribute an
exact zero to the merge, so a task's outputs are invariant to anything
happening in groups it filtered out, and no gradient ever reaches the
encoders of disabled groups.

Encoders depend only on the observation, so their outputs (Embeds) are
computed once per batch and reused across tasks and across trunk
evaluations with different actions. Tasks whose filters agree share one
trunk pass when they also share the trunk input (always true for the
actor; true for the critic when the action batch is shared).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bicup.nn.layers import LayerSpec
from bicup.nn.network import Network
from bicup.tasks import GROUPS, FilterVector, TaskSpec


@dataclass
class ObsSpec:
    """Group shapes plus the fixed normalization affine applied before
    the encoders. Image inputs are assumed already scaled to [0, 1]."""

    vector_sizes: dict            # group -> width, for proprio/features
    image_shape: tuple            # (stack, H, W)
    offsets: dict = field(default_factory=dict)   # group -> array
    scales: dict = field(default_factory=dict)    # group -> array

    def normalize(self, group: str, x: np.ndarray) -> np.ndarray:
        off = self.offsets.get(group)
        if off is None:
            return x
        return (x - off) * self.scales[group]


@dataclass
class NetSizes:
    actor_embed: int = 100
    critic_embed: int = 200
    actor_trunk: tuple = (200, 200)
    actor_head: int = 100
    critic_trunk: tuple = (400, 400)
    critic_head: int = 200
    conv_channels: tuple = (16, 16)
    conv_kernels: tuple = (4, 3)
    conv_strides: tuple = (2, 2)
    action_dim: int = 2
    var_min: float = 1e-2
    var_max: float = 1.0


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian over actions: squashed mean, bounded variance."""

    mean: np.ndarray   # (N, d)
    std: np.ndarray    # (N, d)


def sample_action(policy: GaussianPolicy, noise: np.ndarray) -> np.ndarray:
    return policy.mean + policy.std * noise


def log_prob(policy: GaussianPolicy, action: np.ndarray) -> np.ndarray:
    """Log density per row, computed in float64."""
    mean = policy.mean.astype(np.float64)
    std = policy.std.astype(np.float64)
    z = (action.astype(np.float64) - mean) / std
    return (-0.5 * (z * z).sum(axis=-1)
            - np.log(std).sum(axis=-1)
            - 0.5 * mean.shape[-1] * np.log(2.0 * np.pi))


def entropy(policy: GaussianPolicy) -> np.ndarray:
    std = policy.std.astype(np.float64)
    d = std.shape[-1]
    return np.log(std).sum(axis=-1) + 0.5 * d * (1.0 + np.log(2.0 * np.pi))


@dataclass
class ParamStore:
    """Online and target parameter trees for both networks.

    Component dicts map e.g. "enc/features", "trunk", "head/3" to flat
    layer-parameter dicts. Arrays are immutable by convention; updates
    swap in new arrays, so a shallow copy is a stable snapshot.
    """

    actor: dict
    critic: dict
    actor_target: dict
    critic_target: dict

    @staticmethod
    def _copy(tree: dict) -> dict:
        return {comp: dict(params) for comp, params in tree.items()}

    def sync_targets(self) -> None:
        self.actor_target = self._copy(self.actor)
        self.critic_target = self._copy(self.critic)

    def snapshot_actor(self) -> dict:
        return self._copy(self.actor)

    def tree(self) -> dict:
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target,
                "critic_target": self.critic_target}

    @staticmethod
    def from_tree(tree: dict) -> "ParamStore":
        return ParamStore(actor=tree["actor"], critic=tree["critic"],
                          actor_target=tree["actor_target"],
                          critic_target=tree["critic_target"])


@dataclass
class Embeds:
    """Encoder outputs for one batch of observations."""

    role: str
    rows: int
    emb: dict                    # group -> (N, width)
    tapes: dict                  # group -> encoder tape (None once sliced)

    def slice(self, rows: np.ndarray) -> "Embeds":
        """Row subset for further applies; backward is unavailable."""
        return Embeds(role=self.role, rows=len(rows),
                      emb={g: e[rows] for g, e in self.emb.items()},
                      tapes={})


@dataclass
class GroupApply:
    filt: FilterVector
    tasks: list
    trunk_tape: object
    head_tapes: dict
    gauss_caches: dict
    has_action: bool


@dataclass
class MultiTape:
    role: str
    embeds: Optional[Embeds]
    applies: list


def merge_groups(emb: dict, filt: FilterVector) -> np.ndarray:
    """Element-wise sum of the enabled group embeddings."""
    total = None
    for g in filt.enabled():
        total = emb[g] if total is None else total + emb[g]
    return total


class GatedNetworks:
    def __init__(self, obs_spec: ObsSpec, sizes: NetSizes, tasks: list,
                 dtype=np.float32):
        self.obs_spec = obs_spec
        self.sizes = sizes
        self.tasks = {t.task_id: t for t in tasks}
        self.dtype = np.dtype(dtype)
        for t in tasks:
            t.validate()
        used = set()
        for t in tasks:
            used.update(t.policy_filter.enabled())
            used.update(t.critic_filter.enabled())
        self.groups = tuple(g for g in GROUPS if g in used)
        self.actor_nets = self._build("actor", sizes.actor_embed, sizes.actor_trunk,
                                      sizes.actor_head, 2 * sizes.action_dim,
                                      trunk_extra=0)
        self.critic_nets = self._build("critic", sizes.critic_embed,
                                       sizes.critic_trunk, sizes.critic_head, 1,
                                       trunk_extra=sizes.action_dim)

    def _build(self, role, embed_width, trunk_widths, head_width, out_width,
               trunk_extra):
        nets = {}
        for g in self.groups:
            if g == "image":
                c0, (c1, c2) = self.obs_spec.image_shape[0], self.sizes.conv_channels
                k1, k2 = self.sizes.conv_kernels
                s1, s2 = self.sizes.conv_strides
                h = self.obs_spec.image_shape[1]
                w = self.obs_spec.image_shape[2]
                h1, w1 = (h - k1) // s1 + 1, (w - k1) // s1 + 1
                h2, w2 = (h1 - k2) // s2 + 1, (w1 - k2) // s2 + 1
                nets[f"enc/{g}"] = Network(f"{role}.enc.{g}", [
                    LayerSpec.conv2d(c0, c1, k1, s1),
                    LayerSpec.activation("elu"),
                    LayerSpec.conv2d(c1, c2, k2, s2),
                    LayerSpec.activation("elu"),
                    LayerSpec.dense(c2 * h2 * w2, embed_width),
                    LayerSpec.layer_norm(embed_width),
                    LayerSpec.activation("tanh"),
                ])
            else:
                nets[f"enc/{g}"] = Network(f"{role}.enc.{g}", [
                    LayerSpec.dense(self.obs_spec.vector_sizes[g], embed_width),
                    LayerSpec.layer_norm(embed_width),
                    LayerSpec.activation("tanh"),
                ])
        trunk_layers = []
        width = embed_width + trunk_extra
        for tw in trunk_widths:
            trunk_layers += [LayerSpec.dense(width, tw), LayerSpec.activation("elu")]
            width = tw
        nets["trunk"] = Network(f"{role}.trunk", trunk_layers)
        for tid in self.tasks:
            nets[f"head/{tid}"] = Network(f"{role}.head.{tid}", [
                LayerSpec.dense(width, head_width),
                LayerSpec.activation("elu"),
                LayerSpec.dense(head_width, out_width),
            ])
        return nets

    def nets(self, role: str) -> dict:
        return self.actor_nets if role == "actor" else self.critic_nets

    def init_store(self, rng: np.random.Generator) -> ParamStore:
        def init(nets):
            return {comp: net.init_params(rng, self.dtype)
                    for comp, net in nets.items()}
        store = ParamStore(actor=init(self.actor_nets), critic=init(self.critic_nets),
                           actor_target={}, critic_target={})
        store.sync_targets()
        return store

    # ---- encoder stage ----

    def embed(self, role: str, params: dict, obs: dict,
              groups: Optional[tuple] = None) -> Embeds:
        nets = self.nets(role)
        groups = self.groups if groups is None else groups
        emb, tapes = {}, {}
        rows = None
        for g in groups:
            x = self.obs_spec.normalize(g, np.asarray(obs[g]))
            x = x.astype(self.dtype, copy=False)
            emb[g], tapes[g] = nets[f"enc/{g}"].forward(params[f"enc/{g}"], x)
            rows = emb[g].shape[0]
        return Embeds(role=role, rows=rows, emb=emb, tapes=tapes)

    def embed_backward(self, embeds: Embeds, d_emb: dict) -> dict:
        """Backprop summed embedding gradients through the encoders."""
        nets = self.nets(embeds.role)
        grads = {}
        for g, dg in d_emb.items():
            if embeds.tapes.get(g) is None:
                raise RuntimeError(f"no tape for group {g} (sliced embeds?)")
            _, grads[f"enc/{g}"] = nets[f"enc/{g}"].backward(embeds.tapes[g], dg)
        return grads

    # ---- trunk + head stage ----

    def _gauss_transform(self, u: np.ndarray):
        d = self.sizes.action_dim
        u_mu, u_s = u[:, :d], u[:, d:]
        mean = np.tanh(u_mu)
        s = np.logaddexp(0.0, u_s)
        vraw = s * s
        ratio = vraw / (1.0 + vraw)
        var = self.sizes.var_min + (self.sizes.var_max - self.sizes.var_min) * ratio
        std = np.sqrt(var)
        cache = (mean, s, u_s, vraw, std)
        return GaussianPolicy(mean=mean, std=std), cache

    def _gauss_backward(self, cache, d_mean, d_std):
        mean, s, u_s, vraw, std = cache
        span = self.sizes.var_max - self.sizes.var_min
        du_mu = d_mean * (1.0 - mean * mean)
        dvar = d_std * 0.5 / std
        dvraw = dvar * span / ((1.0 + vraw) ** 2)
        ds = dvraw * 2.0 * s
        du_s = ds / (1.0 + np.exp(-u_s))
        return np.concatenate([du_mu, du_s], axis=1)

    def actor_apply_group(self, params: dict, embeds: Embeds, tasks: list):
        """Shared-trunk actor pass for tasks with identical policy filters."""
        filt = tasks[0].policy_filter
        merged = merge_groups(embeds.emb, filt)
        h, trunk_tape = self.actor_nets["trunk"].forward(params["trunk"], merged)
        out, head_tapes, caches = {}, {}, {}
        for t in tasks:
            u, head_tapes[t.task_id] = self.actor_nets[f"head/{t.task_id}"].forward(
                params[f"head/{t.task_id}"], h)
            out[t.task_id], caches[t.task_id] = self._gauss_transform(u)
        tape = GroupApply(filt=filt, tasks=tasks, trunk_tape=trunk_tape,
                          head_tapes=head_tapes, gauss_caches=caches,
                          has_action=False)
        return out, tape

    def critic_apply_group(self, params: dict, embeds: Embeds, action: np.ndarray,
                           tasks: list):
        """Shared-trunk critic pass; the action batch is shared by all tasks."""
        filt = tasks[0].critic_filter
        merged = merge_groups(embeds.emb, filt)
        x = np.concatenate([merged, action.astype(self.dtype, copy=False)], axis=1)
        h, trunk_tape = self.critic_nets["trunk"].forward(params["trunk"], x)
        out, head_tapes = {}, {}
        for t in tasks:
            q, head_tapes[t.task_id] = self.critic_nets[f"head/{t.task_id}"].forward(
                params[f"head/{t.task_id}"], h)
            out[t.task_id] = q[:, 0]
        tape = GroupApply(filt=filt, tasks=tasks, trunk_tape=trunk_tape,
                          head_tapes=head_tapes, gauss_caches={}, has_action=True)
        return out, tape

    def apply_group_backward(self, role: str, tape: GroupApply, d_out: dict,
                             d_emb_accum: dict, grads_accum: dict):
        """Backward one shared-trunk pass.

        d_out maps task_id to (d_mean, d_std) for the actor or d_q (N,)
        for the critic. Gradients accumulate into grads_accum; embedding
        gradients for enabled groups accumulate into d_emb_accum.
        Returns the action gradient for critic passes, else None.
        """
        nets = self.nets(role)
        dh_total = None
        for t in tape.tasks:
            tid = t.task_id
            if tid not in d_out:
                continue
            if tape.has_action:
                du = np.asarray(d_out[tid])[:, None].astype(self.dtype, copy=False)
            else:
                d_mean, d_std = d_out[tid]
                du = self._gauss_backward(tape.gauss_caches[tid], d_mean, d_std)
                du = du.astype(self.dtype, copy=False)
            dh, head_grads = nets[f"head/{tid}"].backward(tape.head_tapes[tid], du)
            _accumulate(grads_accum, f"head/{tid}", head_grads)
            dh_total = dh if dh_total is None else dh_total + dh
        if dh_total is None:
            return None
        dx, trunk_grads = nets["trunk"].backward(tape.trunk_tape, dh_total)
        _accumulate(grads_accum, "trunk", trunk_grads)
        d_action = None
        if tape.has_action:
            d = self.sizes.action_dim
            d_merged, d_action = dx[:, :-d], dx[:, -d:]
        else:
            d_merged = dx
        for g in tape.filt.enabled():
            if g in d_emb_accum:
                d_emb_accum[g] = d_emb_accum[g] + d_merged
            else:
                d_emb_accum[g] = d_merged
        return d_action

    # ---- whole-network convenience ops ----

    def group_tasks(self, tasks: list, which: str) -> list:
        """Partition tasks by identical filter vector, order-preserving."""
        groups = {}
        for t in tasks:
            filt = t.policy_filter if which == "policy" else t.critic_filter
            groups.setdefault(filt.astuple(), []).append(t)
        return list(groups.values())

    def actor_forward_tasks(self, params: dict, obs: dict, tasks: list):
        needed = _needed_groups(tasks, "policy")
        embeds = self.embed("actor", params, obs, needed)
        out, applies = {}, []
        for group in self.group_tasks(tasks, "policy"):
            pol, tape = self.actor_apply_group(params, embeds, group)
            out.update(pol)
            applies.append(tape)
        return out, MultiTape(role="actor", embeds=embeds, applies=applies)

    def actor_backward_tasks(self, tape: MultiTape, d_out: dict) -> dict:
        grads, d_emb = {}, {}
        for apply_tape in tape.applies:
            self.apply_group_backward("actor", apply_tape, d_out, d_emb, grads)
        grads.update(self.embed_backward(tape.embeds, d_emb))
        return grads

    def actor_forward(self, params: dict, obs: dict, task: TaskSpec):
        out, tape = self.actor_forward_tasks(params, obs, [task])
        return out[task.task_id], tape

    def critic_forward(self, params: dict, obs: dict, action: np.ndarray,
                       task: TaskSpec):
        needed = task.critic_filter.enabled()
        embeds = self.embed("critic", params, obs, needed)
        out, apply_tape = self.critic_apply_group(params, embeds, action, [task])
        return out[task.task_id], MultiTape(role="critic", embeds=embeds,
                                            applies=[apply_tape])

    def critic_backward(self, tape: MultiTape, d_q: dict,
                        need_action_grad: bool = False):
        grads, d_emb = {}, {}
        d_action = None
        for apply_tape in tape.applies:
            da = self.apply_group_backward("critic", apply_tape, d_q, d_emb, grads)
            if da is not None:
                d_action = da if d_action is None else d_action + da
        grads.update(self.embed_backward(tape.embeds, d_emb))
        if need_action_grad:
            return grads, d_action
        return grads

    # ---- spec-level ops on raw observation dicts ----

    def encode_groups(self, role: str, params: dict, obs: dict) -> dict:
        """All built group embeddings for one observation batch."""
        return self.embed(role, params, obs).emb


def _accumulate(acc: dict, comp: str, grads: dict) -> None:
    if comp not in acc:
        acc[comp] = grads
        return
    slot = acc[comp]
    for k, g in grads.items():
        if k in slot:
            slot[k] = slot[k] + g
        else:
            slot[k] = g


def _needed_groups(tasks: list, which: str) -> tuple:
    used = set()
    for t in tasks:
        filt = t.policy_filter if which == "policy" else t.critic_filter
        used.update(filt.enabled())
    return tuple(g for g in GROUPS if g in used)
