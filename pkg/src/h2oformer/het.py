"""The HET block: hyperedge-aware spatial attention followed by temporal convolution.

Per frame, joints attend to each other through a four-part score: a hop
based relative-position term, joint-to-joint, joint-to-hyperedge, and
hyperedge-to-hyperedge.  The hyperedge-to-hyperedge scores also refresh the
hyperedge representation handed to the next block.  A multiscale temporal
convolution then mixes information across frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import Initializer, Module
from .numerics import Tensor, ops
from .topology import Topology

PARTS = ("a", "b", "c", "d")


class ConfigError(ValueError):
    """A block or model configuration that cannot be built."""


@dataclass
class HetBlockConfig:
    d_in: int
    d_out: int | None = None
    num_heads: int = 9
    kernel_sizes: tuple[int, ...] = (1, 3, 5)
    shortcut: str = "identity"
    role: str = "encoder"
    use_hypergraph: bool = True
    use_enhanced_hyperedge: bool = True
    # channels of the hyperedge state this block receives; None means it
    # computes its own from the block input
    e_dim: int | None = None
    # add a freshly pooled hyperedge feature to the received state
    recompute_hyperedges: bool = False
    share_relpos: bool = False
    norm_after_attention: bool = True
    norm_after_temporal: bool = True

    def __post_init__(self):
        if self.d_out is None:
            self.d_out = self.d_in
        self.kernel_sizes = tuple(self.kernel_sizes)
        if self.shortcut not in ("identity", "projection"):
            raise ConfigError(f"shortcut must be 'identity' or 'projection', got {self.shortcut!r}")
        if self.role not in ("encoder", "decoder"):
            raise ConfigError(f"role must be 'encoder' or 'decoder', got {self.role!r}")
        if self.shortcut == "identity" and self.d_in != self.d_out:
            raise ConfigError(f"identity shortcut needs d_in == d_out, got {self.d_in} -> {self.d_out}")
        for d in (self.d_in, self.d_out):
            if d % self.num_heads:
                raise ConfigError(f"channel count {d} is not divisible by {self.num_heads} heads")
        if any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ConfigError(f"temporal kernel sizes must be odd, got {list(self.kernel_sizes)}")
        if self.d_out % len(self.kernel_sizes):
            raise ConfigError(f"d_out {self.d_out} is not divisible into {len(self.kernel_sizes)} temporal branches")
        if self.use_enhanced_hyperedge and not self.use_hypergraph:
            raise ConfigError("the enhanced hyperedge path requires use_hypergraph")
        if self.mixes_hyperedges and self.e_dim != self.d_in:
            raise ConfigError(f"recompute_hyperedges needs the received state width {self.e_dim} "
                              f"to equal d_in {self.d_in}")

    @property
    def computes_hyperedges(self) -> bool:
        return self.use_hypergraph and self.e_dim is None

    @property
    def mixes_hyperedges(self) -> bool:
        return self.use_hypergraph and self.e_dim is not None and self.recompute_hyperedges

    @property
    def head_dim(self) -> int:
        return self.d_in // self.num_heads


@dataclass
class BlockDiagnostics:
    """Per-block attention snapshot; arrays are laid out (N, T, heads, V, V)."""

    parts: dict[str, np.ndarray] = field(default_factory=dict)
    combined: np.ndarray | None = None
    attention: np.ndarray | None = None
    hyperedges: np.ndarray | None = None


# -- per-frame building blocks ---------------------------------------------------

def hyperedge_features(x, topology: Topology, w_e) -> Tensor:
    """``H D_e^{-1} H^T X W_e`` applied to every frame of ``x`` (..., V, D)."""
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    pool = topology.pool.astype(x.dtype)
    if x.shape[-2] != pool.shape[0]:
        raise ops.ShapeError(f"hyperedge_features: {x.shape[-2]} joints, topology has {pool.shape[0]}")
    w_e = w_e if isinstance(w_e, Tensor) else Tensor(np.asarray(w_e, dtype=x.dtype))
    return ops.linear(ops.matmul(Tensor(pool), x), w_e)


def _keys(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return ops.transpose(x, axes)


def attention_scores(q, k, e_q=None, e_k=None, rphi=None, parts=PARTS) -> tuple[Tensor, dict[str, Tensor]]:
    """Four-part attention logits ``Q R_phi^T + Q K^T + Q E_K^T + E_Q E_K^T``.

    Inputs are laid out (..., heads, V, d); ``rphi`` is (heads, V, V, d).
    Only the terms named in ``parts`` are formed, and they are summed in
    the fixed order a, b, c, d so that dropping a trailing term reproduces
    the shorter sum bit for bit.
    """
    terms: dict[str, Tensor] = {}
    if "a" in parts:
        terms["a"] = ops.relpos_scores(q, rphi)
    if "b" in parts:
        terms["b"] = ops.matmul(q, _keys(k))
    if "c" in parts:
        terms["c"] = ops.matmul(q, _keys(e_k))
    if "d" in parts:
        terms["d"] = ops.matmul(e_q, _keys(e_k))
    ordered = [terms[p] for p in PARTS if p in terms]
    if not ordered:
        raise ValueError("attention_scores needs at least one part")
    total = ordered[0]
    for t in ordered[1:]:
        total = ops.add(total, t)
    return total, terms


def apply_attention(scores, values) -> Tensor:
    """Row-softmax of ``scores`` applied to ``values``."""
    scores = scores if isinstance(scores, Tensor) else Tensor(np.asarray(scores))
    values = values if isinstance(values, Tensor) else Tensor(np.asarray(values))
    return ops.matmul(ops.softmax_lastaxis(scores), values)


def update_hyperedges(e_q, e_k, e_v, part_d: Tensor | None = None) -> Tensor:
    """``softmax(E_Q E_K^T) E_V``; reuses a precomputed part d when given."""
    if part_d is None:
        e_q = e_q if isinstance(e_q, Tensor) else Tensor(np.asarray(e_q))
        e_k = e_k if isinstance(e_k, Tensor) else Tensor(np.asarray(e_k))
        part_d = ops.matmul(e_q, _keys(e_k))
    return apply_attention(part_d, e_v)


def split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, v, c = x.shape
    y = ops.reshape(x, (*lead, v, heads, c // heads))
    n = y.ndim
    axes = list(range(n - 3)) + [n - 2, n - 3, n - 1]
    return ops.transpose(y, axes)


def merge_heads(x: Tensor) -> Tensor:
    *lead, h, v, d = x.shape
    n = x.ndim
    axes = list(range(n - 3)) + [n - 2, n - 3, n - 1]
    return ops.reshape(ops.transpose(x, axes), (*lead, v, h * d))


# -- the block ----------------------------------------------------------------------

class HetBlock(Module):
    def __init__(self, config: HetBlockConfig, topology: Topology, prefix: str, init: Initializer):
        super().__init__(prefix, init)
        self.config = config
        self.topology = topology
        c = config
        d_in, d_out, h, dh = c.d_in, c.d_out, c.num_heads, c.head_dim
        self.scale = 1.0 / math.sqrt(dh)

        self.w_q = self.weight("W_Q", (d_in, d_in))
        self.w_k = self.weight("W_K", (d_in, d_in))
        self.w_v = self.weight("W_V", (d_in, d_out))
        m = topology.hop_table.m
        self.relpos = self.noise("R", (m, 1 if c.share_relpos else h, dh), 0.02)

        self.w_e = self.w_ek = self.w_eq = self.w_ev = None
        if c.use_hypergraph:
            e_dim = d_in if c.e_dim is None else c.e_dim
            if c.computes_hyperedges or c.mixes_hyperedges:
                self.w_e = self.weight("W_e", (d_in, d_in))
            self.w_ek = self.weight("W_EK", (e_dim, d_in))
            if c.use_enhanced_hyperedge:
                self.w_eq = self.weight("W_EQ", (e_dim, d_in))
                self.w_ev = self.weight("W_EV", (e_dim, d_out))

        self.bn_attn = self.norm("bn_attn", d_out) if c.norm_after_attention else None
        self.bn_temporal = self.norm("bn_temporal", d_out) if c.norm_after_temporal else None
        width = d_out // len(c.kernel_sizes)
        self.branches = []
        for k in c.kernel_sizes:
            kernel = self.weight(f"tconv{k}.kernel", (k, d_out, width), fan_in=k * d_out)
            bias = self.bias(f"tconv{k}.bias", width)
            self.branches.append((kernel, bias))

        self.w_s = self.b_s = None
        if c.shortcut == "projection":
            self.w_s = self.weight("W_s", (d_in, d_out))
            self.b_s = self.bias("b_s", d_out)

    @property
    def parts(self) -> tuple[str, ...]:
        c = self.config
        if not c.use_hypergraph:
            return ("a", "b")
        if not c.use_enhanced_hyperedge:
            return ("a", "b", "c")
        return PARTS

    def relpos_table(self) -> Tensor:
        """Gathered ``R_phi`` laid out (heads, V, V, d)."""
        c = self.config
        r = ops.gather_rows(self.relpos, self.topology.hops)           # V, V, h', d
        r = ops.transpose(r, (2, 0, 1, 3))
        if c.share_relpos and c.num_heads > 1:
            r = ops.concat([r] * c.num_heads, axis=0)
        return r

    def _norm(self, x: Tensor, site) -> Tensor:
        if site is None:
            return x
        gamma, beta, state = site
        return ops.batchnorm(x, gamma, beta, state, training=self.training)

    def multiscale_temporal_conv(self, x: Tensor) -> Tensor:
        """Parallel same-padded temporal branches, concatenated and added to ``x``."""
        outs = [ops.conv1d_dilated(x, kernel, bias) for kernel, bias in self.branches]
        y = ops.concat(outs, axis=-1)
        y = ops.relu(self._norm(y, self.bn_temporal))
        return ops.add(x, y)

    def shortcut(self, x: Tensor) -> Tensor:
        if self.w_s is None:
            return x
        return ops.linear(x, self.w_s, self.b_s)

    def forward(self, x: Tensor, e_in: Tensor | None = None, record: bool = False):
        """Returns ``(x_out, e_out, diagnostics)`` for ``x`` of shape (N, T, V, d_in)."""
        c = self.config
        if x.ndim != 4 or x.shape[-1] != c.d_in or x.shape[2] != self.topology.num_vertices:
            raise ops.ShapeError(f"{self.prefix}: expected (N, T, {self.topology.num_vertices}, {c.d_in}) "
                                 f"input, got {x.shape}")
        h = c.num_heads
        e = None
        if c.use_hypergraph:
            if c.computes_hyperedges:
                e = hyperedge_features(x, self.topology, self.w_e)
            elif e_in is None:
                raise ValueError(f"{self.prefix}: block expects a hyperedge state from the previous block")
            elif c.mixes_hyperedges:
                e = ops.add(e_in, hyperedge_features(x, self.topology, self.w_e))
            else:
                e = e_in

        q = split_heads(ops.linear(x, self.w_q), h)
        k = split_heads(ops.linear(x, self.w_k), h)
        v = split_heads(ops.linear(x, self.w_v), h)
        e_q = e_k = e_v = None
        if e is not None:
            e_k = split_heads(ops.linear(e, self.w_ek), h)
            if self.w_eq is not None:
                e_q = split_heads(ops.linear(e, self.w_eq), h)
                e_v = split_heads(ops.linear(e, self.w_ev), h)

        scores, terms = attention_scores(q, k, e_q, e_k, self.relpos_table(), self.parts)
        scaled = ops.mul(scores, np.asarray(self.scale, dtype=scores.dtype))
        attn = ops.softmax_lastaxis(scaled)
        x_a = merge_heads(ops.matmul(attn, v))

        if c.use_enhanced_hyperedge:
            e_out = merge_heads(update_hyperedges(None, None, e_v, part_d=terms["d"]))
        else:
            e_out = e

        y = ops.add(self._norm(x_a, self.bn_attn), self.shortcut(x))
        out = self.multiscale_temporal_conv(y)

        diag = None
        if record:
            diag = BlockDiagnostics(
                parts={p: t.data.copy() for p, t in terms.items()},
                combined=scores.data.copy(),
                attention=attn.data.copy(),
                hyperedges=None if e_out is None else e_out.data.copy(),
            )
        return out, e_out, diag
