"""The full network: input embedding, HET encoder/decoder, recognition head."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .het import BlockDiagnostics, ConfigError, HetBlock, HetBlockConfig, merge_heads, split_heads
from .nn import Initializer, Module
from .numerics import Tensor, ops, resolve_dtype
from .topology import Topology


def mask_count(rate: float, num_joints: int) -> int:
    """Joints hidden per sequence: ``rate * |V|`` rounded half up."""
    return int(math.floor(rate * num_joints + 0.5))


@dataclass
class ModelConfig:
    num_joints: int = 22
    in_channels: int = 3
    d_model: int = 216
    temporal_len: int = 52
    encoder_blocks: int = 6
    decoder_blocks: int = 2
    num_heads: int = 9
    kernel_sizes: tuple[int, ...] = (1, 3, 5)
    decoder_dims: tuple[int, ...] | None = None
    head_hidden: int | None = None
    topology: str = "imigue22"
    use_hypergraph: bool = True
    use_enhanced_hyperedge: bool = True
    use_decoder: bool = True
    masking_rate: float = 0.0
    share_relpos: bool = False
    recompute_hyperedges: bool = False
    dtype: str = "float64"

    def __post_init__(self):
        self.kernel_sizes = tuple(self.kernel_sizes)
        if self.decoder_dims is not None:
            self.decoder_dims = tuple(self.decoder_dims)
        if self.encoder_blocks < 1:
            raise ConfigError(f"encoder_blocks must be >= 1, got {self.encoder_blocks}")
        if self.decoder_blocks < 0:
            raise ConfigError(f"decoder_blocks must be >= 0, got {self.decoder_blocks}")
        if not 0.0 <= self.masking_rate < 1.0:
            raise ConfigError(f"masking_rate must lie in [0, 1), got {self.masking_rate}")
        if self.use_enhanced_hyperedge and not self.use_hypergraph:
            raise ConfigError("use_enhanced_hyperedge requires use_hypergraph")
        if self.decoder_dims is not None and len(self.decoder_dims) != self.decoder_blocks:
            raise ConfigError(f"decoder_dims lists {len(self.decoder_dims)} widths for {self.decoder_blocks} blocks")
        resolve_dtype(self.dtype)

    @property
    def decoder_enabled(self) -> bool:
        return self.use_decoder and self.decoder_blocks > 0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kernel_sizes"] = list(self.kernel_sizes)
        if self.decoder_dims is not None:
            d["decoder_dims"] = list(self.decoder_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {unknown}")
        return cls(**d)


@dataclass
class ForwardOutput:
    reconstruction: Tensor | None
    logit: Tensor | None
    probability: Tensor | None
    diagnostics: list[BlockDiagnostics] | None = None
    mask: np.ndarray | None = None      # (N, V) booleans, True where a joint was hidden
    latent: Tensor | None = None
    hyperedge_state: Tensor | None = None


class RecognitionHead(Module):
    """Plain multi-head attention over joints, batch norm, MLP, pooling, logit."""

    def __init__(self, d: int, heads: int, hidden: int, prefix: str, init: Initializer):
        super().__init__(prefix, init)
        self.heads = heads
        self.scale = 1.0 / math.sqrt(d // heads)
        self.w_q = self.weight("W_Q", (d, d))
        self.w_k = self.weight("W_K", (d, d))
        self.w_v = self.weight("W_V", (d, d))
        self.w_o = self.weight("W_O", (d, d))
        self.bn = self.norm("bn", d)
        self.w1 = self.weight("mlp.W1", (d, hidden))
        self.b1 = self.bias("mlp.b1", hidden)
        self.w2 = self.weight("mlp.W2", (hidden, d))
        self.b2 = self.bias("mlp.b2", d)
        self.w_fc = self.weight("fc.W", (d, 1))
        self.b_fc = self.bias("fc.b", 1)

    def forward(self, z: Tensor) -> Tensor:
        q = split_heads(ops.linear(z, self.w_q), self.heads)
        k = split_heads(ops.linear(z, self.w_k), self.heads)
        v = split_heads(ops.linear(z, self.w_v), self.heads)
        kt = ops.transpose(k, (0, 1, 2, 4, 3))
        scores = ops.mul(ops.matmul(q, kt), np.asarray(self.scale, dtype=z.dtype))
        att = merge_heads(ops.matmul(ops.softmax_lastaxis(scores), v))
        gamma, beta, state = self.bn
        h = ops.batchnorm(ops.add(z, ops.linear(att, self.w_o)), gamma, beta, state, training=self.training)
        h = ops.add(h, ops.linear(ops.relu(ops.linear(h, self.w1, self.b1)), self.w2, self.b2))
        pooled = ops.mean(h, axis=(1, 2))                               # N, D
        return ops.reshape(ops.linear(pooled, self.w_fc, self.b_fc), (z.shape[0],))


class H2OFormer(Module):
    def __init__(self, config: ModelConfig, topology: Topology, seed: int = 0):
        dtype = resolve_dtype(config.dtype)
        super().__init__("", Initializer(seed, dtype))
        if topology.num_vertices != config.num_joints:
            raise ConfigError(f"config expects {config.num_joints} joints, topology "
                              f"{topology.name!r} has {topology.num_vertices}")
        self.config = config
        self.topology = topology
        self.seed = seed
        self.dtype = dtype
        c = config
        d = c.d_model
        self.w_in = self.weight("embed.W", (c.in_channels, d))
        self.b_in = self.bias("embed.b", d)
        self.joint_embed = self.noise("embed.joint", (c.num_joints, d), 0.02)

        self.encoder: list[HetBlock] = []
        e_dim = None
        for i in range(c.encoder_blocks):
            computes = i == 0
            bc = HetBlockConfig(
                d_in=d, d_out=d, num_heads=c.num_heads, kernel_sizes=c.kernel_sizes,
                shortcut="identity", role="encoder", use_hypergraph=c.use_hypergraph,
                use_enhanced_hyperedge=c.use_enhanced_hyperedge,
                e_dim=None if computes else e_dim, share_relpos=c.share_relpos,
                recompute_hyperedges=c.recompute_hyperedges)
            block = HetBlock(bc, topology, f"encoder.block{i + 1}", self.init)
            self.child(f"encoder.block{i + 1}", block)
            self.encoder.append(block)
            e_dim = d

        self.head = self.child("head", RecognitionHead(d, c.num_heads, c.head_hidden or d, "head", self.init))

        self.decoder: list[HetBlock] = []
        self.w_out = self.b_out = None
        if c.decoder_enabled:
            dims = c.decoder_dims or (d,) * c.decoder_blocks
            d_prev = d
            static_dim = d
            for i, d_next in enumerate(dims):
                bc = HetBlockConfig(
                    d_in=d_prev, d_out=d_next, num_heads=c.num_heads, kernel_sizes=c.kernel_sizes,
                    shortcut="projection", role="decoder", use_hypergraph=c.use_hypergraph,
                    use_enhanced_hyperedge=c.use_enhanced_hyperedge,
                    e_dim=(d_prev if c.use_enhanced_hyperedge else static_dim) if c.use_hypergraph else None,
                    share_relpos=c.share_relpos, recompute_hyperedges=c.recompute_hyperedges)
                block = HetBlock(bc, topology, f"decoder.block{i + 1}", self.init)
                self.child(f"decoder.block{i + 1}", block)
                self.decoder.append(block)
                d_prev = d_next
            self.w_out = self.weight("reconstruct.W", (d_prev, c.in_channels))
            self.b_out = self.bias("reconstruct.b", c.in_channels)

    # -- stages -------------------------------------------------------------

    def embed_input(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        return ops.add(ops.linear(x, self.w_in, self.b_in), self.joint_embed)

    def encode(self, h: Tensor, record: bool = False):
        diags = []
        e = None
        for block in self.encoder:
            h, e, diag = block.forward(h, e, record=record)
            diags.append(diag)
        return h, e, diags

    def decode(self, z: Tensor, e: Tensor | None = None, record: bool = False):
        if not self.decoder:
            raise ConfigError("decode called but the decoder branch is disabled")
        diags = []
        h = z
        for block in self.decoder:
            h, e, diag = block.forward(h, e, record=record)
            diags.append(diag)
        return ops.linear(h, self.w_out, self.b_out), diags

    def recognize(self, z: Tensor) -> tuple[Tensor, Tensor]:
        logit = self.head.forward(z)
        return logit, ops.sigmoid(logit)

    def sample_mask(self, n: int, rng: np.random.Generator) -> np.ndarray:
        v = self.config.num_joints
        count = mask_count(self.config.masking_rate, v)
        mask = np.zeros((n, v), dtype=bool)
        for i in range(n):
            mask[i, rng.choice(v, size=count, replace=False)] = True
        return mask

    def forward(self, x, *, reconstruct: bool = True, classify: bool = True, record: bool = False,
                mask_rng: np.random.Generator | None = None) -> ForwardOutput:
        """Run the network on ``x`` of shape (N, T, V, 3) or (T, V, 3).

        Joint masking only happens in training mode with a positive
        ``masking_rate``; ``mask_rng`` then picks the hidden joints.
        """
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.ndim == 3:
            data = data[None]
        c = self.config
        expected = (c.num_joints, c.in_channels)
        if data.ndim != 4 or data.shape[2:] != expected:
            raise ops.ShapeError(f"forward: expected input of shape (N, T, {expected[0]}, {expected[1]}), "
                                 f"got {np.shape(x)}")
        data = data.astype(self.dtype, copy=False)
        mask = None
        if self.training and c.masking_rate > 0:
            if mask_rng is None:
                raise ValueError("masking is enabled; pass mask_rng to forward")
            mask = self.sample_mask(data.shape[0], mask_rng)
            data = data * (~mask)[:, None, :, None].astype(self.dtype)
        h = self.embed_input(Tensor(data))
        z, e, diags = self.encode(h, record=record)
        recon = None
        if reconstruct and self.decoder:
            recon, dec_diags = self.decode(z, e, record=record)
            diags = diags + dec_diags
        logit = prob = None
        if classify:
            logit, prob = self.recognize(z)
        return ForwardOutput(recon, logit, prob, diags if record else None, mask, z, e)

    __call__ = forward

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def count_parameters(config: ModelConfig, topology: Topology) -> int:
    """Learnable parameter count derived from the configuration alone."""
    c = config
    d = c.d_model
    m = topology.hop_table.m
    nb = len(c.kernel_sizes)

    def block(d_in, d_out, e_dim, computes, projection):
        h = c.num_heads
        n = 2 * d_in * d_in + d_in * d_out
        n += m * (1 if c.share_relpos else h) * (d_in // h)
        if c.use_hypergraph:
            if computes:
                n += d_in * d_in
            n += e_dim * d_in
            if c.use_enhanced_hyperedge:
                n += e_dim * d_in + e_dim * d_out
        n += 4 * d_out
        width = d_out // nb
        n += sum(k * d_out * width + width for k in c.kernel_sizes)
        if projection:
            n += d_in * d_out + d_out
        return n

    total = c.in_channels * d + d + c.num_joints * d
    for i in range(c.encoder_blocks):
        total += block(d, d, d, i == 0 or c.recompute_hyperedges, False)
    hidden = c.head_hidden or d
    total += 4 * d * d + 2 * d + d * hidden + hidden + hidden * d + d + d + 1
    if c.decoder_enabled:
        dims = c.decoder_dims or (d,) * c.decoder_blocks
        prev = d
        for dn in dims:
            e_dim = prev if c.use_enhanced_hyperedge else d
            total += block(prev, dn, e_dim, c.recompute_hyperedges, True)
            prev = dn
        total += prev * c.in_channels + c.in_channels
    return total
