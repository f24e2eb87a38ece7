"""Two-layer relational graph convolution with hand-written gradients.

The layer update is

    H' = phi( sum_r A_r H W_r  +  H W_0 )

with one normalized sparse adjacency A_r per message channel and the
self-connection carried by W_0 (the identity self-loop channel therefore
has no separate weight matrix). Per-channel weights can be factored
through shared basis matrices, W_r = sum_b a_rb V_b, in which case only
the basis tensors and coefficients are stored and trained.

Everything is float64. The backward pass produces exact analytic
gradients of the masked mean cross-entropy; Adam applies them in place.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    EmptyMask,
    NonFiniteInput,
    ShapeMismatch,
    StaleCache,
    TruncatedRecord,
)
from .graph import MESSAGE_CHANNELS, RelationAdjacency
from .rng import substream_rng


def materialize_weights(basis: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Per-relation weights W_r = sum_b coeffs[r, b] * basis[b].

    basis: (B, d_in, d_out); coeffs: (R, B); returns (R, d_in, d_out).
    """
    basis = np.asarray(basis, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if basis.ndim != 3 or coeffs.ndim != 2:
        raise ShapeMismatch("basis must be (B, d_in, d_out), coeffs (R, B)")
    if basis.shape[0] < 1:
        raise ShapeMismatch("need at least one basis matrix")
    if coeffs.shape[1] != basis.shape[0]:
        raise ShapeMismatch(
            f"coefficient rows have length {coeffs.shape[1]}, "
            f"but there are {basis.shape[0]} basis matrices"
        )
    return np.tensordot(coeffs, basis, axes=([1], [0]))


def _glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


class LayerParams:
    """Weights of one relational layer, full per-relation or basis-factored."""

    def __init__(
        self,
        channel_names: tuple[str, ...],
        d_in: int,
        d_out: int,
        *,
        seed: int = 0,
        name: str = "layer",
        num_bases: int | None = None,
        rel_weights: dict[str, np.ndarray] | None = None,
        self_weight: np.ndarray | None = None,
        basis: np.ndarray | None = None,
        coeffs: np.ndarray | None = None,
    ):
        self.channel_names = tuple(channel_names)
        self.d_in = d_in
        self.d_out = d_out
        self.num_bases = num_bases
        if self_weight is not None:
            self.self_weight = np.array(self_weight, dtype=np.float64)
        else:
            rng = substream_rng(seed, f"init:{name}:self")
            self.self_weight = _glorot(rng, d_in, d_out)
        if num_bases is None:
            self.basis = None
            self.coeffs = None
            if rel_weights is not None:
                self.rel_weights = {
                    r: np.array(rel_weights[r], dtype=np.float64)
                    for r in self.channel_names
                }
            else:
                self.rel_weights = {
                    r: _glorot(substream_rng(seed, f"init:{name}:{r}"), d_in, d_out)
                    for r in self.channel_names
                }
        else:
            if num_bases < 1:
                raise ShapeMismatch("num_bases must be >= 1")
            self.rel_weights = None
            if basis is not None:
                self.basis = np.array(basis, dtype=np.float64)
                self.coeffs = np.array(coeffs, dtype=np.float64)
            else:
                self.basis = np.stack(
                    [
                        _glorot(substream_rng(seed, f"init:{name}:basis{b}"), d_in, d_out)
                        for b in range(num_bases)
                    ]
                )
                crng = substream_rng(seed, f"init:{name}:coeffs")
                self.coeffs = crng.standard_normal((len(self.channel_names), num_bases))
                self.coeffs /= np.sqrt(num_bases)
        self._validate()

    def _validate(self):
        if self.self_weight.shape != (self.d_in, self.d_out):
            raise ShapeMismatch("self weight shape mismatch")
        if self.basis is not None:
            if self.basis.shape[1:] != (self.d_in, self.d_out):
                raise ShapeMismatch("basis shape mismatch")
            if self.coeffs.shape != (len(self.channel_names), self.basis.shape[0]):
                raise ShapeMismatch("coefficient shape mismatch")
        else:
            for r in self.channel_names:
                if self.rel_weights[r].shape != (self.d_in, self.d_out):
                    raise ShapeMismatch(f"weight for {r} has wrong shape")

    @property
    def basis_mode(self) -> bool:
        return self.basis is not None

    def materialized(self) -> dict[str, np.ndarray]:
        """Per-channel weight matrices (materializing the basis if needed)."""
        if not self.basis_mode:
            return self.rel_weights
        stacked = materialize_weights(self.basis, self.coeffs)
        return {r: stacked[k] for k, r in enumerate(self.channel_names)}

    def parameters(self, prefix: str):
        if self.basis_mode:
            yield f"{prefix}.basis", self.basis
            yield f"{prefix}.coeffs", self.coeffs
        else:
            for r in self.channel_names:
                yield f"{prefix}.{r}", self.rel_weights[r]
        yield f"{prefix}.self", self.self_weight

    def copy(self) -> "LayerParams":
        return LayerParams(
            self.channel_names,
            self.d_in,
            self.d_out,
            num_bases=self.num_bases,
            rel_weights=None if self.basis_mode else self.rel_weights,
            self_weight=self.self_weight,
            basis=self.basis,
            coeffs=self.coeffs,
        )


class RGCNModel:
    """Two relational layers: features -> hidden (ReLU) -> class logits."""

    def __init__(
        self,
        d_in: int,
        d_hidden: int,
        num_classes: int,
        *,
        channel_names: tuple[str, ...] = MESSAGE_CHANNELS,
        dropout: float = 0.5,
        num_bases: int | None = None,
        seed: int = 0,
        normalization: str = "weighted-degree",
        use_edge_weights: bool = True,
    ):
        if not 0.0 <= dropout <= 1.0:
            raise ValueError("dropout must be in [0, 1]")
        self.channel_names = tuple(channel_names)
        self.d_in = d_in
        self.d_hidden = d_hidden
        self.num_classes = num_classes
        self.dropout = float(dropout)
        self.num_bases = num_bases
        self.normalization = normalization
        self.use_edge_weights = use_edge_weights
        self.layer1 = LayerParams(
            self.channel_names, d_in, d_hidden, seed=seed, name="layer1",
            num_bases=num_bases,
        )
        self.layer2 = LayerParams(
            self.channel_names, d_hidden, num_classes, seed=seed, name="layer2",
            num_bases=num_bases,
        )
        self.version = 0

    def parameters(self):
        yield from self.layer1.parameters("layer1")
        yield from self.layer2.parameters("layer2")

    def bump_version(self):
        self.version += 1

    def copy(self) -> "RGCNModel":
        clone = RGCNModel.__new__(RGCNModel)
        clone.channel_names = self.channel_names
        clone.d_in = self.d_in
        clone.d_hidden = self.d_hidden
        clone.num_classes = self.num_classes
        clone.dropout = self.dropout
        clone.num_bases = self.num_bases
        clone.normalization = self.normalization
        clone.use_edge_weights = self.use_edge_weights
        clone.layer1 = self.layer1.copy()
        clone.layer2 = self.layer2.copy()
        clone.version = self.version
        return clone


def layer_forward(
    H: np.ndarray,
    adj: RelationAdjacency,
    params: LayerParams,
    apply_relu: bool,
) -> np.ndarray:
    """One layer update: phi( sum_r A_r H W_r + H W_0 )."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape != (adj.num_nodes, params.d_in):
        raise ShapeMismatch(
            f"input is {H.shape}, expected ({adj.num_nodes}, {params.d_in})"
        )
    if not np.all(np.isfinite(H)):
        raise NonFiniteInput("layer input contains NaN or Inf")
    weights = params.materialized()
    out = H @ params.self_weight
    for name in adj.channel_names:
        mat = adj.matrices[name]
        if mat.nnz == 0:
            continue
        out += mat @ (H @ weights[name])
    if apply_relu:
        np.maximum(out, 0.0, out=out)
    return out


def dropout(
    H: np.ndarray, rate: float, training: bool, seed: int
) -> np.ndarray:
    """Inverted dropout; identity at inference. rate=1 zeroes everything."""
    out, _ = _dropout_with_mask(np.asarray(H, dtype=np.float64), rate, training, seed)
    return out


def _dropout_with_mask(H, rate, training, seed):
    if not 0.0 <= rate <= 1.0:
        raise ValueError("dropout rate must be in [0, 1]")
    if not training or rate == 0.0:
        return H, None
    if rate == 1.0:
        scale = np.zeros_like(H)
        return H * scale, scale
    rng = substream_rng(seed, "dropout")
    scale = (rng.random(H.shape) >= rate) / (1.0 - rate)
    return H * scale, scale


@dataclass
class ForwardCache:
    """Intermediates needed by backward; tied to the producing model state."""

    model: RGCNModel
    model_version: int
    adj: RelationAdjacency
    X: np.ndarray
    H1: np.ndarray
    drop_scale: np.ndarray | None
    H1d: np.ndarray
    weights1: dict[str, np.ndarray]
    weights2: dict[str, np.ndarray]


def model_forward(
    X: np.ndarray,
    adj: RelationAdjacency,
    model: RGCNModel,
    training: bool,
    seed: int,
) -> tuple[np.ndarray, ForwardCache]:
    """Full forward pass; deterministic given the seed."""
    X = np.asarray(X, dtype=np.float64)
    H1 = layer_forward(X, adj, model.layer1, apply_relu=True)
    H1d, scale = _dropout_with_mask(H1, model.dropout, training, seed)
    logits = layer_forward(H1d, adj, model.layer2, apply_relu=False)
    cache = ForwardCache(
        model=model,
        model_version=model.version,
        adj=adj,
        X=X,
        H1=H1,
        drop_scale=scale,
        H1d=H1d,
        weights1=model.layer1.materialized(),
        weights2=model.layer2.materialized(),
    )
    return logits, cache


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Masked mean cross-entropy and the full softmax probability matrix.

    Softmax is computed with max subtraction. ``mask`` is a boolean array
    over rows; labels must be valid class indices on masked rows.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    labels = np.asarray(labels)
    if mask.shape != (logits.shape[0],):
        raise ShapeMismatch("mask length must equal logits rows")
    if not mask.any():
        raise EmptyMask("no nodes selected for the loss")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    probs = exp / denom
    masked_labels = labels[mask]
    if masked_labels.min() < 0 or masked_labels.max() >= logits.shape[1]:
        raise ValueError("labels out of range on masked rows")
    log_probs = shifted - np.log(denom)
    picked = log_probs[mask, masked_labels]
    loss = float(-picked.mean())
    return loss, probs


def softmax_cross_entropy_grad(
    probs: np.ndarray, labels: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Gradient of the masked mean cross-entropy with respect to logits."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("no nodes selected for the loss")
    grad = np.zeros_like(probs)
    rows = np.flatnonzero(mask)
    grad[rows] = probs[rows]
    grad[rows, np.asarray(labels)[rows]] -= 1.0
    grad[rows] /= rows.size
    return grad


def _layer_backward(params, weights, adj, layer_in, grad_out, want_input_grad):
    grad_self = layer_in.T @ grad_out
    grad_rel = {}
    grad_in = grad_out @ params.self_weight.T if want_input_grad else None
    for name in adj.channel_names:
        mat = adj.matrices[name]
        if mat.nnz == 0:
            grad_rel[name] = np.zeros((params.d_in, params.d_out))
            continue
        upstream = adj.transposes[name] @ grad_out
        grad_rel[name] = layer_in.T @ upstream
        if want_input_grad:
            grad_in += upstream @ weights[name].T
    return grad_rel, grad_self, grad_in


def _project_basis(params: LayerParams, grad_rel: dict[str, np.ndarray]):
    stacked = np.stack([grad_rel[r] for r in params.channel_names])
    grad_basis = np.tensordot(params.coeffs, stacked, axes=([0], [0]))
    grad_coeffs = stacked.reshape(len(params.channel_names), -1) @ params.basis.reshape(
        params.basis.shape[0], -1
    ).T
    return grad_basis, grad_coeffs


def backward(cache: ForwardCache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every parameter given d(loss)/d(logits).

    Returns a dict keyed like ``RGCNModel.parameters()``. Raises StaleCache
    if the model was updated after the forward pass that built the cache.
    """
    model = cache.model
    if cache.model_version != model.version:
        raise StaleCache("model parameters changed since the forward pass")
    adj = cache.adj
    grad_logits = np.asarray(grad_logits, dtype=np.float64)

    rel2, self2, d_H1d = _layer_backward(
        model.layer2, cache.weights2, adj, cache.H1d, grad_logits, True
    )
    if cache.drop_scale is not None:
        d_H1 = d_H1d * cache.drop_scale
    else:
        d_H1 = d_H1d
    grad_pre1 = d_H1 * (cache.H1 > 0)
    rel1, self1, _ = _layer_backward(
        model.layer1, cache.weights1, adj, cache.X, grad_pre1, False
    )

    grads: dict[str, np.ndarray] = {}
    for prefix, layer, rel, self_grad in (
        ("layer1", model.layer1, rel1, self1),
        ("layer2", model.layer2, rel2, self2),
    ):
        if layer.basis_mode:
            gb, gc = _project_basis(layer, rel)
            grads[f"{prefix}.basis"] = gb
            grads[f"{prefix}.coeffs"] = gc
        else:
            for r in layer.channel_names:
                grads[f"{prefix}.{r}"] = rel[r]
        grads[f"{prefix}.self"] = self_grad
    return grads


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters."""

    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def for_model(model: RGCNModel, learning_rate: float = 0.01) -> "AdamState":
        state = AdamState(learning_rate=learning_rate)
        for name, p in model.parameters():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(
    model: RGCNModel, grads: dict[str, np.ndarray], state: AdamState
) -> None:
    """One bias-corrected Adam update, applied to the parameters in place."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in model.parameters():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    model.bump_version()


# ---------------------------------------------------------------------------
# checkpoint format: magic RGC1, dims, channel names, float64 tensors

CHECKPOINT_MAGIC = b"RGC1"
_CKPT_HEAD = struct.Struct("<IIIIIBIdBB")


def _read_exact(fh, n: int, what: str, path) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise TruncatedRecord(f"{path}: truncated {what}")
    return raw


def save_checkpoint(model: RGCNModel, num_nodes: int, path) -> None:
    """Versioned binary checkpoint; round-trips parameters bit-exactly."""
    norm_code = 0 if model.normalization == "count" else 1
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            _CKPT_HEAD.pack(
                1,  # format version
                num_nodes,
                model.d_in,
                model.d_hidden,
                model.num_classes,
                1 if model.num_bases is not None else 0,
                model.num_bases or 0,
                model.dropout,
                norm_code,
                1 if model.use_edge_weights else 0,
            )
        )
        fh.write(struct.pack("<I", len(model.channel_names)))
        for name in model.channel_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for _, p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[RGCNModel, int]:
    """Load a checkpoint; returns (model, expected node count)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise BadMagic(f"{path}: expected magic {CHECKPOINT_MAGIC!r}")
        head = _read_exact(fh, _CKPT_HEAD.size, "checkpoint header", path)
        (
            version,
            num_nodes,
            d_in,
            d_hidden,
            num_classes,
            basis_flag,
            num_bases,
            drop,
            norm_code,
            use_w,
        ) = _CKPT_HEAD.unpack(head)
        if version != 1:
            raise BadMagic(f"{path}: unsupported checkpoint version {version}")
        (n_channels,) = struct.unpack("<I", _read_exact(fh, 4, "channel count", path))
        names = []
        for _ in range(n_channels):
            (klen,) = struct.unpack("<H", _read_exact(fh, 2, "channel name", path))
            names.append(_read_exact(fh, klen, "channel name", path).decode("utf-8"))
        model = RGCNModel(
            d_in,
            d_hidden,
            num_classes,
            channel_names=tuple(names),
            dropout=drop,
            num_bases=num_bases if basis_flag else None,
            normalization="count" if norm_code == 0 else "weighted-degree",
            use_edge_weights=bool(use_w),
        )
        for name, p in model.parameters():
            raw = fh.read(p.size * 8)
            if len(raw) != p.size * 8:
                raise TruncatedRecord(f"{path}: truncated tensor {name}")
            p[...] = np.frombuffer(raw, dtype="<f8").reshape(p.shape)
        if fh.read(1):
            raise TruncatedRecord(f"{path}: trailing bytes")
    return model, num_nodes
