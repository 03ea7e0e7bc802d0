"""Multi-dimensional GNNs over link tensors, with optional learned pruning.

The feature tensor lives on the link structure itself: one vertex per
(AP, user, antenna) triple for the cell-free task, one per (user, antenna)
pair for the single-cell precoding task.  Each layer aggregates D+1 paths for
a D-axis link tensor: the position itself plus, for every axis, the mean over
that axis broadcast back, each path with its own feature-mixing matrix.
Because every path is symmetric under index permutations, the stack is
permutation equivariant along every link axis.

Three variants share the stack:

* ``mdgnn``: plain means over the axes,
* ``sp-mdgnn``: a sparsification layer in front.  A link-shaped weight tensor
  W gives soft scores A = sigmoid(W); links with A <= tau are pruned.  The
  input features are hard-masked, every layer multiplies features by the
  gated scores (straight-through estimator: mask forward, identity backward),
  and the axis means divide by the count of retained entries (zero if none),
* ``a-mdgnn``: per-link scalar scores from query/key projections of the input
  features, sigmoid-squashed and normalised to sum to one over each
  aggregation neighbourhood; axis means become score-weighted sums.

Heads project the final two-channel features onto the feasible set: the
power head scales each AP's rows to its power budget, the precoding head
scales the whole matrix to the total budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rng
from .errors import ConfigError, ShapeMismatchError

VARIANTS = ("mdgnn", "sp-mdgnn", "a-mdgnn")
TASKS = ("power-control", "precoding")

# Below this total squared output an AP (or the whole precoder) emits zeros
# instead of being blown up to the budget.
DEAD_OUTPUT_FLOOR = 1e-20

FEATURE_CHANNELS = 2  # re, im


@dataclass(frozen=True)
class ModelSpec:
    task: str
    link_shape: tuple[int, ...]
    hidden: int = 256
    num_layers: int = 5
    variant: str = "mdgnn"
    tau: float = 0.0
    score_dim: int = 16  # attention query/key width

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        expected_axes = 3 if self.task == "power-control" else 2
        if len(self.link_shape) != expected_axes or any(s < 1 for s in self.link_shape):
            raise ConfigError(
                f"link shape {self.link_shape} invalid for task {self.task!r}"
            )
        if self.hidden < 1 or self.num_layers < 2:
            raise ConfigError(
                f"need hidden >= 1 and num_layers >= 2, got {self.hidden}/{self.num_layers}"
            )
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.tau < 1.0:
            raise ConfigError(f"threshold must be in [0, 1), got {self.tau}")
        if self.variant == "a-mdgnn" and self.score_dim < 1:
            raise ConfigError(f"score_dim must be positive, got {self.score_dim}")

    @property
    def num_paths(self) -> int:
        return len(self.link_shape) + 1

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [FEATURE_CHANNELS] + [self.hidden] * (self.num_layers - 1) + [FEATURE_CHANNELS]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class SparseLayerState:
    """Link-shaped pruning scores; threshold echoed from the spec."""

    weights: np.ndarray
    threshold: float

    def adjacency(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.weights))

    def mask(self) -> np.ndarray:
        return self.adjacency() > self.threshold

    def retained_fraction(self) -> float:
        return float(self.mask().mean())


@dataclass
class GnnLayerParams:
    mixers: list[np.ndarray]  # one (h_in, h_out) matrix per aggregation path
    activation: str  # "relu" | "identity"


@dataclass
class AttentionParams:
    query: np.ndarray  # (FEATURE_CHANNELS, score_dim)
    key: np.ndarray  # (FEATURE_CHANNELS, score_dim)


@dataclass
class GnnModel:
    spec: ModelSpec
    layers: list[GnnLayerParams]
    sparse: SparseLayerState | None = None
    attention: AttentionParams | None = None

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        if self.sparse is not None:
            params["sparse.weights"] = self.sparse.weights
        for i, layer in enumerate(self.layers):
            for p, mat in enumerate(layer.mixers):
                params[f"layers.{i}.mixers.{p}"] = mat
        if self.attention is not None:
            params["attention.query"] = self.attention.query
            params["attention.key"] = self.attention.key
        return params


@dataclass
class JointModel:
    """Two task branches trained under one weighted loss."""

    power: GnnModel
    precoding: GnnModel
    alpha: float = 0.5

    def parameters(self) -> dict[str, np.ndarray]:
        params = {f"power.{k}": v for k, v in self.power.parameters().items()}
        params.update({f"precoding.{k}": v for k, v in self.precoding.parameters().items()})
        return params


SPARSE_INIT_WEIGHT = 1.0  # sigmoid(1.0) = 0.731, everything retained at start


def init_model(spec: ModelSpec, seed: int) -> GnnModel:
    spec.validate()
    layers = []
    for i, (h_in, h_out) in enumerate(spec.layer_dims()):
        bound = math.sqrt(1.0 / h_in)
        mixers = [
            rng.uniform(
                rng.stream(seed, rng.MODEL_INIT_TAG, i, p), (h_in, h_out), -bound, bound
            )
            for p in range(spec.num_paths)
        ]
        activation = "relu" if i < spec.num_layers - 1 else "identity"
        layers.append(GnnLayerParams(mixers=mixers, activation=activation))
    sparse = None
    if spec.variant == "sp-mdgnn":
        sparse = SparseLayerState(
            weights=np.full(spec.link_shape, SPARSE_INIT_WEIGHT), threshold=spec.tau
        )
    attention = None
    if spec.variant == "a-mdgnn":
        bound = math.sqrt(1.0 / FEATURE_CHANNELS)
        gen = rng.stream(seed, rng.MODEL_INIT_TAG, spec.num_layers, 0)
        attention = AttentionParams(
            query=rng.uniform(gen, (FEATURE_CHANNELS, spec.score_dim), -bound, bound),
            key=rng.uniform(gen, (FEATURE_CHANNELS, spec.score_dim), -bound, bound),
        )
    return GnnModel(spec=spec, layers=layers, sparse=sparse, attention=attention)


def init_joint(
    power_spec: ModelSpec, precoding_spec: ModelSpec, alpha: float, seed: int
) -> JointModel:
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"loss weight alpha must be in [0, 1], got {alpha}")
    return JointModel(
        power=init_model(power_spec, seed),
        precoding=init_model(precoding_spec, seed + 1),
        alpha=alpha,
    )


def _features(channels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack re/im and normalise each sample by its RMS magnitude."""
    power = np.mean(np.abs(channels) ** 2, axis=tuple(range(1, channels.ndim)))
    scale = 1.0 / np.sqrt(np.maximum(power, 1e-300))
    scale = scale.reshape((-1,) + (1,) * channels.ndim)
    feats = np.stack([channels.real, channels.imag], axis=-1) * scale
    return np.ascontiguousarray(feats, dtype=np.float64), scale


def _axis_recips(spec: ModelSpec, mask: np.ndarray | None) -> list[np.ndarray]:
    """Reciprocal neighbourhood sizes per link axis, zero where none retained.

    Shapes keep the reduced axis at size one and carry leading batch and
    trailing feature singleton axes, ready to broadcast.
    """
    recips = []
    for axis in range(len(spec.link_shape)):
        if mask is None:
            counts = np.full(
                tuple(1 if d == axis else s for d, s in enumerate(spec.link_shape)),
                float(spec.link_shape[axis]),
            )
        else:
            counts = mask.sum(axis=axis, keepdims=True).astype(np.float64)
        with np.errstate(divide="ignore"):
            recip = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
        recips.append(recip[None, ..., None])
    return recips


def attention_scores(
    feats: ad.Tensor, query: ad.Tensor, key: ad.Tensor, link_ndim: int
) -> list[ad.Tensor]:
    """Per-axis normalised edge scores from the input features.

    Each link position gets a scalar in (0, 1) from a scaled query/key dot
    product through a sigmoid; normalising over an axis then makes the scores
    of every aggregation neighbourhood sum to one.  Returns one tensor per
    link axis, shaped like ``feats`` with a trailing singleton channel.
    """
    q = ad.matmul(feats, query)
    k = ad.matmul(feats, key)
    dots = ad.reduce_sum(ad.mul(q, k), axis=-1, keepdims=True)
    raw = ad.sigmoid(ad.scale(dots, 1.0 / math.sqrt(query.shape[1])))
    scores = []
    for axis in range(link_ndim):
        denom = ad.reduce_sum(raw, axis=axis + 1, keepdims=True)
        scores.append(ad.div(raw, denom))
    return scores


def gnn_layer(
    x: ad.Tensor,
    layer: GnnLayerParams,
    mixers: list[ad.Tensor],
    link_ndim: int,
    gate: ad.Tensor | None,
    recips: list[ad.Tensor] | None,
    scores: list[ad.Tensor] | None,
) -> ad.Tensor:
    """One aggregation layer on (B, *link, features).

    The self and pooled branches are algebraically regrouped by layer shape:
    widening layers stack self and means on the narrow input width and apply
    all mixers in one matmul, and narrowing layers project first so the axis
    sums run at the narrow output width.
    """
    gated = ad.mul(gate, x) if gate is not None else x
    h_in = x.shape[-1]
    h_out = mixers[0].shape[1]
    if scores is not None:
        out = ad.matmul(gated, mixers[0])
        for axis in range(link_ndim):
            pooled = ad.reduce_sum(ad.mul(scores[axis], x), axis=axis + 1, keepdims=True)
            out = ad.add(out, ad.matmul(pooled, mixers[axis + 1]))
    elif h_in < h_out:
        parts = [gated]
        for axis in range(link_ndim):
            means = ad.mul(
                ad.reduce_sum(gated, axis=axis + 1, keepdims=True), recips[axis]
            )
            parts.append(ad.broadcast_to(means, gated.shape))
        out = ad.matmul(ad.concat(parts, axis=-1), ad.concat(mixers, axis=0))
    elif h_out < h_in:
        proj = ad.matmul(gated, ad.concat(mixers, axis=1))
        out = ad.narrow(proj, -1, 0, h_out)
        for axis in range(link_ndim):
            seg = ad.narrow(proj, -1, (axis + 1) * h_out, (axis + 2) * h_out)
            pooled = ad.mul(
                ad.reduce_sum(seg, axis=axis + 1, keepdims=True), recips[axis]
            )
            out = ad.add(out, pooled)
    else:
        out = ad.matmul(gated, mixers[0])
        for axis in range(link_ndim):
            pooled = ad.mul(
                ad.reduce_sum(gated, axis=axis + 1, keepdims=True), recips[axis]
            )
            out = ad.add(out, ad.matmul(pooled, mixers[axis + 1]))
    if layer.activation == "relu":
        out = ad.relu(out)
    return out


def _budget_head(x: ad.Tensor, axes: tuple[int, ...], max_power_mw: float) -> ad.Tensor:
    """Scale squared totals over ``axes`` up to the budget; dead units emit zeros."""
    tape = x.tape
    totals = ad.reduce_sum(ad.square(x), axis=axes, keepdims=True)
    live = totals.value >= DEAD_OUTPUT_FLOOR
    # Dead denominators become 1 so the division stays defined; the live mask
    # then zeroes those outputs exactly.
    denom = ad.add(totals, tape.constant(np.where(live, 0.0, 1.0)))
    scale = ad.sqrt(ad.div(tape.constant(np.full(denom.shape, max_power_mw)), denom))
    return ad.mul(ad.mul(x, scale), tape.constant(live.astype(np.float64)))


def power_head(x: ad.Tensor, max_power_mw: float) -> ad.Tensor:
    """Per-AP budget projection for (B, L, K, N, 2) features."""
    if x.value.ndim != 5:
        raise ShapeMismatchError(f"power_head expects (B, L, K, N, 2), got {x.shape}")
    return _budget_head(x, (2, 3, 4), max_power_mw)


def precoding_head(x: ad.Tensor, max_power_mw: float) -> ad.Tensor:
    """Total-budget projection for (B, K, Nt, 2) features."""
    if x.value.ndim != 4:
        raise ShapeMismatchError(f"precoding_head expects (B, K, Nt, 2), got {x.shape}")
    return _budget_head(x, (1, 2, 3), max_power_mw)


def model_forward(
    tape: ad.Tape,
    model: GnnModel,
    channels: np.ndarray,
    max_power_mw: float,
    name_prefix: str = "",
) -> ad.Tensor:
    """Run the stack on a (B, *link) complex batch; returns (B, *link, 2).

    ``name_prefix`` prepends to every trainable leaf name so a joint model's
    two branches stay distinguishable on one tape.
    """
    spec = model.spec
    if channels.ndim != len(spec.link_shape) + 1 or channels.shape[1:] != spec.link_shape:
        raise ShapeMismatchError(
            f"channels {channels.shape} do not match link shape {spec.link_shape}"
        )
    link_ndim = len(spec.link_shape)
    feats, _ = _features(channels)

    gate = None
    recips_np: list[np.ndarray]
    scores = None
    if spec.variant == "sp-mdgnn":
        mask = model.sparse.mask()
        feats = feats * mask[None, ..., None]
        w = tape.leaf(
            model.sparse.weights, trainable=True, name=name_prefix + "sparse.weights"
        )
        adj = ad.sigmoid(w)
        gated_adj = ad.ste_gate(adj, spec.tau)
        gate = ad.reshape(gated_adj, (1,) + spec.link_shape + (1,))
        recips_np = _axis_recips(spec, mask)
    else:
        recips_np = _axis_recips(spec, None)

    x = tape.constant(feats, name="features")
    if spec.variant == "a-mdgnn":
        q = tape.leaf(
            model.attention.query, trainable=True, name=name_prefix + "attention.query"
        )
        k = tape.leaf(
            model.attention.key, trainable=True, name=name_prefix + "attention.key"
        )
        scores = attention_scores(x, q, k, link_ndim)

    recips = None if scores is not None else [tape.constant(r) for r in recips_np]
    for i, layer in enumerate(model.layers):
        mixers = [
            tape.leaf(m, trainable=True, name=f"{name_prefix}layers.{i}.mixers.{p}")
            for p, m in enumerate(layer.mixers)
        ]
        x = gnn_layer(x, layer, mixers, link_ndim, gate, recips, scores)

    if spec.task == "power-control":
        return power_head(x, max_power_mw)
    return precoding_head(x, max_power_mw)


def se_loss(
    tape: ad.Tape, precoder: ad.Tensor, channels: np.ndarray, noise_power_mw: float
) -> tuple[ad.Tensor, ad.Tensor]:
    """Negative mean sum SE of a two-channel precoder against fixed channels.

    Returns (scalar loss, per-sample sum SE tensor).  Interference is summed
    over off-diagonal entries directly, never as a difference, so the
    log2(1+x) operand stays nonnegative by construction.
    """
    h = np.asarray(channels, dtype=np.complex128)
    if h.ndim == 3:  # single-cell: add an AP axis of one
        h = h[:, None]
    b, l, k, n = h.shape
    f = precoder
    if f.value.shape[-1] != 2:
        raise ShapeMismatchError(f"precoder must end in a re/im axis, got {f.shape}")
    if f.value.ndim == 4:
        f = ad.reshape(f, (b, 1) + f.value.shape[1:])
    if f.value.shape[:4] != (b, l, k, n):
        raise ShapeMismatchError(
            f"precoder {precoder.shape} does not match channels {channels.shape}"
        )

    hr = tape.constant(np.ascontiguousarray(h.real[:, :, :, None, :]))  # (B,L,K,1,N)
    hi = tape.constant(np.ascontiguousarray(h.imag[:, :, :, None, :]))
    fr = ad.reshape(ad.narrow(f, 4, 0, 1), (b, l, 1, k, n))  # user index i at axis 3
    fi = ad.reshape(ad.narrow(f, 4, 1, 2), (b, l, 1, k, n))

    re_t = ad.reduce_sum(ad.add(ad.mul(hr, fr), ad.mul(hi, fi)), axis=(1, 4))
    im_t = ad.reduce_sum(ad.sub(ad.mul(hr, fi), ad.mul(hi, fr)), axis=(1, 4))
    power = ad.add(ad.square(re_t), ad.square(im_t))  # (B, K, K) of |t_ki|^2

    eye = np.eye(k)[None]
    desired = ad.reduce_sum(ad.mul(power, tape.constant(eye)), axis=2)
    interference = ad.reduce_sum(ad.mul(power, tape.constant(1.0 - eye)), axis=2)
    sinr = ad.div(desired, interference + tape.constant(np.full((b, k), noise_power_mw)))
    per_sample = ad.reduce_sum(ad.log2_1p(sinr), axis=1)
    loss = ad.scale(ad.reduce_sum(per_sample, axis=0), -1.0 / b)
    return loss, per_sample


def joint_loss(
    tape: ad.Tape,
    model: JointModel,
    power_channels: np.ndarray,
    precoding_channels: np.ndarray,
    power_budget: tuple[float, float],
    precoding_budget: tuple[float, float],
) -> tuple[ad.Tensor, dict]:
    """alpha-weighted sum of the two task losses on paired batches."""
    p_max_pc, noise_pc = power_budget
    p_max_pr, noise_pr = precoding_budget
    f_pc = model_forward(tape, model.power, power_channels, p_max_pc, name_prefix="power.")
    loss_pc, se_pc = se_loss(tape, f_pc, power_channels, noise_pc)
    f_pr = model_forward(
        tape, model.precoding, precoding_channels, p_max_pr, name_prefix="precoding."
    )
    loss_pr, se_pr = se_loss(tape, f_pr, precoding_channels, noise_pr)
    loss = ad.add(ad.scale(loss_pc, model.alpha), ad.scale(loss_pr, 1.0 - model.alpha))
    aux = {
        "power_se": se_pc.value.copy(),
        "precoding_se": se_pr.value.copy(),
        "power_loss": float(loss_pc.value),
        "precoding_loss": float(loss_pr.value),
    }
    return loss, aux


def _infer_layer_np(
    x: np.ndarray,
    layer: GnnLayerParams,
    link_ndim: int,
    gate: np.ndarray | None,
    recips: list[np.ndarray] | None,
    scores: list[np.ndarray] | None,
) -> np.ndarray:
    gated = gate * x if gate is not None else x
    h_in = x.shape[-1]
    h_out = layer.mixers[0].shape[1]
    if scores is not None:
        out = gated @ layer.mixers[0]
        for axis in range(link_ndim):
            pooled = (scores[axis] * x).sum(axis=axis + 1, keepdims=True)
            out = out + pooled @ layer.mixers[axis + 1]
    elif h_in < h_out:
        # Widening layer: stack self and per-axis means on the narrow input
        # width and apply all mixers in one matmul, avoiding wide
        # broadcast-adds.
        parts = [gated]
        for axis in range(link_ndim):
            means = gated.sum(axis=axis + 1, keepdims=True) * recips[axis]
            parts.append(np.broadcast_to(means, gated.shape))
        out = np.concatenate(parts, axis=-1) @ np.vstack(layer.mixers)
    elif h_out < h_in:
        # Narrowing layer: matmul commutes with the axis sums, so project to
        # the narrow output width first and pool the small tensors.
        proj = gated @ np.hstack(layer.mixers)
        out = proj[..., :h_out].copy()
        for axis in range(link_ndim):
            seg = proj[..., (axis + 1) * h_out : (axis + 2) * h_out]
            out += seg.sum(axis=axis + 1, keepdims=True) * recips[axis]
    else:
        out = gated @ layer.mixers[0]
        for axis in range(link_ndim):
            pooled = gated.sum(axis=axis + 1, keepdims=True) * recips[axis]
            out += pooled @ layer.mixers[axis + 1]
    if layer.activation == "relu":
        np.maximum(out, 0.0, out=out)
    return out


@dataclass
class _CompactAxis:
    """Pooling bookkeeping for one aggregation axis of the compact path."""

    recip: np.ndarray  # (groups, 1, 1) reciprocal retained counts
    gid_retained: np.ndarray  # pooled-group id for each retained row
    gid_full: np.ndarray  # pooled-group id for every link position
    live: np.ndarray  # sorted group ids that own at least one retained row
    gid_retained_live: np.ndarray  # gid_retained remapped into live order
    recip_live: np.ndarray  # recip restricted to live groups


@dataclass
class _CompactPlan:
    """Index structures for running the stack on retained rows only.

    A pruned row is zeroed by the gate before every consumer, so intermediate
    layers keep activations for retained rows alone; only the final layer
    scatters back to all positions, where the pooled paths still contribute.
    """

    ridx: np.ndarray  # flat indices of retained rows
    gate: np.ndarray  # (retained, 1, 1) adjacency values at retained rows
    axes: list[_CompactAxis]


def _compact_plan(link_shape: tuple[int, ...], sparse: SparseLayerState) -> _CompactPlan | None:
    mask = sparse.mask()
    ridx = np.flatnonzero(mask.ravel())
    n = mask.size
    if ridx.size == 0 or ridx.size == n:
        return None
    gate = sparse.adjacency().ravel()[ridx][:, None, None]

    axes = []
    all_coords = np.unravel_index(np.arange(n), link_shape)
    for axis in range(len(link_shape)):
        other = [c for a, c in enumerate(all_coords) if a != axis]
        dims = [d for a, d in enumerate(link_shape) if a != axis]
        gid_full = np.ravel_multi_index(other, dims)
        counts = mask.sum(axis=axis).ravel().astype(np.float64)
        with np.errstate(divide="ignore"):
            recip = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
        gid_retained = gid_full[ridx]
        # Groups whose members are all pruned are never gathered back, so the
        # pooled mixer only has to run over the live ones.
        live, gid_retained_live = np.unique(gid_retained, return_inverse=True)
        axes.append(
            _CompactAxis(
                recip=recip[:, None, None],
                gid_retained=gid_retained,
                gid_full=gid_full,
                live=live,
                gid_retained_live=gid_retained_live,
                recip_live=recip[live][:, None, None],
            )
        )
    return _CompactPlan(ridx=ridx, gate=gate, axes=axes)


def _infer_compact(
    model: GnnModel, feats: np.ndarray, plan: _CompactPlan
) -> np.ndarray:
    """Forward pass over retained rows in (positions, batch, features) layout.

    Leading-axis indexing makes every gather and scatter a contiguous block
    copy, and the full-width pooling buffer keeps pruned rows at zero so the
    per-axis sums see exactly the tensors the training forward sees.
    """
    link_shape = model.spec.link_shape
    b = feats.shape[0]
    n = int(np.prod(link_shape))
    x = np.ascontiguousarray(np.moveaxis(feats.reshape(b, n, -1), 0, 1))[plan.ridx]
    # The gate is folded into each layer's output below (it commutes with
    # relu because gate values are non-negative), so every layer reads an
    # already-gated input.
    x *= plan.gate
    r = plan.ridx.size
    last = len(model.layers) - 1
    full = None  # pooled-path scatter buffer, reused across equal widths
    scratch = None  # gather destination, reused across equal widths
    for i, layer in enumerate(model.layers):
        h_in = x.shape[-1]
        h_out = layer.mixers[0].shape[1]
        if i == last and h_out <= h_in:
            # Narrowing final layer: project retained rows through all mixers
            # at the output width, then pool and scatter the small tensors.
            proj = (x.reshape(-1, h_in) @ np.hstack(layer.mixers)).reshape(r, b, -1)
            out = np.zeros((n, b, h_out))
            out[plan.ridx] = proj[..., :h_out]
            small = np.zeros((n, b, h_out))
            for a, ax in enumerate(plan.axes):
                small[plan.ridx] = proj[..., (a + 1) * h_out : (a + 2) * h_out]
                means = small.reshape(link_shape + (b, h_out)).sum(axis=a)
                means = means.reshape(-1, b, h_out) * ax.recip
                out += means[ax.gid_full]
        else:
            if full is None or full.shape[-1] != h_in:
                full = np.zeros((n, b, h_in))
            full[plan.ridx] = x
            shaped = full.reshape(link_shape + (b, h_in))
            if h_in < h_out and i < last:
                # Widening layer: gather the means back to retained rows at
                # the narrow input width and apply all mixers in one matmul.
                parts = np.empty((r, b, (len(plan.axes) + 1) * h_in))
                parts[..., :h_in] = x
                for a, ax in enumerate(plan.axes):
                    means = shaped.sum(axis=a).reshape(-1, b, h_in) * ax.recip
                    parts[..., (a + 1) * h_in : (a + 2) * h_in] = means[ax.gid_retained]
                out = (
                    parts.reshape(-1, parts.shape[-1]) @ np.vstack(layer.mixers)
                ).reshape(r, b, h_out)
            elif i < last:
                # Square layer feeding retained rows: the pooled mixer only
                # needs the groups that still own a retained row.
                out = (x.reshape(-1, h_in) @ layer.mixers[0]).reshape(r, b, h_out)
                if scratch is None or scratch.shape != out.shape:
                    scratch = np.empty_like(out)
                for a, ax in enumerate(plan.axes):
                    sums = shaped.sum(axis=a).reshape(-1, b, h_in)
                    means = sums[ax.live] * ax.recip_live
                    p = (means.reshape(-1, h_in) @ layer.mixers[a + 1]).reshape(
                        -1, b, h_out
                    )
                    np.take(p, ax.gid_retained_live, axis=0, out=scratch, mode="clip")
                    out += scratch
            else:
                out = np.zeros((n, b, h_out))
                out[plan.ridx] = (x.reshape(-1, h_in) @ layer.mixers[0]).reshape(
                    r, b, h_out
                )
                for a, ax in enumerate(plan.axes):
                    means = shaped.sum(axis=a).reshape(-1, b, h_in) * ax.recip
                    p = (means.reshape(-1, h_in) @ layer.mixers[a + 1]).reshape(
                        -1, b, h_out
                    )
                    out += p[ax.gid_full]
        if layer.activation == "relu":
            np.maximum(out, 0.0, out=out)
        if i < last:
            out *= plan.gate
        x = out
    return np.ascontiguousarray(np.moveaxis(x, 0, 1)).reshape((b, *link_shape, x.shape[-1]))


def _budget_head_np(x: np.ndarray, axes: tuple[int, ...], max_power_mw: float) -> np.ndarray:
    totals = np.sum(np.square(x), axis=axes, keepdims=True)
    live = totals >= DEAD_OUTPUT_FLOOR
    denom = totals + np.where(live, 0.0, 1.0)
    return x * np.sqrt(max_power_mw / denom) * live


def infer(model: GnnModel, channels: np.ndarray, max_power_mw: float) -> np.ndarray:
    """Tape-free forward pass; returns a complex (B, *link) precoder.

    Same arithmetic as the training forward; with a partial pruning mask the
    stack runs on retained rows only, which reorders the floating-point sums
    on the pooled paths but leaves the math unchanged.
    """
    spec = model.spec
    if channels.ndim != len(spec.link_shape) + 1 or channels.shape[1:] != spec.link_shape:
        raise ShapeMismatchError(
            f"channels {channels.shape} do not match link shape {spec.link_shape}"
        )
    link_ndim = len(spec.link_shape)
    feats, _ = _features(channels)

    gate = None
    recips = None
    scores = None
    if spec.variant == "sp-mdgnn":
        plan = _compact_plan(spec.link_shape, model.sparse)
        if plan is not None:
            x = _infer_compact(model, feats, plan)
            return _head_np(x, spec, max_power_mw)
        # Degenerate masks (nothing or everything pruned) take the dense path.
        mask = model.sparse.mask()
        if mask.all():
            gate = model.sparse.adjacency()[None, ..., None]
            recips = _axis_recips(spec, None)
        else:
            feats = feats * mask[None, ..., None]
            gate = (model.sparse.adjacency() * mask)[None, ..., None]
            recips = _axis_recips(spec, mask)
    else:
        recips = _axis_recips(spec, None)

    x = feats
    if spec.variant == "a-mdgnn":
        q = x @ model.attention.query
        k = x @ model.attention.key
        dots = np.sum(q * k, axis=-1, keepdims=True) / math.sqrt(spec.score_dim)
        raw = np.empty_like(dots)
        pos = dots >= 0
        raw[pos] = 1.0 / (1.0 + np.exp(-dots[pos]))
        ev = np.exp(dots[~pos])
        raw[~pos] = ev / (1.0 + ev)
        scores = [raw / raw.sum(axis=axis + 1, keepdims=True) for axis in range(link_ndim)]

    for layer in model.layers:
        x = _infer_layer_np(x, layer, link_ndim, gate, recips, scores)

    return _head_np(x, spec, max_power_mw)


def _head_np(x: np.ndarray, spec: ModelSpec, max_power_mw: float) -> np.ndarray:
    if spec.task == "power-control":
        out = _budget_head_np(x, (2, 3, 4), max_power_mw)
    else:
        out = _budget_head_np(x, (1, 2, 3), max_power_mw)
    return out[..., 0] + 1j * out[..., 1]


def count_flops(model: GnnModel) -> int:
    """Multiply-add count per sample for one inference pass."""
    spec = model.spec
    positions = int(np.prod(spec.link_shape))
    self_rows = positions
    if spec.variant == "sp-mdgnn":
        self_rows = int(model.sparse.mask().sum())
    total = 0
    for h_in, h_out in spec.layer_dims():
        total += 2 * self_rows * h_in * h_out  # self path on retained rows
        for axis, size in enumerate(spec.link_shape):
            compact = positions // size
            total += 2 * compact * h_in * h_out  # pooled path matmul
            total += positions * h_in  # the pooling sum itself
    if spec.variant == "a-mdgnn":
        total += 2 * 2 * positions * FEATURE_CHANNELS * spec.score_dim
        total += positions * spec.score_dim
    return total
