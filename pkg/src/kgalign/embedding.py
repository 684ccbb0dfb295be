"""
Relation-aware graph attention embeddings trained with a hard-negative triplet loss.

Both graphs are embedded in one forward pass over their union with a single parameter set.  Each
layer aggregates, for entity ``i``, the neighbor messages ``reflect(h_r, h_j)`` weighted by a softmax
over ``q . tanh(h_i + h_j)``; the output of an entity is the concatenation of its initial vector and
every layer's output.  Gradients are derived by hand, the model being small enough not to need an
automatic-differentiation framework.
"""

from dataclasses import dataclass, field
import logging
import math
from typing import BinaryIO, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from kgalign.errors import ConfigError, DatasetError, TrainingError
from kgalign.graph import AlignmentSeedSet, KgPair, NeighborIndex, build_adjacency, lookup_rows


logger = logging.getLogger(__name__)


MATRIX_MAGIC = b"EMB1"
UNIT_TOLERANCE = 1e-6

# Upper bound on the number of distance entries held in memory by one nearest-neighbor chunk
DISTANCE_CHUNK = 1 << 22


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 300
    layers: int = 2
    margin: float = 3.0
    learning_rate: float = 0.005
    batch_size: int = 1024
    epochs: int = 12
    augment_every: int = 5
    rng_seed: int = 0
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        for name in ("dim", "layers", "margin", "learning_rate", "batch_size", "epochs", "augment_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"train.{name} must be positive, got {getattr(self, name)}")

        if not 0 < self.rms_decay < 1 or self.rms_epsilon <= 0:
            raise ConfigError("train.rms_decay must lie in (0, 1) and train.rms_epsilon must be positive")


@dataclass
class ModelParams:
    entity_init: np.ndarray
    relation_emb: np.ndarray
    attention: np.ndarray  # one row per layer
    activation: str = "tanh"

    @property
    def dim(self) -> int:
        return self.entity_init.shape[1]

    @property
    def layer_count(self) -> int:
        return self.attention.shape[0]

    def blocks(self) -> Dict[str, np.ndarray]:
        return {"entity_init": self.entity_init, "relation_emb": self.relation_emb, "attention": self.attention}

    def renormalize_relations(self) -> None:
        norms = np.linalg.norm(self.relation_emb, axis=1, keepdims=True)
        self.relation_emb /= np.where(norms == 0.0, 1.0, norms)

    def copy(self) -> "ModelParams":
        return ModelParams(self.entity_init.copy(), self.relation_emb.copy(), self.attention.copy(), self.activation)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    rows: np.ndarray
    entity_ids: np.ndarray

    def __post_init__(self) -> None:
        assert len(self.rows) == len(self.entity_ids), "one embedding row per entity"

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def rows_of(self, entity_ids: Sequence[int]) -> np.ndarray:
        return lookup_rows(self.entity_ids, entity_ids)

    def vectors(self, entity_ids: Sequence[int]) -> np.ndarray:
        return self.rows[self.rows_of(entity_ids)]


@dataclass(frozen=True)
class NegativePool:
    """The current hardest negative (an opposite-graph entity id) of every seed entity."""

    negatives: Dict[int, int]

    def __getitem__(self, entity_id: int) -> int:
        return self.negatives[entity_id]

    def __len__(self) -> int:
        return len(self.negatives)


@dataclass(frozen=True, eq=False)
class GraphOperators:
    """Sparse scatter matrices for one neighbor index, built once per training run."""

    heads: np.ndarray
    tails: np.ndarray
    relations: np.ndarray
    starts: np.ndarray
    head_sum: sparse.csr_matrix
    tail_sum: sparse.csr_matrix
    relation_sum: sparse.csr_matrix

    @classmethod
    def from_index(cls, index: NeighborIndex) -> "GraphOperators":
        edges = np.arange(index.edge_count)
        ones = np.ones(index.edge_count)
        n = index.entity_count
        return cls(
            heads=index.heads,
            tails=index.tails,
            relations=index.relations,
            starts=index.offsets[:-1],
            head_sum=sparse.csr_matrix((ones, (index.heads, edges)), shape=(n, index.edge_count)),
            tail_sum=sparse.csr_matrix((ones, (index.tails, edges)), shape=(n, index.edge_count)),
            relation_sum=sparse.csr_matrix(
                (ones, (index.relations, edges)), shape=(index.total_relations, index.edge_count)
            ),
        )


@dataclass
class LayerCache:
    inputs: np.ndarray
    relations: np.ndarray
    projections: np.ndarray
    messages: np.ndarray
    edges: np.ndarray
    alpha: np.ndarray
    outputs: np.ndarray


@dataclass
class ForwardState:
    layers: List[LayerCache]
    output: np.ndarray


@dataclass
class RMSProp:
    learning_rate: float
    decay: float = 0.9
    epsilon: float = 1e-8
    cache: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: ModelParams, grads: Dict[str, np.ndarray]) -> None:
        for name, value in params.blocks().items():
            g = grads[name]
            cache = self.cache.setdefault(name, np.zeros_like(value))
            cache *= self.decay
            cache += (1.0 - self.decay) * g * g
            value -= self.learning_rate * g / (np.sqrt(cache) + self.epsilon)


@dataclass
class TrainResult:
    params: ModelParams
    embeddings: EmbeddingMatrix
    seeds: AlignmentSeedSet
    initial_loss: float
    final_loss: float
    epoch_losses: List[float]


def init_parameters(pair: KgPair, config: TrainConfig) -> ModelParams:
    """
    Draw initial parameters uniformly from ``[-sqrt(6/d), sqrt(6/d)]``; relation rows are
    normalized immediately.  Relation rows cover the forward, inverse and self-loop relations.
    """
    rng = np.random.default_rng(config.rng_seed)
    bound = math.sqrt(6.0 / config.dim)
    relation_total = 2 * len(pair.union.relations) + 1

    params = ModelParams(
        entity_init=rng.uniform(-bound, bound, size=(len(pair.entity_ids), config.dim)),
        relation_emb=rng.uniform(-bound, bound, size=(relation_total, config.dim)),
        attention=rng.uniform(-bound, bound, size=(config.layers, config.dim)),
    )
    params.renormalize_relations()
    return params


def reflect(h_r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Apply the reflection ``(I - 2 h_r h_r^T) x`` without building the matrix.  ``x`` may be a
    vector or a matrix of row vectors.
    """
    norm = float(np.linalg.norm(h_r))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"relation vector must have unit norm, got {norm}")
    if x.shape[-1] != h_r.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} != {h_r.shape[-1]}")

    return x - 2.0 * (x @ h_r)[..., None] * h_r


def _layer_forward(params: ModelParams, layer: int, ops: GraphOperators, inputs: np.ndarray) -> LayerCache:
    h_r = params.relation_emb[ops.relations]
    h_j = inputs[ops.tails]
    projections = np.einsum("md,md->m", h_r, h_j)
    messages = h_j - 2.0 * projections[:, None] * h_r

    edges = np.tanh(inputs[ops.heads] + h_j)
    logits = edges @ params.attention[layer]
    logits -= np.maximum.reduceat(logits, ops.starts)[ops.heads]
    weights = np.exp(logits)
    alpha = weights / (ops.head_sum @ weights)[ops.heads]

    outputs = np.tanh(ops.head_sum @ (alpha[:, None] * messages))
    return LayerCache(inputs, h_r, projections, messages, edges, alpha, outputs)


def _layer_backward(
    params: ModelParams, layer: int, ops: GraphOperators, cache: LayerCache, grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return gradients w.r.t. (layer inputs, relation embeddings, attention vector)."""
    grad_pre = grad_out * (1.0 - cache.outputs**2)
    grad_edge = grad_pre[ops.heads]

    grad_alpha = np.einsum("md,md->m", grad_edge, cache.messages)
    grad_messages = cache.alpha[:, None] * grad_edge

    # messages = h_j - 2 (h_r . h_j) h_r
    along = np.einsum("md,md->m", grad_messages, cache.relations)
    h_j = cache.inputs[ops.tails]
    grad_h_j = grad_messages - 2.0 * along[:, None] * cache.relations
    grad_h_r = -2.0 * (along[:, None] * h_j + cache.projections[:, None] * grad_messages)

    # softmax over each entity's edges
    grad_logits = cache.alpha * (grad_alpha - (ops.head_sum @ (cache.alpha * grad_alpha))[ops.heads])
    q = params.attention[layer]
    grad_q = cache.edges.T @ grad_logits
    grad_sum = grad_logits[:, None] * q[None, :] * (1.0 - cache.edges**2)

    grad_inputs = ops.head_sum @ grad_sum + ops.tail_sum @ (grad_h_j + grad_sum)
    grad_relations = ops.relation_sum @ grad_h_r
    return grad_inputs, grad_relations, grad_q


def _check_inputs(params: ModelParams, index: NeighborIndex, inputs: np.ndarray) -> None:
    if inputs.shape != (index.entity_count, params.dim):
        raise ValueError(f"layer input has shape {inputs.shape}, expected {(index.entity_count, params.dim)}")
    if params.relation_emb.shape != (index.total_relations, params.dim):
        raise ValueError(
            f"relation embeddings have shape {params.relation_emb.shape}, "
            f"expected {(index.total_relations, params.dim)}"
        )


def ragat_layer(params: ModelParams, layer: int, index: NeighborIndex, H_in: np.ndarray) -> np.ndarray:
    _check_inputs(params, index, H_in)
    return _layer_forward(params, layer, GraphOperators.from_index(index), H_in).outputs


def attention_weights(params: ModelParams, layer: int, index: NeighborIndex, H_in: np.ndarray) -> np.ndarray:
    """Per-edge attention coefficients of one layer, aligned with the edges of ``index``."""
    _check_inputs(params, index, H_in)
    return _layer_forward(params, layer, GraphOperators.from_index(index), H_in).alpha


def _forward(params: ModelParams, ops: GraphOperators) -> ForwardState:
    layers: List[LayerCache] = []
    hidden = params.entity_init
    for layer in range(params.layer_count):
        cache = _layer_forward(params, layer, ops, hidden)
        layers.append(cache)
        hidden = cache.outputs

    output = np.concatenate([params.entity_init] + [cache.outputs for cache in layers], axis=1)
    return ForwardState(layers, output)


def _backward(params: ModelParams, ops: GraphOperators, state: ForwardState, grad_output: np.ndarray) -> Dict:
    d = params.dim
    grads = {
        "entity_init": grad_output[:, :d].copy(),
        "relation_emb": np.zeros_like(params.relation_emb),
        "attention": np.zeros_like(params.attention),
    }

    carried = np.zeros((grad_output.shape[0], d))
    for layer in reversed(range(params.layer_count)):
        block = grad_output[:, (layer + 1) * d : (layer + 2) * d]
        grad_inputs, grad_relations, grad_q = _layer_backward(params, layer, ops, state.layers[layer], block + carried)
        grads["relation_emb"] += grad_relations
        grads["attention"][layer] = grad_q
        carried = grad_inputs

    grads["entity_init"] += carried
    return grads


def forward(params: ModelParams, index: NeighborIndex) -> EmbeddingMatrix:
    """Embed every entity of the union graph: ``[h0 | h1 | ... | hl]`` per row."""
    _check_inputs(params, index, params.entity_init)
    state = _forward(params, GraphOperators.from_index(index))
    return EmbeddingMatrix(state.output, index.entity_ids)


def _squared_distances(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return np.einsum("nd,nd->n", left - right, left - right)


def _pair_rows(
    entity_ids: np.ndarray, seeds: AlignmentSeedSet, pool: NegativePool
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    negatives_of_sources = [pool[s] for s in seeds.sources]
    negatives_of_targets = [pool[t] for t in seeds.targets]
    return (
        np.searchsorted(entity_ids, seeds.sources),
        np.searchsorted(entity_ids, seeds.targets),
        np.searchsorted(entity_ids, np.asarray(negatives_of_sources, dtype=np.int64)),
        np.searchsorted(entity_ids, np.asarray(negatives_of_targets, dtype=np.int64)),
    )


def _triplet(
    output: np.ndarray,
    rows: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    margin: float,
    with_gradient: bool = True,
) -> Tuple[float, Optional[np.ndarray]]:
    """
    Hinge loss over seed pairs.  Each pair is contrasted with the harder of its two corrupted pairs:
    (source, pooled negative of the source) and (pooled negative of the target, target).
    """
    sources, targets, source_negatives, target_negatives = rows
    if len(sources) == 0:
        return 0.0, np.zeros_like(output) if with_gradient else None

    positive = _squared_distances(output[sources], output[targets])
    corrupt_target = _squared_distances(output[sources], output[source_negatives])
    corrupt_source = _squared_distances(output[target_negatives], output[targets])

    use_target_side = corrupt_target <= corrupt_source
    negative = np.where(use_target_side, corrupt_target, corrupt_source)
    hinge = margin + positive - negative
    active = hinge > 0.0
    loss = float(hinge[active].sum())

    if not with_gradient:
        return loss, None

    grad = np.zeros_like(output)
    s, t = sources[active], targets[active]
    diff = 2.0 * (output[s] - output[t])
    np.add.at(grad, s, diff)
    np.add.at(grad, t, -diff)

    # the negative pair enters with a minus sign
    side = use_target_side[active]
    left = np.where(side, s, target_negatives[active])
    right = np.where(side, source_negatives[active], t)
    diff = 2.0 * (output[left] - output[right])
    np.add.at(grad, left, -diff)
    np.add.at(grad, right, diff)
    return loss, grad


def triplet_loss(emb: EmbeddingMatrix, seeds: AlignmentSeedSet, pool: NegativePool, margin: float) -> float:
    """
    Sum over seed pairs of ``max(0, margin + dist(pos) - dist(neg))`` with squared Euclidean
    distances, where ``dist(neg)`` is the smaller of the two corrupted-pair distances.
    """
    if len(seeds) == 0:
        return 0.0
    loss, _ = _triplet(emb.rows, _pair_rows(emb.entity_ids, seeds, pool), margin, with_gradient=False)
    return loss


def loss_and_gradients(
    params: ModelParams, index: NeighborIndex, seeds: AlignmentSeedSet, pool: NegativePool, margin: float
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Triplet loss and its gradient w.r.t. every parameter block, with the pool held fixed."""
    ops = GraphOperators.from_index(index)
    state = _forward(params, ops)
    loss, grad_output = _triplet(state.output, _pair_rows(index.entity_ids, seeds, pool), margin)
    assert grad_output is not None
    return loss, _backward(params, ops, state, grad_output)


def _nearest(queries: np.ndarray, candidates: np.ndarray, excluded: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Column of the nearest candidate (squared Euclidean) for every query row; the lowest column
    wins ties.  ``excluded[i]`` names a column that query ``i`` may not pick (-1 for none).
    """
    chunk = max(1, DISTANCE_CHUNK // max(1, len(candidates)))
    nearest = np.empty(len(queries), dtype=np.int64)
    for start in range(0, len(queries), chunk):
        distances = cdist(queries[start : start + chunk], candidates, "sqeuclidean")
        if excluded is not None:
            block = excluded[start : start + chunk]
            mask = block >= 0
            distances[np.nonzero(mask)[0], block[mask]] = np.inf
        nearest[start : start + chunk] = np.argmin(distances, axis=1)
    return nearest


def update_negative_pool(emb: EmbeddingMatrix, seeds: AlignmentSeedSet, pair: KgPair) -> NegativePool:
    """
    For every seed entity, find the nearest opposite-graph entity other than its aligned
    counterpart.  Ties go to the lowest entity id.
    """
    source_ids, target_ids = pair.source.entity_ids, pair.target.entity_ids
    if len(source_ids) < 2 or len(target_ids) < 2:
        raise TrainingError("negative sampling needs at least two entities in each graph")

    negatives: Dict[int, int] = {}
    if len(seeds) == 0:
        return NegativePool(negatives)

    source_vectors, target_vectors = emb.vectors(source_ids), emb.vectors(target_ids)

    columns = np.searchsorted(target_ids, seeds.targets)
    picks = _nearest(emb.vectors(seeds.sources), target_vectors, excluded=columns)
    negatives.update(zip(seeds.sources.tolist(), target_ids[picks].tolist()))

    columns = np.searchsorted(source_ids, seeds.sources)
    picks = _nearest(emb.vectors(seeds.targets), source_vectors, excluded=columns)
    negatives.update(zip(seeds.targets.tolist(), source_ids[picks].tolist()))

    return NegativePool(negatives)


def augment_seeds(emb: EmbeddingMatrix, pair: KgPair, current: AlignmentSeedSet) -> AlignmentSeedSet:
    """Add every unseeded cross-graph pair of mutual nearest neighbors to the seeds."""
    source_ids, target_ids = pair.source.entity_ids, pair.target.entity_ids
    source_vectors, target_vectors = emb.vectors(source_ids), emb.vectors(target_ids)

    nearest_target = _nearest(source_vectors, target_vectors)
    nearest_source = _nearest(target_vectors, source_vectors)

    seeded_sources = set(current.sources.tolist())
    seeded_targets = set(current.targets.tolist())

    added = []
    for row, column in enumerate(nearest_target):
        source, target = int(source_ids[row]), int(target_ids[column])
        if nearest_source[column] != row or source in seeded_sources or target in seeded_targets:
            continue
        added.append((source, target))

    logger.info("Seed augmentation added %i mutual nearest-neighbor pairs", len(added))
    return AlignmentSeedSet(current.pairs + tuple(added))


def fit(
    pair: KgPair, train_seeds: AlignmentSeedSet, config: TrainConfig, index: Optional[NeighborIndex] = None
) -> TrainResult:
    """
    Train the attention network.

    Arguments
    =========
    pair (KgPair)
        The two graphs, embedded together.
    train_seeds (AlignmentSeedSet)
        Supervision pairs.  Augmented pairs are added every ``config.augment_every`` epochs.
    config (TrainConfig)
        Hyperparameters; ``rng_seed`` fixes initialization and batch order.
    index (NeighborIndex) [optional]
        Precomputed adjacency of ``pair.union``.

    Returns
    =======
    result (TrainResult)
        Final parameters and embeddings with the loss history.
    """
    if len(train_seeds) == 0:
        raise TrainingError("training needs at least one seed pair")

    index = index or build_adjacency(pair.union)
    ops = GraphOperators.from_index(index)
    params = init_parameters(pair, config)
    optimizer = RMSProp(config.learning_rate, config.rms_decay, config.rms_epsilon)
    rng = np.random.default_rng([config.rng_seed, 1])

    def embed(state: ForwardState) -> EmbeddingMatrix:
        return EmbeddingMatrix(state.output, index.entity_ids)

    state = _forward(params, ops)
    seeds = train_seeds
    pool = update_negative_pool(embed(state), seeds, pair)
    initial_loss = triplet_loss(embed(state), train_seeds, pool, config.margin)
    logger.info("Training on %i seed pairs, initial loss %.4f", len(seeds), initial_loss)

    epoch_losses = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(seeds))
        epoch_loss = 0.0

        for start in range(0, len(seeds), config.batch_size):
            batch = AlignmentSeedSet(tuple(seeds.pairs[i] for i in order[start : start + config.batch_size]))
            loss, grad_output = _triplet(state.output, _pair_rows(index.entity_ids, batch, pool), config.margin)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch starting at {start}")
            assert grad_output is not None

            optimizer.step(params, _backward(params, ops, state, grad_output))
            params.renormalize_relations()

            state = _forward(params, ops)
            pool = update_negative_pool(embed(state), seeds, pair)
            epoch_loss += loss
            logger.debug("epoch %i batch %i loss %.6f", epoch, start // config.batch_size, loss)

        epoch_losses.append(epoch_loss)
        logger.info("Epoch %i/%i loss %.4f", epoch, config.epochs, epoch_loss)

        if epoch % config.augment_every == 0:
            seeds = augment_seeds(embed(state), pair, seeds)
            pool = update_negative_pool(embed(state), seeds, pair)

    embeddings = embed(state)
    final_loss = triplet_loss(
        embeddings, train_seeds, update_negative_pool(embeddings, train_seeds, pair), config.margin
    )
    logger.info("Training finished, final loss %.4f", final_loss)
    return TrainResult(params, embeddings, seeds, initial_loss, final_loss, epoch_losses)


def train(pair: KgPair, train_seeds: AlignmentSeedSet, config: TrainConfig) -> EmbeddingMatrix:
    return fit(pair, train_seeds, config).embeddings


def write_matrix(f: BinaryIO, matrix: np.ndarray) -> None:
    """Header ``EMB1``, row count and dim as little-endian u64, then row-major little-endian f64."""
    matrix = np.atleast_2d(matrix)
    f.write(MATRIX_MAGIC)
    f.write(np.array(matrix.shape, dtype="<u8").tobytes())
    f.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())


def read_matrix(f: BinaryIO, path: str = "<stream>") -> np.ndarray:
    magic = f.read(len(MATRIX_MAGIC))
    if magic != MATRIX_MAGIC:
        raise DatasetError(f"bad matrix header {magic!r}", path)

    header = f.read(16)
    if len(header) != 16:
        raise DatasetError("truncated matrix header", path)
    rows, dim = (int(v) for v in np.frombuffer(header, dtype="<u8"))

    payload = f.read(rows * dim * 8)
    if len(payload) != rows * dim * 8:
        raise DatasetError(f"truncated matrix body, expected {rows}x{dim}", path)
    return np.frombuffer(payload, dtype="<f8").reshape(rows, dim).astype(np.float64)


def save_embeddings(emb: EmbeddingMatrix, path: str) -> None:
    with open(path, "wb") as f:
        write_matrix(f, emb.rows)


def load_embeddings(path: str, entity_ids: np.ndarray) -> EmbeddingMatrix:
    with open(path, "rb") as f:
        rows = read_matrix(f, path)
    if len(rows) != len(entity_ids):
        raise DatasetError(f"{len(rows)} embedding rows for {len(entity_ids)} entities", path)
    return EmbeddingMatrix(rows, entity_ids)


def save_params(params: ModelParams, path: str) -> None:
    with open(path, "wb") as f:
        for block in params.blocks().values():
            write_matrix(f, block)


def load_params(path: str) -> ModelParams:
    with open(path, "rb") as f:
        entity_init, relation_emb, attention = (read_matrix(f, path) for _ in range(3))
    return ModelParams(entity_init, relation_emb, attention)
