"""Joint-embedding image/prompt classifier with spatial attention.

A small strided convolutional encoder produces a feature map; a learned
1x1-convolution attention mask reweights it spatially; attention pooling plus
a linear projection yields an L2-normalized image embedding. On the text
side, two learnable prompt tensors are mapped through a frozen linear token
mixer into the same space. Class probabilities are the two-way softmax over
exp(cosine) scores, and the underwater-side probability doubles as the
alignment score whose pixel gradient drives diffusion guidance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ParameterError, ShapeMismatchError, TrainingDivergedError
from .images import RgbImage

_NORM_GUARD = 1e-12
_PROB_EPS = 1e-7
_MIN_INPUT = 8

ALIGNMENT_KINDS = ("alignment", "log_alignment")


@dataclass(frozen=True)
class PromptTensor:
    """Learnable token matrix standing in for tokenized text."""

    tokens: np.ndarray  # (token_count, token_width)

    def __post_init__(self):
        arr = np.asarray(self.tokens, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError(f"prompt tokens must be a 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("prompt tokens must be finite")
        object.__setattr__(self, "tokens", arr)


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray  # (C, H', W')

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ParameterError(f"feature map must be (C, H, W), got shape {arr.shape}")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class AttentionMask:
    values: np.ndarray  # (1, H', W') in [0, 1]

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 1:
            raise ParameterError(f"attention mask must be (1, H, W), got shape {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ParameterError("attention mask values must lie in [0, 1]")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if self.normalized and abs(np.linalg.norm(vec) - 1.0) > 1e-6:
            raise ParameterError("embedding flagged normalized must have unit L2 norm")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class JointNetConfig:
    """Desk-scale dimensions; width is the final conv channel count."""

    width: int = 64
    embed_dim: int = 16
    token_count: int = 77
    token_width: int = 16
    text_hidden: int = 32

    def conv_channels(self) -> tuple[int, int, int]:
        return (max(self.width // 4, 1), max(self.width // 2, 1), self.width)


@dataclass
class JointNetParams:
    """Frozen encoder/text parameters; only prompt tensors are ever trained."""

    config: JointNetConfig
    conv_weights: list[Tensor] = field(default_factory=list)
    conv_biases: list[Tensor] = field(default_factory=list)
    attn_weight: Tensor | None = None
    attn_bias: Tensor | None = None
    proj_weight: Tensor | None = None
    proj_bias: Tensor | None = None
    token_weight: Tensor | None = None
    token_bias: Tensor | None = None
    text_weight: Tensor | None = None
    text_bias: Tensor | None = None

    def named_tensors(self) -> dict[str, Tensor]:
        named = {}
        for i, (w, b) in enumerate(zip(self.conv_weights, self.conv_biases), start=1):
            named[f"conv{i}.weight"] = w
            named[f"conv{i}.bias"] = b
        named.update(
            {
                "attn.weight": self.attn_weight,
                "attn.bias": self.attn_bias,
                "proj.weight": self.proj_weight,
                "proj.bias": self.proj_bias,
                "token.weight": self.token_weight,
                "token.bias": self.token_bias,
                "text.weight": self.text_weight,
                "text.bias": self.text_bias,
            }
        )
        return named


def init_params(config: JointNetConfig, seed: int) -> JointNetParams:
    """Deterministic random initialization; weights scale like 1/sqrt(fan_in)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 74])))
    params = JointNetParams(config=config)
    in_ch = 3
    for out_ch in config.conv_channels():
        scale = 1.0 / np.sqrt(in_ch * 9)
        params.conv_weights.append(Tensor(rng.normal(0.0, scale, (out_ch, in_ch, 3, 3))))
        params.conv_biases.append(Tensor(np.zeros(out_ch)))
        in_ch = out_ch
    width = config.width
    params.attn_weight = Tensor(rng.normal(0.0, 1.0 / np.sqrt(width), (1, width, 1, 1)))
    params.attn_bias = Tensor(np.zeros(1))
    params.proj_weight = Tensor(rng.normal(0.0, 1.0 / np.sqrt(width), (config.embed_dim, width)))
    params.proj_bias = Tensor(np.zeros(config.embed_dim))
    params.token_weight = Tensor(
        rng.normal(0.0, 1.0 / np.sqrt(config.token_width), (config.text_hidden, config.token_width))
    )
    params.token_bias = Tensor(np.zeros(config.text_hidden))
    params.text_weight = Tensor(
        rng.normal(0.0, 1.0 / np.sqrt(config.text_hidden), (config.embed_dim, config.text_hidden))
    )
    params.text_bias = Tensor(np.zeros(config.embed_dim))
    return params


def init_prompts(config: JointNetConfig, seed: int) -> tuple[PromptTensor, PromptTensor]:
    """Prompt pair initialized with small uniform noise from the run seed."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 75])))
    shape = (config.token_count, config.token_width)
    return (
        PromptTensor(rng.uniform(-0.01, 0.01, shape)),
        PromptTensor(rng.uniform(-0.01, 0.01, shape)),
    )


# ---------------------------------------------------------------------------
# Graph builders (autodiff); public wrappers below return plain containers
# ---------------------------------------------------------------------------


def normalize_graph(vec: Tensor) -> Tensor:
    """L2 normalization; near-zero vectors map to the first basis vector."""
    norm_sq = ad.tsum(vec * vec)
    if float(np.sqrt(norm_sq.data)) < _NORM_GUARD:
        basis = np.zeros(vec.data.shape)
        basis[0] = 1.0
        return Tensor(basis)
    return vec * ad.power(norm_sq, -0.5)


def encode_graph(x: Tensor, params: JointNetParams) -> Tensor:
    h = x
    for w, b in zip(params.conv_weights, params.conv_biases):
        h = ad.tanh(ad.conv2d(h, w, b, stride=2, padding=1))
    return h


def attention_graph(features: Tensor, params: JointNetParams) -> Tensor:
    return ad.sigmoid(ad.conv2d(features, params.attn_weight, params.attn_bias))


def pool_graph(attended: Tensor, params: JointNetParams) -> Tensor:
    pooled = ad.tmean(attended, axis=(1, 2))
    projected = ad.matmul(params.proj_weight, pooled) + params.proj_bias
    return normalize_graph(projected)


def embed_image_graph(x: Tensor, params: JointNetParams) -> Tensor:
    """Full encoder -> attention -> pooling chain to a normalized embedding."""
    features = encode_graph(x, params)
    mask = attention_graph(features, params)
    return pool_graph(features * mask, params)


def _chw(img: RgbImage) -> np.ndarray:
    return np.ascontiguousarray(img.data.transpose(2, 0, 1))


def _require_min_size(height: int, width: int) -> None:
    if min(height, width) < _MIN_INPUT:
        raise ParameterError(f"encoder input must be at least {_MIN_INPUT}x{_MIN_INPUT}")


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def encode_image(img: RgbImage, params: JointNetParams) -> FeatureMap:
    """Deterministic forward pass of the strided conv encoder."""
    _require_min_size(img.height, img.width)
    return FeatureMap(encode_graph(Tensor(_chw(img)), params).data)


def attention_mask(features: FeatureMap, params: JointNetParams) -> AttentionMask:
    """1x1 convolution over channels squashed through a logistic, so in [0, 1]."""
    if features.values.shape[0] != params.config.width:
        raise ShapeMismatchError(
            f"feature channels {features.values.shape[0]} != configured width {params.config.width}"
        )
    return AttentionMask(attention_graph(Tensor(features.values), params).data)


def apply_attention(features: FeatureMap, mask: AttentionMask) -> FeatureMap:
    """Broadcast the 1-channel mask across feature channels, elementwise."""
    if features.values.shape[1:] != mask.values.shape[1:]:
        raise ShapeMismatchError(
            f"spatial dims differ: {features.values.shape[1:]} vs {mask.values.shape[1:]}"
        )
    return FeatureMap(features.values * mask.values)


def global_average(features: FeatureMap) -> np.ndarray:
    """Spatial mean per channel (the pooled vector before projection)."""
    return features.values.mean(axis=(1, 2))


def attention_pool(attended: FeatureMap, params: JointNetParams) -> Embedding:
    """Average pool, project to the joint dimension, L2-normalize."""
    return Embedding(pool_graph(Tensor(attended.values), params).data)


def prompt_graph(tokens: Tensor, params: JointNetParams) -> Tensor:
    """Token-wise linear map, mean over positions, projection, normalization."""
    mixed = ad.tanh(ad.matmul(tokens, Tensor(params.token_weight.data.T)) + params.token_bias)
    pooled = ad.tmean(mixed, axis=0)
    projected = ad.matmul(params.text_weight, pooled) + params.text_bias
    return normalize_graph(projected)


def encode_prompt(prompt: PromptTensor, params: JointNetParams) -> Embedding:
    if prompt.tokens.shape[1] != params.config.token_width:
        raise ShapeMismatchError(
            f"prompt width {prompt.tokens.shape[1]} != configured {params.config.token_width}"
        )
    return Embedding(prompt_graph(Tensor(prompt.tokens), params).data)


def embed_image(img: RgbImage, params: JointNetParams) -> Embedding:
    _require_min_size(img.height, img.width)
    return Embedding(embed_image_graph(Tensor(_chw(img)), params).data)


def _require_normalized(*embeddings: Embedding) -> None:
    for emb in embeddings:
        if not emb.normalized or abs(np.linalg.norm(emb.vector) - 1.0) > 1e-6:
            raise ParameterError("embeddings must be L2-normalized")


def predict_prob(phi: Embedding, theta_n: Embedding, theta_u: Embedding) -> tuple[float, float]:
    """(P_natural, P_underwater): softmax over exp(cosine) against both prompts."""
    _require_normalized(phi, theta_n, theta_u)
    cos_n = float(theta_n.vector @ phi.vector)
    cos_u = float(theta_u.vector @ phi.vector)
    p_n = 1.0 / (1.0 + np.exp(cos_u - cos_n))
    return p_n, 1.0 - p_n


def prompt_loss(p_natural: float, label: int) -> float:
    """Binary cross-entropy against label 1 = in-air natural, 0 = underwater."""
    p = min(max(p_natural, _PROB_EPS), 1.0 - _PROB_EPS)
    return -(label * np.log(p) + (1 - label) * np.log(1.0 - p))


def classifier_alignment(phi_g: Embedding, theta_n: Embedding, theta_u: Embedding) -> float:
    """Softmax mass on the underwater prompt; equals P_u from predict_prob."""
    return predict_prob(phi_g, theta_n, theta_u)[1]


def alignment_graph(
    x: Tensor, params: JointNetParams, theta_n: np.ndarray, theta_u: np.ndarray, kind: str = "alignment"
) -> Tensor:
    """Alignment scalar as a graph over pixels, for input-gradient guidance."""
    if kind not in ALIGNMENT_KINDS:
        raise ParameterError(f"kind must be one of {ALIGNMENT_KINDS}, got {kind!r}")
    emb = embed_image_graph(x, params)
    logit = ad.dot(emb, Tensor(theta_u)) - ad.dot(emb, Tensor(theta_n))
    p_u = ad.sigmoid(logit)
    return ad.log(p_u) if kind == "log_alignment" else p_u


def alignment_pixel_grad(
    image_chw: np.ndarray,
    params: JointNetParams,
    theta_n: np.ndarray,
    theta_u: np.ndarray,
    kind: str = "alignment",
) -> np.ndarray:
    """Gradient of the alignment scalar with respect to the input pixels."""
    x = Tensor(np.asarray(image_chw, dtype=np.float64), requires_grad=True)
    alignment_graph(x, params, theta_n, theta_u, kind).backward()
    return x.grad if x.grad is not None else np.zeros_like(x.data)


# ---------------------------------------------------------------------------
# Prompt training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptTrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    holdout_fraction: float = 0.2
    seed: int = 0
    trend_window: int = 25
    divergence_factor: float = 10.0


@dataclass
class PromptTrainResult:
    prompt_natural: PromptTensor
    prompt_underwater: PromptTensor
    losses: list[float]
    holdout_accuracy: float
    trend_monotone: bool
    train_count: int
    holdout_count: int


def _adam_step(param: Tensor, state: dict, lr: float, step: int) -> None:
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    grad = param.grad if param.grad is not None else np.zeros_like(param.data)
    state["m"] = beta1 * state["m"] + (1 - beta1) * grad
    state["v"] = beta2 * state["v"] + (1 - beta2) * grad**2
    m_hat = state["m"] / (1 - beta1**step)
    v_hat = state["v"] / (1 - beta2**step)
    param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def train_prompts(
    dataset, params: JointNetParams, config: PromptTrainConfig
) -> PromptTrainResult:
    """Optimize the two prompt tensors by BCE over frozen image embeddings.

    dataset is a sequence of (RgbImage, label) with label 1 for in-air natural
    and 0 for underwater. Image embeddings are computed once (the encoder is
    frozen); each epoch runs one full-batch update of both prompt tensors.
    """
    labels = np.array([int(lbl) for _, lbl in dataset])
    if labels.size < 2 or len(set(labels.tolist())) < 2:
        raise ParameterError("prompt training needs samples from both classes")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(config.seed), 76])))
    order = rng.permutation(labels.size)
    n_holdout = max(1, int(round(config.holdout_fraction * labels.size)))
    holdout_idx, train_idx = order[:n_holdout], order[n_holdout:]
    if len(set(labels[train_idx].tolist())) < 2:
        raise ParameterError("training split lost one class; lower holdout_fraction")

    phis = np.stack([embed_image(img, params).vector for img, _ in dataset])
    train_phi = Tensor(phis[train_idx])
    train_q = labels[train_idx].astype(np.float64)

    init_n, init_u = init_prompts(params.config, config.seed)
    t_n = Tensor(init_n.tokens.copy(), requires_grad=True)
    t_u = Tensor(init_u.tokens.copy(), requires_grad=True)
    states = [{"m": np.zeros_like(t.data), "v": np.zeros_like(t.data)} for t in (t_n, t_u)]

    losses: list[float] = []
    for epoch in range(1, config.epochs + 1):
        theta_n = prompt_graph(t_n, params)
        theta_u = prompt_graph(t_u, params)
        logits = ad.matmul(train_phi, theta_n) - ad.matmul(train_phi, theta_u)
        p_n = ad.clip(ad.sigmoid(logits), _PROB_EPS, 1.0 - _PROB_EPS)
        loss = -ad.tmean(
            Tensor(train_q) * ad.log(p_n) + Tensor(1.0 - train_q) * ad.log(1.0 - p_n)
        )
        value = loss.item()
        if not np.isfinite(value) or (losses and value > config.divergence_factor * losses[0]):
            raise TrainingDivergedError(f"prompt training diverged at epoch {epoch}: loss {value}")
        losses.append(value)
        loss.backward()
        for tensor, state in zip((t_n, t_u), states):
            _adam_step(tensor, state, config.learning_rate, epoch)

    prompt_n = PromptTensor(t_n.data)
    prompt_u = PromptTensor(t_u.data)
    theta_n = encode_prompt(prompt_n, params)
    theta_u = encode_prompt(prompt_u, params)
    correct = 0
    for i in holdout_idx:
        p_n, _ = predict_prob(Embedding(phis[i]), theta_n, theta_u)
        correct += int((p_n >= 0.5) == bool(labels[i]))
    accuracy = correct / len(holdout_idx)

    window = min(config.trend_window, max(len(losses) // 2, 1))
    head = float(np.mean(losses[:window]))
    tail = float(np.mean(losses[-window:]))
    return PromptTrainResult(
        prompt_natural=prompt_n,
        prompt_underwater=prompt_u,
        losses=losses,
        holdout_accuracy=accuracy,
        trend_monotone=tail <= head + 1e-12,
        train_count=len(train_idx),
        holdout_count=len(holdout_idx),
    )
