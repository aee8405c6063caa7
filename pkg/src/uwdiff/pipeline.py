"""Glue between the CLI and the library: checkpoint bundles, manifest-backed
training pairs, and the guided enhancement loop over whole images.

Images enter the diffusion model in the [-1, 1] model space; enhanced outputs
are mapped back to [0, 1] and written as 8-bit PNG.
"""

from __future__ import annotations

import os

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .config import RunConfig, parse_config_text, resolve_text
from .denoiser import ConditionalDenoiser
from .diffusion import (
    GuidanceConfig,
    NoiseSchedule,
    guided_noise_prediction,
    reverse_step,
    trajectory_rng,
)
from .errors import ParameterError, ShapeMismatchError
from .images import RgbImage
from .imageio import load_image, save_image
from .jointnet import (
    JointNetParams,
    PromptTensor,
    encode_prompt,
    init_params,
)
from .synthesis import DatasetManifest, load_pair
from .training import JointContext, guidance_pixel_grad


def to_model_space(img: RgbImage) -> np.ndarray:
    """(H, W, 3) in [0,1] -> (3, H, W) in [-1, 1]."""
    return np.ascontiguousarray(img.data.transpose(2, 0, 1) * 2.0 - 1.0)


def from_model_space(chw: np.ndarray) -> RgbImage:
    data = np.clip((chw + 1.0) * 0.5, 0.0, 1.0).transpose(1, 2, 0)
    return RgbImage(data.shape[1], data.shape[0], np.ascontiguousarray(data))


# ---------------------------------------------------------------------------
# Checkpoint bundles
# ---------------------------------------------------------------------------


def save_prompts_checkpoint(
    path, params: JointNetParams, prompt_n: PromptTensor, prompt_u: PromptTensor, config: RunConfig
) -> None:
    tensors = {name: t.data for name, t in params.named_tensors().items()}
    tensors["prompt.natural"] = prompt_n.tokens
    tensors["prompt.underwater"] = prompt_u.tokens
    write_checkpoint(path, tensors, config_echo=resolve_text(config))


def load_prompts_checkpoint(path) -> tuple[JointNetParams, PromptTensor, PromptTensor, RunConfig]:
    tensors, echo = read_checkpoint(path)
    config = parse_config_text(echo, source=f"{path}:echo")
    params = init_params(config.classifier(), config.seed)
    for name, tensor in params.named_tensors().items():
        if name not in tensors:
            raise ParameterError(f"checkpoint is missing tensor {name!r}")
        tensor.data = np.asarray(tensors[name], dtype=np.float64)
    return (
        params,
        PromptTensor(tensors["prompt.natural"]),
        PromptTensor(tensors["prompt.underwater"]),
        config,
    )


def joint_context_from_checkpoint(path, grad_kind: str = "alignment") -> JointContext:
    params, prompt_n, prompt_u, _ = load_prompts_checkpoint(path)
    return JointContext(
        params=params,
        theta_natural=encode_prompt(prompt_n, params).vector,
        theta_underwater=encode_prompt(prompt_u, params).vector,
        grad_kind=grad_kind,
    )


def save_model_checkpoint(path, model: ConditionalDenoiser, config: RunConfig) -> None:
    write_checkpoint(path, model.named_tensors(), config_echo=resolve_text(config))


def load_model_checkpoint(path) -> tuple[ConditionalDenoiser, RunConfig]:
    tensors, echo = read_checkpoint(path)
    config = parse_config_text(echo, source=f"{path}:echo")
    model = ConditionalDenoiser(width=config.denoiser_width, seed=config.seed)
    model.load_tensors(tensors)
    return model, config


# ---------------------------------------------------------------------------
# Manifest-backed training pairs
# ---------------------------------------------------------------------------


def pairs_from_manifest(manifest_path) -> list[tuple[np.ndarray, np.ndarray]]:
    """(clean, degraded) model-space pairs for every manifest entry."""
    manifest = DatasetManifest.read(manifest_path)
    if not manifest.entries:
        raise ParameterError(f"manifest {os.fspath(manifest_path)!r} has no entries")
    pairs = []
    shape = None
    for entry in manifest.entries:
        degraded, clean = load_pair(manifest_path, entry)
        if (clean.height, clean.width) != (degraded.height, degraded.width):
            raise ShapeMismatchError(f"pair {entry.degraded!r} has mismatched dimensions")
        if shape is None:
            shape = (clean.height, clean.width)
        elif (clean.height, clean.width) != shape:
            raise ShapeMismatchError(
                f"training pairs must share dimensions; {entry.clean!r} is {clean.width}x{clean.height}"
            )
        pairs.append((to_model_space(clean), to_model_space(degraded)))
    return pairs


# ---------------------------------------------------------------------------
# Enhancement
# ---------------------------------------------------------------------------


def enhance_image(
    degraded: RgbImage,
    model: ConditionalDenoiser,
    sched: NoiseSchedule,
    guidance: GuidanceConfig | None = None,
    context: JointContext | None = None,
    rng: np.random.Generator | None = None,
    variance: str = "beta",
) -> RgbImage:
    """Run the full conditional reverse chain for one degraded image."""
    rng = rng if rng is not None else trajectory_rng(0, 0)
    condition = to_model_space(degraded)
    x = rng.standard_normal(condition.shape)
    zeros = np.zeros_like(x)
    use_guidance = (
        guidance is not None and context is not None and guidance.weights()[1] > 0
    )
    for t in range(sched.steps, 0, -1):
        eps_hat = model(x, condition, t, sched)
        if use_guidance:
            grad2 = guidance_pixel_grad(x, context)
            eps_hat = guided_noise_prediction(eps_hat, zeros, grad2, t, sched, guidance)
        x = reverse_step(x, eps_hat, t, sched, rng, variance=variance)
    return from_model_space(x)


def enhance_directory(
    input_dir,
    out_dir,
    model: ConditionalDenoiser,
    sched: NoiseSchedule,
    seed: int,
    guidance: GuidanceConfig | None = None,
    context: JointContext | None = None,
    variance: str = "beta",
    progress=None,
) -> list[str]:
    """Enhance every image in input_dir; per-image generators come from (seed, index)."""
    names = sorted(
        n for n in os.listdir(os.fspath(input_dir)) if n.lower().endswith((".png", ".ppm"))
    )
    if not names:
        raise ParameterError(f"no images (.png/.ppm) found in {os.fspath(input_dir)!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for index, name in enumerate(names):
        img = load_image(os.path.join(os.fspath(input_dir), name))
        enhanced = enhance_image(
            img, model, sched, guidance, context, trajectory_rng(seed, index), variance
        )
        out_path = os.path.join(os.fspath(out_dir), os.path.splitext(name)[0] + ".png")
        save_image(enhanced, out_path)
        written.append(out_path)
        if progress is not None:
            progress(f"[{index + 1}/{len(names)}] {name}")
    return written
