"""Paired training-data synthesis.

Two degradation routes produce (degraded, clean) pairs from directories of
in-air images: statistical color transfer toward the channel statistics of a
template pool of real underwater images, and a physical scattering model with
per-channel attenuation, backscatter, and veiling light.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, TruncatedFileError, UnsupportedFormatError
from .images import ChannelStats, LabImage, RgbImage, channel_stats, lab_to_srgb, srgb_to_lab
from .imageio import load_image, save_image

_SIGMA_FLOOR = 1e-8
_IMAGE_EXTENSIONS = (".png", ".ppm")

METHODS = ("color_transfer", "scatter")


@dataclass(frozen=True)
class DegradationParams:
    """Scattering-model coefficients: attenuation, backscatter, veiling light, depth.

    beta_direct / beta_backscatter are per-RGB-channel rates in 1/m, veil is the
    per-channel veiling light in [0,1], and depth is either a scalar or an
    (H, W) per-pixel map in meters.
    """

    beta_direct: np.ndarray
    beta_backscatter: np.ndarray
    veil: np.ndarray
    depth: float | np.ndarray

    def __post_init__(self):
        bd = np.asarray(self.beta_direct, dtype=np.float64).reshape(3)
        bb = np.asarray(self.beta_backscatter, dtype=np.float64).reshape(3)
        veil = np.asarray(self.veil, dtype=np.float64).reshape(3)
        depth = np.asarray(self.depth, dtype=np.float64)
        for name, arr in (("beta_direct", bd), ("beta_backscatter", bb), ("veil", veil), ("depth", depth)):
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"{name} must be finite")
            if np.any(arr < 0):
                raise ParameterError(f"{name} must be >= 0")
        if np.any(veil > 1):
            raise ParameterError("veil must lie in [0, 1] per channel")
        if depth.ndim not in (0, 2):
            raise ParameterError("depth must be a scalar or an (H, W) map")
        object.__setattr__(self, "beta_direct", bd)
        object.__setattr__(self, "beta_backscatter", bb)
        object.__setattr__(self, "veil", veil)
        object.__setattr__(self, "depth", depth if depth.ndim else float(depth))


@dataclass(frozen=True)
class ScatterRanges:
    """Sampling ranges for randomized scattering parameters.

    Toolkit defaults; the wavelength_realistic flag forces the drawn direct
    attenuation to satisfy red >= green >= blue (red light dies first).
    """

    beta_direct: tuple[float, float] = (0.1, 1.5)
    beta_backscatter: tuple[float, float] = (0.05, 1.0)
    veil: tuple[float, float] = (0.05, 0.95)
    depth: tuple[float, float] = (0.5, 4.0)
    wavelength_realistic: bool = True

    def validate(self) -> None:
        for name in ("beta_direct", "beta_backscatter", "veil", "depth"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 <= lo <= hi):
                raise ParameterError(f"invalid range for {name}: ({lo}, {hi})")
        if self.veil[1] > 1:
            raise ParameterError("veil range must stay within [0, 1]")

    def draw(self, rng: np.random.Generator) -> DegradationParams:
        self.validate()
        bd = rng.uniform(*self.beta_direct, size=3)
        if self.wavelength_realistic:
            bd = np.sort(bd)[::-1]  # red attenuates fastest
        return DegradationParams(
            beta_direct=bd,
            beta_backscatter=rng.uniform(*self.beta_backscatter, size=3),
            veil=rng.uniform(*self.veil, size=3),
            depth=float(rng.uniform(*self.depth)),
        )


@dataclass(frozen=True)
class TemplatePool:
    """Precomputed Lab channel statistics of the underwater template images."""

    stats: tuple[ChannelStats, ...]
    sources: tuple[str, ...]

    def __post_init__(self):
        if len(self.stats) < 1:
            raise ParameterError("template pool needs at least one template")
        if len(self.stats) != len(self.sources):
            raise ParameterError("template stats and sources differ in length")

    def __len__(self) -> int:
        return len(self.stats)

    @classmethod
    def from_dir(cls, template_dir) -> "TemplatePool":
        stats, sources, skipped = [], [], []
        for name in _list_images(template_dir):
            path = os.path.join(os.fspath(template_dir), name)
            try:
                img = load_image(path)
            except (UnsupportedFormatError, TruncatedFileError) as exc:
                skipped.append((path, str(exc)))
                continue
            stats.append(channel_stats(srgb_to_lab(img)))
            sources.append(path)
        if not stats:
            raise ParameterError(f"no decodable template images in {os.fspath(template_dir)!r}")
        return cls(stats=tuple(stats), sources=tuple(sources))


def color_transfer(source: LabImage, target_stats: ChannelStats) -> LabImage:
    """Shift the source's per-channel Lab mean/std onto the target statistics.

    A source channel with near-zero spread (std < 1e-8) maps to the constant
    target mean, the continuous limit of the scaling formula.
    """
    src_stats = channel_stats(source)
    out = np.empty_like(source.data)
    for c in range(3):
        if src_stats.std[c] < _SIGMA_FLOOR:
            out[..., c] = target_stats.mean[c]
        else:
            gain = target_stats.std[c] / src_stats.std[c]
            out[..., c] = gain * (source.data[..., c] - src_stats.mean[c]) + target_stats.mean[c]
    return LabImage(source.width, source.height, out)


def scatter_degrade(clean: RgbImage, params: DegradationParams) -> RgbImage:
    """Apply the scattering image-formation model and clamp to [0, 1].

    Per channel c: out = in * exp(-beta_direct_c * z) + veil_c * (1 - exp(-beta_backscatter_c * z)).
    """
    z = np.asarray(params.depth, dtype=np.float64)
    if z.ndim == 2:
        if z.shape != (clean.height, clean.width):
            raise ParameterError(f"depth map shape {z.shape} does not match image")
        z = z[..., None]
    direct = clean.data * np.exp(-params.beta_direct * z)
    backscatter = params.veil * (1.0 - np.exp(-params.beta_backscatter * z))
    return RgbImage(clean.width, clean.height, np.clip(direct + backscatter, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Dataset synthesis and its manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    degraded: str  # path relative to the manifest location
    clean: str  # path as passed to the synthesizer
    template_index: int
    seed: int
    method: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    seed: int = 0
    method: str = "color_transfer"
    params_note: str = ""

    def write(self, path) -> None:
        base = os.path.dirname(os.path.abspath(os.fspath(path)))
        for entry in self.entries:
            target = os.path.join(base, entry.degraded)
            if not os.path.exists(target):
                raise ParameterError(f"manifest references missing file {target!r}")
        lines = [
            "# uwdiff dataset manifest v1",
            f"# seed {self.seed}",
            f"# method {self.method}",
        ]
        if self.params_note:
            lines.append(f"# params {self.params_note}")
        for path_, reason in self.skipped:
            reason_flat = " ".join(str(reason).split())
            lines.append(f"# skip {path_} {reason_flat}")
        for e in self.entries:
            lines.append(f"{e.degraded}\t{e.clean}\t{e.template_index}\t{e.seed}\t{e.method}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        manifest = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].strip().split(" ", 1)
                    if parts[0] == "seed" and len(parts) > 1:
                        manifest.seed = int(parts[1])
                    elif parts[0] == "method" and len(parts) > 1:
                        manifest.method = parts[1]
                    elif parts[0] == "params" and len(parts) > 1:
                        manifest.params_note = parts[1]
                    elif parts[0] == "skip" and len(parts) > 1:
                        skip_parts = parts[1].split(" ", 1)
                        manifest.skipped.append((skip_parts[0], skip_parts[1] if len(skip_parts) > 1 else ""))
                    continue
                fields = line.split("\t")
                if len(fields) != 5:
                    raise ParameterError(f"malformed manifest record: {line!r}")
                manifest.entries.append(
                    ManifestEntry(fields[0], fields[1], int(fields[2]), int(fields[3]), fields[4])
                )
        return manifest


def _list_images(directory) -> list[str]:
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise ParameterError(f"not a directory: {directory!r}")
    names = sorted(
        n for n in os.listdir(directory) if n.lower().endswith(_IMAGE_EXTENSIONS)
    )
    if not names:
        raise ParameterError(f"no images (.png/.ppm) found in {directory!r}")
    return names


def image_rng(global_seed: int, image_index: int) -> np.random.Generator:
    """Counter-based generator derived from (seed, index); order-independent."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(global_seed), int(image_index)])))


def synthesize_dataset(
    clean_dir,
    template_dir,
    out_dir,
    seed: int,
    method: str = "color_transfer",
    ranges: ScatterRanges | None = None,
    warn=None,
) -> DatasetManifest:
    """Degrade every image in clean_dir and write pairs plus a manifest.

    One template is drawn per clean image from a generator keyed by
    (seed, image index), so reruns and parallel execution reproduce the same
    assignments. Undecodable inputs are skipped and recorded in the manifest.
    Returns the manifest, which is also written to out_dir/manifest.tsv.
    """
    if method not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    ranges = ranges or ScatterRanges()
    pool = TemplatePool.from_dir(template_dir)
    clean_names = _list_images(clean_dir)
    out_dir = os.fspath(out_dir)
    degraded_dir = os.path.join(out_dir, "degraded")
    os.makedirs(degraded_dir, exist_ok=True)

    stems = [os.path.splitext(n)[0] for n in clean_names]
    duplicates = {s for s in stems if stems.count(s) > 1}
    if duplicates:
        raise ParameterError(f"duplicate image stems in {os.fspath(clean_dir)!r}: {sorted(duplicates)}")

    manifest = DatasetManifest(seed=seed, method=method, params_note=_ranges_note(method, ranges))
    for index, name in enumerate(clean_names):
        clean_path = os.path.join(os.fspath(clean_dir), name)
        try:
            clean = load_image(clean_path)
        except (UnsupportedFormatError, TruncatedFileError) as exc:
            if warn is not None:
                warn(f"skipping {clean_path}: {exc}")
            manifest.skipped.append((clean_path, str(exc)))
            continue
        rng = image_rng(seed, index)
        template_index = int(rng.integers(0, len(pool)))
        if method == "color_transfer":
            degraded = lab_to_srgb(color_transfer(srgb_to_lab(clean), pool.stats[template_index]))
        else:
            degraded = scatter_degrade(clean, ranges.draw(rng))
        rel = f"degraded/{os.path.splitext(name)[0]}.png"
        save_image(degraded, os.path.join(out_dir, rel))
        manifest.entries.append(ManifestEntry(rel, clean_path, template_index, seed, method))
    manifest.write(os.path.join(out_dir, "manifest.tsv"))
    return manifest


def _ranges_note(method: str, ranges: ScatterRanges) -> str:
    if method != "scatter":
        return ""
    return (
        f"beta_direct={ranges.beta_direct} beta_backscatter={ranges.beta_backscatter} "
        f"veil={ranges.veil} depth={ranges.depth} wavelength_realistic={ranges.wavelength_realistic}"
    )


def load_pair(manifest_path, entry: ManifestEntry) -> tuple[RgbImage, RgbImage]:
    """Load (degraded, clean) images for a manifest entry."""
    base = os.path.dirname(os.path.abspath(os.fspath(manifest_path)))
    degraded = load_image(os.path.join(base, entry.degraded))
    clean = load_image(entry.clean)
    return degraded, clean
