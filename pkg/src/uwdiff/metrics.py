"""Full-reference (PSNR, SSIM) and no-reference (UIQM, UCIQE, CPBD) quality metrics.

Internal constants follow each metric's defining publication: SSIM uses an
11x11 Gaussian window (sigma 1.5) with K1=0.01/K2=0.03 on BT.601 luminance,
UIQM combines its colorfulness/sharpness/contrast sub-scores with the
published weights, UCIQE uses the 0.4680/0.2745/0.2576 coefficients, and CPBD
uses beta=3.6 with contrast-dependent just-noticeable-blur widths. All images
are float rasters in [0, 1]; PSNR's peak value is fixed at 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError, ShapeMismatchError
from .images import RgbImage, luminance_bt601, srgb_to_lab

# SSIM
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03

# UIQM combination weights and UICM coefficients
_UIQM_C1 = 0.0282
_UIQM_C2 = 0.2953
_UIQM_C3 = 3.5753
_UICM_W_MU = -0.0268
_UICM_W_SIGMA = 0.1586
_UISM_LUMA = (0.299, 0.587, 0.114)
_EME_BLOCK = 8
_LOGAMEE_BLOCK = 8
_PLIP_GAMMA = 1026.0

# UCIQE coefficients
_UCIQE_C1 = 0.4680
_UCIQE_C2 = 0.2745
_UCIQE_C3 = 0.2576

# CPBD
_CPBD_BLOCK = 64
_CPBD_EDGE_RATIO = 0.002
_CPBD_BETA = 3.6
_CPBD_PBLUR_THRESHOLD = 0.63
_CPBD_CONTRAST_SPLIT = 50.0  # on the [0, 255] luminance scale
_JNB_WIDTH_LOW_CONTRAST = 5.0
_JNB_WIDTH_HIGH_CONTRAST = 3.0

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_SOBEL_Y = _SOBEL_X.T


ALL_METRICS = ("psnr", "ssim", "uiqm", "uciqe", "cpbd")


@dataclass(frozen=True)
class MetricReport:
    """One image's scores; a field is None when its metric was not computed
    (no reference supplied, or excluded from the requested set)."""

    psnr: float | None
    ssim: float | None
    uiqm: float | None
    uciqe: float | None
    cpbd: float | None
    uicm: float | None
    uism: float | None
    uiconm: float | None


def _require_same_shape(a: RgbImage, b: RgbImage) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatchError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def psnr(a: RgbImage, b: RgbImage) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; identical images give +inf."""
    _require_same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(r**2) / (2.0 * sigma**2))
    return k / k.sum()


def _window_means(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable Gaussian-weighted means over all fully interior windows."""
    w = sliding_window_view(x, len(kernel), axis=1) @ kernel
    w = sliding_window_view(w, len(kernel), axis=0)
    return w @ kernel


def ssim(a: RgbImage, b: RgbImage) -> float:
    """Mean structural similarity on BT.601 luminance over valid window positions."""
    _require_same_shape(a, b)
    if min(a.height, a.width) < _SSIM_WINDOW:
        raise ParameterError(f"ssim needs images of at least {_SSIM_WINDOW}x{_SSIM_WINDOW}")
    x = luminance_bt601(a)
    y = luminance_bt601(b)
    k = _gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    mu_x = _window_means(x, k)
    mu_y = _window_means(y, k)
    var_x = _window_means(x * x, k) - mu_x**2
    var_y = _window_means(y * y, k) - mu_y**2
    cov = _window_means(x * y, k) - mu_x * mu_y
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def sobel_gradients(channel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal/vertical Sobel derivatives with edge-replicating padding."""
    padded = np.pad(channel, 1, mode="symmetric")
    win = sliding_window_view(padded, (3, 3))
    gx = np.einsum("ijkl,kl->ij", win, _SOBEL_X)
    gy = np.einsum("ijkl,kl->ij", win, _SOBEL_Y)
    return gx, gy


def _block_slices(height: int, width: int, block: int):
    for r0 in range(0, height, block):
        for c0 in range(0, width, block):
            yield slice(r0, min(r0 + block, height)), slice(c0, min(c0 + block, width))


def _eme(channel_255: np.ndarray, block: int = _EME_BLOCK) -> float:
    """Block log-contrast score; values are floored at 1.0 (8-bit quantization floor)."""
    nbx = math.ceil(channel_255.shape[0] / block)
    nby = math.ceil(channel_255.shape[1] / block)
    total = 0.0
    for rs, cs in _block_slices(*channel_255.shape, block):
        bmax = max(float(channel_255[rs, cs].max()), 1.0)
        bmin = max(float(channel_255[rs, cs].min()), 1.0)
        total += math.log(bmax / bmin)
    return 2.0 / (nbx * nby) * total


def _uicm(rgb: np.ndarray) -> float:
    red, green, blue = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    opponents = (red - green, (red + green) / 2.0 - blue)
    mus, sigmas = [], []
    for channel in opponents:
        flat = np.sort(channel, axis=None)
        n = flat.size
        t_left = math.ceil(0.1 * n)
        t_right = math.floor(0.1 * n)
        mu = float(flat[t_left : n - t_right].mean())
        mus.append(mu)
        sigmas.append(float(((channel - mu) ** 2).mean()))
    return _UICM_W_MU * math.hypot(*mus) + _UICM_W_SIGMA * math.sqrt(sum(sigmas))


def _uism(rgb: np.ndarray) -> float:
    score = 0.0
    for c, weight in enumerate(_UISM_LUMA):
        channel = rgb[..., c]
        gx, gy = sobel_gradients(channel)
        edge_map = channel * np.hypot(gx, gy) * 255.0
        score += weight * _eme(edge_map)
    return score


def _plip_sub(a: float, b: float) -> float:
    return _PLIP_GAMMA * (a - b) / (_PLIP_GAMMA - b)


def _plip_sum(a: float, b: float) -> float:
    return a + b - a * b / _PLIP_GAMMA


def _uiconm(gray_255: np.ndarray, block: int = _LOGAMEE_BLOCK) -> float:
    """Entropy-style block contrast via PLIP-ratio Michelson terms (positive form)."""
    nbx = math.ceil(gray_255.shape[0] / block)
    nby = math.ceil(gray_255.shape[1] / block)
    total = 0.0
    for rs, cs in _block_slices(*gray_255.shape, block):
        bmax = float(gray_255[rs, cs].max())
        bmin = float(gray_255[rs, cs].min())
        denom = _plip_sum(bmax, bmin)
        if denom <= 0.0:
            continue
        m = _plip_sub(bmax, bmin) / denom
        if m > 0.0:
            total += m * math.log(m)
    return -total / (nbx * nby)


def uiqm(img: RgbImage) -> tuple[float, float, float, float]:
    """Underwater image quality measure; returns (uiqm, uicm, uism, uiconm)."""
    if min(img.height, img.width) < 16:
        raise ParameterError("uiqm needs images of at least 16x16")
    rgb = np.clip(img.data, 0.0, 1.0)
    uicm = _uicm(rgb)
    uism = _uism(rgb)
    uiconm = _uiconm(luminance_bt601(img) * 255.0)
    return (
        _UIQM_C1 * uicm + _UIQM_C2 * uism + _UIQM_C3 * uiconm,
        uicm,
        uism,
        uiconm,
    )


def uciqe(img: RgbImage) -> float:
    """Chroma spread + normalized luminance contrast + mean saturation in CIELAB."""
    lab = srgb_to_lab(img).data
    lum = lab[..., 0]
    chroma = np.hypot(lab[..., 1], lab[..., 2])
    sigma_chroma = float(chroma.std())
    contrast = float(np.percentile(lum, 99) - np.percentile(lum, 1)) / 100.0
    hyp = np.sqrt(chroma**2 + lum**2)
    saturation = np.divide(chroma, hyp, out=np.zeros_like(chroma), where=hyp > 0)
    return _UCIQE_C1 * sigma_chroma + _UCIQE_C2 * contrast + _UCIQE_C3 * float(saturation.mean())


_TRACE_STEPS = {
    0: (0, 1),
    45: (1, 1),
    90: (1, 0),
    135: (1, -1),
    180: (0, -1),
    225: (-1, -1),
    270: (-1, 0),
    315: (-1, 1),
}


def _edge_width(lum: np.ndarray, row: int, col: int, gx: float, gy: float) -> float | None:
    """Edge width along the (quantized) gradient direction, Marziliano-style.

    The gradient vector is quantized to one of 8 directions; the walk goes
    uphill along it and downhill against it to the nearest local extrema.
    Returns None when the trace leaves the image before terminating.
    """
    angle = math.degrees(math.atan2(gy, gx)) % 360.0
    direction = int(round(angle / 45.0)) % 8 * 45
    dr, dc = _TRACE_STEPS[direction]
    height, width = lum.shape
    total = 0.0
    for sign in (1, -1):
        r, c = row, col
        value = lum[row, col]
        while True:
            nr, nc = r + sign * dr, c + sign * dc
            if not (0 <= nr < height and 0 <= nc < width):
                return None
            nxt = lum[nr, nc]
            if (sign > 0 and nxt <= value) or (sign < 0 and nxt >= value):
                break
            r, c, value = nr, nc, nxt
            total += 1.0
    return total


def cpbd(img: RgbImage) -> float:
    """Cumulative probability of blur detection on BT.601 luminance.

    64x64 blocks with an edge-pixel ratio above 0.2% contribute each of their
    measurable edge widths; a width w in a block of contrast C maps to the blur
    probability 1 - exp(-(w / w_jnb(C))**3.6) and the score is the fraction of
    probabilities at or below 0.63. Images without edge blocks score 0.
    """
    if min(img.height, img.width) < _CPBD_BLOCK:
        raise ParameterError(f"cpbd needs images of at least {_CPBD_BLOCK}x{_CPBD_BLOCK}")
    lum = luminance_bt601(img) * 255.0
    gx, gy = sobel_gradients(lum)
    mag2 = gx**2 + gy**2
    mean_mag2 = float(mag2.mean())
    if mean_mag2 == 0.0:
        return 0.0
    edges = mag2 > 4.0 * mean_mag2
    probs = []
    # full blocks only; a trailing remainder thinner than one block is ignored
    for br in range(img.height // _CPBD_BLOCK):
        for bc in range(img.width // _CPBD_BLOCK):
            rs = slice(br * _CPBD_BLOCK, (br + 1) * _CPBD_BLOCK)
            cs = slice(bc * _CPBD_BLOCK, (bc + 1) * _CPBD_BLOCK)
            block_edges = edges[rs, cs]
            if float(block_edges.mean()) <= _CPBD_EDGE_RATIO:
                continue
            contrast = float(lum[rs, cs].max() - lum[rs, cs].min())
            w_jnb = (
                _JNB_WIDTH_LOW_CONTRAST
                if contrast <= _CPBD_CONTRAST_SPLIT
                else _JNB_WIDTH_HIGH_CONTRAST
            )
            for row, col in zip(*np.nonzero(block_edges)):
                r, c = rs.start + int(row), cs.start + int(col)
                width = _edge_width(lum, r, c, gx[r, c], gy[r, c])
                if width is None:
                    continue
                probs.append(1.0 - math.exp(-((width / w_jnb) ** _CPBD_BETA)))
    if not probs:
        return 0.0
    probs_arr = np.asarray(probs)
    return float(np.mean(probs_arr <= _CPBD_PBLUR_THRESHOLD))


def evaluate(
    img: RgbImage, reference: RgbImage | None = None, include=ALL_METRICS
) -> MetricReport:
    """Assemble the metric report for one image.

    Full-reference metrics need `reference`; `include` restricts the computed
    set (useful when images are below a metric's minimum size).
    """
    q = uicm = uism = uiconm = None
    if "uiqm" in include:
        q, uicm, uism, uiconm = uiqm(img)
    return MetricReport(
        psnr=psnr(img, reference) if reference is not None and "psnr" in include else None,
        ssim=ssim(img, reference) if reference is not None and "ssim" in include else None,
        uiqm=q,
        uciqe=uciqe(img) if "uciqe" in include else None,
        cpbd=cpbd(img) if "cpbd" in include else None,
        uicm=uicm,
        uism=uism,
        uiconm=uiconm,
    )
