"""Built-in synthetic objects.

Natural-image objects take their amplitude and phase from two grayscale
sample images bundled with scikit-image.  The etched target is a
uniform-amplitude plate with the letters "BIT" raised by a given step
height.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import rng
from .analysis import depth_to_phase
from .errors import InvalidArgument
from .field import ComplexField

# grayscale-convertible skimage.data images that ship with the package
IMAGE_NAMES = (
    "camera",
    "astronaut",
    "coins",
    "moon",
    "text",
    "page",
    "clock",
    "grass",
    "gravel",
    "brick",
    "cell",
    "coffee",
    "chelsea",
    "rocket",
    "immunohistochemistry",
    "hubble_deep_field",
)

# (amplitude image, phase image) pairs for multi-object studies
NATURAL_PAIRS = (
    ("camera", "astronaut"),
    ("astronaut", "camera"),
    ("coins", "moon"),
    ("moon", "clock"),
    ("text", "page"),
    ("clock", "coffee"),
    ("grass", "gravel"),
    ("brick", "chelsea"),
    ("cell", "rocket"),
    ("immunohistochemistry", "hubble_deep_field"),
)


@lru_cache(maxsize=64)
def _image(name: str, side: int) -> np.ndarray:
    from skimage import color, data, transform

    if name not in IMAGE_NAMES:
        raise InvalidArgument(f"unknown built-in image {name!r}; choose from {IMAGE_NAMES}")
    img = getattr(data, name)()
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3])
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    s = min(h, w)
    img = img[(h - s) // 2 : (h - s) // 2 + s, (w - s) // 2 : (w - s) // 2 + s]
    img = transform.resize(img, (side, side), anti_aliasing=True)
    lo, hi = img.min(), img.max()
    out = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    out.setflags(write=False)
    return out


def image(name: str, side: int) -> np.ndarray:
    """Center-cropped, resized sample image scaled to [0, 1]."""
    return _image(name, side).copy()


def natural_object(
    side: int,
    amplitude: str = "camera",
    phase: str = "astronaut",
    amp_floor: float = 0.1,
    phase_range: float = np.pi,
) -> ComplexField:
    """Amplitude in [amp_floor, 1] and phase in [0, phase_range] from two images."""
    if not 0 <= amp_floor < 1:
        raise InvalidArgument(f"amp_floor must lie in [0, 1), got {amp_floor}")
    a = amp_floor + (1 - amp_floor) * _image(amplitude, side)
    p = phase_range * _image(phase, side)
    return ComplexField.from_amplitude_phase(a, p)


def load_image_pair(amplitude_path, phase_path, side: int, amp_floor: float = 0.1, phase_range: float = np.pi):
    """Object from two user-supplied grayscale image files."""
    from skimage import io, transform

    def prep(path):
        img = np.asarray(io.imread(path, as_gray=True), dtype=np.float64)
        img = transform.resize(img, (side, side), anti_aliasing=True)
        lo, hi = img.min(), img.max()
        return (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)

    a = amp_floor + (1 - amp_floor) * prep(amplitude_path)
    return ComplexField.from_amplitude_phase(a, phase_range * prep(phase_path))


def flat_object(side: int) -> ComplexField:
    return ComplexField(np.ones((side, side), dtype=np.complex128))


def random_object(side: int, seed: int, amp_floor: float = 0.2) -> ComplexField:
    """Independent amplitudes in [amp_floor, 1) and uniform phases."""
    u = rng.uniform(rng.stream(seed, rng.TRIALS, 0x0B1EC7), (2, side, side))
    a = amp_floor + (1 - amp_floor) * u[0]
    return ComplexField.from_amplitude_phase(a, 2 * np.pi * u[1])


_GLYPHS = {
    "B": ("11110", "10001", "10001", "11110", "10001", "10001", "11110"),
    "I": ("11111", "00100", "00100", "00100", "00100", "00100", "11111"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
}


def text_mask(side: int, text: str = "BIT") -> np.ndarray:
    """Boolean mask with ``text`` drawn in a 5x7 block font, centered."""
    glyphs = [np.array([[c == "1" for c in row] for row in _GLYPHS[ch]]) for ch in text]
    gap = np.zeros((7, 1), dtype=bool)
    parts = []
    for i, g in enumerate(glyphs):
        if i:
            parts.append(gap)
        parts.append(g)
    block = np.hstack(parts)
    scale = max(1, (side - 4) // block.shape[1])
    big = np.kron(block, np.ones((scale, scale), dtype=bool))
    if big.shape[0] > side or big.shape[1] > side:
        raise InvalidArgument(f"side {side} too small for text {text!r}")
    out = np.zeros((side, side), dtype=bool)
    r0 = (side - big.shape[0]) // 2
    c0 = (side - big.shape[1]) // 2
    out[r0 : r0 + big.shape[0], c0 : c0 + big.shape[1]] = big
    return out


def etched_target(side: int, depth: float, wavelength: float, index_contrast: float, text: str = "BIT") -> ComplexField:
    """Unit-amplitude plate whose text region carries the phase of a ``depth`` step."""
    step = float(depth_to_phase(depth, wavelength, index_contrast))
    return ComplexField(np.exp(1j * step * text_mask(side, text)))
