import numpy as np
import pytest

from miqabench import hashing, io
from miqabench.core import DatasetManifest, ImageEntry


def make_test_image(h: int, w: int, key: int = 0) -> np.ndarray:
    """Deterministic structured test image: low-frequency shading, a ramp,
    broadband noise texture, and a dimmed disk.

    The texture is broadband on purpose: narrow periodic tones make PSNR
    oscillate (rather than fall) under widening directional blurs.
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    shade = 90.0 + 70.0 * np.sin(2 * np.pi * (xx / w * 2 + 0.37 * key)) * np.cos(
        2 * np.pi * yy / h * 1.5
    )
    ramp = 60.0 * (xx + yy) / (w + h)
    img = np.stack(
        [shade, 0.75 * shade + ramp, 160.0 - 0.4 * shade + 0.3 * ramp], axis=-1
    )
    noise = hashing.standard_normals(h * w * 3, hashing.derive_key("test-image", key))
    img += 18.0 * noise.reshape(h, w, 3)
    cy, cx = h / 2.0, w / 2.0
    disk = ((yy - cy) ** 2 + (xx - cx) ** 2) < (min(h, w) / 4.0) ** 2
    img[disk] = img[disk] * 0.55 + 100.0
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def make_roi_mask(h: int, w: int, kind: str = "disk") -> np.ndarray:
    mask = np.zeros((h, w), dtype=np.uint8)
    if kind == "disk":
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        inside = ((yy - h / 2.0) ** 2 + (xx - w / 2.0) ** 2) < (min(h, w) / 3.0) ** 2
        mask[inside] = 255
    elif kind == "checker":
        mask[(np.indices((h, w)).sum(axis=0) % 2) == 0] = 255
    elif kind == "all":
        mask[:] = 255
    elif kind == "none":
        pass
    else:
        raise ValueError(kind)
    return mask


def write_classification_manifest(directory, n_images=2, size=48, grid=None):
    """Write a real on-disk classification corpus and manifest; returns the
    manifest path."""
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_images):
        image_id = f"img-{i:02d}"
        image_path = str(directory / f"{image_id}.png")
        mask_path = str(directory / f"{image_id}_mask.png")
        io.save_image_png(image_path, make_test_image(size, size, key=i))
        io.save_mask_png(mask_path, make_roi_mask(size, size))
        entries.append(ImageEntry(image_id, image_path, mask_path, i % 10))
    manifest = (
        DatasetManifest(task="classification", images=tuple(entries))
        if grid is None
        else DatasetManifest(task="classification", images=tuple(entries), grid=grid)
    )
    manifest_path = str(directory / "manifest.json")
    io.save_manifest(manifest_path, manifest)
    return manifest_path


@pytest.fixture
def test_image():
    return make_test_image(64, 64, key=1)


@pytest.fixture
def roi_mask():
    return make_roi_mask(64, 64)


@pytest.fixture(scope="session")
def acceptance_images():
    """Three fixed 256x256 structured images."""
    return [make_test_image(256, 256, key=i) for i in range(3)]
