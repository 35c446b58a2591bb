"""PNG encoding and montage grids for sample inspection."""

import io
import json

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo


def png_bytes(image: np.ndarray) -> bytes:
    """Encode a (64,64) binary or grayscale uint8 image as PNG bytes."""
    arr = image.astype(np.uint8)
    if arr.max() <= 1:
        arr = arr * 255
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def export_montage(
    images: list[np.ndarray],
    path: str,
    per_row: int = 6,
    logit_values: list[float] | None = None,
    sample_ids: list[int] | None = None,
    pad: int = 2,
) -> None:
    """Write a fixed-layout PNG grid. Per-sample logit values travel in the
    PNG text metadata rather than being rendered into pixels."""
    if not images:
        raise ValueError("no images to montage")
    tile = images[0].shape[0]
    n = len(images)
    rows = (n + per_row - 1) // per_row
    cols = min(n, per_row)
    grid = np.zeros((rows * (tile + pad) - pad, cols * (tile + pad) - pad), dtype=np.uint8)
    for i, img in enumerate(images):
        arr = img.astype(np.uint8)
        if arr.max() <= 1:
            arr = arr * 255
        r, c = divmod(i, per_row)
        grid[r * (tile + pad) : r * (tile + pad) + tile, c * (tile + pad) : c * (tile + pad) + tile] = arr
    meta = PngInfo()
    if logit_values is not None:
        meta.add_text("logits", json.dumps([round(float(v), 6) for v in logit_values]))
    if sample_ids is not None:
        meta.add_text("sample_ids", json.dumps([int(i) for i in sample_ids]))
    meta.add_text("per_row", str(per_row))
    Image.fromarray(grid, mode="L").save(path, format="PNG", pnginfo=meta)
