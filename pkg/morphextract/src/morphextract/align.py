"""Five-point landmark alignment to a canonical 256x256 face crop.

The target template is the widely used five-point arrangement (eye
centers, nose tip, mouth corners) defined on a 112-pixel reference frame,
scaled up to 256.  A similarity transform (rotation, uniform scale,
translation) is estimated from the detected landmarks to the template and
the image is warped onto the 256x256 canvas.  The exact template used by
the original evaluation is unpublished; this one is a standard stand-in.
"""

from __future__ import annotations

import numpy as np
from skimage import transform as sktransform

from .errors import AlignmentError

CROP_SIZE = 256

# Eye centers, nose tip, mouth corners on a 112x112 reference frame.
_TEMPLATE_112 = np.array(
    [
        [38.2946, 51.6963],
        [73.5318, 51.5014],
        [56.0252, 71.7366],
        [41.5493, 92.3655],
        [70.7299, 92.2041],
    ],
    dtype=np.float64,
)

TEMPLATE = _TEMPLATE_112 * (CROP_SIZE / 112.0)


def align_face(image: np.ndarray, landmarks) -> np.ndarray:
    """Warp ``image`` so ``landmarks`` (5x2, x/y pixels) hit the template.

    Returns a float32 array of shape (256, 256, 3) with values in [0, 1].
    Raises AlignmentError when the landmarks cannot anchor a similarity
    transform (wrong shape, non-finite, or degenerate geometry).
    """
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.shape != (5, 2):
        raise AlignmentError(f"expected 5 landmarks (5x2), got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise AlignmentError("landmarks contain non-finite values")
    # A similarity transform needs at least two distinct anchor points.
    if np.allclose(pts, pts[0], atol=1e-9):
        raise AlignmentError("degenerate landmarks: all points coincide")

    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise AlignmentError(f"expected HxWx3 image, got shape {img.shape}")
    if img.dtype == np.uint8:
        img = img.astype(np.float32) / 255.0
    else:
        img = img.astype(np.float32)

    tform = sktransform.SimilarityTransform()
    if not tform.estimate(pts, TEMPLATE) or not np.isfinite(tform.params).all():
        raise AlignmentError("could not estimate similarity transform")

    warped = sktransform.warp(
        img,
        tform.inverse,
        output_shape=(CROP_SIZE, CROP_SIZE),
        order=1,
        mode="constant",
        cval=0.0,
        preserve_range=True,
    )
    return np.clip(warped, 0.0, 1.0).astype(np.float32)
