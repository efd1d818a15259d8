"""Shared fixtures: a small on-disk image set with landmark annotations."""

import csv

import numpy as np
import pytest
from PIL import Image

from morphextract import TEMPLATE


def place_landmarks(rng, height, width):
    """Template points scaled and offset to fit inside the canvas."""
    scale = rng.uniform(0.5, 0.8)
    points = TEMPLATE * scale
    span = points.max(axis=0) - points.min(axis=0)
    margin = 10.0
    max_x = width - margin - span[0]
    max_y = height - margin - span[1]
    offset = np.array([rng.uniform(margin, max_x), rng.uniform(margin, max_y)])
    return points - points.min(axis=0) + offset


def synthetic_face(rng, height=300, width=320):
    """Noise canvas with bright disks on the landmark spots."""
    image = rng.integers(30, 120, size=(height, width, 3), dtype=np.uint8)
    points = place_landmarks(rng, height, width)
    colors = np.array(
        [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 0], [0, 255, 255]],
        dtype=np.uint8,
    )
    yy, xx = np.mgrid[0:height, 0:width]
    for (x, y), color in zip(points, colors):
        mask = (xx - x) ** 2 + (yy - y) ** 2 <= 5.0**2
        image[mask] = color
    return image, points


@pytest.fixture
def image_set(tmp_path):
    """Ten valid samples plus one unreadable and one unannotated image.

    Returns (images_root, metadata_path, landmarks_path, survivor_ids).
    """
    root = tmp_path / "images"
    root.mkdir()
    rng = np.random.default_rng(42)

    samples = []
    for i in range(6):
        samples.append({
            "image_path": f"bona_{i}.png", "source_dataset": "FML",
            "label": "bonafide", "attack_algorithm": "",
            "domain": "digital", "identities": f"id-b{i}",
        })
    attack_specs = [
        ("MorDIFF", ""), ("SG2-W", ""), ("LB-Complete", ""), ("WaveMorph", "GAN"),
    ]
    for i, (algo, family) in enumerate(attack_specs):
        samples.append({
            "image_path": f"attack_{i}.png", "source_dataset": "FML",
            "label": "attack", "attack_algorithm": algo,
            "attack_family": family, "domain": "digital",
            "identities": f"id-m{2 * i}|id-m{2 * i + 1}",
        })

    landmark_rows = []
    for sample in samples:
        image, points = synthetic_face(rng)
        Image.fromarray(image).save(root / sample["image_path"])
        landmark_rows.append([sample["image_path"]]
                             + [f"{v:.3f}" for v in points.ravel()])

    # One image that is not an image, one with no landmark annotation.
    (root / "broken.png").write_bytes(b"this is not a png")
    samples.append({
        "image_path": "broken.png", "source_dataset": "FML",
        "label": "bonafide", "attack_algorithm": "",
        "domain": "digital", "identities": "id-broken",
    })
    landmark_rows.append(["broken.png"] + ["1.0"] * 10)

    image, _ = synthetic_face(rng)
    Image.fromarray(image).save(root / "unannotated.png")
    samples.append({
        "image_path": "unannotated.png", "source_dataset": "FML",
        "label": "bonafide", "attack_algorithm": "",
        "domain": "digital", "identities": "id-unannotated",
    })

    metadata_path = tmp_path / "metadata.csv"
    fields = ["image_path", "source_dataset", "label", "attack_algorithm",
              "attack_family", "domain", "identities"]
    with open(metadata_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for sample in samples:
            writer.writerow({k: sample.get(k, "") for k in fields})

    landmarks_path = tmp_path / "landmarks.csv"
    header = ["image_path"] + [f"{a}{i}" for i in range(1, 6) for a in "xy"]
    with open(landmarks_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(landmark_rows)

    survivors = [s["image_path"].removesuffix(".png")
                 for s in samples
                 if s["image_path"] not in ("broken.png", "unannotated.png")]
    return root, metadata_path, landmarks_path, survivors
