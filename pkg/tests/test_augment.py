import numpy as np
import pytest
from pydantic import ValidationError

from heare.helmet.augment import (
    LabeledSample,
    MosaicConfig,
    augment_blur,
    augment_flip,
    augment_rotate,
    augment_rotate_arbitrary,
    labels_path,
    load_sample,
    mosaic,
    mosaic_offset,
    read_labels,
    rotated_hull,
    save_sample,
    split_dataset,
    write_labels,
)
from heare.helmet.core import BoundingBox, ClassId, FrameDims, box_inside
from heare.helmet.imaging import ImageBuffer, resize_bilinear, rotate90
from heare.helmet.rng import SplitMix64


def random_sample(rng, max_boxes=5):
    width = int(rng.integers(8, 33))
    height = int(rng.integers(8, 33))
    image = ImageBuffer(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))
    boxes = []
    for _ in range(int(rng.integers(0, max_boxes + 1))):
        left = int(rng.integers(0, width))
        top = int(rng.integers(0, height))
        box = BoundingBox(
            left,
            top,
            int(rng.integers(1, width - left + 1)),
            int(rng.integers(1, height - top + 1)),
        )
        boxes.append((box, ClassId(int(rng.integers(1, 8)))))
    return LabeledSample(image, tuple(boxes))


@pytest.fixture
def rng():
    return np.random.default_rng(31337)


def test_sample_rejects_box_outside_image():
    image = ImageBuffer.filled(FrameDims(10, 10), (0, 0, 0))
    with pytest.raises(ValueError):
        LabeledSample(image, ((BoundingBox(5, 5, 6, 2), ClassId.MOTORCYCLE),))


def test_flip_mirrors_boxes():
    image = ImageBuffer.filled(FrameDims(1920, 1080), (0, 0, 0))
    sample = LabeledSample(
        image,
        (
            (BoundingBox(100, 10, 50, 20), ClassId.MOTORCYCLE),
            (BoundingBox(935, 10, 50, 20), ClassId.DRIVER_WITH_HELMET),
        ),
    )
    flipped = augment_flip(sample)
    assert flipped.boxes[0] == (BoundingBox(1770, 10, 50, 20), ClassId.MOTORCYCLE)
    assert flipped.boxes[1] == sample.boxes[1]


def test_flip_involution(rng):
    for _ in range(100):
        sample = random_sample(rng)
        assert augment_flip(augment_flip(sample)) == sample


def test_rotate_zero_and_full_turn(rng):
    for _ in range(20):
        sample = random_sample(rng)
        assert augment_rotate(sample, 0) == sample
        result = sample
        for _ in range(4):
            result = augment_rotate(result, 1)
        assert result == sample


def test_rotate_quarter_turn_box_mapping():
    image = ImageBuffer.filled(FrameDims(1920, 1080), (0, 0, 0))
    sample = LabeledSample(image, ((BoundingBox(100, 200, 30, 40), ClassId.MOTORCYCLE),))
    rotated = augment_rotate(sample, 1)
    assert rotated.image.dims == FrameDims(1080, 1920)
    assert rotated.boxes[0][0] == BoundingBox(200, 1920 - 100 - 30, 40, 30)


def test_rotate_quarter_turn_matches_pixel_mask():
    pixels = np.zeros((6, 8, 3), dtype=np.uint8)
    pixels[2:4, 1:4] = 255  # box (1, 2, 3, 2)
    sample = LabeledSample(
        ImageBuffer(pixels), ((BoundingBox(1, 2, 3, 2), ClassId.MOTORCYCLE),)
    )
    for turns in range(4):
        rotated = augment_rotate(sample, turns)
        ys, xs = np.nonzero(rotate90(sample.image, turns).pixels[:, :, 0])
        mask_box = BoundingBox(
            xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1
        )
        assert rotated.boxes[0][0] == mask_box


def test_rotate_arbitrary_half_turn_matches_quarter_turns(rng):
    for _ in range(20):
        sample = random_sample(rng)
        by_angle = augment_rotate_arbitrary(sample, 180.0, min_box_visibility=0.0)
        by_turns = augment_rotate(sample, 2)
        assert len(by_angle.boxes) == len(by_turns.boxes)
        for (a, ca), (b, cb) in zip(by_angle.boxes, by_turns.boxes):
            assert ca == cb
            assert a.corners() == pytest.approx(b.corners(), abs=1e-6)


def test_rotated_hull_grows_and_drops_slivers():
    dims = FrameDims(100, 100)
    hull = rotated_hull(BoundingBox(40, 40, 20, 20), dims, 45.0)
    side = 20 * 2**0.5
    assert hull.width == pytest.approx(side)
    assert hull.left == pytest.approx(50 - side / 2)

    image = ImageBuffer.filled(dims, (0, 0, 0))
    # hull lands across the left edge with under a quarter of it visible
    corner = LabeledSample(image, ((BoundingBox(7, 7, 10, 10), ClassId.MOTORCYCLE),))
    assert augment_rotate_arbitrary(corner, 45.0).boxes == ()
    assert len(augment_rotate_arbitrary(corner, 45.0, min_box_visibility=0.0).boxes) == 1


def test_blur_keeps_boxes(rng):
    sample = random_sample(rng)
    blurred = augment_blur(sample, 1.5)
    assert blurred.boxes == sample.boxes
    with pytest.raises(ValueError):
        augment_blur(sample, 0)


def test_mosaic_config_validation():
    with pytest.raises(ValidationError):
        MosaicConfig(target_dims=FrameDims(4, 4), min_box_visibility=1.5, seed=1)
    with pytest.raises(ValidationError):
        MosaicConfig(target_dims=FrameDims(4, 4), seed=-1)


def test_mosaic_requires_four_samples(rng):
    cfg = MosaicConfig(target_dims=FrameDims(8, 8), seed=0)
    with pytest.raises(ValueError, match="exactly 4"):
        mosaic([random_sample(rng)] * 3, cfg)


def test_mosaic_uniform_inputs():
    image = ImageBuffer.filled(FrameDims(5, 7), (9, 8, 7))
    sample = LabeledSample(image)
    cfg = MosaicConfig(target_dims=FrameDims(12, 10), seed=99)
    out = mosaic([sample] * 4, cfg)
    assert out.image == ImageBuffer.filled(FrameDims(12, 10), (9, 8, 7))


def test_mosaic_boxes_stay_in_frame(rng):
    for seed in range(50):
        samples = [random_sample(rng) for _ in range(4)]
        cfg = MosaicConfig(target_dims=FrameDims(16, 12), seed=seed)
        out = mosaic(samples, cfg)
        assert out.image.dims == cfg.target_dims
        assert len(out.boxes) <= sum(len(s.boxes) for s in samples)
        for box, _ in out.boxes:
            assert box_inside(box, cfg.target_dims, 1e-6)


def test_mosaic_zero_visibility_keeps_intersecting_boxes(rng):
    samples = [random_sample(rng) for _ in range(4)]
    cfg = MosaicConfig(target_dims=FrameDims(16, 12), min_box_visibility=0.0, seed=5)
    ox, oy = mosaic_offset(cfg)
    expected = 0
    for i, sample in enumerate(samples):
        sx = 16 / sample.image.width
        sy = 12 / sample.image.height
        qx, qy = (i % 2) * 16, (i // 2) * 12
        for box, _ in sample.boxes:
            left = box.left * sx + qx - ox
            top = box.top * sy + qy - oy
            if left < 16 and top < 12 and left + box.width * sx > 0 and top + box.height * sy > 0:
                expected += 1
    assert len(mosaic(samples, cfg).boxes) == expected


def test_mosaic_crop_at_origin_is_top_left_sample(rng):
    dims = FrameDims(4, 3)
    seed = next(
        s for s in range(10_000) if mosaic_offset(MosaicConfig(target_dims=dims, seed=s)) == (0, 0)
    )
    cfg = MosaicConfig(target_dims=dims, min_box_visibility=0.0, seed=seed)
    samples = [random_sample(rng) for _ in range(4)]
    out = mosaic(samples, cfg)

    first = samples[0]
    assert out.image == resize_bilinear(first.image, dims)
    sx = dims.width / first.image.width
    sy = dims.height / first.image.height
    assert len(out.boxes) == len(first.boxes)
    for (got, got_class), (box, class_id) in zip(out.boxes, first.boxes):
        assert got_class == class_id
        assert got.corners() == pytest.approx(
            (box.left * sx, box.top * sy, box.right * sx, box.bottom * sy)
        )


def test_mosaic_offset_uses_explicit_stream():
    cfg = MosaicConfig(target_dims=FrameDims(100, 50), seed=3)
    assert mosaic_offset(cfg) == mosaic_offset(cfg, SplitMix64(3))
    x, y = mosaic_offset(cfg)
    assert 0 <= x <= 100 and 0 <= y <= 50


def test_split_counts():
    manifest = [f"img_{i:05d}" for i in range(4284)]
    train, val = split_dataset(manifest, 0.2, seed=7)
    assert len(val) == 856
    assert len(train) == 3428


def test_split_is_deterministic_partition(rng):
    for _ in range(20):
        n = int(rng.integers(1, 300))
        manifest = list(range(n))
        fraction = float(rng.uniform(0.01, 0.99))
        seed = int(rng.integers(0, 2**32))
        train, val = split_dataset(manifest, fraction, seed)
        assert (train, val) == split_dataset(manifest, fraction, seed)
        assert sorted(train + val) == manifest
        assert not set(train) & set(val)


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split_dataset([1, 2, 3], 1.0, seed=0)
    with pytest.raises(ValueError):
        split_dataset([], 0.2, seed=0)


def test_labels_round_trip(tmp_path):
    dims = FrameDims(640, 480)
    boxes = (
        (BoundingBox(0, 0, 640, 480), ClassId.MOTORCYCLE),
        (BoundingBox(100, 50, 32, 64), ClassId.PASSENGER2_NO_HELMET),
    )
    text = write_labels(boxes, dims)
    assert text.splitlines()[0] == "0 0.500000 0.500000 1.000000 1.000000"
    assert text.splitlines()[1].startswith("6 ")
    parsed = read_labels(text, dims)
    for (got, got_class), (want, want_class) in zip(parsed, boxes):
        assert got_class == want_class
        assert got.corners() == pytest.approx(want.corners(), abs=1e-3)

    sample = LabeledSample(ImageBuffer.filled(dims, (1, 2, 3)), boxes)
    path = tmp_path / "frame_000001.ppm"
    save_sample(sample, path)
    assert labels_path(path).exists()
    loaded = load_sample(path)
    assert loaded.image == sample.image
    assert [c for _, c in loaded.boxes] == [c for _, c in boxes]


def test_read_labels_rejects_bad_lines():
    dims = FrameDims(10, 10)
    with pytest.raises(ValueError):
        read_labels("0 0.5 0.5 0.1\n", dims)
    with pytest.raises(ValueError):
        read_labels("7 0.5 0.5 0.1 0.1\n", dims)
