import json

import numpy as np
import pytest

from kpseg.annotations import (
    COCO_SKELETON,
    CodecError,
    ParseError,
    ValidationError,
    decode_mask,
    encode_rle,
    load_index,
    parse_dataset,
    save_index,
    to_rle_dict,
)


# ---------------------------------------------------------------------------
# RLE codec


def test_rle_decode_hand_case():
    # column-major: 3 background, 2 foreground, 4 background on a 3x3 grid
    seg = {"size": [3, 3], "counts": [3, 2, 4]}
    expected = np.array(
        [
            [0, 1, 0],
            [0, 1, 0],
            [0, 0, 0],
        ],
        dtype=bool,
    )
    assert np.array_equal(decode_mask(seg, 3, 3), expected)


def test_rle_decode_all_background():
    mask = decode_mask({"size": [4, 5], "counts": [20]}, 5, 4)
    assert mask.shape == (4, 5)
    assert not mask.any()


def test_rle_decode_all_foreground():
    mask = decode_mask({"size": [2, 2], "counts": [0, 4]}, 2, 2)
    assert mask.all()


def test_rle_encode_hand_cases():
    assert encode_rle(np.zeros((3, 3), dtype=bool)) == [9]
    assert encode_rle(np.ones((3, 3), dtype=bool)) == [0, 9]
    mask = np.zeros((3, 3), dtype=bool)
    mask[:2, 1] = True
    assert encode_rle(mask) == [3, 2, 4]


def test_rle_roundtrip_random_masks():
    rng = np.random.default_rng(11)
    for _ in range(200):
        h = int(rng.integers(1, 17))
        w = int(rng.integers(1, 17))
        mask = rng.random((h, w)) < rng.uniform(0.05, 0.95)
        seg = to_rle_dict(mask)
        assert sum(seg["counts"]) == h * w
        assert np.array_equal(decode_mask(seg, w, h), mask)


def test_rle_first_pixel_foreground_starts_with_zero_count():
    mask = np.zeros((2, 3), dtype=bool)
    mask[0, 0] = True
    assert encode_rle(mask)[0] == 0


def test_rle_rejects_compressed_counts():
    with pytest.raises(CodecError):
        decode_mask({"size": [2, 2], "counts": "abcd"}, 2, 2)


def test_rle_rejects_bad_counts():
    with pytest.raises(CodecError):
        decode_mask({"size": [2, 2], "counts": [3]}, 2, 2)  # sum mismatch
    with pytest.raises(CodecError):
        decode_mask({"size": [2, 2], "counts": [-1, 5]}, 2, 2)
    with pytest.raises(CodecError):
        decode_mask({"size": [3, 2], "counts": [4]}, 2, 2)  # size mismatch
    with pytest.raises(CodecError):
        decode_mask({"size": [2, 2]}, 2, 2)  # no counts


def test_encode_rejects_bad_shapes():
    with pytest.raises(CodecError):
        encode_rle(np.zeros((2, 2, 2), dtype=bool))
    with pytest.raises(CodecError):
        encode_rle(np.zeros((0, 4), dtype=bool))


# ---------------------------------------------------------------------------
# polygon fill


def test_polygon_rectangle_full_cover():
    # rectangle spanning the whole 4x4 image covers every pixel center
    ring = [0.0, 0.0, 4.0, 0.0, 4.0, 4.0, 0.0, 4.0]
    assert decode_mask([ring], 4, 4).all()


def test_polygon_triangle_hand_case():
    ring = [0.0, 0.0, 4.0, 0.0, 0.0, 4.0]
    expected = np.array(
        [
            [1, 1, 1, 0],
            [1, 1, 0, 0],
            [1, 0, 0, 0],
            [0, 0, 0, 0],
        ],
        dtype=bool,
    )
    assert np.array_equal(decode_mask([ring], 4, 4), expected)


def test_polygon_even_odd_hole():
    outer = [0.0, 0.0, 6.0, 0.0, 6.0, 6.0, 0.0, 6.0]
    inner = [2.0, 2.0, 4.0, 2.0, 4.0, 4.0, 2.0, 4.0]
    mask = decode_mask([outer, inner], 6, 6)
    assert mask[0].all() and mask[5].all()
    assert not mask[2:4, 2:4].any()  # the inner ring cuts a hole
    assert mask[2, 0] and mask[2, 5]


def test_polygon_rejects_degenerate_rings():
    with pytest.raises(CodecError):
        decode_mask([[0.0, 0.0, 1.0, 1.0]], 4, 4)  # two points
    with pytest.raises(CodecError):
        decode_mask([[0.0, 0.0, 1.0, 1.0, 2.0]], 4, 4)  # odd length
    with pytest.raises(CodecError):
        decode_mask([], 4, 4)


def test_decode_rejects_bad_dimensions_and_types():
    with pytest.raises(CodecError):
        decode_mask({"counts": [4]}, 0, 4)
    with pytest.raises(CodecError):
        decode_mask(42, 4, 4)


# ---------------------------------------------------------------------------
# document intersection


def _image(image_id, w=8, h=8):
    return {"id": image_id, "file_name": f"{image_id:06d}.png", "width": w, "height": h}


def _block_mask(w=8, h=8, x0=1, y0=1, x1=5, y1=5):
    mask = np.zeros((h, w), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def _seg_ann(ann_id, image_id, mask=None, iscrowd=0, category_id=1):
    mask = _block_mask() if mask is None else mask
    ys, xs = np.nonzero(mask) if mask.any() else (np.array([0]), np.array([0]))
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": category_id,
        "iscrowd": iscrowd,
        "bbox": [float(xs.min()), float(ys.min()), float(np.ptp(xs) + 1), float(np.ptp(ys) + 1)],
        "segmentation": to_rle_dict(mask),
        "area": float(mask.sum()),
    }


def _kp_ann(ann_id, image_id, keypoints=None, iscrowd=0):
    if keypoints is None:
        keypoints = [0.0] * 51
        keypoints[0:3] = [3.0, 3.0, 2.0]
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": 1,
        "iscrowd": iscrowd,
        "keypoints": keypoints,
        "num_keypoints": sum(1 for v in keypoints[2::3] if v > 0),
    }


def _docs(images, seg_anns, kp_anns, kp_categories=None):
    seg = {
        "images": images,
        "annotations": seg_anns,
        "categories": [{"id": 1, "name": "person"}],
    }
    kp = {
        "images": images,
        "annotations": kp_anns,
        "categories": kp_categories or [{"id": 1, "name": "person"}],
    }
    return seg, kp


def test_parse_keeps_only_annotations_in_both_documents():
    images = [_image(1), _image(2)]
    seg_anns = [_seg_ann(10, 1), _seg_ann(11, 1), _seg_ann(12, 2)]
    kp_anns = [_kp_ann(10, 1), _kp_ann(12, 2), _kp_ann(13, 2)]
    index = parse_dataset(*_docs(images, seg_anns, kp_anns))
    assert index.image_count == 2
    assert index.instance_count == 2
    assert [i.instance_id for i in index.instances_for(1)] == [10]
    assert [i.instance_id for i in index.instances_for(2)] == [12]


def test_parse_drops_crowd_from_either_document():
    images = [_image(1)]
    index = parse_dataset(*_docs(images, [_seg_ann(10, 1, iscrowd=1)], [_kp_ann(10, 1)]))
    assert index.image_count == 0
    index = parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1, iscrowd=1)]))
    assert index.instance_count == 0


def test_parse_drops_non_person_categories():
    images = [_image(1)]
    seg, kp = _docs(images, [_seg_ann(10, 1, category_id=18)], [_kp_ann(10, 1)])
    assert parse_dataset(seg, kp).instance_count == 0


def test_parse_empty_documents():
    index = parse_dataset({"images": [], "annotations": []}, {"annotations": []})
    assert index.image_count == 0
    assert index.instance_count == 0
    assert index.skeleton == COCO_SKELETON


def test_parse_drops_images_without_instances():
    images = [_image(1), _image(2)]
    index = parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1)]))
    assert [im.image_id for im in index.images] == [1]


def test_parse_drops_empty_mask_with_warning(caplog):
    images = [_image(1)]
    empty = {"id": 10, "image_id": 1, "category_id": 1, "iscrowd": 0,
             "bbox": [0.0, 0.0, 1.0, 1.0],
             "segmentation": {"size": [8, 8], "counts": [64]}, "area": 0.0}
    with caplog.at_level("WARNING", logger="kpseg.annotations"):
        index = parse_dataset(*_docs(images, [empty], [_kp_ann(10, 1)]))
    assert index.instance_count == 0
    assert any("empty mask" in rec.message for rec in caplog.records)


def test_parse_invisible_instances_follow_flag():
    images = [_image(1)]
    all_zero = [0.0] * 51
    docs = _docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1, keypoints=all_zero)])
    assert parse_dataset(*docs).instance_count == 1  # retained by default
    assert parse_dataset(*docs, keep_invisible=False).instance_count == 0


def test_parse_clamps_keypoints_into_image():
    images = [_image(1, w=8, h=8)]
    kps = [0.0] * 51
    kps[0:3] = [100.0, -5.0, 2.0]
    index = parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1, keypoints=kps)]))
    inst = index.instances_for(1)[0]
    assert inst.keypoints[0, 0] == 7.0
    assert inst.keypoints[0, 1] == 0.0


def test_parse_validates_keypoint_shape_and_flags():
    images = [_image(1)]
    with pytest.raises(ValidationError):
        parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1, keypoints=[0.0] * 50)]))
    bad_vis = [0.0] * 51
    bad_vis[2] = 3.0
    with pytest.raises(ValidationError):
        parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1, keypoints=bad_vis)]))


def test_parse_missing_fields_raise():
    images = [_image(1)]
    broken = _seg_ann(10, 1)
    del broken["bbox"]
    with pytest.raises(ParseError):
        parse_dataset(*_docs(images, [broken], [_kp_ann(10, 1)]))
    with pytest.raises(ParseError):
        parse_dataset(*_docs(images, [_seg_ann(10, 99)], [_kp_ann(10, 99)]))


def test_parse_skeleton_from_document_is_rebased():
    images = [_image(1)]
    cats = [{"id": 1, "name": "person", "skeleton": [[1, 2], [2, 3]]}]
    index = parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1)], kp_categories=cats))
    assert index.skeleton == ((0, 1), (1, 2))


def test_parse_skeleton_out_of_range_rejected():
    images = [_image(1)]
    cats = [{"id": 1, "name": "person", "skeleton": [[17, 18]]}]
    with pytest.raises(ValidationError):
        parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1)], kp_categories=cats))


def test_instance_helpers():
    images = [_image(1)]
    index = parse_dataset(*_docs(images, [_seg_ann(10, 1)], [_kp_ann(10, 1)]))
    inst = index.instances_for(1)[0]
    assert inst.visible_joint_count() == 1
    assert np.array_equal(inst.mask(), _block_mask())
    assert index.instances_for(42) == []


# ---------------------------------------------------------------------------
# fixture dataset and index file


def test_fixture_dataset_counts(dataset):
    assert dataset.image_count == 5
    assert dataset.instance_count == 11
    # the crowd region and the two one-document phantoms must be gone
    kept = {i.instance_id for group in dataset.instances.values() for i in group}
    assert kept.isdisjoint({12, 13, 14})


def test_fixture_instances_have_visible_joints(dataset):
    for group in dataset.instances.values():
        for inst in group:
            assert inst.visible_joint_count() >= 15
            assert inst.mask().any()


def test_index_roundtrip(dataset, tmp_path):
    path = tmp_path / "index.json"
    save_index(dataset, path)
    loaded = load_index(path)
    assert loaded.image_count == dataset.image_count
    assert loaded.skeleton == dataset.skeleton
    for im in dataset.images:
        orig = dataset.instances_for(im.image_id)
        back = loaded.instances_for(im.image_id)
        assert [i.instance_id for i in back] == [i.instance_id for i in orig]
        for a, b in zip(orig, back):
            assert a.bbox == pytest.approx(b.bbox)
            assert a.segmentation == b.segmentation
            assert np.array_equal(a.keypoints, b.keypoints)


def test_load_index_rejects_foreign_documents(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format": "something-else", "version": 1}))
    with pytest.raises(ParseError):
        load_index(path)
    path.write_text(json.dumps({"format": "kpseg-index", "version": 99}))
    with pytest.raises(ParseError):
        load_index(path)
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_index(path)
