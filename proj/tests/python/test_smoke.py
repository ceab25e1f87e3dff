import numpy as np
import pytest

import step_probe as sp


def random_clip(rng, frames=4, tokens=3, dim=5, cls=True):
    patches = rng.standard_normal((frames, tokens, dim)).astype(np.float32)
    frame_cls = patches.mean(axis=1) if cls else None
    return patches, frame_cls


def test_container_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    patches, frame_cls = random_clip(rng)
    path = tmp_path / "a.stepfeat"
    sp.write_features(path, "a", patches, frame_cls)
    back = sp.read_features(path, "a")
    assert back["clip_id"] == "a"
    assert back["patch_tokens"].dtype == np.float32
    assert np.array_equal(back["patch_tokens"], patches)
    assert np.array_equal(back["frame_cls"], frame_cls)
    raw = path.read_bytes()
    assert raw[:8] == b"STEPFEAT"
    assert sp.encode_features("a", patches, frame_cls) == raw


def test_container_without_cls():
    rng = np.random.default_rng(1)
    patches, _ = random_clip(rng, cls=False)
    back = sp.decode_features(sp.encode_features("x", patches))
    assert back["frame_cls"] is None
    assert np.array_equal(back["patch_tokens"], patches)


def test_container_errors():
    rng = np.random.default_rng(2)
    good = sp.encode_features("x", *random_clip(rng))
    with pytest.raises(sp.BadMagicError):
        sp.decode_features(b"X" + good[1:])
    with pytest.raises(sp.TruncatedError):
        sp.decode_features(good[:-1])
    flipped = bytearray(good)
    flipped[30] ^= 1
    with pytest.raises(sp.ChecksumError):
        sp.decode_features(bytes(flipped))
    bad_version = bytearray(good)
    bad_version[8] = 2
    with pytest.raises(sp.VersionMismatchError):
        sp.decode_features(bytes(bad_version))
    assert issubclass(sp.ChecksumError, sp.FormatError)
    assert issubclass(sp.FormatError, sp.DataError)
    with pytest.raises(sp.DataError):
        sp.encode_features("nan", np.full((1, 1, 2), np.nan, dtype=np.float32))
    with pytest.raises(sp.ShapeError):
        sp.encode_features("flat", np.zeros((3, 2), dtype=np.float32))


def test_manifest_and_dataset_check(tmp_path):
    rng = np.random.default_rng(3)
    (tmp_path / "feats").mkdir()
    manifest = sp.Manifest()
    manifest.class_names = ["push", "pull"]
    manifest.frames, manifest.tokens, manifest.dim = 4, 3, 5
    clips = []
    for i in range(4):
        sp.write_features(tmp_path / "feats" / f"c{i}.stepfeat", f"c{i}", *random_clip(rng))
        clips.append(sp.ClipRecord(f"c{i}", f"feats/c{i}.stepfeat", i % 2, sp.Split.test))
    manifest.clips = clips
    sp.write_manifest(tmp_path / "manifest.txt", manifest)
    text = (tmp_path / "manifest.txt").read_text()
    assert text.startswith("STEP-MANIFEST 1")
    loaded = sp.load_manifest(tmp_path / "manifest.txt")
    assert loaded.class_names == ["push", "pull"]
    assert [c.label for c in loaded.clips] == [0, 1, 0, 1]
    assert sp.check_dataset(loaded) == 4
    with pytest.raises(sp.DataError, match="unknown class name"):
        sp.parse_manifest(text.replace("c1 pull", "c1 shut"))


def test_probe_counts_and_order_sensitivity(tmp_path):
    assert sp.count_params("step", 768, 12, 30, 16, 256) == 2398494
    assert sp.count_params("linear", 768, 12, 30, 16, 256) == 23070
    rng = np.random.default_rng(4)
    patches, frame_cls = random_clip(rng, frames=6, tokens=2, dim=8)
    reversed_patches = patches[::-1].copy()
    reversed_cls = frame_cls[::-1].copy()
    linear = sp.Probe("linear", 8, 2, 3, 6, 2)
    assert linear.logits(patches, frame_cls) == linear.logits(reversed_patches, reversed_cls)
    step = sp.Probe("step", 8, 2, 3, 6, 2, seed=1)
    step.save(tmp_path / "m.stepckpt")
    again = sp.Probe.load(tmp_path / "m.stepckpt")
    assert again.variant == "step"
    assert again.logits(patches, frame_cls) == step.logits(patches, frame_cls)
    assert sp.corruption_permutation(4, "reverse") == [3, 2, 1, 0]
    with pytest.raises(sp.ConfigError):
        sp.Probe("mlp", 8, 2, 3, 6, 2)
