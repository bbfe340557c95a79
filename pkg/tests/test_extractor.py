import numpy as np
import pytest
from PIL import Image

from facetrait.errors import ContractError, DecodeError, EmptyResultError, LayoutError
from facetrait.extractor import (CHANNELS_LAST, EMBEDDING_DIM, PreprocessManifest, StubAdapter,
                                 extract_directory, extract_embedding, list_images, load_image,
                                 preprocess_image, stub_cluster_dataset, synthetic_dataset)
from facetrait.store import GenderLabel


def solid(value, size=(112, 112)):
    return np.full(size + (3,), value, dtype=np.uint8)


def write_image(path, value, size=(40, 30)):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(solid(value, size)).save(path)


def test_white_maps_to_one():
    t = preprocess_image(solid(255))
    assert t.data.shape == (1, 3, 112, 112)
    assert np.all(t.data == 1.0)


def test_black_maps_to_minus_one():
    assert np.all(preprocess_image(solid(0)).data == -1.0)


def test_large_input_resized():
    t = preprocess_image(np.random.default_rng(0).integers(0, 256, (224, 224, 3), dtype=np.uint8))
    assert t.data.shape == (1, 3, 112, 112)


def test_grayscale_and_alpha_inputs():
    gray = np.full((50, 60), 255, np.uint8)
    assert np.all(preprocess_image(gray).data == 1.0)
    rgba = np.zeros((112, 112, 4), np.uint8)
    rgba[..., 3] = 255
    assert np.all(preprocess_image(rgba).data == -1.0)


def test_bgr_and_channels_last():
    img = np.zeros((112, 112, 3), np.uint8)
    img[..., 0] = 255          # red
    rgb = preprocess_image(img).data[0]
    bgr = preprocess_image(img, PreprocessManifest(channel_order="BGR")).data[0]
    assert np.all(rgb[0] == 1.0) and np.all(bgr[2] == 1.0)
    last = preprocess_image(img, PreprocessManifest(layout=CHANNELS_LAST)).data
    assert last.shape == (1, 112, 112, 3)


def test_manifest_rejects_other_sizes():
    with pytest.raises(ContractError):
        PreprocessManifest(target_height=224)


def test_manifest_dict_roundtrip():
    m = PreprocessManifest(channel_order="BGR")
    assert PreprocessManifest.from_dict(m.to_dict()) == m


def test_stub_embedding_contract():
    adapter = StubAdapter(seed=1)
    t = preprocess_image(solid(10))
    a = extract_embedding(adapter, t)
    b = extract_embedding(adapter, t)
    assert a.shape == (EMBEDDING_DIM,) and np.all(np.isfinite(a))
    assert a.tobytes() == b.tobytes()
    other = extract_embedding(adapter, preprocess_image(solid(11)))
    assert not np.array_equal(a, other)


def test_wrong_shape_rejected_before_engine():
    calls = []

    class Spy(StubAdapter):
        def run(self, batch):
            calls.append(batch.shape)
            return super().run(batch)

    with pytest.raises(ContractError):
        Spy().embed(np.zeros((1, 3, 64, 64), np.float32))
    assert calls == []


def test_decode_error_for_garbage(tmp_path):
    p = tmp_path / "bad.jpg"
    p.write_bytes(b"\xff\xd8\xff\xe0 not really a jpeg")
    with pytest.raises(DecodeError):
        load_image(p)


def test_directory_counts_and_order(tmp_path):
    for i in range(3):
        write_image(tmp_path / "female" / f"f{i}.jpg", 20 * i)
    for i in range(2):
        write_image(tmp_path / "male" / f"m{i}.png", 100 + 20 * i)
    (tmp_path / "male" / "notes.txt").write_text("ignored")
    ds, summary = extract_directory(StubAdapter(), tmp_path, batch=2)
    assert len(ds) == 5 and ds.dimension == 512
    assert ds.class_counts() == (3, 2)
    assert summary.counts == {"female": 3, "male": 2} and summary.skipped == 0
    paths = [str(p) for p, _ in list_images(tmp_path)]
    assert paths == sorted(paths)


def test_directory_skips_corrupt_image(tmp_path):
    for i in range(10):
        write_image(tmp_path / ("female" if i < 5 else "male") / f"{i}.jpg", i * 10)
    (tmp_path / "male" / "7.jpg").write_bytes(b"broken")
    ds, summary = extract_directory(StubAdapter(), tmp_path)
    assert len(ds) == 9 and summary.skipped == 1
    assert summary.skipped_paths[0].endswith("7.jpg")


def test_worker_count_does_not_change_output(tmp_path):
    for i in range(6):
        write_image(tmp_path / ("female" if i % 2 else "male") / f"{i}.png", 30 * i)
    a, _ = extract_directory(StubAdapter(), tmp_path, batch=4, workers=1)
    b, _ = extract_directory(StubAdapter(), tmp_path, batch=3, workers=3)
    assert a == b


def test_layout_errors(tmp_path):
    with pytest.raises(LayoutError):
        extract_directory(StubAdapter(), tmp_path / "missing")
    (tmp_path / "other").mkdir()
    with pytest.raises(LayoutError):
        extract_directory(StubAdapter(), tmp_path)
    (tmp_path / "female").mkdir()
    with pytest.raises(EmptyResultError):
        extract_directory(StubAdapter(), tmp_path)


def test_stub_cluster_mode_matches_synthetic_statistics():
    ds = stub_cluster_dataset(400, mean=0.1, sigma=0.05, seed=3)
    X = ds.X()
    female, male = X[ds.labels == 0], X[ds.labels == 1]
    assert abs(female.mean() + 0.1) < 0.005 and abs(male.mean() - 0.1) < 0.005
    assert abs(female.std(axis=0).mean() - 0.05) < 0.005
    ref = synthetic_dataset(400, seed=3)
    assert ref.class_counts() == ds.class_counts() == (200, 200)


# -- ONNX adapter on a tiny synthetic graph -------------------------------------------

def _tiny_onnx(path, fixed_batch=False):
    onnx = pytest.importorskip("onnx")
    from onnx import TensorProto, helper, numpy_helper

    rng = np.random.default_rng(0)
    W = rng.standard_normal((3, 512)).astype(np.float32)
    batch = 1 if fixed_batch else "N"
    graph = helper.make_graph(
        [helper.make_node("ReduceMean", ["x"], ["m"], axes=[2, 3], keepdims=0),
         helper.make_node("MatMul", ["m", "W"], ["y"])],
        "tiny",
        [helper.make_tensor_value_info("x", TensorProto.FLOAT, [batch, 3, 112, 112])],
        [helper.make_tensor_value_info("y", TensorProto.FLOAT, [batch, 512])],
        [numpy_helper.from_array(W, "W")],
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    onnx.save(model, str(path))
    return W


@pytest.mark.parametrize("fixed_batch", [False, True])
def test_onnx_adapter(tmp_path, fixed_batch):
    pytest.importorskip("onnxruntime")
    from facetrait.extractor import OnnxAdapter

    W = _tiny_onnx(tmp_path / "tiny.onnx", fixed_batch)
    adapter = OnnxAdapter(tmp_path / "tiny.onnx")
    imgs = np.stack([preprocess_image(solid(v)).data[0] for v in (0, 128, 255)])
    out = adapter.embed(imgs)
    expected = imgs.mean(axis=(2, 3)) @ W
    assert out.shape == (3, 512)
    assert np.allclose(out, expected, atol=1e-5)


def test_onnx_adapter_missing_file(tmp_path):
    pytest.importorskip("onnxruntime")
    from facetrait.errors import ExtractionError
    from facetrait.extractor import OnnxAdapter

    with pytest.raises(ExtractionError):
        OnnxAdapter(tmp_path / "absent.onnx")


def test_labels_follow_directory_names(tmp_path):
    write_image(tmp_path / "Female" / "a.jpg", 5)
    write_image(tmp_path / "male" / "sub" / "b.JPG", 5)
    labels = [label for _, label in list_images(tmp_path)]
    assert labels == [GenderLabel.FEMALE, GenderLabel.MALE]
