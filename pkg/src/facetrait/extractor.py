"""Face images to 512-d ArcFace embeddings.

The network is reached through an :class:`InferenceAdapter`. ``OnnxAdapter``
runs a real ONNX graph (``onnxruntime`` is an optional dependency);
``StubAdapter`` returns deterministic pseudo-embeddings so the rest of the
toolkit runs without the model asset.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    ContractError,
    DecodeError,
    EmptyResultError,
    ExtractionError,
    LayoutError,
)
from .store import EmbeddingDataset, GenderLabel

log = logging.getLogger(__name__)

EMBEDDING_DIM = 512
INPUT_SIZE = 112
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
CHANNELS_FIRST = "channels-first"
CHANNELS_LAST = "channels-last"


@dataclass(frozen=True)
class PreprocessManifest:
    target_height: int = INPUT_SIZE
    target_width: int = INPUT_SIZE
    channel_order: str = "RGB"
    layout: str = CHANNELS_FIRST
    scale_offset: float = 127.5
    scale_divisor: float = 127.5
    resize_filter: str = "bilinear"

    def __post_init__(self):
        if (self.target_height, self.target_width) != (INPUT_SIZE, INPUT_SIZE):
            raise ContractError("ArcFace input is fixed at 112x112")
        if self.channel_order not in ("RGB", "BGR"):
            raise ContractError(f"channel_order must be RGB or BGR, got {self.channel_order!r}")
        if self.layout not in (CHANNELS_FIRST, CHANNELS_LAST):
            raise ContractError(f"unknown layout {self.layout!r}")
        if self.scale_divisor == 0:
            raise ContractError("scale_divisor must be nonzero")
        if self.resize_filter not in ("bilinear", "nearest"):
            raise ContractError(f"unknown resize filter {self.resize_filter!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @property
    def tensor_shape(self):
        if self.layout == CHANNELS_FIRST:
            return (1, 3, self.target_height, self.target_width)
        return (1, self.target_height, self.target_width, 3)


@dataclass(frozen=True, eq=False)
class ImageTensor:
    data: np.ndarray
    manifest: PreprocessManifest


def load_image(path) -> np.ndarray:
    """Decode a JPEG/PNG into an (H, W, C) uint8 array in RGB(A) or gray."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB", "RGBA"):
                im = im.convert("RGB")
            return np.asarray(im)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}", path=str(path)) from exc


def _to_rgb(raw: np.ndarray) -> np.ndarray:
    a = np.asarray(raw)
    if a.size == 0:
        raise DecodeError("empty image")
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3, 4):
        raise DecodeError(f"unsupported image shape {a.shape}")
    if a.dtype != np.uint8:
        raise DecodeError(f"expected 8-bit channels, got {a.dtype}")
    if a.shape[2] == 1:
        a = np.repeat(a, 3, axis=2)
    elif a.shape[2] == 4:
        a = a[:, :, :3]
    return a


def preprocess_image(raw, manifest: PreprocessManifest = PreprocessManifest()) -> ImageTensor:
    """Resize to 112x112 and scale each value to ``(v - offset) / divisor``.

    ``raw`` is an RGB-ordered image array; an input already 112x112 is not
    resampled.
    """
    rgb = _to_rgb(raw)
    h, w = manifest.target_height, manifest.target_width
    if rgb.shape[:2] != (h, w):
        resample = Image.BILINEAR if manifest.resize_filter == "bilinear" else Image.NEAREST
        rgb = np.asarray(Image.fromarray(rgb).resize((w, h), resample=resample))
    if manifest.channel_order == "BGR":
        rgb = rgb[:, :, ::-1]
    x = (rgb.astype(np.float32) - np.float32(manifest.scale_offset)) / np.float32(
        manifest.scale_divisor)
    if manifest.layout == CHANNELS_FIRST:
        x = np.transpose(x, (2, 0, 1))
    return ImageTensor(np.ascontiguousarray(x[None]), manifest)


class InferenceAdapter:
    """Maps a batch of preprocessed tensors to a (batch, 512) array."""

    input_shape = (1, 3, INPUT_SIZE, INPUT_SIZE)
    output_dim = EMBEDDING_DIM
    device = "cpu"

    def __init__(self):
        self._lock = threading.Lock()

    def run(self, batch: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def embed(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim != 4 or batch.shape[1:] != self.input_shape[1:]:
            raise ContractError(
                f"tensor shape {batch.shape} does not match model input "
                f"(batch, {', '.join(map(str, self.input_shape[1:]))})"
            )
        with self._lock:
            try:
                out = self.run(batch)
            except ContractError:
                raise
            except Exception as exc:
                raise ExtractionError(f"inference failed: {exc}") from exc
        out = np.asarray(out, dtype=np.float32).reshape(batch.shape[0], -1)
        if out.shape[1] != self.output_dim:
            raise ContractError(f"model produced {out.shape[1]} features, expected {self.output_dim}")
        return out


class StubAdapter(InferenceAdapter):
    """Deterministic pseudo-embeddings seeded by a hash of the tensor bytes.

    With ``cluster_mean`` set, the output is ``sign * cluster_mean + cluster_sigma * z``
    where ``sign`` is the sign of the tensor's mean pixel (non-positive counts as
    Female) and ``z`` is the hash-seeded standard normal draw. That turns any
    image tree with darker Female and brighter Male images into two Gaussian
    clusters.
    """

    def __init__(self, seed: int = 0, cluster_mean: float | None = None,
                 cluster_sigma: float = 0.05):
        super().__init__()
        self.seed = seed
        self.cluster_mean = cluster_mean
        self.cluster_sigma = cluster_sigma

    def run(self, batch):
        out = np.empty((batch.shape[0], self.output_dim), dtype=np.float32)
        for i, x in enumerate(batch):
            digest = hashlib.sha256(np.ascontiguousarray(x).tobytes()).digest()
            rng = np.random.default_rng([self.seed, int.from_bytes(digest[:8], "little")])
            z = rng.standard_normal(self.output_dim)
            if self.cluster_mean is not None:
                sign = 1.0 if float(x.mean()) > 0 else -1.0
                z = sign * self.cluster_mean + self.cluster_sigma * z
            out[i] = z
        return out


class OnnxAdapter(InferenceAdapter):
    """ArcFace ONNX graph run through onnxruntime.

    The graph must take one (batch, 3, 112, 112) input and give one (batch, 512)
    output; a fixed batch dimension of 1 is handled by running images singly.
    """

    def __init__(self, model_path, device="cpu", input_name=None, output_name=None):
        super().__init__()
        try:
            import onnxruntime as ort
        except ImportError as exc:
            raise ExtractionError(
                "onnxruntime is not installed; pip install 'artifact[onnx]'") from exc
        if not os.path.isfile(model_path):
            raise ExtractionError(f"model file not found: {model_path}")
        providers = ["CPUExecutionProvider"]
        if device == "gpu":
            providers.insert(0, "CUDAExecutionProvider")
        try:
            self.session = ort.InferenceSession(str(model_path), providers=providers)
        except Exception as exc:
            raise ExtractionError(f"cannot load {model_path}: {exc}") from exc
        inputs, outputs = self.session.get_inputs(), self.session.get_outputs()
        if len(inputs) != 1 or len(outputs) < 1:
            raise ContractError(f"model must have one input, got {len(inputs)}")
        inp = inputs[0] if input_name is None else next(i for i in inputs if i.name == input_name)
        out = outputs[0] if output_name is None else next(o for o in outputs
                                                          if o.name == output_name)
        in_shape, out_shape = list(inp.shape), list(out.shape)
        if len(in_shape) != 4 or in_shape[1:] != [3, INPUT_SIZE, INPUT_SIZE]:
            raise ContractError(f"model input shape {in_shape}, expected (batch, 3, 112, 112)")
        if len(out_shape) != 2 or out_shape[1] != EMBEDDING_DIM:
            raise ContractError(f"model output shape {out_shape}, expected (batch, 512)")
        self.model_path = str(model_path)
        self.input_name, self.output_name = inp.name, out.name
        self.device = device
        self.fixed_batch = in_shape[0] if isinstance(in_shape[0], int) else None

    def run(self, batch):
        if self.fixed_batch == 1 and batch.shape[0] != 1:
            return np.concatenate([self.run(batch[i:i + 1]) for i in range(batch.shape[0])])
        return self.session.run([self.output_name], {self.input_name: batch})[0]


def extract_embedding(adapter: InferenceAdapter, tensor: ImageTensor) -> np.ndarray:
    """Raw model output for one tensor, no normalization."""
    data = np.asarray(tensor.data)
    if data.shape != adapter.input_shape:
        raise ContractError(f"tensor shape {data.shape}, model expects {adapter.input_shape}")
    return adapter.embed(data)[0]


@dataclass
class ExtractionSummary:
    counts: dict = field(default_factory=lambda: {"female": 0, "male": 0})
    skipped: int = 0
    skipped_paths: list = field(default_factory=list)

    def __str__(self):
        return (f"extracted female={self.counts['female']} male={self.counts['male']} "
                f"skipped={self.skipped}")


def _class_dirs(root: Path):
    if not root.is_dir():
        raise LayoutError(f"image root {root} does not exist or is not a directory")
    found = {}
    for child in sorted(root.iterdir()):
        name = child.name.lower()
        if child.is_dir() and name in ("female", "male"):
            found.setdefault(name, []).append(child)
    if not found:
        raise LayoutError(f"{root} has no 'female' or 'male' subdirectory")
    return found


def list_images(root) -> list:
    """(path, label) pairs ordered lexicographically by path."""
    items = []
    for name, dirs in _class_dirs(Path(root)).items():
        label = GenderLabel.FEMALE if name == "female" else GenderLabel.MALE
        for d in dirs:
            for p in d.rglob("*"):
                if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
                    items.append((p, label))
    items.sort(key=lambda item: str(item[0]))
    return items


def extract_directory(adapter: InferenceAdapter, root,
                      manifest: PreprocessManifest = PreprocessManifest(),
                      batch: int = 16, workers: int = 1):
    """Embed every image under ``root/{female,male}``.

    Returns ``(dataset, summary)``. Unreadable images are skipped, logged and
    counted; record order follows the sorted file paths regardless of
    ``workers``.
    """
    if batch < 1:
        raise ContractError("batch must be >= 1")
    items = list_images(root)
    summary = ExtractionSummary()

    def prep(item):
        path, label = item
        try:
            return preprocess_image(load_image(path), manifest).data[0], label
        except DecodeError as exc:
            return exc, label

    feats, labels = [], []
    pending_x, pending_y = [], []

    def flush():
        if pending_x:
            feats.append(adapter.embed(np.stack(pending_x)))
            labels.extend(pending_y)
            pending_x.clear()
            pending_y.clear()

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for (path, _), (x, label) in zip(items, pool.map(prep, items)):
            if isinstance(x, DecodeError):
                log.warning("skipping %s: %s", path, x)
                summary.skipped += 1
                summary.skipped_paths.append(str(path))
                continue
            pending_x.append(x)
            pending_y.append(int(label))
            summary.counts[label.name.lower()] += 1
            if len(pending_x) >= batch:
                flush()
        flush()
    if not labels:
        raise EmptyResultError(f"no images could be extracted under {root}")
    dataset = EmbeddingDataset(np.concatenate(feats), np.array(labels, np.uint8),
                               Path(root).name, adapter.output_dim)
    log.info("%s", summary)
    return dataset, summary


def synthetic_dataset(n: int, dim: int = EMBEDDING_DIM, mean: float = 0.1,
                      sigma: float = 0.05, seed: int = 0, source_tag="synthetic"):
    """Two isotropic Gaussian clusters, Female at -mean*1 and Male at +mean*1.

    Classes alternate in record order, so ``n`` even gives a balanced set.
    """
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 2).astype(np.uint8)
    centers = np.where(labels[:, None] == 1, mean, -mean)
    feats = centers + sigma * rng.standard_normal((n, dim))
    return EmbeddingDataset(feats.astype(np.float32), labels, source_tag, dim)


def stub_cluster_dataset(n: int, mean: float = 0.1, sigma: float = 0.05, seed: int = 0,
                         batch: int = 64, source_tag="stub-clusters"):
    """Same clusters as :func:`synthetic_dataset`, produced through :class:`StubAdapter`.

    Each record is a constant tensor (-0.5 Female, +0.5 Male) with its index
    written into the first element so every hash is distinct.
    """
    adapter = StubAdapter(seed, cluster_mean=mean, cluster_sigma=sigma)
    labels = (np.arange(n) % 2).astype(np.uint8)
    shape = adapter.input_shape[1:]
    feats = []
    for start in range(0, n, batch):
        idx = np.arange(start, min(n, start + batch))
        t = np.empty((idx.size,) + shape, dtype=np.float32)
        t[:] = np.where(labels[idx] == 1, 0.5, -0.5)[:, None, None, None]
        t[:, 0, 0, 0] = idx * 1e-6
        feats.append(adapter.embed(t))
    dim = adapter.output_dim
    return EmbeddingDataset(np.concatenate(feats), labels, source_tag, dim)
