"""FTM1 model container.

Layout (little-endian)::

    "FTM1" | version u32 | family (u16 length + UTF-8)
    | config block (u32 length + UTF-8 JSON) | payload block (u32 length + bytes)
    | CRC-32 u32 of every preceding byte

The config block carries the family's settings, creation time and the
training-data fingerprint. The payload is a flat list of named arrays stored
as raw bytes, plus a JSON block of scalars, so floats round-trip exactly.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import time
import zlib

import numpy as np

from . import baselines, mlp, svm, trees
from .errors import CorruptionError, FormatError, StorageError
from .models import FAMILIES, TrainedModel

MAGIC = b"FTM1"
FORMAT_VERSION = 1


def dataset_fingerprint(aef_blob: bytes) -> str:
    return hashlib.sha256(aef_blob).hexdigest()


# -- array archive ---------------------------------------------------------------

def _pack_arrays(arrays: dict, scalars: dict) -> bytes:
    out = io.BytesIO()
    meta = json.dumps(scalars, sort_keys=True).encode()
    out.write(struct.pack("<I", len(meta)))
    out.write(meta)
    out.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
        a = a.astype(dt, copy=False)
        nb, ds = name.encode(), dt.str.encode()
        out.write(struct.pack("<H", len(nb)) + nb)
        out.write(struct.pack("<B", len(ds)) + ds)
        out.write(struct.pack("<B", a.ndim))
        out.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        raw = a.tobytes()
        out.write(struct.pack("<Q", len(raw)))
        out.write(raw)
    return out.getvalue()


def _unpack_arrays(blob: bytes):
    pos = 0

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        (mlen,) = take("<I")
        scalars = json.loads(blob[pos:pos + mlen].decode())
        pos += mlen
        (count,) = take("<I")
        arrays = {}
        for _ in range(count):
            (nlen,) = take("<H")
            name = blob[pos:pos + nlen].decode()
            pos += nlen
            (dlen,) = take("<B")
            dtype = np.dtype(blob[pos:pos + dlen].decode())
            pos += dlen
            (ndim,) = take("<B")
            shape = take(f"<{ndim}Q")
            (nbytes,) = take("<Q")
            if pos + nbytes > len(blob):
                raise FormatError("payload array runs past end of block")
            arrays[name] = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize,
                                         offset=pos).reshape(shape).copy()
            pos += nbytes
    except (struct.error, UnicodeDecodeError, ValueError, TypeError) as exc:
        raise FormatError(f"malformed payload: {exc}") from exc
    return arrays, scalars


# -- per-family encoding -----------------------------------------------------------

def _tree_arrays(t: trees.DecisionTree, prefix=""):
    return {f"{prefix}feature": t.feature.astype(np.int64),
            f"{prefix}threshold": t.threshold, f"{prefix}left": t.left.astype(np.int64),
            f"{prefix}right": t.right.astype(np.int64), f"{prefix}score": t.score}


def _tree_from(a, prefix, max_splits, dim):
    return trees.DecisionTree(a[f"{prefix}feature"].astype(np.intp), a[f"{prefix}threshold"],
                              a[f"{prefix}left"].astype(np.intp),
                              a[f"{prefix}right"].astype(np.intp),
                              a[f"{prefix}score"], max_splits, dim)


def _lda_arrays(m: baselines.LdaModel, prefix=""):
    return {f"{prefix}means": m.class_means, f"{prefix}chol": m.cholesky,
            f"{prefix}log_priors": m.log_priors, f"{prefix}weights": m.weights,
            f"{prefix}offset": np.array([m.offset])}


def _lda_from(a, prefix=""):
    return baselines.LdaModel(a[f"{prefix}means"], a[f"{prefix}chol"], a[f"{prefix}log_priors"],
                              a[f"{prefix}weights"], float(a[f"{prefix}offset"][0]))


def _encode(tm: TrainedModel):
    m, f = tm.model, tm.family
    if f == "svm":
        return ({"sv": m.support_vectors, "y": m.support_labels, "alpha": m.alphas,
                 "bias": np.array([m.bias])},
                {"kernel": m.kernel.to_dict(), "C": m.C, "converged": m.converged,
                 "n_iter": m.n_iter})
    if f == "logreg":
        return {"w": m.weights, "b": np.array([m.bias])}, {"l2_lambda": m.l2_lambda}
    if f == "lda":
        return _lda_arrays(m), {}
    if f == "gnb":
        return {"means": m.means, "var": m.variances, "log_priors": m.log_priors}, {}
    if f == "knn":
        return ({"X": m.train.features, "y": m.train.labels},
                {"k": m.k, "metric": m.metric, "weighting": m.weighting})
    if f == "tree":
        return _tree_arrays(m), {"max_splits": m.max_splits}
    if f == "mlp":
        arrays = {}
        for i, (W, b) in enumerate(zip(m.weights, m.biases)):
            arrays[f"W{i}"], arrays[f"b{i}"] = W, b
        arrays["loss_trace"] = np.asarray(m.loss_trace, dtype=np.float64)
        return arrays, {"hidden": list(m.architecture.hidden_sizes)}
    arrays, weights, subsets = {}, [], []
    for i, (base, w, feats) in enumerate(m.learners):
        weights.append(w)
        if f == trees.SUBSPACE:
            arrays.update(_lda_arrays(base, f"l{i}."))
            arrays[f"l{i}.feats"] = feats.astype(np.int64)
        else:
            arrays.update(_tree_arrays(base, f"l{i}."))
            subsets.append(base.max_splits)
    arrays["learner_weights"] = np.asarray(weights, dtype=np.float64)
    return arrays, {"kind": m.kind, "seed": m.seed, "n": len(m.learners),
                    "max_splits": subsets, "config": m.config,
                    "weight_sums": m.weight_sums,
                    "subsample_counts": [list(c) for c in m.subsample_counts]}


def _decode(family, dim, a, s):
    if family == "svm":
        k = s["kernel"]
        return svm.SvmModel(a["sv"], a["y"], a["alpha"], float(a["bias"][0]),
                            svm.KernelSpec(k["kind"], k["degree"], k["scale"]), s["C"],
                            s["converged"], s["n_iter"])
    if family == "logreg":
        return baselines.LogRegModel(a["w"], float(a["b"][0]), s["l2_lambda"])
    if family == "lda":
        return _lda_from(a)
    if family == "gnb":
        return baselines.GnbModel(a["means"], a["var"], a["log_priors"])
    if family == "knn":
        from .store import EmbeddingDataset
        return baselines.KnnModel(EmbeddingDataset(a["X"], a["y"], "", dim), s["k"],
                                  s["metric"], s["weighting"])
    if family == "tree":
        return _tree_from(a, "", s["max_splits"], dim)
    if family == "mlp":
        n = sum(1 for k in a if k.startswith("W"))
        arch = mlp.MlpArchitecture(dim, tuple(s["hidden"]))
        return mlp.MlpModel([a[f"W{i}"] for i in range(n)], [a[f"b{i}"] for i in range(n)],
                            arch, a["loss_trace"].tolist())
    learners = []
    for i in range(s["n"]):
        w = float(a["learner_weights"][i])
        if s["kind"] == trees.SUBSPACE:
            learners.append((_lda_from(a, f"l{i}."), w, a[f"l{i}.feats"].astype(np.intp)))
        else:
            learners.append((_tree_from(a, f"l{i}.", s["max_splits"][i], dim), w, None))
    return trees.EnsembleModel(s["kind"], learners, s["seed"], dim, s["config"],
                               s["weight_sums"], [tuple(c) for c in s["subsample_counts"]])


# -- container -------------------------------------------------------------------

def serialize_model(tm: TrainedModel, fingerprint: str | None = None,
                    created: float | None = None, version: int = FORMAT_VERSION) -> bytes:
    if tm.family not in FAMILIES:
        raise FormatError(f"unknown family {tm.family!r}")
    if created is None:
        created = float(os.environ.get("SOURCE_DATE_EPOCH", time.time()))
    if fingerprint is None:
        fingerprint = tm.info.get("dataset_sha256", "")
    # header fields copied into info on load are not written twice
    info = {k: v for k, v in tm.info.items() if k not in ("created", "dataset_sha256")}
    arrays, scalars = _encode(tm)
    config = json.dumps({"config": tm.config, "dimension": tm.dimension, "info": info,
                         "created": created, "dataset_sha256": fingerprint},
                        sort_keys=True).encode()
    payload = _pack_arrays(arrays, scalars)
    fam = tm.family.encode()
    body = b"".join([
        MAGIC, struct.pack("<I", version),
        struct.pack("<H", len(fam)), fam,
        struct.pack("<I", len(config)), config,
        struct.pack("<I", len(payload)), payload,
    ])
    return body + struct.pack("<I", zlib.crc32(body))


def read_header(blob: bytes) -> dict:
    """Verify checksum, magic and version; return the config block."""
    if len(blob) < 4 + 4 + 2 + 4 + 4 + 4:
        raise FormatError("model container is too short")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptionError("model container checksum mismatch")
    if body[:4] != MAGIC:
        raise FormatError(f"bad magic {body[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version} (reader is {FORMAT_VERSION})")
    try:
        pos = 8
        (flen,) = struct.unpack_from("<H", body, pos)
        pos += 2
        family = body[pos:pos + flen].decode()
        pos += flen
        (clen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        config = json.loads(body[pos:pos + clen].decode())
        pos += clen
        (plen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        if pos + plen != len(body):
            raise FormatError("payload length disagrees with container size")
        config["_family"] = family
        config["_payload"] = body[pos:pos + plen]
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"malformed container: {exc}") from exc
    if family not in FAMILIES:
        raise FormatError(f"unknown model family {family!r}")
    return config


def deserialize_model(blob: bytes) -> TrainedModel:
    header = read_header(blob)
    arrays, scalars = _unpack_arrays(header["_payload"])
    try:
        model = _decode(header["_family"], header["dimension"], arrays, scalars)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise FormatError(f"payload does not describe a {header['_family']} model: {exc}") from exc
    tm = TrainedModel(header["_family"], header["config"], model, header["dimension"],
                      header.get("info", {}))
    tm.info = dict(tm.info, created=header["created"], dataset_sha256=header["dataset_sha256"])
    return tm


def save_model(tm: TrainedModel, path, fingerprint: str = "") -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(serialize_model(tm, fingerprint))
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}", path=path) from exc


def load_model(path) -> TrainedModel:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}", path=path) from exc
    return deserialize_model(blob)
