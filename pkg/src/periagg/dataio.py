"""Dataset and checkpoint persistence.

Dataset files are JSON lines, one embedding per line:

    {"subject": "s0001", "kind": "still", "video": null, "frame": null,
     "values": [...]}
    {"subject": "s0001", "kind": "frame", "video": "v0", "frame": 0,
     "values": [...], "corrupted": true}

Floats are serialized with repr precision, so parse(write(dataset)) is exact.

A checkpoint is a single file: one JSON manifest line (format version,
encoder/train configs, seed, loss trace, parameter count) followed by the
raw parameter blob, float64 little-endian, in the canonical order documented
by :func:`periagg.encoder.iter_arrays`. load(save(p)) is bit-identical.
"""

import json

import numpy as np

from periagg import encoder
from periagg.errors import DataFormatError
from periagg.synthdata import SubjectRecord

CHECKPOINT_FORMAT_VERSION = 1
PARAM_ORDER_DOC = (
    "layer-major; per head wq,wk,wv; wo; ln_attn gain,bias; ln_mlp gain,bias; "
    "w1,b1,w2,b2; float64 little-endian, C order"
)


def write_dataset(path, subjects):
    with open(path, "w", encoding="utf-8") as fh:
        for subj in subjects:
            corrupted = set(subj.corrupted)
            fh.write(
                json.dumps(
                    {
                        "subject": subj.subject_id,
                        "kind": "still",
                        "video": None,
                        "frame": None,
                        "values": list(subj.still),
                    }
                )
                + "\n"
            )
            for idx, frame in enumerate(subj.frames):
                record = {
                    "subject": subj.subject_id,
                    "kind": "frame",
                    "video": "v0",
                    "frame": idx,
                    "values": list(frame),
                }
                if idx in corrupted:
                    record["corrupted"] = True
                fh.write(json.dumps(record) + "\n")


def read_dataset(path):
    stills = {}
    frames = {}
    corrupted = {}
    order = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                subject = record["subject"]
                kind = record["kind"]
                values = np.asarray(record["values"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno}: bad record: {exc}") from exc
            if subject not in stills and subject not in frames:
                order.append(subject)
            if kind == "still":
                if subject in stills:
                    raise DataFormatError(
                        f"{path}:{lineno}: duplicate still for subject {subject}"
                    )
                stills[subject] = values
            elif kind == "frame":
                frames.setdefault(subject, []).append((record["frame"], values))
                if record.get("corrupted"):
                    corrupted.setdefault(subject, []).append(record["frame"])
            else:
                raise DataFormatError(f"{path}:{lineno}: unknown kind {kind!r}")
    subjects = []
    dim = None
    for subject in order:
        if subject not in stills:
            raise DataFormatError(f"subject {subject} has no still record")
        if subject not in frames:
            raise DataFormatError(f"subject {subject} has no frame records")
        frame_list = [v for _, v in sorted(frames[subject], key=lambda t: t[0])]
        record = SubjectRecord(
            subject_id=subject,
            still=stills[subject],
            frames=np.vstack(frame_list),
            corrupted=sorted(corrupted.get(subject, [])),
        )
        if dim is None:
            dim = record.still.shape[0]
        if record.still.shape[0] != dim or record.frames.shape[1] != dim:
            raise DataFormatError(f"subject {subject} has inconsistent dimension")
        subjects.append(record)
    if not subjects:
        raise DataFormatError(f"{path}: empty dataset")
    return subjects


def save_checkpoint(path, params, train_cfg=None, loss_trace=None, seed=None):
    cfg = params.config
    arrays = [arr for _, arr in encoder.iter_arrays(params)]
    param_count = int(sum(a.size for a in arrays))
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "encoder": {
            "dim": cfg.dim,
            "heads": cfg.heads,
            "layers": cfg.layers,
            "mlp_hidden": cfg.mlp_hidden,
            "ln_eps": cfg.ln_eps,
        },
        "train": dict(vars(train_cfg)) if train_cfg is not None else None,
        "seed": seed,
        "epochs": len(loss_trace) if loss_trace is not None else 0,
        "loss_trace": list(loss_trace) if loss_trace is not None else [],
        "param_count": param_count,
        "param_order": PARAM_ORDER_DOC,
    }
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob)


def load_checkpoint(path):
    """Returns (EncoderParams, manifest dict)."""
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    try:
        manifest = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: bad checkpoint manifest: {exc}") from exc
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported format version {manifest.get('format_version')}"
        )
    enc = manifest["encoder"]
    cfg = encoder.EncoderConfig(
        dim=enc["dim"],
        heads=enc["heads"],
        layers=enc["layers"],
        mlp_hidden=enc["mlp_hidden"],
        ln_eps=enc["ln_eps"],
    )
    params = encoder.empty_params(cfg)
    values = np.frombuffer(blob, dtype="<f8")
    expected = manifest["param_count"]
    if values.size != expected:
        raise DataFormatError(
            f"{path}: blob holds {values.size} values, manifest says {expected}"
        )
    offset = 0
    for _, arr in encoder.iter_arrays(params):
        arr[...] = values[offset:offset + arr.size].reshape(arr.shape)
        offset += arr.size
    return params, manifest
