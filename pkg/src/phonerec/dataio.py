"""Feature-matrix and manifest file formats.

Feature file ("FEAT"): magic bytes, u32 version, u32 rows, u32 cols, then
row-major little-endian float32 payload.  Fixed endianness keeps the files
portable across machines, and write/read is bit-exact.

Manifest: line-delimited JSON, UTF-8.  The first line is a header object
{"split": "train"|"dev"|"test"}; each following line is one utterance record
{"utt_id": ..., "feature_path": ..., "transcript": ...} where transcript is a
space-separated phone-token string and feature_path is resolved relative to
the manifest's directory unless absolute.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PhonerecError

FEAT_MAGIC = b"FEAT"
FEAT_VERSION = 1
SPLITS = ("train", "dev", "test")


class CorruptFile(PhonerecError):
    """Feature or manifest file is malformed."""


class DuplicateId(PhonerecError):
    """Two manifest records share an utterance id."""


class MissingFeatureFile(PhonerecError):
    """A manifest record points at a feature file that does not exist."""


def write_features(matrix: np.ndarray, path: str | Path) -> None:
    """Write a T x F feature matrix; values are stored as float32."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise PhonerecError(f"feature matrix must be T x F with T,F >= 1, got {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise PhonerecError("refusing to write non-finite features")
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    header = FEAT_MAGIC + struct.pack("<III", FEAT_VERSION, *matrix.shape)
    Path(path).write_bytes(header + payload)


def read_features(path: str | Path) -> np.ndarray:
    """Read a feature file back as float32."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise MissingFeatureFile(f"cannot read feature file {path}: {exc}") from exc
    if len(data) < 16 or data[:4] != FEAT_MAGIC:
        raise CorruptFile(f"{path} is not a feature file (bad magic)")
    version, rows, cols = struct.unpack("<III", data[4:16])
    if version != FEAT_VERSION:
        raise CorruptFile(f"unsupported feature format version {version}")
    if rows < 1 or cols < 1:
        raise CorruptFile(f"invalid feature shape {rows}x{cols}")
    expected = 16 + 4 * rows * cols
    if len(data) != expected:
        raise CorruptFile(
            f"feature payload size mismatch: expected {expected} bytes, got {len(data)}"
        )
    return np.frombuffer(data[16:], dtype="<f4").astype(np.float32).reshape(rows, cols)


@dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    feature_path: str
    transcript: str  # space-separated phone tokens

    @property
    def tokens(self) -> list[str]:
        return self.transcript.split()


@dataclass(frozen=True)
class Manifest:
    split: str
    records: tuple[ManifestRecord, ...]
    base_dir: Path | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise CorruptFile(f"split must be one of {SPLITS}, got {self.split!r}")
        seen = set()
        for rec in self.records:
            if rec.utt_id in seen:
                raise DuplicateId(f"duplicate utterance id {rec.utt_id!r}")
            seen.add(rec.utt_id)

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, record: ManifestRecord) -> Path:
        path = Path(record.feature_path)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def load_features(self, record: ManifestRecord) -> np.ndarray:
        return read_features(self.resolve(record))


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    lines = [json.dumps({"split": manifest.split})]
    for rec in manifest.records:
        lines.append(
            json.dumps(
                {
                    "utt_id": rec.utt_id,
                    "feature_path": rec.feature_path,
                    "transcript": rec.transcript,
                },
                ensure_ascii=False,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path, check_features: bool = True) -> Manifest:
    """Read and validate a manifest.

    With check_features (the default) every referenced feature file must
    exist, mirroring the invariant that manifests are only valid when their
    features are resolvable.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorruptFile(f"cannot read manifest {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise CorruptFile(f"manifest {path} is empty")
    try:
        header = json.loads(lines[0])
        raw_records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"manifest {path} has invalid JSON: {exc}") from exc
    if not isinstance(header, dict) or "split" not in header:
        raise CorruptFile(f"manifest {path} missing split header")
    records = []
    for raw in raw_records:
        try:
            records.append(
                ManifestRecord(
                    utt_id=str(raw["utt_id"]),
                    feature_path=str(raw["feature_path"]),
                    transcript=str(raw["transcript"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise CorruptFile(f"manifest {path} has a malformed record: {raw!r}") from exc
    manifest = Manifest(
        split=str(header["split"]), records=tuple(records), base_dir=path.parent
    )
    if check_features:
        for rec in manifest.records:
            if not manifest.resolve(rec).is_file():
                raise MissingFeatureFile(
                    f"feature file {manifest.resolve(rec)} for {rec.utt_id!r} not found"
                )
    return manifest
