"""Versioned binary checkpoint container.

Byte layout (all integers little-endian, all floats little-endian IEEE-754
binary64):

    offset  size  field
    0       4     magic bytes "APNN"
    4       4     u32 format version (currently 1)
    8       4     u32 input_dim
    12      4     u32 output_dim
    16      4     u32 num_layers
    20      4     u32 hidden_size
    24      8     i64 seed
    32      4     u32 epoch
    36      8     f64 dev PER at save time (NaN when unset)
    44      4     u32 allophone-layer count
    48      ...   encoder tensors, canonical declaration order
                  (per layer: fwd.wx, fwd.wh, fwd.b, bwd.wx, bwd.wh, bwd.b;
                  then proj_w, proj_b), raw f64, row-major

    then for each allophone layer, in saved order:
            2     u16 language-id byte length, followed by UTF-8 bytes
            4     u32 phoneme count Q
            4     u32 phone count P
            8     f64 alpha
            ...   Q phoneme symbols, each u16 byte length + UTF-8 bytes
            ...   W as Q*P raw f64, row-major
            ...   S as Q*P raw f64, row-major

Tensor shapes are derived from the header, so the payload carries no shape
metadata.  Write/read/write is byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from io import BufferedReader
from pathlib import Path

import numpy as np

from ..errors import PhonerecError
from ..phoneset import SignatureMatrix
from .allophone import AllophoneLayer
from .encoder import EncoderConfig, EncoderParams, zeros_encoder

MAGIC = b"APNN"
FORMAT_VERSION = 1


class CorruptFile(PhonerecError):
    """Checkpoint file truncated, mislabeled, or internally inconsistent."""


@dataclass
class Checkpoint:
    """Encoder parameters plus any language allophone layers and provenance."""

    params: EncoderParams
    allophone_layers: dict[str, AllophoneLayer] = field(default_factory=dict)
    epoch: int = 0
    dev_per: float | None = None

    def copy(self) -> Checkpoint:
        return Checkpoint(
            params=self.params.copy(),
            allophone_layers={k: v.copy() for k, v in self.allophone_layers.items()},
            epoch=self.epoch,
            dev_per=self.dev_per,
        )


def _f64_bytes(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f8").tobytes()


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    if not checkpoint.params.all_finite():
        raise PhonerecError("refusing to save non-finite encoder parameters")
    config = checkpoint.params.config
    dev = float("nan") if checkpoint.dev_per is None else float(checkpoint.dev_per)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack(
        "<IIIIIqId",
        FORMAT_VERSION,
        config.input_dim,
        config.output_dim,
        config.num_layers,
        config.hidden_size,
        config.seed,
        checkpoint.epoch,
        dev,
    )
    blob += struct.pack("<I", len(checkpoint.allophone_layers))
    for _, tensor in checkpoint.params.tensors():
        blob += _f64_bytes(tensor)
    for language, layer in checkpoint.allophone_layers.items():
        if not np.isfinite(layer.weights).all():
            raise PhonerecError("refusing to save non-finite allophone weights")
        lang_bytes = language.encode("utf-8")
        blob += struct.pack("<H", len(lang_bytes)) + lang_bytes
        blob += struct.pack("<IId", layer.num_phonemes, layer.num_phones, layer.alpha)
        for symbol in layer.signature.phonemes:
            sym_bytes = symbol.encode("utf-8")
            blob += struct.pack("<H", len(sym_bytes)) + sym_bytes
        blob += _f64_bytes(layer.weights)
        blob += _f64_bytes(layer.signature.entries)
    Path(path).write_bytes(bytes(blob))


def _read_exact(fh: BufferedReader, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptFile(f"unexpected end of file (wanted {n} bytes, got {len(data)})")
    return data


def _read_struct(fh: BufferedReader, fmt: str):
    return struct.unpack(fmt, _read_exact(fh, struct.calcsize(fmt)))


def _read_tensor(fh: BufferedReader, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    data = _read_exact(fh, 8 * count)
    tensor = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
    if not np.isfinite(tensor).all():
        raise CorruptFile("checkpoint contains non-finite parameters")
    return tensor


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CorruptFile(f"{path} is not a checkpoint file (bad magic)")
        (version,) = _read_struct(fh, "<I")
        if version != FORMAT_VERSION:
            raise CorruptFile(f"unsupported checkpoint format version {version}")
        input_dim, output_dim, num_layers, hidden_size, seed, epoch, dev = (
            _read_struct(fh, "<IIIIqId")
        )
        config = EncoderConfig(
            input_dim=input_dim,
            output_dim=output_dim,
            num_layers=num_layers,
            hidden_size=hidden_size,
            seed=seed,
        )
        (num_allophone,) = _read_struct(fh, "<I")
        params = zeros_encoder(config)
        for _, tensor in params.tensors():
            tensor[...] = _read_tensor(fh, tensor.shape)
        layers: dict[str, AllophoneLayer] = {}
        for _ in range(num_allophone):
            (lang_len,) = _read_struct(fh, "<H")
            language = _read_exact(fh, lang_len).decode("utf-8")
            q, p, alpha = _read_struct(fh, "<IId")
            phonemes = []
            for _ in range(q):
                (sym_len,) = _read_struct(fh, "<H")
                phonemes.append(_read_exact(fh, sym_len).decode("utf-8"))
            weights = _read_tensor(fh, (q, p))
            entries = _read_tensor(fh, (q, p))
            signature = SignatureMatrix(entries=entries, phonemes=tuple(phonemes))
            layers[language] = AllophoneLayer(
                weights=weights, signature=signature, alpha=alpha
            )
        if fh.read(1):
            raise CorruptFile("trailing bytes after checkpoint payload")
    return Checkpoint(
        params=params,
        allophone_layers=layers,
        epoch=epoch,
        dev_per=None if np.isnan(dev) else float(dev),
    )
