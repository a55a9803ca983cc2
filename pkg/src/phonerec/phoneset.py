"""Phone and phoneme inventories, signature matrices, and transcript tokenization.

A universal inventory orders the narrow phones the acoustic model can emit;
index 0 of the model's output layer is the CTC blank and is *not* part of the
inventory, so phone indices start at 1.  Per-language inventories pair a
phoneme list with a phone list, and a signature matrix marks which universal
phones realize each phoneme.

All symbols are compared after Unicode canonical composition (NFC) because
IPA diacritics have several equivalent encodings.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PhonerecError


class UnknownSymbol(PhonerecError):
    """Transcript contains material not covered by the inventory."""

    def __init__(self, position: int, fragment: str):
        self.position = position
        self.fragment = fragment
        super().__init__(
            f"no inventory phone matches at position {position}: {fragment!r}"
        )


class InventoryError(PhonerecError):
    """Malformed inventory file or inventory invariant violation."""


class MissingPhoneme(PhonerecError):
    """Signature file lacks an entry for a phoneme of the language."""


class UnknownPhone(PhonerecError):
    """Signature file lists an allophone outside the universal inventory."""


class EmptyAllophoneList(PhonerecError):
    """Signature file maps a phoneme to no allophones."""


def normalize_symbol(symbol: str) -> str:
    """Canonically compose a phone/phoneme symbol (NFC)."""
    return unicodedata.normalize("NFC", symbol)


@dataclass(frozen=True)
class Phone:
    """One inventory unit: an IPA symbol and its position in the inventory."""

    symbol: str
    index: int

    def __post_init__(self):
        if not self.symbol:
            raise InventoryError("phone symbol must be non-empty")


def _check_unique(symbols: list[str], what: str) -> None:
    seen = set()
    for s in symbols:
        if s in seen:
            raise InventoryError(f"duplicate {what} symbol: {s!r}")
        seen.add(s)


@dataclass(frozen=True)
class UniversalInventory:
    """Ordered universal phone set; indices are contiguous starting at 1.

    Index 0 is reserved for the CTC blank, which is not a phone and never
    appears in the inventory itself.
    """

    phones: tuple[Phone, ...]

    @classmethod
    def from_symbols(cls, symbols: list[str]) -> UniversalInventory:
        symbols = [normalize_symbol(s) for s in symbols]
        _check_unique(symbols, "phone")
        return cls(tuple(Phone(s, i + 1) for i, s in enumerate(symbols)))

    @classmethod
    def load(cls, path: str | Path) -> UniversalInventory:
        return cls.from_symbols(_read_symbol_lines(path))

    @property
    def symbols(self) -> list[str]:
        return [p.symbol for p in self.phones]

    @property
    def size(self) -> int:
        """Number of phones, excluding the blank slot."""
        return len(self.phones)

    @property
    def output_dim(self) -> int:
        """Model output width: all phones plus the blank at index 0."""
        return len(self.phones) + 1

    def index_of(self, symbol: str) -> int:
        sym = normalize_symbol(symbol)
        for p in self.phones:
            if p.symbol == sym:
                return p.index
        raise UnknownPhone(f"phone {sym!r} not in universal inventory")

    def __contains__(self, symbol: str) -> bool:
        sym = normalize_symbol(symbol)
        return any(p.symbol == sym for p in self.phones)


@dataclass(frozen=True)
class LanguageInventory:
    """Phoneme and phone lists for one language."""

    language: str
    phonemes: tuple[str, ...]
    phones: tuple[str, ...]

    @classmethod
    def from_symbols(
        cls, language: str, phonemes: list[str], phones: list[str]
    ) -> LanguageInventory:
        phonemes = [normalize_symbol(s) for s in phonemes]
        phones = [normalize_symbol(s) for s in phones]
        _check_unique(phonemes, "phoneme")
        _check_unique(phones, "phone")
        return cls(language, tuple(phonemes), tuple(phones))

    @classmethod
    def load(
        cls, language: str, phoneme_path: str | Path, phone_path: str | Path
    ) -> LanguageInventory:
        return cls.from_symbols(
            language, _read_symbol_lines(phoneme_path), _read_symbol_lines(phone_path)
        )


@dataclass(frozen=True)
class SignatureMatrix:
    """Binary phoneme-by-phone association matrix for one language.

    entries[j, k] is 1 iff universal phone k+1 is an allophone of phoneme j.
    Rows follow the language's phoneme order; columns follow the universal
    phone order (without the blank).
    """

    entries: np.ndarray = field(repr=False)
    phonemes: tuple[str, ...]

    def __post_init__(self):
        ent = self.entries
        if ent.ndim != 2 or ent.shape[0] != len(self.phonemes):
            raise InventoryError("signature shape does not match phoneme list")
        if not np.isin(ent, (0.0, 1.0)).all():
            raise InventoryError("signature entries must be 0 or 1")
        if (ent.sum(axis=1) < 1).any():
            raise EmptyAllophoneList("every phoneme needs at least one allophone")

    @property
    def num_phonemes(self) -> int:
        return self.entries.shape[0]

    @property
    def num_phones(self) -> int:
        return self.entries.shape[1]


def _read_symbol_lines(path: str | Path) -> list[str]:
    """Read a one-symbol-per-line UTF-8 inventory file; blank lines skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InventoryError(f"cannot read inventory file {path}: {exc}") from exc
    return [line.strip() for line in text.splitlines() if line.strip()]


def tokenize(transcript: str, phones: list[str] | tuple[str, ...]) -> list[Phone]:
    """Segment an IPA transcript into inventory phones.

    Greedy longest-match, left to right; whitespace separates candidates but
    produces no tokens.  Multi-character units (long vowels, prenasalized
    stops) must therefore be listed in the inventory to survive as single
    tokens.  Greedy matching can differ from a globally optimal segmentation
    on adversarial inventories; it matches what IPA segmenters commonly do.

    Raises UnknownSymbol at the first position where no inventory phone
    matches.
    """
    if not phones:
        raise InventoryError("cannot tokenize against an empty inventory")
    table = {normalize_symbol(s): i for i, s in enumerate(phones)}
    by_length = sorted(table, key=len, reverse=True)
    text = normalize_symbol(transcript)
    tokens: list[Phone] = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        for cand in by_length:
            if text.startswith(cand, pos):
                tokens.append(Phone(cand, table[cand] + 1))
                pos += len(cand)
                break
        else:
            raise UnknownSymbol(pos, text[pos : pos + 8])
    return tokens


def tokenize_symbols(transcript: str, phones: list[str] | tuple[str, ...]) -> list[str]:
    """Like tokenize but returning bare symbols."""
    return [p.symbol for p in tokenize(transcript, phones)]


def load_signature(
    path: str | Path,
    language_inventory: LanguageInventory,
    universal_inventory: UniversalInventory,
) -> SignatureMatrix:
    """Build a SignatureMatrix from a JSON phoneme -> [allophone, ...] mapping.

    Every phoneme of the language must appear in the file, every listed
    allophone must belong to the universal inventory, and no allophone list
    may be empty.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InventoryError(f"cannot read signature file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InventoryError(f"signature file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InventoryError("signature file must be a JSON object")
    mapping = {normalize_symbol(k): v for k, v in raw.items()}

    entries = np.zeros(
        (len(language_inventory.phonemes), universal_inventory.size), dtype=np.float64
    )
    for j, phoneme in enumerate(language_inventory.phonemes):
        if phoneme not in mapping:
            raise MissingPhoneme(f"phoneme {phoneme!r} missing from signature file")
        allophones = mapping[phoneme]
        if not isinstance(allophones, list) or not allophones:
            raise EmptyAllophoneList(f"phoneme {phoneme!r} has no allophones")
        for symbol in allophones:
            k = universal_inventory.index_of(symbol)  # raises UnknownPhone
            entries[j, k - 1] = 1.0
    return SignatureMatrix(entries=entries, phonemes=language_inventory.phonemes)


def restrict(
    language_phones: list[str] | tuple[str, ...] | set[str],
    universal: UniversalInventory,
) -> set[int]:
    """Universal indices of the phones shared by a language and the universal set.

    Decoding restricted to the result (plus the blank, which is always
    allowed downstream) implements inventory-constrained recognition.  An
    empty intersection is legal; constrained decoding then emits nothing.
    """
    wanted = {normalize_symbol(s) for s in language_phones}
    return {p.index for p in universal.phones if p.symbol in wanted}
