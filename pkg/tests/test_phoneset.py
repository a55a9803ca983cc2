import json
import unicodedata

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonerec.phoneset import (
    EmptyAllophoneList,
    InventoryError,
    LanguageInventory,
    MissingPhoneme,
    Phone,
    SignatureMatrix,
    UniversalInventory,
    UnknownPhone,
    UnknownSymbol,
    load_signature,
    restrict,
    tokenize,
    tokenize_symbols,
)


def test_tokenize_longest_match():
    toks = tokenize_symbols("aːⁿdi", ["a", "aː", "i", "ⁿd", "n", "d"])
    assert toks == ["aː", "ⁿd", "i"]


def test_tokenize_no_longer_match():
    assert tokenize_symbols("aa", ["a", "aː"]) == ["a", "a"]


def test_tokenize_unknown_symbol_position():
    with pytest.raises(UnknownSymbol) as exc:
        tokenize("ab", ["a"])
    assert exc.value.position == 1
    assert exc.value.fragment.startswith("b")


def test_tokenize_skips_whitespace_and_preserves_join():
    toks = tokenize_symbols("a i  aː", ["a", "aː", "i"])
    assert toks == ["a", "i", "aː"]
    assert "".join(toks) == "aiaː"


def test_tokenize_indices_are_one_based():
    toks = tokenize("ia", ["a", "i"])
    assert [(t.symbol, t.index) for t in toks] == [("i", 2), ("a", 1)]


def test_tokenize_empty_inventory_rejected():
    with pytest.raises(InventoryError):
        tokenize("a", [])


def test_tokenize_unicode_composition_insensitive():
    # "aː" with a decomposed diacritic on the vowel must match the composed form
    composed = "á"
    decomposed = unicodedata.normalize("NFD", composed)
    assert composed != decomposed
    assert tokenize_symbols(decomposed, [composed]) == [composed]


def _brute_force_segmentations(text, inventory):
    """All ways to write text as a concatenation of inventory symbols."""
    if text == "":
        return [[]]
    out = []
    for sym in inventory:
        if text.startswith(sym):
            for rest in _brute_force_segmentations(text[len(sym) :], inventory):
                out.append([sym] + rest)
    return out


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_tokenize_prefix_free_unique_segmentation(data):
    # Prefix-free inventory: greedy tokenization must equal the unique
    # brute-force segmentation for any token sequence of length <= 6.
    inventory = ["a", "bi", "ko", "tʃu"]  # pairwise prefix-free
    n = data.draw(st.integers(min_value=1, max_value=6))
    seq = data.draw(st.lists(st.sampled_from(inventory), min_size=n, max_size=n))
    text = "".join(seq)
    segs = _brute_force_segmentations(text, inventory)
    assert len(segs) == 1
    assert tokenize_symbols(text, inventory) == segs[0] == seq


def test_phone_requires_symbol():
    with pytest.raises(InventoryError):
        Phone("", 1)


def test_universal_inventory_indices_and_blank_slot():
    uni = UniversalInventory.from_symbols(["a", "b", "c"])
    assert [p.index for p in uni.phones] == [1, 2, 3]
    assert uni.size == 3
    assert uni.output_dim == 4
    assert uni.index_of("b") == 2


def test_universal_inventory_rejects_duplicates():
    with pytest.raises(InventoryError):
        UniversalInventory.from_symbols(["a", "a"])


def test_language_inventory_rejects_duplicates():
    with pytest.raises(InventoryError):
        LanguageInventory.from_symbols("lg", ["p", "p"], ["a"])
    with pytest.raises(InventoryError):
        LanguageInventory.from_symbols("lg", ["p"], ["a", "a"])


def test_inventory_file_roundtrip(tmp_path):
    path = tmp_path / "uni.txt"
    path.write_text("a\naː\n\nⁿd\n", encoding="utf-8")
    uni = UniversalInventory.load(path)
    assert uni.symbols == ["a", "aː", "ⁿd"]


def _signature_file(tmp_path, mapping):
    path = tmp_path / "sig.json"
    path.write_text(json.dumps(mapping, ensure_ascii=False), encoding="utf-8")
    return path


def test_load_signature_direct_transcription(tmp_path):
    uni = UniversalInventory.from_symbols(["a", "i", "iː"])
    lang = LanguageInventory.from_symbols("lg", ["p1", "p2"], ["a", "i", "iː"])
    sig = load_signature(
        _signature_file(tmp_path, {"p1": ["a"], "p2": ["i", "iː"]}), lang, uni
    )
    assert sig.entries.tolist() == [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]


def test_load_signature_empty_allophone_list(tmp_path):
    uni = UniversalInventory.from_symbols(["a"])
    lang = LanguageInventory.from_symbols("lg", ["p1"], ["a"])
    with pytest.raises(EmptyAllophoneList):
        load_signature(_signature_file(tmp_path, {"p1": []}), lang, uni)


def test_load_signature_unknown_phone(tmp_path):
    uni = UniversalInventory.from_symbols(["a"])
    lang = LanguageInventory.from_symbols("lg", ["p1"], ["a"])
    with pytest.raises(UnknownPhone):
        load_signature(_signature_file(tmp_path, {"p1": ["zz"]}), lang, uni)


def test_load_signature_missing_phoneme(tmp_path):
    uni = UniversalInventory.from_symbols(["a"])
    lang = LanguageInventory.from_symbols("lg", ["p1", "p2"], ["a"])
    with pytest.raises(MissingPhoneme):
        load_signature(_signature_file(tmp_path, {"p1": ["a"]}), lang, uni)


def test_signature_invariants():
    with pytest.raises(EmptyAllophoneList):
        SignatureMatrix(entries=np.zeros((1, 3)), phonemes=("p",))
    with pytest.raises(InventoryError):
        SignatureMatrix(entries=np.full((1, 3), 0.5), phonemes=("p",))


def test_restrict_intersection():
    uni = UniversalInventory.from_symbols(["a", "b", "c", "d"])
    assert restrict({"b", "d", "x"}, uni) == {2, 4}


def test_restrict_identity_and_empty():
    uni = UniversalInventory.from_symbols(["a", "b"])
    assert restrict(["a", "b"], uni) == {1, 2}
    assert restrict(["z"], uni) == set()


@settings(max_examples=100, deadline=None)
@given(
    st.sets(st.sampled_from(["a", "b", "c", "d", "e", "x", "y"])),
)
def test_restrict_is_subset_with_matching_symbols(lang_phones):
    uni = UniversalInventory.from_symbols(["a", "b", "c", "d", "e"])
    idx = restrict(lang_phones, uni)
    assert idx <= {p.index for p in uni.phones}
    assert {uni.phones[i - 1].symbol for i in idx} == lang_phones & set(uni.symbols)
