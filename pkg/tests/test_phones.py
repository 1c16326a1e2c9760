import itertools
from dataclasses import replace

import pytest

from accentlab.errors import DataError
from accentlab.phones import (FEATURE_CATEGORIES, PhoneSeq, ctc_collapse,
                              load_annotations, save_annotations)


def test_inventory_has_51_contiguous_classes(inventory):
    assert inventory.size == 51
    assert inventory.blank_id == 51
    assert len(inventory.labels) == 51
    # CTC output dimension is phones + blank.
    assert inventory.size + 1 == 52


def test_features_id_round_trip_all_classes(inventory):
    for k in range(inventory.size):
        feats = inventory.features_of(k)
        assert inventory.class_of(feats) == k
        assert inventory.id_of(inventory.label_of(k)) == k


def test_unregistered_tuple_is_rejected(inventory):
    feats = inventory.features_of(inventory.id_of("AA"))
    # Flip single fields; any variant not itself registered must error.
    for value in FEATURE_CATEGORIES["formant1"]:
        variant = replace(feats, formant1=value)
        try:
            found = inventory.class_of(variant)
        except DataError:
            continue
        assert inventory.features_of(found) == variant


def test_unknown_label_and_bad_id(inventory):
    with pytest.raises(DataError):
        inventory.id_of("QQ")
    with pytest.raises(DataError):
        inventory.features_of(51)


class TestAnnotationParsing:
    def test_empty_line(self, inventory):
        assert len(inventory.parse_annotation("")) == 0

    def test_timed_tokens(self, inventory):
        seq = inventory.parse_annotation("AH:0.00:0.10 T:0.10:0.14")
        assert seq.ids == (inventory.id_of("AH"), inventory.id_of("T"))
        assert seq.times == ((0.0, 0.10), (0.10, 0.14))

    def test_bare_tokens(self, inventory):
        seq = inventory.parse_annotation("S IH L")
        assert [inventory.label_of(i) for i in seq.ids] == ["S", "IH", "L"]
        assert seq.times is None

    def test_non_monotone_interval(self, inventory):
        with pytest.raises(DataError, match="monotone"):
            inventory.parse_annotation("AH:0.10:0.05")

    def test_overlapping_phones_rejected(self, inventory):
        with pytest.raises(DataError, match="precedes"):
            inventory.parse_annotation("AH:0.00:0.10 T:0.05:0.14")

    def test_unknown_label_position(self, inventory):
        with pytest.raises(DataError, match="ZZZ"):
            inventory.parse_annotation("AH ZZZ T")

    def test_malformed_token(self, inventory):
        with pytest.raises(DataError, match="token 1"):
            inventory.parse_annotation("AH T:1:2:3")

    def test_mixed_timed_untimed(self, inventory):
        with pytest.raises(DataError, match="mixed"):
            inventory.parse_annotation("AH:0:0.1 T")

    def test_parse_serialize_fixed_point(self, inventory):
        for text in ("AH:0.0000:0.1000 T:0.1000:0.1400", "S IH L", ""):
            seq = inventory.parse_annotation(text)
            line = inventory.serialize_annotation(seq)
            again = inventory.parse_annotation(line)
            assert again.ids == seq.ids
            assert inventory.serialize_annotation(again) == line


def _collapse_by_definition(path, blank):
    if not path:
        return ()
    head, *rest = path
    collapsed = [head]
    for value in rest:
        if value != collapsed[-1]:
            collapsed.append(value)
    return tuple(v for v in collapsed if v != blank)


class TestCtcCollapse:
    def test_blank_separates_repeats(self):
        assert ctc_collapse([5, 5, 51, 5], 51).ids == (5, 5)

    def test_all_blank(self):
        assert ctc_collapse([51, 51, 51], 51).ids == ()

    def test_exhaustive_against_recursive_definition(self):
        blank = 2
        total = 0
        for length in range(0, 6):
            for path in itertools.product((0, 1, blank), repeat=length):
                assert ctc_collapse(path, blank).ids == \
                    _collapse_by_definition(path, blank)
                total += 1
        assert total == 364  # 3^0 + ... + 3^5

    def test_idempotent_on_clean_sequences(self):
        seq = (0, 1, 0, 2, 1)
        once = ctc_collapse(seq, 51).ids
        assert once == seq
        assert ctc_collapse(once, 51).ids == seq

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError):
            ctc_collapse([52], 51)


def test_annotation_file_round_trip(tmp_path, inventory):
    data = {
        "u1": inventory.parse_annotation("SIL:0.00:0.08 B:0.08:0.15 AA:0.15:0.30"),
        "u2": inventory.parse_annotation(""),
        "u3": inventory.parse_annotation("S IH L"),
    }
    path = tmp_path / "phones.txt"
    save_annotations(path, data, inventory)
    loaded = load_annotations(path, inventory)
    assert set(loaded) == set(data)
    for key in data:
        assert loaded[key].ids == data[key].ids


def test_annotation_file_duplicate_key(tmp_path, inventory):
    path = tmp_path / "phones.txt"
    path.write_text("u1\tS\nu1\tL\n")
    with pytest.raises(DataError, match="duplicate"):
        load_annotations(path, inventory)


def test_phoneseq_times_must_align():
    with pytest.raises(DataError):
        PhoneSeq((1, 2), times=((0.0, 0.1),))
