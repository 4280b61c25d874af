import numpy as np
import pytest

from omrf.metrics import (DEL, INS, MATCH, SUB, MetricError, edit_distance, evaluate_pairs,
                          note_accuracies, omr_ned_report, parse_token, replay,
                          report_from_counts, sequence_metrics)

from golden_tables import ALL_TABLES, INCONSISTENT_OVERALL
from oracles import levenshtein_recursive


def random_pairs(rng, n, max_len=8, alphabet=5):
    out = []
    for _ in range(n):
        a = rng.integers(0, alphabet, rng.integers(0, max_len + 1)).tolist()
        b = rng.integers(0, alphabet, rng.integers(0, max_len + 1)).tolist()
        out.append((a, b))
    return out


def test_identical_sequences():
    eo = edit_distance(list("abc"), list("abc"))
    assert eo.distance == 0 and all(a.op == MATCH for a in eo.alignment)


def test_kitten_sitting():
    assert edit_distance(list("kitten"), list("sitting")).distance == 3


def test_empty_ground_truth():
    eo = edit_distance([], ["a", "b"])
    assert eo.distance == 2 and [a.op for a in eo.alignment] == [INS, INS]


def test_backtrace_prefers_substitution_then_deletion():
    assert [a.op for a in edit_distance(["a"], ["b"]).alignment] == [SUB]
    # "ab" -> "b": deleting 'a' is the only optimal script
    assert [a.op for a in edit_distance(["a", "b"], ["b"]).alignment] == [DEL, MATCH]


def test_matches_recursive_oracle_and_replays():
    rng = np.random.default_rng(0)
    for a, b in random_pairs(rng, 1000):
        eo = edit_distance(a, b)
        assert eo.distance == levenshtein_recursive(tuple(a), tuple(b))
        assert replay(a, eo.alignment) == b
        c = eo.counts()
        assert eo.distance == c[SUB] + c[DEL] + c[INS]


def test_metric_axioms():
    rng = np.random.default_rng(1)
    seqs = [p[0] for p in random_pairs(rng, 60)]
    for i in range(0, 60, 3):
        a, b, c = seqs[i:i + 3]
        d = lambda x, y: edit_distance(x, y).distance  # noqa: E731
        assert d(a, a) == 0
        assert d(a, b) == d(b, a)
        assert (d(a, b) == 0) == (a == b)
        assert d(a, c) <= d(a, b) + d(b, c)


def test_sequence_metrics_examples():
    gt = [list("abcdefghij")] * 2
    pred = [list("abcdefghij"), list("abcdefghiX")]
    assert sequence_metrics(list(zip(gt, pred))) == (50.0, 5.0)
    seer, syer = sequence_metrics([(list("abcdefghij"), [])] * 3, distances=[1, 1, 1])
    assert (seer, syer) == (100.0, 10.0)
    assert sequence_metrics([(["a"], ["a"])]) == (0.0, 0.0)
    with pytest.raises(MetricError):
        sequence_metrics([([], ["a"])])
    with pytest.raises(MetricError):
        sequence_metrics([])


def test_syer_from_alignments_equals_syer_from_distances():
    pairs = random_pairs(np.random.default_rng(2), 50)
    pairs = [(a or [0], b) for a, b in pairs]
    from_dist = sequence_metrics(pairs)
    counts = [sum(1 for x in edit_distance(a, b).alignment if x.op != MATCH) for a, b in pairs]
    assert sequence_metrics(pairs, distances=counts) == from_dist


@pytest.mark.parametrize("token, encoding, expected", [
    ("note-C4_quarter", "semantic", ("Notes", "C4", "quarter")),
    ("gracenote-Bb5_eighth.", "semantic", ("GraceNotes", "Bb5", "eighth.")),
    ("barline", "semantic", ("Barlines", None, None)),
    ("keySignature-EbM", "semantic", ("KeySignatures", None, None)),
    ("tie", "semantic", ("Ties", None, None)),
    ("something-odd", "semantic", ("Others", None, None)),
    ("digit.3-S5", "agnostic", ("Others", None, None)),
    ("accidental.flat-L3", "agnostic", ("Accidentals", None, None)),
    ("metersign.C-L3", "agnostic", ("MeterSigns", None, None)),
    ("note.quarter-S2", "agnostic", ("Notes", "S2", "quarter")),
])
def test_parse_token(token, encoding, expected):
    f = parse_token(token, encoding)
    assert (f.category, f.pitch, f.note_type) == expected


def test_note_accuracies():
    gt = ["note-C4_quarter", "note-D4_half", "barline", "note-E4_eighth", "note-F4_whole"]
    assert note_accuracies(edit_distance(gt, gt)) == (100.0, 100.0, 100.0)
    pred = list(gt)
    pred[1] = "note-D4_quarter"
    assert note_accuracies(edit_distance(gt, pred)) == (100.0, 75.0, 75.0)
    deleted = edit_distance(["note-C4_quarter", "note-D4_half"], ["note-C4_quarter"])
    assert all(v <= 50.0 for v in note_accuracies(deleted))
    with pytest.raises(MetricError):
        note_accuracies(edit_distance(["barline"], ["barline"]))


def test_omr_ned_identical_corpora_is_zero():
    pairs = [(["clef-G2", "note-C4_quarter", "barline"],) * 2]
    rep = omr_ned_report(pairs)
    assert rep.overall == 0.0 and all(r.omr_ned == 0.0 for r in rep.rows)


def test_substitution_counts_as_delete_plus_insert():
    rep = omr_ned_report([(["note-A4_half"], ["note-B4_half"])])
    r = rep.row("Notes")
    assert (r.insertions, r.deletions, r.n_pred, r.n_gt, r.omr_ned) == (1, 1, 1, 1, 100.0)
    cross = omr_ned_report([(["barline"], ["tie"])])
    assert cross.row("Barlines").deletions == 1 and cross.row("Ties").insertions == 1


def test_report_rows_satisfy_definition():
    rng = np.random.default_rng(3)
    vocab = ["note-C4_quarter", "note-D4_half", "barline", "rest-quarter", "tie", "clef-G2"]
    pairs = [([vocab[i] for i in a], [vocab[i] for i in b])
             for a, b in random_pairs(rng, 40, alphabet=len(vocab))]
    rep = omr_ned_report(pairs)
    for r in rep.rows:
        expected = 0.0 if r.n_pred + r.n_gt == 0 else 100 * (r.insertions + r.deletions) / (r.n_pred + r.n_gt)
        assert r.omr_ned == expected
    assert sum(r.error_share for r in rep.rows) == pytest.approx(100.0)


def test_barlines_row_example():
    rep = report_from_counts([("Barlines", 76, 190, 29516, 29402)])
    assert round(rep.row("Barlines").omr_ned, 2) == 0.45


@pytest.mark.parametrize("name", sorted(ALL_TABLES))
def test_printed_rows_reproduce(name):
    table = ALL_TABLES[name]
    rep = report_from_counts(row[:5] for row in table["rows"])
    for printed, got in zip(table["rows"], rep.rows):
        assert round(got.omr_ned, 2) == printed[5], printed
        assert round(got.error_share, 2) == printed[6], printed
    expected = INCONSISTENT_OVERALL.get(name, table["overall"])
    assert round(rep.overall, 2) == expected


def test_evaluate_pairs_and_key_values():
    pairs = [(["clef-G2", "note-C4_quarter"], ["clef-G2", "note-C4_quarter"]),
             (["note-D4_half", "barline"], ["note-D4_quarter", "barline"])]
    rep = evaluate_pairs(pairs)
    assert rep.machine_readable() == (
        "sequences=2\nseer=50.0000\nsyer=25.0000\npitch_accuracy=100.0000\n"
        "type_accuracy=50.0000\nnote_accuracy=50.0000\nomr_ned=25.0000\n")
    assert "Notes" in rep.table()
    no_notes = evaluate_pairs([(["barline"], ["barline"])])
    assert no_notes.pitch_acc is None and "pitch_accuracy=nan" in no_notes.machine_readable()
