"""Scoring predictions: edit-distance alignment, sequence and symbol error
rates, note-level accuracies and the per-category OMR-NED table."""

from omrf.metrics import edit_distance, evaluate_pairs

GT = ["clef-G2", "keySignature-DM", "timeSignature-3/4", "note-D5_quarter",
      "note-F#5_eighth", "note-A5_eighth", "barline"]
PRED = ["clef-G2", "keySignature-DM", "note-D5_quarter", "note-F#5_quarter",
        "note-A5_eighth", "rest-eighth", "barline"]


def main():
    ops = edit_distance(GT, PRED)
    print(f"edit distance {ops.distance}")
    for op in ops.alignment:
        print(f"  {op}")

    rep = evaluate_pairs([(GT, PRED), (["barline"], ["barline"])])
    print()
    print(rep.machine_readable(), end="")
    print()
    print(rep.table())


if __name__ == "__main__":
    main()
