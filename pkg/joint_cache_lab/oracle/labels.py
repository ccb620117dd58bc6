"""
Labels CSV codec: `insertion_id,position,block,pc,set,label`.
"""

import csv
from typing import List, Sequence, TextIO

from joint_cache_lab.errors import DataIntegrityError
from joint_cache_lab.oracle.belady import InsertionLabel, LabeledInsertion

LABEL_CSV_HEADER = ["insertion_id", "position", "block", "pc", "set", "label"]


def write_labels(insertions: Sequence[LabeledInsertion], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(LABEL_CSV_HEADER)
    for ins in insertions:
        writer.writerow([
            ins.insertion_id, ins.trace_position, ins.block, hex(ins.pc), ins.set_index,
            ins.label.value,
        ])


def read_labels(stream: TextIO) -> List[LabeledInsertion]:
    """Parse a labels CSV written by write_labels."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != LABEL_CSV_HEADER:
        raise DataIntegrityError(f"labels file header must be {','.join(LABEL_CSV_HEADER)}")
    insertions: List[LabeledInsertion] = []
    for row in reader:
        if not row:
            continue
        try:
            insertions.append(
                LabeledInsertion(
                    insertion_id=int(row[0]),
                    trace_position=int(row[1]),
                    block=int(row[2]),
                    pc=int(row[3], 0),
                    set_index=int(row[4]),
                    label=InsertionLabel(row[5]),
                )
            )
        except (ValueError, IndexError) as e:
            raise DataIntegrityError(f"bad labels row at line {reader.line_num}: {e}") from e
    return insertions
