"""CSV and JSON writers for results, plus the results index."""
import csv
import io
import json
import logging
import math
import os
import sys

logger = logging.getLogger(__name__)

INDEX_FILE = "index.json"


def canonical_json(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ";".join(_cell(v) for v in value)
    return str(value)


def columns_of(records):
    """Union of record keys in first-seen order."""
    columns = []
    for record in records:
        for key in record:
            if key not in columns:
                columns.append(key)
    return columns


def render_csv(records, header=None, columns=None):
    buffer = io.StringIO()
    if header is not None:
        buffer.write(f"# config: {header}\n")
    columns = columns or columns_of(records)
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for record in records:
        writer.writerow([_cell(record.get(column)) for column in columns])
    return buffer.getvalue()


def render_json(payload):
    return json.dumps(payload, indent=2) + "\n"


def write_text(text, destination):
    """Write ``text`` to a path, or to stdout when ``destination`` is ``-``."""
    if destination == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(destination)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(destination, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"Exported {os.path.basename(destination)} to {destination}")


def summary_path(destination):
    stem, _ = os.path.splitext(destination)
    return f"{stem}.summary.json"


def write_index(folder):
    """List the experiment outputs found in ``folder`` as a sorted JSON array."""
    if not os.path.isdir(folder):
        return []
    names = sorted(
        name for name in os.listdir(folder)
        if name != INDEX_FILE and name.endswith((".csv", ".json")) and not name.endswith(".summary.json")
    )
    with open(os.path.join(folder, INDEX_FILE), "w", encoding="utf-8") as f:
        json.dump(names, f, indent=2)
    return names
