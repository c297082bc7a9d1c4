import csv
import json
import logging
import os
import subprocess

from constants import CSV_FLOAT_FORMAT, ROOT_DIRECTORY, VERSION

FORMATS = ("csv", "json")


def format_cell(value, float_format: str = CSV_FLOAT_FORMAT) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, int, str)):
        return str(value)
    return float_format % float(value)


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    # Ensure output directory exists, create if not
    if not os.path.exists(parent):
        os.makedirs(parent)


def write_csv(path: str, header, rows, float_format: str = CSV_FLOAT_FORMAT):
    """Write a header row and data rows; floats are written with `float_format`, None as an empty cell."""
    _ensure_parent(path)
    with open(path, mode="w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(value, float_format) for value in row])
    logging.info(f"Wrote {path}")


def read_csv_column(path: str, column: str) -> list[float]:
    with open(path, newline="", encoding="utf-8") as file:
        reader = csv.DictReader(file)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValueError(f"{path} has no column '{column}' (found {reader.fieldnames})")
        try:
            return [float(row[column]) for row in reader]
        except ValueError as ex:
            raise ValueError(f"{path}, line {reader.line_num}: {ex}") from ex


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return value.tolist()
    return value


def write_json(path: str, payload: dict):
    _ensure_parent(path)
    with open(path, mode="w", encoding="utf-8") as file:
        json.dump(_jsonable(payload), file, sort_keys=True, indent=2)
        file.write("\n")
    logging.info(f"Wrote {path}")


def emit_report(report, fmt: str, path: str, extra: dict = None):
    """
    Write a report object as CSV (its csv_header and csv_rows) or JSON (its to_dict, merged with `extra`).

    Raises:
        ValueError: for an unknown format.
        OSError: surfaced unchanged from the file system.
    """
    if fmt == "csv":
        write_csv(path, report.csv_header, report.csv_rows())
    elif fmt == "json":
        payload = dict(report.to_dict())
        payload.update(extra or {})
        write_json(path, payload)
    else:
        raise ValueError(f"unknown format {fmt}, expected one of {FORMATS}")


def artifact_version() -> str:
    """`git describe --always --dirty` of the source tree, or the package version outside a checkout."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=ROOT_DIRECTORY,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return f"v{VERSION}"
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else f"v{VERSION}"
