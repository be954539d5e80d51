import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

from src.settings import Settings


def write_atomic(path: Path, text: str):
    """Writes text next to the target and renames it over, readers never see a half-written file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w",
        dir=path.parent,
        prefix=f".{path.name}.",
        suffix=".tmp",
        delete=False,
        encoding=Settings.csv_encoding,
        newline="",
    ) as tmp:
        tmp.write(text)
        tmp_path = Path(tmp.name)
    try:
        os.replace(tmp_path, path)
    except OSError:
        tmp_path.unlink(missing_ok=True)
        raise


def write_json_atomic(path: Path, payload: Any):
    write_atomic(path, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")


def write_csv_atomic(path: Path, field_names: list[str], rows: Iterable[dict]):
    buffer = io.StringIO(newline="")
    writer = csv.DictWriter(buffer, fieldnames=field_names)
    writer.writeheader()
    for row in rows:
        # None -> empty string so CSV cells are empty instead of "None"
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    write_atomic(path, buffer.getvalue())


def read_csv(path: Path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding=Settings.csv_encoding) as f:
        return list(csv.DictReader(f))
