"""Canonical byte and text encodings.

Binary encodings are length-prefixed fields in declaration order; text
encodings are JSON with sorted keys and no insignificant whitespace, one
object per line.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator, Union

Field = Union[bytes, str, int]


def encode_field(value: Field) -> bytes:
    if isinstance(value, bool):
        raise TypeError("booleans are not encodable fields")
    if isinstance(value, int):
        if value < 0:
            raise ValueError("only non-negative integers are encodable")
        value = value.to_bytes(8, "big")
    elif isinstance(value, str):
        value = value.encode("utf-8")
    elif not isinstance(value, (bytes, bytearray)):
        raise TypeError(f"cannot encode {type(value).__name__}")
    return len(value).to_bytes(4, "big") + bytes(value)


def encode_fields(*values: Field) -> bytes:
    return b"".join(encode_field(v) for v in values)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def write_jsonl(path: Union[str, Path], records: Iterable[Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(canonical_json(rec))
            fh.write("\n")


def read_jsonl(path: Union[str, Path]) -> Iterator[Any]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc.msg}") from exc
