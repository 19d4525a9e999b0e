"""``.data`` and ``.names`` files."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class DatasetMeta:
    classes: int
    train_list_path: str = ""
    valid_list_path: str = ""
    names: tuple[str, ...] = ()
    names_path: str = ""
    backup_path: str = ""
    extra: dict = field(default_factory=dict)


def parse_names_file(text: str) -> list[str]:
    return [line.strip() for line in text.splitlines() if line.strip()]


def parse_data_file(text: str, names=None, base_dir=None) -> DatasetMeta:
    """Parse a ``.data`` file.

    ``names`` may be passed directly; otherwise the file named by ``names=``
    is read, relative to ``base_dir`` when that is given.
    """
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        kv[key.lower()] = (value, lineno)

    if "classes" not in kv:
        raise ParseError("missing classes=")
    value, lineno = kv.pop("classes")
    try:
        classes = int(value)
    except ValueError:
        raise ParseError(f"classes: expected integer, got {value!r}", lineno) from None

    get = lambda k: kv.pop(k, ("", None))[0]
    train, valid, names_path, backup = get("train"), get("valid"), get("names"), get("backup")
    if names is None and names_path:
        p = Path(names_path)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        names = parse_names_file(p.read_text())
    names = tuple(names or ())
    if names and len(names) != classes:
        raise ValidationError(f"classes={classes} but names lists {len(names)} entries")
    return DatasetMeta(classes, train, valid, names, names_path, backup,
                       {k: v for k, (v, _) in kv.items()})
