"""Local dataset registry backed by a single ``catalog.json`` manifest."""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .errors import DanglingPathError, DuplicateIdError, IoFailureError, ManifestParseError

KINDS = ("weather", "soil", "trials", "synthetic")

_BUNDLED = Path(__file__).parent / "data" / "catalog.json"


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    kind: str
    region: str
    start: dt.date
    end: dt.date
    path: str
    schema_path: str | None = None
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ManifestParseError(f"entry {self.id!r}: unknown kind {self.kind!r}")
        if self.start > self.end:
            raise ManifestParseError(f"entry {self.id!r}: start {self.start} after end {self.end}")

    @property
    def time_range(self) -> tuple[dt.date, dt.date]:
        return (self.start, self.end)

    def to_json(self) -> dict:
        doc = {
            "id": self.id,
            "kind": self.kind,
            "region": self.region,
            "time_range": [self.start.isoformat(), self.end.isoformat()],
            "path": self.path,
            "provenance": self.provenance,
        }
        if self.schema_path is not None:
            doc["schema_path"] = self.schema_path
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "CatalogEntry":
        try:
            start, end = doc["time_range"]
            return cls(
                id=str(doc["id"]),
                kind=doc["kind"],
                region=str(doc["region"]),
                start=dt.date.fromisoformat(start),
                end=dt.date.fromisoformat(end),
                path=str(doc["path"]),
                schema_path=doc.get("schema_path"),
                provenance=str(doc.get("provenance", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestParseError(f"bad catalog entry {doc!r}: {exc}") from exc


@dataclass(frozen=True)
class Catalog:
    """Entries plus the manifest location that relative paths resolve against."""

    manifest: Path
    entries: tuple[CatalogEntry, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def root(self) -> Path:
        return self.manifest.parent

    def resolve(self, entry: CatalogEntry | str) -> Path:
        if isinstance(entry, str):
            entry = self.get(entry)
        return (self.root / entry.path).resolve()

    def get(self, entry_id: str) -> CatalogEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)


def _check_unique(entries: Iterable[CatalogEntry]) -> None:
    seen: set[str] = set()
    for e in entries:
        if e.id in seen:
            raise DuplicateIdError(f"duplicate catalog id {e.id!r}")
        seen.add(e.id)


def _check_paths(root: Path, entry: CatalogEntry) -> None:
    if not (root / entry.path).is_file():
        raise DanglingPathError(f"entry {entry.id!r}: missing file {entry.path}")
    if entry.schema_path is not None and not (root / entry.schema_path).is_file():
        raise DanglingPathError(f"entry {entry.id!r}: missing schema {entry.schema_path}")


def load_manifest(path: str | os.PathLike) -> Catalog:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise ManifestParseError(f"manifest {path} lacks an 'entries' list")
    entries = tuple(CatalogEntry.from_json(e) for e in doc["entries"])
    _check_unique(entries)
    for e in entries:
        _check_paths(path.parent, e)
    return Catalog(path, entries)


def save_manifest(catalog: Catalog, path: str | os.PathLike | None = None) -> None:
    """Write the manifest atomically (temporary file, then rename)."""
    path = Path(path) if path is not None else catalog.manifest
    text = json.dumps({"entries": [e.to_json() for e in catalog.entries]}, indent=2) + "\n"
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise IoFailureError(f"cannot write manifest {path}: {exc}") from exc


def empty_catalog(path: str | os.PathLike) -> Catalog:
    return Catalog(Path(path), ())


def query(
    catalog: Catalog,
    kind: str | None = None,
    region: str | None = None,
    overlaps: tuple[dt.date, dt.date] | None = None,
) -> list[CatalogEntry]:
    """Entries matching every supplied filter, sorted by id.

    ``overlaps`` keeps entries whose closed time range intersects the given
    closed interval.
    """
    out = []
    for e in catalog.entries:
        if kind is not None and e.kind != kind:
            continue
        if region is not None and e.region != region:
            continue
        if overlaps is not None:
            lo, hi = overlaps
            if e.end < lo or e.start > hi:
                continue
        out.append(e)
    return sorted(out, key=lambda e: e.id)


def register_output(catalog: Catalog, entry: CatalogEntry) -> Catalog:
    """Append ``entry`` and rewrite the manifest. Returns the new catalog.

    Absolute entry paths are stored relative to the manifest directory when
    possible.
    """
    if any(e.id == entry.id for e in catalog.entries):
        raise DuplicateIdError(f"duplicate catalog id {entry.id!r}")
    root = catalog.root.resolve()
    entry = replace(entry, path=_relative(entry.path, root),
                    schema_path=None if entry.schema_path is None else _relative(entry.schema_path, root))
    _check_paths(root, entry)
    updated = Catalog(catalog.manifest, catalog.entries + (entry,))
    save_manifest(updated)
    return updated


def _relative(p: str, root: Path) -> str:
    pp = Path(p)
    if not pp.is_absolute():
        return pp.as_posix()
    try:
        return pp.resolve().relative_to(root).as_posix()
    except ValueError:
        return os.path.relpath(pp.resolve(), root).replace(os.sep, "/")


def bundled_catalog() -> Catalog:
    """The fixtures shipped with the package."""
    return load_manifest(_BUNDLED)
