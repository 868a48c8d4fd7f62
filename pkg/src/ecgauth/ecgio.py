"""Reading and writing ECG record files and record manifests.

Record container is a line-oriented UTF-8 CSV:

    fs_hz,<int>
    subject,<id>
    session,<id>
    n,adc
    0,<int>
    1,<int>
    ...

Sample indices start at 0 and increase strictly by 1. ADC values are signed
integers; downstream math promotes to floating point at segmentation time.

A manifest is a CSV with header ``subject,session,path,role`` where role is
one of enroll, test, intruder-pool, population. Paths are resolved relative
to the manifest's own directory.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractError, FormatError, ParseError

ROLES = ("enroll", "test", "intruder-pool", "population")
MANIFEST_HEADER = ("subject", "session", "path", "role")


@dataclass
class EcgRecord:
    """A sampled single-lead ECG with provenance metadata."""

    subject_id: str
    session_id: str
    fs: int
    samples: np.ndarray

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.fs

    def validate(self) -> None:
        if not isinstance(self.fs, int) or self.fs <= 0:
            raise ContractError(f"fs must be a positive integer, got {self.fs!r}")
        if len(self.samples) == 0:
            raise ContractError("record has no samples")
        for field_name, value in (("subject", self.subject_id), ("session", self.session_id)):
            if "\n" in value or "\r" in value:
                raise ContractError(f"{field_name} id contains a line break")


def _header_value(line: str, key: str, lineno: int) -> str:
    name, sep, value = line.rstrip("\n").partition(",")
    if not sep or name != key:
        raise FormatError(f"line {lineno}: expected '{key},<value>', got {line.rstrip()!r}")
    return value


def iter_samples(path: str | os.PathLike) -> Iterator[int]:
    """Yield ADC values one by one without materializing the record.

    Validates the header and the sample index sequence as it goes; raises
    ParseError with the offending line number on malformed rows.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        _read_header(fh)
        yield from _iter_rows(fh)


def _read_header(fh) -> tuple[int, str, str]:
    lines = [fh.readline() for _ in range(4)]
    if any(line == "" for line in lines):
        raise FormatError("file truncated before the 4-line header ends")
    fs_text = _header_value(lines[0], "fs_hz", 1)
    try:
        fs = int(fs_text)
    except ValueError:
        raise FormatError(f"line 1: fs_hz value {fs_text!r} is not an integer") from None
    if fs <= 0:
        raise FormatError(f"line 1: fs_hz must be positive, got {fs}")
    subject = _header_value(lines[1], "subject", 2)
    session = _header_value(lines[2], "session", 3)
    if lines[3].rstrip("\n") != "n,adc":
        raise FormatError(f"line 4: expected 'n,adc', got {lines[3].rstrip()!r}")
    return fs, subject, session


def _iter_rows(fh) -> Iterator[int]:
    expected = 0
    for lineno, line in enumerate(fh, start=5):
        text = line.rstrip("\n")
        if text == "":
            raise ParseError(f"line {lineno}: blank sample row")
        n_text, sep, adc_text = text.partition(",")
        if not sep:
            raise ParseError(f"line {lineno}: expected '<n>,<adc>', got {text!r}")
        try:
            n = int(n_text)
            adc = int(adc_text)
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer field in {text!r}") from None
        if n != expected:
            raise ParseError(f"line {lineno}: sample index {n}, expected {expected}")
        expected += 1
        yield adc


def read_record(path: str | os.PathLike) -> EcgRecord:
    """Parse one record file into an EcgRecord."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        fs, subject, session = _read_header(fh)
        samples = np.fromiter(_iter_rows(fh), dtype=np.int64)
    return EcgRecord(subject_id=subject, session_id=session, fs=fs, samples=samples)


def write_record(record: EcgRecord, path: str | os.PathLike) -> None:
    """Write the canonical CSV form; read_record inverts it byte for byte."""
    record.validate()
    samples = np.asarray(record.samples)
    if not np.issubdtype(samples.dtype, np.integer):
        raise ContractError(f"samples must be integers, got dtype {samples.dtype}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"fs_hz,{record.fs}\n")
        fh.write(f"subject,{record.subject_id}\n")
        fh.write(f"session,{record.session_id}\n")
        fh.write("n,adc\n")
        fh.writelines(f"{n},{v}\n" for n, v in enumerate(samples.tolist()))


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    session_id: str
    path: str  # absolute, resolved against the manifest directory
    role: str


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    """Load and validate a manifest.

    Enforces header shape, known roles, uniqueness of (subject, session)
    pairs, and that every referenced record file exists.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries: list[ManifestEntry] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("manifest is empty") from None
        if tuple(header) != MANIFEST_HEADER:
            raise FormatError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(f"line {lineno}: expected 4 fields, got {len(row)}")
            subject, session, rel_path, role = row
            if role not in ROLES:
                raise ParseError(f"line {lineno}: unknown role {role!r}")
            key = (subject, session)
            if key in seen:
                raise ParseError(f"line {lineno}: duplicate (subject, session) pair {key}")
            seen.add(key)
            full = rel_path if os.path.isabs(rel_path) else os.path.join(base, rel_path)
            if not os.path.isfile(full):
                raise ParseError(f"line {lineno}: record file not found: {rel_path}")
            entries.append(ManifestEntry(subject, session, full, role))
    return entries


def write_manifest(rows: Iterable, path: str | os.PathLike) -> None:
    """Write manifest rows, ManifestEntry or plain 4-tuples; paths as given."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for row in rows:
            if isinstance(row, ManifestEntry):
                subject, session, rel_path, role = (row.subject_id, row.session_id,
                                                    row.path, row.role)
            else:
                subject, session, rel_path, role = row
            if role not in ROLES:
                raise ContractError(f"unknown role {role!r}")
            writer.writerow((subject, session, rel_path, role))
