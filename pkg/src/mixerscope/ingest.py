"""Readers and writers for the three input formats.

Transactions are JSON Lines, entity labels are a CSV with header
``address,entity,category`` and seed addresses are plain text, one per line.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, TextIO

COINBASE = "COINBASE"


class IngestError(ValueError):
    """Raised for malformed or invalid input records."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Category(str, enum.Enum):
    EXCHANGE = "Exchange"
    GAMBLING = "Gambling"
    MARKETPLACE = "Marketplace"
    MINING_POOL = "MiningPool"
    MIXER = "Mixer"
    SERVICE = "Service"
    TRADING = "Trading"
    EWALLET = "eWallet"
    RANSOMWARE = "Ransomware"
    OTHER = "Other"


@dataclass(frozen=True)
class TxRecord:
    txid: str
    inputs: tuple[tuple[str, int], ...]
    outputs: tuple[tuple[str, int], ...]
    timestamp: int = 0
    height: int = 0

    def validate(self) -> None:
        if not isinstance(self.txid, str) or not self.txid:
            raise IngestError("txid must be a non-empty string")
        for side in ("inputs", "outputs"):
            pairs = getattr(self, side)
            if not pairs:
                raise IngestError(f"tx {self.txid!r}: {side} must be non-empty")
            for addr, amount in pairs:
                if not isinstance(addr, str) or not addr:
                    raise IngestError(f"tx {self.txid!r}: empty address in {side}")
                if isinstance(amount, bool) or not isinstance(amount, int):
                    raise IngestError(f"tx {self.txid!r}: amount {amount!r} is not an integer")
                if amount < 0:
                    raise IngestError(f"tx {self.txid!r}: negative amount {amount}")
        for name in ("timestamp", "height"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise IngestError(f"tx {self.txid!r}: {name} must be an integer")

    def to_json(self) -> str:
        return json.dumps(
            {
                "txid": self.txid,
                "inputs": [[a, v] for a, v in self.inputs],
                "outputs": [[a, v] for a, v in self.outputs],
                "timestamp": self.timestamp,
                "height": self.height,
            },
            separators=(",", ":"),
        )


@dataclass
class LabelDirectory:
    entries: dict[str, tuple[str, Category]] = field(default_factory=dict)

    def lookup(self, address: str) -> tuple[str, Category] | None:
        return self.entries.get(address)

    def add(self, address: str, entity: str, category: Category | str) -> None:
        self.entries[address] = (entity, Category(category))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, address: object) -> bool:
        return address in self.entries

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["address", "entity", "category"])
        for address in sorted(self.entries):
            entity, category = self.entries[address]
            writer.writerow([address, entity, category.value])
        return buf.getvalue()


@dataclass(frozen=True)
class SeedSet:
    addresses: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.addresses)) != len(self.addresses):
            raise IngestError("duplicate seed address")

    def __len__(self) -> int:
        return len(self.addresses)

    def __iter__(self) -> Iterator[tuple[int, str]]:
        return iter(self.items())

    def items(self) -> list[tuple[int, str]]:
        """(seed_id, address) pairs; ids start at 1 in file order."""
        return [(i, a) for i, a in enumerate(self.addresses, start=1)]

    def id_of(self, address: str) -> int | None:
        return self._ids.get(address)

    @cached_property
    def _ids(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.addresses, start=1)}

    def to_text(self) -> str:
        return "".join(a + "\n" for a in self.addresses)


def _lines(stream: TextIO | str | Iterable[str]) -> Iterable[str]:
    if isinstance(stream, str):
        return stream.splitlines()
    return stream


def _pairs(raw, side: str, line: int) -> tuple[tuple[str, int], ...]:
    if not isinstance(raw, list):
        raise IngestError(f"{side} must be a list", line)
    out = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise IngestError(f"{side} entries must be [address, amount] pairs", line)
        out.append((item[0], item[1]))
    return tuple(out)


def parse_transactions(stream: TextIO | str | Iterable[str]) -> list[TxRecord]:
    records: list[TxRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"malformed JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise IngestError("record must be a JSON object", lineno)
        missing = {"txid", "inputs", "outputs"} - obj.keys()
        if missing:
            raise IngestError(f"missing field(s) {sorted(missing)}", lineno)
        rec = TxRecord(
            txid=obj["txid"],
            inputs=_pairs(obj["inputs"], "inputs", lineno),
            outputs=_pairs(obj["outputs"], "outputs", lineno),
            timestamp=obj.get("timestamp", 0),
            height=obj.get("height", 0),
        )
        try:
            rec.validate()
        except IngestError as exc:
            raise IngestError(str(exc), lineno) from None
        if rec.txid in seen:
            raise IngestError(f"duplicate txid {rec.txid!r}", lineno)
        seen.add(rec.txid)
        records.append(rec)
    return records


def dump_transactions(records: Iterable[TxRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def parse_labels(stream: TextIO | str | Iterable[str]) -> LabelDirectory:
    reader = csv.reader(_lines(stream))
    directory = LabelDirectory()
    header = next(reader, None)
    if header is None:
        return directory
    if [h.strip() for h in header] != ["address", "entity", "category"]:
        raise IngestError(f"expected header address,entity,category, got {header}", 1)
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise IngestError(f"expected 3 columns, got {len(row)}", lineno)
        address, entity, category = (cell.strip() for cell in row)
        if not address:
            raise IngestError("empty address", lineno)
        try:
            cat = Category(category)
        except ValueError:
            raise IngestError(f"unknown category {category!r}", lineno) from None
        directory.entries[address] = (entity, cat)
    return directory


def parse_seeds(stream: TextIO | str | Iterable[str]) -> SeedSet:
    addresses: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_lines(stream), start=1):
        address = line.strip()
        if not address or address.startswith("#"):
            continue
        if address in seen:
            raise IngestError(f"duplicate seed address {address!r}", lineno)
        seen.add(address)
        addresses.append(address)
    return SeedSet(tuple(addresses))
