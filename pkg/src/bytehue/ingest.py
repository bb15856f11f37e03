"""Acquire, normalize, label and persist contract bytecode samples.

Covers local hex input, the etherscan-compatible HTTP client used for
crawling/fetching, dataset splitting and the line-delimited dataset file
format (schema "bytehue-ds/1").
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Iterator, Optional, Sequence

import requests

from .errors import (
    AuthMissingError,
    BytecodeTooLargeError,
    CorruptRecordError,
    DegenerateSplitError,
    EmptyBytecodeError,
    EmptyDatasetError,
    NetworkError,
    NonHexCharacterError,
    NotFoundError,
    OddLengthError,
    RateLimitedError,
    SchemaVersionMismatchError,
    UnknownLabelError,
)

# Twice the EVM runtime-code cap (EIP-170's 24,576 bytes), so creation
# bytecode is admitted too.
MAX_CODE_SIZE = 49_152

DATASET_SCHEMA = "bytehue-ds/1"

API_KEY_ENV = "BYTEHUE_ETHERSCAN_KEY"

_HEX_DIGITS = set("0123456789abcdefABCDEF")

# The seven bug names enumerated in the Solidity compiler-bug vocabulary we
# ship by default; the full list is user-suppliable via a vocabulary file.
DEFAULT_BUG_NAMES = (
    "optimizerStateKnowledgeNotResetForJumpdest",
    "ArrayAccessCleanHigherOrderBits",
    "AncientCompiler",
    "SolidFunSelectSelector",
    "DelegateCallReturnValue",
    "ECRecoverMalformedInput",
    "SkipEmptyStringLiteral",
)

SPLITS = ("train", "val", "test")


def parse_hex(text: str, max_code_size: int = MAX_CODE_SIZE) -> bytes:
    """Normalize raw hex input (optional 0x prefix, embedded whitespace) to bytes."""
    stripped = "".join(text.split())
    if stripped[:2] in ("0x", "0X"):
        stripped = stripped[2:]
    if not stripped:
        raise EmptyBytecodeError("no hex digits in input")
    for i, ch in enumerate(stripped):
        if ch not in _HEX_DIGITS:
            raise NonHexCharacterError(i, ch)
    if len(stripped) % 2 != 0:
        raise OddLengthError(f"{len(stripped)} hex digits (odd)")
    code = bytes.fromhex(stripped)
    if len(code) > max_code_size:
        raise BytecodeTooLargeError(len(code), max_code_size)
    return code


def to_hex_string(code: bytes) -> str:
    """Lowercase hex without 0x prefix; inverse of parse_hex."""
    return code.hex()


@dataclass(frozen=True)
class LabelVocabulary:
    names: tuple[str, ...]
    version: str = "default-7"

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("vocabulary names must be unique")
        if any(not n for n in self.names):
            raise ValueError("vocabulary names must be non-empty")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownLabelError(name) from None


DEFAULT_VOCABULARY = LabelVocabulary(DEFAULT_BUG_NAMES)


@dataclass(frozen=True)
class ContractRecord:
    bytecode: bytes
    labels: tuple[int, ...]
    source: str = "file"  # etherscan | file | synthetic
    address: Optional[str] = None
    observed_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )

    def __post_init__(self):
        if len(self.bytecode) < 1:
            raise ValueError("bytecode must be non-empty")
        if any(v not in (0, 1) for v in self.labels):
            raise ValueError("labels must be 0/1")

    @property
    def is_buggy(self) -> bool:
        return any(self.labels)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ContractRecord, ...]
    vocabulary: LabelVocabulary
    split: tuple[Optional[str], ...] = ()

    def __post_init__(self):
        if not self.split:
            object.__setattr__(self, "split", (None,) * len(self.records))
        if len(self.split) != len(self.records):
            raise ValueError("split assignment length must match records")
        for rec in self.records:
            if len(rec.labels) != len(self.vocabulary):
                raise ValueError("record label arity does not match vocabulary")

    def subset(self, split_name: str) -> tuple[ContractRecord, ...]:
        return tuple(
            r for r, s in zip(self.records, self.split) if s == split_name
        )


def label_record(
    record: ContractRecord,
    bug_names: Sequence[str],
    vocab: LabelVocabulary,
) -> ContractRecord:
    """Return a copy of record with 1s exactly at the named vocabulary indices."""
    labels = [0] * len(vocab)
    for name in bug_names:
        labels[vocab.index(name)] = 1
    return replace(record, labels=tuple(labels))


def split_dataset(
    manifest: DatasetManifest,
    mode: str = "random",
    seed: int = 0,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    boundary: Optional[datetime] = None,
) -> DatasetManifest:
    """Assign every record to exactly one of train/val/test.

    mode="random" shuffles deterministically from the seed, stratified on
    "any label set vs none"; mode="temporal" puts records observed before
    the boundary into train and the rest into test.
    """
    n = len(manifest.records)
    if n == 0:
        raise EmptyDatasetError("cannot split an empty dataset")

    assignment: list[Optional[str]] = [None] * n
    if mode == "random":
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError("ratios must sum to 1")
        import numpy as np

        rng = np.random.default_rng(seed)
        for stratum in (True, False):
            idx = [i for i, r in enumerate(manifest.records) if r.is_buggy is stratum]
            if not idx:
                continue
            order = rng.permutation(len(idx))
            n_train = round(ratios[0] * len(idx))
            n_val = round(ratios[1] * len(idx))
            for rank, j in enumerate(order):
                if rank < n_train:
                    name = "train"
                elif rank < n_train + n_val:
                    name = "val"
                else:
                    name = "test"
                assignment[idx[j]] = name
    elif mode == "temporal":
        if boundary is None:
            raise ValueError("temporal mode requires a boundary")
        for i, rec in enumerate(manifest.records):
            assignment[i] = "train" if rec.observed_at < boundary else "test"
    else:
        raise ValueError(f"unknown split mode {mode!r}")

    counts = {s: assignment.count(s) for s in ("train", "test")}
    if counts["train"] == 0 or counts["test"] == 0:
        raise DegenerateSplitError(f"split produced empty partitions: {counts}")
    return replace(manifest, split=tuple(assignment))


# --- dataset file format -------------------------------------------------


def save_dataset(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    """Write UTF-8 line-delimited JSON: header line, then one record per line."""
    header = {
        "schema": DATASET_SCHEMA,
        "vocabulary": list(manifest.vocabulary.names),
        "version": manifest.vocabulary.version,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec, split in zip(manifest.records, manifest.split):
            row = {
                "bytecode": to_hex_string(rec.bytecode),
                "labels": list(rec.labels),
                "source": rec.source,
                "observed_at": rec.observed_at.isoformat(),
            }
            if rec.address is not None:
                row["address"] = rec.address
            if split is not None:
                row["split"] = split
            fh.write(json.dumps(row) + "\n")


def load_dataset(path: str | os.PathLike) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].strip():
        raise CorruptRecordError(1, "missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptRecordError(1, f"bad header: {exc}") from exc
    if header.get("schema") != DATASET_SCHEMA:
        raise SchemaVersionMismatchError(
            f"expected {DATASET_SCHEMA}, got {header.get('schema')!r}"
        )
    vocab = LabelVocabulary(
        tuple(header["vocabulary"]), header.get("version", "unknown")
    )
    records: list[ContractRecord] = []
    splits: list[Optional[str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue  # trailing newline
        try:
            row = json.loads(line)
            rec = ContractRecord(
                bytecode=bytes.fromhex(row["bytecode"]),
                labels=tuple(int(v) for v in row["labels"]),
                source=row["source"],
                address=row.get("address"),
                observed_at=datetime.fromisoformat(row["observed_at"]),
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CorruptRecordError(lineno, str(exc)) from exc
        records.append(rec)
        splits.append(row.get("split"))
    return DatasetManifest(tuple(records), vocab, tuple(splits))


# --- etherscan-compatible client ------------------------------------------


class EtherscanClient:
    """Paginated client for an etherscan-compatible JSON API.

    The credential comes from the BYTEHUE_ETHERSCAN_KEY environment variable
    unless passed explicitly; base_url is overridable so tests can point at
    a local mock server.
    """

    def __init__(
        self,
        api_key: Optional[str] = None,
        base_url: str = "https://api.etherscan.io/api",
        network: str = "mainnet",
        requests_per_second: float = 4.0,
        max_retries: int = 4,
        backoff_base: float = 0.25,
        timeout: float = 15.0,
    ):
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.base_url = base_url
        self.network = network
        self.requests_per_second = requests_per_second
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._session = requests.Session()
        self._last_request = 0.0

    def _throttle(self) -> None:
        min_gap = 1.0 / self.requests_per_second
        wait = self._last_request + min_gap - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()

    def _get(self, params: dict) -> dict:
        if not self.api_key:
            raise AuthMissingError(f"set {API_KEY_ENV} or pass api_key")
        params = dict(params, apikey=self.api_key)
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            self._throttle()
            try:
                resp = self._session.get(
                    self.base_url, params=params, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise NetworkError(str(exc)) from exc
            if resp.status_code == 429 or self._is_rate_limit_body(resp):
                last_exc = RateLimitedError("rate limited by upstream")
                time.sleep(self.backoff_base * (2 ** attempt))
                continue
            if resp.status_code != 200:
                raise NetworkError(f"HTTP {resp.status_code} from upstream")
            try:
                return resp.json()
            except ValueError as exc:
                raise NetworkError(f"non-JSON response: {exc}") from exc
        raise last_exc or RateLimitedError("retries exhausted")

    @staticmethod
    def _is_rate_limit_body(resp: requests.Response) -> bool:
        try:
            body = resp.json()
        except ValueError:
            return False
        result = body.get("result")
        return isinstance(result, str) and "rate limit" in result.lower()

    def fetch_bytecode(self, address: str) -> bytes:
        """Deployed runtime bytecode for an address (eth_getCode proxy call)."""
        body = self._get(
            {
                "module": "proxy",
                "action": "eth_getCode",
                "address": address,
                "tag": "latest",
            }
        )
        code_hex = body.get("result")
        if not isinstance(code_hex, str):
            raise NetworkError(f"unexpected response shape: {body!r}")
        if code_hex in ("0x", ""):
            raise NotFoundError(f"no code at {address}")
        return parse_hex(code_hex)

    def crawl_verified(
        self,
        page_range: Iterable[int],
        page_size: int = 10,
        vocabulary: LabelVocabulary = DEFAULT_VOCABULARY,
    ) -> Iterator[ContractRecord]:
        """Stream records of verified contracts, deduplicated by address.

        Labels are left all-zero; ground truth is applied afterwards via
        label_record from an external mapping.
        """
        seen: set[str] = set()
        for page in page_range:
            body = self._get(
                {
                    "module": "contract",
                    "action": "listverified",
                    "page": page,
                    "offset": page_size,
                }
            )
            entries = body.get("result") or []
            if not isinstance(entries, list):
                raise NetworkError(f"unexpected page payload: {body!r}")
            for entry in entries:
                address = entry.get("Address") or entry.get("address")
                if not address or address.lower() in seen:
                    continue
                seen.add(address.lower())
                code = self.fetch_bytecode(address)
                yield ContractRecord(
                    bytecode=code,
                    labels=(0,) * len(vocabulary),
                    source="etherscan",
                    address=address,
                    observed_at=datetime.now(timezone.utc),
                )
