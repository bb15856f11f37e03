"""Scanning: one-shot inference over a bundle, plus the REST front-end.

POST /api/v1/scan       {"bytecode": "<hex>"} or {"address": ..., "network": ...}
GET  /api/v1/health     liveness + model version
GET  /api/v1/model      bundle metadata (version, vocabulary, encoding hash)

Error mapping: 400 malformed hex / bad request shape, 404 address without
code, 422 oversize bytecode, 503 upstream fetch failure (network, rate
limit, missing credential).
"""

import hashlib
import time
from dataclasses import dataclass
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .bundle import ModelBundle
from .encoder import encode_bytecode
from .errors import (
    AuthMissingError,
    BytecodeTooLargeError,
    FetchError,
    HexInputError,
    NetworkError,
    NotFoundError,
    RateLimitedError,
    ScanRequestError,
)
from .ingest import EtherscanClient, parse_hex
from .training import two_stage_infer


@dataclass(frozen=True)
class ScanRequest:
    bytecode: Optional[str] = None
    address: Optional[str] = None
    network: str = "mainnet"

    def __post_init__(self):
        if (self.bytecode is None) == (self.address is None):
            raise ScanRequestError(
                "provide exactly one of 'bytecode' or 'address'"
            )


@dataclass(frozen=True)
class LabelResult:
    name: str
    confidence: float
    flagged: bool


@dataclass(frozen=True)
class ScanReport:
    input_digest: str
    is_buggy: float
    labels: tuple[LabelResult, ...]
    model_version: str
    encoding_hash: str
    elapsed_ms: float

    def to_json_dict(self) -> dict:
        return {
            "input_digest": self.input_digest,
            "is_buggy": self.is_buggy,
            "labels": [
                {"name": l.name, "confidence": l.confidence, "flagged": l.flagged}
                for l in self.labels
            ],
            "model_version": self.model_version,
            "encoding_hash": self.encoding_hash,
            "elapsed_ms": self.elapsed_ms,
        }


def scan(
    bundle: ModelBundle,
    request: ScanRequest,
    threshold: float = 0.5,
    client: Optional[EtherscanClient] = None,
) -> ScanReport:
    """Normalize input, encode, run the two-stage gate, report per label."""
    t0 = time.perf_counter()
    if request.bytecode is not None:
        code = parse_hex(request.bytecode)
    else:
        if client is None:
            client = EtherscanClient(network=request.network)
        code = client.fetch_bytecode(request.address)
    tensor = encode_bytecode(code, bundle.encoding)
    is_buggy, confidences = two_stage_infer(
        bundle.binary_model(), bundle.multilabel_model(), tensor, threshold
    )
    labels = tuple(
        LabelResult(name=name, confidence=float(c), flagged=bool(c >= threshold))
        for name, c in zip(bundle.vocabulary.names, confidences)
    )
    return ScanReport(
        input_digest=hashlib.sha256(code).hexdigest(),
        is_buggy=is_buggy,
        labels=labels,
        model_version=bundle.version(),
        encoding_hash=bundle.encoding.hash(),
        elapsed_ms=(time.perf_counter() - t0) * 1000.0,
    )


def create_app(
    bundle: ModelBundle,
    threshold: float = 0.5,
    client: Optional[EtherscanClient] = None,
):
    """FastAPI app serving the bundle; the model is immutable while serving."""
    app = FastAPI(title="bytehue", version="0.1.0")

    def error_response(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(
            status_code=status, content={"error": code, "message": message}
        )

    _STATUS = [
        (BytecodeTooLargeError, 422),
        (HexInputError, 400),
        (ScanRequestError, 400),
        (NotFoundError, 404),
        (AuthMissingError, 503),
        (RateLimitedError, 503),
        (NetworkError, 503),
        (FetchError, 503),
    ]

    def map_error(exc: Exception) -> JSONResponse:
        for etype, status in _STATUS:
            if isinstance(exc, etype):
                return error_response(status, type(exc).__name__, str(exc))
        raise exc

    @app.post("/api/v1/scan")
    async def scan_endpoint(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error_response(400, "BadJson", "request body must be JSON")
        try:
            req = ScanRequest(
                bytecode=body.get("bytecode"),
                address=body.get("address"),
                network=body.get("network", "mainnet"),
            )
            report = scan(bundle, req, threshold=threshold, client=client)
        except Exception as exc:  # noqa: BLE001 - mapped to HTTP statuses
            return map_error(exc)
        return report.to_json_dict()

    @app.get("/api/v1/health")
    async def health():
        return {"status": "ok", "model_version": bundle.version()}

    @app.get("/api/v1/model")
    async def model_info():
        return {
            "model_version": bundle.version(),
            "created_at": bundle.created_at.isoformat(),
            "vocabulary": list(bundle.vocabulary.names),
            "vocabulary_version": bundle.vocabulary.version,
            "encoding_hash": bundle.encoding.hash(),
            "binary_net": bundle.binary_net.name,
            "multilabel_net": bundle.multilabel_net.name,
        }

    return app


def serve(bundle: ModelBundle, bind_address: str = "127.0.0.1:8330", **kwargs) -> None:
    import uvicorn

    host, _, port = bind_address.rpartition(":")
    app = create_app(bundle, **kwargs)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
