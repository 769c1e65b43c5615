"""The victim boundary: a trained model behind its private scaler.

The attack only ever sees raw query rows going in and probability vectors
coming out, either through :class:`InProcessVictim` or over HTTP through
:func:`serve` and :class:`RemoteVictim`. Both paths share :func:`respond`, so
their answers agree bit for bit.
"""
from __future__ import annotations

import base64
import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import nn
from .data import (
    EncodingMap,
    TabularDataset,
    encode,
    records_to_rows,
    schema_from_dicts,
    schema_to_dicts,
)
from .errors import (
    InvalidArgumentError,
    MissingFileError,
    RejectedQueryError,
    SchemaMismatchError,
    ServiceStartupError,
    TempestError,
    TransportError,
    UnknownCategoryError,
)
from .querygen import GENERATED, QueryBatch
from .scaling import Scaler, fit_encoded, transform

log = logging.getLogger(__name__)

DEPLOYMENT_FORMAT = "tempest-victim-deployment"
DEPLOYMENT_VERSION = 1


@dataclass(frozen=True, eq=False)
class VictimDeployment:
    model: nn.MlpModel
    scaler: Scaler
    schema: tuple
    class_names: tuple
    response_mode: str = "soft"
    allow_prenormalized: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.response_mode not in ("soft", "hard"):
            raise InvalidArgumentError(f"unknown response mode {self.response_mode!r}")
        width = self.encoding.width
        if self.scaler.arity != width or self.model.in_dim != width:
            raise InvalidArgumentError("scaler/model arity must equal the encoded width")
        if self.model.out_dim != len(self.class_names):
            raise InvalidArgumentError("model output width must equal the class count")

    @property
    def encoding(self) -> EncodingMap:
        return EncodingMap.from_schema(self.schema)

    def public_schema(self) -> dict:
        """What a prediction service documents: input format and classes, nothing else."""
        return {
            "features": schema_to_dicts(self.schema),
            "class_names": list(self.class_names),
            "response_mode": self.response_mode,
        }


VICTIM_TRAIN = nn.TrainConfig(batch_size=8, target_mode="hard")


def train_victim(dataset: TabularDataset, scaler_kind: str = "standard",
                 config: nn.TrainConfig = VICTIM_TRAIN,
                 hidden_dim: int = 90, response_mode: str = "soft") -> VictimDeployment:
    """Fit the private scaler on the training rows and train the model on their encodings."""
    if len(dataset) == 0:
        raise InvalidArgumentError("victim training set is empty")
    X, enc = encode(dataset)
    scaler = fit_encoded(scaler_kind, X, enc)
    model = nn.init_model(enc.width, hidden_dim, dataset.n_classes, seed=config.seed)
    model = nn.train(model, transform(scaler, X), dataset.labels, config)
    return VictimDeployment(model=model, scaler=scaler, schema=tuple(dataset.schema),
                            class_names=tuple(dataset.class_names), response_mode=response_mode,
                            metadata={"scaler_kind": scaler.kind, "train_rows": len(dataset),
                                      **model.metadata})


def _check_batch_schema(deployment, batch):
    theirs = [(f.name, f.kind) for f in batch.schema]
    ours = [(f.name, f.kind) for f in deployment.schema]
    if theirs != ours:
        raise RejectedQueryError("query rows do not follow the service schema")


def respond(deployment: VictimDeployment, batch: QueryBatch) -> np.ndarray:
    """Encode, privately normalize, and run the model on a batch of raw rows."""
    _check_batch_schema(deployment, batch)
    if batch.is_prenormalized and deployment.allow_prenormalized:
        Z = np.asarray(batch.prenormalized, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != deployment.encoding.width:
            raise RejectedQueryError("pre-normalized rows have the wrong width")
    else:
        try:
            X = deployment.encoding.encode(batch.numeric, batch.categorical)
        except UnknownCategoryError as exc:
            raise RejectedQueryError(str(exc)) from exc
        Z = transform(deployment.scaler, X)
    probs = nn.predict_proba(deployment.model, Z)
    if deployment.response_mode == "hard":
        hard = np.zeros_like(probs)
        hard[np.arange(len(probs)), np.argmax(probs, axis=1)] = 1.0
        return hard
    return probs


class VictimAccess:
    """Query handle with client-side counters.

    ``queries`` counts rows charged to the attack budget; ``rows_sent`` counts
    every row, including evaluation traffic sent with ``count=False``.
    Neither is ever reset.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._queries = 0
        self._rows_sent = 0

    @property
    def queries(self) -> int:
        return self._queries

    @property
    def rows_sent(self) -> int:
        return self._rows_sent

    def query(self, batch: QueryBatch, count: bool = True) -> np.ndarray:
        probs = self._predict(batch)
        with self._lock:
            self._rows_sent += len(batch)
            if count:
                self._queries += len(batch)
        return probs

    def schema_info(self) -> dict:
        raise NotImplementedError

    @property
    def class_names(self) -> tuple:
        return tuple(self.schema_info()["class_names"])

    @property
    def schema(self) -> tuple:
        return schema_from_dicts(self.schema_info()["features"])

    def _predict(self, batch):
        raise NotImplementedError


class InProcessVictim(VictimAccess):
    def __init__(self, deployment: VictimDeployment):
        super().__init__()
        self._deployment = deployment

    def schema_info(self) -> dict:
        return self._deployment.public_schema()

    def _predict(self, batch):
        return respond(self._deployment, batch)


# -- wire format -------------------------------------------------------------

def encode_request(batch: QueryBatch) -> bytes:
    body = {"rows": batch.records()}
    if batch.is_prenormalized:
        body["prenormalized"] = np.asarray(batch.prenormalized).tolist()
    # json writes floats with repr(), the shortest string that round-trips exactly
    return json.dumps(body, allow_nan=False, separators=(",", ":")).encode()


def decode_request(schema, payload: bytes) -> QueryBatch:
    try:
        body = json.loads(payload)
    except (ValueError, UnicodeDecodeError) as exc:
        raise RejectedQueryError(f"request body is not JSON: {exc}") from exc
    if not isinstance(body, dict) or not isinstance(body.get("rows"), list):
        raise RejectedQueryError("request body must be an object with a 'rows' list")
    try:
        numeric, categorical = records_to_rows(schema, body["rows"])
    except SchemaMismatchError as exc:
        raise RejectedQueryError(str(exc)) from exc
    pre = body.get("prenormalized")
    if pre is not None:
        pre = np.asarray(pre, dtype=np.float64)
        if pre.ndim != 2 or pre.shape[0] != numeric.shape[0] or not np.all(np.isfinite(pre)):
            raise RejectedQueryError("malformed pre-normalized rows")
    return QueryBatch(tuple(schema), numeric, categorical,
                      np.full(numeric.shape[0], GENERATED, dtype=object), prenormalized=pre)


class _Handler(BaseHTTPRequestHandler):
    server_version = "tempest-victim/1"

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status, doc):
        data = json.dumps(doc, allow_nan=False, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        svc = self.server.service
        svc._log_request("GET", self.path)
        if self.path == "/health":
            self._send(200, {"status": "ok"})
        elif self.path == "/schema":
            self._send(200, svc.deployment.public_schema())
        elif self.path == "/metrics":
            self._send(200, svc.metrics())
        else:
            self._send(404, {"error": "not-found", "detail": self.path})

    def do_POST(self):
        svc = self.server.service
        svc._log_request("POST", self.path)
        if self.path != "/predict":
            self._send(404, {"error": "not-found", "detail": self.path})
            return
        length = int(self.headers.get("Content-Length") or 0)
        payload = self.rfile.read(length)
        try:
            batch = decode_request(svc.deployment.schema, payload)
            probs = respond(svc.deployment, batch)
        except RejectedQueryError as exc:
            self._send(400, {"error": "rejected-query", "detail": str(exc)})
            return
        except TempestError as exc:
            self._send(500, {"error": "internal", "detail": str(exc)})
            return
        svc._count(self.headers.get("X-Session-Id", "anonymous"), len(batch))
        self._send(200, {"probabilities": probs.tolist()})


class VictimService:
    """A running HTTP prediction service; use as a context manager or call :meth:`close`."""

    def __init__(self, deployment: VictimDeployment, host: str = "127.0.0.1", port: int = 0):
        self.deployment = deployment
        self._lock = threading.Lock()
        self._sessions: dict = {}
        self.requests: list = []
        try:
            self._server = ThreadingHTTPServer((host, port), _Handler)
        except OSError as exc:
            raise ServiceStartupError(f"cannot bind {host}:{port}: {exc}") from exc
        self._server.daemon_threads = True
        self._server.service = self
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def address(self):
        return self._server.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def _log_request(self, method, path):
        with self._lock:
            self.requests.append((method, path))

    def _count(self, session, n):
        with self._lock:
            self._sessions[session] = self._sessions.get(session, 0) + n

    def metrics(self) -> dict:
        with self._lock:
            return {"total_queries": sum(self._sessions.values()), "sessions": dict(self._sessions)}

    def close(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def serve_forever(self):
        """Block the calling thread until interrupted."""
        try:
            while self._thread.is_alive():
                self._thread.join(0.5)
        except KeyboardInterrupt:
            pass
        finally:
            self.close()


def serve(deployment: VictimDeployment, address: str = "127.0.0.1:0") -> VictimService:
    host, _, port = address.rpartition(":")
    try:
        return VictimService(deployment, host or "127.0.0.1", int(port or 0))
    except ValueError as exc:
        raise ServiceStartupError(f"bad address {address!r}") from exc


class RemoteVictim(VictimAccess):
    """HTTP client for a victim service.

    ``/predict`` is idempotent, so transport failures and 5xx answers are
    retried up to ``retries`` times with exponential backoff; 4xx answers
    raise :class:`RejectedQueryError` at once.
    """

    def __init__(self, url: str, session: str = "attack", retries: int = 3, backoff: float = 0.05,
                 timeout: float = 30.0, max_rows: int = 2000):
        super().__init__()
        self.url = url.rstrip("/")
        self.session = session
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.max_rows = max_rows
        self._schema_info = None

    def _request(self, method, path, data=None):
        req = urllib.request.Request(self.url + path, data=data, method=method,
                                     headers={"Content-Type": "application/json",
                                              "X-Session-Id": self.session})
        last = None
        for attempt in range(self.retries + 1):
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read())
            except urllib.error.HTTPError as exc:
                body = exc.read().decode(errors="replace")
                if 400 <= exc.code < 500:
                    raise RejectedQueryError(f"{exc.code}: {body}") from exc
                last = exc
            except (urllib.error.URLError, ConnectionError, TimeoutError) as exc:
                last = exc
            if attempt < self.retries:
                time.sleep(self.backoff * 2 ** attempt)
        raise TransportError(f"{method} {path} failed after {self.retries + 1} attempts: {last}")

    def schema_info(self) -> dict:
        if self._schema_info is None:
            self._schema_info = self._request("GET", "/schema")
        return self._schema_info

    def health(self) -> dict:
        return self._request("GET", "/health")

    def _predict(self, batch):
        out = []
        for start in range(0, len(batch), self.max_rows):
            part = batch.subset(np.arange(start, min(start + self.max_rows, len(batch))))
            doc = self._request("POST", "/predict", encode_request(part))
            out.append(np.asarray(doc["probabilities"], dtype=np.float64))
        return np.concatenate(out) if out else np.empty((0, len(self.class_names)))


# -- deployment files --------------------------------------------------------

def deployment_to_dict(dep: VictimDeployment) -> dict:
    return {
        "format": DEPLOYMENT_FORMAT,
        "version": DEPLOYMENT_VERSION,
        "schema": schema_to_dicts(dep.schema),
        "class_names": list(dep.class_names),
        "encoding": dep.encoding.to_dicts(),
        "scaler": dep.scaler.to_dict(),
        "response_mode": dep.response_mode,
        "allow_prenormalized": dep.allow_prenormalized,
        "metadata": dep.metadata,
        "model": base64.b64encode(nn.model_to_bytes(dep.model)).decode("ascii"),
    }


def deployment_from_dict(doc: dict) -> VictimDeployment:
    if doc.get("format") != DEPLOYMENT_FORMAT:
        raise InvalidArgumentError("not a victim deployment document")
    if doc.get("version") != DEPLOYMENT_VERSION:
        raise InvalidArgumentError(f"unsupported deployment version {doc.get('version')}")
    dep = VictimDeployment(
        model=nn.model_from_bytes(base64.b64decode(doc["model"])),
        scaler=Scaler.from_dict(doc["scaler"]),
        schema=schema_from_dicts(doc["schema"]),
        class_names=tuple(doc["class_names"]),
        response_mode=doc.get("response_mode", "soft"),
        allow_prenormalized=bool(doc.get("allow_prenormalized", False)),
        metadata=dict(doc.get("metadata") or {}),
    )
    if dep.encoding.to_dicts() != doc.get("encoding", dep.encoding.to_dicts()):
        raise InvalidArgumentError("stored encoding map disagrees with the schema")
    return dep


def deployment_to_bytes(dep: VictimDeployment) -> bytes:
    return json.dumps(deployment_to_dict(dep), allow_nan=False, indent=1).encode() + b"\n"


def save_deployment(dep: VictimDeployment, path) -> None:
    Path(path).write_bytes(deployment_to_bytes(dep))


def load_deployment(path) -> VictimDeployment:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"deployment file not found: {path}")
    try:
        doc = json.loads(path.read_bytes())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path} is not JSON: {exc}") from None
    return deployment_from_dict(doc)


def with_response_mode(dep: VictimDeployment, mode: str) -> VictimDeployment:
    return replace(dep, response_mode=mode)
