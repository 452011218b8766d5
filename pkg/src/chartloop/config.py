"""Service and backend configuration.

Backends are declared per vendor in the config file; a ``script`` entry
selects the bundled deterministic mock, an ``endpoint`` entry selects the
generic HTTP adapter whose API key comes from the environment variable
``CHARTLOOP_API_KEY_<VENDOR>``. Auth is a static bearer-token-to-role map,
optionally extended by ``CHARTLOOP_TOKEN`` (granted admin).
"""

from __future__ import annotations

import json
import os
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from chartloop.errors import ConfigError
from chartloop.gateway.backend import (
    BackendRequest,
    BackendResponse,
    MockBackend,
    TransportError,
    token_estimate,
)
from chartloop.gateway.records import Vendor

CONFIG_FORMAT = "chartloop-config/1"


class Role(Enum):
    REVIEWER = "reviewer"
    ENGINEER = "engineer"
    ADMIN = "admin"


# Rubric acceptance writes require one of these.
ACCEPTANCE_ROLES = frozenset({Role.REVIEWER, Role.ADMIN})


@dataclass(frozen=True)
class BackendConfig:
    vendor: Vendor
    model_name: str
    script: Optional[str] = None  # path to a mock script file
    endpoint: Optional[str] = None  # URL for the generic HTTP adapter
    reasoning: bool = False

    def api_key(self) -> Optional[str]:
        return os.environ.get(f"CHARTLOOP_API_KEY_{self.vendor.name}")


class HttpBackend:
    """Generic JSON-over-HTTP adapter: POSTs prompt+schema, expects
    {"text", "input_tokens", "output_tokens"}. Vendor-specific client
    libraries stay out of scope; deployments front their provider with
    this shape."""

    def __init__(self, config: BackendConfig, timeout_s: float = 60.0):
        if not config.endpoint:
            raise ConfigError(f"backend {config.vendor.value} has no endpoint")
        self.vendor = config.vendor
        self.model_name = config.model_name
        self.reasoning = config.reasoning
        self._config = config
        self._timeout_s = timeout_s

    def complete(self, request: BackendRequest) -> BackendResponse:
        payload = json.dumps(
            {
                "model": self.model_name,
                "prompt": request.prompt,
                "response_schema": request.response_schema,
                "seed": request.seed,
            }
        ).encode("utf-8")
        req = urllib.request.Request(
            self._config.endpoint, data=payload, method="POST",
            headers={"Content-Type": "application/json"},
        )
        key = self._config.api_key()
        if key:
            req.add_header("Authorization", f"Bearer {key}")
        try:
            with urllib.request.urlopen(req, timeout=self._timeout_s) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except TimeoutError as exc:
            raise TransportError(f"backend timeout: {exc}", timeout=True) from exc
        except OSError as exc:
            raise TransportError(f"backend unreachable: {exc}") from exc
        text = body.get("text", "")
        return BackendResponse(
            text=text,
            input_tokens=int(body.get("input_tokens", token_estimate(request.prompt))),
            output_tokens=int(body.get("output_tokens", token_estimate(text))),
            latency_ms=int(body.get("latency_ms", 0)),
        )


def build_backend(config: BackendConfig, base_dir: Optional[Path] = None):
    if config.script:
        script_path = Path(config.script)
        if base_dir is not None and not script_path.is_absolute():
            script_path = base_dir / script_path
        backend = MockBackend.from_script(script_path, model_name=config.model_name)
        backend.vendor = config.vendor
        return backend
    if config.endpoint:
        return HttpBackend(config)
    raise ConfigError(f"backend {config.vendor.value} needs a script or an endpoint")


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    tokens: dict[str, Role] = field(default_factory=dict)
    backends: dict[Vendor, BackendConfig] = field(default_factory=dict)
    fixtures_dir: Optional[Path] = None
    price_table: Optional[Path] = None
    host: str = "127.0.0.1"
    port: int = 8323
    base_dir: Optional[Path] = None

    def role_for(self, token: Optional[str]) -> Optional[Role]:
        if token is None:
            return None
        return self.tokens.get(token)


def load_config(source: Union[str, Path, dict]) -> ServiceConfig:
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base_dir = path.parent
    else:
        doc = dict(source)
        base_dir = Path(doc.get("base_dir", "."))
    if doc.get("format", CONFIG_FORMAT) != CONFIG_FORMAT:
        raise ConfigError(f"unsupported config format {doc.get('format')!r}")

    data_dir = Path(os.environ.get("CHARTLOOP_DATA_DIR", doc.get("data_dir", "data")))
    if not data_dir.is_absolute():
        data_dir = base_dir / data_dir

    tokens: dict[str, Role] = {}
    for token, role in doc.get("tokens", {}).items():
        try:
            tokens[token] = Role(role)
        except ValueError:
            raise ConfigError(f"unknown role {role!r} for a configured token") from None
    env_token = os.environ.get("CHARTLOOP_TOKEN")
    if env_token:
        tokens.setdefault(env_token, Role.ADMIN)

    backends: dict[Vendor, BackendConfig] = {}
    for vendor_name, spec in doc.get("backends", {}).items():
        vendor = Vendor(vendor_name)
        backends[vendor] = BackendConfig(
            vendor=vendor,
            model_name=spec.get("model_name", f"mock-{vendor_name}"),
            script=spec.get("script"),
            endpoint=spec.get("endpoint"),
            reasoning=bool(spec.get("reasoning", False)),
        )

    fixtures = doc.get("fixtures_dir")
    prices = doc.get("price_table")
    return ServiceConfig(
        data_dir=data_dir,
        tokens=tokens,
        backends=backends,
        fixtures_dir=(base_dir / fixtures) if fixtures else None,
        price_table=(base_dir / prices) if prices else None,
        host=doc.get("host", "127.0.0.1"),
        port=int(doc.get("port", 8323)),
        base_dir=base_dir,
    )
