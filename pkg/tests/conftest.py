from __future__ import annotations

from pathlib import Path

import pytest

from chartloop.config import BackendConfig, Role, ServiceConfig
from chartloop.core import load_case
from chartloop.gateway import GatewayClient, MockBackend, Vendor

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def no_sleep(_: float) -> None:
    return None


def make_gateway(backend, **kwargs) -> GatewayClient:
    kwargs.setdefault("sleeper", no_sleep)
    kwargs.setdefault("seed", 0)
    return GatewayClient(backend, **kwargs)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def dm2_case():
    return load_case(FIXTURES / "case_dm2.json")


@pytest.fixture(scope="session")
def htn_case():
    return load_case(FIXTURES / "case_htn.json")


def dm2_backend(brief: bool = False, vendor: Vendor = Vendor.MOCK) -> MockBackend:
    name = "case_dm2.brief.json" if brief else "case_dm2.json"
    backend = MockBackend.from_script(FIXTURES / "scripts" / name)
    backend.vendor = vendor
    return backend


@pytest.fixture()
def service_config(tmp_path) -> ServiceConfig:
    return ServiceConfig(
        data_dir=tmp_path / "data",
        tokens={
            "admin-token": Role.ADMIN,
            "reviewer-token": Role.REVIEWER,
            "engineer-token": Role.ENGINEER,
        },
        backends={
            Vendor.VENDOR_A: BackendConfig(
                vendor=Vendor.VENDOR_A,
                model_name="mock-vendor_a",
                script="scripts/{case_id}.json",
            ),
            Vendor.VENDOR_B: BackendConfig(
                vendor=Vendor.VENDOR_B,
                model_name="mock-vendor_b",
                script="scripts/{case_id}.brief.json",
            ),
        },
        base_dir=FIXTURES,
    )
