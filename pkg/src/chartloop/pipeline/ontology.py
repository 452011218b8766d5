"""Clinical ontology lookup: free text to coded concepts.

Production deployments point this interface at terminology services; the
bundled stub resolves a small fixed table so offline runs stay
deterministic. Lookups are case- and whitespace-insensitive.
"""

from __future__ import annotations

import re
from typing import Optional, Protocol, runtime_checkable

from chartloop.core.types import CodedConcept, Ontology
from chartloop.errors import UnresolvableCode


@runtime_checkable
class OntologyClient(Protocol):
    def resolve(self, text: str, system: Ontology) -> Optional[CodedConcept]: ...


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().casefold())


_ICD10 = {
    "type 2 diabetes mellitus": ("E11.9", "Type 2 diabetes mellitus"),
    "type 2 diabetes": ("E11.9", "Type 2 diabetes mellitus"),
    "type 2 diabetes mellitus with polyneuropathy": (
        "E11.42",
        "Type 2 diabetes mellitus with diabetic polyneuropathy",
    ),
    "essential hypertension": ("I10", "Essential (primary) hypertension"),
    "hypertension": ("I10", "Essential (primary) hypertension"),
    "hyperlipidemia": ("E78.5", "Hyperlipidemia, unspecified"),
    "major depressive disorder": ("F32.9", "Major depressive disorder, single episode"),
    "generalized anxiety disorder": ("F41.1", "Generalized anxiety disorder"),
    "asthma": ("J45.909", "Unspecified asthma, uncomplicated"),
    "low back pain": ("M54.5", "Low back pain"),
    "obesity": ("E66.9", "Obesity, unspecified"),
    "gastroesophageal reflux disease": ("K21.9", "Gastro-esophageal reflux disease"),
    "chronic kidney disease stage 2": ("N18.2", "Chronic kidney disease, stage 2"),
    "osteoarthritis of knee": ("M17.9", "Osteoarthritis of knee, unspecified"),
}

_RXNORM = {
    "lisinopril": ("29046", "lisinopril"),
    "metformin": ("6809", "metformin"),
    "metformin 500 mg": ("861007", "metformin hydrochloride 500 MG Oral Tablet"),
    "atorvastatin": ("83367", "atorvastatin"),
    "sertraline": ("36437", "sertraline"),
    "albuterol": ("435", "albuterol"),
    "amoxicillin": ("723", "amoxicillin"),
    "omeprazole": ("7646", "omeprazole"),
    "ibuprofen": ("5640", "ibuprofen"),
    "hydrochlorothiazide": ("5487", "hydrochlorothiazide"),
    "amlodipine": ("17767", "amlodipine"),
    "empagliflozin": ("1545653", "empagliflozin"),
}

_SNOMED = {
    "polyuria": ("28442001", "Polyuria"),
    "polydipsia": ("17173007", "Excessive thirst"),
    "fatigue": ("84229001", "Fatigue"),
    "blurred vision": ("246636008", "Blurred vision"),
    "headache": ("25064002", "Headache"),
    "cough": ("49727002", "Cough"),
    "numbness of foot": ("309521004", "Numbness of foot"),
}

_TABLES = {Ontology.ICD10: _ICD10, Ontology.RXNORM: _RXNORM, Ontology.SNOMED: _SNOMED}


class StubOntology:
    """Deterministic in-memory lookup over the bundled tables."""

    def __init__(self, extra: Optional[dict[Ontology, dict[str, tuple[str, str]]]] = None):
        self._tables = {system: dict(table) for system, table in _TABLES.items()}
        for system, table in (extra or {}).items():
            self._tables[system].update({_normalize(k): v for k, v in table.items()})

    def resolve(self, text: str, system: Ontology) -> Optional[CodedConcept]:
        entry = self._tables.get(system, {}).get(_normalize(text))
        if entry is None:
            return None
        code, display = entry
        return CodedConcept(system=system, code=code, display=display)


def map_to_code(free_text: str, system: Ontology, ontology: OntologyClient) -> CodedConcept:
    """Resolve free text to a coded concept; raises UnresolvableCode on miss."""
    if not free_text or not free_text.strip():
        raise UnresolvableCode(f"empty text cannot be coded in {system.value}")
    concept = ontology.resolve(free_text, system)
    if concept is None:
        raise UnresolvableCode(f"no {system.value} code for {free_text!r}")
    return concept
