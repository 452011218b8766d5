"""chartloop: a governable documentation-agent pipeline and its governance harness.

The package is organized by subsystem:

- ``chartloop.core``       shared domain types, command registry, file formats
- ``chartloop.gateway``    model backends, retries, audit logging
- ``chartloop.pipeline``   the four-stage session pipeline
- ``chartloop.rubric_engine``  rubric scoring, validation, generation
- ``chartloop.experiment`` benchmark runs and version gating
- ``chartloop.ledger``     feedback and provenance ledgers
- ``chartloop.telemetry``  latency, failure, and cost accounting
- ``chartloop.service`` / ``chartloop.cli``  the HTTP API and command line
"""

__version__ = "0.1.0"
