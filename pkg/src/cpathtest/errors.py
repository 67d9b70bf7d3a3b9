"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by cpathtest."""


class ConfigError(PipelineError):
    pass


class EnvironmentFault(PipelineError):
    """The host is missing something; not the fault of the unit being processed."""


# csource


class NoSourcesFound(PipelineError):
    pass


class ParseFailure(PipelineError):
    def __init__(self, file: str, diagnostic: str):
        super().__init__(f"{file}: {diagnostic}")
        self.file = file
        self.diagnostic = diagnostic


class UnresolvedType(PipelineError):
    def __init__(self, name: str):
        super().__init__(f"no visible definition for type {name!r}")
        self.name = name


class ExtractionFailure(PipelineError):
    def __init__(self, name: str, diagnostic: str):
        super().__init__(f"{name}: {diagnostic}")
        self.name = name
        self.diagnostic = diagnostic


# cfg


class UnsupportedConstruct(PipelineError):
    def __init__(self, kind: str, line: int):
        super().__init__(f"unsupported construct {kind!r} at line {line}")
        self.kind = kind
        self.line = line


class InvalidCfg(PipelineError):
    pass


# retrieval


class EmbedderUnavailable(EnvironmentFault):
    pass


class DimensionMismatch(PipelineError):
    pass


class ZeroVector(PipelineError):
    pass


# llm


class LlmUnavailable(EnvironmentFault):
    pass


class ProviderError(PipelineError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class MalformedResponse(PipelineError):
    pass


class ScriptMiss(PipelineError):
    def __init__(self, fingerprint: str, stage: str = "", tag: str = ""):
        super().__init__(f"no scripted response for stage={stage} tag={tag} fingerprint={fingerprint}")
        self.fingerprint = fingerprint
        self.stage = stage
        self.tag = tag


class MalformedScript(PipelineError):
    pass


# opmap


class SchemaViolation(PipelineError):
    def __init__(self, raw: str, reason: str = ""):
        super().__init__(f"operation map response rejected: {reason}")
        self.raw = raw
        self.reason = reason


class HallucinatedReuse(PipelineError):
    def __init__(self, name: str):
        super().__init__(f"reuse references {name!r}, which is not in the retrieved catalog")
        self.name = name


class MissingPoolImpl(PipelineError):
    def __init__(self, name: str):
        super().__init__(f"helper {name!r} has no implementation in the pool")
        self.name = name


class HelperCompileFailure(PipelineError):
    def __init__(self, diagnostics: str):
        super().__init__("helpers file does not compile:\n" + diagnostics)
        self.diagnostics = diagnostics


# synth


class ConstraintViolation(PipelineError):
    def __init__(self, identifier: str, reason: str = "not in the allowed call list"):
        super().__init__(f"{identifier}: {reason}")
        self.identifier = identifier
        self.reason = reason


class EmptyResponse(PipelineError):
    pass


# validate / suite


class ToolchainMissing(EnvironmentFault):
    pass


class CoverageToolMissing(EnvironmentFault):
    pass


class MergeCompileFailure(PipelineError):
    def __init__(self, diagnostics: str, names: list[str] | None = None):
        super().__init__("merged suite does not compile:\n" + diagnostics)
        self.diagnostics = diagnostics
        self.names = names or []


class SuiteRunFailure(PipelineError):
    def __init__(self, diagnostics: str):
        super().__init__("merged suite failed at run time:\n" + diagnostics)
        self.diagnostics = diagnostics


class UnrecognizedFormat(PipelineError):
    def __init__(self, line: str):
        super().__init__(f"unrecognized gcov output line: {line!r}")
        self.line = line


class AccountingError(PipelineError):
    """A retention bookkeeping identity does not hold."""
