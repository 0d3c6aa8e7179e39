"""The declarative candidate-configuration language the LLM emits.

Instead of executable code, model responses carry a fenced YAML block
describing a feature library and an optimizer. This module extracts fenced
blocks from raw responses and parses/validates them into CandidateSpec
values; failures come back as structured diagnostics, never exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .features import (
    Custom,
    FeatureLibrarySpec,
    FeatureSpecError,
    Fourier,
    LibraryPart,
    Polynomial,
    custom_part,
    feature_count,
    feature_names,
)
from .sparse_opt import (
    DEFAULT_MAX_ITER,
    DEFAULT_NU,
    DEFAULT_RIDGE_ALPHA,
    OptimizerSpec,
    OptimizerSpecError,
)
from .terms import TermParseError

SCHEMA_VERSION = 1

# Hard cap on candidate block size; fuzz inputs and runaway responses beyond
# this are rejected instead of parsed.
MAX_BLOCK_BYTES = 256 * 1024

_KIND_ALIASES = {
    "stlsq": "STLSQ",
    "sr3": "SR3",
    "leastsquares": "LeastSquares",
    "least_squares": "LeastSquares",
    "lsq": "LeastSquares",
}


@dataclass
class ParseDiagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int | None = None
    column: int | None = None
    snippet: str | None = None

    def __str__(self) -> str:
        loc = f" (line {self.line})" if self.line is not None else ""
        return f"{self.severity}{loc}: {self.message}"


@dataclass
class CandidateSpec:
    library: FeatureLibrarySpec
    optimizer: OptimizerSpec
    raw_text: str = field(compare=False, default="")
    schema_version: int = SCHEMA_VERSION


def extract_blocks(response: str) -> list[str]:
    """Contents of all triple-backtick fenced blocks, in order.

    Tolerates a language tag after the opening fence, a stray space before
    the tag, indentation before the fence, and CRLF line endings. An
    unterminated fence yields no block.
    """
    text = response.replace("\r\n", "\n").replace("\r", "\n")
    blocks: list[str] = []
    current: list[str] | None = None
    for line in text.split("\n"):
        if line.strip().startswith("```"):
            if current is None:
                current = []
            else:
                blocks.append("\n".join(current))
                current = None
        elif current is not None:
            current.append(line)
    return blocks


def parse_candidate(
    block: str,
    n: int,
    default_optimizer: OptimizerSpec | None = None,
) -> tuple[CandidateSpec | None, list[ParseDiagnostic]]:
    """Parse one candidate block for an n-dimensional system.

    Returns (spec, diagnostics). spec is None whenever any error-severity
    diagnostic was produced. Never raises on malformed input.
    """
    diags: list[ParseDiagnostic] = []
    try:
        return _parse_candidate_inner(block, n, default_optimizer, diags)
    except Exception as exc:  # fuzz safety: malformed input must not crash
        diags.append(ParseDiagnostic("error", f"unparseable block: {exc}"))
        return None, diags


def _error(diags: list[ParseDiagnostic], message: str, **kw) -> None:
    diags.append(ParseDiagnostic("error", message, **kw))


def _warn(diags: list[ParseDiagnostic], message: str) -> None:
    diags.append(ParseDiagnostic("warning", message))


def _parse_candidate_inner(block, n, default_optimizer, diags):
    if not isinstance(block, str) or not block.strip():
        _error(diags, "empty candidate block")
        return None, diags
    if len(block.encode("utf-8", errors="replace")) > MAX_BLOCK_BYTES:
        _error(diags, f"candidate block exceeds {MAX_BLOCK_BYTES} bytes")
        return None, diags
    if n <= 0:
        _error(diags, f"dimension must be positive, got {n}")
        return None, diags

    try:
        doc = yaml.safe_load(block)
    except Exception as exc:
        mark = getattr(exc, "problem_mark", None)
        _error(
            diags,
            f"not valid YAML: {getattr(exc, 'problem', exc)}",
            line=None if mark is None else mark.line + 1,
            column=None if mark is None else mark.column + 1,
            snippet=None if mark is None else _snippet(block, mark.line),
        )
        return None, diags

    if not isinstance(doc, dict):
        _error(diags, f"candidate must be a mapping, got {type(doc).__name__}")
        return None, diags

    known_keys = {"library", "optimizer", "schema_version"}
    for key in doc:
        if key not in known_keys:
            _warn(diags, f"unknown key {key!r} ignored")

    schema_version = doc.get("schema_version", SCHEMA_VERSION)
    if not isinstance(schema_version, int):
        _error(diags, f"schema_version must be an integer, got {schema_version!r}")
    elif schema_version != SCHEMA_VERSION:
        _warn(diags, f"schema_version {schema_version} treated as {SCHEMA_VERSION}")
        schema_version = SCHEMA_VERSION

    if "library" not in doc:
        _error(diags, "missing required key 'library'")
        return None, diags
    library = _parse_library(doc["library"], n, diags)

    optimizer: OptimizerSpec | None
    if "optimizer" in doc:
        optimizer = _parse_optimizer(doc["optimizer"], diags)
    elif default_optimizer is not None:
        optimizer = default_optimizer
    else:
        _error(diags, "missing required key 'optimizer'")
        optimizer = None

    if library is None or optimizer is None or any(d.severity == "error" for d in diags):
        return None, diags

    try:
        p = feature_count(library, n)
    except FeatureSpecError as exc:
        _error(diags, str(exc))
        return None, diags
    if p < 1:
        _error(diags, "library produces no features")
        return None, diags

    spec = CandidateSpec(
        library=library,
        optimizer=optimizer,
        raw_text=block,
        schema_version=schema_version,
    )
    return spec, diags


def _snippet(block: str, line_index: int) -> str | None:
    lines = block.split("\n")
    if 0 <= line_index < len(lines):
        return lines[line_index][:120]
    return None


def _parse_library(node, n, diags) -> FeatureLibrarySpec | None:
    if not isinstance(node, list) or not node:
        _error(diags, "'library' must be a non-empty list of parts")
        return None
    parts: list[LibraryPart] = []
    for i, entry in enumerate(node):
        part = _parse_part(entry, i, n, diags)
        if part is not None:
            parts.append(part)
    if any(d.severity == "error" for d in diags) or not parts:
        return None
    try:
        spec = FeatureLibrarySpec(parts=tuple(parts))
        feature_names(spec, n)  # validates duplicate names
    except (FeatureSpecError, TermParseError) as exc:
        _error(diags, str(exc))
        return None
    return spec


def _parse_part(entry, index, n, diags) -> LibraryPart | None:
    where = f"library[{index}]"
    if not isinstance(entry, dict) or len(entry) != 1:
        _error(diags, f"{where}: each part must be a single-key mapping "
                      "(polynomial, fourier, or custom)")
        return None
    (name, options), = entry.items()
    if not isinstance(name, str):
        _error(diags, f"{where}: part name must be a string")
        return None
    kind = name.strip().lower()
    options = {} if options is None else options
    if not isinstance(options, dict):
        _error(diags, f"{where}: options for {name!r} must be a mapping")
        return None

    try:
        if kind == "polynomial":
            return _build_polynomial(options, where, diags)
        if kind == "fourier":
            return _build_fourier(options, where, diags)
        if kind == "custom":
            return _build_custom(options, n, where, diags)
    except (FeatureSpecError, TermParseError) as exc:
        _error(diags, f"{where}: {exc}")
        return None
    _error(diags, f"{where}: unknown part {name!r}; expected polynomial, fourier, or custom")
    return None


def _int_option(options, key, where, diags, required=False, default=None):
    if key not in options:
        if required:
            _error(diags, f"{where}: missing required option {key!r}")
        return default
    value = options[key]
    if isinstance(value, bool) or not isinstance(value, int):
        _error(diags, f"{where}: {key} must be an integer, got {value!r}")
        return None
    return value


def _bool_option(options, key, where, diags, default):
    if key not in options:
        return default
    value = options[key]
    if not isinstance(value, bool):
        _error(diags, f"{where}: {key} must be true or false, got {value!r}")
        return None
    return value


def _check_unknown(options, known, where, diags):
    for key in options:
        if key not in known:
            _warn(diags, f"{where}: unknown option {key!r} ignored")


def _build_polynomial(options, where, diags) -> Polynomial | None:
    _check_unknown(options, {"degree", "include_interaction", "include_bias"}, where, diags)
    degree = _int_option(options, "degree", where, diags, required=True)
    interaction = _bool_option(options, "include_interaction", where, diags, True)
    bias = _bool_option(options, "include_bias", where, diags, True)
    if degree is None or interaction is None or bias is None:
        return None
    return Polynomial(degree=degree, include_interaction=interaction, include_bias=bias)


def _build_fourier(options, where, diags) -> Fourier | None:
    _check_unknown(options, {"n_frequencies", "include_sin", "include_cos"}, where, diags)
    n_freq = _int_option(options, "n_frequencies", where, diags, required=True)
    sin = _bool_option(options, "include_sin", where, diags, True)
    cos = _bool_option(options, "include_cos", where, diags, True)
    if n_freq is None or sin is None or cos is None:
        return None
    return Fourier(n_frequencies=n_freq, include_sin=sin, include_cos=cos)


def _build_custom(options, n, where, diags) -> Custom | None:
    _check_unknown(options, {"terms"}, where, diags)
    terms = options.get("terms")
    if not isinstance(terms, list) or not terms:
        _error(diags, f"{where}: custom part needs a non-empty 'terms' list")
        return None
    sources = []
    ok = True
    for t in terms:
        if not isinstance(t, str):
            _error(diags, f"{where}: custom terms must be strings, got {t!r}")
            ok = False
        else:
            sources.append(t)
    if not ok:
        return None
    return custom_part(sources, n)


def _parse_optimizer(node, diags) -> OptimizerSpec | None:
    if not isinstance(node, dict):
        _error(diags, "'optimizer' must be a mapping")
        return None
    _check_unknown(node, {"kind", "threshold", "ridge_alpha", "nu", "max_iter"}, "optimizer", diags)
    kind_raw = node.get("kind")
    if not isinstance(kind_raw, str):
        _error(diags, "optimizer needs a string 'kind'")
        return None
    kind = _KIND_ALIASES.get(kind_raw.strip().lower())
    if kind is None:
        _error(
            diags,
            f"unknown optimizer kind {kind_raw!r}; expected STLSQ, SR3, or LeastSquares",
        )
        return None

    def number(key, default):
        if key not in node:
            return default
        value = node[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _error(diags, f"optimizer: {key} must be a number, got {value!r}")
            return None
        return float(value)

    threshold = number("threshold", 0.0)
    ridge_alpha = number("ridge_alpha", DEFAULT_RIDGE_ALPHA)
    nu = number("nu", DEFAULT_NU)
    max_iter = _int_option(node, "max_iter", "optimizer", diags, default=DEFAULT_MAX_ITER)
    if None in (threshold, ridge_alpha, nu, max_iter):
        return None
    try:
        return OptimizerSpec(
            kind=kind,
            threshold=threshold,
            ridge_alpha=ridge_alpha,
            nu=nu,
            max_iter=max_iter,
        )
    except OptimizerSpecError as exc:
        _error(diags, str(exc))
        return None


def first_valid_candidate(
    response: str,
    n: int,
    default_optimizer: OptimizerSpec | None = None,
) -> tuple[CandidateSpec | None, list[ParseDiagnostic]]:
    """First block that parses; otherwise all failures' diagnostics."""
    all_diags: list[ParseDiagnostic] = []
    blocks = extract_blocks(response)
    if not blocks:
        all_diags.append(ParseDiagnostic("error", "response contains no fenced block"))
        return None, all_diags
    for i, block in enumerate(blocks):
        spec, diags = parse_candidate(block, n, default_optimizer)
        if spec is not None:
            return spec, diags
        for d in diags:
            d.message = f"block {i + 1}: {d.message}"
        all_diags.extend(diags)
    return None, all_diags


# ---------------------------------------------------------------------------
# Serialization (the canonical YAML form; round-trips through parse_candidate)
# ---------------------------------------------------------------------------


def library_to_obj(spec: FeatureLibrarySpec) -> list:
    parts = []
    for part in spec.parts:
        if isinstance(part, Polynomial):
            parts.append(
                {
                    "polynomial": {
                        "degree": part.degree,
                        "include_interaction": part.include_interaction,
                        "include_bias": part.include_bias,
                    }
                }
            )
        elif isinstance(part, Fourier):
            parts.append(
                {
                    "fourier": {
                        "n_frequencies": part.n_frequencies,
                        "include_sin": part.include_sin,
                        "include_cos": part.include_cos,
                    }
                }
            )
        elif isinstance(part, Custom):
            parts.append({"custom": {"terms": [str(t) for t in part.terms]}})
        else:
            raise FeatureSpecError(f"unknown library part {part!r}")
    return parts


def optimizer_to_obj(spec: OptimizerSpec) -> dict:
    # every field is emitted so that serialize -> parse is the identity
    return {
        "kind": spec.kind,
        "threshold": spec.threshold,
        "ridge_alpha": spec.ridge_alpha,
        "nu": spec.nu,
        "max_iter": spec.max_iter,
    }


def serialize_candidate(spec: CandidateSpec) -> str:
    doc = {
        "schema_version": spec.schema_version,
        "library": library_to_obj(spec.library),
        "optimizer": optimizer_to_obj(spec.optimizer),
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
