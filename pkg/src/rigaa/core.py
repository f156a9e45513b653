"""Problem-agnostic scenario representation.

A scenario is an integer matrix with one row per scenario element and one
column per attribute.  Domains (maze, road) supply the schema, the validity
check and the surrogate fitness; everything in here only knows about ranges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import GenerationExhausted, SchemaMismatch

DEFAULT_MAX_ATTEMPTS = 200


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str  # "categorical" | "integer"
    lo: int
    hi: int  # inclusive

    def __post_init__(self):
        if self.kind not in ("categorical", "integer"):
            raise ValueError(f"unknown attribute kind {self.kind!r}")
        if self.lo > self.hi:
            raise ValueError(f"{self.name}: lo > hi")
        if self.kind == "categorical" and self.category_count < 2:
            raise ValueError(f"{self.name}: categorical needs >= 2 categories")

    @property
    def category_count(self) -> int:
        return self.hi - self.lo + 1

    @classmethod
    def categorical(cls, name: str, count: int) -> "AttributeSpec":
        return cls(name, "categorical", 0, count - 1)

    @classmethod
    def integer(cls, name: str, lo: int, hi: int) -> "AttributeSpec":
        return cls(name, "integer", lo, hi)


@dataclass(frozen=True)
class ScenarioSchema:
    schema_id: str
    attributes: tuple[AttributeSpec, ...]
    min_elements: int
    max_elements: int
    fixed_length: bool = False

    def __post_init__(self):
        if not 1 <= self.min_elements <= self.max_elements:
            raise ValueError("need 1 <= min_elements <= max_elements")
        if self.fixed_length and self.min_elements != self.max_elements:
            raise ValueError("fixed_length schema needs min_elements == max_elements")

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def lo(self) -> np.ndarray:
        return np.array([a.lo for a in self.attributes], dtype=np.int64)

    @property
    def hi(self) -> np.ndarray:
        return np.array([a.hi for a in self.attributes], dtype=np.int64)

    def check(self, elements: np.ndarray, *, partial: bool = False) -> None:
        """Raise SchemaMismatch unless ``elements`` is a well-formed chromosome.

        ``partial`` accepts any non-empty prefix (used while a scenario is
        still being built).
        """
        if elements.ndim != 2 or elements.shape[1] != self.n_attributes:
            raise SchemaMismatch(
                f"{self.schema_id}: expected (n, {self.n_attributes}) matrix, got shape {elements.shape}"
            )
        n = elements.shape[0]
        lo = 1 if partial else self.min_elements
        if not lo <= n <= self.max_elements:
            raise SchemaMismatch(
                f"{self.schema_id}: element count {n} outside [{lo}, {self.max_elements}]"
            )
        bad = (elements < self.lo) | (elements > self.hi)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            attr = self.attributes[col]
            raise SchemaMismatch(
                f"{self.schema_id}: element {row} attribute {attr.name}={elements[row, col]} "
                f"outside [{attr.lo}, {attr.hi}]"
            )

    def conforms(self, elements: np.ndarray) -> bool:
        try:
            self.check(elements)
        except SchemaMismatch:
            return False
        return True


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violated_constraints: tuple[str, ...] = ()

    @classmethod
    def from_violations(cls, violations: Sequence[str]) -> "ValidityReport":
        return cls(not violations, tuple(violations))


@dataclass
class Individual:
    chromosome: np.ndarray
    obj: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))
    rank: int = 0
    density: float = 0.0
    origin: str = "random"  # rl | random | offspring

    @property
    def fitness(self) -> float:
        """Surrogate fitness R_s (the negated first objective)."""
        return -float(self.obj[0])

    @property
    def novelty(self) -> float:
        return -float(self.obj[1])


class Domain(Protocol):
    """What a scenario problem has to provide to the search machinery."""

    name: str
    schema: ScenarioSchema
    thresholds: np.ndarray

    def validate(self, chromosome: np.ndarray) -> ValidityReport: ...

    def is_valid(self, chromosome: np.ndarray) -> bool: ...

    def fitness(self, chromosome: np.ndarray) -> float: ...


def as_chromosome(elements) -> np.ndarray:
    arr = np.array(elements, dtype=np.int64, copy=True)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    return np.ascontiguousarray(arr)


def random_chromosome(schema: ScenarioSchema, rng: np.random.Generator) -> np.ndarray:
    if schema.fixed_length:
        n = schema.min_elements
    else:
        n = int(rng.integers(schema.min_elements, schema.max_elements + 1))
    return rng.integers(schema.lo, schema.hi + 1, size=(n, schema.n_attributes), dtype=np.int64)


def random_valid_scenario(
    domain: Domain, rng: np.random.Generator, max_attempts: int = DEFAULT_MAX_ATTEMPTS
) -> np.ndarray:
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    for _ in range(max_attempts):
        candidate = random_chromosome(domain.schema, rng)
        if domain.is_valid(candidate):
            return candidate
    raise GenerationExhausted(
        f"{domain.schema.schema_id}: no valid scenario in {max_attempts} attempts"
    )


def serialize_scenario(chromosome: np.ndarray, schema: ScenarioSchema) -> dict:
    schema.check(chromosome)
    return {"schema_id": schema.schema_id, "elements": chromosome.tolist()}


def deserialize_scenario(record: dict, schemas) -> np.ndarray:
    """Rebuild a chromosome from a scenario record.

    ``schemas`` is either a single schema or a mapping from schema id to
    schema.  An optional ``attributes`` list in the record must name the
    schema attributes in order.
    """
    if isinstance(schemas, ScenarioSchema):
        schemas = {schemas.schema_id: schemas}
    schema_id = record.get("schema_id")
    if schema_id not in schemas:
        raise SchemaMismatch(f"unknown schema_id {schema_id!r}")
    schema = schemas[schema_id]
    names = record.get("attributes")
    if names is not None and list(names) != [a.name for a in schema.attributes]:
        raise SchemaMismatch(f"{schema_id}: attribute names {names} do not match schema")
    raw = record.get("elements")
    if not isinstance(raw, list):
        raise SchemaMismatch(f"{schema_id}: 'elements' must be a list")
    if len(raw) == 0:
        arr = np.zeros((0, schema.n_attributes), dtype=np.int64)
    else:
        try:
            arr = np.array(raw)
        except (TypeError, ValueError) as exc:
            raise SchemaMismatch(f"{schema_id}: malformed elements ({exc})") from None
        if arr.dtype.kind not in "iu":
            raise SchemaMismatch(f"{schema_id}: elements must be integers")
        arr = arr.astype(np.int64)
    schema.check(arr)
    return np.ascontiguousarray(arr)
