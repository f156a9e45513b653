import numpy as np
import pytest
from hypothesis import given, strategies as st

from rigaa.core import (
    AttributeSpec,
    Individual,
    ScenarioSchema,
    deserialize_scenario,
    random_chromosome,
    random_valid_scenario,
    serialize_scenario,
)
from rigaa.errors import GenerationExhausted, SchemaMismatch
from rigaa.maze import MAZE_SCHEMA, MazeDomain
from rigaa.road import ROAD_SCHEMA


def test_attribute_spec_rejects_bad_ranges():
    with pytest.raises(ValueError):
        AttributeSpec.integer("x", 5, 4)
    with pytest.raises(ValueError):
        AttributeSpec("x", "float", 0, 1)
    assert AttributeSpec.categorical("t", 3).category_count == 3


def test_schema_check_reports_offending_attribute():
    bad = np.array([[0, 40, 5]] * 40)
    with pytest.raises(SchemaMismatch, match="position"):
        MAZE_SCHEMA.check(bad)
    with pytest.raises(SchemaMismatch, match="element count"):
        MAZE_SCHEMA.check(np.zeros((39, 3), dtype=np.int64) + [0, 2, 5])
    with pytest.raises(SchemaMismatch):
        ROAD_SCHEMA.check(np.zeros((3, 2), dtype=np.int64))


def test_partial_check_accepts_prefixes():
    ROAD_SCHEMA.check(np.array([[0, 10, 5]]), partial=True)
    with pytest.raises(SchemaMismatch):
        ROAD_SCHEMA.check(np.array([[0, 10, 5]]))


@given(st.integers(0, 2**32 - 1))
def test_random_chromosome_conforms(seed):
    rng = np.random.default_rng(seed)
    for schema in (MAZE_SCHEMA, ROAD_SCHEMA):
        c = random_chromosome(schema, rng)
        assert c.dtype == np.int64
        assert schema.conforms(c)


@given(st.integers(0, 2**32 - 1))
def test_serialization_round_trip(seed):
    rng = np.random.default_rng(seed)
    c = random_chromosome(ROAD_SCHEMA, rng)
    rec = serialize_scenario(c, ROAD_SCHEMA)
    back = deserialize_scenario(rec, {s.schema_id: s for s in (MAZE_SCHEMA, ROAD_SCHEMA)})
    assert np.array_equal(back, c)


def test_deserialize_rejects_floats_unknown_ids_and_names():
    with pytest.raises(SchemaMismatch):
        deserialize_scenario({"schema_id": "road-v1", "elements": [[0, 10.5, 5], [1, 5, 5]]}, ROAD_SCHEMA)
    with pytest.raises(SchemaMismatch):
        deserialize_scenario({"schema_id": "nope", "elements": []}, ROAD_SCHEMA)
    with pytest.raises(SchemaMismatch):
        deserialize_scenario(
            {"schema_id": "road-v1", "attributes": ["a", "b", "c"], "elements": [[0, 10, 5], [1, 5, 5]]}, ROAD_SCHEMA
        )


def test_random_valid_scenario_and_exhaustion(rng):
    dom = MazeDomain()
    c = random_valid_scenario(dom, rng)
    assert dom.is_valid(c)

    class Never:
        schema = ROAD_SCHEMA

        def is_valid(self, c):
            return False

    with pytest.raises(GenerationExhausted):
        random_valid_scenario(Never(), rng, max_attempts=5)


def test_individual_fitness_is_negated_objective():
    ind = Individual(np.zeros((2, 3), dtype=np.int64), np.array([-7.5, -0.25]))
    assert ind.fitness == 7.5
    assert ind.novelty == 0.25


def test_fixed_length_schema_needs_equal_bounds():
    with pytest.raises(ValueError):
        ScenarioSchema("x", (AttributeSpec.integer("a", 0, 1),), 1, 2, fixed_length=True)
