
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bilinear_nas.errors import CapExceededError, StructuralError
from bilinear_nas.search_space import (
    ArchitectureRecord,
    ArchPoint,
    SearchSpaceSpec,
    canonicalize,
    decode,
    discretize,
    encode,
    enumerate_architectures,
    enumerate_choices,
    sample_choices,
    validate,
)


def test_paper_space_size():
    spec = SearchSpaceSpec.paper()
    assert spec.num_stages == 5 and spec.max_depth == 4 and spec.num_configs == 12
    assert spec.size == 255
    assert spec.alpha_size == 240 and sum(spec.beta_sizes) == 15


def test_config_table_attributes():
    spec = SearchSpaceSpec.paper()
    se = [c.config_id for c in spec.configs if c.squeeze_excite]
    assert se == [2, 4, 6, 8, 10, 12]
    assert [c.config_id for c in spec.configs if c.kernel_size == 3] == [1, 2, 5, 6, 9, 10]
    assert [c.config_id for c in spec.configs if c.expansion_ratio == 6] == [9, 10, 11, 12]


def test_spec_roundtrip(tmp_path):
    spec = SearchSpaceSpec.paper()
    assert SearchSpaceSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize(
    "choices,max_depth",
    [((), 2), (((),), 2), (((2, 1),), 2), (((1, 3),), 2), (((0, 1),), 2)],
)
def test_invalid_specs(choices, max_depth):
    with pytest.raises(StructuralError):
        SearchSpaceSpec(choices, max_depth, SearchSpaceSpec.paper().configs[:2])


def test_count_matches_enumeration():
    for spec in (SearchSpaceSpec.uniform(1, (1, 2), 2), SearchSpaceSpec.uniform(2, (1, 2), 2)):
        d, c = enumerate_choices(spec)
        assert len(d) == spec.count_architectures()
        keys = {(tuple(a), tuple(b.ravel())) for a, b in zip(d, c)}
        assert len(keys) == len(d)
    assert SearchSpaceSpec.uniform(1, (1, 2), 2).count_architectures() == 6
    assert SearchSpaceSpec.uniform(2, (1, 2), 2).count_architectures() == 36


def test_enumeration_cap():
    with pytest.raises(CapExceededError) as exc:
        next(enumerate_architectures(SearchSpaceSpec.paper(), cap=1000))
    assert exc.value.count == SearchSpaceSpec.paper().count_architectures()


def test_encode_decode_roundtrip():
    spec = SearchSpaceSpec.paper()
    d, c = sample_choices(spec, np.random.default_rng(0), 50)
    z = encode(spec, d, c)
    assert z.shape == (50, 255)
    assert np.all(z.sum(axis=1) == spec.num_stages * spec.max_depth + spec.num_stages)
    d2, c2 = decode(spec, z)
    assert np.array_equal(d, d2) and np.array_equal(c, c2)


def test_point_vector_roundtrip():
    spec = SearchSpaceSpec.paper()
    p = ArchPoint.from_choices(spec, [0, 1, 2, 0, 1], np.zeros((5, 4), dtype=int))
    q = ArchPoint.from_vector(spec, p.to_vector(), "discrete")
    assert np.array_equal(p.alpha, q.alpha)
    assert all(np.array_equal(a, b) for a, b in zip(p.beta, q.beta))
    assert validate(p, spec) == []


def test_validate_reports_violations():
    spec = SearchSpaceSpec.uniform(1, (1, 2), 2)
    p = ArchPoint.uniform(spec)
    assert validate(p, spec) == []
    bad = ArchPoint(p.alpha * 2, p.beta, "continuous")
    kinds = {v.group for v in validate(bad, spec)}
    assert ("alpha", 0, 0) in kinds


def test_discretize_ties_to_lowest_index():
    spec = SearchSpaceSpec.uniform(1, (1, 2), 2)
    p = discretize(ArchPoint.uniform(spec))
    d, c = p.choices()
    assert d.tolist() == [0] and c.tolist() == [[0, 0]]


def test_canonicalize_zeroes_idle_blocks():
    spec = SearchSpaceSpec.uniform(1, (1, 2), 3)
    assert canonicalize(spec, np.array([0]), np.array([[2, 2]])).tolist() == [[2, 0]]


def test_record_roundtrip():
    spec = SearchSpaceSpec.paper()
    d, c = sample_choices(spec, np.random.default_rng(1), 1)
    rec = ArchitectureRecord.from_choices(spec, d[0], c[0])
    d2, c2 = rec.to_choices(spec)
    assert np.array_equal(d2, d[0])
    assert np.array_equal(canonicalize(spec, d2, c2), canonicalize(spec, d[0], c[0]))
    assert all(1 <= i <= 12 for ids in rec.configs for i in ids)


def test_sampling_is_seeded():
    spec = SearchSpaceSpec.paper()
    a = sample_choices(spec, np.random.default_rng(5), 10)
    b = sample_choices(spec, np.random.default_rng(5), 10)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@settings(max_examples=40, deadline=None)
@given(
    stages=st.integers(1, 3),
    depths=st.lists(st.integers(1, 3), min_size=1, max_size=3, unique=True),
    configs=st.integers(1, 3),
)
def test_count_formula_property(stages, depths, configs):
    spec = SearchSpaceSpec.uniform(stages, sorted(depths), configs)
    per_stage = sum(configs**d for d in sorted(depths))
    assert spec.count_architectures() == per_stage**stages
    if spec.count_architectures() <= 5000:
        assert len(enumerate_choices(spec)[0]) == spec.count_architectures()
