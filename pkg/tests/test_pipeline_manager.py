"""Tests for pipeline_manager.py"""

import os
import sys
import threading

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from pyrsweep.exceptions import PipelineError, ValidationError
from pyrsweep.pipeline_manager import Pipeline, parallel_map
from pyrsweep.settings import settings


def test_empty_pipeline():
    """Test running an empty pipeline"""
    with pytest.raises(PipelineError):
        Pipeline().run()


def test_pipeline_reset():
    """Test resetting the pipeline"""
    pipeline = Pipeline()
    pipeline.register_step("double", ["x"], ["y"], lambda x: 2 * x)
    assert pipeline.step_names == ["double"]
    pipeline.reset()
    assert pipeline.step_names == []
    with pytest.raises(PipelineError):
        pipeline.run(x=1)


def test_pipeline_assembly():
    """Test a pipeline threads state through several stages"""
    pipeline = Pipeline()
    pipeline.register_step("split", ["x"], ["lo", "hi"], lambda x: (x - 1, x + 1))
    pipeline.register_step("span", ["lo", "hi"], ["span"], lambda lo, hi: hi - lo)
    state = pipeline.run(x=5)
    assert state == {"x": 5, "lo": 4, "hi": 6, "span": 2}


def test_missing_input():
    """Test missing input in pipeline execution"""
    pipeline = Pipeline()
    pipeline.register_step("double", ["x"], ["y"], lambda x: 2 * x)
    with pytest.raises(PipelineError) as info:
        pipeline.run()
    assert "double" in str(info.value)


def test_missing_output():
    """Test a stage returning the wrong number of outputs"""
    pipeline = Pipeline()
    pipeline.register_step("bad", ["x"], ["a", "b"], lambda x: x)
    with pytest.raises(PipelineError):
        pipeline.run(x=1)


def test_register_validation():
    """Test malformed stage registrations"""
    pipeline = Pipeline()
    with pytest.raises(ValidationError):
        pipeline.register_step("s", "x", ["y"], lambda x: x)
    with pytest.raises(ValidationError):
        pipeline.register_step("s", ["x"], [], lambda x: x)
    with pytest.raises(ValidationError):
        pipeline.register_step("s", ["x"], ["y"], "not callable")


def test_parallel_map_keeps_order():
    """Test results come back in input order for any worker count"""
    items = list(range(50))
    expected = [i * i for i in items]
    assert parallel_map(lambda i: i * i, items, workers=1) == expected
    assert parallel_map(lambda i: i * i, items, workers=4) == expected
    assert parallel_map(lambda i: i, [], workers=4) == []


def test_parallel_map_uses_threads():
    """Test more than one worker runs on a pool"""
    seen = set()

    def record(_):
        seen.add(threading.get_ident())

    parallel_map(record, range(2), workers=1)
    assert seen == {threading.get_ident()}
    seen.clear()
    parallel_map(record, range(8), workers=2)
    assert threading.get_ident() not in seen


def test_parallel_map_default_workers():
    """Test the global worker setting is the default"""
    original = settings.workers
    try:
        settings.workers = 1
        seen = set()
        parallel_map(lambda _: seen.add(threading.get_ident()), range(4))
        assert seen == {threading.get_ident()}
    finally:
        settings.workers = original
