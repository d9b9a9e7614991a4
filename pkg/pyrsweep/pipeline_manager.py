"""Stage pipeline for coarse-to-fine depth inference

Provides named-stage registration, sequential execution over a shared state
dict and a deterministic thread-pool map used by the volume kernels.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, TypeVar

from .exceptions import PipelineError, ValidationError
from .settings import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
    fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None
) -> List[R]:
    """Map ``fn`` over ``items`` in order, on a thread pool when ``workers > 1``

    Tasks must write disjoint outputs; the result order never depends on the
    worker count.
    """
    items = list(items)
    if workers is None:
        workers = settings.workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class Pipeline:
    """Sequence of named stages reading and writing a shared state dict"""

    def __init__(self) -> None:
        self._steps: List[Tuple[str, List[str], List[str], Callable[..., Any]]] = []

    def register_step(
        self, name: str, inputs: List[str], outputs: List[str], fn: Callable[..., Any]
    ) -> None:
        """Register a stage with input/output state keys

        Args:
            name: Stage name used in logs and errors
            inputs: State keys passed to ``fn`` as keyword arguments
            outputs: State keys assigned from the return value; a single
                output takes the value itself, several take a tuple
            fn: Callable implementing the stage
        """
        if not isinstance(inputs, list) or not all(isinstance(i, str) for i in inputs):
            raise ValidationError("inputs must be a list of strings")
        if not isinstance(outputs, list) or not all(
            isinstance(o, str) for o in outputs
        ):
            raise ValidationError("outputs must be a list of strings")
        if not outputs:
            raise ValidationError("a stage must produce at least one output")
        if not callable(fn):
            raise ValidationError("fn must be callable")
        self._steps.append((name, inputs, outputs, fn))

    @property
    def step_names(self) -> List[str]:
        return [name for name, _, _, _ in self._steps]

    def reset(self) -> None:
        """Remove all registered stages"""
        self._steps = []

    def run(self, **inputs: Any) -> Dict[str, Any]:
        """Execute the stages in registration order and return the final state"""
        if not self._steps:
            raise PipelineError("No steps in pipeline")
        data = dict(inputs)

        for name, input_names, output_names, fn in self._steps:
            missing = [key for key in input_names if key not in data]
            if missing:
                raise PipelineError(f"Stage '{name}': missing input(s) {missing}")

            started = time.perf_counter()
            result = fn(**{key: data[key] for key in input_names})
            logger.debug("stage %s took %.3fs", name, time.perf_counter() - started)

            if len(output_names) == 1:
                data[output_names[0]] = result
                continue
            if not isinstance(result, tuple) or len(result) != len(output_names):
                raise PipelineError(
                    f"Stage '{name}': expected {len(output_names)} outputs"
                )
            data.update(zip(output_names, result))

        return data
