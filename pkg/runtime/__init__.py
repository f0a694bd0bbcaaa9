"""
Runtime — push-based, frame-oriented execution of physical plans.
"""

from runtime import aggregates  # noqa: F401  registers the scalar aggregate functions
from runtime.aggregates import two_step_aggregate
from runtime.executor import execute
from runtime.hashjoin import hybrid_hash_join, nested_loop_join
from runtime.serialize import serialize_result

__all__ = ["execute", "hybrid_hash_join", "nested_loop_join", "serialize_result", "two_step_aggregate"]
