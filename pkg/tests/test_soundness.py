"""
Rewrite soundness — every intermediate plan of the optimizer, executed,
returns what the naive interpreter returns.
"""

from __future__ import annotations

import random

import pytest

from compiler.algebra import LogicalPlan
from compiler.frontend import normalize, parse_query
from compiler.optimizer import STEP_CEILING, run_optimizer
from compiler.physical import select_physical
from compiler.rewrite import RuleContext
from compiler.translator import translate
from oracle import run_naive
from processor import normalized
from runtime import execute
from xml_ingest import Catalog
from conftest import ANN_BOOKS, JOE_BOOKS

BOOKS = 'collection("/books")/bookstore/book'
FIELDS = ("title", "year", "price", "@id")
GENERAL_OPS = ("=", "!=", "<", "<=", ">", ">=")
AGGREGATES = ("count", "sum", "min", "max", "avg")
TITLES = sorted({b[1] for b in ANN_BOOKS + JOE_BOOKS})


def random_query(rng: random.Random) -> str:
    op, year = rng.choice(GENERAL_OPS), rng.randint(2002, 2008)
    field = rng.choice(FIELDS)
    shape = rng.randrange(7)
    if shape == 0:
        return f"{BOOKS}/{field}"
    if shape == 1:
        return f"for $b in {BOOKS} where $b/year {op} {year} return $b/{field}"
    if shape == 2:
        # year values are whole numbers, so every summation order gives the same double
        agg = rng.choice(AGGREGATES)
        return f"{agg}(for $b in {BOOKS} where $b/year {op} {year} return $b/year)"
    if shape == 3:
        return f'count(collection("/{rng.choice(["books", "ann-books", "joe-books"])}")/bookstore/book)'
    if shape == 4:
        return (
            'for $r in collection("/ann-books")/bookstore/book '
            'for $s in collection("/joe-books")/bookstore/book '
            f"where $r/title eq $s/title and $s/year {op} {year} return $s/{field}"
        )
    if shape == 5:
        return (
            f"for $b in {BOOKS} where some $t in $b/title satisfies $t eq "
            f'"{rng.choice(TITLES)}" return $b/{field}'
        )
    return f"for $b in {BOOKS} let $y := $b/year where $y {op} {year} return ($b/title, $y)"


@pytest.mark.parametrize("seed", range(200))
def test_every_rewrite_prefix_matches_the_interpreter(seed, library, make_config):
    text = random_query(random.Random(seed))
    catalog = Catalog(str(library), 2)
    config = make_config(library, partitions=2)
    expected = normalized(run_naive(text, catalog))

    initial = translate(normalize(parse_query(text)))
    result = run_optimizer(initial, ctx=RuleContext())
    assert result.steps < STEP_CEILING
    plans = [initial] + [LogicalPlan(entry.root) for entry in result.trace]
    for step, plan in enumerate(plans):
        got = normalized(execute(select_physical(plan, catalog), catalog, config))
        assert got == expected, (text, step, result.trace[step - 1].rule if step else "initial")
