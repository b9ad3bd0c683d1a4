import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles.py

from namesplit.corpus import (
    Block,
    PublicationRecord,
    generate_synthetic_block,
    normalize_author_name,
    sort_key,
)


def record(pid, title="", abstract="", keywords=(), authors=(), venue="", year=None):
    """Terse PublicationRecord builder; authors accepts strings or (name, org)."""
    auth = tuple(a if isinstance(a, tuple) else (a, "") for a in authors)
    return PublicationRecord(
        id=pid, title=title, abstract=abstract, keywords=tuple(keywords),
        authors=auth, venue=venue, year=year,
    )


def toy_block(records, name="wei li"):
    key = sort_key(normalize_author_name(name))
    return Block(name=key, pubs=sorted(records, key=lambda r: r.id))


@pytest.fixture
def small_block():
    """3 entities x 4 pubs keeps the slower tests quick."""
    return generate_synthetic_block(3, 4, seed=11)
