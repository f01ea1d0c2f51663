import string

import pytest

from synthstream.corpus import Clickstream, ClickstreamSet, Vocabulary


def make_set(stream_items, n_items=None) -> ClickstreamSet:
    """Corpus from lists of item ids, labeled a, b, c, ..."""
    n = n_items if n_items is not None else max(max(s) for s in stream_items) + 1
    vocab = Vocabulary(tuple(string.ascii_lowercase[i % 26] + (str(i // 26) if i >= 26 else "") for i in range(n)))
    return ClickstreamSet(tuple(Clickstream(tuple(s)) for s in stream_items), vocab)


@pytest.fixture
def abc_corpus() -> ClickstreamSet:
    # streams: a b c / b c / a b
    return make_set([[0, 1, 2], [1, 2], [0, 1]])
