import pytest

from hopfuse.corpus import ingest

from helpers import paragraph_record


@pytest.fixture
def tiny_corpus():
    records = [
        paragraph_record(
            "alpha", "Alpha",
            "Alpha paragraph begins with one plain sentence of filler words here. "
            "It continues with a second sentence about nothing in particular. "
            "Finally a third sentence closes the alpha paragraph neatly.",
        ),
        paragraph_record(
            "beta", "Beta",
            "Beta paragraph has a first sentence with plenty of ordinary words. "
            "Then beta adds a second sentence to round things out fully.",
        ),
        paragraph_record(
            "gamma", "Gamma",
            "Gamma opens with a short declarative sentence of common words. "
            "Gamma then continues with another sentence mentioning random things. "
            "Gamma ends on a third sentence written for the fixtures. "
            "A fourth gamma sentence exists purely to test expansion limits.",
        ),
    ]
    corpus, _ = ingest(records)
    return corpus
