import numpy as np
import pytest

from spiketext import corpus


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def tiny_dataset_file(tmp_path):
    return write_lines(tmp_path / "tiny.tsv", ["1\tgood movie", "0\tbad movie"])


def toy_sentiment(n=40, seed=0):
    """Linearly separable toy: class-specific tokens plus shared filler."""
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n):
        y = i % 2
        cue = ["pa", "pb", "pc"] if y else ["na", "nb", "nc"]
        toks = list(rng.choice(["x", "y", "z", "w"], size=4)) + list(rng.choice(cue, size=2))
        rng.shuffle(toks)
        lines.append(f"{y}\t{' '.join(toks)}")
    return lines


@pytest.fixture
def toy_files(tmp_path):
    data = write_lines(tmp_path / "toy.tsv", toy_sentiment(60))
    rng = np.random.default_rng(3)
    vec_lines = []
    for tok in ["pa", "pb", "pc", "na", "nb", "nc", "x", "y", "z", "w"]:
        v = rng.normal(0, 0.3, 8)
        v[0] += 1.0 if tok.startswith("p") else (-1.0 if tok.startswith("n") else 0.0)
        vec_lines.append(tok + " " + " ".join(f"{x:.4f}" for x in v))
    vectors = write_lines(tmp_path / "toy.vec", vec_lines)
    return data, vectors


@pytest.fixture
def toy_encoded(toy_files):
    from spiketext import embedding
    data, vectors = toy_files
    ds = corpus.load_dataset(data)
    vocab = corpus.build_vocab(ds)
    ds = corpus.encode_dataset(ds, vocab, 6)
    table = embedding.normalize_shift(embedding.load_embeddings(vectors, vocab, 8, seed=0))
    return ds, vocab, table


# criterion lines recorded by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
