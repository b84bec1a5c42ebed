import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiketext import corpus
from spiketext.corpus import CorpusError, Dataset, Example

from conftest import write_lines


def test_load_dataset(tiny_dataset_file):
    ds = corpus.load_dataset(tiny_dataset_file)
    assert ds.num_classes == 2
    assert len(ds) == 2
    assert ds.examples[0] == Example(1, "good movie")


def test_load_dataset_skips_blank_lines(tmp_path):
    ds = corpus.load_dataset(write_lines(tmp_path / "d.tsv", ["0\ta", "", "2\tb"]))
    assert len(ds) == 2 and ds.num_classes == 3


def test_empty_file_rejected(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("")
    with pytest.raises(CorpusError, match="empty dataset"):
        corpus.load_dataset(p)


@pytest.mark.parametrize("line", ["x\thello", "hello"])
def test_malformed_line_reports_line_number(tmp_path, line):
    with pytest.raises(CorpusError, match="line 1"):
        corpus.load_dataset(write_lines(tmp_path / "bad.tsv", [line]))


def test_malformed_line_number_is_accurate(tmp_path):
    with pytest.raises(CorpusError, match="line 3"):
        corpus.load_dataset(write_lines(tmp_path / "bad.tsv", ["0\ta", "1\tb", "z\tc"]))


@pytest.mark.parametrize("text,mode,expected", [
    ("Good Movie", "whitespace", ["good", "movie"]),
    ("好吃", "character", ["好", "吃"]),
    ("好 吃", "character", ["好", "吃"]),
    ("", "whitespace", []),
    ("", "character", []),
    ("  a\t b\n", "whitespace", ["a", "b"]),
])
def test_tokenize(text, mode, expected):
    assert corpus.tokenize(text, mode) == expected


def _dataset(n):
    return Dataset(tuple(Example(i % 2, f"t{i}") for i in range(n)), 2)


def test_split_sizes():
    train, test = corpus.split(_dataset(10), 0.1, seed=0)
    assert (len(train), len(test)) == (9, 1)


def test_split_deterministic():
    a = corpus.split(_dataset(50), 0.2, seed=4)
    b = corpus.split(_dataset(50), 0.2, seed=4)
    assert a == b


@pytest.mark.parametrize("frac", [0.0, 1.0, 1.5, -0.1])
def test_split_fraction_out_of_range(frac):
    with pytest.raises(CorpusError):
        corpus.split(_dataset(10), frac, seed=0)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 200), frac=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
def test_split_is_partition(n, frac, seed):
    ds = _dataset(n)
    train, test = corpus.split(ds, frac, seed)
    texts_train = {e.text for e in train.examples}
    texts_test = {e.text for e in test.examples}
    assert not texts_train & texts_test
    assert texts_train | texts_test == {e.text for e in ds.examples}
    assert len(test) == round(frac * n)


def test_build_vocab_min_freq():
    ds = Dataset((Example(0, "a a b"),), 1)
    vocab = corpus.build_vocab(ds, min_freq=2)
    assert vocab.itos == ["<pad>", "<unk>", "a"]
    assert "a" in vocab and "b" not in vocab
    assert vocab.lookup("b") == corpus.UNK_ID


def test_build_vocab_order_frequency_then_lexicographic():
    ds = Dataset((Example(0, "c b b a a d"),), 1)
    vocab = corpus.build_vocab(ds, min_freq=1)
    assert vocab.itos[2:] == ["a", "b", "c", "d"]
    assert [vocab.lookup(t) for t in "abcd"] == [2, 3, 4, 5]


def test_build_vocab_empty():
    with pytest.raises(CorpusError):
        corpus.build_vocab(Dataset((), 1))


def test_encode_pads_and_truncates():
    ds = Dataset((Example(0, "a b c"),), 1)
    vocab = corpus.build_vocab(ds)
    assert vocab.encode(["a", "b", "c"], 5) == (2, 3, 4, 0, 0)
    assert vocab.encode(["a", "b", "c"], 2) == (2, 3)
    assert vocab.encode(["zzz"], 2) == (corpus.UNK_ID, corpus.PAD_ID)


@settings(max_examples=50, deadline=None)
@given(words=st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), min_size=1, max_size=30),
       max_len=st.integers(1, 40))
def test_encode_length_and_round_trip(words, max_len):
    ds = Dataset((Example(0, " ".join(words)),), 1)
    vocab = corpus.build_vocab(ds)
    ids = vocab.encode(words, max_len)
    assert len(ids) == max_len
    assert vocab.decode(ids) == words[:max_len]


def test_default_max_len_is_capped_percentile():
    ds = Dataset(tuple(Example(0, " ".join(["w"] * n)) for n in range(1, 101)), 1)
    assert corpus.default_max_len(ds) == 64
    short = Dataset(tuple(Example(0, " ".join(["w"] * n)) for n in range(1, 21)), 1)
    assert corpus.default_max_len(short) == 20  # ceil(95th pct of 1..20) = ceil(19.05)


def test_vocab_save_load(tmp_path):
    vocab = corpus.build_vocab(Dataset((Example(0, "x y y"),), 1))
    vocab.save(tmp_path / "v.txt")
    assert corpus.Vocabulary.load(tmp_path / "v.txt").itos == vocab.itos
