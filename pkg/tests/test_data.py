import csv

import pytest

from feedsynth.data import (
    Comment,
    RecordError,
    Sample,
    corpus_stats,
    normalize_sample,
    parse_legacy_csv,
    parse_records,
    record_line,
    split_dataset,
    write_records,
)


def article(i, n_comments, text="some words here"):
    return Sample(id=f"a{i}", title=f"t{i}", text=text, image_ref=f"img{i}",
                  comments=[Comment(f"comment {j}", likes=j) for j in range(n_comments)])


def write_legacy(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["Title", "Text", "Image", "Comment", "Likes"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


class TestRecords:
    def test_roundtrip_identity(self, tmp_path):
        src = tmp_path / "corpus.jsonl"
        samples = [article(0, 2), article(1, 3)]
        write_records(samples, src)
        parsed = parse_records(src)
        dst = tmp_path / "again.jsonl"
        write_records(parsed, dst)
        assert src.read_bytes() == dst.read_bytes()
        assert len(parsed) == 2
        assert parsed[0].comments[1].likes == 1

    def test_missing_likes_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = record_line(article(0, 1))
        bad = '{"id":"x","title":"","text":"","image_ref":"","comments":[{"text":"hi"}]}'
        path.write_text(good + "\n" + bad + "\n", encoding="utf-8")
        with pytest.raises(RecordError, match="line 2"):
            parse_records(path)

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "extra.jsonl"
        path.write_text('{"id":"x","title":"","text":"","image_ref":"","comments":[],"bonus":1}\n')
        with pytest.raises(RecordError, match="bonus"):
            parse_records(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        line = record_line(article(0, 1))
        path.write_text(line + "\n" + line + "\n", encoding="utf-8")
        with pytest.raises(RecordError, match="duplicate"):
            parse_records(path)

    def test_three_article_fixture(self, tmp_path):
        path = tmp_path / "three.jsonl"
        write_records([article(i, 1) for i in range(3)], path)
        assert len(parse_records(path)) == 3


class TestLegacyCsv:
    def test_colon_joined_lists(self, tmp_path):
        path = tmp_path / "legacy.csv"
        write_legacy(path, [{"Title": "T", "Text": "body", "Image": "i.jpg",
                             "Comment": "Nice:Wow", "Likes": "3:1"}])
        samples, errors = parse_legacy_csv(path)
        assert not errors
        assert [(c.text, c.likes) for c in samples[0].comments] == [("Nice", 3), ("Wow", 1)]

    def test_single_comment(self, tmp_path):
        path = tmp_path / "legacy.csv"
        write_legacy(path, [{"Title": "T", "Text": "b", "Image": "", "Comment": "Only", "Likes": "7"}])
        samples, errors = parse_legacy_csv(path)
        assert len(samples[0].comments) == 1 and not errors

    def test_count_mismatch_skips_row(self, tmp_path):
        path = tmp_path / "legacy.csv"
        write_legacy(path, [
            {"Title": "bad", "Text": "b", "Image": "", "Comment": "a:b", "Likes": "3"},
            {"Title": "good", "Text": "b", "Image": "", "Comment": "fine", "Likes": "2"},
        ])
        samples, errors = parse_legacy_csv(path)
        assert len(samples) == 1 and samples[0].title == "good"
        assert len(errors) == 1 and "row 0" in errors[0]

    def test_malformed_likes_skips_row(self, tmp_path):
        path = tmp_path / "legacy.csv"
        write_legacy(path, [{"Title": "x", "Text": "b", "Image": "", "Comment": "hey", "Likes": "lots"}])
        samples, errors = parse_legacy_csv(path)
        assert not samples and len(errors) == 1

    def test_custom_delimiter(self, tmp_path):
        path = tmp_path / "legacy.csv"
        write_legacy(path, [{"Title": "x", "Text": "b", "Image": "", "Comment": "a|b", "Likes": "1|2"}])
        samples, _ = parse_legacy_csv(path, delimiter="|")
        assert len(samples[0].comments) == 2


class TestNormalizeSample:
    def test_text_fields_normalized(self):
        raw = Sample(id="s", title="<i>Big</i> News", text="They're <b>here</b>",
                     image_ref="x.jpg", comments=[Comment("Don't panic", 2)])
        norm = normalize_sample(raw)
        assert norm.title == "big news"
        assert norm.text == "they are here"
        assert norm.comments[0].text == "do not panic"
        assert norm.comments[0].likes == 2


class TestSplits:
    def test_holdout_ratio(self):
        parts = split_dataset([article(i, 1) for i in range(10)], "holdout80_20", seed=0)
        assert len(parts["train"]) == 8 and len(parts["test"]) == 2

    def test_holdout_articles_disjoint_and_complete(self):
        samples = [article(i, 1) for i in range(13)]
        parts = split_dataset(samples, "holdout80_20", seed=3)
        train_ids = {s.id for s in parts["train"]}
        test_ids = {s.id for s in parts["test"]}
        assert not train_ids & test_ids
        assert train_ids | test_ids == {s.id for s in samples}

    def test_kfold_disjoint(self):
        samples = [article(i, 1) for i in range(11)]
        parts = split_dataset(samples, "kfold5", seed=1)
        assert len(parts) == 5
        seen = [s.id for fold in parts.values() for s in fold]
        assert sorted(seen) == sorted(s.id for s in samples)
        assert len(set(seen)) == len(seen)

    def test_comment_ranges(self):
        twenty = article(0, 20)
        forty = article(1, 40)
        three = article(2, 3)
        samples = [twenty, forty, three]
        assert twenty in split_dataset(samples, "mid")["mid"]
        assert twenty not in split_dataset(samples, "low")["low"]
        assert forty in split_dataset(samples, "mid")["mid"]
        assert forty in split_dataset(samples, "high")["high"]
        assert three in split_dataset(samples, "low")["low"]

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown split mode"):
            split_dataset([], "nope")

    def test_seeded_determinism(self):
        samples = [article(i, 1) for i in range(9)]
        a = split_dataset(samples, "holdout80_20", seed=5)
        b = split_dataset(samples, "holdout80_20", seed=5)
        assert [s.id for s in a["train"]] == [s.id for s in b["train"]]


class TestCorpusStats:
    def test_hand_counts(self):
        samples = [article(0, 3, text="one two three four"),
                   article(1, 5, text="five six")]
        stats = corpus_stats(samples)
        assert stats.n_articles == 2
        assert stats.n_samples == 8
        assert stats.avg_comments_per_article == pytest.approx(4.0)
        assert stats.avg_text_len_words == pytest.approx(3.0)
        # comments are "comment j": 2 words each
        assert stats.avg_comment_len_words == pytest.approx(2.0)
        # likes are 0..2 and 0..4 -> (3 + 10) / 8
        assert stats.avg_likes_per_comment == pytest.approx(13 / 8)

    def test_empty_is_zeroed(self):
        stats = corpus_stats([])
        assert stats.n_articles == 0 and stats.n_samples == 0
        assert stats.avg_comments_per_article == 0.0
