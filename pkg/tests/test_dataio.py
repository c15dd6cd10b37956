import pytest

from fewbench.dataio import (
    ACCURACY_HEADER,
    AccuracyRecord,
    DegenerateCorpusError,
    EmptyCorpusError,
    corpus_labels,
    parse_accuracy_records,
    parse_corpus,
    write_accuracy_records,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------- corpora


def test_parse_corpus_csv(tmp_path):
    p = write(
        tmp_path / "c.csv",
        'doc_id,label,text\n'
        'd1,pos,"a line, with comma"\n'
        'd2,neg,plain\n',
    )
    docs, report = parse_corpus(p)
    assert [d.doc_id for d in docs] == ["d1", "d2"]
    assert docs[0].text == "a line, with comma"
    assert report.rows_read == 2 and report.rows_rejected == 0
    assert corpus_labels(docs) == ["neg", "pos"]


def test_parse_corpus_jsonl(tmp_path):
    p = write(
        tmp_path / "c.jsonl",
        '{"doc_id": "a", "label": "x", "text": "t1"}\n'
        '\n'
        '{"doc_id": "b", "label": "y", "text": "t2"}\n',
    )
    docs, report = parse_corpus(p)
    assert len(docs) == 2
    assert report.rows_rejected == 0


def test_corpus_bad_rows_reported_not_fatal(tmp_path):
    p = write(
        tmp_path / "c.jsonl",
        '{"doc_id": "a", "label": "x", "text": "t"}\n'
        'not json\n'
        '{"doc_id": "", "label": "x", "text": "t"}\n'
        '{"doc_id": "b", "text": "no label"}\n'
        '{"doc_id": "a", "label": "y", "text": "dup"}\n'
        '{"doc_id": "c", "label": "y", "text": "ok"}\n',
    )
    docs, report = parse_corpus(p)
    assert [d.doc_id for d in docs] == ["a", "c"]
    assert report.rows_rejected == 4
    reasons = [r for _, r in report.rejection_reasons]
    assert any("JSON" in r for r in reasons)
    assert any("doc_id" in r for r in reasons)
    assert any("duplicate" in r for r in reasons)


def test_corpus_empty_and_single_class_errors(tmp_path):
    empty = write(tmp_path / "e.csv", "doc_id,label,text\n")
    with pytest.raises(EmptyCorpusError):
        parse_corpus(empty)
    mono = write(tmp_path / "m.csv", "doc_id,label,text\na,x,t\nb,x,u\n")
    with pytest.raises(DegenerateCorpusError):
        parse_corpus(mono)


# ---------------------------------------------------- accuracy records


def rec(**kw):
    base = dict(
        lm_type="lstm",
        task_id="sst2",
        subsample_index=0,
        m=100,
        n=200,
        correct_base=150,
        correct_extra=155,
        correct_test=160,
    )
    base.update(kw)
    return AccuracyRecord(**base)


def test_record_roundtrip_byte_identical(tmp_path):
    records = [rec(), rec(subsample_index=1, correct_test=170), rec(task_id="ag")]
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    write_accuracy_records(records, p1)
    parsed, report = parse_accuracy_records(p1)
    assert parsed == records
    assert report.rows_rejected == 0
    write_accuracy_records(parsed, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_record_header_enforced(tmp_path):
    p = write(tmp_path / "a.csv", "lm,task\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        parse_accuracy_records(p)
    with pytest.raises(ValueError, match="empty"):
        parse_accuracy_records(write(tmp_path / "b.csv", ""))


def test_record_validation_rejects_bad_rows(tmp_path):
    lines = [
        ACCURACY_HEADER,
        "lstm,sst2,0,100,200,150,155,160",   # good
        "lstm,sst2,0,100,200,150,155,160",   # duplicate key
        "lstm,sst2,1,100,200,201,155,160",   # count > n
        "lstm,sst2,2,100,200,-1,155,160",    # negative count
        "lstm,sst2,3,100,200,abc,155,160",   # non-integer
        "lstm,sst2,4,100,200,150,155",       # short row
        ",sst2,5,100,200,150,155,160",       # empty lm_type
    ]
    p = write(tmp_path / "a.csv", "\n".join(lines) + "\n")
    records, report = parse_accuracy_records(p)
    assert len(records) == 1
    assert report.rows_read == 7
    assert report.rows_rejected == 6
    # ordinals point at the offending data rows, 1-based
    assert [row for row, _ in report.rejection_reasons] == [2, 3, 4, 5, 6, 7]


def test_write_refuses_invalid_records(tmp_path):
    with pytest.raises(ValueError):
        write_accuracy_records([rec(correct_base=300)], tmp_path / "x.csv")
    with pytest.raises(ValueError):
        write_accuracy_records([rec(task_id="bad,comma")], tmp_path / "y.csv")


def test_record_key_groups_cells():
    a = rec(subsample_index=3)
    assert a.key == ("lstm", "sst2", 3, 100, 200)
