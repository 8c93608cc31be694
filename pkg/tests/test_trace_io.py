import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atpo.core import AtpoError, DifficultyCurves
from atpo.model import Dims, init_params
from atpo.sampler import DecodeSpec, rollout
from atpo.tasks import generate
from atpo.trace_io import (CURVES_HEADER, ParseError, append_record, read_checkpoint, read_curves,
                           read_dataset, read_records, read_traces, trace_to_dict, write_checkpoint, write_curves,
                           write_dataset, write_traces)

DIMS = Dims(V=14, P=8, L=16, d=32)
PROMPT = [2, 3, 4, 5, 6, 7, 13, 1]


def _traces(n=3):
    p = init_params(0, DIMS, scale=0.3)
    return [rollout(p, PROMPT, DecodeSpec(T=8, L=16, seed=1), 0, r).with_outcome(0.25 * r, r == 2)
            for r in range(n)]


def test_trace_round_trip(tmp_path):
    trs = _traces()
    write_traces(tmp_path / "t.jsonl", trs)
    assert read_traces(tmp_path / "t.jsonl") == trs
    write_traces(tmp_path / "t.jsonl", trs[:1], append=True)
    assert len(read_traces(tmp_path / "t.jsonl")) == 4


def test_trace_errors(tmp_path):
    d = json.loads(json.dumps(trace_to_dict(_traces(1)[0])))
    d["extra"] = 1
    (tmp_path / "x.jsonl").write_text(json.dumps(d) + "\n")
    with pytest.raises(AtpoError):
        read_traces(tmp_path / "x.jsonl")
    assert len(read_traces(tmp_path / "x.jsonl", strict=False)) == 1
    (tmp_path / "y.jsonl").write_text("{not json\n")
    with pytest.raises(ParseError) as e:
        read_traces(tmp_path / "y.jsonl")
    assert e.value.line == 1
    with pytest.raises(AtpoError) as e:
        read_traces(tmp_path / "missing.jsonl")
    assert e.value.code == "IO_ERROR"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=30), st.floats(1, 1e6))
def test_curves_round_trip_exact(tmp_path_factory, h, cm0):
    c = DifficultyCurves.from_means(h, [cm0 + i for i in range(len(h))])
    path = tmp_path_factory.mktemp("c") / "c.csv"
    write_curves(path, c)
    assert read_curves(path) == c


def test_curves_errors(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text(CURVES_HEADER + "\n1,1.0,1.0,0\n2,1.5,1.0,0.7\n")
    with pytest.raises(AtpoError) as e:
        read_curves(p)
    assert e.value.code == "ROEC_INCONSISTENT"
    p.write_text("a,b\n")
    with pytest.raises(ParseError):
        read_curves(p)


def test_records_and_torn_line(tmp_path):
    p = tmp_path / "run.jsonl"
    append_record(p, {"iteration": 0, "x": 0.1})
    append_record(p, {"iteration": 1, "x": 1 / 3})
    assert read_records(p)[1]["x"] == 1 / 3
    with open(p, "a") as f:
        f.write('{"iteration": 2, "x"')
    with pytest.raises(ParseError) as e:
        read_records(p)
    assert e.value.line == 3


def test_dataset_round_trip(tmp_path):
    insts = generate("sum", 5, 16, 0)
    write_dataset(tmp_path / "d.tsv", insts)
    back = read_dataset(tmp_path / "d.tsv", 16)
    assert [(x.prompt, x.gold) for x in back] == [(x.prompt, x.gold) for x in insts]
    (tmp_path / "bad.tsv").write_text("copy\t123\n")
    with pytest.raises(ParseError):
        read_dataset(tmp_path / "bad.tsv", 16)


def test_checkpoint_round_trip(tmp_path):
    p = init_params(3, DIMS)
    write_checkpoint(tmp_path / "c.bin", p, seed=3)
    q, seed = read_checkpoint(tmp_path / "c.bin", expect=DIMS)
    assert seed == 3
    np.testing.assert_array_equal(q.flat(), p.flat().astype(np.float32).astype(np.float64))
    raw = (tmp_path / "c.bin").read_bytes()
    magic, version, V = struct.unpack_from("<8sII", raw)
    assert (magic, version, V) == (b"ATPOCKPT", 1, 14)
    with pytest.raises(AtpoError) as e:
        read_checkpoint(tmp_path / "c.bin", expect=Dims(12, 8, 16, 32))
    assert e.value.code == "HEADER_MISMATCH"
    (tmp_path / "t.bin").write_bytes(raw[:-4])
    with pytest.raises(AtpoError) as e:
        read_checkpoint(tmp_path / "t.bin")
    assert e.value.code == "BAD_CHECKPOINT"


def test_empty_trace_file_and_single_step_curves(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert read_traces(tmp_path / "e.jsonl") == []
    (tmp_path / "one.csv").write_text(CURVES_HEADER + "\n1,0.5,2.0,0\n")
    c = read_curves(tmp_path / "one.csv")
    assert c.T == 1 and c.roec[0] == 0


def test_truncated_trace_line(tmp_path):
    line = json.dumps(trace_to_dict(_traces(1)[0]))
    (tmp_path / "t.jsonl").write_text(line + "\n" + line[: len(line) // 2] + "\n")
    with pytest.raises(ParseError) as e:
        read_traces(tmp_path / "t.jsonl")
    assert e.value.line == 2 and ":2:" in str(e.value)
