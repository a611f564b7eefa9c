import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streammoments import cli
from streammoments.harness import (COLUMNS, SCHEMA, BitBudget, ExperimentSpec,
                                   naive_table_bits, run_experiment,
                                   thread_count, to_csv, wilson_interval)
from streammoments.stream import GeneratorSpec


def small_spec(**kw):
    base = dict(algo="oracle", p=1.5, trials=2, seed=5,
                gen=GeneratorSpec("zipf", 50, 2000, seed=1))
    base.update(kw)
    return ExperimentSpec(**base)


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("xy"),
                          st.integers(0, 1000)), max_size=30))
def test_bit_budget_rollup_and_peak(events):
    root = BitBudget()
    for a, b, bits in events:
        root.child(a).child(b).record(bits)
        for node in [root] + list(root.children.values()):
            assert node.live == node.own + sum(c.live for c in node.children.values())
            assert node.peak >= node.live


def test_bit_budget_release_keeps_peak():
    root = BitBudget()
    root.child("a").record(100)
    root.child("a").release()
    assert root.live == 0 and root.peak == 100
    with pytest.raises(ValueError):
        root.record(-1)


def test_wilson_interval_brackets_rate():
    lo, hi = wilson_interval(80, 100)
    assert lo < 0.8 < hi
    assert wilson_interval(100, 100)[1] == 1.0
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_oracle_trial_is_exact():
    rows = run_experiment(small_spec(trials=1))
    assert rows[0]["estimate"] == rows[0]["exact"] and rows[0]["relerr"] == 0
    assert rows[0]["bits_peak"] == naive_table_bits(50, 2000)
    assert rows[-1]["trial"] == "summary" and rows[-1]["estimate"] == 1.0


def test_seeds_are_consecutive_and_csv_is_reproducible():
    spec = small_spec(algo="f2rand", trials=3)
    a, b = run_experiment(spec), run_experiment(small_spec(algo="f2rand", trials=3))
    assert [r["seed"] for r in a[:-1]] == [5, 6, 7]
    assert to_csv(a) == to_csv(b)


def test_csv_schema_header(tmp_path):
    out = tmp_path / "t.csv"
    run_experiment(small_spec(out=str(out)))
    lines = out.read_text().splitlines()
    assert lines[0] == f"# schema={SCHEMA}"
    assert next(csv.reader(io.StringIO(lines[1]))) == COLUMNS


def test_threads_give_same_rows(monkeypatch):
    one = to_csv(run_experiment(small_spec(algo="f2rand", trials=4)))
    monkeypatch.setenv("STREAMMOMENTS_THREADS", "3")
    assert thread_count() == 3
    assert to_csv(run_experiment(small_spec(algo="f2rand", trials=4))) == one
    monkeypatch.setenv("STREAMMOMENTS_THREADS", "lots")
    with pytest.raises(ValueError):
        thread_count()


@pytest.mark.parametrize("kw", [dict(algo="nope"), dict(trials=0), dict(eps=1.5),
                                dict(algo="fprand", p=2.5), dict(gen=None)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        run_experiment(small_spec(**kw))


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.csv"
    args = ["run", "--algo", "oracle", "--p", "1.0", "--gen", "uniform", "--n", "20",
            "--m", "500", "--csv-out", str(out)]
    assert cli.main(args) == 0
    assert out.read_text().startswith("# schema=")
    assert cli.main(["fprand", "--p", "3", "--gen", "zipf"]) == 1
    assert cli.main(["f2rand", "--epsilon", "0.5", "--gen", "uniform", "--n", "5000",
                     "--m", "300", "--min-rate", "1.01"]) == 2


def test_cli_gen_and_input(tmp_path):
    path = tmp_path / "s.bin"
    assert cli.main(["gen", "--gen", "zipf", "--n", "30", "--m", "3000",
                     "--out", str(path), "--binary"]) == 0
    out = tmp_path / "f2.csv"
    assert cli.main(["f2rand", "--epsilon", "0.3", "--input", str(path),
                     "--trials", "2", "--csv-out", str(out)]) == 0
    header = out.read_text().splitlines()[1].split(",")
    assert header[:5] == ["trial", "seed", "Y", "exactF2", "relerr"]
