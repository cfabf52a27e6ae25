import numpy as np
import pytest

from popeb.cli import main
from popeb.config import ConfigError, ExperimentConfig, parse_int_list, read_config_file
from popeb.data import ParseError, load_bow, load_table, load_vectors, synth_contaminated_counts


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_table(tmp_path):
    d = load_table(write(tmp_path, "t.csv", "1.0, 2.0\n3.0, 5.0\n"))
    assert (d.n, d.dim) == (2, 2)
    assert np.allclose(d.values[:, 0], [-1, 1]) and np.all(d.values[:, 1] == 1)
    assert np.allclose(d.targets, [1, 3])
    d = load_table(write(tmp_path, "w.txt", "# header\n0.1 1 2\n0.2 3 4\n0.3 5 9\n"), target_scale=100)
    assert d.dim == 3 and np.allclose(d.targets, [10, 20, 30])


@pytest.mark.parametrize("text,line", [("", None), ("1 2\n3\n", 2), ("1 2\n3 x\n", 2)])
def test_load_table_errors(tmp_path, text, line):
    with pytest.raises(ParseError) as err:
        load_table(write(tmp_path, "bad.txt", text))
    assert err.value.line == line


def test_load_vectors(tmp_path):
    d = load_vectors(write(tmp_path, "v.csv", "1,2\n3,4\n5,9\n"))
    assert d.kind == "vector" and np.allclose(d.values.mean(axis=0), 0)


def test_load_bow(tmp_path):
    d = load_bow(write(tmp_path, "a.bow", "2\n3\n2\n1 1 2\n2 3 1\n"))
    assert d.doc_lengths().tolist() == [2, 1]
    assert d.docs[1].word_ids.tolist() == [2]
    d = load_bow(write(tmp_path, "b.bow", "1\n3\n2\n1 2 2\n1 2 3\n"))
    assert d.docs[0].counts.tolist() == [5]
    with pytest.raises(ParseError):
        load_bow(write(tmp_path, "c.bow", "2\n3\n2\n1 4 2\n2 3 1\n"))
    with pytest.raises(ParseError):
        load_bow(write(tmp_path, "d.bow", "2\n3\n1\n1 1 2\n"))


def test_contaminated_counts_means():
    pure = synth_contaminated_counts(10**4, contamination=0.0, seed=1).values
    assert abs(pure.mean() - 5) <= 3 * np.sqrt(5 / 10**4)
    mixed = synth_contaminated_counts(10**5, seed=2).values
    assert abs(mixed.mean() - 7.25) <= 3 * np.sqrt(103.4375 / 10**5)
    with pytest.raises(ValueError):
        synth_contaminated_counts(10, contamination=1.0)


def test_config_parsing(tmp_path):
    assert parse_int_list("0-3,7") == [0, 1, 2, 3, 7]
    p = write(tmp_path, "c.cfg", "# comment\nB = 7\nseeds = 2-3\n\nmethods = bayes, popeb-map\n")
    assert read_config_file(p)["B"] == "7"
    cfg = ExperimentConfig.load("gamma-poisson", p)
    assert cfg.int("B") == 7 and cfg.seeds == [2, 3] and cfg.methods == ["bayes", "popeb-map"]
    assert ExperimentConfig.load("gamma-poisson", p, seed=9).seeds == [9]
    # seeds do not change the hash; settings do
    assert ExperimentConfig.load("gamma-poisson", p, seed=9).hash == cfg.hash
    assert ExperimentConfig("gamma-poisson", {"B": "8"}).hash != cfg.hash


@pytest.mark.parametrize(
    "exp,values",
    [
        ("nope", {}),
        ("blr", {"K": "3"}),
        ("gmm", {"methods": "bayes"}),
        ("blr", {"split": "1.0"}),
        ("lda", {"seeds": "-1"}),
        ("gmm", {"experiment": "lda"}),
    ],
)
def test_config_errors(exp, values):
    with pytest.raises((ConfigError, ValueError)):
        ExperimentConfig(exp, values)


def test_config_file_syntax_error(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(write(tmp_path, "x.cfg", "B 7\n"))


def test_cli_gamma_poisson_outputs(tmp_path):
    cfg = write(tmp_path, "g.cfg", "seeds = 0-1\nB = 10\nn = 100\nn_test = 200\n")
    assert main(["gamma-poisson", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "gamma-poisson.csv").read_text().splitlines()
    # 2 seeds x (2 priors x 3 methods + eb prior x 3 methods)
    assert len(rows) == 1 + 2 * 9
    header = rows[0].split(",")
    assert header[:3] == ["experiment", "config_hash", "seed"]
    pmf = (tmp_path / "o" / "gamma-poisson_pmf.csv").read_text().splitlines()
    assert len(pmf) == 1 + 2 * 101
    assert "population" in pmf[0] and "base:popeb-fb" in pmf[0]


def test_cli_blr_and_seed_override(tmp_path):
    cfg = write(tmp_path, "b.cfg", "seeds = 0-5\nn_splits = 2\n")
    assert main(["blr", "--config", str(cfg), "--out", str(tmp_path), "--seed", "3"]) == 0
    rows = [r.split(",") for r in (tmp_path / "blr.csv").read_text().splitlines()[1:]]
    assert len(rows) == 6 and {r[2] for r in rows} == {"3"}


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "b.cfg", "bogus = 1\n")
    assert main(["blr", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_cli_failing_seed_exit_code(tmp_path):
    cfg = write(tmp_path, "b.cfg", f"data = {tmp_path / 'missing.csv'}\n")
    assert main(["blr", "--config", str(cfg), "--out", str(tmp_path)]) == 1
