import numpy as np
import pytest

from harcnn import synthetic
from harcnn.cli import RunConfig, main, read_config_file
from harcnn.preprocessing import window_count

SMALL = ["--window", "40", "--stride", "20", "--conv1-kernel", "8", "--conv1-out-channels", "4",
         "--pool-window", "4", "--conv2-kernel", "3", "--conv2-out-channels", "4",
         "--fc-units", "16", "--batch-size", "16", "--epochs", "4", "--learning-rate", "0.01"]


@pytest.fixture(scope="module")
def tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    synthetic.write_tree(root, ["walking", "running", "jumping"], subjects=("s1", "s2"),
                         length=160, channels=3, seed=5)
    return root


@pytest.fixture(scope="module")
def trained(tree, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data-dir", str(tree), "--out-dir", str(out), "--seed", "7",
                 *SMALL]) == 0
    return out


def test_ingest_counts(tree, tmp_path, capsys):
    assert main(["ingest", "--data-dir", str(tree), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "activity,recordings,windows"
    per = window_count(160, 200, 100) * 2
    assert "jumping,2,%d" % per in out
    assert (tmp_path / "manifest.csv").read_text().count("\n") == 7
    assert main(["ingest", "--data-dir", str(tree), "--out-dir", str(tmp_path),
                 "--window", "40", "--stride", "20"]) == 0
    assert "walking,2,14" in capsys.readouterr().out


def test_ingest_missing_dir(tmp_path, capsys):
    assert main(["ingest", "--data-dir", str(tmp_path / "nope")]) == 2
    assert "nope" in capsys.readouterr().err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    assert main(["train", "--learning-rate", "-1"]) == 1


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--help"])
    assert exc.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for piece in ("(default: 200)", "(default: 1000)", "(default: 0.0001)", "(default: adam)"):
        assert piece in text


def test_default_echo():
    echo = RunConfig().echo()
    for line in ("batch_size = 200", "epochs = 1000", "learning_rate = 0.0001", "window = 200",
                 "stride = 100", "split_ratio = 0.7", "l2_lambda = 0.0001"):
        assert line + "\n" in echo


def test_config_file_precedence(tmp_path, tree, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# test\nepochs = 2\nlearning_rate = 0.5\nseed = 3\n")
    assert read_config_file(conf) == {"epochs": 2, "learning_rate": 0.5, "seed": 3}
    args = ["train", "--config", str(conf), "--data-dir", str(tree),
            "--out-dir", str(tmp_path / "o"), *SMALL]
    args[args.index("--epochs") + 1] = "1"
    assert main(args) == 0
    echo = capsys.readouterr().out
    assert "epochs = 1\n" in echo and "learning_rate = 0.01\n" in echo and "seed = 3\n" in echo
    conf.write_text("nonsense = 1\n")
    assert main(["train", "--config", str(conf)]) == 1


def test_train_outputs(trained):
    for name in ("checkpoint.harn", "history.csv", "test_split.harw", "confusion.csv",
                 "metrics.csv", "confusion.txt"):
        assert (trained / name).is_file()
    assert len((trained / "history.csv").read_text().splitlines()) == 5


def test_train_is_deterministic(tree, trained, tmp_path):
    assert main(["train", "--data-dir", str(tree), "--out-dir", str(tmp_path), "--seed", "7",
                 *SMALL]) == 0

    def strip_time(p):
        lines = p.read_text().splitlines()
        col = lines[0].split(",").index("seconds")
        return [[c for i, c in enumerate(line.split(",")) if i != col] for line in lines]

    assert strip_time(tmp_path / "history.csv") == strip_time(trained / "history.csv")
    assert (tmp_path / "checkpoint.harn").read_bytes() == (trained / "checkpoint.harn").read_bytes()


def test_eval_matches_training_report(trained, tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.harn"),
                 "--windows", str(trained / "test_split.harw"), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.csv").read_bytes() == (trained / "metrics.csv").read_bytes()
    assert (tmp_path / "confusion.csv").read_bytes() == (trained / "confusion.csv").read_bytes()
    assert capsys.readouterr().out.startswith("accuracy=")


def test_eval_on_directory(trained, tree, tmp_path):
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.harn"),
                 "--data-dir", str(tree), "--out-dir", str(tmp_path), "--per-trial",
                 "--averaging", "macro"]) == 0
    rows = (tmp_path / "confusion.csv").read_text().splitlines()[1:]
    assert sum(int(v) for r in rows for v in r.split(",")[1:]) == 6
    assert "averaging,macro" in (tmp_path / "metrics.csv").read_text()


def test_predict(trained, tree, capsys):
    path = tree / "s1" / "normal" / "Walking.txt"
    assert main(["predict", "--checkpoint", str(trained / "checkpoint.harn"),
                 "--file", str(path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == window_count(160, 40, 20) + 1
    assert lines[0].startswith("window 0 ")
    name, p = lines[-1].split(" p=")
    assert name in ("jumping", "running", "walking") and 0 < float(p) <= 1


def test_checkpoint_errors(trained, tree, tmp_path):
    bad = tmp_path / "cut.harn"
    bad.write_bytes((trained / "checkpoint.harn").read_bytes()[:-10])
    path = str(tree / "s1" / "normal" / "Walking.txt")
    assert main(["predict", "--checkpoint", str(bad), "--file", path]) == 4
    assert main(["predict", "--checkpoint", str(tmp_path / "missing.harn"), "--file", path]) == 4


def test_unknown_class_exit(trained, tmp_path, capsys):
    synthetic.write_tree(tmp_path, ["flying"], length=100)
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.harn"),
                 "--data-dir", str(tmp_path), "--out-dir", str(tmp_path / "o")]) == 5
    assert "flying" in capsys.readouterr().err


def test_divergence_exit(tree, tmp_path):
    args = ["train", "--data-dir", str(tree), "--out-dir", str(tmp_path), *SMALL]
    args[args.index("--learning-rate") + 1] = "1e30"
    args += ["--optimizer", "sgd"]
    with np.errstate(all="ignore"):
        assert main(args) == 3
