import csv
import shutil

import pytest

from rwkg.cli import main
from rwkg.config import ConfigError, RunConfig, parse_assignments, train_config

SMALL = ["synth.n_diseases=3", "synth.n_genes=90", "synth.n_pathways=6", "synth.module_size=15",
         "synth.p_out=0.02", "synth.noise_edges=60"]
FAST = ["train.dim=8", "train.max_epochs=10", "train.eval_every=5", "train.patience=1",
        "train.batch_size=64", "train.negatives=4"]


def run(*args):
    return main([str(a) for a in args])


def sets(items):
    out = []
    for item in items:
        out += ["--set", item]
    return out


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert run("synth", "-o", root / "data", *sets(SMALL + ["seed=4"])) == 0
    return root / "data"


def table(path):
    rows = [r for r in csv.reader(l for l in path.read_text().splitlines() if not l.startswith("#"))]
    return rows[0], rows[1:]


def test_config_precedence_and_paths(tmp_path):
    (tmp_path / "sub").mkdir()
    cfg_file = tmp_path / "sub" / "run.cfg"
    cfg_file.write_text("# comment\nseed=3\nnodes=nodes.tsv  # trailing\ntrain.lr=0.1\nparams=best.cfg\n")
    (tmp_path / "sub" / "best.cfg").write_text("train.lr=0.2\nweight.noise=0.5\n")
    cfg = RunConfig.load(cfg_file, ["seed=7"], cwd=tmp_path)
    assert cfg.seed == 7
    assert cfg.get("nodes") == str((tmp_path / "sub" / "nodes.tsv").resolve())
    assert cfg.float("train.lr") == 0.2
    tc = train_config(cfg)
    assert tc.relation_weight == {"noise": 0.5} and tc.lr == 0.2
    cfg2 = RunConfig.load(cfg_file, ["train.lr=0.3"], cwd=tmp_path)
    assert cfg2.float("train.lr") == 0.3
    with pytest.raises(ConfigError):
        parse_assignments(["no equals sign"])
    with pytest.raises(ConfigError):
        RunConfig.load(cfg_file, ["train.dim=big"], cwd=tmp_path).int("train.dim")


def test_synth_ingest_split(data, capsys):
    cfg = data / "run.cfg"
    assert run("ingest", "-c", cfg) == 0
    out = capsys.readouterr().out
    genes = int(out.split("type\tgene\tnodes=")[1].split()[0])
    assert 80 <= genes <= 90  # genes without any edge never enter the graph
    assert run("split", "-c", cfg) == 0
    meta = (data / "out" / "split" / "split.meta").read_text()
    assert "cover=head" in meta and "test=" in meta


def test_ablation_matches_train_then_eval(data, tmp_path):
    cfg = data / "run.cfg"
    assert run("ablate", "-c", cfg, "-o", tmp_path / "ab", *sets(FAST)) == 0
    head, rows = table(tmp_path / "ab" / "ablation.csv")
    assert head[:4] == ["Variant", "hit@30", "Mean Rank", "Mean Percentile"]
    assert [r[0] for r in rows] == ["DG", "DG + PP", "DG + PP + NOISE"]
    assert rows[0][4:7] == ["0.000000"] * 3
    # stage 2 re-run by hand: train and eval on the first two layers
    stage = FAST + ["layers=DG,PP"]
    assert run("train", "-c", cfg, "-o", tmp_path / "st", *sets(stage)) == 0
    assert run("eval", "-c", cfg, "-o", tmp_path / "st", *sets(stage)) == 0
    text = (tmp_path / "st" / "metrics.csv").read_text()
    mp = [l.split(",")[1] for l in text.splitlines() if l.startswith("mean_percentile,")][0]
    assert mp == rows[1][3]


def test_single_layer_ablation(data, tmp_path):
    assert run("ablate", "-c", data / "run.cfg", "-o", tmp_path, *sets(FAST + ["layers=DG"])) == 0
    _, rows = table(tmp_path / "ablation.csv")
    assert len(rows) == 1 and rows[0][4:7] == ["0.000000"] * 3


def test_weighted_with_unit_weights_equals_original(data, tmp_path):
    extra = FAST + ["search.budget=2", "search.weight_low=1", "search.weight_high=1"]
    assert run("compare-weighted", "-c", data / "run.cfg", "-o", tmp_path, *sets(extra)) == 0
    head, rows = table(tmp_path / "weighted.csv")
    assert head == ["Variant", "hit@30", "Mean Rank", "Mean Percentile"]
    assert rows[0][0] == "Original" and rows[1][0] == "Relation-weighted"
    assert rows[0][1:] == rows[1][1:]
    assert (tmp_path / "best_params.cfg").read_text().startswith("weight.disease_gene=1.0\n")


def test_baselines_table_and_na(data, tmp_path):
    extra = FAST + ["baseline.skip=diamond.mean_rank,diamond.mean_percentile,neighborhood"]
    assert run("baselines", "-c", data / "run.cfg", "-o", tmp_path, *sets(extra)) == 0
    head, rows = table(tmp_path / "baselines.csv")
    assert head == ["Method", "hit@30", "hit@100", "Mean Rank", "Mean Percentile"]
    by = {r[0]: r for r in rows}
    assert by["DIAMOnD"][3:] == ["NA", "NA"]
    assert by["Direct neighborhood scoring"][1:] == ["NA"] * 4
    assert not (tmp_path / "ranked_neighborhood.tsv").exists()
    assert (tmp_path / "ranked_random_walk.tsv").read_text().count("\n") > 10


def test_external_self_comparison(data, tmp_path):
    truth = tmp_path / "truth.tsv"
    truth.write_text("# targets\nG01\nG02\nG03\n")
    extra = FAST + ["external.disease=D1", f"external.truth={truth}", "external.k=10"]
    assert run("external", "-c", data / "run.cfg", "-o", tmp_path / "a", *sets(extra)) == 0
    top = tmp_path / "a" / "top_predictions.tsv"
    ours = [l.split("\t")[1] for l in top.read_text().splitlines() if l[:1].isdigit()]
    assert len(ours) == 10
    mine = tmp_path / "mine.tsv"
    mine.write_text("".join(g + "\n" for g in ours))
    extra.append(f"external.list={mine}")
    assert run("external", "-c", data / "run.cfg", "-o", tmp_path / "b", *sets(extra)) == 0
    body = [l for l in (tmp_path / "b" / "curve_model.csv").read_text().splitlines() if not l.startswith("#")]
    other = [l for l in (tmp_path / "b" / "curve_external.csv").read_text().splitlines()
             if not l.startswith("#")]
    assert body == other and len(body) == 11


@pytest.mark.parametrize("command,extra", [
    ("train", []),
    ("ablate", []),
    ("baselines", ["baseline.skip=diamond"]),
    ("search", ["search.budget=2", "search.range.train.lr=0.01,0.1,log"]),
])
def test_rerun_is_byte_identical(data, tmp_path, command, extra):
    out = tmp_path / "o"
    args = [command, "-c", data / "run.cfg", "-o", out, *sets(FAST + extra)]
    assert run(*args) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}
    shutil.rmtree(out)
    assert run(*args) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}
    assert first == second and first
    for name, blob in first.items():
        if name.endswith((".csv", ".tsv")):
            assert b"# command=" + command.encode() + b"\n" in blob


def test_errors_exit_nonzero_with_one_line(data, tmp_path, capsys):
    assert run("train", "-c", tmp_path / "missing.cfg") == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("rwkg train: error:")
    assert run("train", "-c", data / "run.cfg", *sets(["layers=DG,BOGUS"])) == 1
    assert "BOGUS" in capsys.readouterr().err
    assert run("eval", "-c", data / "run.cfg", "-o", tmp_path / "none") == 1
    assert run("ablate", "-c", data / "run.cfg", *sets(["layers=PP,DG"])) == 1
    assert run("train", "-c", data / "run.cfg", *sets(["train.margin=-1"])) == 1
    capsys.readouterr()


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "rwkg", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "compare-weighted" in res.stdout
