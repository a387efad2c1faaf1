import ast
import csv
import io
from pathlib import Path

import pytest

from lightcom import cli
from lightcom.runtime.store import SealedRecord, UnS


@pytest.fixture
def store(tmp_path, monkeypatch):
    path = tmp_path / "data.uns"
    monkeypatch.setenv("LIGHTCOM_UNS_PATH", str(path))
    assert cli.main(["keygen", "--seed", "3", "--modulus-bits", "256"]) == 0
    return path


def test_keygen_refuses_to_overwrite(store, capsys):
    assert cli.main(["keygen", "--seed", "3"]) == 2
    assert "--force" in capsys.readouterr().err
    assert cli.main(["keygen", "--seed", "4", "--modulus-bits", "256", "--force"]) == 0


def test_upload_retrieve_via_files(store, tmp_path, capsys):
    src = tmp_path / "in.txt"
    src.write_text("# values\nx=3\ny=-4\nz 5\n")
    assert cli.main(["upload", "--input", str(src)]) == 0
    out = tmp_path / "out.txt"
    assert cli.main(["retrieve", "x", "y", "z", "--out", str(out)]) == 0
    assert out.read_text().split() == ["x=3", "y=-4", "z=5"]


def test_pipeline_file(store, tmp_path, capsys):
    cli.main(["upload", "x=3", "y=-4", "z=5"])
    pipe = tmp_path / "p.txt"
    pipe.write_text("OP xy = SM x,y\nOP r = ADD xy,z\n")
    capsys.readouterr()
    assert cli.main(["pipeline", str(pipe), "--show"]) == 0
    assert "r=-7" in capsys.readouterr().out


def test_malformed_pipeline_exit_2(store, tmp_path):
    pipe = tmp_path / "bad.txt"
    pipe.write_text("OP xy SM x,y\n")
    assert cli.main(["pipeline", str(pipe)]) == 2
    assert cli.main(["pipeline", str(tmp_path / "missing.txt")]) == 2


def test_unknown_id_and_bad_value_exit_2(store):
    assert cli.main(["retrieve", "nothing"]) == 2
    assert cli.main(["upload", "x=abc"]) == 2


def test_tampered_store_exit_3(store, capsys):
    cli.main(["upload", "x=3"])
    uns = UnS(store)
    rec = uns.records()[0]
    tag = bytes([rec.tag[0] ^ 1]) + rec.tag[1:]
    uns.replace_raw(SealedRecord(rec.user_id, rec.id, rec.party, rec.epoch, tag, rec.ct))
    uns.save()
    assert cli.main(["retrieve", "x"]) == 3
    assert "integrity" in capsys.readouterr().err


def test_fpn_upload_retrieve(store, capsys):
    assert cli.main(["upload", "--fpn", "a=1250:0"]) == 0
    capsys.readouterr()
    assert cli.main(["retrieve", "--fpn", "a"]) == 0
    assert "a=1250:0" in capsys.readouterr().out


def test_missing_state_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv("LIGHTCOM_UNS_PATH", str(tmp_path / "none.uns"))
    assert cli.main(["retrieve", "x"]) == 2


def test_uns_flag_overrides_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LIGHTCOM_UNS_PATH", str(tmp_path / "env.uns"))
    flag = tmp_path / "flag.uns"
    assert cli.main(["keygen", "--insecure-toy-keys", "--uns", str(flag)]) == 0
    assert flag.with_name("flag.uns.state.json").exists()
    assert not (tmp_path / "env.uns.state.json").exists()


def test_demo_list_and_min_pir(capsys):
    assert cli.main(["demo"]) == 0
    assert "min-pir" in capsys.readouterr().out
    assert cli.main(["demo", "min-pir", "--seed", "5", "--modulus-bits", "256"]) == 0
    first = capsys.readouterr().out
    assert first.strip().endswith("retrieved 3")
    cli.main(["demo", "min-pir", "--seed", "5", "--modulus-bits", "256"])
    assert capsys.readouterr().out == first


def test_demo_unknown_exit_2():
    assert cli.main(["demo", "nope"]) == 2


def test_bench_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert cli.main(["bench", "--protocols", "SM", "--trials", "3", "--modulus-bits", "256",
                     "--out", str(out)]) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["protocol", "P", "n_bits", "l", "H", "phase", "mean_ms", "std_ms"]
    assert [r[5] for r in rows[1:]] == ["offline", "online"]
    offline, online = float(rows[1][6]), float(rows[2][6])
    assert online < offline


def test_bench_rejects_bad_grid():
    assert cli.main(["bench", "--protocols", "NOPE"]) == 2
    assert cli.main(["bench", "--trials", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["bench", "--parties", "x"])
    assert exc.value.code == 2


def test_cli_holds_no_protocol_logic():
    tree = ast.parse(Path(cli.__file__).read_text())
    imported = {node.module for node in ast.walk(tree) if isinstance(node, ast.ImportFrom)}
    assert not {"network", "context", ".runtime.network", ".runtime.context"} & imported
    names = {n.name for n in ast.walk(tree) if isinstance(n, ast.FunctionDef)}
    assert not [n for n in names if n.startswith("party_")]
