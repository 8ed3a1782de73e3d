import json
import math

import numpy as np
import pandas as pd
import pytest

from src.factorization import check_conditions
from src.hamiltonian import ModelSpec, assemble
from src.models import long_range_dimer_chain
from src.reporter import (
    dumps,
    frame,
    generate_pdf_report,
    hamiltonian_triplets,
    report_to_dict,
    to_jsonable,
    write_csv,
    write_json,
)


def test_to_jsonable_conversions():
    converted = to_jsonable({
        (0, 1): np.array([1 + 2j, 3.0]),
        "nan": float("nan"),
        "flag": np.bool_(True),
        "count": np.int64(3),
    })
    assert converted["0,1"] == [[1.0, 2.0], [3.0, 0.0]]
    assert converted["nan"] is None
    assert converted["flag"] is True
    assert converted["count"] == 3
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_dumps_is_deterministic():
    text = dumps({"b": 1.5, "a": [math.inf, 2]})
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [None, 2], "b": 1.5}


def test_report_to_dict_is_json_ready(tmp_path):
    candidate = long_range_dimer_chain().primary
    report = check_conditions(candidate.model, candidate.state)
    doc = report_to_dict(report)
    assert doc["verdict"] is True
    assert len(doc["conserved"]) == len(candidate.state.factors)

    out = tmp_path / "report.json"
    write_json(report, out)
    assert json.loads(out.read_text(encoding="utf-8"))["energy"] == pytest.approx(report.energy)


def test_write_json_to_stdout(capsys):
    write_json({"x": 1})
    assert json.loads(capsys.readouterr().out) == {"x": 1}


def test_csv_columns_keep_first_seen_order(tmp_path):
    rows = [{"J_z": 0.1, "E0": -1.0}, {"J_z": 0.2, "E0": -1.1, "E1": 0.3}]
    assert list(frame(rows).columns) == ["J_z", "E0", "E1"]

    out = tmp_path / "rows.csv"
    write_csv(rows, out)
    df = pd.read_csv(out)
    assert list(df.columns) == ["J_z", "E0", "E1"]
    assert math.isnan(df.loc[0, "E1"])
    assert df.loc[1, "E0"] == -1.1


def test_hamiltonian_triplets_rebuild_the_matrix():
    model = ModelSpec(spins=(0.5, 0.5), fields=[[0.2, 0, 0], [0, 0, 0.1]],
                      couplings={(0, 1): np.diag([1.0, 0.5, 0.3])})
    hamiltonian = assemble(model)
    df = hamiltonian_triplets(hamiltonian)
    rebuilt = np.zeros((4, 4), dtype=complex)
    rebuilt[df["row"].to_numpy(), df["col"].to_numpy()] = df["re"].to_numpy() + 1j * df["im"].to_numpy()
    assert np.allclose(rebuilt, hamiltonian.dense())
    assert list(df["row"]) == sorted(df["row"])


def test_pdf_report(tmp_path):
    candidate = long_range_dimer_chain().primary
    report = check_conditions(candidate.model, candidate.state)
    path = tmp_path / "reports" / "dimer.pdf"
    generate_pdf_report(report, str(path), model_label="long_range_dimer")
    assert path.exists()
    assert path.read_bytes()[:4] == b"%PDF"
