from __future__ import annotations

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tncond.errors import ValidationError
from tncond.experiments import (
    ExperimentConfig,
    Row,
    StudyResult,
    csv_text,
    default_config,
    emit_csv,
    emit_svg,
    energy_trial,
    parse_csv,
    result_to_dict,
    run,
    summarize,
)


class TestSummary:
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
    @settings(max_examples=50, deadline=None)
    def test_quantile_ordering(self, values):
        s = summarize(values)
        assert s["q2.5"] <= s["q10"] <= s["q90"] <= s["q97.5"]
        assert min(values) - 1e-6 <= s["mean"] <= max(values) + 1e-6
        assert s["count"] == len(values)

    def test_empty(self):
        s = summarize([], dropped=2)
        assert np.isnan(s["mean"]) and s["count"] == 0 and s["dropped"] == 2


class TestConfig:
    def test_unknown_study(self):
        with pytest.raises(ValidationError):
            ExperimentConfig("nope")

    @pytest.mark.parametrize(
        "kw", [dict(samples=0), dict(N=(0,)), dict(D=(-1,)), dict(eps=-1.0), dict(center="left")]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            ExperimentConfig("center-perturb", **kw)

    def test_unknown_keys(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.from_dict({"study": "truncation", "bogus": 1})

    def test_json_round_trip(self, tmp_path):
        cfg = default_config("all-site", N=(6,), D=(4, 0))
        assert cfg.D == (4, None)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.from_json(path) == cfg

    def test_paper_scale(self):
        assert default_config("center-perturb", paper_scale=True).D[-1] == 128


class TestStudies:
    def test_product_state_ratio_is_one(self):
        res = run(default_config("center-perturb", N=(6,), D=(1,), samples=5, seed=1))
        assert res.get(6, 1, "mean") == pytest.approx(1.0, rel=1e-10)
        assert res.get(6, 1, "violations") == 0

    def test_center_perturb_above_one(self):
        res = run(default_config("center-perturb", N=(8,), D=(4,), samples=10, seed=2))
        assert res.get(8, 4, "q2.5") >= 1 - 1e-9

    def test_uncapped_uses_second_node(self):
        res = run(default_config("center-perturb-uncapped", N=(4,), samples=3, seed=2))
        assert res.get(4, None, "count") == 3

    def test_all_site_d1(self):
        res = run(default_config("all-site", N=(5,), D=(1,), samples=3, perturbations=10, seed=3))
        assert res.get(5, 1, "mean") == pytest.approx(1.0, abs=1e-6)

    def test_average_case_zero_sigma(self):
        res = run(default_config("average-case", D=(2,), samples=20, sigma=0.0, seed=4))
        assert res.get(3, 2, "mean") == 0.0 and res.get(3, 2, "theory") == 0.0

    def test_average_case_decreases_in_d(self):
        res = run(default_config("average-case", D=(2, 16), samples=200, seed=5))
        assert res.get(3, 16, "theory") < res.get(3, 2, "theory")

    def test_truncation(self):
        res = run(default_config("truncation", N=(6,), D=(8,), samples=5, eps=0.0, seed=6))
        assert res.get(6, 8, "mean") == 0.0
        res = run(default_config("truncation", N=(6,), D=(8,), samples=5, eps=1e-3, seed=6))
        assert res.get(6, 8, "q97.5") <= 1 + 100 * 1e-3

    def test_truncation_product_state(self):
        res = run(default_config("truncation", N=(6,), D=(1,), samples=3, eps=1e-2, seed=6))
        assert res.get(6, 1, "mean") == pytest.approx(0.0, abs=1e-12)

    def test_energy_parallel_direction(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, (6, 6))
        H = (a + a.T) / 2
        w, V = np.linalg.eigh(H)
        err, bound = energy_trial(H, V[:, 0], w[0], np.abs(w).max(), 0.3 * V[:, 0])
        assert err == pytest.approx(0.0, abs=1e-14) and bound == pytest.approx(0.0, abs=1e-28)

    def test_energy_quadratic(self):
        res = run(default_config("energy-quadratic", N=(8,), samples=10, perturbations=10, seed=7))
        assert abs(res.get(8, None, "slope") - 2) < 0.1
        assert res.get(8, None, "violations") == 0
        assert res.get(8, None, "trials") == 300

    def test_threads_env_does_not_change_output(self, monkeypatch):
        cfg = default_config("center-perturb", N=(6,), D=(2, 4), samples=6, seed=8)
        first = csv_text(run(cfg))
        monkeypatch.setenv("TNCOND_THREADS", "1")
        assert csv_text(run(cfg)) == first
        monkeypatch.setenv("TNCOND_THREADS", "many")
        with pytest.raises(ValidationError):
            run(cfg)

    def test_keep_raw(self):
        res = run(default_config("truncation", N=(4,), D=(2,), samples=3, seed=9, keep_raw=True))
        assert len(res.raw[(4, 2)]) == 3


class TestOutput:
    def _result(self):
        return StudyResult("all-site", [Row(8, 4, "mean", 1.25), Row(8, None, "mean", 0.1 + 0.2)])

    def test_csv_round_trip(self, tmp_path):
        res = self._result()
        text = csv_text(res)
        assert text.splitlines()[0] == "study,N,D,stat,value"
        assert "all-site,8,0,mean,0.30000000000000004" in text
        path = tmp_path / "out.csv"
        emit_csv(res, path)
        back = parse_csv(path)
        assert back.study == res.study and back.rows == res.rows
        assert parse_csv(text).rows == res.rows

    def test_empty_csv(self):
        assert csv_text(StudyResult("truncation")) == "study,N,D,stat,value\n"
        assert parse_csv("study,N,D,stat,value\n").rows == []

    def test_bad_header(self):
        with pytest.raises(ValidationError):
            parse_csv("a,b\n1,2\n")

    def test_write_failure_names_path(self, tmp_path):
        missing = tmp_path / "no" / "such" / "dir" / "x.csv"
        with pytest.raises(OSError, match="x.csv"):
            emit_csv(self._result(), missing)

    @pytest.mark.parametrize("study", ["center-perturb", "all-site-uncapped", "average-case", "energy-quadratic"])
    def test_svg_is_xml_and_deterministic(self, tmp_path, study):
        overrides = {
            "center-perturb": dict(N=(6,), D=(2, 4), samples=4),
            "all-site-uncapped": dict(N=(4, 5), samples=3, perturbations=5),
            "average-case": dict(D=(2, 4), samples=50),
            "energy-quadratic": dict(N=(6,), samples=3, perturbations=3),
        }[study]
        res = run(default_config(study, seed=10, **overrides))
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        emit_svg(res, a)
        emit_svg(res, b)
        root = ET.parse(a).getroot()
        assert root.tag.endswith("svg")
        assert a.read_bytes() == b.read_bytes()

    def test_result_to_dict(self):
        d = result_to_dict(self._result())
        assert d["rows"][1] == {"N": 8, "D": None, "stat": "mean", "value": 0.1 + 0.2}
