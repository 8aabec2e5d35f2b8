import math
import os

import numpy as np
import pytest

from services.benchmark import (
    ADAPTIVE,
    ENGINES,
    GASAC,
    RANSAC,
    AggregateCurve,
    BenchConfig,
    build_config,
    densify,
    load_config,
    ratio_label,
    read_curve,
    run_benchmark,
    run_engine,
    summarize_final,
)
from services.consensus import RunTrace
from services.datagen import generate
from services.errors import ConfigInvalid, MissingBaseline
from services.genetics import AdaptiveParams


def _curve(finals, ratio=0.1):
    return AggregateCurve(ratio=ratio, budget=1, means={e: np.array([s]) for e, s in finals.items()})


def _small_config(tmp_path, **overrides):
    values = {"n": "30", "ratios": "0.3,0.5", "budget": "40", "reps": "3", "out": str(tmp_path / "out")}
    values.update(overrides)
    return build_config(values)


class TestConfig:
    def test_defaults(self):
        config = build_config({})
        assert config == BenchConfig()
        assert config.inlier_ratios == (0.1, 0.2, 0.3, 0.4)
        assert config.engines == ENGINES

    def test_string_values_are_parsed(self):
        config = build_config({"task": "homography", "n": "120", "ratios": "0.2, 0.4", "engines": "ransac,adaptive",
                               "gamma": "5", "delta": "0.1", "pop": "12", "elitism": "2", "workers": "3"})
        assert config.task == "homography"
        assert config.inlier_ratios == (0.2, 0.4)
        assert config.engines == (RANSAC, ADAPTIVE)
        assert config.params == AdaptiveParams(gamma=5.0, delta=0.1, population_size=12, elitism=2)
        assert config.workers == 3

    @pytest.mark.parametrize("values, field", [
        ({"task": "circle"}, "task"),
        ({"n": "seven"}, "n"),
        ({"n": "4"}, "n"),
        ({"ratios": "0.1,1.5"}, "ratios"),
        ({"ratios": "0.005"}, "ratios"),
        ({"budget": "0"}, "budget"),
        ({"budget": "5"}, "budget"),
        ({"reps": "0"}, "reps"),
        ({"engines": "ransac,prosac"}, "engines"),
        ({"engines": "gasac,gasac"}, "engines"),
        ({"gamma": "0.5"}, "gamma"),
        ({"delta": "2"}, "delta"),
        ({"pop": "3"}, "pop"),
        ({"elitism": "10"}, "elitism"),
        ({"seed": "-1"}, "seed"),
        ({"sigma": "-0.1"}, "sigma"),
        ({"box": "0"}, "box"),
        ({"threshold": "0"}, "threshold"),
        ({"workers": "0"}, "workers"),
        ({"colour": "red"}, "colour"),
    ])
    def test_invalid_field_is_named(self, values, field):
        with pytest.raises(ConfigInvalid) as info:
            build_config(values)
        assert info.value.field == field
        assert str(info.value).startswith(f"{field}: ")

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "bench.conf"
        path.write_text("# desk run\ntask = line\nratios = 0.1,0.2\nbudget = 50\nreps = 2\n")
        config = build_config(load_config(str(path)))
        assert config.inlier_ratios == (0.1, 0.2)
        assert config.budget == 50 and config.repetitions == 2

    def test_load_config_rejects_unknown_key(self, tmp_path):
        path = tmp_path / "bench.conf"
        path.write_text("budget = 50\nbudjet = 60\n")
        with pytest.raises(ConfigInvalid) as info:
            load_config(str(path))
        assert info.value.field == "budjet"

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            load_config(str(tmp_path / "missing.conf"))


class TestDensify:
    def test_forward_fill(self):
        trace = RunTrace(series=[(1, 2), (2, 2), (3, 5)])
        np.testing.assert_array_equal(densify(trace, 6), [2, 2, 5, 5, 5, 5])

    def test_empty_trace(self):
        np.testing.assert_array_equal(densify(RunTrace(), 3), [0, 0, 0])

    def test_single_run_curve(self, tmp_path):
        config = _small_config(tmp_path, reps="1", budget="10", ratios="0.5")
        result = run_benchmark(config)
        data = generate(config.synthetic_spec(0.5, 0))
        for engine in ENGINES:
            trace = run_engine(engine, config.estimator(), data, config.params, 10, config.base_seed)
            np.testing.assert_array_equal(result.curves[0].means[engine], densify(trace, 10))


class TestSummary:
    def test_reference_ordering(self):
        rows = summarize_final(_curve({RANSAC: 124, GASAC: 126, ADAPTIVE: 132}))
        assert [r.engine for r in rows] == [RANSAC, GASAC, ADAPTIVE]
        assert rows[0].improvement_pct == 0.0
        assert rows[1].improvement_pct == pytest.approx(1.6129, abs=1e-4)
        assert rows[2].improvement_pct == pytest.approx(6.4516, abs=1e-4)

    def test_equal_scores(self):
        rows = summarize_final(_curve({RANSAC: 50, GASAC: 50, ADAPTIVE: 50}))
        assert [r.improvement_pct for r in rows] == [0.0, 0.0, 0.0]

    def test_ransac_only(self):
        rows = summarize_final(_curve({RANSAC: 17}))
        assert len(rows) == 1 and rows[0].improvement_pct == 0.0

    def test_zero_baseline(self):
        rows = summarize_final(_curve({RANSAC: 0, ADAPTIVE: 3}))
        assert rows[1].improvement_pct == math.inf

    def test_averages_over_ratios(self):
        rows = summarize_final([_curve({RANSAC: 10, ADAPTIVE: 12}, 0.1), _curve({RANSAC: 30, ADAPTIVE: 32}, 0.2)])
        assert rows[1].mean_final_score == 22.0
        assert rows[1].improvement_pct == pytest.approx(10.0)

    def test_missing_baseline(self):
        with pytest.raises(MissingBaseline):
            summarize_final(_curve({GASAC: 4, ADAPTIVE: 5}))

    def test_ratio_label(self):
        assert [ratio_label(r) for r in (0.1, 0.2, 0.3, 0.4, 0.05)] == ["10", "20", "30", "40", "5"]


class TestRunBenchmark:
    def test_writes_every_output(self, tmp_path):
        config = _small_config(tmp_path)
        result = run_benchmark(config)
        out = config.output_dir
        assert sorted(os.listdir(out)) == sorted(
            ["curve_30.csv", "curve_50.csv", "summary_30.csv", "summary_50.csv", "summary.csv"]
        )
        curve = read_curve(os.path.join(out, "curve_30.csv"))
        assert list(curve) == list(ENGINES)
        assert all(len(series) == 40 for series in curve.values())
        assert all(np.all(np.diff(series) >= 0) for series in curve.values())
        assert [row.engine for row in result.summary] == list(ENGINES)

    def test_identical_outputs_across_worker_counts(self, tmp_path):
        first = _small_config(tmp_path, out=str(tmp_path / "a"))
        second = _small_config(tmp_path, out=str(tmp_path / "b"), workers="2")
        run_benchmark(first)
        run_benchmark(second)
        for name in os.listdir(first.output_dir):
            with open(os.path.join(first.output_dir, name), "rb") as a, \
                    open(os.path.join(second.output_dir, name), "rb") as b:
                assert a.read() == b.read()

    def test_no_summary_without_baseline(self, tmp_path):
        config = _small_config(tmp_path, engines="gasac,adaptive", ratios="0.5")
        result = run_benchmark(config)
        assert result.summary == []
        assert os.listdir(config.output_dir) == ["curve_50.csv"]

    @pytest.mark.slow
    def test_method_ordering_at_desk_scale(self, tmp_path):
        config = build_config({"n": "200", "ratios": "0.1,0.2,0.3,0.4", "budget": "400", "reps": "100",
                               "sigma": "0.5", "threshold": "1.0", "out": str(tmp_path), "workers": "4"})
        result = run_benchmark(config)
        for ratio, rows in result.per_ratio.items():
            scores = {row.engine: row.mean_final_score for row in rows}
            assert scores[ADAPTIVE] >= scores[GASAC] >= scores[RANSAC]
            if ratio <= 0.2:
                assert scores[ADAPTIVE] >= 1.02 * scores[RANSAC]


class TestEngineBudget:
    def _config(self, tmp_path, ratio):
        return build_config({"n": "200", "ratios": str(ratio), "budget": "400", "out": str(tmp_path)})

    def test_ransac_spends_whole_budget_at_high_ratio(self, tmp_path):
        config = self._config(tmp_path, 0.4)
        data = generate(config.synthetic_spec(0.4, 0))
        trace = run_engine(RANSAC, config.estimator(), data, config.params, config.budget, config.base_seed)
        assert trace.models_generated == 400

    def test_engines_generate_the_same_number_of_models(self, tmp_path):
        config = self._config(tmp_path, 0.1)
        for repetition in range(3):
            data = generate(config.synthetic_spec(0.1, repetition))
            counts = {engine: run_engine(engine, config.estimator(), data, config.params, config.budget,
                                         config.base_seed + repetition).models_generated
                      for engine in ENGINES}
            assert set(counts.values()) == {400}

    def test_adaptive_keeps_up_with_ransac_at_ten_percent(self, tmp_path):
        config = self._config(tmp_path, 0.1)
        finals = {RANSAC: [], ADAPTIVE: []}
        for repetition in range(20):
            data = generate(config.synthetic_spec(0.1, repetition))
            for engine in finals:
                trace = run_engine(engine, config.estimator(), data, config.params, config.budget,
                                   config.base_seed + repetition)
                finals[engine].append(trace.best_inliers)
        assert np.mean(finals[ADAPTIVE]) >= 0.95 * np.mean(finals[RANSAC])


class TestWriteOutputs:
    @staticmethod
    def _fail_summaries(monkeypatch):
        def broken(rows, output_path):
            raise OSError("disk full")
        monkeypatch.setattr("services.benchmark.write_summary", broken)

    def test_failed_write_leaves_no_partial_outputs(self, tmp_path, monkeypatch):
        config = _small_config(tmp_path, ratios="0.5", reps="1")
        self._fail_summaries(monkeypatch)
        with pytest.raises(OSError):
            run_benchmark(config)
        assert os.listdir(tmp_path) == []

    def test_failed_write_keeps_previous_outputs(self, tmp_path, monkeypatch):
        config = _small_config(tmp_path, ratios="0.5", reps="1")
        os.makedirs(config.output_dir)
        previous = os.path.join(config.output_dir, "curve_50.csv")
        with open(previous, "w", encoding="utf-8") as f:
            f.write("models,ransac\n1,3.000000\n")
        self._fail_summaries(monkeypatch)
        with pytest.raises(OSError):
            run_benchmark(config)
        assert os.listdir(config.output_dir) == ["curve_50.csv"]
        with open(previous, encoding="utf-8") as f:
            assert f.read() == "models,ransac\n1,3.000000\n"
        assert sorted(os.listdir(tmp_path)) == ["out"]

    def test_rerun_replaces_outputs_in_existing_directory(self, tmp_path):
        config = _small_config(tmp_path, ratios="0.5", reps="1")
        run_benchmark(config)
        first = read_curve(os.path.join(config.output_dir, "curve_50.csv"))
        run_benchmark(config)
        assert sorted(os.listdir(config.output_dir)) == ["curve_50.csv", "summary.csv", "summary_50.csv"]
        second = read_curve(os.path.join(config.output_dir, "curve_50.csv"))
        assert all(np.array_equal(first[e], second[e]) for e in first)
