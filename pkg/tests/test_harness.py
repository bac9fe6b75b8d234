import numpy as np
import pytest

from causaware.adjust import Strategy
from causaware.config import builtin_config
from causaware.errors import CausawareError
from causaware.harness import (
    FailureRecord,
    ResultRow,
    Stage,
    draw_replication_params,
    generate_datasets,
    run_experiment,
    run_replication,
    seed_for,
    summarize,
)
from causaware.reporting import results_csv, write_outputs


@pytest.fixture(scope="module")
def regr():
    return builtin_config("regr_exp1").replace(replications=2)


@pytest.fixture(scope="module")
def regr_run(regr):
    return run_experiment(regr)


def test_seed_streams_distinct():
    a = seed_for(0, 0, Stage.TEST_GENERATE, 1).random(4)
    assert np.array_equal(a, seed_for(0, 0, Stage.TEST_GENERATE, 1).random(4))
    for other in [(1, 0, Stage.TEST_GENERATE, 1), (0, 1, Stage.TEST_GENERATE, 1),
                  (0, 0, Stage.TEST_SELECT, 1), (0, 0, Stage.TEST_GENERATE, 2)]:
        assert not np.array_equal(a, seed_for(*other).random(4))


def test_row_count_and_order(regr, regr_run):
    rows, summary = regr_run
    assert len(rows) == 2 * 3 * 9
    keys = [(r.replication, r.strategy, r.env) for r in rows]
    assert keys[:3] == [(0, Strategy.CAUSALITY_AWARE, k) for k in (1, 2, 3)]
    assert all(r.metric == "mse" and r.value > 0 for r in rows)
    assert len(summary.cells) == 27 and not summary.failures


def test_deterministic(regr, regr_run):
    rows, _ = run_experiment(regr)
    assert results_csv(rows) == results_csv(regr_run[0])


def test_thread_count_irrelevant(regr, regr_run):
    rows, _ = run_experiment(regr, threads=4)
    assert results_csv(rows) == results_csv(regr_run[0])


def test_replication_prefix_stable(regr, regr_run):
    rows, _ = run_experiment(regr.replace(replications=1))
    assert rows == [r for r in regr_run[0] if r.replication == 0]


def test_seed_changes_results(regr, regr_run):
    rows, _ = run_experiment(regr.replace(master_seed=1))
    assert [r.value for r in rows] != [r.value for r in regr_run[0]]


def test_params_shared_across_envs(regr):
    params = draw_replication_params(regr, 0)
    train, tests = generate_datasets(regr, params, 0)
    assert train.n == regr.n_train and len(tests) == 9
    assert all(t.p == regr.feature_count for t in tests)


def test_summary_matches_rows(regr, regr_run):
    rows, summary = regr_run
    vals = [r.value for r in rows if r.strategy is Strategy.POOR_MANS and r.env == 4]
    cell = summary.cell(Strategy.POOR_MANS, 4)
    assert cell.mean == pytest.approx(np.mean(vals)) and cell.sd == pytest.approx(np.std(vals, ddof=1))
    mat = np.array([[r.value for r in rows if r.strategy is Strategy.NO_ADJUSTMENT and r.replication == k]
                    for k in range(2)])
    assert summary.stability[Strategy.NO_ADJUSTMENT].stability_error == pytest.approx(
        mat.std(axis=1, ddof=1).mean())


def test_summary_order_free(regr, regr_run):
    rows, summary = regr_run
    again = summarize(regr, list(reversed(rows)), [])
    assert again.cells == summary.cells


def test_failures_recorded_not_fatal(regr, monkeypatch):
    import causaware.harness as harness

    real = harness._score_strategy

    def flaky(config, train, tests, strategy, rep):
        if strategy is Strategy.POOR_MANS and rep == 1:
            raise CausawareError("boom")
        return real(config, train, tests, strategy, rep)

    monkeypatch.setattr(harness, "_score_strategy", flaky)
    rows, summary = run_experiment(regr)
    assert len(rows) == 2 * 3 * 9 - 9
    assert summary.failures == [FailureRecord(1, Strategy.POOR_MANS, "CausawareError: boom")]
    assert summary.cell(Strategy.POOR_MANS, 1).n_failed == 1
    assert summary.cell(Strategy.POOR_MANS, 1).n_ok == 1


def test_classification_replication():
    cfg = builtin_config("class_exp1").replace(replications=1)
    params = draw_replication_params(cfg, 0)
    train, tests = generate_datasets(cfg, params, 0)
    counts = train.cell_counts()
    assert train.n == 1000 and counts.sum() == 1000
    # train cells 0.45/0.05/0.05/0.45 -> strong C-Y association
    assert counts[0] + counts[3] > 800
    rows, failures = run_replication(cfg, params, 0)
    assert len(rows) + 9 * len(failures) == 4 * 9
    assert all(0.0 <= r.value <= 1.0 and r.metric == "auroc" for r in rows)


def test_outputs_written(tmp_path, regr_run):
    rows, summary = regr_run
    digests = write_outputs(tmp_path, rows, summary)
    names = {"results.csv", "summary.csv", "stability.csv", "failures.csv",
             "plotdata-causality_aware.tsv", "plotdata-poor_mans.tsv", "plotdata-no_adjustment.tsv"}
    assert set(digests) == names
    head = (tmp_path / "results.csv").read_text().splitlines()
    assert head[0] == "replication,strategy,env,metric,value" and len(head) == 55
    value = float(head[1].split(",")[-1])
    assert value == rows[0].value
    assert (tmp_path / "failures.csv").read_text() == "replication,strategy,error\n"
    assert isinstance(rows[0], ResultRow)
