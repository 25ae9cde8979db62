"""
Tests for retention/pipeline.py
"""
import json

import numpy as np
import pytest

from retention.core.errors import SingleGroupError
from retention.data.batching import embed_notes
from retention.data.folds import make_folds
from retention.data.generator import generate_cohort
from retention.data.schema import CohortSpec
from retention.pipeline import (
    audit,
    paired_mitigation_run,
    run_training,
    select,
    summarize_runs,
    train_fold,
    training_set,
)
from retention.text.embedding import HashingEmbedder

NOTE_DIM = 8


@pytest.fixture(scope="module")
def biased():
    """120 students with extra female dropouts, so every group/label cell is populated."""
    dataset = generate_cohort(CohortSpec(n_students=120, signal_strength=8.0, gender_bias=0.1, seed=4))
    return dataset, embed_notes(dataset, HashingEmbedder(NOTE_DIM, seed=0))


def _config(run_config, **sections):
    update = {name: getattr(run_config, name).model_copy(update=values) for name, values in sections.items()}
    return run_config.model_copy(update=update)


class TestTrainingSet:
    def test_plain(self, cohort, run_config):
        records, weights = training_set(cohort, run_config, seed=0)
        assert records == cohort
        assert weights is None

    def test_smote_then_reweigh(self, cohort, run_config):
        config = _config(run_config, smote={"enabled": True, "k": 3}, fairness={"mitigation": "reweigh"})
        records, weights = training_set(cohort, config, seed=0)
        assert len(records) > len(cohort)
        assert weights.shape == (len(records),)


class TestRunTraining:
    def test_fold_seeds_and_ids(self, cohort, run_config, note_vectors):
        config = _config(run_config, split={"mode": "kfold", "k": 3})
        runs = run_training(cohort, config, note_vectors, NOTE_DIM)
        assert [run.fold.index for run in runs] == [0, 1, 2]
        test_ids = [i for run in runs for i in run.test_ids]
        assert sorted(test_ids) == sorted(r.id for r in cohort)
        for run in runs:
            assert not set(run.train_ids) & set(run.test_ids)
            assert run.meta(config)["seed"] == config.seed

    def test_workers_do_not_change_results(self, cohort, run_config, note_vectors):
        config = _config(run_config, split={"mode": "kfold", "k": 2})
        serial = run_training(cohort, config, note_vectors, NOTE_DIM, workers=1)
        parallel = run_training(cohort, config, note_vectors, NOTE_DIM, workers=2)
        for a, b in zip(serial, parallel):
            assert [row.loss for row in a.result.trace] == [row.loss for row in b.result.trace]

    def test_same_seed_same_report(self, cohort, run_config, note_vectors):
        reports = []
        for _ in range(2):
            runs = run_training(cohort, run_config, note_vectors, NOTE_DIM)
            reports.append(summarize_runs(runs, cohort, note_vectors))
        assert reports[0] == reports[1]
        assert reports[0]["summary"]["fd"]["folds"] == 1

    def test_synthetic_ids_not_recorded(self, cohort, run_config, note_vectors):
        config = _config(run_config, smote={"enabled": True, "k": 3})
        fold = make_folds(cohort, "holdout", seed=0)[0]
        run = train_fold(cohort, fold, config, note_vectors, NOTE_DIM)
        assert not any("~smote" in i for i in run.train_ids)

    def test_select_keeps_dataset_order(self, cohort):
        ids = [cohort[5].id, cohort[1].id]
        assert [r.id for r in select(cohort, ids)] == [cohort[1].id, cohort[5].id]


class TestAudit:
    def test_without_mitigation(self, cohort, run_config, note_vectors):
        run = run_training(cohort, run_config, note_vectors, NOTE_DIM)[0]
        report = audit(run.network, cohort, run_config, note_vectors, run.train_ids, run.test_ids)
        assert report["mitigation"] == "none"
        assert report["after"] is None

    @pytest.mark.parametrize("mitigation", ["reweigh", "regularizer"])
    def test_paired_run_reports_both(self, biased, run_config, mitigation):
        dataset, vectors = biased
        config = _config(run_config, fairness={"mitigation": mitigation})
        report = paired_mitigation_run(dataset, config, vectors, NOTE_DIM)
        assert report["mitigation"] == mitigation
        assert report["after"] is not None
        assert report["accuracy_delta"] == pytest.approx(report["after"]["accuracy"] - report["before"]["accuracy"])

    def test_mitigated_retrain_uses_fold_seed(self, cohort, run_config, note_vectors):
        config = _config(run_config, split={"mode": "kfold", "k": 2})
        run = run_training(cohort, config, note_vectors, NOTE_DIM)[1]
        assert run.meta(config)["train_seed"] == config.seed + 1
        # a zero-strength regularizer retrains the very same model when the seeds match
        neutral = _config(config, fairness={"mitigation": "regularizer", "eta": 0.0})
        report = audit(run.network, cohort, neutral, note_vectors, run.train_ids, run.test_ids, run.seed)
        assert report["after"] == report["before"]

    def test_single_group_test_split(self, cohort, run_config, note_vectors):
        run = run_training(cohort, run_config, note_vectors, NOTE_DIM)[0]
        males = [r.id for r in cohort if r.gender == "male"]
        with pytest.raises(SingleGroupError):
            audit(run.network, cohort, run_config, note_vectors, run.train_ids, males)


def test_fold_meta_is_json_ready(cohort, run_config, note_vectors):
    run = run_training(cohort, run_config, note_vectors, NOTE_DIM)[0]
    meta = json.loads(json.dumps(run.meta(run_config)))
    assert meta["fold"] == 0
    assert np.isclose(meta["duration_mean"], np.mean([r.labels.y4 for r in select(cohort, run.train_ids) if r.labels.y4 is not None]))
