"""Splits, dataset preparation, training, evaluation, deployment and the ablation table."""

import io

import numpy as np
import pytest

from joint_cache_lab.cachesim import CacheConfig, LruPolicy, PriorityLruPolicy, simulate
from joint_cache_lab.config import RunConfig
from joint_cache_lab.errors import ConfigError, DataIntegrityError, SplitError
from joint_cache_lab.models import ContrastiveModel, ModelDims, build_model, zero_params
from joint_cache_lab.oracle import belady_simulate
from joint_cache_lab.pipeline import (
    AblationTable,
    ModelPredictor,
    deployment_hit_rates,
    evaluate_accuracy,
    model_replacement_policy,
    oracle_policy,
    policy_from_checkpoint,
    prepare_dataset,
    run_ablation,
    train_model,
)
from joint_cache_lab.pipeline.evaluation import EvalReport, classification_stats, read_reports, write_reports
from joint_cache_lab.pipeline.split import SplitSpec, split_dataset
from joint_cache_lab.pipeline.training import init_replacement_bias
from joint_cache_lab.trace import GeneratorKind, GeneratorParams, gen_synthetic

TINY_DIMS = ModelDims(pc_vocab=4, page_vocab=4, blocks_per_page=8, embed_dim=2, hidden_dim=2, history_length=2)


def report(mode="joint", trace="coupled-s1", seed=0, accuracy=0.5, deployment=None):
    return EvalReport(
        mode=mode, trace_name=trace, seed=seed, config_digest="c0ffee", trace_digest="beef",
        accuracy=accuracy, correct=1, total=2,
        friendly_precision=0.5, friendly_recall=1.0, averse_precision=0.0, averse_recall=0.0,
        friendly_count=1, averse_count=1, train_size=6, val_size=2, test_size=2,
        pc_oov_rate=0.0, page_oov_rate=0.25, page_accuracy=0.125, offset_accuracy=0.75,
        useful_prefetch_ratio=0.5,
        learned_hit_rate=deployment[0] if deployment else None,
        lru_hit_rate=deployment[1] if deployment else None,
    )


@pytest.fixture(scope="module")
def prepared(coupled_trace):
    config = RunConfig(
        history_length=4, embed_dim=4, hidden_dim=6, shared_dim=4, projection_dim=4,
        batch_size=8, max_epochs=3, patience=2, pretrain_epochs=2, seeds=(0,),
    )
    return prepare_dataset(coupled_trace, config)


class TestSplit:
    @pytest.mark.parametrize("n, sizes", [(5, (3, 1, 1)), (7, (4, 1, 2)), (10, (6, 2, 2)), (1000, (600, 200, 200))])
    def test_sizes(self, n, sizes):
        parts = split_dataset(list(range(n)))
        assert tuple(len(p) for p in parts) == sizes
        assert parts[0] + parts[1] + parts[2] == list(range(n))

    @pytest.mark.parametrize("n", [5, 7, 10, 1000])
    def test_chronological_and_disjoint(self, n):
        train, val, test = split_dataset(list(range(n)))
        assert max(train) < min(val) and max(val) < min(test)
        assert not (set(train) & set(val) or set(val) & set(test) or set(train) & set(test))

    def test_too_few(self):
        with pytest.raises(SplitError):
            split_dataset([1, 2, 3])

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            SplitSpec(0.5, 0.5, 0.5)


class TestClassificationStats:
    def test_constant_averse_scores_averse_fraction(self):
        labels = [1, 0, 0, 1, 0]
        stats = classification_stats([False] * 5, labels)
        assert stats.accuracy == pytest.approx(3 / 5)
        assert stats.friendly_precision == 0.0
        assert stats.averse_recall == 1.0
        assert (stats.friendly_count, stats.averse_count) == (2, 3)

    def test_mixed(self):
        stats = classification_stats([True, True, False, False], [1, 0, 0, 1])
        assert stats.correct == 2
        assert stats.friendly_precision == 0.5
        assert stats.friendly_recall == 0.5

    def test_empty(self):
        with pytest.raises(SplitError):
            classification_stats([], [])

    def test_length_mismatch(self):
        with pytest.raises(DataIntegrityError):
            classification_stats([True], [1, 0])


class TestReportCodec:
    def test_round_trip(self):
        reports = [report(), report(mode="baseline", accuracy=0.75, deployment=(0.5, 0.25))]
        buffer = io.StringIO()
        write_reports(reports, buffer)
        buffer.seek(0)
        assert read_reports(buffer) == reports

    def test_foreign_header(self):
        with pytest.raises(DataIntegrityError):
            read_reports(io.StringIO("mode,accuracy\njoint,0.5\n"))


class TestAblationTable:
    def test_median_and_bold(self):
        reports = [
            report("baseline", "a", 0, 0.5), report("baseline", "a", 1, 0.7), report("baseline", "a", 2, 0.6),
            report("joint", "a", 0, 0.8), report("joint", "a", 1, 0.8), report("joint", "a", 2, 0.9),
            report("baseline", "b", 0, 0.4), report("joint", "b", 0, 0.3),
        ]
        table = AblationTable.from_reports(reports)
        assert table.modes == ["baseline", "joint"]
        assert table.traces == ["a", "b"]
        assert table.values[("baseline", "a")] == pytest.approx(0.6)
        assert table.values[("joint", "a")] == pytest.approx(0.8)
        text = table.to_markdown()
        assert "| Method | a | b |" in text
        assert "| baseline | 60.00% | **40.00%** |" in text
        assert "| joint | **80.00%** | 30.00% |" in text

    def test_ties_are_all_bold(self):
        table = AblationTable.from_reports([report("baseline", "a", accuracy=0.5), report("joint", "a", accuracy=0.5)])
        assert table.to_markdown().count("**50.00%**") == 2

    def test_inconsistent_traces(self):
        with pytest.raises(DataIntegrityError):
            AblationTable.from_reports([report("baseline", "a"), report("joint", "b")])

    def test_empty(self):
        with pytest.raises(DataIntegrityError):
            AblationTable.from_reports([])

    def test_csv(self):
        table = AblationTable.from_reports([report("joint", "a", accuracy=0.25)])
        buffer = io.StringIO()
        table.write_csv(buffer)
        assert buffer.getvalue() == "mode,a\njoint,0.250000\n"


class TestPrepareDataset:
    def test_splits_cover_labels_in_order(self, prepared):
        train, val, test = prepared.sizes()
        assert train + val + test == len(prepared.labels)
        assert (train, val, test) == tuple(len(p) for p in split_dataset(prepared.labels))
        last_train = prepared.samples["train"][-1].trace_position
        assert all(s.trace_position > last_train for s in prepared.samples["test"])

    def test_views_aligned(self, prepared):
        for split in ("train", "val", "test"):
            events = [s.event_index for s in prepared.samples[split]]
            assert [v.event_index for v in prepared.views[split]] == events

    def test_batches_aligned(self, prepared):
        for rbatch, pbatch in prepared.batches("val", 4):
            np.testing.assert_array_equal(rbatch.event_index, pbatch.event_index)

    def test_positive_rate(self, prepared):
        samples = prepared.samples["train"]
        assert prepared.positive_rate() == pytest.approx(sum(s.label for s in samples) / len(samples))

    def test_dims_follow_config(self, prepared):
        dims = prepared.dims()
        assert dims.history_length == 4 and dims.hidden_dim == 6
        assert dims.pc_vocab == prepared.vocabs.pc.size

    def test_too_few_insertions(self, make_trace, small_config):
        with pytest.raises(SplitError):
            prepare_dataset(make_trace([0, 0, 1, 1]), small_config)

    def test_labels_beyond_trace(self, coupled_trace, make_trace, small_config):
        labels = belady_simulate(coupled_trace, CacheConfig()).insertions
        with pytest.raises(DataIntegrityError):
            prepare_dataset(make_trace(list(range(20))), small_config, labels=labels)


class TestTraining:
    def test_replacement_bias_is_clamped_log_odds(self):
        model = build_model("baseline_repl", TINY_DIMS)
        init_replacement_bias(model, 0.0)
        assert model.params["repl.head.b"][0] == pytest.approx(np.log(0.01 / 0.99), rel=1e-5)
        init_replacement_bias(model, 0.75)
        assert model.params["repl.head.b"][0] == pytest.approx(np.log(3.0), rel=1e-5)

    def test_unknown_mode(self, prepared):
        with pytest.raises(ConfigError):
            train_model(prepared, "ensemble")

    def test_same_seed_same_checkpoint(self, prepared):
        first = train_model(prepared, "joint", seed=0)
        second = train_model(prepared, "joint", seed=0)
        assert first.checkpoints(prepared) == second.checkpoints(prepared)
        assert 1 <= len(first.history) <= 3
        assert 0 <= first.best_epoch < len(first.history)

    def test_baseline_writes_two_checkpoints(self, prepared):
        result = train_model(prepared, "baseline")
        assert set(result.checkpoints(prepared)) == {"baseline_repl", "baseline_pf"}

    def test_contrastive_pretrains(self, prepared):
        result = train_model(prepared, "contrastive")
        assert isinstance(result.model, ContrastiveModel)
        assert result.pretrain is not None and result.pretrain.epochs == 2
        buffer = io.StringIO()
        result.write_pretrain_curve(buffer)
        assert buffer.getvalue().startswith("epoch,loss\n-1,")

    def test_metrics_csv(self, prepared):
        result = train_model(prepared, "joint")
        buffer = io.StringIO()
        result.write_metrics(buffer)
        lines = buffer.getvalue().splitlines()
        assert lines[0] == "epoch,train_loss,train_repl_loss,train_pf_loss,val_loss,val_accuracy"
        assert len(lines) == len(result.history) + 1


class TestEvaluation:
    def test_report_fields(self, prepared):
        result = train_model(prepared, "joint")
        ev = evaluate_accuracy(result.model, prepared, "joint", seed=0)
        assert ev.total == prepared.sizes()[2]
        assert ev.correct == round(ev.accuracy * ev.total)
        assert ev.trace_digest == prepared.trace_digest
        assert ev.trace_name == "coupled-s1"
        assert ev.learned_hit_rate is None
        assert 0.0 <= ev.page_accuracy <= 1.0

    def test_prefetch_only_model_rejected(self, prepared):
        model = build_model("baseline_pf", prepared.dims())
        with pytest.raises(DataIntegrityError):
            evaluate_accuracy(model, prepared, "baseline", seed=0)


class TestDeployment:
    def test_always_friendly_model_matches_lru(self, prepared, coupled_trace):
        model = build_model("joint", prepared.dims())
        zero_params(model.params, model.repl_head.names())
        model.params[model.repl_bias_name] = np.array([10.0])
        config = CacheConfig(num_sets=4, associativity=4)
        learned, lru = deployment_hit_rates(model, prepared.vocabs, coupled_trace, config)
        assert learned == lru

    def test_model_policy_runs_in_the_simulator(self, prepared, coupled_trace):
        result = train_model(prepared, "joint")
        policy = model_replacement_policy(result.model, prepared.vocabs, prepared.cache_config.geometry)
        assert isinstance(policy, PriorityLruPolicy)
        sim = simulate(coupled_trace, prepared.cache_config, policy)
        assert sim.demand_hits + sim.demand_misses == len(coupled_trace)

    def test_prefetch_only_model_cannot_drive_replacement(self, prepared):
        with pytest.raises(ConfigError):
            ModelPredictor(build_model("baseline_pf", prepared.dims()), prepared.vocabs, prepared.cache_config.geometry)

    def test_oracle_labels_keep_the_reused_line(self, make_trace, one_set_cache):
        trace = make_trace([1, 2, 3, 1])
        config = one_set_cache(2)
        labels = belady_simulate(trace, config).insertions
        assert simulate(trace, config, oracle_policy(labels)).demand_hits == 1
        assert simulate(trace, config, LruPolicy()).demand_hits == 0

    def test_oracle_labels_match_or_beat_lru_on_random_traces(self):
        config = CacheConfig(num_sets=4, associativity=2)
        at_least_lru = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            params = GeneratorParams(
                length=300, working_set=int(rng.integers(2, 17)), mix_ratio=float(rng.uniform(0.3, 0.7))
            )
            trace = gen_synthetic(GeneratorKind.MIXED, params, seed=seed)
            labels = belady_simulate(trace, config).insertions
            oracle = simulate(trace, config, oracle_policy(labels)).demand_hits
            lru = simulate(trace, config, LruPolicy()).demand_hits
            at_least_lru += oracle >= lru
        assert at_least_lru >= 45

    def test_policy_from_checkpoint(self, prepared, coupled_trace):
        result = train_model(prepared, "contrastive")
        policy = policy_from_checkpoint(result.checkpoints(prepared)["contrastive"])
        sim = simulate(coupled_trace, CacheConfig(num_sets=16, associativity=2), policy)
        assert sim.demand_accesses == len(coupled_trace)


class TestRunAblation:
    def test_table_over_modes_and_seeds(self, coupled_trace, small_config):
        table = run_ablation([coupled_trace], small_config.with_overrides({"max_epochs": 1}),
                             seeds=[0, 1], modes=["baseline", "joint"], workers=1)
        assert table.modes == ["baseline", "joint"]
        assert table.traces == ["coupled-s1"]
        assert len(table.reports) == 4
        assert {r.seed for r in table.reports} == {0, 1}

    def test_needs_a_seed(self, coupled_trace, small_config):
        with pytest.raises(ConfigError):
            run_ablation([coupled_trace], small_config, seeds=[])
