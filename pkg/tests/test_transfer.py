"""Training strategies: baseline, fine-tuning, progressive transfer."""

import numpy as np
import pytest

from progtransfer.data import Dataset, SynthConfig, Utterance, gen_synthetic, znormalize
from progtransfer.errors import (
    ConfigError,
    DegenerateSplitError,
    EmptyInputError,
    IncompatibleDomainError,
    LabelError,
    ShapeError,
)
from progtransfer.evaluation import confusion_matrix, uar
from progtransfer.nncore import Hyperparams, NetworkParams, forward_batch, init_network
from progtransfer.prognet import ProgNetModel, source_task_output
from progtransfer.serialize import model_to_bytes, network_to_bytes
from progtransfer.transfer import (
    TrainConfig,
    TrainLog,
    TrainedModel,
    evaluate,
    finetune,
    forgetting_delta,
    measure_forgetting,
    pretrain_finetune,
    reset_output_layer,
    train_dnn,
    train_prognet,
    write_train_log,
)


def config(**kw):
    defaults = dict(n_hidden_layers=1, hidden_width=8, dropout_rate=0.0,
                    learning_rate=0.01, max_epochs=10, batch_size=16)
    defaults.update(kw)
    return TrainConfig(hyper=Hyperparams(**defaults))


def blob_dataset(n_per_gender=60, dim=4, seed=0, shift=2.0):
    """Two Gaussian blobs separated along the first axis, one per gender."""
    rng = np.random.default_rng(seed)
    utts = []
    for g_idx, gender in enumerate(("female", "male")):
        offset = np.zeros(dim)
        offset[0] = shift if gender == "male" else -shift
        for j in range(n_per_gender):
            utts.append(Utterance(
                f"{gender}-{j:03d}", "blob", f"spk{g_idx}", gender, "angry",
                offset + rng.standard_normal(dim) * 0.5))
    return Dataset(utts, dim)


def split(ds, frac=0.75, seed=0):
    order = np.random.default_rng(seed).permutation(len(ds.utterances))
    cut = int(len(order) * frac)
    mk = lambda ix: Dataset([ds.utterances[i] for i in ix], ds.feature_dim)
    return mk(order[:cut]), mk(order[cut:])


def emotion_pair(tau=0.9, **kw):
    cfg = dict(n_speakers=4, utterances_per_speaker=40, feature_dim=10,
               tau=tau, noise_std=0.5, speaker_scale=0.4, gender_scale=0.3)
    cfg.update(kw)
    source, target = gen_synthetic(SynthConfig(**cfg), seed=11)
    return znormalize(source)[0], znormalize(target)[0]


class TestTrainDnn:
    def test_separable_blobs_reach_high_uar(self):
        ds = blob_dataset()
        train, val = split(ds)
        # separability oracle: least-squares one-hot linear classifier
        x = np.stack([u.features for u in train.utterances])
        y = np.array([u.gender == "male" for u in train.utterances], dtype=int)
        xv = np.stack([u.features for u in val.utterances])
        yv = np.array([u.gender == "male" for u in val.utterances], dtype=int)
        design = np.hstack([x, np.ones((len(x), 1))])
        w, *_ = np.linalg.lstsq(design, np.eye(2)[y], rcond=None)
        linear_preds = (np.hstack([xv, np.ones((len(xv), 1))]) @ w).argmax(axis=1)
        assert uar(confusion_matrix(yv, linear_preds, 2)) > 0.95

        trained, log = train_dnn(train, val, "gender", config(max_epochs=50), seed=0)
        assert max(log.val_uar) > 0.95
        assert log.selected_epoch <= 50

    def test_single_epoch_budget(self):
        train, val = split(blob_dataset())
        _, log = train_dnn(train, val, "gender", config(max_epochs=1), seed=0)
        assert log.selected_epoch == 1
        assert log.epochs == [1]

    def test_identical_seeds_give_bit_identical_models(self):
        train, val = split(blob_dataset())
        a, _ = train_dnn(train, val, "gender", config(), seed=5)
        b, _ = train_dnn(train, val, "gender", config(), seed=5)
        assert network_to_bytes(a.model) == network_to_bytes(b.model)
        c, _ = train_dnn(train, val, "gender", config(), seed=6)
        assert network_to_bytes(a.model) != network_to_bytes(c.model)

    def test_input_row_order_does_not_matter(self):
        train, val = split(blob_dataset())
        shuffled_train = Dataset(list(reversed(train.utterances)), train.feature_dim)
        shuffled_val = Dataset(list(reversed(val.utterances)), val.feature_dim)
        a, _ = train_dnn(train, val, "gender", config(), seed=5)
        b, _ = train_dnn(shuffled_train, shuffled_val, "gender", config(), seed=5)
        assert network_to_bytes(a.model) == network_to_bytes(b.model)

    def test_selected_epoch_is_earliest_maximum(self):
        train, val = split(blob_dataset())
        _, log = train_dnn(train, val, "gender", config(max_epochs=15), seed=1)
        best = max(log.val_uar)
        assert log.val_uar[log.selected_epoch - 1] == best
        assert all(v < best for v in log.val_uar[:log.selected_epoch - 1])

    def test_patience_stops_on_plateau(self):
        train, val = split(blob_dataset())
        cfg = config(learning_rate=1e-12, max_epochs=50)
        cfg.patience = 2
        _, log = train_dnn(train, val, "gender", cfg, seed=2)
        assert log.selected_epoch == 1
        assert len(log.epochs) == 3  # epoch 1 best, epochs 2-3 exhaust patience

    def test_missing_training_class_rejected(self):
        source, _ = emotion_pair()
        only3 = Dataset([u for u in source.utterances if u.emotion != "happy"],
                        source.feature_dim)
        train, val = split(only3)
        with pytest.raises(DegenerateSplitError, match="happy"):
            train_dnn(train, val, "emotion", config(), seed=0)

    def test_overlapping_slices_rejected(self):
        ds = blob_dataset()
        train, _ = split(ds)
        with pytest.raises(DegenerateSplitError, match="share"):
            train_dnn(train, train, "gender", config(), seed=0)

    def test_empty_slice_rejected(self):
        train, val = split(blob_dataset())
        with pytest.raises(EmptyInputError):
            train_dnn(Dataset([], 4), val, "gender", config(), seed=0)

    def test_inverse_frequency_weighting_runs(self):
        ds = blob_dataset(n_per_gender=40)
        skewed = Dataset(ds.utterances[:50], ds.feature_dim)  # 40 female, 10 male
        train, val = split(skewed, seed=3)
        trained, log = train_dnn(train, val, "gender",
                                 config(class_weighting="inverse_frequency"), seed=0)
        assert isinstance(trained.model, NetworkParams)
        assert 0.0 <= log.val_uar[-1] <= 1.0

    def test_invalid_patience_rejected(self):
        cfg = config()
        cfg.patience = 0
        train, val = split(blob_dataset())
        with pytest.raises(ConfigError):
            train_dnn(train, val, "gender", cfg, seed=0)


class TestResetOutputLayer:
    def test_trunk_preserved_head_replaced(self):
        net = init_network([6, 5, 5, 10], seed=0)
        new, saved = reset_output_layer(net, 4, np.random.default_rng(1))
        for a, b in zip(net.layers[:-1], new.layers[:-1]):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)
        assert np.array_equal(saved.weights, net.layers[-1].weights)
        assert new.layers[-1].weights.shape == (4, 5)
        assert np.array_equal(new.layers[-1].bias, np.zeros(4))
        limit = np.sqrt(6.0 / (5 + 4))
        assert np.abs(new.layers[-1].weights).max() <= limit


class TestFinetune:
    def make_source(self, ds, task="speaker", seed=0):
        train, val = split(ds)
        return train_dnn(train, val, task, config(), seed=seed)[0]

    def test_head_width_switches_tasks(self):
        source, target = emotion_pair(n_speakers=10)
        src_model = self.make_source(source)  # 10 speaker classes
        assert src_model.model.output_dim == 10
        train, val = split(target)
        tuned, log = finetune(src_model, train, val, "emotion", config(), seed=1)
        assert tuned.model.output_dim == 4
        assert tuned.source_head.out_dim == 10
        assert tuned.source_classes == src_model.classes
        assert tuned.strategy == "ptft"
        assert len(log.epochs) >= 1

    def test_requires_network_source(self):
        source, target = emotion_pair()
        src_model = self.make_source(source, task="emotion")
        train, val = split(target)
        prog, _ = train_prognet(src_model, train, val, "emotion", config(), seed=0)
        with pytest.raises(ConfigError):
            finetune(prog, train, val, "emotion", config(), seed=0)

    def test_feature_dim_mismatch_rejected(self):
        source, _ = emotion_pair()
        src_model = self.make_source(source, task="emotion")
        other = blob_dataset(dim=7)
        train, val = split(other)
        with pytest.raises(IncompatibleDomainError):
            finetune(src_model, train, val, "gender", config(), seed=0)

    def test_pretrain_finetune_composition(self):
        source, target = emotion_pair()
        s_train, s_val = split(source)
        t_train, t_val = split(target)
        tuned, log = pretrain_finetune(s_train, s_val, "emotion",
                                       t_train, t_val, "emotion", config(), seed=3)
        assert tuned.strategy == "ptft"
        assert tuned.model.output_dim == 4
        assert log.selected_epoch >= 1

    def test_pretrain_finetune_dim_mismatch(self):
        source, _ = emotion_pair()
        other = blob_dataset(dim=7)
        s_train, s_val = split(source)
        o_train, o_val = split(other)
        with pytest.raises(IncompatibleDomainError):
            pretrain_finetune(s_train, s_val, "emotion",
                              o_train, o_val, "gender", config(), seed=0)


class TestTrainPrognet:
    def setup_models(self, tau=0.9):
        source, target = emotion_pair(tau=tau)
        s_train, s_val = split(source)
        src_model, _ = train_dnn(s_train, s_val, "emotion", config(), seed=0)
        t_train, t_val = split(target)
        return source, src_model, t_train, t_val

    def test_frozen_column_bytes_unchanged_by_training(self):
        _, src_model, t_train, t_val = self.setup_models()
        before = network_to_bytes(src_model.model)
        trained, _ = train_prognet(src_model, t_train, t_val, "emotion",
                                   config(), seed=1)
        assert isinstance(trained.model, ProgNetModel)
        assert network_to_bytes(trained.model.columns[0].params) == before

    def test_source_task_outputs_preserved_exactly(self):
        source, src_model, t_train, t_val = self.setup_models()
        x = np.stack([u.features for u in source.utterances[:32]])
        before = forward_batch(src_model.model, x).output_probs.copy()
        trained, _ = train_prognet(src_model, t_train, t_val, "emotion",
                                   config(), seed=1)
        after = source_task_output(trained.model, 0, x)
        assert np.array_equal(before, after)

    def test_determinism(self):
        _, src_model, t_train, t_val = self.setup_models()
        a, _ = train_prognet(src_model, t_train, t_val, "emotion", config(), seed=4)
        b, _ = train_prognet(src_model, t_train, t_val, "emotion", config(), seed=4)
        assert model_to_bytes(a.model) == model_to_bytes(b.model)

    def test_checkpointed_column_attains_best_val_uar(self):
        _, src_model, t_train, t_val = self.setup_models()
        trained, log = train_prognet(src_model, t_train, t_val, "emotion",
                                     config(max_epochs=8), seed=2)
        best = max(log.val_uar)
        assert log.val_uar[log.selected_epoch - 1] == best
        assert evaluate(trained, t_val, "emotion") == pytest.approx(best, abs=1e-12)

    def test_incompatible_source_architecture_rejected(self):
        from progtransfer.errors import WiringError
        mixed = init_network([10, 8, 4, 4], seed=0)
        src = TrainedModel("baseline", mixed, ["angry", "happy", "neutral", "sad"])
        _, target = emotion_pair()
        train, val = split(target)
        with pytest.raises(WiringError):
            train_prognet(src, train, val, "emotion", config(), seed=0)


class TestForgetting:
    def test_unchanged_trunk_is_zero_delta(self):
        source, _ = emotion_pair()
        train, val = split(source)
        model, _ = train_dnn(train, val, "emotion", config(), seed=0)
        before = evaluate(model, val, "emotion")
        delta = measure_forgetting(model.model, model.model.layers[-1],
                                   val, "emotion", before)
        assert delta == 0.0

    def test_prognet_delta_exactly_zero(self):
        source, target = emotion_pair()
        s_train, s_val = split(source)
        src_model, _ = train_dnn(s_train, s_val, "emotion", config(), seed=0)
        before = evaluate(src_model, s_val, "emotion")
        t_train, t_val = split(target)
        trained, _ = train_prognet(src_model, t_train, t_val, "emotion",
                                   config(), seed=1)
        assert forgetting_delta(trained, s_val, "emotion", before) == 0.0

    def test_ptft_delta_reflects_source_evaluation(self):
        source, target = emotion_pair()
        s_train, s_val = split(source)
        src_model, _ = train_dnn(s_train, s_val, "emotion", config(), seed=0)
        before = evaluate(src_model, s_val, "emotion")
        t_train, t_val = split(target)
        tuned, _ = finetune(src_model, t_train, t_val, "emotion", config(), seed=1)
        delta = forgetting_delta(tuned, s_val, "emotion", before)
        composed = NetworkParams(
            [lp.copy() for lp in tuned.model.layers[:-1]] + [tuned.source_head.copy()])
        after = evaluate(TrainedModel("ptft", composed, src_model.classes),
                         s_val, "emotion")
        assert delta == pytest.approx(before - after, abs=1e-12)

    def test_head_shape_mismatch_rejected(self):
        net = init_network([6, 5, 5, 4], seed=0)
        bad_head = init_network([6, 7, 7, 4], seed=1).layers[-1]
        ds, _ = emotion_pair()
        with pytest.raises(ShapeError):
            measure_forgetting(net, bad_head, ds, "emotion", 0.5)

    def test_baseline_has_no_source_head(self):
        source, _ = emotion_pair()
        train, val = split(source)
        model, _ = train_dnn(train, val, "emotion", config(), seed=0)
        with pytest.raises(ConfigError):
            forgetting_delta(model, val, "emotion", 0.5)


class TestEvaluate:
    def test_unseen_class_name_rejected(self):
        ds = blob_dataset()
        train, val = split(ds)
        model, _ = train_dnn(train, val, "speaker", config(), seed=0)
        stranger = Dataset([Utterance("x0", "blob", "spk99", "male", "angry",
                                      np.zeros(4))], 4)
        with pytest.raises(LabelError):
            evaluate(model, stranger, "speaker")

    def test_empty_slice_rejected(self):
        ds = blob_dataset()
        train, val = split(ds)
        model, _ = train_dnn(train, val, "gender", config(), seed=0)
        with pytest.raises(EmptyInputError):
            evaluate(model, Dataset([], 4), "gender")


class TestTrainLogOutput:
    def test_columnar_file(self, tmp_path):
        log = TrainLog([1, 2], [0.9, 0.5], [0.4, 0.6], [0.45, 0.65], selected_epoch=2)
        path = tmp_path / "log.csv"
        write_train_log(log, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "epoch,train_loss,train_uar,val_uar"
        assert lines[1] == "1,0.9,0.4,0.45"
        assert len(lines) == 3
