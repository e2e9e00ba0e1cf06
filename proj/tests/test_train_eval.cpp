#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "imugest/synth.hpp"
#include "imugest/train_eval.hpp"

using namespace imugest;
namespace fs = std::filesystem;

namespace {

// Two classes that differ in the sign of a slow oscillation on one channel.
WindowedDataset toy_dataset(std::size_t per_class, std::uint64_t seed, std::size_t len) {
    Rng rng(seed);
    WindowedDataset ds;
    ds.window_len = len;
    ds.step = len;
    std::size_t rec = 0;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (int cls = 0; cls < 2; ++cls) {
            Window w;
            w.values = Array2(len, 6);
            const double phase = rng.uniform(0.0, 1.0);
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t d = 0; d < 6; ++d) {
                    w.values(t, d) = 0.3 * rng.normal();
                }
                w.values(t, 0) += (cls == 0 ? 1.0 : -1.0) * std::sin(0.3 * static_cast<double>(t) + phase);
            }
            w.label = cls == 0 ? GestureLabel::circle : GestureLabel::semicircle;
            w.participant = "p";
            w.recording = rec++;
            ds.windows.push_back(std::move(w));
        }
    }
    return ds;
}

ModelConfig toy_model(std::size_t len) {
    ModelConfig c = ModelConfig::variant_a();
    c.hidden_sizes = {8};
    c.window_len = len;
    return c;
}

}  // namespace

TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax(std::vector<double>{0.1, 0.5, 0.5, 0.2}) == 1);
    CHECK(argmax(std::vector<double>{3.0}) == 0);
    CHECK_THROWS_AS(argmax(std::vector<double>{}), ContractViolation);
}

TEST_CASE("confusion matrix arithmetic") {
    ConfusionMatrix cm(3);
    // truth 0: 3 right, 1 as class 1; truth 1: 2 right; truth 2: 1 as 0, 1 right.
    for (int i = 0; i < 3; ++i) {
        cm.add(0, 0);
    }
    cm.add(0, 1);
    cm.add(1, 1);
    cm.add(1, 1);
    cm.add(2, 0);
    cm.add(2, 2);
    CHECK(cm.total() == 8);
    CHECK(cm.trace() == 6);
    CHECK(cm.accuracy() == doctest::Approx(0.75));
    CHECK(cm.row_total(0) == 4);
    CHECK(cm.rate(0, 1) == doctest::Approx(0.25));
    CHECK(cm.rate(2, 0) == doctest::Approx(0.5));
    // Off-diagonal rates: 0.25, 0, 0, 0, 0.5, 0 over six cells.
    CHECK(cm.mean_off_diagonal_rate() == doctest::Approx(0.75 / 6.0));
    CHECK_THROWS_AS(cm.add(3, 0), ContractViolation);

    ConfusionMatrix empty(3);
    CHECK(empty.accuracy() == 0.0);
    CHECK(empty.rate(1, 2) == 0.0);
}

TEST_CASE("confusion csv layout") {
    ConfusionMatrix cm;
    cm.add(to_index(GestureLabel::tilde), to_index(GestureLabel::infinity));
    const std::string csv = cm.to_csv();
    CHECK(csv.rfind("true\\predicted,circle,semicircle,infinity,tilde,", 0) == 0);
    CHECK(csv.find("\ntilde,0,0,1,0,0,0,0,0,0,0\n") != std::string::npos);
}

TEST_CASE("soft vote sums probabilities per recording") {
    // Recording 0: windows favour class 1 by count but class 0 by mass.
    std::vector<Window> ws(3);
    for (auto& w : ws) {
        w.label = GestureLabel::circle;
        w.recording = 0;
    }
    Array2 probs(3, 2);
    probs(0, 0) = 0.9;
    probs(0, 1) = 0.1;
    probs(1, 0) = 0.45;
    probs(1, 1) = 0.55;
    probs(2, 0) = 0.45;
    probs(2, 1) = 0.55;
    const auto g = soft_vote_accuracy(probs, ws, 2);
    CHECK(g.evaluated == 1);
    CHECK(g.accuracy == 1.0);
    CHECK(g.excluded == std::vector<std::size_t>{1});
    const auto e = evaluate_probs(probs, ws, 2);
    CHECK(e.window_accuracy == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("metrics csv") {
    std::vector<EpochMetrics> h{{1, 0.5, 0.25, 0.75, 1.0}};
    CHECK(metrics_csv(h) == "epoch,train_loss,train_acc,val_window_acc,val_gesture_acc\n1,0.5,0.25,0.75,1\n");
}

TEST_CASE("training learns a separable problem and is reproducible") {
    const std::size_t len = 20;
    const auto tr = toy_dataset(60, 1, len);
    const auto va = toy_dataset(20, 2, len);
    const auto mc = toy_model(len);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.epochs = 12;
    tc.learning_rate = 0.02;
    tc.init_seed = tc.shuffle_seed = tc.dropout_seed = 3;
    std::size_t calls = 0;
    const auto r = train(tr, va, mc, tc, [&](const EpochMetrics&) { ++calls; });
    CHECK(calls == 12);
    REQUIRE(r.history.size() == 12);
    CHECK(r.history.back().train_loss < r.history.front().train_loss);
    CHECK(r.history[r.best_epoch - 1].val_window_acc >= 0.95);
    CHECK(evaluate(r.best, mc, va.windows).window_accuracy == r.history[r.best_epoch - 1].val_window_acc);

    const auto again = train(tr, va, mc, tc);
    CHECK(metrics_csv(again.history) == metrics_csv(r.history));
    CHECK(again.final == r.final);

    TrainConfig other = tc;
    other.shuffle_seed = 4;
    CHECK(metrics_csv(train(tr, va, mc, other).history) != metrics_csv(r.history));
}

TEST_CASE("early stopping and input validation") {
    const std::size_t len = 10;
    const auto tr = toy_dataset(10, 5, len);
    const auto mc = toy_model(len);
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 1e-9;
    tc.early_stop_patience = 2;
    const auto r = train(tr, tr, mc, tc);
    CHECK(r.history.size() < 30);
    CHECK(r.history.size() - r.best_epoch == 2);

    // Stopping at a reached validation accuracy ends on the first epoch at or above it.
    TrainConfig target = tc;
    target.early_stop_patience.reset();
    target.learning_rate = 0.02;
    target.stop_at_val_acc = 0.9;
    const auto t = train(tr, tr, mc, target);
    std::size_t first = 0;
    for (const auto& m : t.history) {
        if (first == 0 && m.val_window_acc >= 0.9) {
            first = m.epoch;
        }
    }
    REQUIRE(first > 0);
    CHECK(t.history.size() == first);
    target.stop_at_val_acc = 1.5;
    CHECK_THROWS_AS(train(tr, tr, mc, target), ContractViolation);

    ModelConfig wrong = mc;
    wrong.window_len = len + 1;
    CHECK_THROWS_AS(train(tr, tr, wrong, tc), ContractViolation);
    TrainConfig bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(tr, tr, mc, bad), ContractViolation);
}

TEST_CASE("streaming emissions equal batch predictions") {
    SynthConfig sc;
    sc.seed = 31;
    Rng rng(31);
    const auto session = generate_session(sc, make_personality(sc, 0), rng, 0);
    SensorTrace trace;
    trace.participant.alias = "p1";
    trace.session_id = "s01";
    trace.samples = session.samples;
    const auto recs = segment_recordings(trace, session.events, 0);

    for (bool gravity : {false, true}) {
        PreprocessOptions opt;
        opt.window_len = 100;
        opt.step = 30;
        opt.remove_gravity = gravity;
        if (gravity) {
            opt.drop_axis = "gyro_x";
        }
        auto ds = prepare_windows(recs, opt);
        const auto stats = zscore_fit(ds);
        zscore_apply(ds, stats);
        ModelConfig mc = ModelConfig::variant_b();
        mc.window_len = opt.window_len;
        mc.input_dim = channels_after(opt).size();
        mc.hidden_sizes = {12, 12, 12};
        Rng init(2);
        const ModelParams p = init_params(mc, init);

        const Array2 probs = predict_probs(p, mc, ds.windows);
        std::size_t row = 0;
        for (std::size_t r = 0; r < recs.size(); ++r) {
            const auto em = stream_infer(p, mc, stats, opt, recs[r].samples);
            REQUIRE(em.size() == window_count(recs[r].samples.size(), opt.window_len, opt.step));
            for (std::size_t k = 0; k < em.size(); ++k, ++row) {
                const int pred = argmax(probs.row(row));
                CHECK(to_index(em[k].label) == pred);
                CHECK(em[k].confidence == probs(row, static_cast<std::size_t>(pred)));
                CHECK(em[k].t_ms == recs[r].samples[k * opt.step + opt.window_len - 1].t_ms);
            }
        }
        CHECK(row == ds.windows.size());
    }
}

TEST_CASE("stream classifier validates its configuration") {
    ModelConfig mc = ModelConfig::variant_a();
    mc.window_len = 50;
    Rng rng(1);
    const ModelParams p = init_params(mc, rng);
    NormalizationStats st{std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)};
    PreprocessOptions opt;
    opt.window_len = 40;
    CHECK_THROWS_AS(StreamClassifier(p, mc, st, opt), ContractViolation);
    opt.window_len = 50;
    opt.drop_axis = "acc_x";
    CHECK_THROWS_AS(StreamClassifier(p, mc, st, opt), ContractViolation);
}

TEST_CASE("pipeline file round trip") {
    Pipeline p;
    p.options.window_len = 120;
    p.options.step = 7;
    p.options.remove_gravity = true;
    p.options.drop_axis = "acc_y";
    p.stats.mean = {0.1, 1.0 / 3.0, -2e-17, 4.0, 5.5};
    p.stats.std = {1.0, 2.0, 3.0, 1e-10, 0.7};
    const auto back = decode_pipeline(encode_pipeline(p));
    CHECK(back.options == p.options);
    CHECK(back.stats == p.stats);

    Pipeline bad = p;
    bad.stats.mean.pop_back();
    CHECK_THROWS(decode_pipeline(encode_pipeline(bad)));
    CHECK_THROWS(decode_pipeline("{not json"));
}
