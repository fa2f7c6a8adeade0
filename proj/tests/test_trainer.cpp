#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "facerep/encoder.hpp"
#include "facerep/rng.hpp"
#include "facerep/synth.hpp"
#include "facerep/trainer.hpp"
#include "facerep/views.hpp"

using namespace facerep;

namespace {

EncoderConfig mini_config(uint64_t seed, bool batchnorm = true) {
    EncoderConfig cfg;
    cfg.input_side = 16;
    cfg.stages = {{8, 1}, {16, 1}};
    cfg.fc_layers = 2;
    cfg.fc_dim = 16;
    cfg.batchnorm = batchnorm;
    cfg.seed = seed;
    return cfg;
}

std::string ref_name(int id, int k) {
    return "id" + std::to_string(id) + "/im" + std::to_string(k) + ".ppm";
}

// toy labeled dataset loaded into an in-memory store
struct ToySet {
    ImageStore images;
    PairManifest manifest;  // balanced, similar first
};

ToySet toy_set(int n_ids, int per_id, int side, uint64_t seed) {
    ToySet out;
    const SynthIdentityDataset ds = synth_identity_dataset(n_ids, per_id, side, seed);
    for (int id = 0; id < n_ids; ++id) {
        for (int k = 0; k < per_id; ++k) {
            out.images.put(ref_name(id, k),
                           ds.images[static_cast<size_t>(id * per_id + k)]);
        }
    }
    std::vector<FacePair> sim, dis;
    for (int id = 0; id < n_ids; ++id) {
        for (int i = 0; i < per_id; ++i) {
            for (int j = i + 1; j < per_id; ++j) {
                sim.push_back({ref_name(id, i), ref_name(id, j), +1, PairSource::track});
            }
        }
    }
    for (int a = 0; a < n_ids; ++a) {
        for (int b = a + 1; b < n_ids; ++b) {
            for (int i = 0; i < per_id; ++i) {
                dis.push_back({ref_name(a, i), ref_name(b, (i + 1) % per_id), -1,
                               PairSource::cross_genre});
            }
        }
    }
    Rng rng = make_rng(seed, "toy-neg");
    std::shuffle(dis.begin(), dis.end(), rng);
    dis.resize(sim.size());
    out.manifest.pairs = sim;
    out.manifest.pairs.insert(out.manifest.pairs.end(), dis.begin(), dis.end());
    out.manifest.recount();
    return out;
}

std::string tmp_path(const std::string& name) {
    std::filesystem::create_directories("trainer_tmp");
    return "trainer_tmp/" + name;
}

}  // namespace

TEST_CASE("pair hinge loss") {
    const LossConfig cfg;  // b = 1, m = 0.5

    SUBCASE("reference values") {
        CHECK(pair_loss(0.2, +1, cfg) == doctest::Approx(0.0));
        CHECK(pair_loss(1.4, +1, cfg) == doctest::Approx(0.9));
        CHECK(pair_loss(1.2, -1, cfg) == doctest::Approx(0.3));
        CHECK(pair_loss(0.5, +1, cfg) == doctest::Approx(0.0));  // exactly at the hinge
        CHECK(pair_loss(1.5, -1, cfg) == doctest::Approx(0.0));
    }
    SUBCASE("hard means nonzero loss, checked over random draws") {
        CHECK(!is_hard(0.4, +1, cfg));
        CHECK(is_hard(1.4, -1, cfg));
        Rng rng = make_rng(13, "hinge-sweep");
        std::uniform_real_distribution<double> u(0.0, 4.0);
        for (int i = 0; i < 10000; ++i) {
            const double d2 = u(rng);
            const int y = (i % 2) ? +1 : -1;
            CHECK(is_hard(d2, y, cfg) == (pair_loss(d2, y, cfg) > 0.0));
        }
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(pair_loss(0.5, 0, cfg), std::invalid_argument);
        CHECK_THROWS_AS(pair_loss(-0.1, 1, cfg), std::invalid_argument);
        CHECK_THROWS_AS(pair_loss(std::nan(""), 1, cfg), std::invalid_argument);
        LossConfig bad;
        bad.b = 0.4;  // bias below the margin
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad.b = 1.0;
        bad.m = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("pair_distance") {
    Encoder enc = build_encoder(mini_config(11));
    Rng rng = make_rng(1, "pd-img");
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image a(16, 16, 3), b(16, 16, 3);
    for (float& v : a.data) v = u(rng);
    for (float& v : b.data) v = u(rng);

    CHECK(pair_distance(enc, a, a) == doctest::Approx(0.0));
    const double ab = pair_distance(enc, a, b);
    CHECK(ab > 0.0);
    CHECK(pair_distance(enc, b, a) == doctest::Approx(ab).epsilon(1e-6));

    // agrees with explicitly computed embeddings
    const std::vector<float> ea = embed(enc, a);
    const std::vector<float> eb = embed(enc, b);
    double d2 = 0;
    for (size_t j = 0; j < ea.size(); ++j) {
        const double d = static_cast<double>(ea[j]) - eb[j];
        d2 += d * d;
    }
    CHECK(ab == doctest::Approx(d2).epsilon(1e-5));
}

TEST_CASE("validate and hard_mine agree with per-image embeddings") {
    Encoder enc = build_encoder(mini_config(7));
    ToySet toy = toy_set(4, 3, 20, 5);
    const LossConfig loss_cfg;

    std::map<std::string, std::vector<float>> emb;
    for (const FacePair& p : toy.manifest.pairs) {
        for (const std::string& ref : {p.a, p.b}) {
            if (!emb.count(ref)) {
                emb[ref] = embed(enc, center_view(toy.images.get(ref), 16));
            }
        }
    }
    auto d2_of = [&](const FacePair& p) {
        double s = 0;
        const auto& x = emb.at(p.a);
        const auto& y = emb.at(p.b);
        for (size_t j = 0; j < x.size(); ++j) {
            const double d = static_cast<double>(x[j]) - y[j];
            s += d * d;
        }
        return s;
    };

    SUBCASE("validate applies the threshold rule") {
        int correct = 0;
        for (const FacePair& p : toy.manifest.pairs) {
            const double d2 = d2_of(p);
            if ((p.y > 0 && d2 < loss_cfg.b) || (p.y < 0 && d2 > loss_cfg.b)) ++correct;
        }
        const double expected = double(correct) / double(toy.manifest.pairs.size());
        CHECK(validate(enc, toy.manifest, loss_cfg, toy.images) ==
              doctest::Approx(expected).epsilon(1e-9));
        PairManifest empty;
        CHECK_THROWS_AS(validate(enc, empty, loss_cfg, toy.images), std::invalid_argument);
    }
    SUBCASE("hard_mine keeps exactly the nonzero-loss pairs in order") {
        std::vector<FacePair> expected;
        for (const FacePair& p : toy.manifest.pairs) {
            if (pair_loss(d2_of(p), p.y, loss_cfg) > 0.0) expected.push_back(p);
        }
        const auto [hard, retained] = hard_mine(enc, toy.manifest, loss_cfg, toy.images);
        REQUIRE(hard.pairs.size() == expected.size());
        for (size_t i = 0; i < expected.size(); ++i) {
            CHECK(hard.pairs[i].a == expected[i].a);
            CHECK(hard.pairs[i].b == expected[i].b);
            CHECK(hard.pairs[i].y == expected[i].y);
        }
        CHECK(retained == doctest::Approx(double(expected.size()) /
                                          double(toy.manifest.pairs.size())));
        PairManifest empty;
        const auto [none, zero] = hard_mine(enc, empty, loss_cfg, toy.images);
        CHECK(none.pairs.empty());
        CHECK(zero == 0.0);
    }
}

TEST_CASE("a zero-loss batch applies only weight decay") {
    // two refs with identical pixels give d2 = 0, so the hinge is inactive
    Encoder enc = build_encoder(mini_config(3));
    ImageStore images;
    Rng rng = make_rng(2, "wd-img");
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(18, 18, 3);
    for (float& v : img.data) v = u(rng);
    images.put("a.ppm", img);
    images.put("b.ppm", img);

    PairManifest manifest;
    manifest.pairs = {{"a.ppm", "b.ppm", +1, PairSource::track}};
    manifest.recount();

    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.weight_decay = 0.01;
    tc.batch_pairs = 1;
    tc.max_iterations = 1;
    tc.checkpoint_every = 100;
    tc.augmentation = false;
    tc.seed = 0;

    SUBCASE("parameters shrink by exactly 1 - lr * wd") {
        std::vector<std::vector<float>> before;
        for (const auto& p : enc.net.params()) before.push_back(*p.value);
        const TrainHistory h = train(enc, manifest, manifest, LossConfig{}, tc, images);
        REQUIRE(!h.diverged);
        REQUIRE(h.rows.size() >= 1);
        CHECK(h.rows[0].loss == doctest::Approx(0.0));
        const double scale = 1.0 - tc.learning_rate * tc.weight_decay;
        const auto params = enc.net.params();
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& now = *params[i].value;
            for (size_t j = 0; j < now.size(); ++j) {
                CHECK(now[j] ==
                      doctest::Approx(before[i][j] * scale).epsilon(1e-5).scale(1e-6));
            }
        }
    }
    SUBCASE("without weight decay the step is a no-op") {
        tc.weight_decay = 0.0;
        std::vector<std::vector<float>> before;
        for (const auto& p : enc.net.params()) before.push_back(*p.value);
        train(enc, manifest, manifest, LossConfig{}, tc, images);
        const auto params = enc.net.params();
        for (size_t i = 0; i < params.size(); ++i) {
            CHECK(*params[i].value == before[i]);
        }
    }
}

TEST_CASE("encoder gradients match central differences") {
    EncoderConfig cfg;
    cfg.input_side = 8;
    cfg.stages = {{4, 1}};
    cfg.fc_layers = 1;
    cfg.fc_dim = 8;

    int instances = 0;
    double worst = 0.0;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        cfg.seed = seed;
        nn::Net<double> net = build_net<double>(cfg);
        Rng rng = make_rng(seed, "gradcheck");
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        nn::Tensor<double> x0(2, 3, 8, 8);
        for (double& v : x0.data) v = u(rng);

        const LossConfig loss_cfg;
        auto d2_of = [&]() {
            nn::Tensor<double> x = x0;
            nn::Tensor<double> e = net.forward(std::move(x), true);
            double d2 = 0;
            for (int j = 0; j < 8; ++j) {
                const double d = e.img(0)[j] - e.img(1)[j];
                d2 += d * d;
            }
            return d2;
        };

        // pick the label that makes the hinge active with margin to spare
        double d2 = d2_of();
        const int y = d2 > loss_cfg.b ? +1 : -1;
        const double active_margin = loss_cfg.m - y * (loss_cfg.b - d2);
        if (active_margin < 0.05) continue;  // too close to the kink for finite differences
        auto loss_of = [&]() { return pair_loss(d2_of(), y, loss_cfg); };

        // analytic pass
        {
            nn::Tensor<double> x = x0;
            nn::Tensor<double> e = net.forward(std::move(x), true);
            nn::Tensor<double> de(2, 8, 1, 1);
            for (int j = 0; j < 8; ++j) {
                const double g = 2.0 * y * (e.img(0)[j] - e.img(1)[j]);
                de.img(0)[j] = g;
                de.img(1)[j] = -g;
            }
            net.zero_grad();
            net.backward(std::move(de));
        }

        const auto params = net.params();
        std::uniform_int_distribution<size_t> pick_vec(0, params.size() - 1);
        for (int probe = 0; probe < 6; ++probe) {
            const size_t pi = pick_vec(rng);
            auto& value = *params[pi].value;
            std::uniform_int_distribution<size_t> pick_idx(0, value.size() - 1);
            const size_t j = pick_idx(rng);
            const double analytic = (*params[pi].grad)[j];
            const double old = value[j];
            auto numeric_at = [&](double h) {
                value[j] = old + h;
                const double lp = loss_of();
                value[j] = old - h;
                const double lm = loss_of();
                value[j] = old;
                return (lp - lm) / (2.0 * h);
            };
            const double n1 = numeric_at(1e-5);
            const double n2 = numeric_at(5e-6);
            // two step sizes only agree where the loss is locally smooth; a
            // relu or pooling switch inside the stencil shows up as a gap
            if (std::abs(n1 - n2) > 1e-6 + 1e-3 * std::max(std::abs(n1), std::abs(n2))) {
                continue;
            }
            const double rel =
                std::abs(n1 - analytic) / std::max({std::abs(n1), std::abs(analytic), 1e-2});
            worst = std::max(worst, rel);
            CHECK(rel < 1e-4);
            ++instances;
        }
    }
    CHECK(instances >= 100);
    MESSAGE("gradcheck probes kept: " << instances << ", worst relative error: " << worst);
}

TEST_CASE("training reduces the loss and helps validation accuracy") {
    Encoder enc = build_encoder(mini_config(1));
    ToySet toy = toy_set(6, 4, 24, 11);

    // hold out a balanced validation slice
    PairManifest train_m, val_m;
    int sim_held = 0, dis_held = 0;
    for (const FacePair& p : toy.manifest.pairs) {
        if (p.y > 0 && sim_held < 6) {
            val_m.pairs.push_back(p);
            ++sim_held;
        } else if (p.y < 0 && dis_held < 6) {
            val_m.pairs.push_back(p);
            ++dis_held;
        } else {
            train_m.pairs.push_back(p);
        }
    }
    train_m.recount();
    val_m.recount();

    const LossConfig loss_cfg;
    const double acc_before = validate(enc, val_m, loss_cfg, toy.images);

    TrainConfig tc;
    tc.learning_rate = 0.02;
    tc.batch_pairs = 8;
    tc.max_iterations = 150;
    tc.checkpoint_every = 50;
    tc.seed = 4;

    const TrainHistory hist = train(enc, train_m, val_m, loss_cfg, tc, toy.images);
    REQUIRE(!hist.diverged);
    CHECK(hist.final_iteration == 150);

    std::vector<double> losses;
    for (const HistoryRow& r : hist.rows) {
        if (std::isfinite(r.loss)) losses.push_back(r.loss);
    }
    REQUIRE(losses.size() >= 100);
    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const size_t tenth = losses.size() / 10;
    const double early = median_of({losses.begin(), losses.begin() + tenth});
    const double late = median_of({losses.end() - tenth, losses.end()});
    CHECK(late < early);

    const double acc_after = validate(enc, val_m, loss_cfg, toy.images);
    CHECK(acc_after >= acc_before);
    CHECK(hist.best_val_accuracy >= acc_after - 1e-12);

    // checkpoint rows carry accuracy, plain rows do not
    int checkpoints = 0;
    for (const HistoryRow& r : hist.rows) {
        if (r.event == "checkpoint") {
            ++checkpoints;
            CHECK(std::isfinite(r.val_accuracy));
        } else if (r.event.empty()) {
            CHECK(!std::isfinite(r.val_accuracy));
        }
    }
    CHECK(checkpoints == 3);
}

TEST_CASE("non-finite distances trigger restore and the diverged flag") {
    Encoder enc = build_encoder(mini_config(3, false));  // no norm layers to absorb the blowup
    ImageStore images;
    Image huge(18, 18, 3, 1e30f);
    Image huge2(18, 18, 3, 2e30f);
    images.put("a.ppm", huge);
    images.put("b.ppm", huge2);
    PairManifest manifest;
    manifest.pairs = {{"a.ppm", "b.ppm", +1, PairSource::track}};
    manifest.recount();

    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.weight_decay = 0.0;
    tc.batch_pairs = 1;
    tc.max_iterations = 10;
    tc.checkpoint_every = 1000;
    tc.augmentation = false;
    tc.seed = 0;

    const auto snap0 = enc.snapshot();
    const TrainHistory hist = train(enc, manifest, manifest, LossConfig{}, tc, images);
    CHECK(hist.diverged);
    CHECK(hist.final_iteration < tc.max_iterations);
    REQUIRE(!hist.rows.empty());
    CHECK(hist.rows.back().event.find("diverged") != std::string::npos);

    // parameters rolled back to the entry snapshot
    const auto now = enc.snapshot();
    REQUIRE(now.size() == snap0.size());
    for (size_t i = 0; i < now.size(); ++i) CHECK(now[i] == snap0[i]);
    CHECK(enc.step == 0);
}

TEST_CASE("history csv layout") {
    TrainHistory hist;
    hist.rows.push_back({1, 66.25, std::numeric_limits<double>::quiet_NaN(), ""});
    hist.rows.push_back({2, 3.5, 0.8125, "checkpoint"});
    const std::string path = tmp_path("history.csv");
    write_history_csv(path, hist, Provenance{"train", 9, "beef"});

    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "# stage=train seed=9 config=beef");
    std::getline(f, line);
    CHECK(line == "iteration,loss,val_accuracy,event");
    std::getline(f, line);
    CHECK(line == "1,66.25,,");
    std::getline(f, line);
    CHECK(line == "2,3.5,0.8125,checkpoint");
    CHECK(!std::getline(f, line));
}

TEST_CASE("train configuration validation") {
    TrainConfig tc;
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.batch_pairs = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.momentum = 1.0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.max_iterations = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    CHECK_NOTHROW(TrainConfig{}.validate());
}
