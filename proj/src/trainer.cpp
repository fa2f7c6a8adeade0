#include "facerep/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "facerep/errors.hpp"
#include "facerep/rng.hpp"
#include "facerep/views.hpp"

namespace facerep {

void LossConfig::validate() const {
    if (!(m > 0)) throw std::invalid_argument("loss: margin must be positive");
    if (!(b > m)) throw std::invalid_argument("loss: bias must exceed the margin");
}

double pair_loss(double d2, int y, const LossConfig& cfg) {
    if (y != 1 && y != -1) throw std::invalid_argument("pair_loss: label must be +1 or -1");
    if (!(d2 >= 0)) throw std::invalid_argument("pair_loss: squared distance must be non-negative");
    return std::max(0.0, cfg.m - y * (cfg.b - d2));
}

bool is_hard(double d2, int y, const LossConfig& cfg) { return pair_loss(d2, y, cfg) > 0.0; }

double pair_distance(Encoder& enc, const Image& x1, const Image& x2) {
    const Eigen::MatrixXf e = embed_images(enc, {&x1, &x2});
    return static_cast<double>((e.row(0) - e.row(1)).squaredNorm());
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be positive");
    if (batch_pairs < 1) throw std::invalid_argument("train: batch_pairs must be >= 1");
    if (weight_decay < 0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("train: momentum must be in [0,1)");
    if (max_iterations < 1) throw std::invalid_argument("train: max_iterations must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("train: checkpoint_every must be >= 1");
    if (hard_epochs < 0) throw std::invalid_argument("train: hard_epochs must be >= 0");
    if (early_stop_patience < 0) throw std::invalid_argument("train: early_stop_patience must be >= 0");
}

namespace {

// center-view embeddings for every distinct ref, in chunks
std::map<std::string, std::vector<float>> embed_refs(Encoder& enc,
                                                     const std::vector<FacePair>& pairs,
                                                     ImageStore& images) {
    std::set<std::string> unique;
    for (const FacePair& p : pairs) {
        unique.insert(p.a);
        unique.insert(p.b);
    }
    std::map<std::string, std::vector<float>> out;
    std::vector<std::string> batch_refs;
    std::vector<Image> views;
    std::vector<const Image*> ptrs;
    auto flush = [&]() {
        if (ptrs.empty()) return;
        const Eigen::MatrixXf emb = embed_images(enc, ptrs);
        for (size_t i = 0; i < batch_refs.size(); ++i) {
            const Eigen::VectorXf row = emb.row(static_cast<int>(i));
            out[batch_refs[i]] = std::vector<float>(row.data(), row.data() + row.size());
        }
        batch_refs.clear();
        views.clear();
        ptrs.clear();
    };
    constexpr size_t kChunk = 64;
    views.reserve(kChunk);
    for (const std::string& ref : unique) {
        views.push_back(center_view(images.get(ref), enc.cfg.input_side));
        batch_refs.push_back(ref);
        if (views.size() == kChunk) {
            ptrs.clear();
            for (const Image& v : views) ptrs.push_back(&v);
            flush();
        }
    }
    ptrs.clear();
    for (const Image& v : views) ptrs.push_back(&v);
    flush();
    return out;
}

double squared_distance(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s;
}

struct Sgd {
    double lr, wd, momentum;
    std::vector<std::vector<float>> velocity;

    void step(nn::Net<float>& net) {
        const auto params = net.params();
        if (momentum > 0 && velocity.empty()) {
            for (const auto& p : params) velocity.emplace_back(p.value->size(), 0.0f);
        }
        for (size_t i = 0; i < params.size(); ++i) {
            auto& value = *params[i].value;
            auto& grad = *params[i].grad;
            for (size_t j = 0; j < value.size(); ++j) {
                const double g = static_cast<double>(grad[j]) + wd * value[j];
                if (momentum > 0) {
                    auto& v = velocity[i][j];
                    v = static_cast<float>(momentum * v + g);
                    value[j] -= static_cast<float>(lr * v);
                } else {
                    value[j] -= static_cast<float>(lr * g);
                }
            }
        }
    }
};

}  // namespace

double validate(Encoder& enc, const PairManifest& val, const LossConfig& loss_cfg,
                ImageStore& images) {
    loss_cfg.validate();
    if (val.pairs.empty()) throw std::invalid_argument("validate: empty validation set");
    const auto emb = embed_refs(enc, val.pairs, images);
    int64_t correct = 0;
    for (const FacePair& p : val.pairs) {
        const double d2 = squared_distance(emb.at(p.a), emb.at(p.b));
        if ((p.y > 0 && d2 < loss_cfg.b) || (p.y < 0 && d2 > loss_cfg.b)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(val.pairs.size());
}

std::pair<PairManifest, double> hard_mine(Encoder& enc, const PairManifest& manifest,
                                          const LossConfig& loss_cfg, ImageStore& images) {
    loss_cfg.validate();
    PairManifest hard;
    if (manifest.pairs.empty()) return {hard, 0.0};
    const auto emb = embed_refs(enc, manifest.pairs, images);
    for (const FacePair& p : manifest.pairs) {
        const double d2 = squared_distance(emb.at(p.a), emb.at(p.b));
        if (is_hard(d2, p.y, loss_cfg)) hard.pairs.push_back(p);
    }
    hard.recount();
    const double retained =
        static_cast<double>(hard.pairs.size()) / static_cast<double>(manifest.pairs.size());
    return {std::move(hard), retained};
}

TrainHistory train(Encoder& enc, const PairManifest& manifest, const PairManifest& val,
                   const LossConfig& loss_cfg, const TrainConfig& train_cfg, ImageStore& images) {
    loss_cfg.validate();
    train_cfg.validate();
    if (manifest.pairs.empty()) throw std::invalid_argument("train: empty manifest");
    if (val.pairs.empty()) throw std::invalid_argument("train: empty validation set");

    TrainHistory history;
    Sgd sgd{train_cfg.learning_rate, train_cfg.weight_decay, train_cfg.momentum, {}};
    const int side = enc.cfg.input_side;
    const int B = train_cfg.batch_pairs;
    const int fc = enc.cfg.fc_dim;

    auto good_params = enc.snapshot();
    int64_t good_step = enc.step;
    int64_t iter = 0;
    int64_t checkpoints_since_best = 0;
    bool stop = false;

    auto checkpoint = [&](HistoryRow row) {
        row.val_accuracy = validate(enc, val, loss_cfg, images);
        if (row.val_accuracy > history.best_val_accuracy) {
            history.best_val_accuracy = row.val_accuracy;
            checkpoints_since_best = 0;
        } else {
            ++checkpoints_since_best;
        }
        good_params = enc.snapshot();
        good_step = enc.step;
        if (!train_cfg.checkpoint_dir.empty()) {
            namespace fs = std::filesystem;
            fs::create_directories(train_cfg.checkpoint_dir);
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%08lld.ckpt",
                          static_cast<long long>(iter));
            save_checkpoint(enc, (fs::path(train_cfg.checkpoint_dir) / name).string());
        }
        history.rows.push_back(std::move(row));
        if (train_cfg.early_stop_patience > 0 &&
            checkpoints_since_best >= train_cfg.early_stop_patience) {
            history.rows.push_back(HistoryRow{iter, history.rows.back().loss,
                                              std::numeric_limits<double>::quiet_NaN(),
                                              "early_stop"});
            stop = true;
        }
    };

    auto run_phase = [&](const PairManifest& source, int64_t n_iters) {
        std::uniform_int_distribution<size_t> pick(0, source.pairs.size() - 1);
        for (int64_t k = 0; k < n_iters && !stop; ++k) {
            ++iter;
            Rng batch_rng = make_rng(train_cfg.seed, "batch", static_cast<uint64_t>(iter));
            Rng aug_rng = make_rng(train_cfg.seed, "augment", static_cast<uint64_t>(iter));

            std::vector<const FacePair*> batch(static_cast<size_t>(B));
            nn::Tensor<float> x(2 * B, 3, side, side);
            for (int i = 0; i < B; ++i) {
                batch[static_cast<size_t>(i)] = &source.pairs[pick(batch_rng)];
                for (int member = 0; member < 2; ++member) {
                    const std::string& ref =
                        member == 0 ? batch[static_cast<size_t>(i)]->a
                                    : batch[static_cast<size_t>(i)]->b;
                    const Image& raw = images.get(ref);
                    const Image view = train_cfg.augmentation
                                           ? random_view(raw, side, aug_rng)
                                           : center_view(raw, side);
                    std::copy(view.data.begin(), view.data.end(), x.img(member * B + i));
                }
            }

            nn::Tensor<float> e = enc.net.forward(std::move(x), true);
            nn::Tensor<float> de(2 * B, fc, 1, 1);
            double total_loss = 0;
            bool finite = true;
            for (int i = 0; i < B && finite; ++i) {
                const float* ea = e.img(i);
                const float* eb = e.img(B + i);
                double d2 = 0;
                for (int j = 0; j < fc; ++j) {
                    const double d = static_cast<double>(ea[j]) - eb[j];
                    d2 += d * d;
                }
                if (!std::isfinite(d2)) {
                    finite = false;
                    break;
                }
                const int y = batch[static_cast<size_t>(i)]->y;
                const double loss = pair_loss(d2, y, loss_cfg);
                total_loss += loss;
                if (loss > 0) {
                    const double scale = 2.0 * y / B;
                    float* da = de.img(i);
                    float* db = de.img(B + i);
                    for (int j = 0; j < fc; ++j) {
                        const float g = static_cast<float>(scale * (ea[j] - eb[j]));
                        da[j] = g;
                        db[j] = -g;
                    }
                }
            }
            const double batch_loss =
                finite ? total_loss / B : std::numeric_limits<double>::quiet_NaN();

            if (!std::isfinite(batch_loss)) {
                enc.restore(good_params);
                enc.step = good_step;
                history.diverged = true;
                history.rows.push_back(HistoryRow{iter, batch_loss,
                                                  std::numeric_limits<double>::quiet_NaN(),
                                                  "diverged restored_step=" +
                                                      std::to_string(good_step)});
                stop = true;
                return;
            }

            enc.net.zero_grad();
            enc.net.backward(std::move(de));
            sgd.step(enc.net);
            ++enc.step;

            HistoryRow row{iter, batch_loss, std::numeric_limits<double>::quiet_NaN(), ""};
            if (iter % train_cfg.checkpoint_every == 0 || k + 1 == n_iters) {
                row.event = "checkpoint";
                checkpoint(std::move(row));
            } else {
                history.rows.push_back(std::move(row));
            }
        }
    };

    run_phase(manifest, train_cfg.max_iterations);

    if (train_cfg.hard_mining && train_cfg.hard_epochs > 0 && !stop && !history.diverged) {
        auto [hard, retained] = hard_mine(enc, manifest, loss_cfg, images);
        char note[64];
        std::snprintf(note, sizeof(note), "hard_mine retained=%.4f", retained);
        history.rows.push_back(
            HistoryRow{iter, std::numeric_limits<double>::quiet_NaN(),
                       std::numeric_limits<double>::quiet_NaN(), note});
        if (!hard.pairs.empty()) {
            const int64_t per_epoch =
                (static_cast<int64_t>(hard.pairs.size()) + B - 1) / B;
            run_phase(hard, per_epoch * train_cfg.hard_epochs);
        }
    }

    history.final_iteration = iter;
    return history;
}

void write_history_csv(const std::string& path, const TrainHistory& history,
                       const Provenance& prov) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << prov.to_comment_line() << "\n";
    os << "iteration,loss,val_accuracy,event\n";
    char buf[64];
    for (const HistoryRow& r : history.rows) {
        os << r.iteration << ",";
        if (std::isfinite(r.loss)) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.loss);
            os << buf;
        }
        os << ",";
        if (std::isfinite(r.val_accuracy)) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.val_accuracy);
            os << buf;
        }
        os << "," << r.event << "\n";
    }
    if (!os) throw std::runtime_error("failed while writing " + path);
}

}  // namespace facerep
