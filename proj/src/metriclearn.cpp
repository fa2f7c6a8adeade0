#include "facerep/metriclearn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "facerep/errors.hpp"

namespace facerep {

void FineTuneConfig::validate() const {
    if (!(init_sigma > 0)) throw std::invalid_argument("finetune: init_sigma must be positive");
    if (!(learning_rate > 0)) throw std::invalid_argument("finetune: learning_rate must be positive");
    if (!(lr_decay_factor > 1)) throw std::invalid_argument("finetune: lr_decay_factor must exceed 1");
    if (epochs < 1) throw std::invalid_argument("finetune: epochs must be >= 1");
    if (batch_pairs < 1) throw std::invalid_argument("finetune: batch_pairs must be >= 1");
    if (val_fraction < 0 || val_fraction >= 1) {
        throw std::invalid_argument("finetune: val_fraction must be in [0,1)");
    }
    if (patience < 1) throw std::invalid_argument("finetune: patience must be >= 1");
}

ProjectionModel init_projection(int p, int d, const FineTuneConfig& cfg, Rng& rng) {
    if (p < 1 || p > d) {
        throw std::invalid_argument("init_projection: need 1 <= p <= d, got p=" +
                                    std::to_string(p) + " d=" + std::to_string(d));
    }
    cfg.validate();
    ProjectionModel model;
    model.p = p;
    model.d = d;
    model.W.resize(p, d);
    std::normal_distribution<double> gauss(0.0, cfg.init_sigma);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < d; ++j) model.W(i, j) = gauss(rng);
    }
    model.b = 1.0;
    model.m = 0.5;
    return model;
}

double projected_distance(const ProjectionModel& model, const Eigen::VectorXd& fi,
                          const Eigen::VectorXd& fj) {
    if (fi.size() != model.d || fj.size() != model.d) {
        throw std::invalid_argument("projected_distance: descriptor length " +
                                    std::to_string(fi.size()) + "/" + std::to_string(fj.size()) +
                                    ", model expects " + std::to_string(model.d));
    }
    return (model.W * (fi - fj)).squaredNorm();
}

MetricGradients metric_gradients(const ProjectionModel& model,
                                 const std::vector<MetricPair>& batch) {
    if (batch.empty()) throw std::invalid_argument("metric_gradients: empty batch");
    MetricGradients g;
    g.dW = Eigen::MatrixXd::Zero(model.p, model.d);
    for (const MetricPair& pair : batch) {
        if (pair.y != 1 && pair.y != -1) {
            throw std::invalid_argument("metric_gradients: label must be +1 or -1");
        }
        const Eigen::VectorXd e = pair.phi_i - pair.phi_j;
        const Eigen::VectorXd we = model.W * e;
        const double d2 = we.squaredNorm();
        if (!std::isfinite(d2)) {
            throw NumericalError("metric_gradients: non-finite projected distance");
        }
        const double loss = std::max(0.0, model.m - pair.y * (model.b - d2));
        g.loss += loss;
        if (loss > 0) {
            g.dW.noalias() += 2.0 * pair.y * we * e.transpose();
            g.db += -pair.y;
        }
    }
    return g;
}

namespace {

double threshold_accuracy(const ProjectionModel& model,
                          const std::vector<std::array<int64_t, 3>>& pairs,
                          const Eigen::MatrixXd& desc) {
    if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
    int64_t correct = 0;
    for (const auto& [ia, ib, y] : pairs) {
        const double d2 = (model.W * (desc.col(ia) - desc.col(ib))).squaredNorm();
        if ((y > 0 && d2 < model.b) || (y < 0 && d2 > model.b)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace

std::pair<ProjectionModel, FineTuneHistory> fit_metric(const DescriptorTable& descriptors,
                                                       const std::vector<ScoredPairRecord>& pairs,
                                                       int p, const FineTuneConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("fit_metric: no pairs");
    const int d = descriptors.dim;

    // dense copy: column k = descriptor of table row k, in double
    Eigen::MatrixXd desc(d, descriptors.refs.size());
    for (size_t k = 0; k < descriptors.refs.size(); ++k) {
        for (int j = 0; j < d; ++j) desc(j, static_cast<int64_t>(k)) = descriptors.row(k)[j];
    }
    std::vector<std::array<int64_t, 3>> indexed;
    indexed.reserve(pairs.size());
    for (const ScoredPairRecord& pr : pairs) {
        const auto ia = descriptors.index.find(pr.a);
        const auto ib = descriptors.index.find(pr.b);
        if (ia == descriptors.index.end() || ib == descriptors.index.end()) {
            throw std::runtime_error("fit_metric: pair member missing from descriptor table: " +
                                     (ia == descriptors.index.end() ? pr.a : pr.b));
        }
        indexed.push_back({static_cast<int64_t>(ia->second), static_cast<int64_t>(ib->second),
                           pr.y});
    }

    Rng rng = make_rng(cfg.seed, "finetune");
    std::shuffle(indexed.begin(), indexed.end(), rng);
    size_t n_val = static_cast<size_t>(cfg.val_fraction * static_cast<double>(indexed.size()));
    if (cfg.val_fraction > 0 && n_val == 0 && indexed.size() > 1) n_val = 1;
    const std::vector<std::array<int64_t, 3>> val(indexed.begin(), indexed.begin() + n_val);
    std::vector<std::array<int64_t, 3>> fit(indexed.begin() + n_val, indexed.end());
    if (fit.empty()) throw std::invalid_argument("fit_metric: validation slice consumed all pairs");

    ProjectionModel model = init_projection(p, d, cfg, rng);
    FineTuneHistory history;
    ProjectionModel best = model;
    int epochs_since_best = 0;
    double lr = cfg.learning_rate;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = make_rng(cfg.seed, "finetune-epoch", static_cast<uint64_t>(epoch));
        std::shuffle(fit.begin(), fit.end(), erng);
        double epoch_loss = 0;
        for (size_t off = 0; off < fit.size(); off += static_cast<size_t>(cfg.batch_pairs)) {
            const size_t hi = std::min(fit.size(), off + static_cast<size_t>(cfg.batch_pairs));
            Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(model.p, model.d);
            double db = 0, loss = 0;
            for (size_t k = off; k < hi; ++k) {
                const auto& [ia, ib, y] = fit[k];
                const Eigen::VectorXd e = desc.col(ia) - desc.col(ib);
                const Eigen::VectorXd we = model.W * e;
                const double d2 = we.squaredNorm();
                if (!std::isfinite(d2)) {
                    throw NumericalError("fit_metric: distance became non-finite at epoch " +
                                         std::to_string(epoch));
                }
                const double l = std::max(0.0, model.m - y * (model.b - d2));
                loss += l;
                if (l > 0) {
                    dW.noalias() += 2.0 * y * we * e.transpose();
                    db += -y;
                }
            }
            const double inv = 1.0 / static_cast<double>(hi - off);
            if (!std::isfinite(loss)) {
                throw NumericalError("fit_metric: loss became non-finite at epoch " +
                                     std::to_string(epoch));
            }
            model.W.noalias() -= lr * inv * dW;
            model.b -= lr * inv * db;
            epoch_loss += loss;
        }
        epoch_loss /= static_cast<double>(fit.size());

        FineTuneEpochRow row{epoch, lr, epoch_loss, std::numeric_limits<double>::quiet_NaN(), ""};
        if (!val.empty()) {
            row.val_accuracy = threshold_accuracy(model, val, desc);
            if (row.val_accuracy > history.best_val_accuracy) {
                history.best_val_accuracy = row.val_accuracy;
                best = model;
                epochs_since_best = 0;
            } else {
                ++epochs_since_best;
            }
        }
        history.rows.push_back(row);
        lr /= cfg.lr_decay_factor;
        if (!val.empty() && epochs_since_best >= cfg.patience) {
            history.rows.push_back(FineTuneEpochRow{
                epoch, lr, epoch_loss, std::numeric_limits<double>::quiet_NaN(), "early_stop"});
            break;
        }
    }
    if (!val.empty()) model = best;
    return {std::move(model), std::move(history)};
}

void write_finetune_history_csv(const std::string& path, const FineTuneHistory& history,
                                const Provenance& prov) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << prov.to_comment_line() << "\n";
    os << "epoch,lr,train_loss,val_accuracy,event\n";
    char buf[64];
    for (const FineTuneEpochRow& r : history.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,", r.epoch, r.lr, r.train_loss);
        os << buf;
        if (std::isfinite(r.val_accuracy)) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.val_accuracy);
            os << buf;
        }
        os << "," << r.event << "\n";
    }
    if (!os) throw std::runtime_error("failed while writing " + path);
}

namespace {
constexpr char kProjectionMagic[8] = {'F', 'R', 'E', 'P', 'P', 'R', 'v', '1'};
}

void write_projection(const std::string& path, const ProjectionModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write(kProjectionMagic, sizeof(kProjectionMagic));
    const uint32_t p = static_cast<uint32_t>(model.p), d = static_cast<uint32_t>(model.d);
    os.write(reinterpret_cast<const char*>(&p), sizeof(p));
    os.write(reinterpret_cast<const char*>(&d), sizeof(d));
    os.write(reinterpret_cast<const char*>(&model.m), sizeof(double));
    os.write(reinterpret_cast<const char*>(&model.b), sizeof(double));
    for (int i = 0; i < model.p; ++i) {
        for (int j = 0; j < model.d; ++j) {
            const double v = model.W(i, j);
            os.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
    }
    if (!os) throw std::runtime_error("failed while writing " + path);
}

ProjectionModel read_projection(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kProjectionMagic, sizeof(magic)) != 0) {
        throw std::runtime_error(path + ": not a projection file");
    }
    uint32_t p = 0, d = 0;
    is.read(reinterpret_cast<char*>(&p), sizeof(p));
    is.read(reinterpret_cast<char*>(&d), sizeof(d));
    ProjectionModel model;
    model.p = static_cast<int>(p);
    model.d = static_cast<int>(d);
    is.read(reinterpret_cast<char*>(&model.m), sizeof(double));
    is.read(reinterpret_cast<char*>(&model.b), sizeof(double));
    if (!is || model.p < 1 || model.d < model.p) {
        throw std::runtime_error(path + ": bad projection header");
    }
    model.W.resize(model.p, model.d);
    for (int i = 0; i < model.p; ++i) {
        for (int j = 0; j < model.d; ++j) {
            double v;
            is.read(reinterpret_cast<char*>(&v), sizeof(double));
            model.W(i, j) = v;
        }
    }
    if (!is) throw std::runtime_error(path + ": truncated projection data");
    return model;
}

}  // namespace facerep
