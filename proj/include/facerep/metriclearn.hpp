#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "facerep/encoder.hpp"
#include "facerep/records.hpp"
#include "facerep/rng.hpp"

namespace facerep {

// Low-rank projection W (p x d) with a learned threshold b and fixed margin m.
struct ProjectionModel {
    int p = 0, d = 0;
    Eigen::MatrixXd W;
    double b = 1.0;
    double m = 0.5;
};

struct FineTuneConfig {
    double init_sigma = 0.01;
    double learning_rate = 0.01;
    double lr_decay_factor = 1.2;  // lr divided by this after every epoch
    int epochs = 20;
    int batch_pairs = 128;
    double val_fraction = 0.1;  // held-in slice for early stopping; 0 disables
    int patience = 5;           // epochs without val improvement before stopping
    uint64_t seed = 0;
    void validate() const;
};

ProjectionModel init_projection(int p, int d, const FineTuneConfig& cfg, Rng& rng);

// ||W phi_i - W phi_j||^2
double projected_distance(const ProjectionModel& model, const Eigen::VectorXd& fi,
                          const Eigen::VectorXd& fj);

struct MetricPair {
    Eigen::VectorXd phi_i, phi_j;
    int y = 0;
};

// Summed over the batch: active pairs contribute dW = 2 y (W e) e^T, db = -y,
// with e = phi_i - phi_j; satisfied pairs contribute nothing.
struct MetricGradients {
    Eigen::MatrixXd dW;
    double db = 0.0;
    double loss = 0.0;
};

MetricGradients metric_gradients(const ProjectionModel& model,
                                 const std::vector<MetricPair>& batch);

struct FineTuneEpochRow {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;  // NaN when no validation slice
    std::string event;
};

struct FineTuneHistory {
    std::vector<FineTuneEpochRow> rows;
    double best_val_accuracy = 0.0;
};

void write_finetune_history_csv(const std::string& path, const FineTuneHistory& history,
                                const Provenance& prov);

// Minibatch descent over descriptor pairs; updates use batch means, the
// learning rate decays by 1/lr_decay_factor each epoch, m stays fixed and b
// is learned. Throws NumericalError on a NaN loss.
std::pair<ProjectionModel, FineTuneHistory> fit_metric(const DescriptorTable& descriptors,
                                                       const std::vector<ScoredPairRecord>& pairs,
                                                       int p, const FineTuneConfig& cfg);

void write_projection(const std::string& path, const ProjectionModel& model);
ProjectionModel read_projection(const std::string& path);

}  // namespace facerep
