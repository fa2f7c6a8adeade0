#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "facerep/encoder.hpp"
#include "facerep/image.hpp"
#include "facerep/records.hpp"

namespace facerep {

struct LossConfig {
    double b = 1.0;
    double m = 0.5;
    void validate() const;
};

// max{0, m - y(b - D2)}
double pair_loss(double d2, int y, const LossConfig& cfg);

// hard pairs are exactly the pairs with nonzero hinge loss
bool is_hard(double d2, int y, const LossConfig& cfg);

double pair_distance(Encoder& enc, const Image& x1, const Image& x2);

struct TrainConfig {
    double learning_rate = 0.01;
    int batch_pairs = 32;
    double weight_decay = 0.0005;
    double momentum = 0.0;
    int64_t max_iterations = 1000;
    int64_t checkpoint_every = 500;
    int64_t early_stop_patience = 0;  // checkpoints without val improvement; 0 disables
    bool augmentation = true;
    bool hard_mining = false;  // one mining round after the base iterations
    int hard_epochs = 3;
    uint64_t seed = 0;
    std::string checkpoint_dir;  // empty: keep checkpoints in memory only
    void validate() const;
};

struct HistoryRow {
    int64_t iteration = 0;
    double loss = 0.0;
    double val_accuracy = 0.0;  // NaN when not measured at this row
    std::string event;
};

struct TrainHistory {
    std::vector<HistoryRow> rows;
    bool diverged = false;
    double best_val_accuracy = 0.0;
    int64_t final_iteration = 0;
};

void write_history_csv(const std::string& path, const TrainHistory& history,
                       const Provenance& prov);

// Minibatch SGD on the pair hinge. Pairs are drawn uniformly from the
// manifest; each member gets an independent random view when augmentation is
// on, the deterministic center view otherwise. On a NaN loss the last
// checkpointed parameters are restored and history.diverged is set.
TrainHistory train(Encoder& enc, const PairManifest& manifest, const PairManifest& val,
                   const LossConfig& loss_cfg, const TrainConfig& train_cfg, ImageStore& images);

// Accuracy with the loss bias as threshold; center-view embeddings.
// A pair is correct iff (y=+1 and D2 < b) or (y=-1 and D2 > b); ties count
// incorrect.
double validate(Encoder& enc, const PairManifest& val, const LossConfig& loss_cfg,
                ImageStore& images);

// Sub-manifest of pairs with nonzero loss, plus the fraction retained.
std::pair<PairManifest, double> hard_mine(Encoder& enc, const PairManifest& manifest,
                                          const LossConfig& loss_cfg, ImageStore& images);

}  // namespace facerep
