#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facerep/encoder.hpp"
#include "facerep/evalmod.hpp"
#include "facerep/metriclearn.hpp"
#include "facerep/pairminer.hpp"
#include "facerep/records.hpp"
#include "facerep/synth.hpp"
#include "facerep/tracking.hpp"
#include "facerep/trainer.hpp"

namespace facerep {

// One config drives every stage. A JSON file provides partial overrides on
// the defaults; flags override the file. The global seed fans out to the
// per-stage seeds through labeled derivation, so stages stay decoupled.
struct PipelineConfig {
    uint64_t seed = 0;
    bool strict = false;      // serialize everything; reruns must be byte-identical
    std::string out_dir = "out";

    // stage inputs; each stage also falls back to the out_dir artifact names
    std::string images_dir;
    std::string detections_path;
    std::string tracks_path;
    std::string genre_map_path;
    std::string manifest_path;
    std::string val_manifest_path;
    std::string checkpoint_path;
    std::string eval_pairs_path;

    TrackerConfig tracker;
    MiningConfig mining;
    int64_t val_pairs_each = 100;
    EncoderConfig encoder;
    LossConfig loss;
    TrainConfig train;
    FineTuneConfig finetune;
    int finetune_p = 64;
    std::vector<int> finetune_p_grid{128, 256, 512, 1000};
    std::vector<int64_t> finetune_pair_grid{1000, 2000, 5000, 10000, 20000};
    bool finetune_ablations = false;
    int eval_folds = 10;
    std::string eval_baseline;  // "" trained encoder, "lbp", "random"
    bool dump_activations = false;
    SynthCorpusConfig synth;

    static PipelineConfig defaults();
    static PipelineConfig from_json_text(const std::string& text);
    static PipelineConfig from_json_file(const std::string& path);

    void set_seed(uint64_t s);  // also rederives every stage seed
    void validate() const;
    std::string to_json() const;       // effective config, sorted keys
    std::string config_hash() const;   // hex fnv1a64 of to_json()
    Provenance provenance(const std::string& stage) const;

    // artifact path helpers (inputs fall back to these when unset)
    std::string artifact(const std::string& name) const;
};

struct SynthArtifacts {
    std::string images_dir, detections_path, genre_map_path, identity_map_path, eval_pairs_path;
    int64_t n_detections = 0;
    int64_t n_eval_pairs = 0;
};
SynthArtifacts run_synth(const PipelineConfig& cfg);

struct TrackArtifacts {
    std::string tracks_path, stats_path, length_hist_path, size_hist_path;
    TrackStats stats;
};
TrackArtifacts run_track(const PipelineConfig& cfg);

struct MineArtifacts {
    std::string manifest_path, train_manifest_path, val_manifest_path;
    int64_t n_similar = 0, n_dissimilar = 0;
    std::vector<std::string> warnings;
};
MineArtifacts run_mine(const PipelineConfig& cfg);

struct TrainArtifacts {
    std::string checkpoint_path, history_path;
    TrainHistory history;
};
TrainArtifacts run_train(const PipelineConfig& cfg);

struct EvalArtifacts {
    std::string report_path, roc_path, scored_path;
    EvalReport report;
};
EvalArtifacts run_eval(const PipelineConfig& cfg);

struct FineTuneArtifacts {
    std::string projection_path, history_path, report_path;
    std::string p_ablation_path, pair_ablation_path;  // set when ablations ran
    EvalReport baseline_report;  // unprojected descriptors, same folds
    EvalReport tuned_report;     // per-fold refit, threshold from training folds
};
FineTuneArtifacts run_finetune(const PipelineConfig& cfg);

// Descriptors for every ref, in input order. Shared by eval and finetune.
DescriptorTable build_descriptor_table(Encoder& enc, const std::vector<std::string>& refs,
                                       ImageStore& images);
// Unit-normalized uniform-pattern histograms of the center view instead.
DescriptorTable lbp_descriptor_table(const std::vector<std::string>& refs, int view_side,
                                     ImageStore& images);

// Squared euclidean distance between table rows, one ScoredPair per record.
std::vector<ScoredPair> score_pairs(const DescriptorTable& table,
                                    const std::vector<ScoredPairRecord>& records);

std::vector<std::string> unique_refs(const std::vector<ScoredPairRecord>& records);

}  // namespace facerep
