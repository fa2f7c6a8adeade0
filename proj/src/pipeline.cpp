#include "facerep/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "facerep/errors.hpp"
#include "facerep/lbp.hpp"
#include "facerep/rng.hpp"
#include "facerep/views.hpp"

namespace facerep {

using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

std::string resolve(const std::string& configured, const PipelineConfig& cfg,
                    const std::string& fallback) {
    return configured.empty() ? cfg.artifact(fallback) : configured;
}

void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig cfg;
    cfg.encoder = encoder_preset("reference-small", 0);
    cfg.set_seed(0);
    return cfg;
}

void PipelineConfig::set_seed(uint64_t s) {
    seed = s;
    mining.seed = derive_seed(s, "mine");
    encoder.seed = derive_seed(s, "encoder");
    train.seed = derive_seed(s, "train");
    finetune.seed = derive_seed(s, "finetune");
    synth.seed = derive_seed(s, "synth");
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("config: bad json: ") + e.what());
    }
    PipelineConfig cfg = defaults();
    take(j, "strict", cfg.strict);
    take(j, "out_dir", cfg.out_dir);
    take(j, "images_dir", cfg.images_dir);
    take(j, "detections", cfg.detections_path);
    take(j, "tracks", cfg.tracks_path);
    take(j, "genre_map", cfg.genre_map_path);
    take(j, "manifest", cfg.manifest_path);
    take(j, "val_manifest", cfg.val_manifest_path);
    take(j, "checkpoint", cfg.checkpoint_path);
    take(j, "eval_pairs", cfg.eval_pairs_path);
    if (j.contains("tracker")) {
        const json& t = j.at("tracker");
        take(t, "sample_stride", cfg.tracker.sample_stride);
        take(t, "patience", cfg.tracker.patience);
        take(t, "min_track_len", cfg.tracker.min_track_len);
        take(t, "min_overlap", cfg.tracker.min_overlap);
    }
    if (j.contains("mining")) {
        const json& m = j.at("mining");
        take(m, "n_similar", cfg.mining.targets.n_similar);
        take(m, "n_dissimilar", cfg.mining.targets.n_dissimilar);
        take(m, "per_track_cap", cfg.mining.per_track_cap);
        take(m, "val_pairs_each", cfg.val_pairs_each);
    }
    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        std::string preset = cfg.encoder.preset_name;
        take(e, "preset", preset);
        if (preset != cfg.encoder.preset_name) cfg.encoder = encoder_preset(preset, 0);
        take(e, "input_side", cfg.encoder.input_side);
        take(e, "fc_layers", cfg.encoder.fc_layers);
        take(e, "fc_dim", cfg.encoder.fc_dim);
        take(e, "batchnorm", cfg.encoder.batchnorm);
        if (e.contains("stages")) {
            cfg.encoder.stages.clear();
            cfg.encoder.preset_name = "";
            for (const auto& s : e.at("stages")) {
                cfg.encoder.stages.push_back(
                    StageSpec{s.at("width").get<int>(), s.at("convs").get<int>()});
            }
        }
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        take(l, "b", cfg.loss.b);
        take(l, "m", cfg.loss.m);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        take(t, "learning_rate", cfg.train.learning_rate);
        take(t, "batch_pairs", cfg.train.batch_pairs);
        take(t, "weight_decay", cfg.train.weight_decay);
        take(t, "momentum", cfg.train.momentum);
        take(t, "max_iterations", cfg.train.max_iterations);
        take(t, "checkpoint_every", cfg.train.checkpoint_every);
        take(t, "early_stop_patience", cfg.train.early_stop_patience);
        take(t, "augmentation", cfg.train.augmentation);
        take(t, "hard_mining", cfg.train.hard_mining);
        take(t, "hard_epochs", cfg.train.hard_epochs);
        take(t, "checkpoint_dir", cfg.train.checkpoint_dir);
    }
    if (j.contains("finetune")) {
        const json& f = j.at("finetune");
        take(f, "init_sigma", cfg.finetune.init_sigma);
        take(f, "learning_rate", cfg.finetune.learning_rate);
        take(f, "lr_decay_factor", cfg.finetune.lr_decay_factor);
        take(f, "epochs", cfg.finetune.epochs);
        take(f, "batch_pairs", cfg.finetune.batch_pairs);
        take(f, "val_fraction", cfg.finetune.val_fraction);
        take(f, "patience", cfg.finetune.patience);
        take(f, "p", cfg.finetune_p);
        take(f, "p_grid", cfg.finetune_p_grid);
        take(f, "pair_grid", cfg.finetune_pair_grid);
        take(f, "ablations", cfg.finetune_ablations);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        take(e, "folds", cfg.eval_folds);
        take(e, "baseline", cfg.eval_baseline);
        take(e, "dump_activations", cfg.dump_activations);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        take(s, "n_videos", cfg.synth.n_videos);
        take(s, "frames_per_video", cfg.synth.frames_per_video);
        take(s, "n_identities", cfg.synth.n_identities);
        take(s, "entities_per_video", cfg.synth.entities_per_video);
        take(s, "n_genres", cfg.synth.n_genres);
        take(s, "frame_w", cfg.synth.frame_w);
        take(s, "frame_h", cfg.synth.frame_h);
        take(s, "box_side_min", cfg.synth.box_side_min);
        take(s, "box_side_max", cfg.synth.box_side_max);
        take(s, "speed_min", cfg.synth.speed_min);
        take(s, "speed_max", cfg.synth.speed_max);
        take(s, "render_side", cfg.synth.render_side);
        take(s, "absence_prob", cfg.synth.absence_prob);
        take(s, "absence_min", cfg.synth.absence_min);
        take(s, "absence_max", cfg.synth.absence_max);
        take(s, "n_eval_identities", cfg.synth.n_eval_identities);
        take(s, "eval_images_per_identity", cfg.synth.eval_images_per_identity);
        take(s, "eval_folds", cfg.synth.eval_folds);
        take(s, "eval_pairs_per_fold", cfg.synth.eval_pairs_per_fold);
        take(s, "noise_sigma", cfg.synth.noise_sigma);
    }
    uint64_t s = 0;
    if (j.contains("seed")) {
        s = j.at("seed").get<uint64_t>();
    }
    cfg.set_seed(s);  // always rederive stage seeds from the global seed
    return cfg;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    return from_json_text(read_text_file(path));
}

void PipelineConfig::validate() const {
    tracker.validate();
    encoder.validate();
    loss.validate();
    train.validate();
    finetune.validate();
    synth.validate();
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
    if (val_pairs_each < 0) throw std::invalid_argument("config: val_pairs_each must be >= 0");
    if (eval_folds < 2) throw std::invalid_argument("config: eval.folds must be >= 2");
    if (finetune_p < 1) throw std::invalid_argument("config: finetune.p must be >= 1");
    if (!eval_baseline.empty() && eval_baseline != "lbp" && eval_baseline != "random") {
        throw std::invalid_argument("config: eval.baseline must be empty, lbp, or random");
    }
}

std::string PipelineConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["strict"] = strict;
    j["out_dir"] = out_dir;
    j["images_dir"] = images_dir;
    j["detections"] = detections_path;
    j["tracks"] = tracks_path;
    j["genre_map"] = genre_map_path;
    j["manifest"] = manifest_path;
    j["val_manifest"] = val_manifest_path;
    j["checkpoint"] = checkpoint_path;
    j["eval_pairs"] = eval_pairs_path;
    j["tracker"] = {{"sample_stride", tracker.sample_stride},
                    {"patience", tracker.patience},
                    {"min_track_len", tracker.min_track_len},
                    {"min_overlap", tracker.min_overlap}};
    j["mining"] = {{"n_similar", mining.targets.n_similar},
                   {"n_dissimilar", mining.targets.n_dissimilar},
                   {"per_track_cap", mining.per_track_cap},
                   {"val_pairs_each", val_pairs_each}};
    j["encoder"] = json::parse(encoder.to_json());
    j["loss"] = {{"b", loss.b}, {"m", loss.m}};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"batch_pairs", train.batch_pairs},
                  {"weight_decay", train.weight_decay},
                  {"momentum", train.momentum},
                  {"max_iterations", train.max_iterations},
                  {"checkpoint_every", train.checkpoint_every},
                  {"early_stop_patience", train.early_stop_patience},
                  {"augmentation", train.augmentation},
                  {"hard_mining", train.hard_mining},
                  {"hard_epochs", train.hard_epochs},
                  {"checkpoint_dir", train.checkpoint_dir},
                  {"seed", train.seed}};
    j["finetune"] = {{"init_sigma", finetune.init_sigma},
                     {"learning_rate", finetune.learning_rate},
                     {"lr_decay_factor", finetune.lr_decay_factor},
                     {"epochs", finetune.epochs},
                     {"batch_pairs", finetune.batch_pairs},
                     {"val_fraction", finetune.val_fraction},
                     {"patience", finetune.patience},
                     {"seed", finetune.seed},
                     {"p", finetune_p},
                     {"p_grid", finetune_p_grid},
                     {"pair_grid", finetune_pair_grid},
                     {"ablations", finetune_ablations}};
    j["eval"] = {{"folds", eval_folds},
                 {"baseline", eval_baseline},
                 {"dump_activations", dump_activations}};
    j["synth"] = {{"n_videos", synth.n_videos},
                  {"frames_per_video", synth.frames_per_video},
                  {"n_identities", synth.n_identities},
                  {"entities_per_video", synth.entities_per_video},
                  {"n_genres", synth.n_genres},
                  {"frame_w", synth.frame_w},
                  {"frame_h", synth.frame_h},
                  {"box_side_min", synth.box_side_min},
                  {"box_side_max", synth.box_side_max},
                  {"speed_min", synth.speed_min},
                  {"speed_max", synth.speed_max},
                  {"render_side", synth.render_side},
                  {"absence_prob", synth.absence_prob},
                  {"absence_min", synth.absence_min},
                  {"absence_max", synth.absence_max},
                  {"n_eval_identities", synth.n_eval_identities},
                  {"eval_images_per_identity", synth.eval_images_per_identity},
                  {"eval_folds", synth.eval_folds},
                  {"eval_pairs_per_fold", synth.eval_pairs_per_fold},
                  {"noise_sigma", synth.noise_sigma},
                  {"seed", synth.seed}};
    return j.dump(2);
}

std::string PipelineConfig::config_hash() const {
    // paths are excluded so relocating a run does not change its identity
    json j = json::parse(to_json());
    for (const char* key : {"out_dir", "images_dir", "detections", "tracks", "genre_map",
                            "manifest", "val_manifest", "checkpoint", "eval_pairs"}) {
        j.erase(key);
    }
    j["train"].erase("checkpoint_dir");
    return hex64(fnv1a64(j.dump()));
}

Provenance PipelineConfig::provenance(const std::string& stage) const {
    Provenance p;
    p.stage = stage;
    p.seed = seed;
    p.config_hash = config_hash();
    return p;
}

std::string PipelineConfig::artifact(const std::string& name) const {
    return out_dir + "/" + name;
}

SynthArtifacts run_synth(const PipelineConfig& cfg) {
    ensure_dir(cfg.out_dir);
    SynthArtifacts out;
    out.images_dir = resolve(cfg.images_dir, cfg, "images");
    ensure_dir(out.images_dir);
    const SynthCorpus corpus = generate_corpus(cfg.synth, out.images_dir);
    const Provenance prov = cfg.provenance("synth");
    out.detections_path = cfg.artifact("detections.jsonl");
    out.genre_map_path = cfg.artifact("genres.json");
    out.identity_map_path = cfg.artifact("identities.json");
    out.eval_pairs_path = cfg.artifact("eval_pairs.jsonl");
    write_detections(out.detections_path, corpus.detections, prov);
    write_genre_map(out.genre_map_path, corpus.genres, prov);
    write_string_map(out.identity_map_path, corpus.identity_of, prov);
    write_labeled_pairs(out.eval_pairs_path, corpus.eval_pairs, prov);
    out.n_detections = static_cast<int64_t>(corpus.detections.size());
    out.n_eval_pairs = static_cast<int64_t>(corpus.eval_pairs.size());
    return out;
}

TrackArtifacts run_track(const PipelineConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const std::vector<Detection> dets =
        read_detections(resolve(cfg.detections_path, cfg, "detections.jsonl"));
    const std::vector<FaceTrack> tracks = run_tracker(dets, cfg.tracker);
    const Provenance prov = cfg.provenance("track");
    TrackArtifacts out;
    out.tracks_path = cfg.artifact("tracks.jsonl");
    out.stats_path = cfg.artifact("track_stats.json");
    out.length_hist_path = cfg.artifact("track_length_hist.csv");
    out.size_hist_path = cfg.artifact("face_size_hist.csv");
    write_tracks(out.tracks_path, tracks, prov);
    out.stats = track_stats(tracks);
    write_stats_report(out.stats_path, out.stats, prov);
    write_histogram_csv(out.length_hist_path, out.stats.length_hist, prov);
    write_histogram_csv(out.size_hist_path, out.stats.size_hist, prov);
    return out;
}

MineArtifacts run_mine(const PipelineConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const std::vector<FaceTrack> tracks = read_tracks(resolve(cfg.tracks_path, cfg, "tracks.jsonl"));
    const GenreMap genres = read_genre_map(resolve(cfg.genre_map_path, cfg, "genres.json"));
    MineArtifacts out;
    const PairManifest manifest = build_manifest(tracks, genres, cfg.mining, &out.warnings);
    const auto [train_split, val_split] =
        split_validation(manifest, cfg.val_pairs_each, derive_seed(cfg.seed, "val-split"));
    const Provenance prov = cfg.provenance("mine");
    out.manifest_path = cfg.artifact("manifest.jsonl");
    out.train_manifest_path = cfg.artifact("train_manifest.jsonl");
    out.val_manifest_path = cfg.artifact("val_manifest.jsonl");
    write_manifest(out.manifest_path, manifest, prov);
    write_manifest(out.train_manifest_path, train_split, prov);
    write_manifest(out.val_manifest_path, val_split, prov);
    out.n_similar = manifest.n_similar;
    out.n_dissimilar = manifest.n_dissimilar();
    return out;
}

TrainArtifacts run_train(const PipelineConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const PairManifest manifest =
        read_manifest(resolve(cfg.manifest_path, cfg, "train_manifest.jsonl"));
    const PairManifest val = read_manifest(resolve(cfg.val_manifest_path, cfg, "val_manifest.jsonl"));
    ImageStore images(resolve(cfg.images_dir, cfg, "images"));
    Encoder enc = build_encoder(cfg.encoder);
    TrainArtifacts out;
    out.history = train(enc, manifest, val, cfg.loss, cfg.train, images);
    const Provenance prov = cfg.provenance("train");
    out.checkpoint_path = cfg.artifact("encoder.ckpt");
    out.history_path = cfg.artifact("train_history.csv");
    save_checkpoint(enc, out.checkpoint_path);
    write_history_csv(out.history_path, out.history, prov);
    return out;
}

std::vector<std::string> unique_refs(const std::vector<ScoredPairRecord>& records) {
    std::set<std::string> refs;
    for (const ScoredPairRecord& r : records) {
        refs.insert(r.a);
        refs.insert(r.b);
    }
    return {refs.begin(), refs.end()};
}

DescriptorTable build_descriptor_table(Encoder& enc, const std::vector<std::string>& refs,
                                       ImageStore& images) {
    DescriptorTable table;
    for (const std::string& ref : refs) {
        const std::vector<float> d = descriptor(enc, images.get(ref));
        table.add(ref, d.data(), static_cast<int>(d.size()));
    }
    return table;
}

DescriptorTable lbp_descriptor_table(const std::vector<std::string>& refs, int view_side,
                                     ImageStore& images) {
    DescriptorTable table;
    for (const std::string& ref : refs) {
        const Image view = center_view(images.get(ref), view_side);
        std::vector<float> h = lbp_descriptor(to_gray(view));
        double norm2 = 0;
        for (const float v : h) norm2 += static_cast<double>(v) * v;
        const float inv = norm2 > 0 ? static_cast<float>(1.0 / std::sqrt(norm2)) : 0.0f;
        for (float& v : h) v *= inv;
        table.add(ref, h.data(), static_cast<int>(h.size()));
    }
    return table;
}

std::vector<ScoredPair> score_pairs(const DescriptorTable& table,
                                    const std::vector<ScoredPairRecord>& records) {
    std::vector<ScoredPair> scored;
    scored.reserve(records.size());
    for (const ScoredPairRecord& r : records) {
        const float* a = table.find(r.a);
        const float* b = table.find(r.b);
        if (!a || !b) {
            throw std::runtime_error("score_pairs: missing descriptor for " + (a ? r.b : r.a));
        }
        double d2 = 0;
        for (int i = 0; i < table.dim; ++i) {
            const double diff = static_cast<double>(a[i]) - b[i];
            d2 += diff * diff;
        }
        scored.push_back(ScoredPair{d2, r.y, r.fold});
    }
    return scored;
}

namespace {

// csv of per-pair distances next to the report, for plotting and debugging
void write_scored_csv(const std::string& path, const std::vector<ScoredPairRecord>& records,
                      const std::vector<ScoredPair>& scored, const Provenance& prov) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << prov.to_comment_line() << "\n";
    os << "a,b,y,fold,distance\n";
    char buf[64];
    for (size_t i = 0; i < records.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", records[i].y, records[i].fold,
                      scored[i].distance);
        os << records[i].a << "," << records[i].b << "," << buf;
    }
    if (!os) throw std::runtime_error("failed while writing " + path);
}

std::vector<int> stage_tap_indices(const EncoderConfig& cfg) {
    std::vector<int> taps;
    int idx = 0;
    for (const StageSpec& s : cfg.stages) {
        for (int c = 0; c < s.convs; ++c) {
            idx += cfg.batchnorm ? 3 : 2;  // conv [norm] relu
        }
        taps.push_back(idx - 1);  // last rectifier of the stage
        idx += 1;                 // pool
    }
    return taps;
}

void dump_activation_maps(Encoder& enc, const Image& img, const std::string& dir) {
    ensure_dir(dir);
    const std::vector<int> taps = stage_tap_indices(enc.cfg);
    const Image input = center_view(img, enc.cfg.input_side);
    const std::vector<ActivationMap> maps = activation_maps(enc, input, taps);
    for (size_t i = 0; i < maps.size(); ++i) {
        const ActivationMap& m = maps[i];
        float lo = m.values[0], hi = m.values[0];
        for (const float v : m.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const float span = hi > lo ? hi - lo : 1.0f;
        Image gray(m.h, m.w, 1);
        for (size_t k = 0; k < m.values.size(); ++k) {
            gray.data[k] = (m.values[k] - lo) / span;
        }
        char name[64];
        std::snprintf(name, sizeof(name), "stage%zu_layer%02d.pgm", i, m.layer);
        save_image(dir + "/" + name, gray);
    }
}

}  // namespace

EvalArtifacts run_eval(const PipelineConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const std::vector<ScoredPairRecord> records =
        read_labeled_pairs(resolve(cfg.eval_pairs_path, cfg, "eval_pairs.jsonl"));
    ImageStore images(resolve(cfg.images_dir, cfg, "images"));
    const std::vector<std::string> refs = unique_refs(records);

    DescriptorTable table;
    Encoder enc;
    bool have_encoder = false;
    if (cfg.eval_baseline == "lbp") {
        table = lbp_descriptor_table(refs, cfg.encoder.input_side, images);
    } else if (cfg.eval_baseline == "random") {
        EncoderConfig ec = cfg.encoder;
        ec.seed = derive_seed(cfg.seed, "random-baseline");
        enc = build_encoder(ec);
        have_encoder = true;
        table = build_descriptor_table(enc, refs, images);
    } else {
        enc = load_checkpoint(resolve(cfg.checkpoint_path, cfg, "encoder.ckpt"));
        have_encoder = true;
        table = build_descriptor_table(enc, refs, images);
    }

    const std::vector<ScoredPair> scored = score_pairs(table, records);
    EvalArtifacts out;
    out.report = kfold_eval(scored, cfg.eval_folds);
    const std::string suffix = cfg.eval_baseline.empty() ? "" : "_" + cfg.eval_baseline;
    const Provenance prov = cfg.provenance(cfg.eval_baseline.empty()
                                               ? "eval"
                                               : "eval-" + cfg.eval_baseline);
    out.report_path = cfg.artifact("eval_report" + suffix + ".json");
    out.roc_path = cfg.artifact("roc" + suffix + ".csv");
    out.scored_path = cfg.artifact("scored" + suffix + ".csv");
    write_eval_report(out.report_path, out.report, prov);
    write_roc_csv(out.roc_path, roc_curve(scored), prov);
    write_scored_csv(out.scored_path, records, scored, prov);
    if (cfg.dump_activations && have_encoder && !records.empty()) {
        dump_activation_maps(enc, images.get(records.front().a),
                             cfg.artifact("activations" + suffix));
    }
    return out;
}

namespace {

Eigen::VectorXd dense_descriptor(const DescriptorTable& table, const std::string& ref) {
    const float* row = table.find(ref);
    if (!row) throw std::runtime_error("missing descriptor for " + ref);
    Eigen::VectorXd v(table.dim);
    for (int i = 0; i < table.dim; ++i) v[i] = row[i];
    return v;
}

std::vector<ScoredPair> project_and_score(const DescriptorTable& table,
                                          const std::vector<ScoredPairRecord>& records,
                                          const ProjectionModel& model) {
    std::vector<ScoredPair> scored;
    scored.reserve(records.size());
    for (const ScoredPairRecord& r : records) {
        const double d2 =
            projected_distance(model, dense_descriptor(table, r.a), dense_descriptor(table, r.b));
        scored.push_back(ScoredPair{d2, r.y, r.fold});
    }
    return scored;
}

struct FoldOutcome {
    double accuracy = 0, auc_v = 0, eer_v = 0, threshold = 0;
    std::vector<RocPoint> roc;
};

FoldOutcome eval_projection_on_fold(const DescriptorTable& table,
                                    const std::vector<ScoredPairRecord>& fit_records,
                                    const std::vector<ScoredPairRecord>& held_out,
                                    const ProjectionModel& model) {
    const std::vector<ScoredPair> train_scored = project_and_score(table, fit_records, model);
    const std::vector<ScoredPair> test_scored = project_and_score(table, held_out, model);
    FoldOutcome out;
    out.threshold = best_threshold(train_scored);
    out.accuracy = accuracy_at(test_scored, out.threshold);
    out.roc = roc_curve(test_scored);
    out.auc_v = auc(out.roc);
    out.eer_v = eer(out.roc);
    return out;
}

}  // namespace

FineTuneArtifacts run_finetune(const PipelineConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const std::vector<ScoredPairRecord> records =
        read_labeled_pairs(resolve(cfg.eval_pairs_path, cfg, "eval_pairs.jsonl"));
    ImageStore images(resolve(cfg.images_dir, cfg, "images"));
    Encoder enc = load_checkpoint(resolve(cfg.checkpoint_path, cfg, "encoder.ckpt"));
    const DescriptorTable table = build_descriptor_table(enc, unique_refs(records), images);

    const int d = table.dim;
    const int p = std::min(cfg.finetune_p, d);

    FineTuneArtifacts out;
    out.baseline_report = kfold_eval(score_pairs(table, records), cfg.eval_folds);

    const int k = cfg.eval_folds;
    std::vector<std::vector<ScoredPairRecord>> by_fold(k);
    for (const ScoredPairRecord& r : records) {
        if (r.fold < 0 || r.fold >= k) {
            throw std::runtime_error("finetune: fold " + std::to_string(r.fold) + " outside 0.." +
                                     std::to_string(k - 1));
        }
        by_fold[r.fold].push_back(r);
    }
    for (int f = 0; f < k; ++f) {
        std::vector<ScoredPairRecord> fit_records;
        for (int g = 0; g < k; ++g) {
            if (g != f) fit_records.insert(fit_records.end(), by_fold[g].begin(), by_fold[g].end());
        }
        FineTuneConfig ft = cfg.finetune;
        ft.seed = derive_seed(cfg.seed, "finetune-fold", static_cast<uint64_t>(f));
        const auto [model, hist] = fit_metric(table, fit_records, p, ft);
        const FoldOutcome oc = eval_projection_on_fold(table, fit_records, by_fold[f], model);
        FoldReport fr;
        fr.fold = f;
        fr.threshold = oc.threshold;
        fr.accuracy = oc.accuracy;
        fr.auc = oc.auc_v;
        fr.eer = oc.eer_v;
        fr.roc = oc.roc;
        out.tuned_report.mean_accuracy += fr.accuracy;
        out.tuned_report.mean_eer += fr.eer;
        out.tuned_report.mean_auc += fr.auc;
        out.tuned_report.folds.push_back(std::move(fr));
    }
    out.tuned_report.mean_accuracy /= k;
    out.tuned_report.mean_eer /= k;
    out.tuned_report.mean_auc /= k;

    FineTuneConfig full = cfg.finetune;
    full.seed = derive_seed(cfg.seed, "finetune-full");
    const auto [model, hist] = fit_metric(table, records, p, full);
    const Provenance prov = cfg.provenance("finetune");
    out.projection_path = cfg.artifact("projection.bin");
    out.history_path = cfg.artifact("finetune_history.csv");
    out.report_path = cfg.artifact("finetune_report.json");
    write_projection(out.projection_path, model);
    write_finetune_history_csv(out.history_path, hist, prov);
    write_eval_report(out.report_path, out.tuned_report, prov);
    write_eval_report(cfg.artifact("finetune_baseline_report.json"), out.baseline_report, prov);

    if (cfg.finetune_ablations) {
        std::vector<ScoredPairRecord> fit_records;
        for (int g = 1; g < k; ++g) {
            fit_records.insert(fit_records.end(), by_fold[g].begin(), by_fold[g].end());
        }
        out.p_ablation_path = cfg.artifact("ablation_p.csv");
        {
            std::ofstream os(out.p_ablation_path);
            if (!os) throw std::runtime_error("cannot write " + out.p_ablation_path);
            os << prov.to_comment_line() << "\n";
            os << "p_requested,p_used,accuracy,auc\n";
            for (size_t i = 0; i < cfg.finetune_p_grid.size(); ++i) {
                const int preq = cfg.finetune_p_grid[i];
                const int pu = std::min(preq, d);
                FineTuneConfig ft = cfg.finetune;
                ft.seed = derive_seed(cfg.seed, "ablation-p", static_cast<uint64_t>(i));
                const auto [m2, h2] = fit_metric(table, fit_records, pu, ft);
                const FoldOutcome oc = eval_projection_on_fold(table, fit_records, by_fold[0], m2);
                char buf[128];
                std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", preq, pu, oc.accuracy,
                              oc.auc_v);
                os << buf;
            }
        }
        out.pair_ablation_path = cfg.artifact("ablation_pairs.csv");
        {
            std::ofstream os(out.pair_ablation_path);
            if (!os) throw std::runtime_error("cannot write " + out.pair_ablation_path);
            os << prov.to_comment_line() << "\n";
            os << "pairs_requested,pairs_used,accuracy,auc\n";
            for (size_t i = 0; i < cfg.finetune_pair_grid.size(); ++i) {
                const int64_t nreq = cfg.finetune_pair_grid[i];
                std::vector<ScoredPairRecord> subset = fit_records;
                Rng rng = make_rng(cfg.seed, "ablation-pairs", i);
                std::shuffle(subset.begin(), subset.end(), rng);
                if (static_cast<int64_t>(subset.size()) > nreq) {
                    subset.resize(static_cast<size_t>(nreq));
                }
                FineTuneConfig ft = cfg.finetune;
                ft.seed = derive_seed(cfg.seed, "ablation-pairs-fit", i);
                const auto [m2, h2] = fit_metric(table, subset, p, ft);
                const FoldOutcome oc = eval_projection_on_fold(table, subset, by_fold[0], m2);
                char buf[128];
                std::snprintf(buf, sizeof(buf), "%lld,%zu,%.17g,%.17g\n",
                              static_cast<long long>(nreq), subset.size(), oc.accuracy, oc.auc_v);
                os << buf;
            }
        }
    }
    return out;
}

}  // namespace facerep
