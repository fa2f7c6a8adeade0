#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "facerep/errors.hpp"
#include "facerep/pipeline.hpp"

namespace {

using facerep::PipelineConfig;

struct CommonFlags {
    std::string config_path;
    uint64_t seed = 0;
    bool strict = false;
    std::string out_dir;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* strict_opt = nullptr;
    CLI::Option* out_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config json");
        seed_opt = cmd->add_option("--seed", seed, "global seed (overrides config)");
        strict_opt = cmd->add_flag("--strict", strict, "single-threaded deterministic mode");
        out_opt = cmd->add_option("--out-dir", out_dir, "artifact directory (overrides config)");
    }

    PipelineConfig build() const {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig::defaults()
                                                 : PipelineConfig::from_json_file(config_path);
        if (seed_opt->count()) cfg.set_seed(seed);
        if (strict_opt->count()) cfg.strict = true;
        if (out_opt->count()) cfg.out_dir = out_dir;
        return cfg;
    }
};

void apply(const CLI::Option* opt, const std::string& value, std::string& field) {
    if (opt->count()) field = value;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"face representation pipeline: track, mine, train, finetune, eval"};
    app.require_subcommand(1);

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    CLI::App* track = app.add_subcommand("track", "associate detections into face tracks");
    CLI::App* mine = app.add_subcommand("mine", "mine similar/dissimilar pairs from tracks");
    CLI::App* train_cmd = app.add_subcommand("train", "train the encoder on mined pairs");
    CLI::App* finetune = app.add_subcommand("finetune", "fit a linear metric over descriptors");
    CLI::App* eval_cmd = app.add_subcommand("eval", "verification metrics on labeled pairs");
    CLI::App* stats = app.add_subcommand("stats", "track statistics report");

    CommonFlags synth_f, track_f, mine_f, train_f, finetune_f, eval_f, stats_f;
    synth_f.attach(synth);
    track_f.attach(track);
    mine_f.attach(mine);
    train_f.attach(train_cmd);
    finetune_f.attach(finetune);
    eval_f.attach(eval_cmd);
    stats_f.attach(stats);

    std::string track_detections;
    CLI::Option* track_det_opt = track->add_option("--detections", track_detections,
                                                   "detections jsonl (default out-dir artifact)");

    std::string mine_tracks, mine_genres;
    CLI::Option* mine_tracks_opt = mine->add_option("--tracks", mine_tracks, "tracks jsonl");
    CLI::Option* mine_genres_opt = mine->add_option("--genre-map", mine_genres, "genre map json");
    int64_t mine_similar = 0, mine_dissimilar = 0;
    CLI::Option* mine_sim_opt =
        mine->add_option("--n-similar", mine_similar, "similar pair target");
    CLI::Option* mine_dis_opt =
        mine->add_option("--n-dissimilar", mine_dissimilar, "dissimilar pair target");

    std::string train_manifest, train_val, train_images, train_ckpt_dir;
    CLI::Option* train_manifest_opt =
        train_cmd->add_option("--manifest", train_manifest, "training pair manifest");
    CLI::Option* train_val_opt =
        train_cmd->add_option("--val-manifest", train_val, "validation pair manifest");
    CLI::Option* train_images_opt =
        train_cmd->add_option("--images", train_images, "face image root");
    CLI::Option* train_ckpt_dir_opt = train_cmd->add_option(
        "--checkpoint-dir", train_ckpt_dir, "write periodic checkpoints here");
    double lr = 0, wd = 0, momentum = 0, loss_b = 0, loss_m = 0;
    int batch_pairs = 0, hard_epochs = 0;
    int64_t max_iter = 0, ckpt_every = 0, early_stop = 0;
    bool no_aug = false, hard_mining = false;
    CLI::Option* lr_opt = train_cmd->add_option("--learning-rate", lr, "sgd learning rate");
    CLI::Option* wd_opt = train_cmd->add_option("--weight-decay", wd, "l2 weight decay");
    CLI::Option* mom_opt = train_cmd->add_option("--momentum", momentum, "sgd momentum");
    CLI::Option* bp_opt = train_cmd->add_option("--batch-pairs", batch_pairs, "pairs per batch");
    CLI::Option* mi_opt = train_cmd->add_option("--max-iterations", max_iter, "sgd iterations");
    CLI::Option* ce_opt =
        train_cmd->add_option("--checkpoint-every", ckpt_every, "iterations between checkpoints");
    CLI::Option* es_opt = train_cmd->add_option("--early-stop-patience", early_stop,
                                                "checkpoints without improvement before stopping");
    CLI::Option* na_opt =
        train_cmd->add_flag("--no-augmentation", no_aug, "use center views only");
    CLI::Option* hm_opt =
        train_cmd->add_flag("--hard-mining", hard_mining, "continue on hard pairs");
    CLI::Option* he_opt =
        train_cmd->add_option("--hard-epochs", hard_epochs, "epochs over the hard set");
    CLI::Option* lb_opt = train_cmd->add_option("--loss-b", loss_b, "decision bias of the hinge");
    CLI::Option* lm_opt = train_cmd->add_option("--loss-m", loss_m, "margin of the hinge");

    std::string ft_ckpt, ft_pairs, ft_images;
    CLI::Option* ft_ckpt_opt = finetune->add_option("--checkpoint", ft_ckpt, "encoder checkpoint");
    CLI::Option* ft_pairs_opt =
        finetune->add_option("--pairs", ft_pairs, "labeled pair jsonl with folds");
    CLI::Option* ft_images_opt = finetune->add_option("--images", ft_images, "face image root");
    int ft_p = 0;
    CLI::Option* ft_p_opt = finetune->add_option("--p", ft_p, "projection rank");
    bool ft_ablations = false;
    CLI::Option* ft_ab_opt =
        finetune->add_flag("--ablations", ft_ablations, "emit rank and pair-count ablation csvs");

    std::string ev_ckpt, ev_pairs, ev_images, ev_baseline;
    CLI::Option* ev_ckpt_opt = eval_cmd->add_option("--checkpoint", ev_ckpt, "encoder checkpoint");
    CLI::Option* ev_pairs_opt =
        eval_cmd->add_option("--pairs", ev_pairs, "labeled pair jsonl with folds");
    CLI::Option* ev_images_opt = eval_cmd->add_option("--images", ev_images, "face image root");
    CLI::Option* ev_base_opt = eval_cmd->add_option("--baseline", ev_baseline,
                                                    "score with a baseline: lbp or random");
    bool ev_dump = false;
    CLI::Option* ev_dump_opt =
        eval_cmd->add_flag("--dump-activations", ev_dump, "save activation maps as pgm");
    int ev_folds = 0;
    CLI::Option* ev_folds_opt = eval_cmd->add_option("--folds", ev_folds, "fold count");

    std::string stats_tracks;
    CLI::Option* stats_tracks_opt = stats->add_option("--tracks", stats_tracks, "tracks jsonl");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            PipelineConfig cfg = synth_f.build();
            cfg.validate();
            const auto art = facerep::run_synth(cfg);
            std::printf("wrote %s (%lld detections)\n", art.detections_path.c_str(),
                        static_cast<long long>(art.n_detections));
            std::printf("wrote %s (%lld labeled pairs)\n", art.eval_pairs_path.c_str(),
                        static_cast<long long>(art.n_eval_pairs));
        } else if (track->parsed()) {
            PipelineConfig cfg = track_f.build();
            apply(track_det_opt, track_detections, cfg.detections_path);
            cfg.validate();
            const auto art = facerep::run_track(cfg);
            std::printf("wrote %s (%lld tracks, %lld faces)\n", art.tracks_path.c_str(),
                        static_cast<long long>(art.stats.n_tracks),
                        static_cast<long long>(art.stats.n_faces));
        } else if (mine->parsed()) {
            PipelineConfig cfg = mine_f.build();
            apply(mine_tracks_opt, mine_tracks, cfg.tracks_path);
            apply(mine_genres_opt, mine_genres, cfg.genre_map_path);
            if (mine_sim_opt->count()) cfg.mining.targets.n_similar = mine_similar;
            if (mine_dis_opt->count()) cfg.mining.targets.n_dissimilar = mine_dissimilar;
            cfg.validate();
            const auto art = facerep::run_mine(cfg);
            for (const std::string& w : art.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            std::printf("wrote %s (%lld similar, %lld dissimilar)\n", art.manifest_path.c_str(),
                        static_cast<long long>(art.n_similar),
                        static_cast<long long>(art.n_dissimilar));
        } else if (train_cmd->parsed()) {
            PipelineConfig cfg = train_f.build();
            apply(train_manifest_opt, train_manifest, cfg.manifest_path);
            apply(train_val_opt, train_val, cfg.val_manifest_path);
            apply(train_images_opt, train_images, cfg.images_dir);
            apply(train_ckpt_dir_opt, train_ckpt_dir, cfg.train.checkpoint_dir);
            if (lr_opt->count()) cfg.train.learning_rate = lr;
            if (wd_opt->count()) cfg.train.weight_decay = wd;
            if (mom_opt->count()) cfg.train.momentum = momentum;
            if (bp_opt->count()) cfg.train.batch_pairs = batch_pairs;
            if (mi_opt->count()) cfg.train.max_iterations = max_iter;
            if (ce_opt->count()) cfg.train.checkpoint_every = ckpt_every;
            if (es_opt->count()) cfg.train.early_stop_patience = early_stop;
            if (na_opt->count()) cfg.train.augmentation = false;
            if (hm_opt->count()) cfg.train.hard_mining = true;
            if (he_opt->count()) cfg.train.hard_epochs = hard_epochs;
            if (lb_opt->count()) cfg.loss.b = loss_b;
            if (lm_opt->count()) cfg.loss.m = loss_m;
            cfg.validate();
            const auto art = facerep::run_train(cfg);
            std::printf("wrote %s (final iteration %lld, best val accuracy %.4f)\n",
                        art.checkpoint_path.c_str(),
                        static_cast<long long>(art.history.final_iteration),
                        art.history.best_val_accuracy);
            if (art.history.diverged) {
                std::fprintf(stderr, "training diverged; checkpoint holds the last stable state\n");
                return 3;
            }
        } else if (finetune->parsed()) {
            PipelineConfig cfg = finetune_f.build();
            apply(ft_ckpt_opt, ft_ckpt, cfg.checkpoint_path);
            apply(ft_pairs_opt, ft_pairs, cfg.eval_pairs_path);
            apply(ft_images_opt, ft_images, cfg.images_dir);
            if (ft_p_opt->count()) cfg.finetune_p = ft_p;
            if (ft_ab_opt->count()) cfg.finetune_ablations = true;
            cfg.validate();
            const auto art = facerep::run_finetune(cfg);
            std::printf("wrote %s\n", art.projection_path.c_str());
            std::printf("mean accuracy: %.4f unprojected, %.4f fine-tuned\n",
                        art.baseline_report.mean_accuracy, art.tuned_report.mean_accuracy);
        } else if (eval_cmd->parsed()) {
            PipelineConfig cfg = eval_f.build();
            apply(ev_ckpt_opt, ev_ckpt, cfg.checkpoint_path);
            apply(ev_pairs_opt, ev_pairs, cfg.eval_pairs_path);
            apply(ev_images_opt, ev_images, cfg.images_dir);
            apply(ev_base_opt, ev_baseline, cfg.eval_baseline);
            if (ev_dump_opt->count()) cfg.dump_activations = true;
            if (ev_folds_opt->count()) cfg.eval_folds = ev_folds;
            cfg.validate();
            const auto art = facerep::run_eval(cfg);
            std::printf("wrote %s\n", art.report_path.c_str());
            std::printf("mean accuracy %.4f, mean eer %.4f, mean auc %.4f\n",
                        art.report.mean_accuracy, art.report.mean_eer, art.report.mean_auc);
        } else if (stats->parsed()) {
            PipelineConfig cfg = stats_f.build();
            apply(stats_tracks_opt, stats_tracks, cfg.tracks_path);
            cfg.validate();
            const auto tracks = facerep::read_tracks(
                cfg.tracks_path.empty() ? cfg.artifact("tracks.jsonl") : cfg.tracks_path);
            const facerep::TrackStats st = facerep::track_stats(tracks);
            const facerep::Provenance prov = cfg.provenance("stats");
            const std::string report = cfg.artifact("track_stats.json");
            facerep::write_stats_report(report, st, prov);
            facerep::write_histogram_csv(cfg.artifact("track_length_hist.csv"), st.length_hist,
                                         prov);
            facerep::write_histogram_csv(cfg.artifact("face_size_hist.csv"), st.size_hist, prov);
            std::printf("wrote %s (%lld tracks, mean length %.2f)\n", report.c_str(),
                        static_cast<long long>(st.n_tracks), st.mean_track_length);
        }
    } catch (const facerep::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
