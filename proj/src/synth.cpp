#include "facerep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>

namespace facerep {

namespace {

float uni(Rng& rng, float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(rng);
}

std::string fmt(const char* pattern, int value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, value);
    return buf;
}

}  // namespace

IdentityParams sample_identity(Rng& rng) {
    IdentityParams p{};
    p.skin_r = uni(rng, 0.58f, 0.85f);
    p.skin_g = p.skin_r * uni(rng, 0.72f, 0.82f);
    p.skin_b = p.skin_r * uni(rng, 0.55f, 0.68f);
    p.hair_r = uni(rng, 0.05f, 0.55f);
    p.hair_g = uni(rng, 0.05f, 0.55f);
    p.hair_b = uni(rng, 0.05f, 0.55f);
    p.hair_frac = uni(rng, 0.15f, 0.35f);
    p.face_rx = uni(rng, 0.26f, 0.34f);
    p.face_ry = uni(rng, 0.34f, 0.42f);
    p.eye_dx = uni(rng, 0.10f, 0.18f);
    p.eye_y = uni(rng, 0.42f, 0.52f);
    p.eye_r = uni(rng, 0.025f, 0.050f);
    p.eye_level = uni(rng, 0.03f, 0.15f);
    p.mouth_y = uni(rng, 0.70f, 0.78f);
    p.mouth_hw = uni(rng, 0.07f, 0.16f);
    p.mouth_hh = uni(rng, 0.015f, 0.040f);
    p.mouth_r = uni(rng, 0.35f, 0.60f);
    p.mouth_g = uni(rng, 0.10f, 0.25f);
    p.mouth_b = uni(rng, 0.10f, 0.25f);
    p.patch_x = uni(rng, 0.30f, 0.70f);
    p.patch_y = uni(rng, 0.50f, 0.68f);
    p.patch_r = uni(rng, 0.03f, 0.08f);
    p.patch_cr = uni(rng, 0.20f, 0.80f);
    p.patch_cg = uni(rng, 0.20f, 0.80f);
    p.patch_cb = uni(rng, 0.20f, 0.80f);
    return p;
}

FaceJitter sample_jitter(Rng& rng, int side, float noise_sigma) {
    FaceJitter j;
    const float shift = 0.10f * static_cast<float>(side);
    j.dx = uni(rng, -shift, shift);
    j.dy = uni(rng, -shift, shift);
    j.brightness = uni(rng, -0.2f, 0.2f);
    j.noise_sigma = noise_sigma;
    j.noise_seed = rng();
    return j;
}

Image render_face(const IdentityParams& p, int side, const FaceJitter& jitter) {
    if (side < 8) throw std::invalid_argument("render_face: side must be >= 8");
    Image img(side, side, 3, 0.0f);

    const float cx = 0.5f, cy = 0.56f;
    const float eps = 6.0f / static_cast<float>(side);
    const float line_soft = 2.0f / static_cast<float>(side);
    // hairline: fraction hair_frac of the enlarged ellipse's height stays hair
    const float v_hair = cy - p.face_ry * (1.0f - 2.0f * p.hair_frac);

    auto ellipse_alpha = [eps](float du, float dv, float rx, float ry) {
        const float q = (du * du) / (rx * rx) + (dv * dv) / (ry * ry);
        return std::clamp((1.0f - q) / eps, 0.0f, 1.0f);
    };

    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const float u = (static_cast<float>(x) + 0.5f - jitter.dx) / static_cast<float>(side);
            const float v = (static_cast<float>(y) + 0.5f - jitter.dy) / static_cast<float>(side);
            float r = 0.15f, g = 0.16f, b = 0.18f;

            auto paint = [&](float cr, float cg, float cb, float a) {
                r += (cr - r) * a;
                g += (cg - g) * a;
                b += (cb - b) * a;
            };

            paint(p.skin_r, p.skin_g, p.skin_b, ellipse_alpha(u - cx, v - cy, p.face_rx, p.face_ry));

            const float hair_a = ellipse_alpha(u - cx, v - cy, p.face_rx * 1.14f, p.face_ry * 1.10f) *
                                 std::clamp((v_hair - v) / line_soft, 0.0f, 1.0f);
            paint(p.hair_r, p.hair_g, p.hair_b, hair_a);

            paint(p.eye_level, p.eye_level, p.eye_level,
                  ellipse_alpha(u - (cx - p.eye_dx), v - p.eye_y, p.eye_r, p.eye_r));
            paint(p.eye_level, p.eye_level, p.eye_level,
                  ellipse_alpha(u - (cx + p.eye_dx), v - p.eye_y, p.eye_r, p.eye_r));

            paint(p.mouth_r, p.mouth_g, p.mouth_b,
                  ellipse_alpha(u - cx, v - p.mouth_y, p.mouth_hw, p.mouth_hh));

            paint(p.patch_cr, p.patch_cg, p.patch_cb,
                  0.5f * ellipse_alpha(u - p.patch_x, v - p.patch_y, p.patch_r, p.patch_r));

            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    }

    Rng noise(jitter.noise_seed);
    std::normal_distribution<float> gauss(0.0f, jitter.noise_sigma);
    for (float& v : img.data) {
        v = std::clamp(v + jitter.brightness + gauss(noise), 0.0f, 1.0f);
    }
    return img;
}

SynthIdentityDataset synth_identity_dataset(int n_ids, int imgs_per_id, int side, uint64_t seed) {
    if (n_ids < 1 || imgs_per_id < 1) {
        throw std::invalid_argument("synth_identity_dataset: counts must be positive");
    }
    SynthIdentityDataset ds;
    ds.n_ids = n_ids;
    ds.imgs_per_id = imgs_per_id;
    ds.images.reserve(static_cast<size_t>(n_ids) * imgs_per_id);
    ds.identity.reserve(ds.images.capacity());
    for (int id = 0; id < n_ids; ++id) {
        Rng prng = make_rng(seed, "identity", static_cast<uint64_t>(id));
        const IdentityParams params = sample_identity(prng);
        for (int k = 0; k < imgs_per_id; ++k) {
            Rng jrng = make_rng(seed, "jitter", static_cast<uint64_t>(id) * imgs_per_id + k);
            ds.images.push_back(render_face(params, side, sample_jitter(jrng, side)));
            ds.identity.push_back(id);
        }
    }
    return ds;
}

void write_identity_dataset(const SynthIdentityDataset& ds, const std::string& out_dir,
                            const Provenance& prov) {
    namespace fs = std::filesystem;
    std::map<std::string, std::string> labels;
    for (int id = 0; id < ds.n_ids; ++id) {
        const std::string id_name = fmt("id%03d", id);
        fs::create_directories(fs::path(out_dir) / id_name);
        for (int k = 0; k < ds.imgs_per_id; ++k) {
            const std::string rel = id_name + "/" + fmt("img%03d.ppm", k);
            save_image((fs::path(out_dir) / rel).string(),
                       ds.images[static_cast<size_t>(id) * ds.imgs_per_id + k]);
            labels[rel] = id_name;
        }
    }
    write_string_map((fs::path(out_dir) / "labels.json").string(), labels, prov);
}

ScriptedStream synth_detection_stream(const TrackScript& script) {
    if (script.frame_w <= 0 || script.frame_h <= 0) {
        throw std::invalid_argument("synth_detection_stream: frame dimensions must be positive");
    }
    struct Row {
        Detection det;
        int entity;
        int span;
        size_t order;
    };
    std::vector<Row> rows;
    for (size_t ei = 0; ei < script.entities.size(); ++ei) {
        const ScriptEntity& ent = script.entities[ei];
        if (ent.w <= 0 || ent.h <= 0) {
            throw std::invalid_argument("synth_detection_stream: entity " + std::to_string(ei) +
                                        " has non-positive box size");
        }
        if (ent.video_id.empty()) {
            throw std::invalid_argument("synth_detection_stream: entity " + std::to_string(ei) +
                                        " has empty video_id");
        }
        int prev_end = -1;
        for (size_t si = 0; si < ent.spans.size(); ++si) {
            const ScriptSpan& sp = ent.spans[si];
            if (sp.start < 0 || sp.end < sp.start || sp.start <= prev_end) {
                throw std::invalid_argument("synth_detection_stream: entity " + std::to_string(ei) +
                                            " span " + std::to_string(si) + " is malformed");
            }
            prev_end = sp.end;
            for (const int f : {sp.start, sp.end}) {
                const double x = sp.x0 + sp.vx * (f - sp.start);
                const double y = sp.y0 + sp.vy * (f - sp.start);
                if (x < -1e-9 || y < -1e-9 || x + ent.w > script.frame_w + 1e-9 ||
                    y + ent.h > script.frame_h + 1e-9) {
                    throw std::invalid_argument("synth_detection_stream: entity " +
                                                std::to_string(ei) + " leaves the frame at frame " +
                                                std::to_string(f));
                }
            }
            for (int f = sp.start; f <= sp.end; ++f) {
                Detection d;
                d.video_id = ent.video_id;
                d.frame_index = f;
                d.box = BBox{sp.x0 + sp.vx * (f - sp.start), sp.y0 + sp.vy * (f - sp.start),
                             ent.w, ent.h};
                d.face_ref = ent.video_id + "/" + fmt("f%05d", f) + fmt("_e%03d", ent.entity_id) + ".ppm";
                rows.push_back(Row{std::move(d), ent.entity_id, static_cast<int>(si), rows.size()});
            }
        }
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.det.video_id != b.det.video_id) return a.det.video_id < b.det.video_id;
        if (a.det.frame_index != b.det.frame_index) return a.det.frame_index < b.det.frame_index;
        return a.order < b.order;
    });
    ScriptedStream out;
    out.detections.reserve(rows.size());
    out.gt_entity.reserve(rows.size());
    out.gt_span.reserve(rows.size());
    for (Row& r : rows) {
        out.detections.push_back(std::move(r.det));
        out.gt_entity.push_back(r.entity);
        out.gt_span.push_back(r.span);
    }
    return out;
}

void SynthCorpusConfig::validate() const {
    if (n_videos < 1 || frames_per_video < 2) {
        throw std::invalid_argument("corpus: need at least one video with two frames");
    }
    if (n_genres < 2 || n_videos < n_genres) {
        throw std::invalid_argument("corpus: need >= 2 genres and at least one video per genre");
    }
    if (n_identities < n_genres) {
        throw std::invalid_argument("corpus: need at least one identity per genre");
    }
    if (entities_per_video < 1) throw std::invalid_argument("corpus: entities_per_video must be >= 1");
    if (box_side_min < 8 || box_side_max < box_side_min) {
        throw std::invalid_argument("corpus: bad box size range");
    }
    if (entities_per_video * box_side_max > frame_h) {
        throw std::invalid_argument("corpus: lanes too short for the largest box");
    }
    if (box_side_max + speed_max * (frames_per_video - 1) > frame_w && speed_min > (frame_w - box_side_max) / (frames_per_video - 1)) {
        throw std::invalid_argument("corpus: no feasible horizontal speed keeps boxes in frame");
    }
    if (render_side < 16) throw std::invalid_argument("corpus: render_side must be >= 16");
    if (absence_min < 1 || absence_max < absence_min) {
        throw std::invalid_argument("corpus: bad absence length range");
    }
    if (absence_max + 10 >= frames_per_video) {
        throw std::invalid_argument("corpus: videos too short to host an absence window");
    }
    if (n_eval_identities < 2 * eval_folds) {
        throw std::invalid_argument("corpus: need >= 2 evaluation identities per fold");
    }
    if (eval_images_per_identity < 2 || eval_folds < 2 || eval_pairs_per_fold < 1) {
        throw std::invalid_argument("corpus: bad evaluation sizing");
    }
}

SynthCorpus generate_corpus(const SynthCorpusConfig& cfg, const std::string& images_dir) {
    namespace fs = std::filesystem;
    cfg.validate();
    SynthCorpus corpus;

    std::vector<IdentityParams> train_params(cfg.n_identities);
    std::vector<std::string> train_names(cfg.n_identities);
    std::vector<std::vector<int>> pool(cfg.n_genres);
    for (int i = 0; i < cfg.n_identities; ++i) {
        Rng rng = make_rng(cfg.seed, "identity-train", static_cast<uint64_t>(i));
        train_params[i] = sample_identity(rng);
        train_names[i] = fmt("id%03d", i);
        pool[i % cfg.n_genres].push_back(i);
    }

    TrackScript script;
    script.frame_w = cfg.frame_w;
    script.frame_h = cfg.frame_h;
    std::vector<std::string> entity_identity;  // entity_id -> identity name
    std::vector<int> pool_cursor(cfg.n_genres, 0);
    const double lane_h = static_cast<double>(cfg.frame_h) / cfg.entities_per_video;

    for (int v = 0; v < cfg.n_videos; ++v) {
        const std::string video_id = fmt("v%02d", v);
        const int genre = v % cfg.n_genres;
        corpus.genres[video_id] = fmt("genre%d", genre);
        Rng rng = make_rng(cfg.seed, "video", static_cast<uint64_t>(v));

        for (int lane = 0; lane < cfg.entities_per_video; ++lane) {
            const int id = pool[genre][pool_cursor[genre]++ % pool[genre].size()];
            ScriptEntity ent;
            ent.entity_id = static_cast<int>(entity_identity.size());
            ent.video_id = video_id;
            entity_identity.push_back(train_names[id]);

            const double side = uni(rng, static_cast<float>(cfg.box_side_min),
                                    static_cast<float>(cfg.box_side_max));
            ent.w = side;
            ent.h = side;
            const double lane_top = lane * lane_h;
            const double y = lane_top + std::clamp(static_cast<double>(uni(rng, -2.0f, 2.0f)) +
                                                       (lane_h - side) / 2.0,
                                                   0.0, lane_h - side);

            const int F = cfg.frames_per_video;
            double speed = uni(rng, static_cast<float>(cfg.speed_min),
                               static_cast<float>(cfg.speed_max));
            speed = std::min(speed, (cfg.frame_w - side) / (F - 1) * 0.95);
            const double vx = (rng() & 1) ? speed : -speed;
            const double travel = speed * (F - 1);
            const double x_lo = vx > 0 ? 0.0 : travel;
            const double x_hi = vx > 0 ? cfg.frame_w - side - travel : cfg.frame_w - side;
            const double x_start = x_lo + (x_hi - x_lo) * uni(rng, 0.0f, 1.0f);

            std::vector<std::pair<int, int>> windows;  // visible [start, end]
            if (uni(rng, 0.0f, 1.0f) < static_cast<float>(cfg.absence_prob)) {
                const int len = std::uniform_int_distribution<int>(cfg.absence_min,
                                                                   cfg.absence_max)(rng);
                const int a = std::uniform_int_distribution<int>(5, F - len - 6)(rng);
                windows.emplace_back(0, a - 1);
                windows.emplace_back(a + len, F - 1);
            } else {
                windows.emplace_back(0, F - 1);
            }
            for (const auto& [s, e] : windows) {
                ScriptSpan sp;
                sp.start = s;
                sp.end = e;
                sp.x0 = x_start + vx * s;
                sp.y0 = y;
                sp.vx = vx;
                sp.vy = 0.0;
                ent.spans.push_back(sp);
            }
            script.entities.push_back(std::move(ent));
        }
    }

    ScriptedStream stream = synth_detection_stream(script);
    corpus.detections = std::move(stream.detections);

    for (size_t i = 0; i < corpus.detections.size(); ++i) {
        const Detection& d = corpus.detections[i];
        const std::string& identity = entity_identity[static_cast<size_t>(stream.gt_entity[i])];
        corpus.identity_of[d.face_ref] = identity;
        fs::create_directories(fs::path(images_dir) / d.video_id);
        Rng jrng = make_rng(cfg.seed, "render:" + d.face_ref);
        const int id_index = std::stoi(identity.substr(2));
        save_image((fs::path(images_dir) / d.face_ref).string(),
                   render_face(train_params[id_index], cfg.render_side,
                               sample_jitter(jrng, cfg.render_side, cfg.noise_sigma)));
    }

    // evaluation identities never appear in any video
    std::vector<std::vector<std::string>> eval_faces(cfg.n_eval_identities);
    for (int i = 0; i < cfg.n_eval_identities; ++i) {
        Rng prng = make_rng(cfg.seed, "identity-eval", static_cast<uint64_t>(i));
        const IdentityParams params = sample_identity(prng);
        const std::string id_name = fmt("eval%03d", i);
        fs::create_directories(fs::path(images_dir) / "eval" / id_name);
        for (int k = 0; k < cfg.eval_images_per_identity; ++k) {
            const std::string rel = "eval/" + id_name + "/" + fmt("img%02d.ppm", k);
            Rng jrng = make_rng(cfg.seed, "render:" + rel);
            save_image((fs::path(images_dir) / rel).string(),
                       render_face(params, cfg.render_side,
                                   sample_jitter(jrng, cfg.render_side, cfg.noise_sigma)));
            corpus.identity_of[rel] = id_name;
            eval_faces[i].push_back(rel);
        }
    }

    std::vector<int> order(cfg.n_eval_identities);
    for (int i = 0; i < cfg.n_eval_identities; ++i) order[i] = i;
    Rng frng = make_rng(cfg.seed, "eval-folds");
    std::shuffle(order.begin(), order.end(), frng);

    for (int fold = 0; fold < cfg.eval_folds; ++fold) {
        std::vector<int> members;
        for (int p = fold; p < cfg.n_eval_identities; p += cfg.eval_folds) {
            members.push_back(order[p]);
        }
        std::vector<std::pair<std::string, std::string>> sim, dis;
        for (const int id : members) {
            const auto& faces = eval_faces[id];
            for (size_t a = 0; a < faces.size(); ++a) {
                for (size_t b = a + 1; b < faces.size(); ++b) {
                    sim.emplace_back(faces[a], faces[b]);
                }
            }
        }
        for (size_t i = 0; i < members.size(); ++i) {
            for (size_t j = i + 1; j < members.size(); ++j) {
                for (const auto& a : eval_faces[members[i]]) {
                    for (const auto& b : eval_faces[members[j]]) {
                        dis.emplace_back(a, b);
                    }
                }
            }
        }
        Rng srng = make_rng(cfg.seed, "eval-pairs", static_cast<uint64_t>(fold));
        std::shuffle(sim.begin(), sim.end(), srng);
        std::shuffle(dis.begin(), dis.end(), srng);
        const size_t take = static_cast<size_t>(cfg.eval_pairs_per_fold);
        for (size_t i = 0; i < std::min(take, sim.size()); ++i) {
            corpus.eval_pairs.push_back(ScoredPairRecord{sim[i].first, sim[i].second, +1, fold});
        }
        for (size_t i = 0; i < std::min(take, dis.size()); ++i) {
            corpus.eval_pairs.push_back(ScoredPairRecord{dis[i].first, dis[i].second, -1, fold});
        }
    }
    return corpus;
}

}  // namespace facerep
