#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "facerep/image.hpp"
#include "facerep/records.hpp"
#include "facerep/rng.hpp"
#include "facerep/tracking.hpp"

namespace facerep {

// Procedural face prototype: a shared layout (background, face ellipse, hair,
// eyes, mouth, one cheek patch) whose colors and geometry are sampled per
// identity. Two draws are distinct prototypes with probability 1.
struct IdentityParams {
    float skin_r, skin_g, skin_b;
    float hair_r, hair_g, hair_b;
    float hair_frac;
    float face_rx, face_ry;
    float eye_dx, eye_y, eye_r, eye_level;
    float mouth_y, mouth_hw, mouth_hh;
    float mouth_r, mouth_g, mouth_b;
    float patch_x, patch_y, patch_r;
    float patch_cr, patch_cg, patch_cb;
};

IdentityParams sample_identity(Rng& rng);

// Per-image nuisance: translation up to 10% of the side, additive brightness
// up to +-0.2, pixel noise.
struct FaceJitter {
    float dx = 0.0f;
    float dy = 0.0f;
    float brightness = 0.0f;
    float noise_sigma = 0.03f;
    uint64_t noise_seed = 0;
};

FaceJitter sample_jitter(Rng& rng, int side, float noise_sigma = 0.03f);

Image render_face(const IdentityParams& params, int side, const FaceJitter& jitter);

// n_ids x imgs_per_id jittered renders with their identity labels.
struct SynthIdentityDataset {
    std::vector<Image> images;      // index = id * imgs_per_id + k
    std::vector<int> identity;      // parallel labels
    int n_ids = 0;
    int imgs_per_id = 0;
};

SynthIdentityDataset synth_identity_dataset(int n_ids, int imgs_per_id, int side, uint64_t seed);

// Writes layout {id}/{index}.ppm plus labels.json mapping relpath -> id.
void write_identity_dataset(const SynthIdentityDataset& ds, const std::string& out_dir,
                            const Provenance& prov);

// --- scripted detection streams ---------------------------------------------

// Piecewise-linear visibility spans of one scripted entity. Within a span the
// box moves with constant velocity from (x0, y0).
struct ScriptSpan {
    int start = 0;
    int end = 0;  // inclusive
    double x0 = 0, y0 = 0;
    double vx = 0, vy = 0;
};

struct ScriptEntity {
    int entity_id = 0;
    std::string video_id;
    double w = 0, h = 0;
    std::vector<ScriptSpan> spans;  // ordered, disjoint
};

struct TrackScript {
    int frame_w = 0, frame_h = 0;
    std::vector<ScriptEntity> entities;
};

struct ScriptedStream {
    std::vector<Detection> detections;  // sorted by (video_id, frame_index)
    std::vector<int> gt_entity;         // which entity produced each detection
    std::vector<int> gt_span;           // which visibility span it belongs to
};

// Expands a script into a sorted detection stream with ground-truth labels.
// Malformed scripts (boxes leaving the frame, overlapping spans) are rejected.
ScriptedStream synth_detection_stream(const TrackScript& script);

// --- full synthetic corpus ---------------------------------------------------

// A desk-scale stand-in for a video corpus: per-genre identity pools are
// disjoint and simultaneous entities occupy separate lanes, so mined pairs
// are correct by construction. A separate set of identities never appears in
// any video and is rendered directly for identity-exclusive fold evaluation.
struct SynthCorpusConfig {
    int n_videos = 16;
    int frames_per_video = 60;
    int n_identities = 32;
    int entities_per_video = 2;
    int n_genres = 4;
    int frame_w = 256, frame_h = 160;
    double box_side_min = 20.0, box_side_max = 34.0;
    double speed_min = 0.8, speed_max = 3.0;
    int render_side = 80;
    double absence_prob = 0.5;
    int absence_min = 4, absence_max = 7;
    int n_eval_identities = 20;
    int eval_images_per_identity = 10;
    int eval_folds = 10;
    int eval_pairs_per_fold = 20;  // similar and dissimilar each
    float noise_sigma = 0.03f;
    uint64_t seed = 0;

    void validate() const;
};

struct SynthCorpus {
    std::vector<Detection> detections;               // sorted stream over all videos
    GenreMap genres;                                 // video_id -> genre
    std::map<std::string, std::string> identity_of;  // face_ref -> identity (all faces)
    std::vector<ScoredPairRecord> eval_pairs;        // identity-exclusive folds
};

// Renders all face images under images_dir (face_ref is the relative path).
SynthCorpus generate_corpus(const SynthCorpusConfig& cfg, const std::string& images_dir);

}  // namespace facerep
