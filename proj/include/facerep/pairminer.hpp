#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "facerep/records.hpp"
#include "facerep/tracking.hpp"

namespace facerep {

struct MiningTargets {
    int64_t n_similar = 2000;
    int64_t n_dissimilar = 2000;
};

struct MiningConfig {
    MiningTargets targets;
    // Per-track ceiling on similar pairs. <= 0 means no fixed ceiling: the
    // target is allocated across tracks in proportion to each track's pair
    // count, so long tracks cannot dominate.
    int64_t per_track_cap = -1;
    uint64_t seed = 0;
};

// Warnings are appended when a sink is given, otherwise printed to stderr.
using WarningSink = std::vector<std::string>;

// All unordered within-track pairs (y=+1), uniformly subsampled without
// replacement to at most cap when cap >= 0. Tracks shorter than 2 yield none.
std::vector<FacePair> similar_pairs(const FaceTrack& track, int64_t cap, uint64_t rng_seed);

// All unordered cross-track pairs among the faces of one frame (y=-1).
// Inputs are (track_id, detection); every detection must share one
// (video_id, frame_index).
std::vector<FacePair> same_frame_pairs(
    const std::vector<std::pair<int64_t, Detection>>& faces);

// n pairs drawn uniformly without replacement from the set of cross-genre
// face pairs. Fewer candidates than n: returns all of them and warns.
std::vector<FacePair> cross_genre_pairs(
    const std::map<std::string, std::vector<std::string>>& faces_by_genre, int64_t n,
    uint64_t rng_seed, WarningSink* warnings = nullptr);

// Balanced manifest: similar pairs allocated over tracks, dissimilar pairs
// taken same-frame first with the remainder filled by cross-genre sampling.
// Per-frame co-occurrences are derived from the tracks themselves.
PairManifest build_manifest(const std::vector<FaceTrack>& tracks, const GenreMap& genre_map,
                            const MiningConfig& cfg, WarningSink* warnings = nullptr);

// Carves out n_each pairs per label for validation. Validation similar pairs
// are face-disjoint from the training split: any training pair touching one
// of their faces is dropped.
std::pair<PairManifest, PairManifest> split_validation(const PairManifest& manifest,
                                                       int64_t n_each, uint64_t rng_seed);

}  // namespace facerep
