#include "facerep/pairminer.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "facerep/rng.hpp"

namespace facerep {

namespace {

void warn(WarningSink* sink, const std::string& msg) {
    if (sink) {
        sink->push_back(msg);
    } else {
        std::cerr << "warning: " << msg << "\n";
    }
}

int64_t pair_count(int64_t n) { return n * (n - 1) / 2; }

// k distinct values from [0, total) via Floyd's algorithm, returned sorted.
std::vector<int64_t> sample_indices(int64_t total, int64_t k, Rng& rng) {
    std::set<int64_t> chosen;
    for (int64_t j = total - k; j < total; ++j) {
        const int64_t t = std::uniform_int_distribution<int64_t>(0, j)(rng);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    return {chosen.begin(), chosen.end()};
}

// Largest-remainder allocation of target over weights, ties to lower index.
std::vector<int64_t> allocate(const std::vector<int64_t>& weights, int64_t target) {
    const int64_t total = std::accumulate(weights.begin(), weights.end(), int64_t{0});
    std::vector<int64_t> quota(weights.size(), 0);
    if (total <= target) return weights;
    int64_t assigned = 0;
    std::vector<std::pair<int64_t, size_t>> rem;  // (remainder numerator, index)
    rem.reserve(weights.size());
    for (size_t i = 0; i < weights.size(); ++i) {
        quota[i] = target * weights[i] / total;
        assigned += quota[i];
        rem.emplace_back(target * weights[i] % total, i);
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int64_t i = 0; i < target - assigned; ++i) quota[rem[static_cast<size_t>(i)].second] += 1;
    return quota;
}

}  // namespace

std::vector<FacePair> similar_pairs(const FaceTrack& track, int64_t cap, uint64_t rng_seed) {
    const int64_t n = static_cast<int64_t>(track.members.size());
    std::vector<FacePair> out;
    if (n < 2 || cap == 0) return out;
    const int64_t total = pair_count(n);

    auto unrank = [&](int64_t k) {
        int64_t i = 0, offset = 0;
        while (k >= offset + (n - 1 - i)) {
            offset += n - 1 - i;
            ++i;
        }
        const int64_t j = i + 1 + (k - offset);
        return FacePair{track.members[static_cast<size_t>(i)].face_ref,
                        track.members[static_cast<size_t>(j)].face_ref, +1, PairSource::track};
    };

    if (cap < 0 || cap >= total) {
        out.reserve(static_cast<size_t>(total));
        for (int64_t k = 0; k < total; ++k) out.push_back(unrank(k));
        return out;
    }
    Rng rng(rng_seed);
    out.reserve(static_cast<size_t>(cap));
    for (const int64_t k : sample_indices(total, cap, rng)) out.push_back(unrank(k));
    return out;
}

std::vector<FacePair> same_frame_pairs(const std::vector<std::pair<int64_t, Detection>>& faces) {
    std::vector<FacePair> out;
    if (faces.size() < 2) return out;
    for (size_t i = 1; i < faces.size(); ++i) {
        if (faces[i].second.video_id != faces[0].second.video_id ||
            faces[i].second.frame_index != faces[0].second.frame_index) {
            throw std::invalid_argument("same_frame_pairs: inputs span more than one frame");
        }
    }
    for (size_t i = 0; i < faces.size(); ++i) {
        for (size_t j = i + 1; j < faces.size(); ++j) {
            if (faces[i].first == faces[j].first) continue;
            out.push_back(FacePair{faces[i].second.face_ref, faces[j].second.face_ref, -1,
                                   PairSource::same_frame});
        }
    }
    return out;
}

std::vector<FacePair> cross_genre_pairs(
    const std::map<std::string, std::vector<std::string>>& faces_by_genre, int64_t n,
    uint64_t rng_seed, WarningSink* warnings) {
    std::vector<const std::vector<std::string>*> groups;
    std::vector<std::string> names;
    for (const auto& [genre, faces] : faces_by_genre) {
        if (faces.empty()) continue;
        groups.push_back(&faces);
        names.push_back(genre);
    }
    if (groups.size() < 2) {
        throw std::invalid_argument("cross_genre_pairs: need faces from at least 2 genres");
    }

    struct Block {
        size_t g1, g2;
        int64_t begin;
    };
    std::vector<Block> blocks;
    int64_t total = 0;
    for (size_t i = 0; i < groups.size(); ++i) {
        for (size_t j = i + 1; j < groups.size(); ++j) {
            blocks.push_back(Block{i, j, total});
            total += static_cast<int64_t>(groups[i]->size()) *
                     static_cast<int64_t>(groups[j]->size());
        }
    }

    auto unrank = [&](int64_t k) {
        size_t b = blocks.size() - 1;
        while (blocks[b].begin > k) --b;
        const int64_t local = k - blocks[b].begin;
        const auto& right = *groups[blocks[b].g2];
        const int64_t ai = local / static_cast<int64_t>(right.size());
        const int64_t bi = local % static_cast<int64_t>(right.size());
        return FacePair{(*groups[blocks[b].g1])[static_cast<size_t>(ai)],
                        right[static_cast<size_t>(bi)], -1, PairSource::cross_genre};
    };

    std::vector<FacePair> out;
    if (n >= total) {
        if (n > total) {
            warn(warnings, "cross_genre_pairs: only " + std::to_string(total) +
                               " distinct cross-genre pairs exist, requested " + std::to_string(n));
        }
        out.reserve(static_cast<size_t>(total));
        for (int64_t k = 0; k < total; ++k) out.push_back(unrank(k));
        return out;
    }
    Rng rng(rng_seed);
    out.reserve(static_cast<size_t>(n));
    for (const int64_t k : sample_indices(total, n, rng)) out.push_back(unrank(k));
    return out;
}

PairManifest build_manifest(const std::vector<FaceTrack>& tracks, const GenreMap& genre_map,
                            const MiningConfig& cfg, WarningSink* warnings) {
    if (tracks.empty()) throw std::invalid_argument("build_manifest: no tracks");
    if (cfg.targets.n_similar < 0 || cfg.targets.n_dissimilar < 0) {
        throw std::invalid_argument("build_manifest: negative pair target");
    }
    for (const FaceTrack& t : tracks) {
        if (!genre_map.count(t.video_id)) {
            throw std::runtime_error("build_manifest: video " + t.video_id +
                                     " is missing from the genre map");
        }
    }
    PairManifest manifest;

    std::vector<int64_t> avail(tracks.size());
    for (size_t i = 0; i < tracks.size(); ++i) {
        int64_t a = pair_count(static_cast<int64_t>(tracks[i].members.size()));
        if (cfg.per_track_cap > 0) a = std::min(a, cfg.per_track_cap);
        avail[i] = a;
    }
    const std::vector<int64_t> quota = allocate(avail, cfg.targets.n_similar);
    for (size_t i = 0; i < tracks.size(); ++i) {
        if (quota[i] == 0) continue;
        const auto pairs =
            similar_pairs(tracks[i], quota[i], derive_seed(cfg.seed, "similar", i));
        manifest.pairs.insert(manifest.pairs.end(), pairs.begin(), pairs.end());
    }
    const int64_t n_sim = static_cast<int64_t>(manifest.pairs.size());
    if (n_sim < cfg.targets.n_similar) {
        warn(warnings, "build_manifest: only " + std::to_string(n_sim) + " of " +
                           std::to_string(cfg.targets.n_similar) + " similar pairs available");
    }

    std::map<std::pair<std::string, int64_t>, std::vector<std::pair<int64_t, Detection>>> frames;
    for (const FaceTrack& t : tracks) {
        for (const Detection& d : t.members) {
            frames[{d.video_id, d.frame_index}].emplace_back(t.track_id, d);
        }
    }
    std::vector<FacePair> same_frame;
    for (const auto& [key, faces] : frames) {
        const auto pairs = same_frame_pairs(faces);
        same_frame.insert(same_frame.end(), pairs.begin(), pairs.end());
    }
    if (static_cast<int64_t>(same_frame.size()) > cfg.targets.n_dissimilar) {
        Rng rng = make_rng(cfg.seed, "same-frame");
        const auto keep = sample_indices(static_cast<int64_t>(same_frame.size()),
                                         cfg.targets.n_dissimilar, rng);
        std::vector<FacePair> subset;
        subset.reserve(keep.size());
        for (const int64_t k : keep) subset.push_back(same_frame[static_cast<size_t>(k)]);
        same_frame = std::move(subset);
    }
    manifest.pairs.insert(manifest.pairs.end(), same_frame.begin(), same_frame.end());

    const int64_t remainder = cfg.targets.n_dissimilar - static_cast<int64_t>(same_frame.size());
    if (remainder > 0) {
        std::map<std::string, std::vector<std::string>> faces_by_genre;
        for (const FaceTrack& t : tracks) {
            auto& bucket = faces_by_genre[genre_map.at(t.video_id)];
            for (const Detection& d : t.members) bucket.push_back(d.face_ref);
        }
        if (faces_by_genre.size() < 2) {
            warn(warnings,
                 "build_manifest: single genre, cannot fill dissimilar target with "
                 "cross-genre pairs");
        } else {
            const auto pairs = cross_genre_pairs(faces_by_genre, remainder,
                                                 derive_seed(cfg.seed, "cross-genre"), warnings);
            manifest.pairs.insert(manifest.pairs.end(), pairs.begin(), pairs.end());
        }
    }

    manifest.recount();
    if (manifest.n_dissimilar() < cfg.targets.n_dissimilar) {
        warn(warnings, "build_manifest: only " + std::to_string(manifest.n_dissimilar()) + " of " +
                           std::to_string(cfg.targets.n_dissimilar) + " dissimilar pairs available");
    }
    if (cfg.targets.n_similar == cfg.targets.n_dissimilar &&
        manifest.n_similar != manifest.n_dissimilar()) {
        // keep the manifest balanced by trimming the larger label from the end
        const int64_t keep = std::min(manifest.n_similar, manifest.n_dissimilar());
        warn(warnings, "build_manifest: trimming to " + std::to_string(keep) +
                           " pairs per label to stay balanced");
        std::vector<FacePair> trimmed;
        int64_t sim = 0, dis = 0;
        for (const FacePair& p : manifest.pairs) {
            if (p.y > 0 && sim < keep) {
                trimmed.push_back(p);
                ++sim;
            } else if (p.y < 0 && dis < keep) {
                trimmed.push_back(p);
                ++dis;
            }
        }
        manifest.pairs = std::move(trimmed);
        manifest.recount();
    }
    return manifest;
}

std::pair<PairManifest, PairManifest> split_validation(const PairManifest& manifest,
                                                       int64_t n_each, uint64_t rng_seed) {
    if (n_each < 1) throw std::invalid_argument("split_validation: n_each must be >= 1");
    std::vector<size_t> sim_idx, dis_idx;
    for (size_t i = 0; i < manifest.pairs.size(); ++i) {
        (manifest.pairs[i].y > 0 ? sim_idx : dis_idx).push_back(i);
    }
    if (static_cast<int64_t>(sim_idx.size()) < n_each ||
        static_cast<int64_t>(dis_idx.size()) < n_each) {
        throw std::runtime_error("split_validation: manifest has fewer than " +
                                 std::to_string(n_each) + " pairs of each label");
    }
    Rng srng = make_rng(rng_seed, "val-similar");
    Rng drng = make_rng(rng_seed, "val-dissimilar");
    std::shuffle(sim_idx.begin(), sim_idx.end(), srng);
    std::shuffle(dis_idx.begin(), dis_idx.end(), drng);

    std::set<size_t> val_set(sim_idx.begin(), sim_idx.begin() + n_each);
    val_set.insert(dis_idx.begin(), dis_idx.begin() + n_each);
    std::set<std::string> val_faces;
    for (const size_t i : val_set) {
        const FacePair& p = manifest.pairs[i];
        if (p.y > 0) {
            val_faces.insert(p.a);
            val_faces.insert(p.b);
        }
    }

    PairManifest train, val;
    for (size_t i = 0; i < manifest.pairs.size(); ++i) {
        const FacePair& p = manifest.pairs[i];
        if (val_set.count(i)) {
            val.pairs.push_back(p);
        } else if (!val_faces.count(p.a) && !val_faces.count(p.b)) {
            train.pairs.push_back(p);
        }
    }
    train.recount();
    val.recount();
    return {std::move(train), std::move(val)};
}

}  // namespace facerep
