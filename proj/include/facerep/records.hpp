#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "facerep/tracking.hpp"

namespace facerep {

// Stamped on the first line of every file a pipeline stage writes, so any
// artifact can be traced back to the exact configuration and seed.
struct Provenance {
    std::string stage;
    uint64_t seed = 0;
    std::string config_hash;  // hex fnv1a64 of the effective config json

    std::string to_json_line() const;
    static std::optional<Provenance> parse_json_line(const std::string& line);
    std::string to_comment_line() const;  // "# stage=... seed=... config=..." for CSV
};

// label in {+1,-1}; +1 pairs come only from tracks.
enum class PairSource { track, same_frame, cross_genre };

std::string to_string(PairSource s);
PairSource pair_source_from_string(const std::string& s);

struct FacePair {
    std::string a;
    std::string b;
    int y = 0;  // +1 similar, -1 dissimilar
    PairSource source = PairSource::track;
};

struct PairManifest {
    std::vector<FacePair> pairs;
    int64_t n_similar = 0;
    int64_t n_same_frame = 0;
    int64_t n_cross_genre = 0;

    void recount();
    int64_t n_dissimilar() const { return n_same_frame + n_cross_genre; }
};

using GenreMap = std::map<std::string, std::string>;  // video_id -> genre

struct ScoredPairRecord {
    std::string a;
    std::string b;
    int y = 0;
    int fold = 0;
};

// --- line-delimited readers/writers -----------------------------------------
// Readers skip a leading provenance line when present and validate record
// invariants, reporting 1-based line numbers in diagnostics.

std::vector<Detection> read_detections(const std::string& path);
void write_detections(const std::string& path, const std::vector<Detection>& dets,
                      const Provenance& prov);

std::vector<FaceTrack> read_tracks(const std::string& path);
void write_tracks(const std::string& path, const std::vector<FaceTrack>& tracks,
                  const Provenance& prov);

PairManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const PairManifest& m, const Provenance& prov);

GenreMap read_genre_map(const std::string& path);
void write_genre_map(const std::string& path, const GenreMap& genres, const Provenance& prov);

std::map<std::string, std::string> read_string_map(const std::string& path);  // e.g. face_ref -> identity
void write_string_map(const std::string& path, const std::map<std::string, std::string>& m,
                      const Provenance& prov);

std::vector<ScoredPairRecord> read_labeled_pairs(const std::string& path);
void write_labeled_pairs(const std::string& path, const std::vector<ScoredPairRecord>& pairs,
                         const Provenance& prov);

void write_stats_report(const std::string& path, const TrackStats& stats, const Provenance& prov);
void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins,
                         const Provenance& prov);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace facerep
