#include "facerep/records.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace facerep {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    return f;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    return f;
}

json parse_line(const std::string& line, const std::string& path, size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
    }
}

// Iterates data lines, skipping blank lines and a leading provenance object.
template <typename Fn>
void for_each_record(const std::string& path, Fn&& fn) {
    auto f = open_in(path);
    std::string line;
    size_t lineno = 0;
    bool first = true;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (Provenance::parse_json_line(line)) continue;
        }
        fn(parse_line(line, path, lineno), lineno);
    }
}

template <typename T>
T require(const json& j, const char* key, const std::string& path, size_t lineno) {
    if (!j.contains(key))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing field '" +
                                 key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": field '" + key +
                                 "': " + e.what());
    }
}

json detection_to_json(const Detection& d) {
    return json{{"video_id", d.video_id}, {"frame_index", d.frame_index}, {"x", d.box.x},
                {"y", d.box.y},           {"w", d.box.w},                 {"h", d.box.h},
                {"face_ref", d.face_ref}};
}

Detection detection_from_json(const json& j, const std::string& path, size_t lineno,
                               bool need_video_id = true) {
    Detection d;
    if (need_video_id || j.contains("video_id"))
        d.video_id = require<std::string>(j, "video_id", path, lineno);
    d.frame_index = require<int64_t>(j, "frame_index", path, lineno);
    d.box = {require<double>(j, "x", path, lineno), require<double>(j, "y", path, lineno),
             require<double>(j, "w", path, lineno), require<double>(j, "h", path, lineno)};
    d.face_ref = require<std::string>(j, "face_ref", path, lineno);
    if (d.frame_index < 0)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": negative frame_index");
    if (d.face_ref.empty())
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty face_ref");
    if (!d.box.valid())
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": degenerate box");
    return d;
}

}  // namespace

std::string Provenance::to_json_line() const {
    return json{{"__provenance__",
                 json{{"stage", stage}, {"seed", seed}, {"config_hash", config_hash}}}}
        .dump();
}

std::optional<Provenance> Provenance::parse_json_line(const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("__provenance__")) return std::nullopt;
    const auto& p = j.at("__provenance__");
    Provenance out;
    out.stage = p.value("stage", "");
    out.seed = p.value("seed", uint64_t{0});
    out.config_hash = p.value("config_hash", "");
    return out;
}

std::string Provenance::to_comment_line() const {
    return "# stage=" + stage + " seed=" + std::to_string(seed) + " config=" + config_hash;
}

std::string to_string(PairSource s) {
    switch (s) {
        case PairSource::track: return "track";
        case PairSource::same_frame: return "same_frame";
        case PairSource::cross_genre: return "cross_genre";
    }
    throw std::logic_error("unknown PairSource");
}

PairSource pair_source_from_string(const std::string& s) {
    if (s == "track") return PairSource::track;
    if (s == "same_frame") return PairSource::same_frame;
    if (s == "cross_genre") return PairSource::cross_genre;
    throw std::runtime_error("unknown pair source: " + s);
}

void PairManifest::recount() {
    n_similar = n_same_frame = n_cross_genre = 0;
    for (const auto& p : pairs) {
        if (p.y == 1) ++n_similar;
        else if (p.source == PairSource::same_frame) ++n_same_frame;
        else ++n_cross_genre;
    }
}

std::vector<Detection> read_detections(const std::string& path) {
    std::vector<Detection> out;
    for_each_record(path, [&](const json& j, size_t lineno) {
        out.push_back(detection_from_json(j, path, lineno));
    });
    return out;
}

void write_detections(const std::string& path, const std::vector<Detection>& dets,
                      const Provenance& prov) {
    auto f = open_out(path);
    f << prov.to_json_line() << "\n";
    for (const auto& d : dets) f << detection_to_json(d).dump() << "\n";
}

std::vector<FaceTrack> read_tracks(const std::string& path) {
    std::vector<FaceTrack> out;
    for_each_record(path, [&](const json& j, size_t lineno) {
        FaceTrack t;
        t.track_id = require<int64_t>(j, "track_id", path, lineno);
        t.video_id = require<std::string>(j, "video_id", path, lineno);
        if (!j.contains("members") || !j.at("members").is_array())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing members[]");
        for (const auto& m : j.at("members")) {
            Detection d = detection_from_json(m, path, lineno, false);
            d.video_id = t.video_id;
            t.members.push_back(std::move(d));
        }
        if (t.members.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty track");
        out.push_back(std::move(t));
    });
    return out;
}

void write_tracks(const std::string& path, const std::vector<FaceTrack>& tracks,
                  const Provenance& prov) {
    auto f = open_out(path);
    f << prov.to_json_line() << "\n";
    for (const auto& t : tracks) {
        json members = json::array();
        for (const auto& d : t.members) {
            json m = detection_to_json(d);
            m.erase("video_id");  // implied by the track
            members.push_back(std::move(m));
        }
        f << json{{"track_id", t.track_id}, {"video_id", t.video_id}, {"members", members}}.dump()
          << "\n";
    }
}

PairManifest read_manifest(const std::string& path) {
    PairManifest m;
    for_each_record(path, [&](const json& j, size_t lineno) {
        FacePair p;
        p.a = require<std::string>(j, "a", path, lineno);
        p.b = require<std::string>(j, "b", path, lineno);
        p.y = require<int>(j, "y", path, lineno);
        p.source = pair_source_from_string(require<std::string>(j, "source", path, lineno));
        if (p.y != 1 && p.y != -1)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": y must be +1 or -1");
        if (p.a == p.b)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": pair of a face with itself");
        m.pairs.push_back(std::move(p));
    });
    m.recount();
    return m;
}

void write_manifest(const std::string& path, const PairManifest& m, const Provenance& prov) {
    auto f = open_out(path);
    f << prov.to_json_line() << "\n";
    for (const auto& p : m.pairs)
        f << json{{"a", p.a}, {"b", p.b}, {"y", p.y}, {"source", to_string(p.source)}}.dump()
          << "\n";
}

GenreMap read_genre_map(const std::string& path) {
    auto m = read_string_map(path);
    return GenreMap(m.begin(), m.end());
}

void write_genre_map(const std::string& path, const GenreMap& genres, const Provenance& prov) {
    write_string_map(path, genres, prov);
}

std::map<std::string, std::string> read_string_map(const std::string& path) {
    auto f = open_in(path);
    std::stringstream ss;
    ss << f.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": bad json: " + e.what());
    }
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : j.items()) {
        if (k == "__provenance__") continue;
        out[k] = v.get<std::string>();
    }
    return out;
}

void write_string_map(const std::string& path, const std::map<std::string, std::string>& m,
                      const Provenance& prov) {
    json j;
    j["__provenance__"] =
        json{{"stage", prov.stage}, {"seed", prov.seed}, {"config_hash", prov.config_hash}};
    for (const auto& [k, v] : m) j[k] = v;
    auto f = open_out(path);
    f << j.dump(2) << "\n";
}

std::vector<ScoredPairRecord> read_labeled_pairs(const std::string& path) {
    std::vector<ScoredPairRecord> out;
    for_each_record(path, [&](const json& j, size_t lineno) {
        ScoredPairRecord r;
        r.a = require<std::string>(j, "a", path, lineno);
        r.b = require<std::string>(j, "b", path, lineno);
        r.y = require<int>(j, "y", path, lineno);
        r.fold = j.value("fold", 0);
        if (r.y != 1 && r.y != -1)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": y must be +1 or -1");
        out.push_back(std::move(r));
    });
    return out;
}

void write_labeled_pairs(const std::string& path, const std::vector<ScoredPairRecord>& pairs,
                         const Provenance& prov) {
    auto f = open_out(path);
    f << prov.to_json_line() << "\n";
    for (const auto& p : pairs)
        f << json{{"a", p.a}, {"b", p.b}, {"y", p.y}, {"fold", p.fold}}.dump() << "\n";
}

void write_stats_report(const std::string& path, const TrackStats& s, const Provenance& prov) {
    json hist_l = json::array();
    for (const auto& b : s.length_hist) hist_l.push_back({{"bin_start", b.bin_start}, {"count", b.count}});
    json hist_s = json::array();
    for (const auto& b : s.size_hist) hist_s.push_back({{"bin_start", b.bin_start}, {"count", b.count}});
    json j{{"__provenance__",
            json{{"stage", prov.stage}, {"seed", prov.seed}, {"config_hash", prov.config_hash}}},
           {"n_tracks", s.n_tracks},
           {"n_faces", s.n_faces},
           {"mean_track_length", s.mean_track_length},
           {"median_track_length", s.median_track_length},
           {"mean_face_size", s.mean_face_size},
           {"median_face_size", s.median_face_size},
           {"length_bin_width", s.length_bin_width},
           {"size_bin_width", s.size_bin_width},
           {"length_hist", hist_l},
           {"size_hist", hist_s}};
    auto f = open_out(path);
    f << j.dump(2) << "\n";
}

void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins,
                         const Provenance& prov) {
    auto f = open_out(path);
    f << prov.to_comment_line() << "\n";
    f << "bin_start,count\n";
    char buf[64];
    for (const auto& b : bins) {
        snprintf(buf, sizeof(buf), "%.17g,%lld", b.bin_start, static_cast<long long>(b.count));
        f << buf << "\n";
    }
}

std::string read_text_file(const std::string& path) {
    auto f = open_in(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    auto f = open_out(path);
    f << content;
}

}  // namespace facerep
