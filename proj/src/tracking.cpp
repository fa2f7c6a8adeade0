#include "facerep/tracking.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace facerep {

void TrackerConfig::validate() const {
    if (patience < 1) throw std::invalid_argument("TrackerConfig: patience must be >= 1");
    if (min_track_len < 1) throw std::invalid_argument("TrackerConfig: min_track_len must be >= 1");
    if (min_overlap < 0.0 || min_overlap >= 1.0)
        throw std::invalid_argument("TrackerConfig: min_overlap must lie in [0,1)");
    if (sample_stride < 1) throw std::invalid_argument("TrackerConfig: sample_stride must be >= 1");
}

std::vector<Assignment> associate(const std::vector<FaceTrack>& active_tracks,
                                  const std::vector<Detection>& detections,
                                  const TrackerConfig& cfg) {
    cfg.validate();
    std::vector<Assignment> out(detections.size());
    if (detections.empty()) return out;

    const int64_t frame = detections.front().frame_index;
    for (const auto& d : detections) {
        if (d.frame_index != frame)
            throw std::invalid_argument("associate: detections mix frame_index " +
                                        std::to_string(frame) + " and " +
                                        std::to_string(d.frame_index));
    }

    struct Candidate {
        double overlap;
        int64_t track_id;
        size_t track_pos;
        size_t det_pos;
    };
    std::vector<Candidate> cands;
    for (size_t ti = 0; ti < active_tracks.size(); ++ti) {
        const auto& t = active_tracks[ti];
        if (t.members.empty()) continue;
        if (t.last_frame() >= frame)
            throw std::invalid_argument("associate: active track must end before the current frame");
        if (frame - t.last_frame() > cfg.patience) continue;  // track already ended
        for (size_t di = 0; di < detections.size(); ++di) {
            const double ov = iou(t.last_box(), detections[di].box);
            if (ov > cfg.min_overlap) cands.push_back({ov, t.track_id, ti, di});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        if (a.track_id != b.track_id) return a.track_id < b.track_id;
        return a.det_pos < b.det_pos;
    });

    std::vector<bool> track_taken(active_tracks.size(), false);
    std::vector<bool> det_done(detections.size(), false);
    for (const auto& c : cands) {
        if (track_taken[c.track_pos] || det_done[c.det_pos]) continue;
        track_taken[c.track_pos] = true;
        det_done[c.det_pos] = true;
        out[c.det_pos] = {c.track_id, c.overlap};
    }
    return out;
}

namespace {

std::vector<FaceTrack> track_one_video(const std::vector<Detection>& dets,
                                       const TrackerConfig& cfg) {
    std::vector<FaceTrack> open;
    std::vector<FaceTrack> done;
    int64_t next_id = 0;

    auto finalize = [&](FaceTrack&& t) {
        if (t.members.size() >= static_cast<size_t>(cfg.min_track_len)) done.push_back(std::move(t));
    };

    size_t i = 0;
    while (i < dets.size()) {
        const int64_t frame = dets[i].frame_index;
        std::vector<Detection> frame_dets;
        while (i < dets.size() && dets[i].frame_index == frame) frame_dets.push_back(dets[i++]);

        // retire tracks whose gap can no longer close
        std::vector<FaceTrack> still_open;
        for (auto& t : open) {
            if (frame - t.last_frame() > cfg.patience)
                finalize(std::move(t));
            else
                still_open.push_back(std::move(t));
        }
        open = std::move(still_open);

        const auto assign = associate(open, frame_dets, cfg);
        for (size_t di = 0; di < frame_dets.size(); ++di) {
            if (assign[di].track_id >= 0) {
                for (auto& t : open)
                    if (t.track_id == assign[di].track_id) {
                        t.members.push_back(frame_dets[di]);
                        break;
                    }
            }
        }
        for (size_t di = 0; di < frame_dets.size(); ++di) {
            if (assign[di].track_id < 0) {
                FaceTrack t;
                t.track_id = next_id++;
                t.video_id = frame_dets[di].video_id;
                t.members.push_back(frame_dets[di]);
                open.push_back(std::move(t));
            }
        }
    }
    for (auto& t : open) finalize(std::move(t));
    std::sort(done.begin(), done.end(),
              [](const FaceTrack& a, const FaceTrack& b) { return a.track_id < b.track_id; });
    return done;
}

}  // namespace

std::vector<FaceTrack> run_tracker(const std::vector<Detection>& stream,
                                   const TrackerConfig& cfg) {
    cfg.validate();
    for (size_t i = 1; i < stream.size(); ++i) {
        const auto& prev = stream[i - 1];
        const auto& cur = stream[i];
        const bool ordered = prev.video_id < cur.video_id ||
                             (prev.video_id == cur.video_id && prev.frame_index <= cur.frame_index);
        if (!ordered)
            throw std::invalid_argument(
                "run_tracker: stream not sorted by (video_id, frame_index); record " +
                std::to_string(i + 1) + " (video_id=" + cur.video_id +
                ", frame_index=" + std::to_string(cur.frame_index) + ") precedes its predecessor");
    }

    std::vector<FaceTrack> all;
    size_t i = 0;
    while (i < stream.size()) {
        const std::string& vid = stream[i].video_id;
        std::vector<Detection> video_dets;
        while (i < stream.size() && stream[i].video_id == vid) video_dets.push_back(stream[i++]);
        auto tracks = track_one_video(video_dets, cfg);
        all.insert(all.end(), std::make_move_iterator(tracks.begin()),
                   std::make_move_iterator(tracks.end()));
    }
    return all;  // already sorted: videos arrive sorted, ids ascend per video
}

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<HistogramBin> histogram(const std::vector<double>& v, double bin_width) {
    std::vector<HistogramBin> bins;
    if (v.empty() || bin_width <= 0.0) return bins;
    std::map<int64_t, int64_t> counts;
    for (double x : v) counts[static_cast<int64_t>(std::floor(x / bin_width))]++;
    for (const auto& [k, c] : counts) bins.push_back({static_cast<double>(k) * bin_width, c});
    return bins;
}

}  // namespace

TrackStats track_stats(const std::vector<FaceTrack>& tracks, double length_bin_width,
                       double size_bin_width) {
    TrackStats s;
    s.length_bin_width = length_bin_width;
    s.size_bin_width = size_bin_width;
    std::vector<double> lengths;
    std::vector<double> sizes;
    for (const auto& t : tracks) {
        lengths.push_back(static_cast<double>(t.members.size()));
        for (const auto& d : t.members) sizes.push_back(std::max(d.box.w, d.box.h));
    }
    s.n_tracks = static_cast<int64_t>(tracks.size());
    s.n_faces = static_cast<int64_t>(sizes.size());
    s.mean_track_length = mean_of(lengths);
    s.median_track_length = median_of(lengths);
    s.mean_face_size = mean_of(sizes);
    s.median_face_size = median_of(sizes);
    s.length_hist = histogram(lengths, length_bin_width);
    s.size_hist = histogram(sizes, size_bin_width);
    return s;
}

}  // namespace facerep
