#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "facerep/geometry.hpp"

namespace facerep {

// One detected face in one sampled frame. frame_index counts sampled frames
// (every sample_stride-th raw frame), not raw video frames.
struct Detection {
    std::string video_id;
    int64_t frame_index = 0;
    BBox box;
    std::string face_ref;  // locator of the cropped face image
};

struct FaceTrack {
    int64_t track_id = -1;
    std::string video_id;
    std::vector<Detection> members;  // frame_index strictly increasing

    int64_t last_frame() const { return members.back().frame_index; }
    const BBox& last_box() const { return members.back().box; }
    size_t length() const { return members.size(); }
};

struct TrackerConfig {
    int sample_stride = 10;  // raw frames per sampled frame; informational for frame_index
    int patience = 5;        // a track may absorb a detection while frame gap <= patience
    int min_track_len = 5;   // tracks shorter than this are discarded at finalization
    double min_overlap = 0.0;  // association requires iou strictly greater than this

    void validate() const;
};

// Per-detection assignment produced by one association round.
struct Assignment {
    int64_t track_id = -1;  // -1 means "start a new track"
    double overlap = 0.0;
};

// Assign the detections of a single frame to active tracks by maximum box
// overlap against each track's most recent member. Each track takes at most
// one detection per frame: when two detections contend for the same track the
// higher overlap wins and the loser falls back to its next-best track (or a
// new one). Equal overlaps break toward the lower track_id, then toward the
// earlier detection in input order.
std::vector<Assignment> associate(const std::vector<FaceTrack>& active_tracks,
                                  const std::vector<Detection>& detections,
                                  const TrackerConfig& cfg);

// Run tracking-by-detection over a detection stream sorted by
// (video_id, frame_index). Tracks end once no detection joined them for more
// than `patience` sampled frames, and tracks shorter than min_track_len are
// dropped. Output is sorted by (video_id, track_id); track ids start at 0
// per video.
std::vector<FaceTrack> run_tracker(const std::vector<Detection>& stream,
                                   const TrackerConfig& cfg);

struct HistogramBin {
    double bin_start = 0.0;
    int64_t count = 0;
};

struct TrackStats {
    int64_t n_tracks = 0;
    int64_t n_faces = 0;
    double mean_track_length = 0.0;
    double median_track_length = 0.0;
    double mean_face_size = 0.0;    // square-box side = max(w, h)
    double median_face_size = 0.0;
    double length_bin_width = 0.0;
    double size_bin_width = 0.0;
    std::vector<HistogramBin> length_hist;
    std::vector<HistogramBin> size_hist;
};

TrackStats track_stats(const std::vector<FaceTrack>& tracks,
                       double length_bin_width = 5.0,
                       double size_bin_width = 10.0);

}  // namespace facerep
