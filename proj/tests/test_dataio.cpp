#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "facerep/image.hpp"
#include "facerep/records.hpp"
#include "facerep/rng.hpp"
#include "facerep/synth.hpp"
#include "facerep/views.hpp"

using namespace facerep;

namespace {

Image patterned(int h, int w, int c) {
    Image img(h, w, c);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(ch, y, x) = static_cast<float>(((y * 31 + x * 7 + ch * 131) % 255) / 255.0);
    return img;
}

bool same_pixels(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.channels == b.channels &&
           a.data == b.data;
}

double mean_sq_dist(const Image& a, const Image& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

std::string tmp_path(const std::string& name) {
    std::filesystem::create_directories("dataio_tmp");
    return "dataio_tmp/" + name;
}

Provenance prov() { return Provenance{"test", 7, "deadbeef"}; }

}  // namespace

TEST_CASE("resize_bilinear") {
    SUBCASE("identity size returns the input unchanged") {
        const Image img = patterned(10, 12, 3);
        CHECK(same_pixels(resize_bilinear(img, 10, 12), img));
    }
    SUBCASE("constant image stays constant at any size") {
        const Image img(9, 9, 1, 0.25f);
        const Image out = resize_bilinear(img, 20, 14);
        for (float v : out.data) CHECK(v == doctest::Approx(0.25f));
    }
    SUBCASE("2x downscale of alternating rows averages to the midpoint") {
        Image img(8, 8, 1);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) img.at(0, y, x) = (y % 2 == 0) ? 0.0f : 1.0f;
        const Image out = resize_bilinear(img, 4, 8);
        for (float v : out.data) CHECK(v == doctest::Approx(0.5f));
    }
}

TEST_CASE("mirror and crop") {
    const Image img = patterned(10, 12, 3);
    SUBCASE("mirror is an involution, bit for bit") {
        CHECK(same_pixels(mirror_horizontal(mirror_horizontal(img)), img));
    }
    SUBCASE("mirror swaps columns") {
        const Image m = mirror_horizontal(img);
        CHECK(m.at(0, 3, 0) == img.at(0, 3, 11));
        CHECK(m.at(2, 9, 5) == img.at(2, 9, 6));
    }
    SUBCASE("crop extracts the window") {
        const Image c = crop(img, 2, 3, 8, 8);
        CHECK(c.height == 8);
        CHECK(c.width == 8);
        CHECK(c.at(1, 0, 0) == img.at(1, 2, 3));
        CHECK(c.at(1, 7, 7) == img.at(1, 9, 10));
    }
    SUBCASE("out-of-bounds crop is rejected") {
        CHECK_THROWS_AS(crop(img, 5, 0, 8, 8), std::invalid_argument);
        CHECK_THROWS_AS(crop(img, -1, 0, 8, 8), std::invalid_argument);
    }
}

TEST_CASE("to_gray uses standard luma weights") {
    Image img(8, 8, 3);
    img.at(0, 0, 0) = 1.0f;  // pure red pixel
    img.at(1, 0, 1) = 1.0f;  // pure green pixel
    img.at(2, 0, 2) = 1.0f;  // pure blue pixel
    const Image g = to_gray(img);
    CHECK(g.channels == 1);
    CHECK(g.at(0, 0, 0) == doctest::Approx(0.299f));
    CHECK(g.at(0, 0, 1) == doctest::Approx(0.587f));
    CHECK(g.at(0, 0, 2) == doctest::Approx(0.114f));

    const Image gray = patterned(8, 8, 1);
    CHECK(same_pixels(to_gray(gray), gray));
}

TEST_CASE("ten_views geometry") {
    // 73x73 input: the rescale for target 64 is a no-op, so every view is an
    // exact crop of the source and offsets can be checked pixel by pixel.
    const Image img = patterned(73, 73, 3);
    const ViewSet vs = ten_views(img, 64);

    SUBCASE("corner, center, and mirror layout") {
        CHECK(same_pixels(vs.views[0], crop(img, 0, 0, 64, 64)));
        CHECK(same_pixels(vs.views[1], crop(img, 0, 9, 64, 64)));
        CHECK(same_pixels(vs.views[2], crop(img, 9, 0, 64, 64)));
        CHECK(same_pixels(vs.views[3], crop(img, 9, 9, 64, 64)));
        CHECK(same_pixels(vs.views[4], crop(img, 4, 4, 64, 64)));
        for (int i = 0; i < 5; ++i) {
            CHECK(same_pixels(vs.views[5 + i], mirror_horizontal(vs.views[i])));
        }
    }
    SUBCASE("center_view matches view 4") {
        CHECK(same_pixels(center_view(img, 64), vs.views[4]));
    }
    SUBCASE("all views share the target size") {
        for (const Image& v : vs.views) {
            CHECK(v.height == 64);
            CHECK(v.width == 64);
            CHECK(v.channels == 3);
        }
    }
    SUBCASE("non-square input keeps aspect and crops to target") {
        const Image wide = patterned(80, 100, 3);
        const ViewSet ws = ten_views(wide, 64);
        for (const Image& v : ws.views) {
            CHECK(v.height == 64);
            CHECK(v.width == 64);
        }
        // shorter side 80 -> 73, longer side 100 -> round(100 * 73/80) = 91
        CHECK(same_pixels(ws.views[4], center_view(wide, 64)));
    }
    SUBCASE("scale factor below 1 cannot supply the crop") {
        CHECK_THROWS_AS(ten_views(img, 64, 0.5), std::invalid_argument);
    }
}

TEST_CASE("random_view draws all ten views uniformly") {
    const Image img = patterned(73, 73, 3);
    const ViewSet vs = ten_views(img, 64);

    Rng rng = make_rng(1, "view-test");
    std::array<int, 10> counts{};
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Image v = random_view(img, 64, rng);
        int found = -1;
        for (int k = 0; k < 10; ++k) {
            if (same_pixels(v, vs.views[k])) {
                found = k;
                break;
            }
        }
        REQUIRE(found >= 0);
        counts[static_cast<size_t>(found)] += 1;
    }
    // multinomial bin sd = sqrt(n * 0.1 * 0.9) = 30; allow 5 sd
    for (int k = 0; k < 10; ++k) {
        CHECK(counts[static_cast<size_t>(k)] > 850);
        CHECK(counts[static_cast<size_t>(k)] < 1150);
    }

    Rng r1 = make_rng(5, "view-test");
    Rng r2 = make_rng(5, "view-test");
    for (int i = 0; i < 20; ++i) {
        CHECK(same_pixels(random_view(img, 64, r1), random_view(img, 64, r2)));
    }
}

TEST_CASE("raster files round-trip through 8-bit quantization") {
    SUBCASE("color image to PPM") {
        const Image img = patterned(9, 8, 3);
        const std::string path = tmp_path("roundtrip.ppm");
        save_image(path, img);
        const Image back = load_image(path);
        REQUIRE(back.height == 9);
        REQUIRE(back.width == 8);
        REQUIRE(back.channels == 3);
        for (size_t i = 0; i < img.data.size(); ++i) {
            const float q = std::round(img.data[i] * 255.0f) / 255.0f;
            CHECK(back.data[i] == doctest::Approx(q).epsilon(1e-6));
        }
        std::ifstream f(path, std::ios::binary);
        std::string magic(2, '\0');
        f.read(magic.data(), 2);
        CHECK(magic == "P6");
    }
    SUBCASE("gray image to PGM") {
        const Image img = patterned(8, 10, 1);
        const std::string path = tmp_path("roundtrip.pgm");
        save_image(path, img);
        const Image back = load_image(path);
        REQUIRE(back.channels == 1);
        std::ifstream f(path, std::ios::binary);
        std::string magic(2, '\0');
        f.read(magic.data(), 2);
        CHECK(magic == "P5");
    }
    SUBCASE("a second save/load cycle is lossless") {
        const Image img = patterned(9, 8, 3);
        const std::string p1 = tmp_path("cycle1.ppm");
        const std::string p2 = tmp_path("cycle2.ppm");
        save_image(p1, img);
        const Image once = load_image(p1);
        save_image(p2, once);
        CHECK(same_pixels(load_image(p2), once));
    }
    SUBCASE("missing file is reported") {
        CHECK_THROWS_AS(load_image(tmp_path("nope.ppm")), std::runtime_error);
    }
}

TEST_CASE("ImageStore caches by face_ref") {
    ImageStore store;
    store.put("face/a.ppm", patterned(8, 8, 3));
    const Image& img = store.get("face/a.ppm");
    CHECK(img.height == 8);
    CHECK_THROWS_AS(store.get("face/missing.ppm"), std::runtime_error);
}

TEST_CASE("synthetic identities are distinct and cluster by identity") {
    const SynthIdentityDataset ds = synth_identity_dataset(4, 5, 48, 9);
    REQUIRE(ds.images.size() == 20);
    REQUIRE(ds.identity.size() == 20);

    SUBCASE("two identities render differently") {
        const SynthIdentityDataset two = synth_identity_dataset(2, 1, 64, 3);
        CHECK(!same_pixels(two.images[0], two.images[1]));
    }
    SUBCASE("identity signal survives brightness and noise jitter") {
        // Translation jitter swamps raw pixel distances by design (that is
        // what the encoder must learn away), so the generator contract is
        // checked with translation off: a jittered render must sit nearest
        // its own identity's clean prototype.
        Rng rng = make_rng(9, "proto-sep");
        const int n_ids = 4, per_id = 5, side = 48;
        std::vector<IdentityParams> ids;
        for (int i = 0; i < n_ids; ++i) ids.push_back(sample_identity(rng));
        FaceJitter none;
        none.noise_sigma = 0.0f;
        std::vector<Image> proto;
        for (const auto& p : ids) proto.push_back(render_face(p, side, none));

        int correct = 0;
        for (int i = 0; i < n_ids; ++i) {
            for (int k = 0; k < per_id; ++k) {
                FaceJitter j = sample_jitter(rng, side);
                j.dx = j.dy = 0.0f;
                const Image img = render_face(ids[static_cast<size_t>(i)], side, j);
                int best = -1;
                double best_d = 0.0;
                for (int q = 0; q < n_ids; ++q) {
                    const double d = mean_sq_dist(img, proto[static_cast<size_t>(q)]);
                    if (best < 0 || d < best_d) {
                        best = q;
                        best_d = d;
                    }
                }
                correct += (best == i);
            }
        }
        CHECK(correct >= 16);  // chance level would be 5 of 20
    }
    SUBCASE("renders are deterministic in params and jitter") {
        Rng rng = make_rng(4, "render-det");
        const IdentityParams id = sample_identity(rng);
        const FaceJitter j = sample_jitter(rng, 48);
        CHECK(same_pixels(render_face(id, 48, j), render_face(id, 48, j)));
    }
    SUBCASE("same seed reproduces the dataset") {
        const SynthIdentityDataset again = synth_identity_dataset(4, 5, 48, 9);
        for (size_t i = 0; i < ds.images.size(); ++i) {
            CHECK(same_pixels(ds.images[i], again.images[i]));
        }
    }
}

TEST_CASE("scripted detection streams") {
    SUBCASE("single moving entity over 20 frames") {
        TrackScript script;
        script.frame_w = 200;
        script.frame_h = 100;
        ScriptEntity e;
        e.entity_id = 0;
        e.video_id = "v";
        e.w = 20;
        e.h = 20;
        e.spans = {{0, 19, 10.0, 10.0, 2.0, 0.5}};
        script.entities = {e};
        const ScriptedStream s = synth_detection_stream(script);
        REQUIRE(s.detections.size() == 20);
        for (size_t i = 0; i < s.detections.size(); ++i) {
            CHECK(s.detections[i].frame_index == static_cast<int64_t>(i));
            CHECK(s.detections[i].box.x == doctest::Approx(10.0 + 2.0 * i));
            CHECK(s.gt_entity[i] == 0);
            CHECK(s.gt_span[i] == 0);
        }
    }
    SUBCASE("two entities produce a sorted interleaved stream") {
        TrackScript script;
        script.frame_w = 200;
        script.frame_h = 100;
        ScriptEntity a, b;
        a.entity_id = 0;
        a.video_id = "v";
        a.w = a.h = 20;
        a.spans = {{0, 19, 10.0, 10.0, 2.0, 0.0}};
        b.entity_id = 1;
        b.video_id = "v";
        b.w = b.h = 20;
        b.spans = {{0, 19, 150.0, 60.0, -2.0, 0.0}};
        script.entities = {a, b};
        const ScriptedStream s = synth_detection_stream(script);
        REQUIRE(s.detections.size() == 40);
        for (size_t i = 1; i < s.detections.size(); ++i) {
            CHECK(s.detections[i].frame_index >= s.detections[i - 1].frame_index);
        }
        std::set<std::string> refs;
        for (const Detection& d : s.detections) REQUIRE(refs.insert(d.face_ref).second);
    }
    SUBCASE("an absence window splits spans") {
        TrackScript script;
        script.frame_w = 200;
        script.frame_h = 100;
        ScriptEntity e;
        e.entity_id = 0;
        e.video_id = "v";
        e.w = e.h = 20;
        e.spans = {{0, 9, 10.0, 10.0, 0.0, 0.0}, {16, 25, 10.0, 10.0, 0.0, 0.0}};
        script.entities = {e};
        const ScriptedStream s = synth_detection_stream(script);
        REQUIRE(s.detections.size() == 20);
        CHECK(s.detections[9].frame_index == 9);
        CHECK(s.detections[10].frame_index == 16);
        CHECK(s.gt_span[9] == 0);
        CHECK(s.gt_span[10] == 1);
    }
    SUBCASE("malformed scripts are rejected") {
        TrackScript script;
        script.frame_w = 100;
        script.frame_h = 100;
        ScriptEntity e;
        e.entity_id = 0;
        e.video_id = "v";
        e.w = e.h = 20;

        e.spans = {{0, 9, 10.0, 10.0, 20.0, 0.0}};  // exits the frame
        script.entities = {e};
        CHECK_THROWS_AS(synth_detection_stream(script), std::invalid_argument);

        e.spans = {{0, 9, 10.0, 10.0, 0.0, 0.0}, {5, 12, 10.0, 10.0, 0.0, 0.0}};  // overlap
        script.entities = {e};
        CHECK_THROWS_AS(synth_detection_stream(script), std::invalid_argument);

        e.spans = {{5, 2, 10.0, 10.0, 0.0, 0.0}};  // end before start
        script.entities = {e};
        CHECK_THROWS_AS(synth_detection_stream(script), std::invalid_argument);
    }
}

TEST_CASE("record files round-trip with a provenance header") {
    SUBCASE("detections") {
        std::vector<Detection> dets;
        Detection d;
        d.video_id = "v0";
        d.frame_index = 3;
        d.box = {1.5, 2.5, 20.0, 22.0};
        d.face_ref = "v0/f3.ppm";
        dets.push_back(d);
        d.frame_index = 4;
        d.face_ref = "v0/f4.ppm";
        dets.push_back(d);

        const std::string path = tmp_path("dets.jsonl");
        write_detections(path, dets, prov());
        const auto back = read_detections(path);
        REQUIRE(back.size() == 2);
        CHECK(back[0].video_id == "v0");
        CHECK(back[0].frame_index == 3);
        CHECK(back[0].box.x == doctest::Approx(1.5));
        CHECK(back[0].box.h == doctest::Approx(22.0));
        CHECK(back[1].face_ref == "v0/f4.ppm");

        std::ifstream f(path);
        std::string first;
        std::getline(f, first);
        CHECK(first.find("__provenance__") != std::string::npos);
        CHECK(first.find("deadbeef") != std::string::npos);
    }
    SUBCASE("tracks") {
        FaceTrack t;
        t.track_id = 2;
        t.video_id = "v1";
        for (int f = 0; f < 3; ++f) {
            Detection d;
            d.video_id = "v1";
            d.frame_index = f;
            d.box = {double(f), 0.0, 10.0, 10.0};
            d.face_ref = "v1/f" + std::to_string(f) + ".ppm";
            t.members.push_back(d);
        }
        const std::string path = tmp_path("tracks.jsonl");
        write_tracks(path, {t}, prov());
        const auto back = read_tracks(path);
        REQUIRE(back.size() == 1);
        CHECK(back[0].track_id == 2);
        CHECK(back[0].video_id == "v1");
        REQUIRE(back[0].members.size() == 3);
        CHECK(back[0].members[2].face_ref == "v1/f2.ppm");
        CHECK(back[0].members[2].video_id == "v1");  // inherited from the track
        CHECK(back[0].members[1].box.x == doctest::Approx(1.0));
    }
    SUBCASE("pair manifests") {
        PairManifest m;
        m.pairs = {{"a", "b", +1, PairSource::track},
                   {"c", "d", -1, PairSource::same_frame},
                   {"e", "f", -1, PairSource::cross_genre}};
        m.recount();
        const std::string path = tmp_path("manifest.jsonl");
        write_manifest(path, m, prov());
        const PairManifest back = read_manifest(path);
        REQUIRE(back.pairs.size() == 3);
        CHECK(back.n_similar == 1);
        CHECK(back.n_same_frame == 1);
        CHECK(back.n_cross_genre == 1);
        CHECK(back.pairs[0].a == "a");
        CHECK(back.pairs[1].source == PairSource::same_frame);
        CHECK(back.pairs[2].y == -1);
    }
    SUBCASE("genre and string maps") {
        const GenreMap genres = {{"v0", "news"}, {"v1", "drama"}};
        const std::string path = tmp_path("genres.json");
        write_genre_map(path, genres, prov());
        CHECK(read_genre_map(path) == genres);

        const std::map<std::string, std::string> ids = {{"a.ppm", "id3"}, {"b.ppm", "id5"}};
        const std::string spath = tmp_path("ids.json");
        write_string_map(spath, ids, prov());
        CHECK(read_string_map(spath) == ids);
    }
    SUBCASE("labeled pairs with folds") {
        const std::vector<ScoredPairRecord> pairs = {{"a", "b", +1, 0}, {"c", "d", -1, 3}};
        const std::string path = tmp_path("pairs.jsonl");
        write_labeled_pairs(path, pairs, prov());
        const auto back = read_labeled_pairs(path);
        REQUIRE(back.size() == 2);
        CHECK(back[0].fold == 0);
        CHECK(back[1].fold == 3);
        CHECK(back[1].y == -1);
    }
    SUBCASE("corrupt line is reported with its 1-based number") {
        const std::string path = tmp_path("corrupt.jsonl");
        {
            std::ofstream f(path);
            f << prov().to_json_line() << "\n";
            f << R"({"video_id":"v","frame_index":0,"x":0,"y":0,"w":5,"h":5,"face_ref":"r"})"
              << "\n";
            f << "{broken\n";
        }
        CHECK_THROWS_WITH_AS(read_detections(path), doctest::Contains(":3:"), std::runtime_error);
    }
    SUBCASE("provenance line round-trips") {
        const Provenance p = prov();
        const auto parsed = Provenance::parse_json_line(p.to_json_line());
        REQUIRE(parsed.has_value());
        CHECK(parsed->stage == "test");
        CHECK(parsed->seed == 7);
        CHECK(parsed->config_hash == "deadbeef");
        CHECK(!Provenance::parse_json_line(R"({"video_id":"v"})").has_value());
        const std::string comment = p.to_comment_line();
        CHECK(comment.rfind("# ", 0) == 0);
        CHECK(comment.find("stage=test") != std::string::npos);
        CHECK(comment.find("seed=7") != std::string::npos);
        CHECK(comment.find("config=deadbeef") != std::string::npos);
    }
}
