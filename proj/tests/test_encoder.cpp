#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "facerep/encoder.hpp"
#include "facerep/lbp.hpp"
#include "facerep/rng.hpp"

using namespace facerep;

namespace {

EncoderConfig mini_config(uint64_t seed) {
    EncoderConfig cfg;
    cfg.input_side = 16;
    cfg.stages = {{8, 1}, {16, 1}};
    cfg.fc_layers = 2;
    cfg.fc_dim = 16;
    cfg.seed = seed;
    return cfg;
}

Image noise_image(int side, uint64_t seed) {
    Rng rng = make_rng(seed, "enc-test-img");
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(side, side, 3);
    for (float& v : img.data) v = u(rng);
    return img;
}

std::string tmp_path(const std::string& name) {
    std::filesystem::create_directories("encoder_tmp");
    return "encoder_tmp/" + name;
}

}  // namespace

TEST_CASE("preset architectures match their reference parameter counts") {
    SUBCASE("64px input") {
        Encoder enc = build_encoder(encoder_preset("paper-64", 0));
        const int64_t n = count_parameters(enc);
        CHECK(n == 17875008);
        CHECK(std::abs(n - 17000000) <= 1700000);  // within 10% of the reported size
    }
    SUBCASE("128px input") {
        Encoder enc = build_encoder(encoder_preset("paper-128", 0));
        const int64_t n = count_parameters(enc);
        CHECK(n == 24166464);
        CHECK(std::abs(n - 24000000) <= 2400000);
    }
    SUBCASE("desk-scale preset") {
        const EncoderConfig cfg = encoder_preset("reference-small", 0);
        CHECK(cfg.input_side == 64);
        CHECK(cfg.fc_dim == 128);
        CHECK(cfg.stages.size() == 4);
        CHECK_THROWS_AS(encoder_preset("nope", 0), std::invalid_argument);
    }
    SUBCASE("config validation") {
        EncoderConfig bad = mini_config(0);
        bad.stages = {};
        CHECK_THROWS_AS(build_encoder(bad), std::invalid_argument);
        bad = mini_config(0);
        bad.input_side = 18;  // not divisible through two pools
        CHECK_THROWS_AS(build_encoder(bad), std::invalid_argument);
        bad = mini_config(0);
        bad.fc_dim = 4;
        CHECK_THROWS_AS(build_encoder(bad), std::invalid_argument);
    }
}

TEST_CASE("embeddings") {
    Encoder enc = build_encoder(mini_config(11));
    const Image a = noise_image(16, 1);
    const Image b = noise_image(16, 2);
    const Image c = noise_image(16, 3);

    SUBCASE("dimension follows fc_dim") {
        CHECK(embed(enc, a).size() == 16);
    }
    SUBCASE("batched and single-image embeddings agree") {
        const Eigen::MatrixXf batch = embed_images(enc, {&a, &b, &c});
        REQUIRE(batch.rows() == 3);
        REQUIRE(batch.cols() == 16);
        const std::vector<const Image*> singles = {&a, &b, &c};
        for (int i = 0; i < 3; ++i) {
            const std::vector<float> solo = embed(enc, *singles[static_cast<size_t>(i)]);
            for (int j = 0; j < 16; ++j) {
                CHECK(batch(i, j) == doctest::Approx(solo[static_cast<size_t>(j)]).epsilon(1e-5));
            }
        }
    }
    SUBCASE("distinct inputs embed differently") {
        const std::vector<float> ea = embed(enc, a);
        const std::vector<float> eb = embed(enc, b);
        CHECK(ea != eb);
    }
    SUBCASE("same seed builds the same encoder") {
        Encoder enc2 = build_encoder(mini_config(11));
        CHECK(embed(enc, a) == embed(enc2, a));
        Encoder enc3 = build_encoder(mini_config(12));
        CHECK(embed(enc, a) != embed(enc3, a));
    }
    SUBCASE("wrong input shape is rejected") {
        const Image wrong = noise_image(20, 4);
        CHECK_THROWS_AS(embed(enc, wrong), std::invalid_argument);
    }
}

TEST_CASE("descriptor is a unit-norm view average") {
    Encoder enc = build_encoder(mini_config(11));
    const Image img = noise_image(24, 5);  // larger than input_side, views rescale it

    const std::vector<float> d = descriptor(enc, img);
    REQUIRE(d.size() == 16);
    double norm = 0.0;
    for (float v : d) norm += static_cast<double>(v) * v;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));

    CHECK(descriptor(enc, img) == d);  // inference is pure

    // matches the explicit mean over the ten views
    const ViewSet vs = ten_views(img, 16);
    std::vector<const Image*> ptrs;
    for (const Image& v : vs.views) ptrs.push_back(&v);
    const Eigen::MatrixXf emb = embed_images(enc, ptrs);
    Eigen::VectorXf mean = emb.colwise().mean();
    mean /= mean.norm();
    for (int j = 0; j < 16; ++j) {
        CHECK(d[static_cast<size_t>(j)] == doctest::Approx(mean(j)).epsilon(1e-6));
    }
}

TEST_CASE("activation maps tap rectified stage outputs") {
    Encoder enc = build_encoder(encoder_preset("reference-small", 3));
    const Image img = noise_image(64, 6);

    // per stage: conv, batchnorm, relu, pool; the relu sits at 4k + 2
    const std::vector<int> taps = {2, 6, 10, 14};
    const auto maps = activation_maps(enc, img, taps);
    REQUIRE(maps.size() == 4);
    const int sides[4] = {64, 32, 16, 8};
    for (size_t i = 0; i < 4; ++i) {
        CHECK(maps[i].layer == taps[i]);
        CHECK(maps[i].h == sides[i]);
        CHECK(maps[i].w == sides[i]);
        REQUIRE(maps[i].values.size() == static_cast<size_t>(sides[i]) * sides[i]);
        for (float v : maps[i].values) CHECK(v >= 0.0f);  // post-relu
    }
    CHECK_THROWS_AS(activation_maps(enc, img, {99}), std::invalid_argument);
}

TEST_CASE("checkpoints restore the exact encoder") {
    Encoder enc = build_encoder(mini_config(11));
    // move batchnorm running statistics off their defaults first
    {
        const Image warm = noise_image(16, 7);
        nn::Tensor<float> x(1, 3, 16, 16);
        std::copy(warm.data.begin(), warm.data.end(), x.data.begin());
        enc.net.forward(std::move(x), true);
    }
    enc.step = 42;
    const std::string path = tmp_path("enc.ckpt");
    save_checkpoint(enc, path);

    SUBCASE("bit-exact state and config") {
        Encoder back = load_checkpoint(path);
        CHECK(back.step == 42);
        CHECK(back.cfg.input_side == 16);
        CHECK(back.cfg.fc_dim == 16);
        CHECK(back.cfg.seed == 11);
        const auto a = enc.snapshot();
        const auto b = back.snapshot();
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

        const Image img = noise_image(16, 8);
        CHECK(embed(enc, img) == embed(back, img));
    }
    SUBCASE("junk file is refused") {
        const std::string junk = tmp_path("junk.ckpt");
        std::ofstream(junk) << "not a checkpoint";
        CHECK_THROWS_WITH_AS(load_checkpoint(junk), doctest::Contains("not a checkpoint"),
                             std::runtime_error);
    }
    SUBCASE("truncated file is refused") {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        const std::string cut = tmp_path("cut.ckpt");
        std::ofstream(cut, std::ios::binary)
            .write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        CHECK_THROWS_AS(load_checkpoint(cut), std::runtime_error);
    }
    SUBCASE("snapshot/restore rolls state back") {
        const auto snap = enc.snapshot();
        const Image img = noise_image(16, 9);
        const std::vector<float> before = embed(enc, img);
        for (const auto& p : enc.net.params()) {
            for (float& v : *p.value) v += 0.05f;
        }
        CHECK(embed(enc, img) != before);
        enc.restore(snap);
        CHECK(embed(enc, img) == before);
    }
}

TEST_CASE("descriptor tables index rows by ref") {
    DescriptorTable t;
    const float r0[4] = {1, 2, 3, 4};
    const float r1[4] = {5, 6, 7, 8};
    t.add("a.ppm", r0, 4);
    t.add("b.ppm", r1, 4);

    SUBCASE("lookup") {
        REQUIRE(t.find("b.ppm") != nullptr);
        CHECK(t.find("b.ppm")[0] == 5.0f);
        CHECK(t.find("b.ppm")[3] == 8.0f);
        CHECK(t.find("missing") == nullptr);
        CHECK(t.dim == 4);
    }
    SUBCASE("duplicate and mismatched adds are rejected") {
        CHECK_THROWS_AS(t.add("a.ppm", r1, 4), std::invalid_argument);
        CHECK_THROWS_AS(t.add("c.ppm", r1, 3), std::invalid_argument);
    }
    SUBCASE("file round trip") {
        const std::string path = tmp_path("table.bin");
        write_descriptor_table(path, t, Provenance{"test", 1, "cafe"});
        const DescriptorTable back = read_descriptor_table(path);
        CHECK(back.dim == 4);
        REQUIRE(back.refs == t.refs);
        CHECK(back.data == t.data);
        REQUIRE(back.find("a.ppm") != nullptr);
        CHECK(back.find("a.ppm")[2] == 3.0f);
    }
}

TEST_CASE("local binary pattern descriptor") {
    Rng rng = make_rng(2, "lbp-test");
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image gray(64, 64, 1);
    for (float& v : gray.data) v = u(rng);

    SUBCASE("dimension scales with the cell grid") {
        CHECK(lbp_descriptor(gray).size() == 928);  // 16 cells x 58 bins
        Image big(128, 128, 1);
        for (float& v : big.data) v = u(rng);
        CHECK(lbp_descriptor(big).size() == 3712);  // 64 cells x 58 bins
    }
    SUBCASE("counts are raw and bounded by the interior") {
        const auto h = lbp_descriptor(gray);
        double sum = 0.0;
        for (float v : h) {
            CHECK(v >= 0.0f);
            CHECK(v == std::floor(v));
            sum += v;
        }
        CHECK(sum > 0.0);
        CHECK(sum <= 62.0 * 62.0);
    }
    SUBCASE("constant image lands every interior pixel in one bin per cell") {
        const Image flat(64, 64, 1, 0.5f);
        const auto h = lbp_descriptor(flat);
        double sum = 0.0;
        int nonzero_bin = -1;
        for (int cell = 0; cell < 16; ++cell) {
            int nz = 0;
            for (int bin = 0; bin < 58; ++bin) {
                const float v = h[static_cast<size_t>(cell) * 58 + bin];
                sum += v;
                if (v > 0.0f) {
                    ++nz;
                    if (nonzero_bin < 0) nonzero_bin = bin;
                    CHECK(bin == nonzero_bin);  // same pattern everywhere
                }
            }
            CHECK(nz == 1);
        }
        CHECK(sum == doctest::Approx(62.0 * 62.0));
    }
    SUBCASE("invariant under monotone rescaling") {
        Image half = gray;
        for (float& v : half.data) v *= 0.5f;  // exact in binary floating point
        Image twice = gray;
        for (float& v : twice.data) v *= 2.0f;
        CHECK(lbp_descriptor(half) == lbp_descriptor(gray));
        CHECK(lbp_descriptor(twice) == lbp_descriptor(gray));
    }
    SUBCASE("input contract") {
        CHECK_THROWS_AS(lbp_descriptor(Image(64, 64, 3)), std::invalid_argument);
        CHECK_THROWS_AS(lbp_descriptor(Image(64, 32, 1)), std::invalid_argument);
        CHECK_THROWS_AS(lbp_descriptor(Image(60, 60, 1)), std::invalid_argument);  // 60 % 16 != 0
        CHECK_THROWS_AS(lbp_descriptor(gray, 2), std::invalid_argument);
    }
}
