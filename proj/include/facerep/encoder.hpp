#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "facerep/image.hpp"
#include "facerep/nn.hpp"
#include "facerep/records.hpp"
#include "facerep/rng.hpp"
#include "facerep/views.hpp"

namespace facerep {

struct StageSpec {
    int width = 0;
    int convs = 1;
};

struct EncoderConfig {
    int input_side = 64;
    std::vector<StageSpec> stages;
    int fc_layers = 2;
    int fc_dim = 1024;
    bool batchnorm = true;
    uint64_t seed = 0;
    std::string preset_name;

    void validate() const;
    // 64 and 128 are the input sides the reference numbers were reported for
    bool reference_side() const { return input_side == 64 || input_side == 128; }
    std::string to_json() const;
    static EncoderConfig from_json(const std::string& text);
};

// reference-small (desk scale), paper-64, paper-128
EncoderConfig encoder_preset(const std::string& name, uint64_t seed);

// Conv stages (3x3 + optional norm + rectify, pool between stages), then FC
// layers of width fc_dim. The final FC output is linear: normalized but not
// rectified, so embeddings occupy both signs.
template <typename S>
nn::Net<S> build_net(const EncoderConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng(cfg.seed, "init");
    nn::Net<S> net;
    int in_c = 3;
    int side = cfg.input_side;
    for (const StageSpec& st : cfg.stages) {
        for (int i = 0; i < st.convs; ++i) {
            net.layers.push_back(std::make_unique<nn::Conv3x3<S>>(in_c, st.width, rng));
            if (cfg.batchnorm) net.layers.push_back(std::make_unique<nn::BatchNorm<S>>(st.width));
            net.layers.push_back(std::make_unique<nn::ReLU<S>>());
            in_c = st.width;
        }
        net.layers.push_back(std::make_unique<nn::MaxPool2<S>>());
        side /= 2;
    }
    net.layers.push_back(std::make_unique<nn::Flatten<S>>());
    int width = in_c * side * side;
    for (int i = 0; i < cfg.fc_layers; ++i) {
        net.layers.push_back(std::make_unique<nn::Linear<S>>(width, cfg.fc_dim, rng));
        if (cfg.batchnorm) net.layers.push_back(std::make_unique<nn::BatchNorm<S>>(cfg.fc_dim));
        if (i + 1 < cfg.fc_layers) net.layers.push_back(std::make_unique<nn::ReLU<S>>());
        width = cfg.fc_dim;
    }
    return net;
}

struct Encoder {
    EncoderConfig cfg;
    nn::Net<float> net;
    int64_t step = 0;

    std::vector<std::vector<float>> snapshot();
    void restore(const std::vector<std::vector<float>>& snap);
};

Encoder build_encoder(const EncoderConfig& cfg);
int64_t count_parameters(Encoder& enc);

// Inference-mode embeddings. Rows of the returned matrix follow input order.
Eigen::MatrixXf embed_images(Encoder& enc, const std::vector<const Image*>& imgs);
std::vector<float> embed(Encoder& enc, const Image& img);

// Mean of the 10 view embeddings, then L2-normalized.
std::vector<float> descriptor(Encoder& enc, const Image& img);

struct ActivationMap {
    int layer = 0;
    int h = 0, w = 0;
    std::vector<float> values;  // first channel, raw
};

std::vector<ActivationMap> activation_maps(Encoder& enc, const Image& img,
                                           const std::vector<int>& layer_indices);

void save_checkpoint(const Encoder& enc, const std::string& path);
Encoder load_checkpoint(const std::string& path);

struct DescriptorTable {
    int dim = 0;
    std::vector<std::string> refs;
    std::vector<float> data;  // refs.size() x dim, row-major
    std::map<std::string, size_t> index;

    void add(const std::string& ref, const float* v, int d);
    const float* row(size_t i) const { return data.data() + i * static_cast<size_t>(dim); }
    const float* find(const std::string& ref) const;
};

void write_descriptor_table(const std::string& bin_path, const DescriptorTable& table,
                            const Provenance& prov);
DescriptorTable read_descriptor_table(const std::string& bin_path);

}  // namespace facerep
