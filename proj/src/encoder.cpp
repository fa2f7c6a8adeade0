#include "facerep/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "facerep/errors.hpp"

namespace facerep {

using json = nlohmann::ordered_json;

void EncoderConfig::validate() const {
    if (stages.empty()) throw std::invalid_argument("encoder: no conv stages");
    int side = input_side;
    for (const StageSpec& st : stages) {
        if (st.width < 1 || st.convs < 1) {
            throw std::invalid_argument("encoder: stage widths and conv counts must be positive");
        }
        if (side < 2 || side % 2) {
            throw std::invalid_argument("encoder: input_side " + std::to_string(input_side) +
                                        " does not survive " + std::to_string(stages.size()) +
                                        " pooling stages");
        }
        side /= 2;
    }
    if (fc_layers < 1) throw std::invalid_argument("encoder: need at least one FC layer");
    if (fc_dim < 8) throw std::invalid_argument("encoder: fc_dim must be >= 8");
    if (input_side < 8) throw std::invalid_argument("encoder: input_side must be >= 8");
}

std::string EncoderConfig::to_json() const {
    json j;
    j["preset"] = preset_name;
    j["input_side"] = input_side;
    json st = json::array();
    for (const StageSpec& s : stages) st.push_back({{"width", s.width}, {"convs", s.convs}});
    j["stages"] = st;
    j["fc_layers"] = fc_layers;
    j["fc_dim"] = fc_dim;
    j["batchnorm"] = batchnorm;
    j["seed"] = seed;
    return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    EncoderConfig cfg;
    cfg.preset_name = j.value("preset", "");
    cfg.input_side = j.at("input_side").get<int>();
    for (const auto& s : j.at("stages")) {
        cfg.stages.push_back(StageSpec{s.at("width").get<int>(), s.at("convs").get<int>()});
    }
    cfg.fc_layers = j.at("fc_layers").get<int>();
    cfg.fc_dim = j.at("fc_dim").get<int>();
    cfg.batchnorm = j.at("batchnorm").get<bool>();
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
}

EncoderConfig encoder_preset(const std::string& name, uint64_t seed) {
    EncoderConfig cfg;
    cfg.seed = seed;
    cfg.preset_name = name;
    if (name == "reference-small") {
        cfg.input_side = 64;
        cfg.stages = {{16, 1}, {32, 1}, {64, 1}, {128, 1}};
        cfg.fc_dim = 128;
    } else if (name == "paper-64" || name == "paper-128") {
        cfg.input_side = name == "paper-64" ? 64 : 128;
        cfg.stages = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
        cfg.fc_dim = 1024;
    } else {
        throw std::invalid_argument("unknown encoder preset: " + name);
    }
    cfg.validate();
    return cfg;
}

std::vector<std::vector<float>> Encoder::snapshot() {
    std::vector<std::vector<float>> snap;
    for (const auto& s : net.state()) snap.push_back(*s.data);
    return snap;
}

void Encoder::restore(const std::vector<std::vector<float>>& snap) {
    const auto state = net.state();
    if (snap.size() != state.size()) throw std::logic_error("encoder restore: vector count mismatch");
    for (size_t i = 0; i < state.size(); ++i) *state[i].data = snap[i];
}

Encoder build_encoder(const EncoderConfig& cfg) {
    Encoder enc;
    enc.cfg = cfg;
    enc.net = build_net<float>(cfg);
    return enc;
}

int64_t count_parameters(Encoder& enc) { return enc.net.parameter_count(); }

Eigen::MatrixXf embed_images(Encoder& enc, const std::vector<const Image*>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("embed_images: no images");
    const int side = enc.cfg.input_side;
    nn::Tensor<float> x(static_cast<int>(imgs.size()), 3, side, side);
    for (size_t i = 0; i < imgs.size(); ++i) {
        const Image& im = *imgs[i];
        if (im.channels != 3 || im.height != side || im.width != side) {
            throw std::invalid_argument("embed_images: image " + std::to_string(i) + " is " +
                                        std::to_string(im.channels) + "x" +
                                        std::to_string(im.height) + "x" + std::to_string(im.width) +
                                        ", encoder expects 3x" + std::to_string(side) + "x" +
                                        std::to_string(side));
        }
        std::copy(im.data.begin(), im.data.end(), x.img(static_cast<int>(i)));
    }
    nn::Tensor<float> y = enc.net.forward(std::move(x), false);
    Eigen::MatrixXf out(y.n, y.c);
    for (int i = 0; i < y.n; ++i) {
        for (int j = 0; j < y.c; ++j) out(i, j) = y.img(i)[j];
    }
    return out;
}

std::vector<float> embed(Encoder& enc, const Image& img) {
    const Eigen::MatrixXf m = embed_images(enc, {&img});
    return {m.data(), m.data() + m.cols()};
}

std::vector<float> descriptor(Encoder& enc, const Image& img) {
    const ViewSet views = ten_views(img, enc.cfg.input_side);
    std::vector<const Image*> ptrs;
    ptrs.reserve(10);
    for (const Image& v : views.views) ptrs.push_back(&v);
    const Eigen::MatrixXf emb = embed_images(enc, ptrs);
    Eigen::VectorXf mean = emb.colwise().mean();
    const float norm = mean.norm();
    if (!(norm > 1e-12f)) throw NumericalError("descriptor: zero-norm mean embedding");
    mean /= norm;
    return {mean.data(), mean.data() + mean.size()};
}

std::vector<ActivationMap> activation_maps(Encoder& enc, const Image& img,
                                           const std::vector<int>& layer_indices) {
    const int side = enc.cfg.input_side;
    if (img.channels != 3 || img.height != side || img.width != side) {
        throw std::invalid_argument("activation_maps: image must be 3x" + std::to_string(side) +
                                    "x" + std::to_string(side));
    }
    nn::Tensor<float> x(1, 3, side, side);
    std::copy(img.data.begin(), img.data.end(), x.data.begin());
    std::vector<nn::Tensor<float>> taps;
    enc.net.forward_collect(std::move(x), layer_indices, &taps);
    std::vector<int> sorted = layer_indices;
    std::sort(sorted.begin(), sorted.end());
    std::vector<ActivationMap> out;
    for (size_t i = 0; i < taps.size(); ++i) {
        ActivationMap m;
        m.layer = sorted[i];
        m.h = taps[i].h;
        m.w = taps[i].w;
        m.values.assign(taps[i].img(0), taps[i].img(0) + static_cast<size_t>(m.h) * m.w);
        out.push_back(std::move(m));
    }
    return out;
}

namespace {
constexpr char kCheckpointMagic[8] = {'F', 'R', 'E', 'P', 'C', 'K', 'v', '1'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(path + ": truncated checkpoint");
    return v;
}
}  // namespace

void save_checkpoint(const Encoder& enc, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_raw<uint32_t>(os, sizeof(float));
    write_raw<int64_t>(os, enc.step);
    const std::string cfg = enc.cfg.to_json();
    write_raw<uint64_t>(os, cfg.size());
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    auto& net = const_cast<Encoder&>(enc).net;
    const auto state = net.state();
    write_raw<uint64_t>(os, state.size());
    for (const auto& s : state) {
        write_raw<uint64_t>(os, s.data->size());
        os.write(reinterpret_cast<const char*>(s.data->data()),
                 static_cast<std::streamsize>(s.data->size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("failed while writing checkpoint: " + path);
}

Encoder load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw std::runtime_error(path + ": not a checkpoint file");
    }
    const auto scalar = read_raw<uint32_t>(is, path);
    if (scalar != sizeof(float)) {
        throw std::runtime_error(path + ": unsupported scalar width " + std::to_string(scalar));
    }
    const auto step = read_raw<int64_t>(is, path);
    const auto cfg_len = read_raw<uint64_t>(is, path);
    std::string cfg_text(cfg_len, '\0');
    is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
    if (!is) throw std::runtime_error(path + ": truncated checkpoint");
    Encoder enc = build_encoder(EncoderConfig::from_json(cfg_text));
    enc.step = step;
    const auto state = enc.net.state();
    const auto n_vec = read_raw<uint64_t>(is, path);
    if (n_vec != state.size()) {
        throw std::runtime_error(path + ": checkpoint holds " + std::to_string(n_vec) +
                                 " state vectors, architecture needs " +
                                 std::to_string(state.size()));
    }
    for (const auto& s : state) {
        const auto count = read_raw<uint64_t>(is, path);
        if (count != s.data->size()) {
            throw std::runtime_error(path + ": size mismatch in " + s.name);
        }
        is.read(reinterpret_cast<char*>(s.data->data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!is) throw std::runtime_error(path + ": truncated checkpoint");
    }
    return enc;
}

void DescriptorTable::add(const std::string& ref, const float* v, int d) {
    if (dim == 0) dim = d;
    if (d != dim) throw std::invalid_argument("descriptor table: inconsistent dimension");
    if (index.count(ref)) throw std::invalid_argument("descriptor table: duplicate ref " + ref);
    index[ref] = refs.size();
    refs.push_back(ref);
    data.insert(data.end(), v, v + d);
}

const float* DescriptorTable::find(const std::string& ref) const {
    const auto it = index.find(ref);
    return it == index.end() ? nullptr : row(it->second);
}

void write_descriptor_table(const std::string& bin_path, const DescriptorTable& table,
                            const Provenance& prov) {
    std::ofstream os(bin_path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + bin_path);
    os.write(reinterpret_cast<const char*>(table.data.data()),
             static_cast<std::streamsize>(table.data.size() * sizeof(float)));
    if (!os) throw std::runtime_error("failed while writing " + bin_path);
    std::ofstream meta(bin_path + ".meta");
    if (!meta) throw std::runtime_error("cannot write " + bin_path + ".meta");
    meta << prov.to_comment_line() << "\n";
    meta << "dim " << table.dim << "\n";
    meta << "count " << table.refs.size() << "\n";
    for (const std::string& r : table.refs) meta << r << "\n";
}

DescriptorTable read_descriptor_table(const std::string& bin_path) {
    std::ifstream meta(bin_path + ".meta");
    if (!meta) throw std::runtime_error("cannot read " + bin_path + ".meta");
    DescriptorTable t;
    std::string line;
    size_t count = 0;
    while (std::getline(meta, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "dim") {
            ss >> t.dim;
        } else if (key == "count") {
            ss >> count;
        } else {
            t.index[line] = t.refs.size();
            t.refs.push_back(line);
        }
    }
    if (t.dim <= 0 || t.refs.size() != count) {
        throw std::runtime_error(bin_path + ".meta: inconsistent header");
    }
    std::ifstream is(bin_path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + bin_path);
    t.data.resize(count * static_cast<size_t>(t.dim));
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error(bin_path + ": truncated descriptor data");
    return t;
}

}  // namespace facerep
