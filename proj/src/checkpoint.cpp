#include "stimpute/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <vector>

#include "stimpute/error.hpp"

namespace stimpute {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'I', 'M', 'P', 'C', 'K', '1'};
constexpr int kVersion = 1;

void append_u64_le(std::string& out, std::uint64_t value) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return value;
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"num_nodes", c.num_nodes},       {"num_blocks", c.num_blocks},
            {"channels", c.channels},         {"kernel_size", c.kernel_size},
            {"dilations", c.dilations},       {"embed_dim", c.embed_dim},
            {"attn_dim", c.attn_dim},         {"skip_channels", c.skip_channels},
            {"past_steps", c.past_steps},     {"future_steps", c.future_steps},
            {"residual_head", c.residual_head}};
}

void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context) {
    if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(context + ": unknown key \"" + item.key() + "\"");
    }
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"num_nodes", "num_blocks", "channels", "kernel_size", "dilations",
                         "embed_dim", "attn_dim", "skip_channels", "past_steps", "future_steps",
                         "residual_head"},
                        "model config");
    ModelConfig c;
    try {
        if (j.contains("num_nodes")) c.num_nodes = j.at("num_nodes").get<int>();
        if (j.contains("num_blocks")) c.num_blocks = j.at("num_blocks").get<int>();
        if (j.contains("channels")) c.channels = j.at("channels").get<int>();
        if (j.contains("kernel_size")) c.kernel_size = j.at("kernel_size").get<int>();
        if (j.contains("dilations")) c.dilations = j.at("dilations").get<std::vector<int>>();
        if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<int>();
        if (j.contains("attn_dim")) c.attn_dim = j.at("attn_dim").get<int>();
        if (j.contains("skip_channels")) c.skip_channels = j.at("skip_channels").get<int>();
        if (j.contains("past_steps")) c.past_steps = j.at("past_steps").get<int>();
        if (j.contains("future_steps")) c.future_steps = j.at("future_steps").get<int>();
        if (j.contains("residual_head")) c.residual_head = j.at("residual_head").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    checkpoint.config.validate();
    const std::vector<NamedTensor> named = checkpoint.params.named();

    nlohmann::json manifest = nlohmann::json::array();
    std::size_t total_values = 0;
    for (const NamedTensor& p : named) {
        manifest.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
        total_values += p.tensor.size();
    }
    nlohmann::json header = {{"format", "stimpute-checkpoint"},
                             {"version", kVersion},
                             {"train_step", checkpoint.train_step},
                             {"model_config", model_config_to_json(checkpoint.config)},
                             {"normalizer",
                              {{"mean", checkpoint.normalizer.mean},
                               {"std_dev", checkpoint.normalizer.std_dev}}},
                             {"params", manifest}};
    const std::string header_text = header.dump();

    std::string blob;
    blob.reserve(16 + header_text.size() + total_values * sizeof(double));
    blob.append(kMagic, sizeof(kMagic));
    append_u64_le(blob, header_text.size());
    blob += header_text;
    for (const NamedTensor& p : named) {
        const char* raw = reinterpret_cast<const char*>(p.tensor.data());
        blob.append(raw, p.tensor.size() * sizeof(double));
    }

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
    const std::size_t written = std::fwrite(blob.data(), 1, blob.size(), f);
    const bool ok = written == blob.size() && std::fclose(f) == 0;
    if (!ok) throw FormatError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path, int expected_nodes) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    std::vector<unsigned char> blob;
    unsigned char buf[1 << 16];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) blob.insert(blob.end(), buf, buf + got);
    std::fclose(f);

    if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("not a checkpoint file: " + path);
    const std::uint64_t header_len = read_u64_le(blob.data() + 8);
    if (16 + header_len > blob.size()) throw FormatError("truncated checkpoint header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.begin() + 16, blob.begin() + 16 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
    }

    Checkpoint cp;
    try {
        if (header.at("format").get<std::string>() != "stimpute-checkpoint" ||
            header.at("version").get<int>() != kVersion)
            throw FormatError("unsupported checkpoint format/version in " + path);
        cp.train_step = header.at("train_step").get<std::int64_t>();
        cp.config = model_config_from_json(header.at("model_config"));
        cp.normalizer.mean = header.at("normalizer").at("mean").get<std::vector<double>>();
        cp.normalizer.std_dev = header.at("normalizer").at("std_dev").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
    }

    cp.config.validate();  // ConfigError on a nonsense config
    if (expected_nodes >= 0 && cp.config.num_nodes != expected_nodes)
        throw ConfigError("checkpoint was trained with " + std::to_string(cp.config.num_nodes) +
                          " nodes, dataset has " + std::to_string(expected_nodes));
    if (static_cast<int>(cp.normalizer.mean.size()) != cp.config.num_nodes ||
        static_cast<int>(cp.normalizer.std_dev.size()) != cp.config.num_nodes)
        throw FormatError("checkpoint normalizer length disagrees with node count");

    cp.params = ModelParams::zeros(cp.config);
    const std::vector<NamedTensor> named = cp.params.named();
    const nlohmann::json& manifest = header.at("params");
    if (!manifest.is_array() || manifest.size() != named.size())
        throw FormatError("checkpoint parameter manifest does not match the stored config");

    std::size_t offset = 16 + header_len;
    for (std::size_t i = 0; i < named.size(); ++i) {
        const nlohmann::json& entry = manifest[i];
        Shape shape;
        std::string name;
        try {
            name = entry.at("name").get<std::string>();
            shape = entry.at("shape").get<Shape>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what());
        }
        if (name != named[i].name || shape != named[i].tensor.shape())
            throw FormatError("checkpoint tensor \"" + name +
                              "\" does not match the expected layout");
        const std::size_t bytes = named[i].tensor.size() * sizeof(double);
        if (offset + bytes > blob.size()) throw FormatError("truncated checkpoint data: " + path);
        std::memcpy(named[i].tensor.data(), blob.data() + offset, bytes);
        offset += bytes;
    }
    if (offset != blob.size()) throw FormatError("trailing bytes after checkpoint data: " + path);
    return cp;
}

}  // namespace stimpute
