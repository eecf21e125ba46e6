#include "mmfbsde/training/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace mmfbsde::train {
namespace {

using nlohmann::json;

void put_le(std::vector<unsigned char>& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

double get_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

json layout_json(const nn::ParamLayout& layout) {
    json blocks = json::array();
    for (const auto& b : layout.blocks()) {
        json j = {{"name", b.name},
                  {"rows", b.shape.rows},
                  {"cols", b.shape.cols},
                  {"offset", b.offset},
                  {"regularized", b.regularized}};
        if (b.learning_rate) j["learning_rate"] = *b.learning_rate;
        blocks.push_back(std::move(j));
    }
    return blocks;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const CheckpointInfo& info,
                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& a = store.adam;
    json manifest = {
        {"schema", kCheckpointSchema},
        {"config_hash", info.config_hash},
        {"seed", info.seed},
        {"iteration", info.iteration},
        {"net",
         {{"state_dim", store.net_config.state_dim},
          {"hidden1", store.net_config.hidden1},
          {"hidden2", store.net_config.hidden2},
          {"out_dim", store.net_config.out_dim},
          {"forget_bias", store.net_config.forget_bias}}},
        {"adam",
         {{"learning_rate", a.config.learning_rate},
          {"beta1", a.config.beta1},
          {"beta2", a.config.beta2},
          {"epsilon", a.config.epsilon},
          {"t", a.t}}},
        {"blocks", layout_json(store.layout)},
        {"count", store.layout.total()},
        {"streams", {"values", "adam_m", "adam_v"}},
    };

    std::vector<unsigned char> bytes;
    bytes.reserve(3 * store.values.size() * 8);
    for (double v : store.values) put_le(bytes, v);
    for (double v : a.m) put_le(bytes, v);
    for (double v : a.v) put_le(bytes, v);

    // Write to temporaries and rename so an interrupted save never leaves a
    // half-written checkpoint behind.
    const auto bin_tmp = dir / "params.bin.tmp";
    const auto man_tmp = dir / "manifest.json.tmp";
    {
        std::ofstream out(bin_tmp, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("cannot write " + bin_tmp.string());
    }
    {
        std::ofstream out(man_tmp);
        out << manifest.dump(2) << '\n';
        if (!out) throw CheckpointError("cannot write " + man_tmp.string());
    }
    std::filesystem::rename(bin_tmp, dir / "params.bin");
    std::filesystem::rename(man_tmp, dir / "manifest.json");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 const std::optional<std::string>& expected_hash,
                                 const std::optional<nn::NetConfig>& expected_net) {
    const auto man_path = dir / "manifest.json";
    const auto bin_path = dir / "params.bin";
    if (!std::filesystem::exists(man_path) || !std::filesystem::exists(bin_path))
        throw CheckpointError("checkpoint not found: " + dir.string());

    json manifest;
    try {
        std::ifstream in(man_path);
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError("malformed checkpoint manifest " + man_path.string() + ": " + e.what());
    }

    LoadedCheckpoint out;
    try {
        if (manifest.at("schema").get<std::string>() != kCheckpointSchema)
            throw CheckpointError("unsupported checkpoint schema '" + manifest.at("schema").get<std::string>() +
                                  "', expected '" + kCheckpointSchema + "'");
        out.info.config_hash = manifest.at("config_hash").get<std::string>();
        out.info.seed = manifest.at("seed").get<std::uint64_t>();
        out.info.iteration = manifest.at("iteration").get<std::size_t>();

        const auto& net = manifest.at("net");
        nn::NetConfig cfg;
        cfg.state_dim = net.at("state_dim").get<std::size_t>();
        cfg.hidden1 = net.at("hidden1").get<std::size_t>();
        cfg.hidden2 = net.at("hidden2").get<std::size_t>();
        cfg.out_dim = net.at("out_dim").get<std::size_t>();
        cfg.forget_bias = net.at("forget_bias").get<double>();

        nn::ParamLayout layout;
        for (const auto& b : manifest.at("blocks")) {
            std::optional<double> lr;
            if (b.contains("learning_rate")) lr = b.at("learning_rate").get<double>();
            const auto& added = layout.add(b.at("name").get<std::string>(),
                                           {b.at("rows").get<std::size_t>(), b.at("cols").get<std::size_t>()},
                                           b.at("regularized").get<bool>(), lr);
            if (added.offset != b.at("offset").get<std::size_t>())
                throw CheckpointError("checkpoint manifest: block '" + added.name + "' has inconsistent offset");
        }
        if (layout.total() != manifest.at("count").get<std::size_t>())
            throw CheckpointError("checkpoint manifest: block sizes do not add up to count");

        if (expected_hash && *expected_hash != out.info.config_hash) {
            throw CheckpointError("checkpoint config hash mismatch: checkpoint has " + out.info.config_hash +
                                  ", current config has " + *expected_hash);
        }
        if (expected_net) {
            const auto want = ParamStore::make_layout(*expected_net, std::nullopt);
            for (std::size_t i = 0; i < std::max(want.blocks().size(), layout.blocks().size()); ++i) {
                const bool have_w = i < want.blocks().size(), have_l = i < layout.blocks().size();
                if (!have_w || !have_l || want.blocks()[i].name != layout.blocks()[i].name ||
                    want.blocks()[i].shape != layout.blocks()[i].shape) {
                    const std::string name = have_w ? want.blocks()[i].name : layout.blocks()[i].name;
                    throw CheckpointError(
                        "checkpoint shape mismatch at block '" + name + "': expected " +
                        (have_w ? to_string(want.blocks()[i].shape) : std::string("none")) + ", checkpoint has " +
                        (have_l ? to_string(layout.blocks()[i].shape) : std::string("none")));
                }
            }
        }

        const auto& adam = manifest.at("adam");
        nn::AdamConfig acfg;
        acfg.learning_rate = adam.at("learning_rate").get<double>();
        acfg.beta1 = adam.at("beta1").get<double>();
        acfg.beta2 = adam.at("beta2").get<double>();
        acfg.epsilon = adam.at("epsilon").get<double>();

        out.store.net_config = cfg;
        out.store.layout = std::move(layout);
        out.store.adam = nn::AdamState(out.store.layout.total(), acfg);
        out.store.adam.t = adam.at("t").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw CheckpointError("malformed checkpoint manifest " + man_path.string() + ": " + e.what());
    }

    const std::size_t n = out.store.layout.total();
    const std::uintmax_t expected_bytes = 3 * n * 8;
    const std::uintmax_t found_bytes = std::filesystem::file_size(bin_path);
    if (found_bytes != expected_bytes) {
        throw CheckpointError("checkpoint " + bin_path.string() + " is truncated or padded: expected " +
                              std::to_string(expected_bytes) + " bytes, found " + std::to_string(found_bytes));
    }
    std::vector<unsigned char> bytes(expected_bytes);
    {
        std::ifstream in(bin_path, std::ios::binary);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!in) throw CheckpointError("cannot read " + bin_path.string());
    }
    out.store.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.store.values[i] = get_le(&bytes[8 * i]);
        out.store.adam.m[i] = get_le(&bytes[8 * (n + i)]);
        out.store.adam.v[i] = get_le(&bytes[8 * (2 * n + i)]);
    }
    return out;
}

}  // namespace mmfbsde::train
