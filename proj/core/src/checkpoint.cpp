#include "prose/checkpoint.hpp"

#include <sstream>

#include "prose/error.hpp"
#include "prose/keyvalue.hpp"
#include "prose/tensor_io.hpp"

namespace prose {

namespace {

constexpr char kMagic[] = "PROSECKP";

void put_mlp(std::vector<NamedTensor>& out, const std::string& prefix, const Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
        const auto& layer = mlp.layers()[l];
        const std::string base = prefix + "." + std::to_string(l);
        out.push_back({base + ".weight",
                       {static_cast<std::uint32_t>(layer.out_width()),
                        static_cast<std::uint32_t>(layer.in_width())},
                       {layer.weights.data().begin(), layer.weights.data().end()}});
        out.push_back({base + ".bias", {static_cast<std::uint32_t>(layer.bias.size())}, layer.bias});
    }
}

void take_mlp(const TensorFile& file, const std::string& prefix, Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
        auto& layer = mlp.layers()[l];
        const std::string base = prefix + "." + std::to_string(l);
        const auto& w = file.find(base + ".weight");
        const auto& b = file.find(base + ".bias");
        const std::vector<std::uint32_t> wdims{static_cast<std::uint32_t>(layer.out_width()),
                                               static_cast<std::uint32_t>(layer.in_width())};
        if (w.dims != wdims || b.dims != std::vector<std::uint32_t>{wdims[0]}) {
            throw ShapeTableError("checkpoint: tensor '" + base + "' has the wrong shape");
        }
        std::copy(w.values.begin(), w.values.end(), layer.weights.data().begin());
        layer.bias = b.values;
    }
}

std::size_t count_mlp_tensors(const Mlp& mlp) { return 2 * mlp.layers().size(); }

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    KeyValues text = ckpt.config.to_key_values();
    text.emplace_back("image_height", std::to_string(ckpt.image.height));
    text.emplace_back("image_width", std::to_string(ckpt.image.width));
    text.emplace_back("image_channels", std::to_string(ckpt.image.channels));
    text.emplace_back("epoch", std::to_string(ckpt.epoch));
    text.emplace_back("adam_step", std::to_string(ckpt.optimizer.step));
    text.emplace_back("adam_beta1", format_double(ckpt.optimizer.hyper.beta1));
    text.emplace_back("adam_beta2", format_double(ckpt.optimizer.hyper.beta2));
    text.emplace_back("adam_epsilon", format_double(ckpt.optimizer.hyper.epsilon));
    text.emplace_back("adam_learning_rate", format_double(ckpt.optimizer.hyper.learning_rate));
    std::ostringstream rng;
    rng << ckpt.rng;
    text.emplace_back("rng_state", rng.str());

    TensorFile file;
    file.text = format_key_values(text);
    put_mlp(file.tensors, "encoder", ckpt.encoder);
    put_mlp(file.tensors, "decoder", ckpt.decoder);
    for (std::size_t i = 0; i < ckpt.optimizer.first_moment.size(); ++i) {
        const auto& m = ckpt.optimizer.first_moment[i];
        const auto& v = ckpt.optimizer.second_moment[i];
        file.tensors.push_back({"adam.m." + std::to_string(i), {static_cast<std::uint32_t>(m.size())}, m});
        file.tensors.push_back({"adam.v." + std::to_string(i), {static_cast<std::uint32_t>(v.size())}, v});
    }
    return encode_tensor_file(kMagic, kCheckpointVersion, file);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    const TensorFile file = decode_tensor_file(kMagic, kCheckpointVersion, bytes);

    ProseConfig cfg;
    ImageShape image;
    std::uint64_t epoch = 0;
    std::uint64_t adam_step_count = 0;
    AdamHyper hyper;
    std::string rng_state;
    for (const auto& [key, value] : parse_key_values(file.text)) {
        if (cfg.apply(key, value)) continue;
        if (key == "image_height") image.height = parse_u64(key, value);
        else if (key == "image_width") image.width = parse_u64(key, value);
        else if (key == "image_channels") image.channels = parse_u64(key, value);
        else if (key == "epoch") epoch = parse_u64(key, value);
        else if (key == "adam_step") adam_step_count = parse_u64(key, value);
        else if (key == "adam_beta1") hyper.beta1 = parse_double(key, value);
        else if (key == "adam_beta2") hyper.beta2 = parse_double(key, value);
        else if (key == "adam_epsilon") hyper.epsilon = parse_double(key, value);
        else if (key == "adam_learning_rate") hyper.learning_rate = parse_double(key, value);
        else if (key == "rng_state") rng_state = value;
        else throw ShapeTableError("checkpoint: unknown header key '" + key + "'");
    }

    Checkpoint ckpt;
    try {
        ckpt = make_model(cfg, image);
    } catch (const Error& e) {
        throw ShapeTableError(std::string("checkpoint: invalid header: ") + e.what());
    }
    const std::size_t blocks = ckpt.optimizer.first_moment.size();
    const std::size_t expected = count_mlp_tensors(ckpt.encoder) + count_mlp_tensors(ckpt.decoder) + 2 * blocks;
    if (file.tensors.size() != expected) {
        throw ShapeTableError("checkpoint: expected " + std::to_string(expected) + " tensors, found " +
                              std::to_string(file.tensors.size()));
    }
    take_mlp(file, "encoder", ckpt.encoder);
    take_mlp(file, "decoder", ckpt.decoder);
    ckpt.optimizer.hyper = hyper;
    ckpt.optimizer.step = adam_step_count;
    for (std::size_t i = 0; i < blocks; ++i) {
        const auto& m = file.find("adam.m." + std::to_string(i));
        const auto& v = file.find("adam.v." + std::to_string(i));
        const std::vector<std::uint32_t> dims{
            static_cast<std::uint32_t>(ckpt.optimizer.first_moment[i].size())};
        if (m.dims != dims || v.dims != dims) {
            throw ShapeTableError("checkpoint: optimizer moment " + std::to_string(i) +
                                  " has the wrong shape");
        }
        ckpt.optimizer.first_moment[i] = m.values;
        ckpt.optimizer.second_moment[i] = v.values;
    }
    ckpt.epoch = epoch;
    if (rng_state.empty()) throw ShapeTableError("checkpoint: missing rng_state");
    std::istringstream rng(rng_state);
    rng >> ckpt.rng;
    if (!rng) throw ShapeTableError("checkpoint: malformed rng_state");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace prose
