// Checkpoint container:
//
//   imugest-lstm-checkpoint
//   version 1
//   byte_order little
//   gate_order i f g o
//   variant B
//   input_dim 6
//   hidden_sizes 64 64 64
//   num_classes 10
//   dropout_rate 0.5
//   dropout_after 1            ("none" when absent)
//   input_relu 0
//   window_len 250
//   array lstm0.W 256 6        (one line per array, in ModelParams::tensors order)
//   ...
//   end_header
//   <raw little-endian binary64 values of every array, row-major, same order>

#include <map>

#include "imugest/container.hpp"
#include "imugest/lstm.hpp"

namespace imugest {

namespace {

constexpr std::string_view kMagic = "imugest-lstm-checkpoint";

[[noreturn]] void fail(CheckpointError::Kind kind, const std::string& what) {
    throw CheckpointError(kind, "checkpoint: " + what);
}

std::size_t to_count(std::string_view s, std::string_view field) {
    auto v = parse_int(s);
    if (!v || *v < 0) {
        fail(CheckpointError::Kind::malformed, "bad value for " + std::string(field));
    }
    return static_cast<std::size_t>(*v);
}

}  // namespace

std::string encode_checkpoint(const ModelParams& params, const ModelConfig& config) {
    config.validate();
    check_shapes(params, config);
    std::vector<std::string> h;
    h.emplace_back(kMagic);
    h.push_back("version " + std::to_string(kCheckpointVersion));
    h.emplace_back("byte_order little");
    h.emplace_back("gate_order i f g o");
    h.push_back("variant " + to_string(config.variant));
    h.push_back("input_dim " + std::to_string(config.input_dim));
    std::string hs = "hidden_sizes";
    for (auto v : config.hidden_sizes) {
        hs += " " + std::to_string(v);
    }
    h.push_back(hs);
    h.push_back("num_classes " + std::to_string(config.num_classes));
    h.push_back("dropout_rate " + format_double(config.dropout_rate));
    h.push_back("dropout_after " +
                (config.dropout_after ? std::to_string(*config.dropout_after) : std::string("none")));
    h.push_back("input_relu " + std::string(config.input_relu ? "1" : "0"));
    h.push_back("window_len " + std::to_string(config.window_len));

    std::string payload;
    const auto names = params.tensor_names();
    const auto arrays = params.tensors();
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        h.push_back("array " + names[i] + " " + std::to_string(arrays[i]->rows()) + " " +
                    std::to_string(arrays[i]->cols()));
        append_le_doubles(payload, arrays[i]->values());
    }
    return encode_container(h, payload);
}

std::pair<ModelParams, ModelConfig> decode_checkpoint(std::string_view bytes) {
    using K = CheckpointError::Kind;
    auto container = decode_container(bytes);
    if (!container) {
        fail(K::malformed, "header is not terminated");
    }
    const auto& lines = container->header;
    if (lines.empty() || lines[0] != kMagic) {
        fail(K::malformed, "not a checkpoint file");
    }

    std::map<std::string, std::string, std::less<>> fields;
    std::vector<std::vector<std::string_view>> array_lines;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        auto sp = line.find(' ');
        if (sp == std::string_view::npos) {
            fail(K::malformed, "header line without value: " + std::string(line));
        }
        auto key = line.substr(0, sp);
        auto value = line.substr(sp + 1);
        if (key == "array") {
            array_lines.push_back(split(value, ' '));
        } else {
            fields.emplace(std::string(key), std::string(value));
        }
    }
    auto get = [&](std::string_view key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) {
            fail(K::malformed, "missing header field " + std::string(key));
        }
        return it->second;
    };

    auto version = parse_int(get("version"));
    if (!version) {
        fail(K::malformed, "bad version field");
    }
    if (*version != kCheckpointVersion) {
        fail(K::version_mismatch, "file version " + std::to_string(*version) + ", reader supports " +
                                      std::to_string(kCheckpointVersion));
    }
    if (get("byte_order") != "little") {
        fail(K::malformed, "unsupported byte order " + get("byte_order"));
    }
    if (get("gate_order") != "i f g o") {
        fail(K::malformed, "unsupported gate order " + get("gate_order"));
    }

    ModelConfig cfg;
    auto variant = parse_variant(get("variant"));
    if (!variant) {
        fail(K::malformed, "unknown variant " + get("variant"));
    }
    cfg.variant = *variant;
    cfg.input_dim = to_count(get("input_dim"), "input_dim");
    cfg.hidden_sizes.clear();
    for (auto tok : split(get("hidden_sizes"), ' ')) {
        cfg.hidden_sizes.push_back(to_count(tok, "hidden_sizes"));
    }
    cfg.num_classes = to_count(get("num_classes"), "num_classes");
    auto rate = parse_double(get("dropout_rate"));
    if (!rate) {
        fail(K::malformed, "bad dropout_rate");
    }
    cfg.dropout_rate = *rate;
    const auto& da = get("dropout_after");
    cfg.dropout_after = da == "none" ? std::nullopt
                                     : std::optional<std::size_t>(to_count(da, "dropout_after"));
    const auto& relu_flag = get("input_relu");
    if (relu_flag != "0" && relu_flag != "1") {
        fail(K::malformed, "bad input_relu");
    }
    cfg.input_relu = relu_flag == "1";
    cfg.window_len = to_count(get("window_len"), "window_len");
    try {
        cfg.validate();
    } catch (const ContractViolation& e) {
        fail(K::malformed, e.what());
    }

    ModelParams params = zero_params(cfg);
    auto arrays = params.tensors();
    const auto names = params.tensor_names();
    if (array_lines.size() != arrays.size()) {
        fail(K::shape_mismatch, "file stores " + std::to_string(array_lines.size()) +
                                    " arrays, config implies " + std::to_string(arrays.size()));
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const auto& al = array_lines[i];
        if (al.size() != 3) {
            fail(K::malformed, "bad array line");
        }
        if (al[0] != names[i]) {
            fail(K::malformed, "expected array " + names[i] + ", found " + std::string(al[0]));
        }
        const std::size_t rows = to_count(al[1], "array rows");
        const std::size_t cols = to_count(al[2], "array cols");
        if (rows != arrays[i]->rows() || cols != arrays[i]->cols()) {
            fail(K::shape_mismatch, names[i] + " stored as " + std::to_string(rows) + "x" +
                                        std::to_string(cols) + ", config implies " +
                                        std::to_string(arrays[i]->rows()) + "x" +
                                        std::to_string(arrays[i]->cols()));
        }
        const std::size_t nbytes = arrays[i]->size() * 8;
        if (offset + nbytes > container->payload.size()) {
            fail(K::malformed, "truncated data for " + names[i]);
        }
        read_le_doubles(std::string_view(container->payload).substr(offset, nbytes),
                        arrays[i]->values());
        offset += nbytes;
    }
    if (offset != container->payload.size()) {
        fail(K::malformed, "trailing bytes after the last array");
    }
    return {std::move(params), cfg};
}

void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(params, config);
    try {
        write_file_atomic(path, bytes);
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointError::Kind::io, e.what());
    }
}

std::pair<ModelParams, ModelConfig> load_checkpoint(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = read_file(path);
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointError::Kind::io, e.what());
    }
    return decode_checkpoint(bytes);
}

}  // namespace imugest
