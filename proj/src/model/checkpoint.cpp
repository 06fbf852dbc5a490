#include "stitch/model/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "stitch/sha256.hpp"

namespace stitch::model {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'S', 'T', 'C', 'H', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json header;
    header["version"] = 1;
    header["dtype"] = "f64";
    header["config"] = ckpt.config.to_json();
    header["train"] = ckpt.train_config.to_json();
    header["step"] = ckpt.step;
    header["curves"] = ckpt.curves;
    header["n_values"] = ckpt.values.size();
    header["vocab_sha256"] = sha256_hex(Vocab().alphabet());
    const std::string htext = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("save_checkpoint: cannot open " + path.string());
    f.write(kMagic, sizeof(kMagic));
    const uint64_t hlen = htext.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    f.write(reinterpret_cast<const char*>(ckpt.values.data()),
            static_cast<std::streamsize>(ckpt.values.size() * sizeof(double)));
    if (!f) throw FormatError("save_checkpoint: short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("load_checkpoint: cannot open " + path.string());

    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("load_checkpoint: bad magic in " + path.string());
    }
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f || hlen == 0 || hlen > (1u << 26)) {
        throw FormatError("load_checkpoint: bad header length");
    }
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw FormatError("load_checkpoint: truncated header");

    json header;
    try {
        header = json::parse(htext);
    } catch (const json::parse_error& e) {
        throw FormatError("load_checkpoint: header parse error: " + std::string(e.what()));
    }
    if (header.value("version", 0) != 1) throw FormatError("load_checkpoint: unsupported version");
    if (header.value("dtype", "") != "f64") throw FormatError("load_checkpoint: unsupported dtype");
    if (header.value("vocab_sha256", "") != sha256_hex(Vocab().alphabet())) {
        throw FormatError("load_checkpoint: vocabulary mismatch");
    }

    Checkpoint ckpt;
    ckpt.config = ModelConfig::from_json(header.at("config"));
    ckpt.train_config = TrainConfig::from_json(header.at("train"));
    ckpt.step = header.value("step", 0L);
    if (header.contains("curves")) {
        ckpt.curves = header["curves"].get<std::map<std::string, std::vector<double>>>();
    }
    const size_t n = header.at("n_values").get<size_t>();
    ckpt.values.resize(n);
    f.read(reinterpret_cast<char*>(ckpt.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!f || static_cast<size_t>(f.gcount()) != n * sizeof(double)) {
        throw FormatError("load_checkpoint: truncated parameter payload in " + path.string());
    }
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model m(ckpt.config);
    restore_into(m, ckpt);
    return m;
}

void restore_into(Model& model, const Checkpoint& ckpt) {
    if (!(model.config() == ckpt.config)) {
        throw ConfigError("restore_into: checkpoint was written under a different model config");
    }
    if (model.params().size() != ckpt.values.size()) {
        throw FormatError("restore_into: parameter count mismatch");
    }
    model.params().values() = ckpt.values;
}

}  // namespace stitch::model
