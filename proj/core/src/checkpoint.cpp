#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>
#include <zlib.h>

#include "voidseg/network.hpp"

namespace voidseg::network {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is little-endian");

constexpr char kMagic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "float32";
        case torch::kInt64: return "int64";
        default: throw std::runtime_error("unsupported tensor dtype in checkpoint");
    }
}

torch::ScalarType dtype_from(const std::string& name) {
    if (name == "float32") return torch::kFloat32;
    if (name == "int64") return torch::kInt64;
    throw std::runtime_error("unknown dtype " + name);
}

nlohmann::json spec_json(const NetworkSpec& spec) {
    return {{"depth", spec.depth},
            {"base_features", spec.base_features},
            {"batch_norm", spec.batch_norm},
            {"head", to_string(spec.head)},
            {"n_rays", spec.n_rays}};
}

NetworkSpec spec_from(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.depth = j.at("depth").get<int>();
    spec.base_features = j.at("base_features").get<int>();
    spec.batch_norm = j.at("batch_norm").get<bool>();
    spec.head = parse_head(j.at("head").get<std::string>());
    spec.n_rays = j.value("n_rays", 32);
    spec.validate();
    return spec;
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(); }

NetworkSpec spec_from_json(const std::string& json) { return spec_from(nlohmann::json::parse(json)); }

void save_checkpoint(const std::filesystem::path& path, const WeightSnapshot& snap) {
    nlohmann::json manifest;
    manifest["format"] = "voidseg-checkpoint";
    manifest["version"] = kVersion;
    manifest["metadata"] = {{"spec", spec_json(snap.meta.spec)},
                            {"provenance", snap.meta.provenance},
                            {"epoch", snap.meta.epoch}};
    std::string payload;
    auto tensors = nlohmann::json::array();
    for (const auto& [name, tensor] : snap.tensors) {
        const auto t = tensor.contiguous();
        const auto nbytes = static_cast<std::size_t>(t.nbytes());
        tensors.push_back({{"name", name},
                           {"dtype", dtype_name(t.scalar_type())},
                           {"shape", t.sizes().vec()},
                           {"offset", payload.size()},
                           {"nbytes", nbytes}});
        payload.append(static_cast<const char*>(t.data_ptr()), nbytes);
    }
    manifest["tensors"] = std::move(tensors);
    manifest["payload_size"] = payload.size();
    manifest["payload_crc32"] =
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
    const std::string text = manifest.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
        const std::uint64_t manifest_size = text.size();
        out.write(kMagic, sizeof(kMagic));
        out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
        out.write(reinterpret_cast<const char*>(&manifest_size), sizeof(manifest_size));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

WeightSnapshot load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    auto corrupt = [&](const std::string& why) {
        return std::runtime_error("corrupt checkpoint " + path.string() + ": " + why);
    };
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t manifest_size = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&manifest_size), sizeof(manifest_size));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw corrupt("bad header");
    if (version != kVersion) throw corrupt("unsupported version " + std::to_string(version));
    if (manifest_size > (std::uint64_t{1} << 30)) throw corrupt("implausible manifest size");
    std::string text(manifest_size, '\0');
    in.read(text.data(), static_cast<std::streamsize>(manifest_size));
    if (!in) throw corrupt("truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw corrupt(e.what());
    }
    WeightSnapshot snap;
    try {
        const auto payload_size = manifest.at("payload_size").get<std::size_t>();
        std::string payload(payload_size, '\0');
        in.read(payload.data(), static_cast<std::streamsize>(payload_size));
        if (!in || static_cast<std::size_t>(in.gcount()) != payload_size) throw corrupt("truncated payload");
        const auto crc =
            crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
        if (crc != manifest.at("payload_crc32").get<unsigned long>()) throw corrupt("payload checksum mismatch");

        const auto& meta = manifest.at("metadata");
        snap.meta.spec = spec_from(meta.at("spec"));
        snap.meta.provenance = meta.at("provenance").get<std::string>();
        snap.meta.epoch = meta.at("epoch").get<int>();
        for (const auto& t : manifest.at("tensors")) {
            const auto offset = t.at("offset").get<std::size_t>();
            const auto nbytes = t.at("nbytes").get<std::size_t>();
            if (offset + nbytes > payload.size()) throw corrupt("tensor outside payload");
            auto shape = t.at("shape").get<std::vector<int64_t>>();
            auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(t.at("dtype"))));
            if (static_cast<std::size_t>(tensor.nbytes()) != nbytes) throw corrupt("tensor size mismatch");
            std::memcpy(tensor.data_ptr(), payload.data() + offset, nbytes);
            snap.tensors.emplace(t.at("name").get<std::string>(), std::move(tensor));
        }
    } catch (const nlohmann::json::exception& e) {
        throw corrupt(e.what());
    } catch (const std::invalid_argument& e) {
        throw corrupt(e.what());
    }
    return snap;
}

}  // namespace voidseg::network
