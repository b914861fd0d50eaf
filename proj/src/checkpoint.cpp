#include "udgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "udgan/image.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace udgan {

namespace {

constexpr char kMagic[8] = {'U', 'D', 'G', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_raw(out, kCheckpointVersion);
    write_raw(out, static_cast<std::int32_t>(ckpt.stage));
    write_raw(out, static_cast<std::uint64_t>(ckpt.config_json.size()));
    out.write(ckpt.config_json.data(),
              static_cast<std::streamsize>(ckpt.config_json.size()));
    write_raw(out, static_cast<std::uint64_t>(ckpt.tensors.size()));
    for (const auto& nt : ckpt.tensors) {
        write_raw(out, static_cast<std::uint32_t>(nt.name.size()));
        out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        const auto& shape = nt.tensor.shape();
        write_raw(out, static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) write_raw(out, static_cast<std::int64_t>(d));
        out.write(reinterpret_cast<const char*>(nt.tensor.data()),
                  static_cast<std::streamsize>(nt.tensor.numel() *
                                               sizeof(double)));
    }
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a checkpoint file: " + path.string());
    }
    const auto version = read_raw<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " +
                        std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.stage = static_cast<int>(read_raw<std::int32_t>(in));
    const auto json_len = read_raw<std::uint64_t>(in);
    ckpt.config_json.resize(json_len);
    in.read(ckpt.config_json.data(), static_cast<std::streamsize>(json_len));
    const auto count = read_raw<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto ndim = read_raw<std::uint32_t>(in);
        Shape shape(ndim);
        std::int64_t numel = 1;
        for (auto& d : shape) {
            d = read_raw<std::int64_t>(in);
            numel *= d;
        }
        std::vector<double> data(static_cast<std::size_t>(numel));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in) throw DataError("checkpoint: truncated tensor payload");
        ckpt.tensors.push_back(
            {std::move(name),
             Tensor::from_vector(std::move(shape), std::move(data))});
    }
    return ckpt;
}

Checkpoint snapshot_model(UdganModel& model, int stage,
                          const std::string& config_json) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.config_json = config_json;
    for (auto& nt : model.named_parameters()) {
        ckpt.tensors.push_back({nt.name, nt.tensor.detach()});
    }
    for (auto& nt : model.named_buffers()) {
        ckpt.tensors.push_back({nt.name, nt.tensor.detach()});
    }
    return ckpt;
}

void restore_model(UdganModel& model, const Checkpoint& ckpt) {
    std::map<std::string, const Tensor*> stored;
    for (const auto& nt : ckpt.tensors) stored[nt.name] = &nt.tensor;

    auto apply = [&](std::vector<nn::NamedTensor> targets) {
        for (auto& nt : targets) {
            auto it = stored.find(nt.name);
            if (it == stored.end()) {
                throw DataError("checkpoint missing tensor " + nt.name);
            }
            if (it->second->shape() != nt.tensor.shape()) {
                throw DataError("checkpoint shape mismatch for " + nt.name);
            }
            nt.tensor.values() = it->second->values();
            stored.erase(it);
        }
    };
    apply(model.named_parameters());
    apply(model.named_buffers());
    if (!stored.empty()) {
        throw DataError("checkpoint has unknown tensor " +
                        stored.begin()->first);
    }
}

}  // namespace udgan
