#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "udgan/networks.hpp"
#include "udgan/nn.hpp"

namespace udgan {

// Versioned binary container: parameter payload (params + buffers), the
// config snapshot it was trained under and the stage tag. The parameter
// payload round-trips bit-exactly.
struct Checkpoint {
    int stage = 0;
    std::string config_json;
    std::vector<nn::NamedTensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot_model(UdganModel& model, int stage,
                          const std::string& config_json);
// Strict by-name restore of params and buffers.
void restore_model(UdganModel& model, const Checkpoint& ckpt);

}  // namespace udgan
