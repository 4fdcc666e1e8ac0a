#pragma once

// Binary checkpoint, all integers little-endian:
//
//   "PCON" | u32 version (1) | u32 record count
//   record: u16 name length | name (UTF-8) | u8 rank | u32 dims[rank] | f32 data
//   u8 trailer flag (0 or 1)
//   trailer: u64 optimizer step | u64 completed epochs | u32 record count | records
//
// Parameter records are named "<layer>/<param>", e.g. "Conv_1/kernel"; the
// trailer holds one "<layer>/<param>/m" and one ".../v" record per parameter.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pconet/model.hpp"

namespace pconet {

inline constexpr char kCheckpointMagic[4] = {'P', 'C', 'O', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { Io, BadMagic, BadVersion, Truncated, Corrupt, ShapeMismatch };

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    CheckpointErrorKind kind() const { return kind_; }

private:
    CheckpointErrorKind kind_;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Optimizer moments in parameter order plus counters for resuming.
struct TrainingState {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    std::vector<Tensor> m, v;
};

struct Checkpoint {
    std::vector<NamedTensor> params;
    std::optional<TrainingState> state;
};

/// Record name for parameter `p` of layer `layer`.
std::string record_name(const std::string& layer, const std::string& param);

/// Parameters of `model` as named records.
Checkpoint snapshot(const Model& model);

/// Writes to a sibling temporary and renames over `path`.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
void save_checkpoint(const Model& model, const std::filesystem::path& path, const TrainingState* state = nullptr);

/// Parses a file without interpreting records. Throws CheckpointError.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies record values into `model`. The names and shapes must equal the
/// model's parameter table exactly (ShapeMismatch otherwise).
void apply_checkpoint(Model& model, const Checkpoint& ckpt);

/// A fresh PCONet carrying the saved parameters; `state` receives the trailer
/// when present.
Model load_checkpoint(const std::filesystem::path& path, std::optional<TrainingState>* state = nullptr);

}  // namespace pconet
