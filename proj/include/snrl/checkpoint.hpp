// Binary checkpoint: "SNRL", format version, regime tag, layer tables, then
// little-endian float64 payload and a trailing CRC-32 of everything before it.
#ifndef SNRL_CHECKPOINT_HPP_
#define SNRL_CHECKPOINT_HPP_

#include <snrl/trainer.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace snrl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  Regime regime = Regime::kBaseline;
  TrainState state;
};

std::vector<std::uint8_t> encode_checkpoint(const TrainState& ts, Regime regime);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const TrainState& ts, Regime regime);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace snrl

#endif  // SNRL_CHECKPOINT_HPP_
