#pragma once

// Checkpoint file:
//   8 bytes   magic "NSSICKP1"
//   8 bytes   header length n, little-endian uint64
//   n bytes   JSON header: configs, seeds, tensor registry (name, shape) in file order
//   payload   every registered tensor as little-endian float64, row-major

#include "nssi/json_util.hpp"
#include "nssi/trainer.hpp"

#include <filesystem>

namespace nssi {

void save_checkpoint(const Model& model, const TrainConfig& train, const json& extra,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model model;
  TrainConfig train;
  json extra;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nssi
