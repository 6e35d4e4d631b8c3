// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Binary checkpoint container:
//   "AVUCKPT\0" | u32 version | u64 header bytes | JSON header | f32 blobs
// The header echoes the run configuration and lists every tensor with its
// group (param, adam_m, adam_v), shape and byte offset into the blob area.

#ifndef AVU_CHECKPOINT_H_
#define AVU_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include <Eigen/Dense>

#include "avu/model.h"
#include "avu/nn.h"

namespace avu {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_json;  // RunConfig echo
  int epoch = 0;            // completed epochs
  std::int64_t step = 0;
  std::string rng_state;
  std::int64_t adam_steps = 0;
  std::map<std::string, Eigen::MatrixXf> params;
  std::map<std::string, Eigen::MatrixXf> adam_m;
  std::map<std::string, Eigen::MatrixXf> adam_v;
  std::set<std::string> trained_components;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters (and optimizer moments when `adam` is given).
Checkpoint capture(AvModel& model, const nn::Adam* adam);

// Loads every stored parameter into the model and returns the components
// with at least one tensor absent from the checkpoint. Shape mismatches
// raise ConfigError.
std::set<Component> restore_parameters(AvModel& model, const Checkpoint& c);
void restore_optimizer(nn::Adam& adam, const Checkpoint& c);

// Drops every tensor (parameters and moments) of one component.
void remove_component(Checkpoint& c, Component component);

}  // namespace avu

#endif  // AVU_CHECKPOINT_H_
