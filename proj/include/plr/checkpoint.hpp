// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <json.hpp>

#include "plr/nn.hpp"
#include "plr/sampling.hpp"

namespace plr::checkpoint {

inline constexpr const char* kFormatVersion = "plr-checkpoint/1";

struct Checkpoint {
    nn::NetworkParams params;
    sampling::Standardizer standardizer;
    nlohmann::json config; // canonical run configuration echo
    std::string config_hash;
    std::uint64_t seed = 0;
    long steps_completed = 0;
    double final_loss = 0.0;
};

nlohmann::json to_json(const Checkpoint& ckpt);
/// Throws InputError on a version mismatch or malformed content.
Checkpoint from_json(const nlohmann::json& j);

void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path);

} // namespace plr::checkpoint
