// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "organ/fracture.hpp"
#include "organ/network.hpp"
#include "organ/training.hpp"

namespace organ {

// JSON round-trips for the three config structs.  Parsers reject unknown
// keys and name the offending key in the error.
std::string arch_to_json(const ArchConfig& a);
ArchConfig arch_from_json(const std::string& text);

std::string train_to_json(const TrainConfig& c);
TrainConfig train_from_json(const std::string& text);

std::string fracture_to_json(const FractureParams& p);
FractureParams fracture_from_json(const std::string& text);

// Reads a config file whose top level may hold "arch", "train" and
// "fracture" sections; missing sections keep their defaults.
struct RunConfig {
  ArchConfig arch;
  TrainConfig train;
  FractureParams fracture;
};
RunConfig run_config_from_file(const std::string& path);

}  // namespace organ
