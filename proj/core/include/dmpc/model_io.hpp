#pragma once

#include "dmpc/model.hpp"

#include <string>

namespace dmpc {

/// JSON document layout:
/// {
///   "schema_version": 1,
///   "partition": {"state_dims": [...], "input_dims": [...]},
///   "A_blocks": [[i, j, [[row...], ...]], ...],   // nonzero blocks only
///   "B_blocks": [...],
///   "Q_blocks": [[[row...], ...], ...],           // one per subsystem
///   "R_blocks": [...],
///   "constraints": [{"Cx": [...], "dx": [...], "Cu": [...], "du": [...]}, ...]
/// }
/// Numbers round-trip exactly through the written decimal representation.
std::string model_to_json(const SystemModel& model);
SystemModel model_from_json(const std::string& text);

void save_model(const SystemModel& model, const std::string& path);
SystemModel load_model(const std::string& path);

} // namespace dmpc
