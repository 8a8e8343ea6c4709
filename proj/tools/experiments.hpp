#pragma once

#include <string>

#include "config.hpp"

namespace renyiflow::cli {

int cmd_train(const RunConfig& cfg, const std::string& out_dir);
int cmd_two_regime(const RunConfig& cfg, const std::string& out_dir);
int cmd_poison(const RunConfig& cfg, const std::string& out_dir);
int cmd_fixedpoint(const RunConfig& cfg, const std::string& out_dir);
int cmd_dpo_toy(const RunConfig& cfg, const std::string& out_dir);

/// Seeded oracle suites: the exact identities, the inequality bounds, the
/// cumulant remainder and the shielding bound. corrupt_loss_sign is a harness
/// self-test hook that must make the suite fail.
int cmd_check(const RunConfig& cfg, const std::string& out_dir, bool corrupt_loss_sign);

}  // namespace renyiflow::cli
