#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mmcl/errors.hpp"
#include "mmcl/training.hpp"

namespace mmcl {

// Bad key or value; key() names the offending key.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& key, const std::string& what) : InvalidArgument(what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Flat `key = value` lines, `#` starts a comment.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);

// Applies one `key=value` assignment.
void apply_override(TrainConfig& cfg, std::string_view assignment);
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

// Every key, one per line, in a fixed order; parse_config inverts it.
std::string serialize_config(const TrainConfig& cfg);

const std::vector<std::string>& config_keys();

std::string format_double(double v);
std::string format_schedule(const std::vector<ScheduleEntry>& entries);
std::vector<ScheduleEntry> parse_schedule(std::string_view text);

}  // namespace mmcl
