#include "mmcl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace mmcl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "+inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || v.empty()) throw ConfigError(key, key + ": expected a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key, key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, key + ": expected a boolean, got '" + v + "'");
}

std::vector<Index> to_widths(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  if (v.empty() || v == "none") return out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto w = to_int<long long>(key, trim(item));
    if (w < 1) throw ConfigError(key, key + ": widths must be >= 1");
    out.push_back(static_cast<Index>(w));
  }
  return out;
}

std::string format_widths(const std::vector<Index>& w) {
  if (w.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

template <typename Fn>
auto wrap(const std::string& key, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, key + ": " + e.what());
  }
}

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define MMCL_DOUBLE(KEY, MEMBER)                                                \
  Field {                                                                       \
    KEY, [](const TrainConfig& c) { return format_double(c.MEMBER); },          \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); } \
  }
#define MMCL_INT(KEY, MEMBER, TYPE)                                                  \
  Field {                                                                            \
    KEY, [](const TrainConfig& c) { return std::to_string(c.MEMBER); },              \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = to_int<TYPE>(KEY, v); } \
  }
#define MMCL_BOOL(KEY, MEMBER)                                                    \
  Field {                                                                         \
    KEY, [](const TrainConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }, \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); }  \
  }
#define MMCL_STRING(KEY, MEMBER)                                         \
  Field {                                                                \
    KEY, [](const TrainConfig& c) { return c.MEMBER; },                  \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = v; }       \
  }
#define MMCL_ENUM(KEY, MEMBER, PARSE)                                                             \
  Field {                                                                                         \
    KEY, [](const TrainConfig& c) { return std::string(to_string(c.MEMBER)); },                   \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = wrap(KEY, [&] { return PARSE(v); }); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MMCL_STRING("data.source", data.source),
      MMCL_STRING("data.path", data.path),
      MMCL_INT("data.num_classes", data.num_classes, int),
      MMCL_INT("data.per_class", data.per_class, int),
      MMCL_INT("data.dim", data.dim, int),
      MMCL_DOUBLE("data.separation", data.separation),
      MMCL_DOUBLE("data.noise", data.noise),
      MMCL_INT("data.seed", data.seed, std::uint64_t),
      MMCL_DOUBLE("aug.noise_sigma", aug.noise_sigma),
      MMCL_DOUBLE("aug.dropout_p", aug.dropout_p),
      MMCL_DOUBLE("aug.scale_lo", aug.scale_lo),
      MMCL_DOUBLE("aug.scale_hi", aug.scale_hi),
      Field{"encoder.backbone", [](const TrainConfig& c) { return format_widths(c.backbone); },
            [](TrainConfig& c, const std::string& v) { c.backbone = to_widths("encoder.backbone", v); }},
      Field{"encoder.head", [](const TrainConfig& c) { return format_widths(c.head); },
            [](TrainConfig& c, const std::string& v) { c.head = to_widths("encoder.head", v); }},
      MMCL_INT("batch_size", batch_size, std::size_t),
      MMCL_INT("epochs", epochs, std::size_t),
      MMCL_DOUBLE("lr", lr),
      MMCL_DOUBLE("adam.beta1", adam_beta1),
      MMCL_DOUBLE("adam.beta2", adam_beta2),
      MMCL_DOUBLE("adam.epsilon", adam_epsilon),
      MMCL_ENUM("loss", loss, parse_loss_kind),
      MMCL_ENUM("kernel", kernel.kind, parse_kernel_kind),
      MMCL_DOUBLE("kernel.sigma_sq", kernel.sigma_sq),
      MMCL_DOUBLE("kernel.gamma", kernel.gamma),
      MMCL_DOUBLE("kernel.bias", kernel.bias),
      MMCL_DOUBLE("kernel.tanh_sign", kernel.tanh_sign),
      MMCL_DOUBLE("C", C),
      MMCL_DOUBLE("beta", beta),
      Field{"solver.step_size",
            [](const TrainConfig& c) { return c.solver.step_size ? format_double(*c.solver.step_size) : "auto"; },
            [](TrainConfig& c, const std::string& v) {
              if (v == "auto") {
                c.solver.step_size.reset();
              } else {
                c.solver.step_size = to_double("solver.step_size", v);
              }
            }},
      MMCL_INT("solver.max_iters", solver.max_iters, std::size_t),
      MMCL_DOUBLE("solver.tol", solver.tol),
      MMCL_BOOL("solver.nesterov", solver.nesterov),
      MMCL_BOOL("fn_correction", fn_correction),
      MMCL_ENUM("reduction", reduction, parse_reduction),
      MMCL_DOUBLE("temperature", temperature),
      Field{"schedule", [](const TrainConfig& c) { return format_schedule(c.schedules); },
            [](TrainConfig& c, const std::string& v) { c.schedules = wrap("schedule", [&] { return parse_schedule(v); }); }},
      MMCL_INT("seed", seed, std::uint64_t),
      MMCL_INT("eval.every", eval.every, int),
      MMCL_INT("eval.k", eval.k, int),
      MMCL_INT("eval.probe_epochs", eval.probe_epochs, int),
      MMCL_DOUBLE("eval.probe_lr", eval.probe_lr),
      MMCL_DOUBLE("eval.split", eval.split),
      MMCL_ENUM("eval.features", eval.features, parse_embedding_source),
      MMCL_INT("eval.seed", eval.seed, std::uint64_t),
      MMCL_STRING("output.metrics", metrics_path),
      MMCL_STRING("output.checkpoint", checkpoint_path),
  };
  return table;
}

#undef MMCL_DOUBLE
#undef MMCL_INT
#undef MMCL_BOOL
#undef MMCL_STRING
#undef MMCL_ENUM

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_schedule(const std::vector<ScheduleEntry>& entries) {
  if (entries.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    out += (i ? "," : "") + std::to_string(e.epoch) + ":" + e.field + (e.multiply ? "*=" : "=") + format_double(e.value);
  }
  return out;
}

// "25:C=10,75:sigma_sq*=10"
std::vector<ScheduleEntry> parse_schedule(std::string_view text) {
  std::vector<ScheduleEntry> out;
  const std::string all = trim(text);
  if (all.empty() || all == "none") return out;
  std::istringstream ss(all);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    const auto eq = item.find('=', colon == std::string::npos ? 0 : colon);
    if (colon == std::string::npos || eq == std::string::npos) {
      throw ConfigError("schedule", "schedule entry '" + item + "' is not epoch:field=value or epoch:field*=factor");
    }
    ScheduleEntry e;
    e.epoch = to_int<std::size_t>("schedule", trim(item.substr(0, colon)));
    std::string field = trim(item.substr(colon + 1, eq - colon - 1));
    if (!field.empty() && field.back() == '*') {
      e.multiply = true;
      field.pop_back();
    }
    e.field = trim(field);
    e.value = to_double("schedule", trim(item.substr(eq + 1)));
    out.push_back(std::move(e));
  }
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError(key, "unknown config key '" + key + "'");
}

void apply_override(TrainConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(trim(assignment), "override '" + std::string(assignment) + "' is not key=value");
  }
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(body, "line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(cfg, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace mmcl
