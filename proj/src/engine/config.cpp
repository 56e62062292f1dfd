#include "amodal/engine/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal::engine {

using nlohmann::json;

const std::vector<std::string>& backend_roles() {
  static const std::vector<std::string> roles{"flow", "encoder", "inpaint", "segment", "embed"};
  return roles;
}

void RunConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "config: " + what); };
  if (window < 1) bad("window must be >= 1");
  if (downscale < 1) bad("downscale must be >= 1");
  if (!std::isfinite(guidance)) bad("guidance must be finite");
  if (!(strength >= 0.0 && strength <= 1.0)) bad("strength must lie in [0,1]");
  if (dilation_px < 0) bad("dilation_px must be >= 0");
  if (alpha && !(*alpha > 0.0 && std::isfinite(*alpha))) bad("alpha must be positive or \"auto\"");
  if (!(ratio_lo >= 0.0 && ratio_hi <= 1.0 && ratio_lo < ratio_hi)) bad("ratio_band must satisfy 0 <= lo < hi <= 1");
  if (seeds.empty()) bad("seeds must not be empty");
  if (workers < 1) bad("workers must be >= 1");
  if (subsample_max < 3) bad("subsample_max must be >= 3");
  if (!(failure_budget >= 0.0 && failure_budget <= 1.0)) bad("failure_budget must lie in [0,1]");
  for (const auto& [role, locator] : backends) {
    if (std::find(backend_roles().begin(), backend_roles().end(), role) == backend_roles().end()) {
      bad(fmt::format("unknown backend role '{}'", role));
    }
    if (locator.empty()) bad(fmt::format("backend '{}' has an empty locator", role));
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["window"] = c.window;
  j["downscale"] = c.downscale;
  j["guidance"] = c.guidance;
  j["strength"] = c.strength;
  j["dilation_px"] = c.dilation_px;
  j["alpha"] = c.alpha ? json(*c.alpha) : json("auto");
  j["ratio_band"] = {c.ratio_lo, c.ratio_hi};
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["workers"] = c.workers;
  j["subsample_max"] = c.subsample_max;
  j["warp"] = c.warp;
  j["attention"] = c.attention;
  j["failure_budget"] = c.failure_budget;
  j["keep_requests"] = c.keep_requests;
  j["backends"] = c.backends;
  return j;
}

namespace {

template <typename T>
T get(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Schema, fmt::format("config: field '{}' has the wrong type", key));
  }
}

int get_int(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw Error(ErrorCode::Schema, fmt::format("config: field '{}' must be an integer", key));
  return j.get<int>();
}

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw Error(ErrorCode::Schema, fmt::format("config: field '{}' must be a number", key));
  return j.get<double>();
}

bool get_bool(const json& j, const std::string& key) {
  if (!j.is_boolean()) throw Error(ErrorCode::Schema, fmt::format("config: field '{}' must be a boolean", key));
  return j.get<bool>();
}

std::uint64_t get_seed(const json& j, const std::string& key) {
  if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw Error(ErrorCode::Schema, fmt::format("config: field '{}' must be a non-negative integer", key));
  }
  return j.get<std::uint64_t>();
}

}  // namespace

RunConfig apply_config(const json& j, RunConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::Schema, "config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "window") c.window = get_int(v, k);
    else if (k == "downscale") c.downscale = get_int(v, k);
    else if (k == "guidance") c.guidance = get_number(v, k);
    else if (k == "strength") c.strength = get_number(v, k);
    else if (k == "dilation_px") c.dilation_px = get_int(v, k);
    else if (k == "alpha") {
      if (v.is_string() && v.get<std::string>() == "auto") c.alpha.reset();
      else c.alpha = get_number(v, k);
    } else if (k == "ratio_band") {
      if (!v.is_array() || v.size() != 2) throw Error(ErrorCode::Schema, "config: field 'ratio_band' must be [lo, hi]");
      c.ratio_lo = get_number(v[0], k);
      c.ratio_hi = get_number(v[1], k);
    } else if (k == "seed") c.seed = get_seed(v, k);
    else if (k == "seeds") {
      if (!v.is_array()) throw Error(ErrorCode::Schema, "config: field 'seeds' must be an array");
      c.seeds.clear();
      for (const auto& s : v) c.seeds.push_back(get_seed(s, k));
    } else if (k == "workers") c.workers = get_int(v, k);
    else if (k == "subsample_max") c.subsample_max = get_int(v, k);
    else if (k == "warp") c.warp = get_bool(v, k);
    else if (k == "attention") c.attention = get_bool(v, k);
    else if (k == "failure_budget") c.failure_budget = get_number(v, k);
    else if (k == "keep_requests") c.keep_requests = get_bool(v, k);
    else if (k == "backends") {
      if (!v.is_object()) throw Error(ErrorCode::Schema, "config: field 'backends' must be an object");
      for (auto b = v.begin(); b != v.end(); ++b) c.backends[b.key()] = get<std::string>(b.value(), "backends." + b.key());
    } else {
      throw Error(ErrorCode::Schema, fmt::format("config: unknown field '{}'", k));
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read config {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, fmt::format("{}: {}", path.string(), e.what()));
  }
  return apply_config(j, std::move(base));
}

}  // namespace amodal::engine
