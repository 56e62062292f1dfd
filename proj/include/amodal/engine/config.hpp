#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace amodal::engine {

struct RunConfig {
  int window = 7;
  int downscale = 8;
  double guidance = 6.0;
  double strength = 1.0;  // 1 covers the whole denoising schedule
  int dilation_px = 2;
  std::optional<double> alpha;  // nullopt: automatic
  double ratio_lo = 0.15;       // band is closed at both ends
  double ratio_hi = 0.70;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};  // ablation runs
  int workers = 1;
  int subsample_max = 5000;
  bool warp = true;
  bool attention = true;
  double failure_budget = 0.10;
  bool keep_requests = false;
  // role -> locator; roles: flow encoder inpaint segment embed
  std::map<std::string, std::string> backends{{"flow", "block:radius=4"},
                                              {"encoder", "toy"},
                                              {"inpaint", "oracle"},
                                              {"segment", "threshold:level=0.02"},
                                              {"embed", "toy"}};

  // Throws InvalidArgument naming the offending field.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& cfg);

// Overlays the keys present in `j` onto `base`. Unknown keys and wrongly
// typed values throw Schema naming the key.
RunConfig apply_config(const nlohmann::json& j, RunConfig base = {});

RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

const std::vector<std::string>& backend_roles();

}  // namespace amodal::engine
