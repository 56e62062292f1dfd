#include "amodal/engine/protocol.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "amodal/digest.hpp"
#include "amodal/error.hpp"

extern char** environ;

namespace amodal::protocol {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& known_ops() {
  static const std::vector<std::string> ops{"capabilities", "flow", "encode", "inpaint", "segment", "embed"};
  return ops;
}

// ---------------------------------------------------------------- schema

namespace {

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::Schema, what); }

void only_fields(const json& j, const char* doc, std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      schema(fmt::format("{}: unknown field '{}'", doc, it.key()));
    }
  }
}

const json& field(const json& j, const char* doc, const char* key) {
  if (!j.contains(key)) schema(fmt::format("{}: missing field '{}'", doc, key));
  return j.at(key);
}

void check_protocol(const json& j, const char* doc) {
  const json& p = field(j, doc, "protocol");
  if (!p.is_string() || p.get<std::string>() != kVersion) {
    schema(fmt::format("{}: field 'protocol' must be \"{}\"", doc, kVersion));
  }
  const json& id = field(j, doc, "id");
  if (!id.is_string() || id.get<std::string>().empty()) schema(fmt::format("{}: field 'id' must be a non-empty string", doc));
}

bool safe_name(const std::string& s) {
  return !s.empty() && s != "." && s != ".." && s.find('/') == std::string::npos && s.find('\\') == std::string::npos &&
         s != kRequestFile && s != kResponseFile;
}

void check_file_map(const json& j, const char* doc, const char* key) {
  if (!j.is_object()) schema(fmt::format("{}: field '{}' must be an object", doc, key));
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string() || !safe_name(it.value().get<std::string>())) {
      schema(fmt::format("{}: field '{}.{}' must be a plain file name", doc, key, it.key()));
    }
  }
}

}  // namespace

void validate_request(const json& j) {
  constexpr const char* doc = "request.json";
  if (!j.is_object()) schema("request.json: top level must be an object");
  only_fields(j, doc, {"protocol", "id", "op", "prompt", "strength", "guidance", "seed", "inputs", "params"});
  check_protocol(j, doc);
  const json& op = field(j, doc, "op");
  if (!op.is_string() ||
      std::find(known_ops().begin(), known_ops().end(), op.get<std::string>()) == known_ops().end()) {
    schema("request.json: field 'op' must be one of capabilities, flow, encode, inpaint, segment, embed");
  }
  if (!field(j, doc, "prompt").is_string()) schema("request.json: field 'prompt' must be a string");
  const json& strength = field(j, doc, "strength");
  if (!strength.is_number() || !(strength.get<double>() >= 0.0 && strength.get<double>() <= 1.0)) {
    schema("request.json: field 'strength' must be a number in [0,1]");
  }
  const json& guidance = field(j, doc, "guidance");
  if (!guidance.is_number() || !std::isfinite(guidance.get<double>())) schema("request.json: field 'guidance' must be a finite number");
  if (!field(j, doc, "seed").is_number_unsigned()) schema("request.json: field 'seed' must be a non-negative integer");
  check_file_map(field(j, doc, "inputs"), doc, "inputs");
  if (!field(j, doc, "params").is_object()) schema("request.json: field 'params' must be an object");
}

void validate_response(const json& j) {
  constexpr const char* doc = "response.json";
  if (!j.is_object()) schema("response.json: top level must be an object");
  only_fields(j, doc, {"protocol", "id", "status", "outputs", "capabilities", "concurrent_safe", "error"});
  check_protocol(j, doc);
  const json& status = field(j, doc, "status");
  if (!status.is_string() || (status.get<std::string>() != "ok" && status.get<std::string>() != "error")) {
    schema("response.json: field 'status' must be \"ok\" or \"error\"");
  }
  const bool ok = status.get<std::string>() == "ok";
  if (ok) check_file_map(field(j, doc, "outputs"), doc, "outputs");
  else if (j.contains("outputs")) check_file_map(j.at("outputs"), doc, "outputs");
  if (j.contains("capabilities")) {
    const json& caps = j.at("capabilities");
    if (!caps.is_array()) schema("response.json: field 'capabilities' must be an array");
    for (const auto& c : caps) {
      if (!c.is_string() ||
          std::find(known_ops().begin(), known_ops().end(), c.get<std::string>()) == known_ops().end()) {
        schema("response.json: field 'capabilities' holds an unknown op");
      }
    }
  }
  if (j.contains("concurrent_safe") && !j.at("concurrent_safe").is_boolean()) {
    schema("response.json: field 'concurrent_safe' must be a boolean");
  }
  if (!ok && (!j.contains("error") || !j.at("error").is_string())) {
    schema("response.json: field 'error' is required when status is \"error\"");
  }
  if (j.contains("error") && !j.at("error").is_string()) schema("response.json: field 'error' must be a string");
}

json to_json(const Request& r) {
  json j;
  j["protocol"] = kVersion;
  j["id"] = r.id;
  j["op"] = r.op;
  j["prompt"] = r.prompt;
  j["strength"] = r.strength;
  j["guidance"] = r.guidance;
  j["seed"] = r.seed;
  j["inputs"] = r.inputs;
  j["params"] = r.params;
  return j;
}

Request request_from_json(const json& j) {
  validate_request(j);
  Request r;
  r.id = j.at("id").get<std::string>();
  r.op = j.at("op").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.strength = j.at("strength").get<double>();
  r.guidance = j.at("guidance").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  r.params = j.at("params");
  return r;
}

json to_json(const Response& r) {
  json j;
  j["protocol"] = kVersion;
  j["id"] = r.id;
  j["status"] = r.status;
  j["outputs"] = r.outputs;
  if (!r.capabilities.empty()) j["capabilities"] = r.capabilities;
  if (r.concurrent_safe) j["concurrent_safe"] = true;
  if (!r.error.empty() || r.status == "error") j["error"] = r.error;
  return j;
}

Response response_from_json(const json& j) {
  validate_response(j);
  Response r;
  r.id = j.at("id").get<std::string>();
  r.status = j.at("status").get<std::string>();
  if (j.contains("outputs")) r.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  if (j.contains("capabilities")) r.capabilities = j.at("capabilities").get<std::vector<std::string>>();
  r.concurrent_safe = j.value("concurrent_safe", false);
  r.error = j.value("error", "");
  return r;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Protocol, fmt::format("missing {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, fmt::format("{}: {}", path.filename().string(), e.what()));
  }
}

void write_json(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

}  // namespace

Request read_request(const fs::path& dir) { return request_from_json(read_json(dir / kRequestFile)); }

void write_request(const fs::path& dir, const Request& r) {
  const json j = to_json(r);
  validate_request(j);
  write_json(dir / kRequestFile, j);
}

Response read_response(const fs::path& dir) { return response_from_json(read_json(dir / kResponseFile)); }

void write_response(const fs::path& dir, const Response& r) {
  const json j = to_json(r);
  validate_response(j);
  write_json(dir / kResponseFile, j);
}

Request write_completion_request(const fs::path& dir, const CompletionRequest& req, const std::string& id) {
  fs::create_directories(dir);
  Request r;
  r.id = id;
  r.op = "inpaint";
  r.prompt = req.prompt;
  r.strength = req.strength;
  r.guidance = req.guidance;
  r.seed = req.seed;
  r.params = {{"frame", req.frame}};
  write_txf(req.occludee_image, dir / "image.txf");
  r.inputs["image"] = "image.txf";
  write_txf(req.occlusion_mask, dir / "mask.txf");
  r.inputs["mask"] = "mask.txf";
  if (!req.conditioning.empty()) {
    write_txf(req.conditioning, dir / "conditioning.txf");
    r.inputs["conditioning"] = "conditioning.txf";
  }
  write_request(dir, r);
  return r;
}

CompletionRequest read_completion_request(const fs::path& dir) {
  const Request r = read_request(dir);
  if (r.op != "inpaint") throw Error(ErrorCode::Protocol, fmt::format("expected an inpaint request, got '{}'", r.op));
  auto input = [&](const char* name) -> fs::path {
    const auto it = r.inputs.find(name);
    if (it == r.inputs.end()) throw Error(ErrorCode::Protocol, fmt::format("inpaint request lacks input '{}'", name));
    return dir / it->second;
  };
  CompletionRequest c;
  c.frame = r.params.value("frame", 0);
  c.prompt = r.prompt;
  c.strength = r.strength;
  c.guidance = r.guidance;
  c.seed = r.seed;
  c.occludee_image = read_feature_map(input("image"));
  c.occlusion_mask = read_binary_mask(input("mask"));
  if (r.inputs.count("conditioning")) c.conditioning = read_feature_map(input("conditioning"));
  return c;
}

std::string request_key(const fs::path& dir) {
  json j = read_json(dir / kRequestFile);
  validate_request(j);
  j.erase("id");
  json digests = json::object();
  for (auto it = j["inputs"].begin(); it != j["inputs"].end(); ++it) {
    digests[it.key()] = file_digest(dir / it.value().get<std::string>());
  }
  j["inputs"] = digests;
  return sha256_hex(j.dump());
}

std::chrono::milliseconds default_timeout() {
  if (const char* env = std::getenv("AMODAL_TC_BACKEND_TIMEOUT")) {
    char* end = nullptr;
    const double s = std::strtod(env, &end);
    if (end == env || *end != '\0' || !(s > 0) || !std::isfinite(s)) {
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("AMODAL_TC_BACKEND_TIMEOUT must be a positive number of seconds, got '{}'", env));
    }
    return std::chrono::milliseconds(static_cast<long long>(std::llround(s * 1000.0)));
  }
  return std::chrono::seconds(300);
}

// ---------------------------------------------------------------- transports

namespace {

std::string log_tail(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  if (s.size() > 400) s = "..." + s.substr(s.size() - 400);
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string response_error(const fs::path& dir) {
  try {
    const Response r = read_response(dir);
    if (r.status == "error") return r.error;
  } catch (const Error&) {
  }
  return "";
}

}  // namespace

ExecTransport::ExecTransport(fs::path executable, std::chrono::milliseconds timeout)
    : exe_(std::move(executable)), timeout_(timeout) {
  if (!fs::exists(exe_)) throw Error(ErrorCode::Backend, fmt::format("backend executable {} not found", exe_.string()));
}

void ExecTransport::invoke(const fs::path& request_dir) {
  const fs::path log = request_dir / "backend.log";
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, 1, 2);
  const std::string exe = exe_.string();
  const std::string arg = request_dir.string();
  char* argv[] = {const_cast<char*>(exe.c_str()), const_cast<char*>(arg.c_str()), nullptr};
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv, environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw Error(ErrorCode::Backend, fmt::format("cannot start {}: {}", exe, std::strerror(rc)));

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  auto pause = std::chrono::milliseconds(1);
  int status = 0;
  while (true) {
    const pid_t done = waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (done < 0) throw Error(ErrorCode::Backend, fmt::format("waitpid failed for {}", exe));
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw Error(ErrorCode::BackendTimeout,
                  fmt::format("{} exceeded the {} ms timeout on {}", exe, timeout_.count(), request_dir.filename().string()));
    }
    std::this_thread::sleep_for(pause);
    pause = std::min(pause * 2, std::chrono::milliseconds(50));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    std::string why = response_error(request_dir);
    if (why.empty()) why = log_tail(log);
    throw Error(ErrorCode::Backend,
                fmt::format("{} failed ({}): {}", exe,
                            WIFEXITED(status) ? fmt::format("exit {}", WEXITSTATUS(status)) : std::string("signal"), why));
  }
}

std::string ExecTransport::describe() const { return "exec:" + exe_.string(); }
std::string ExecTransport::digest() const { return file_digest(exe_); }

HttpTransport::HttpTransport(std::string url, std::chrono::milliseconds timeout) : url_(std::move(url)), timeout_(timeout) {
  static const std::regex pattern(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url_, m, pattern)) throw Error(ErrorCode::InvalidArgument, fmt::format("bad backend url '{}'", url_));
  host_ = m[1];
  port_ = m[2].matched ? std::stoi(m[2]) : 80;
  path_ = m[3].matched ? std::string(m[3]) : "/";
}

void HttpTransport::invoke(const fs::path& request_dir) {
  httplib::Client cli(host_, port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  const auto res = cli.Post(path_, fs::absolute(request_dir).string(), "text/plain");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorCode::BackendTimeout, fmt::format("{}: no answer within {} ms", url_, timeout_.count()));
    }
    throw Error(ErrorCode::Backend, fmt::format("{}: {}", url_, httplib::to_string(err)));
  }
  if (res->status != 200) {
    std::string why = response_error(request_dir);
    if (why.empty()) why = res->body;
    throw Error(ErrorCode::Backend, fmt::format("{}: HTTP {}: {}", url_, res->status, why));
  }
}

FixtureTransport::FixtureTransport(fs::path dir) : dir_(std::move(dir)) {
  const json index = read_json(dir_ / "index.json");
  if (index.value("protocol", "") != kVersion) schema("fixture index.json: field 'protocol' mismatch");
  for (const auto& e : index.value("entries", json::array())) {
    if (!e.contains("key") || !e.contains("response")) schema("fixture index.json: entry needs 'key' and 'response'");
    entries_[e.at("key").get<std::string>()] = e.at("response").get<std::string>();
  }
}

void FixtureTransport::invoke(const fs::path& request_dir) {
  const std::string key = request_key(request_dir);
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    const Request r = read_request(request_dir);
    throw Error(ErrorCode::Backend, fmt::format("fixture {} has no recording for this '{}' request", dir_.string(), r.op));
  }
  const fs::path src = dir_ / it->second;
  Response resp = read_response(src);
  for (const auto& [name, file] : resp.outputs) {
    fs::copy_file(src / file, request_dir / file, fs::copy_options::overwrite_existing);
  }
  resp.id = read_request(request_dir).id;
  write_response(request_dir, resp);
}

std::string FixtureTransport::digest() const { return file_digest(dir_ / "index.json"); }

RecordingTransport::RecordingTransport(fs::path dir, std::unique_ptr<Transport> inner)
    : dir_(std::move(dir)), inner_(std::move(inner)) {
  fs::create_directories(dir_);
  if (fs::exists(dir_ / "index.json")) {
    index_ = read_json(dir_ / "index.json");
  } else {
    index_ = {{"protocol", kVersion}, {"entries", json::array()}};
  }
}

void RecordingTransport::invoke(const fs::path& request_dir) {
  inner_->invoke(request_dir);
  const std::string key = request_key(request_dir);
  const Response resp = read_response(request_dir);
  const Request req = read_request(request_dir);
  std::lock_guard lock(mutex_);
  for (const auto& e : index_["entries"]) {
    if (e["key"] == key) return;
  }
  const std::string sub = fmt::format("resp-{:06d}", index_["entries"].size());
  fs::create_directories(dir_ / sub);
  for (const auto& [name, file] : resp.outputs) {
    fs::copy_file(request_dir / file, dir_ / sub / file, fs::copy_options::overwrite_existing);
  }
  write_response(dir_ / sub, resp);
  index_["entries"].push_back({{"key", key}, {"op", req.op}, {"response", sub}});
  write_json(dir_ / "index.json", index_);
}

std::string RecordingTransport::describe() const { return fmt::format("record:{}::{}", dir_.string(), inner_->describe()); }

std::unique_ptr<Transport> make_transport(const std::string& locator, std::chrono::milliseconds timeout) {
  if (locator.rfind("exec:", 0) == 0) return std::make_unique<ExecTransport>(locator.substr(5), timeout);
  if (locator.rfind("http://", 0) == 0) return std::make_unique<HttpTransport>(locator, timeout);
  if (locator.rfind("fixture:", 0) == 0) return std::make_unique<FixtureTransport>(locator.substr(8));
  if (locator.rfind("record:", 0) == 0) {
    const std::string rest = locator.substr(7);
    const auto sep = rest.find("::");
    if (sep == std::string::npos) throw Error(ErrorCode::InvalidArgument, "record locator needs 'record:DIR::INNER'");
    return std::make_unique<RecordingTransport>(rest.substr(0, sep), make_transport(rest.substr(sep + 2), timeout));
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown backend locator '{}'", locator));
}

// ---------------------------------------------------------------- client

namespace {

fs::path fresh_workdir() {
  std::random_device rd;
  const fs::path p = fs::temp_directory_path() / fmt::format("amodal-req-{}-{:08x}", getpid(), rd());
  fs::create_directories(p);
  return p;
}

Tensor load_output(const fs::path& path) {
  return read_tensor(path);
}

}  // namespace

Client::Client(std::unique_ptr<Transport> transport, fs::path workdir, bool keep_requests)
    : transport_(std::move(transport)), workdir_(std::move(workdir)), keep_(keep_requests) {
  if (workdir_.empty()) {
    workdir_ = fresh_workdir();
    owns_workdir_ = true;
  } else {
    fs::create_directories(workdir_);
  }
}

Client::~Client() {
  if (owns_workdir_ && !keep_) {
    std::error_code ec;
    fs::remove_all(workdir_, ec);
  }
}

CallResult Client::call(Request request, const std::map<std::string, Tensor>& inputs) {
  request.id = fmt::format("{:06d}", counter_.fetch_add(1));
  const fs::path dir = workdir_ / ("req-" + request.id);
  fs::remove_all(dir);
  fs::create_directories(dir);
  request.inputs.clear();
  for (const auto& [name, tensor] : inputs) {
    const std::string file = name + ".txf";
    write_tensor(tensor, dir / file);
    request.inputs[name] = file;
  }
  write_request(dir, request);
  transport_->invoke(dir);

  CallResult out;
  try {
    out.response = read_response(dir);
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("{} ({} request): {}", describe(), request.op, e.what()));
  }
  if (out.response.id != request.id) {
    throw Error(ErrorCode::Protocol, fmt::format("{}: response id '{}' does not match request '{}'", describe(),
                                                 out.response.id, request.id));
  }
  if (out.response.status == "error") {
    throw Error(ErrorCode::Backend, fmt::format("{} ({}): {}", describe(), request.op, out.response.error));
  }
  for (const auto& [name, file] : out.response.outputs) out.outputs[name] = load_output(dir / file);
  if (!keep_) fs::remove_all(dir);
  return out;
}

const Response& Client::capabilities() {
  std::lock_guard lock(mutex_);
  if (!caps_) {
    Request r;
    r.op = "capabilities";
    caps_ = std::make_unique<Response>(call(r, {}).response);
  }
  return *caps_;
}

void Client::require(const std::string& op) {
  const auto& caps = capabilities().capabilities;
  if (std::find(caps.begin(), caps.end(), op) == caps.end()) {
    throw Error(ErrorCode::MissingCapability, fmt::format("{} does not offer '{}'", describe(), op));
  }
}

// ---------------------------------------------------------------- adapters

namespace {

const Tensor& output(const CallResult& r, const char* name, const std::string& who) {
  const auto it = r.outputs.find(name);
  if (it == r.outputs.end()) throw Error(ErrorCode::Protocol, fmt::format("{}: response lacks output '{}'", who, name));
  return it->second;
}

// Locks unless the backend declared itself concurrent-safe.
class MaybeLock {
 public:
  MaybeLock(Client& c, std::mutex& m) : lock_(m, std::defer_lock) {
    if (!c.capabilities().concurrent_safe) lock_.lock();
  }

 private:
  std::unique_lock<std::mutex> lock_;
};

}  // namespace

ExternalFlow::ExternalFlow(std::shared_ptr<Client> client) : client_(std::move(client)) { client_->require("flow"); }

FlowField ExternalFlow::flow(const FlowQuery& q) {
  if (!q.source_image || !q.target_image) throw Error(ErrorCode::InvalidArgument, "external flow needs both images");
  MaybeLock lock(*client_, mutex_);
  Request r;
  r.op = "flow";
  r.params = {{"source", q.source}, {"target", q.target}};
  const auto res = client_->call(r, {{"source", to_tensor(*q.source_image)}, {"target", to_tensor(*q.target_image)}});
  FlowField f = to_flow_field(output(res, "flow", describe()));
  if (f.height() != q.target_image->height() || f.width() != q.target_image->width()) {
    throw Error(ErrorCode::DimensionMismatch, fmt::format("{}: flow dims differ from the image", describe()));
  }
  return f;
}

std::string ExternalFlow::describe() const { return "external-flow(" + client_->describe() + ")"; }

ExternalEncoder::ExternalEncoder(std::shared_ptr<Client> client, int downscale)
    : client_(std::move(client)), downscale_(downscale) {
  client_->require("encode");
}

FeatureMap ExternalEncoder::encode(const FeatureMap& image) {
  MaybeLock lock(*client_, mutex_);
  Request r;
  r.op = "encode";
  r.params = {{"downscale", downscale_}};
  const auto res = client_->call(r, {{"image", to_tensor(image)}});
  FeatureMap z = to_feature_map(output(res, "latent", describe()));
  if (z.height() * downscale_ != image.height() || z.width() * downscale_ != image.width()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("{}: latent {}x{} does not match image {}x{} / {}", describe(), z.height(), z.width(),
                            image.height(), image.width(), downscale_));
  }
  return z;
}

std::string ExternalEncoder::describe() const { return "external-encoder(" + client_->describe() + ")"; }

ExternalInpaint::ExternalInpaint(std::shared_ptr<Client> client) : client_(std::move(client)) { client_->require("inpaint"); }

FeatureMap ExternalInpaint::inpaint(const CompletionRequest& req) {
  MaybeLock lock(*client_, mutex_);
  Request r;
  r.op = "inpaint";
  r.prompt = req.prompt;
  r.strength = req.strength;
  r.guidance = req.guidance;
  r.seed = req.seed;
  r.params = {{"frame", req.frame}};
  std::map<std::string, Tensor> inputs{{"image", to_tensor(req.occludee_image)}, {"mask", to_tensor(req.occlusion_mask)}};
  if (!req.conditioning.empty()) inputs["conditioning"] = to_tensor(req.conditioning);
  const auto res = client_->call(r, inputs);
  return to_feature_map(output(res, "image", describe()));
}

std::string ExternalInpaint::describe() const { return "external-inpaint(" + client_->describe() + ")"; }

ExternalSegment::ExternalSegment(std::shared_ptr<Client> client) : client_(std::move(client)) { client_->require("segment"); }

BinaryMask ExternalSegment::segment(const FeatureMap& image) {
  MaybeLock lock(*client_, mutex_);
  Request r;
  r.op = "segment";
  const auto res = client_->call(r, {{"image", to_tensor(image)}});
  const Tensor& t = output(res, "mask", describe());
  if (t.dtype == TxfDtype::Bool || t.dtype == TxfDtype::U8) {
    Tensor b = t;
    b.dtype = TxfDtype::Bool;
    return to_binary_mask(b);
  }
  const FeatureMap soft = to_feature_map(t);
  BinaryMask m(soft.height(), soft.width());
  for (int y = 0; y < soft.height(); ++y) {
    for (int x = 0; x < soft.width(); ++x) m.set(y, x, soft.at(y, x, 0) >= 0.5);
  }
  return m;
}

std::string ExternalSegment::describe() const { return "external-segment(" + client_->describe() + ")"; }

ExternalEmbedder::ExternalEmbedder(std::shared_ptr<Client> client) : client_(std::move(client)) { client_->require("embed"); }

std::vector<double> ExternalEmbedder::embed_image(const FeatureMap& image) {
  MaybeLock lock(*client_, mutex_);
  Request r;
  r.op = "embed";
  r.params = {{"kind", "image"}};
  const auto res = client_->call(r, {{"image", to_tensor(image)}});
  return output(res, "embedding", describe()).values;
}

std::vector<double> ExternalEmbedder::embed_text(const std::string& text) {
  MaybeLock lock(*client_, mutex_);
  Request r;
  r.op = "embed";
  r.prompt = text;
  r.params = {{"kind", "text"}};
  const auto res = client_->call(r, {});
  return output(res, "embedding", describe()).values;
}

std::string ExternalEmbedder::describe() const { return "external-embedder(" + client_->describe() + ")"; }

}  // namespace amodal::protocol
