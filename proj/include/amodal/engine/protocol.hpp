#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amodal/backend.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal::protocol {

// Directory protocol: the engine creates req-<id>/ holding request.json and
// the input tensors, hands the directory to the backend, and reads back
// response.json plus the output tensors named there.
inline constexpr const char* kVersion = "amodal-backend/1";
inline constexpr const char* kRequestFile = "request.json";
inline constexpr const char* kResponseFile = "response.json";

const std::vector<std::string>& known_ops();  // capabilities flow encode inpaint segment embed

struct Request {
  std::string id;
  std::string op;
  std::string prompt;
  double strength = 1.0;
  double guidance = 6.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // name -> file in the request directory
  nlohmann::json params = nlohmann::json::object();

  bool operator==(const Request&) const = default;
};

struct Response {
  std::string id;
  std::string status = "ok";  // ok | error
  std::map<std::string, std::string> outputs;
  std::vector<std::string> capabilities;
  bool concurrent_safe = false;
  std::string error;
};

// Both validators throw Schema naming the offending field.
void validate_request(const nlohmann::json& j);
void validate_response(const nlohmann::json& j);

nlohmann::json to_json(const Request& r);
Request request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Response& r);
Response response_from_json(const nlohmann::json& j);

Request read_request(const std::filesystem::path& dir);
void write_request(const std::filesystem::path& dir, const Request& r);
Response read_response(const std::filesystem::path& dir);
void write_response(const std::filesystem::path& dir, const Response& r);

// A CompletionRequest laid out as an "inpaint" request directory. Reading it
// back reproduces the request exactly.
Request write_completion_request(const std::filesystem::path& dir, const CompletionRequest& req, const std::string& id);
CompletionRequest read_completion_request(const std::filesystem::path& dir);

// Content key of a request directory: the request without its id, with each
// input file replaced by its digest.
std::string request_key(const std::filesystem::path& dir);

// Timeout from AMODAL_TC_BACKEND_TIMEOUT (seconds) or 300 s.
std::chrono::milliseconds default_timeout();

// Hands one prepared request directory to a backend and returns once
// response.json exists.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void invoke(const std::filesystem::path& request_dir) = 0;
  virtual std::string describe() const = 0;
  // Identifies the backend build: executable digest, fixture index digest, ...
  virtual std::string digest() const { return ""; }
};

// Runs `<executable> <request_dir>`; stdout/stderr go to backend.log in the
// request directory. Killed after the timeout.
class ExecTransport : public Transport {
 public:
  ExecTransport(std::filesystem::path executable, std::chrono::milliseconds timeout);
  void invoke(const std::filesystem::path& request_dir) override;
  std::string describe() const override;
  std::string digest() const override;

 private:
  std::filesystem::path exe_;
  std::chrono::milliseconds timeout_;
};

// POSTs the request directory path as text/plain to a local endpoint.
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string url, std::chrono::milliseconds timeout);
  void invoke(const std::filesystem::path& request_dir) override;
  std::string describe() const override { return "http:" + url_; }

 private:
  std::string url_;
  std::string host_;
  int port_ = 80;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

// Replays recorded responses keyed by request_key().
class FixtureTransport : public Transport {
 public:
  explicit FixtureTransport(std::filesystem::path dir);
  void invoke(const std::filesystem::path& request_dir) override;
  std::string describe() const override { return "fixture:" + dir_.string(); }
  std::string digest() const override;

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> entries_;  // key -> response subdirectory
};

// Forwards to `inner` and stores every exchange as a fixture entry.
class RecordingTransport : public Transport {
 public:
  RecordingTransport(std::filesystem::path dir, std::unique_ptr<Transport> inner);
  void invoke(const std::filesystem::path& request_dir) override;
  std::string describe() const override;
  std::string digest() const override { return inner_->digest(); }

 private:
  std::filesystem::path dir_;
  std::unique_ptr<Transport> inner_;
  std::mutex mutex_;
  nlohmann::json index_;
};

// "exec:PATH" | "http://HOST:PORT/PATH" | "fixture:DIR" | "record:DIR::INNER"
std::unique_ptr<Transport> make_transport(const std::string& locator, std::chrono::milliseconds timeout);

struct CallResult {
  Response response;
  std::map<std::string, Tensor> outputs;
};

// Protocol client: writes request directories under `workdir`, invokes the
// transport, validates and loads the response.
class Client {
 public:
  Client(std::unique_ptr<Transport> transport, std::filesystem::path workdir, bool keep_requests = false);
  ~Client();

  CallResult call(Request request, const std::map<std::string, Tensor>& inputs);
  // "capabilities" handshake; cached.
  const Response& capabilities();
  void require(const std::string& op);

  std::string describe() const { return transport_->describe(); }
  std::string digest() const { return transport_->digest(); }

 private:
  std::unique_ptr<Transport> transport_;
  std::filesystem::path workdir_;
  bool keep_;
  bool owns_workdir_ = false;
  std::atomic<std::uint64_t> counter_{0};
  std::mutex mutex_;
  std::unique_ptr<Response> caps_;
};

// Backend interfaces over a Client. Calls are serialized unless the
// handshake declared the backend concurrent-safe.
class ExternalFlow : public FlowBackend {
 public:
  explicit ExternalFlow(std::shared_ptr<Client> client);
  FlowField flow(const FlowQuery& query) override;
  std::string describe() const override;

 private:
  std::shared_ptr<Client> client_;
  std::mutex mutex_;
};

class ExternalEncoder : public EncoderBackend {
 public:
  ExternalEncoder(std::shared_ptr<Client> client, int downscale);
  FeatureMap encode(const FeatureMap& image) override;
  int downscale() const override { return downscale_; }
  std::string describe() const override;

 private:
  std::shared_ptr<Client> client_;
  int downscale_;
  std::mutex mutex_;
};

class ExternalInpaint : public InpaintBackend {
 public:
  explicit ExternalInpaint(std::shared_ptr<Client> client);
  FeatureMap inpaint(const CompletionRequest& request) override;
  std::string describe() const override;

 private:
  std::shared_ptr<Client> client_;
  std::mutex mutex_;
};

class ExternalSegment : public SegmentBackend {
 public:
  explicit ExternalSegment(std::shared_ptr<Client> client);
  BinaryMask segment(const FeatureMap& image) override;
  std::string describe() const override;

 private:
  std::shared_ptr<Client> client_;
  std::mutex mutex_;
};

class ExternalEmbedder : public Embedder {
 public:
  explicit ExternalEmbedder(std::shared_ptr<Client> client);
  std::vector<double> embed_image(const FeatureMap& image) override;
  bool supports_text() const override { return true; }
  std::vector<double> embed_text(const std::string& text) override;
  std::string describe() const override;

 private:
  std::shared_ptr<Client> client_;
  std::mutex mutex_;
};

// Reference backend answering every op with cheap deterministic stand-ins:
// zero flow, pooling encoder, mean-colour inpainting, threshold segmentation
// and the toy embedder. Writes response.json (an error record for bad
// requests) and returns the process exit code. Environment knobs for tests:
// AMODAL_STUB_DELAY_MS sleeps before answering, AMODAL_STUB_FAIL=<op> fails
// that op, AMODAL_STUB_OPS=<a,b,..> restricts the advertised capabilities.
int serve_reference(const std::filesystem::path& request_dir);

}  // namespace amodal::protocol
