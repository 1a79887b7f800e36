#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aal/config.hpp"
#include "aal/engine.hpp"

namespace httplib {
class Server;
}

namespace aal {

enum class SessionStatus { awaiting_labels, training, idle, finished };
std::string_view status_name(SessionStatus s);
std::optional<SessionStatus> parse_status(std::string_view s);

struct ServiceResponse {
  int code = 200;
  nlohmann::json body;
};

// Human-oracle sessions behind a JSON API. Each session wraps one ALDriver
// for the first configured seed; the pending batch is what the annotator sees.
class AnnotationService {
 public:
  struct Options {
    ConfigEntries defaults;               // keys a create request may override
    std::filesystem::path base_dir;       // relative paths in configs resolve here
    std::filesystem::path state_dir;      // empty: no persistence
    bool background_training = true;      // false: train inside the last submit
  };

  explicit AnnotationService(Options options);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  ServiceResponse create_session(const nlohmann::json& body);
  ServiceResponse get_batch(const std::string& id);
  ServiceResponse submit_labels(const std::string& id, const nlohmann::json& body);
  ServiceResponse get_status(const std::string& id);
  ServiceResponse get_curve(const std::string& id);

  // Blocks until the session is not training.
  void wait_until_settled(const std::string& id);

  void mount(httplib::Server& server);

 private:
  struct Session;

  Options options_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<const ExperimentData>> data_cache_;
  std::uint64_t next_id_ = 1;

  std::shared_ptr<Session> find(const std::string& id);
  std::shared_ptr<const ExperimentData> data_for(const RunConfig& config);
  void persist(const Session& s) const;
  void load_persisted();
  void train_pending(const std::shared_ptr<Session>& s);
  nlohmann::json status_json(const Session& s) const;
};

}  // namespace aal
