#include "aal/service.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "aal/log.hpp"
#include "aal/report.hpp"

// must follow the Eigen includes
#include <httplib.h>

namespace aal {

using nlohmann::json;

std::string_view status_name(SessionStatus s) {
  switch (s) {
    case SessionStatus::awaiting_labels: return "awaiting_labels";
    case SessionStatus::training: return "training";
    case SessionStatus::idle: return "idle";
    case SessionStatus::finished: return "finished";
  }
  return "idle";
}

std::optional<SessionStatus> parse_status(std::string_view s) {
  for (auto st : {SessionStatus::awaiting_labels, SessionStatus::training, SessionStatus::idle,
                  SessionStatus::finished}) {
    if (status_name(st) == s) return st;
  }
  return std::nullopt;
}

struct AnnotationService::Session {
  std::string id;
  ConfigEntries entries;
  RunConfig config;
  std::shared_ptr<const ExperimentData> data;
  std::optional<ClusterSetup> clusters;
  std::optional<ALDriver> driver;
  std::map<std::size_t, std::vector<int>> submitted;  // pool position -> labels
  SessionStatus status = SessionStatus::awaiting_labels;
  std::string error;

  std::mutex mutex;
  std::condition_variable settled;
  std::thread worker;
};

namespace {

ServiceResponse error_response(int code, const std::string& message, const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  return {code, body};
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw ConfigError("", "unsupported value");
}

// JSON config value -> the text form the config parser accepts.
std::string entry_text(const std::string& key, const json& v) {
  try {
    if (v.is_array()) {
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + scalar_text(v[i]);
      return out;
    }
    return scalar_text(v);
  } catch (const ConfigError&) {
    throw ConfigError(key, "expected a string, number, boolean or list");
  }
}

json curve_json(const std::vector<CurvePoint>& curve) {
  json out = json::array();
  for (const auto& p : curve) {
    out.push_back({{"labeled", p.labeled}, {"dev_macro_f1", p.dev_f1}, {"epoch_seconds_mean", p.epoch_seconds_mean}});
  }
  return out;
}

std::string entries_text(const ConfigEntries& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

}  // namespace

AnnotationService::AnnotationService(Options options) : options_(std::move(options)) {
  if (!options_.state_dir.empty()) {
    std::filesystem::create_directories(options_.state_dir);
    load_persisted();
  }
}

AnnotationService::~AnnotationService() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(sessions_mutex_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  for (auto& s : all) {
    if (s->worker.joinable()) s->worker.join();
  }
}

std::shared_ptr<AnnotationService::Session> AnnotationService::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<const ExperimentData> AnnotationService::data_for(const RunConfig& c) {
  std::string key = c.corpus.string() + "|" + c.embeddings.string() + "|" + c.contextual.string() + "|" +
                    c.sentence_vectors.string() + "|" + std::string(mode_name(c.mode));
  for (const auto& t : c.held_out_topics) key += "|" + t;
  {
    std::lock_guard lock(sessions_mutex_);
    if (auto it = data_cache_.find(key); it != data_cache_.end()) return it->second;
  }
  auto data = std::make_shared<const ExperimentData>(load_experiment_data(c));
  std::lock_guard lock(sessions_mutex_);
  return data_cache_.emplace(key, data).first->second;
}

json AnnotationService::status_json(const Session& s) const {
  const ALState& st = s.driver->state();
  json j{{"id", s.id},
         {"status", std::string(status_name(s.status))},
         {"episode", st.episode},
         {"labeled", st.labeled.size()},
         {"unlabeled", st.unlabeled.size()},
         {"pending", s.driver->pending().size()},
         {"submitted", s.submitted.size()},
         {"curve", curve_json(st.curve)}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

void AnnotationService::persist(const Session& s) const {
  if (options_.state_dir.empty()) return;
  const ALState& st = s.driver->state();
  json labels = json::object();
  for (std::size_t p : st.labeled) labels[std::to_string(p)] = st.labels[p];
  json timings = json::array();
  for (const auto& t : st.timings) {
    timings.push_back({t.episode, t.labeled, t.epochs, t.epoch_seconds_mean, t.train_seconds, t.query_seconds});
  }
  json submitted = json::object();
  for (const auto& [p, l] : s.submitted) submitted[std::to_string(p)] = l;
  json entries = json::array();
  for (const auto& [k, v] : s.entries) entries.push_back({k, v});
  const json j{{"id", s.id},
               {"entries", entries},
               {"status", std::string(status_name(s.status))},
               {"error", s.error},
               {"seed", st.seed},
               {"labeled", st.labeled},
               {"labels", labels},
               {"episode", st.episode},
               {"curve", curve_json(st.curve)},
               {"timings", timings},
               {"pending", s.driver->pending()},
               {"done", s.driver->done()},
               {"submitted", submitted}};
  const auto tmp = options_.state_dir / (s.id + ".json.tmp");
  write_text(tmp, j.dump());
  std::filesystem::rename(tmp, options_.state_dir / (s.id + ".json"));
}

void AnnotationService::load_persisted() {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(options_.state_dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      const json j = json::parse(read_text(f));
      auto s = std::make_shared<Session>();
      s->id = j.at("id").get<std::string>();
      for (const auto& e : j.at("entries")) s->entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
      s->config = make_run_config(s->entries, options_.base_dir, true);
      s->config.text = entries_text(s->entries);
      s->data = data_for(s->config);
      s->clusters = experiment_clusters(s->config, *s->data);

      ALState st = initial_state(s->data->pool.size(), j.at("seed").get<std::uint64_t>());
      st.episode = j.at("episode").get<int>();
      std::set<std::size_t> labeled;
      for (const auto& p : j.at("labeled")) {
        const auto pos = p.get<std::size_t>();
        st.labeled.push_back(pos);
        st.labels.at(pos) = j.at("labels").at(std::to_string(pos)).get<std::vector<int>>();
        labeled.insert(pos);
      }
      st.unlabeled.clear();
      for (std::size_t p = 0; p < s->data->pool.size(); ++p) {
        if (!labeled.contains(p)) st.unlabeled.push_back(p);
      }
      for (const auto& c : j.at("curve")) {
        st.curve.push_back({c.at("labeled").get<std::size_t>(), c.at("dev_macro_f1").get<double>(),
                            c.at("epoch_seconds_mean").get<double>()});
      }
      for (const auto& t : j.at("timings")) {
        st.timings.push_back({t.at(0).get<int>(), t.at(1).get<std::size_t>(), t.at(2).get<int>(), t.at(3).get<double>(),
                              t.at(4).get<double>(), t.at(5).get<double>()});
      }
      s->driver.emplace(*s->data, LoopSettings::from(s->config, s->data->input_dim),
                        s->clusters ? &*s->clusters : nullptr, std::move(st),
                        j.at("pending").get<std::vector<std::size_t>>(), j.at("done").get<bool>());
      for (const auto& [k, v] : j.at("submitted").items()) s->submitted[std::stoull(k)] = v.get<std::vector<int>>();
      s->status = parse_status(j.at("status").get<std::string>()).value_or(SessionStatus::idle);
      s->error = j.value("error", "");
      {
        std::lock_guard lock(sessions_mutex_);
        sessions_[s->id] = s;
        if (s->id.size() > 1 && s->id[0] == 's') next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(s->id.substr(1)) + 1);
      }
      // Interrupted while training: the labels are all in, so train again.
      if (s->status == SessionStatus::training) train_pending(s);
    } catch (const std::exception& e) {
      log::warn("skipping session file " + f.string() + ": " + e.what());
    }
  }
}

ServiceResponse AnnotationService::create_session(const json& body) {
  if (!body.is_object()) return error_response(400, "request body must be a JSON object", "body");
  auto s = std::make_shared<Session>();
  try {
    ConfigEntries entries = options_.defaults;
    for (const auto& [key, value] : body.items()) {
      const std::string text = entry_text(key, value);
      auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == key; });
      if (it != entries.end()) it->second = text;
      else entries.emplace_back(key, text);
    }
    s->config = make_run_config(entries, options_.base_dir, true);
    s->entries = std::move(entries);
    s->config.text = entries_text(s->entries);
  } catch (const ConfigError& e) {
    return error_response(400, e.what(), e.key());
  }
  try {
    s->data = data_for(s->config);
    s->clusters = experiment_clusters(s->config, *s->data);
    s->driver.emplace(*s->data, LoopSettings::from(s->config, s->data->input_dim),
                      s->clusters ? &*s->clusters : nullptr, s->config.seeds.front());
  } catch (const ConfigError& e) {
    return error_response(400, e.what(), e.key());
  } catch (const std::exception& e) {
    return error_response(400, e.what());
  }
  s->status = SessionStatus::awaiting_labels;
  {
    std::lock_guard lock(sessions_mutex_);
    s->id = "s" + std::to_string(next_id_++);
    sessions_[s->id] = s;
  }
  std::lock_guard lock(s->mutex);
  persist(*s);
  return {200, {{"id", s->id}, {"status", std::string(status_name(s->status))}}};
}

ServiceResponse AnnotationService::get_batch(const std::string& id) {
  auto s = find(id);
  if (!s) return error_response(404, "unknown session", "session");
  std::lock_guard lock(s->mutex);
  if (s->status != SessionStatus::awaiting_labels) {
    auto r = error_response(409, "session is " + std::string(status_name(s->status)));
    r.body["status"] = std::string(status_name(s->status));
    return r;
  }
  const PoolData& pool = s->data->pool;
  json items = json::array();
  for (std::size_t p : s->driver->pending()) {
    items.push_back({{"id", pool.ids[p]},
                     {"topic", pool.topics[p]},
                     {"tokens", pool.tokens[p]},
                     {"submitted", s->submitted.contains(p)}});
  }
  return {200, {{"session", s->id}, {"episode", s->driver->state().episode}, {"items", items}}};
}

ServiceResponse AnnotationService::submit_labels(const std::string& id, const json& body) {
  auto s = find(id);
  if (!s) return error_response(404, "unknown session", "session");
  std::unique_lock lock(s->mutex);
  if (s->status != SessionStatus::awaiting_labels) {
    auto r = error_response(409, "session is " + std::string(status_name(s->status)));
    r.body["status"] = std::string(status_name(s->status));
    return r;
  }
  if (!body.is_object()) return error_response(422, "request body must be a JSON object", "body");
  if (!body.contains("id") || !body["id"].is_string()) return error_response(422, "missing sentence id", "id");
  const std::string sentence = body["id"].get<std::string>();
  const PoolData& pool = s->data->pool;
  const auto& pending = s->driver->pending();
  auto it = std::find_if(pending.begin(), pending.end(), [&](std::size_t p) { return pool.ids[p] == sentence; });
  if (it == pending.end()) return error_response(404, "sentence '" + sentence + "' is not in the pending batch", "id");
  const std::size_t pos = *it;
  if (s->submitted.contains(pos)) return error_response(409, "labels for '" + sentence + "' were already submitted", "id");
  if (!body.contains("labels") || !body["labels"].is_array()) {
    return error_response(422, "labels must be a list", "labels");
  }
  const json& labels = body["labels"];
  if (labels.size() != pool.tokens[pos].size()) {
    return error_response(422, "expected " + std::to_string(pool.tokens[pos].size()) + " labels, got " +
                                   std::to_string(labels.size()),
                          "labels");
  }
  std::vector<int> parsed;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    std::optional<Label> l;
    if (labels[t].is_string()) l = parse_label(labels[t].get<std::string>());
    if (!l) return error_response(422, "label " + std::to_string(t) + " must be PRO, CON or NON", "labels");
    parsed.push_back(label_index(*l));
  }
  s->submitted[pos] = std::move(parsed);
  const std::size_t remaining = pending.size() - s->submitted.size();
  if (remaining > 0) {
    persist(*s);
    return {200, {{"remaining", remaining}, {"status", std::string(status_name(s->status))}}};
  }
  s->status = SessionStatus::training;
  persist(*s);
  lock.unlock();
  train_pending(s);
  return {200, {{"remaining", 0}, {"status", std::string(status_name(SessionStatus::training))}}};
}

void AnnotationService::train_pending(const std::shared_ptr<Session>& s) {
  auto work = [this, s] {
    std::optional<ALDriver> next;
    std::string error;
    {
      std::lock_guard lock(s->mutex);
      next = *s->driver;
    }
    try {
      std::vector<std::vector<int>> labels;
      for (std::size_t p : next->pending()) labels.push_back(s->submitted.at(p));
      next->submit(std::move(labels));
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(s->mutex);
    if (error.empty()) {
      s->driver = std::move(next);
      s->submitted.clear();
      s->error.clear();
      s->status = s->driver->done() ? SessionStatus::finished : SessionStatus::awaiting_labels;
    } else {
      s->error = error;
      s->status = SessionStatus::idle;
      log::warn("session " + s->id + ": training failed: " + error);
    }
    try {
      persist(*s);
    } catch (const std::exception& e) {
      log::warn("session " + s->id + ": " + e.what());
    }
    s->settled.notify_all();
  };
  if (!options_.background_training) {
    work();
    return;
  }
  if (s->worker.joinable()) s->worker.join();
  s->worker = std::thread(work);
}

ServiceResponse AnnotationService::get_status(const std::string& id) {
  auto s = find(id);
  if (!s) return error_response(404, "unknown session", "session");
  std::lock_guard lock(s->mutex);
  return {200, status_json(*s)};
}

ServiceResponse AnnotationService::get_curve(const std::string& id) {
  auto s = find(id);
  if (!s) return error_response(404, "unknown session", "session");
  std::lock_guard lock(s->mutex);
  return {200, {{"session", s->id}, {"curve", curve_json(s->driver->state().curve)}}};
}

void AnnotationService::wait_until_settled(const std::string& id) {
  auto s = find(id);
  if (!s) return;
  std::unique_lock lock(s->mutex);
  s->settled.wait(lock, [&] { return s->status != SessionStatus::training; });
}

void AnnotationService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.code;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req) -> std::optional<json> {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::parse_error&) {
      return std::nullopt;
    }
  };
  server.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse(req);
    reply(res, body ? create_session(*body) : error_response(400, "malformed JSON", "body"));
  });
  server.Get(R"(/sessions/([^/]+)/batch)", [=, this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_batch(req.matches[1]));
  });
  server.Post(R"(/sessions/([^/]+)/labels)", [=, this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse(req);
    reply(res, body ? submit_labels(req.matches[1], *body) : error_response(422, "malformed JSON", "body"));
  });
  server.Get(R"(/sessions/([^/]+)/status)", [=, this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_status(req.matches[1]));
  });
  server.Get(R"(/sessions/([^/]+)/curve)", [=, this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_curve(req.matches[1]));
  });
}

}  // namespace aal
