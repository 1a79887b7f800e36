#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <map>
#include <thread>

#include <json.hpp>

#include "aal/report.hpp"
#include "aal/service.hpp"
#include "engine_fixture.hpp"

// must follow the Eigen includes
#include <httplib.h>

using namespace aal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kDefaults =
    "corpus = corpus.tsv\nembeddings = embeddings.txt\nstrategy = uncertainty-entropy\n"
    "batch_size = 32\nstart_size = 32\nmax_epochs = 4\nmin_epochs = 2\npatience = 2\nlearning_rate = 0.02\n"
    "seeds = 3\n";

struct World {
  fixture::TempDir dir{"service"};
  RunConfig config;
  ExperimentData data;
  std::map<std::string, std::size_t> position;

  World() {
    fixture::write_small_corpus(dir.path);
    config = parse_run_config(kDefaults, dir.path);
    data = load_experiment_data(config);
    for (std::size_t p = 0; p < data.pool.size(); ++p) position[data.pool.ids[p]] = p;
  }

  AnnotationService::Options options(bool background = false, fs::path state = {}) const {
    AnnotationService::Options o;
    o.defaults = parse_config_entries(kDefaults);
    o.base_dir = dir.path;
    o.state_dir = std::move(state);
    o.background_training = background;
    return o;
  }

  json gold(const std::string& id) const {
    json labels = json::array();
    for (int l : data.pool.gold[position.at(id)]) labels.push_back(std::string(label_name(kAllLabels[l])));
    return {{"id", id}, {"labels", labels}};
  }

  ALState reference(std::optional<std::size_t> budget) const {
    RunConfig c = config;
    c.budget = budget;
    return run_seed(data, LoopSettings::from(c, data.input_dim), nullptr, 3);
  }
};

World& world() {
  static World w;
  return w;
}

std::vector<std::string> batch_ids(const json& batch) {
  std::vector<std::string> ids;
  for (const auto& item : batch["items"]) ids.push_back(item["id"]);
  return ids;
}

void check_same_curve(const json& curve, const ALState& ref) {
  REQUIRE(curve.size() == ref.curve.size());
  for (std::size_t k = 0; k < ref.curve.size(); ++k) {
    CHECK(curve[k]["labeled"].get<std::size_t>() == ref.curve[k].labeled);
    CHECK(curve[k]["dev_macro_f1"].get<double>() == ref.curve[k].dev_f1);
  }
}

// Labels a whole batch with gold; returns the ids in batch order.
std::vector<std::string> label_batch(AnnotationService& svc, const std::string& session) {
  const auto batch = svc.get_batch(session);
  REQUIRE(batch.code == 200);
  const auto ids = batch_ids(batch.body);
  for (const auto& id : ids) REQUIRE(svc.submit_labels(session, world().gold(id)).code == 200);
  svc.wait_until_settled(session);
  return ids;
}

}  // namespace

TEST_CASE("create validates the config") {
  auto& w = world();
  AnnotationService svc(w.options());
  auto r = svc.create_session(json::array());
  CHECK(r.code == 400);
  CHECK(r.body["field"] == "body");

  r = svc.create_session({{"strategy", "psychic"}});
  CHECK(r.code == 400);
  CHECK(r.body["field"] == "strategy");

  r = svc.create_session({{"flavour", 1}});
  CHECK(r.code == 400);
  CHECK(r.body["field"] == "flavour");

  r = svc.create_session({{"batch_size", 0}});
  CHECK(r.code == 400);
  CHECK(r.body["field"] == "batch_size");

  const auto a = svc.create_session(json::object());
  const auto b = svc.create_session({{"budget", 64}, {"seeds", json::array({5})}});
  REQUIRE(a.code == 200);
  REQUIRE(b.code == 200);
  CHECK(a.body["status"] == "awaiting_labels");
  CHECK(a.body["id"] != b.body["id"]);
}

TEST_CASE("batches show text but never gold labels") {
  auto& w = world();
  AnnotationService svc(w.options());
  const std::string id = svc.create_session(json::object()).body["id"];
  const auto batch = svc.get_batch(id);
  REQUIRE(batch.code == 200);
  CHECK(batch.body["items"].size() == 32);
  const std::string text = batch.body.dump();
  CHECK(text.find("gold") == std::string::npos);
  CHECK(text.find("\"PRO\"") == std::string::npos);
  CHECK(text.find("\"CON\"") == std::string::npos);
  for (const auto& item : batch.body["items"]) {
    CHECK(item.contains("tokens"));
    CHECK(item.contains("topic"));
    CHECK(item["submitted"] == false);
    CHECK(item.size() == 4);
  }
  CHECK(svc.get_batch(id).body == batch.body);
  CHECK(svc.get_batch("s999").code == 404);
}

TEST_CASE("label submissions are validated") {
  auto& w = world();
  AnnotationService svc(w.options());
  const std::string id = svc.create_session(json::object()).body["id"];
  const auto ids = batch_ids(svc.get_batch(id).body);
  const json good = w.gold(ids[0]);

  CHECK(svc.submit_labels("s999", good).code == 404);
  auto r = svc.submit_labels(id, {{"labels", good["labels"]}});
  CHECK(r.code == 422);
  CHECK(r.body["field"] == "id");

  std::string outside;
  for (const auto& [sid, p] : w.position) {
    if (std::find(ids.begin(), ids.end(), sid) == ids.end()) {
      outside = sid;
      break;
    }
  }
  r = svc.submit_labels(id, {{"id", outside}, {"labels", w.gold(outside)["labels"]}});
  CHECK(r.code == 404);
  CHECK(r.body["field"] == "id");

  json shorter = good;
  shorter["labels"].erase(shorter["labels"].size() - 1);
  r = svc.submit_labels(id, shorter);
  CHECK(r.code == 422);
  CHECK(r.body["field"] == "labels");

  json bad = good;
  bad["labels"][0] = "MAYBE";
  CHECK(svc.submit_labels(id, bad).code == 422);
  bad["labels"][0] = 0;
  CHECK(svc.submit_labels(id, bad).code == 422);
  CHECK(svc.submit_labels(id, {{"id", ids[0]}, {"labels", "NON"}}).code == 422);

  r = svc.submit_labels(id, good);
  CHECK(r.code == 200);
  CHECK(r.body["remaining"] == 31);
  CHECK(svc.submit_labels(id, good).code == 409);

  const auto status = svc.get_status(id).body;
  CHECK(status["submitted"] == 1);
  CHECK(status["pending"] == 32);
  CHECK(status["labeled"] == 0);
  CHECK(svc.get_batch(id).body["items"][0]["submitted"] == true);
}

TEST_CASE("session lifecycle follows the gold-oracle loop") {
  auto& w = world();
  AnnotationService svc(w.options());
  const std::string id = svc.create_session({{"budget", 96}}).body["id"];
  const ALState ref = w.reference(96);

  std::vector<std::string> order;
  int episodes = 0;
  while (svc.get_status(id).body["status"] == "awaiting_labels") {
    const auto ids = label_batch(svc, id);
    order.insert(order.end(), ids.begin(), ids.end());
    ++episodes;
    const auto st = svc.get_status(id).body;
    CHECK(st["episode"] == episodes);
    CHECK(st["labeled"].get<std::size_t>() + st["unlabeled"].get<std::size_t>() == w.data.pool.size());
    CHECK(st["curve"].size() == static_cast<std::size_t>(episodes));
  }
  CHECK(svc.get_status(id).body["status"] == "finished");
  CHECK(episodes == 3);
  REQUIRE(order.size() == ref.labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) CHECK(w.position.at(order[i]) == ref.labeled[i]);
  check_same_curve(svc.get_curve(id).body["curve"], ref);

  CHECK(svc.get_batch(id).code == 409);
  CHECK(svc.submit_labels(id, w.gold(order[0])).code == 409);
}

TEST_CASE("sessions persist and resume") {
  auto& w = world();
  fixture::TempDir state("service-state");
  std::string id;
  std::vector<std::string> first;
  {
    AnnotationService svc(w.options(false, state.path));
    id = svc.create_session({{"budget", 64}}).body["id"];
    first = batch_ids(svc.get_batch(id).body);
    for (std::size_t i = 0; i < 10; ++i) REQUIRE(svc.submit_labels(id, w.gold(first[i])).code == 200);
  }
  CHECK(fs::exists(state.path / (id + ".json")));
  {
    AnnotationService svc(w.options(false, state.path));
    const auto st = svc.get_status(id);
    REQUIRE(st.code == 200);
    CHECK(st.body["status"] == "awaiting_labels");
    CHECK(st.body["submitted"] == 10);
    const auto batch = svc.get_batch(id).body;
    CHECK(batch_ids(batch) == first);
    CHECK(batch["items"][9]["submitted"] == true);
    CHECK(batch["items"][10]["submitted"] == false);
    for (std::size_t i = 10; i < first.size(); ++i) REQUIRE(svc.submit_labels(id, w.gold(first[i])).code == 200);
    CHECK(svc.get_status(id).body["episode"] == 1);
    // new sessions do not reuse a persisted id
    CHECK(svc.create_session(json::object()).body["id"] != id);
  }
  {
    AnnotationService svc(w.options(false, state.path));
    label_batch(svc, id);
    CHECK(svc.get_status(id).body["status"] == "finished");
    check_same_curve(svc.get_curve(id).body["curve"], w.reference(64));
  }
}

TEST_CASE("a session saved mid-training is trained again on load") {
  auto& w = world();
  fixture::TempDir state("service-training");
  std::string id;
  {
    AnnotationService svc(w.options(false, state.path));
    id = svc.create_session({{"budget", 64}}).body["id"];
    const auto ids = batch_ids(svc.get_batch(id).body);
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) REQUIRE(svc.submit_labels(id, w.gold(ids[i])).code == 200);
    // fake an interruption: the last label arrived and training had started
    const fs::path file = state.path / (id + ".json");
    json saved = json::parse(read_text(file));
    const json last = w.gold(ids.back());
    json labels = json::array();
    for (const auto& l : last["labels"]) labels.push_back(label_index(*parse_label(l.get<std::string>())));
    saved["submitted"][std::to_string(w.position.at(ids.back()))] = labels;
    saved["status"] = "training";
    write_text(file, saved.dump());
  }
  AnnotationService svc(w.options(true, state.path));
  svc.wait_until_settled(id);
  const auto st = svc.get_status(id).body;
  CHECK(st["status"] == "awaiting_labels");
  CHECK(st["episode"] == 1);
  CHECK(st["labeled"] == 32);
}

TEST_CASE("http endpoints") {
  auto& w = world();
  AnnotationService svc(w.options(true));
  httplib::Server server;
  svc.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto post = [&](const std::string& path, const std::string& body) {
    auto r = client.Post(path, body, "application/json");
    REQUIRE(r);
    return std::make_pair(r->status, json::parse(r->body));
  };
  auto get = [&](const std::string& path) {
    auto r = client.Get(path);
    REQUIRE(r);
    return std::make_pair(r->status, json::parse(r->body));
  };

  CHECK(post("/sessions", "{not json").first == 400);
  CHECK(post("/sessions", R"({"strategy": "nope"})").first == 400);
  const auto [code, created] = post("/sessions", R"({"budget": 96})");
  REQUIRE(code == 200);
  const std::string id = created["id"];
  const std::string base = "/sessions/" + id;

  CHECK(get("/sessions/zzz/batch").first == 404);
  CHECK(post(base + "/labels", "{oops").first == 422);

  std::vector<std::string> order;
  for (;;) {
    const auto [c, batch] = get(base + "/batch");
    REQUIRE(c == 200);
    CHECK(batch.dump().find("gold") == std::string::npos);
    const auto ids = batch_ids(batch);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto [sc, reply] = post(base + "/labels", w.gold(ids[i]).dump());
      REQUIRE(sc == 200);
      if (i + 1 == ids.size()) CHECK(reply["status"] == "training");
    }
    order.insert(order.end(), ids.begin(), ids.end());
    std::string status;
    for (;;) {
      status = get(base + "/status").second["status"];
      if (status != "training") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (status != "awaiting_labels") {
      CHECK(status == "finished");
      break;
    }
  }
  const ALState ref = w.reference(96);
  REQUIRE(order.size() == ref.labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) CHECK(w.position.at(order[i]) == ref.labeled[i]);
  const auto [cc, curve] = get(base + "/curve");
  CHECK(cc == 200);
  check_same_curve(curve["curve"], ref);
  CHECK(get(base + "/batch").first == 409);

  server.stop();
  thread.join();
}
