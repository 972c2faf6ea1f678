#include "eagle/service.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "eagle/error.hpp"
#include "eagle/experiment.hpp"
#include "eagle/pipeline.hpp"
#include "eagle/store.hpp"

// keep after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

namespace eagle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}, {"status", status}});
}

std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

struct Service::Impl {
  ServiceConfig cfg;
  httplib::Server server;
  std::thread thread;
  int bound_port = 0;

  std::vector<std::string> order;  // manifest order
  std::map<std::string, SlideSelection> selections;
  std::map<std::string, std::map<std::string, std::string>> labels;  // patient -> column -> value
  std::optional<EmbeddingStore> store;

  void load() {
    if (!fs::is_directory(cfg.run_dir)) throw Error(ErrorCode::kIoError, "run directory not found: " + cfg.run_dir.string());
    const fs::path sel_dir = cfg.run_dir / "selections";
    if (fs::is_directory(sel_dir)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(sel_dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto s = SlideSelection::from_json(read_file(f));
        order.push_back(s.slide_id);
        selections.emplace(s.slide_id, std::move(s));
      }
    }
    const fs::path store_path = cfg.run_dir / "embeddings" / "slide_store.emb";
    if (fs::exists(store_path)) store = EmbeddingStore::load(store_path);
    const fs::path labels_path = cfg.run_dir / "labels.csv";
    if (fs::exists(labels_path)) {
      for (const auto& l : read_labels_csv(labels_path)) labels[l.patient_id]["label"] = l.label;
    }
  }

  json slide_summary(const SlideSelection& s) const {
    json j = {{"id", s.slide_id}, {"patient_id", s.patient_id}, {"cohort", s.cohort},
              {"tile_count", s.n_tiles}, {"k", s.tiles.size()}};
    j["thumbnail"] = s.tiles.empty() || s.tiles.front().image.empty() ? json(nullptr) : json("/tiles/" + s.tiles.front().image);
    const auto it = labels.find(s.patient_id);
    j["labels"] = it == labels.end() ? json::object() : json(it->second);
    return j;
  }

  void routes() {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

    server.Get("/slides", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string cohort = req.has_param("cohort") ? req.get_param_value("cohort") : "";
      json arr = json::array();
      for (const auto& id : order) {
        const auto& s = selections.at(id);
        if (!cohort.empty() && s.cohort != cohort) continue;
        arr.push_back(slide_summary(s));
      }
      send_json(res, 200, {{"slides", arr}, {"count", arr.size()}});
    });

    server.Get(R"(/slides/([^/]+)/toptiles)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto it = selections.find(id);
      if (it == selections.end()) return send_error(res, 404, "unknown slide '" + id + "'");
      const auto& s = it->second;
      json tiles = json::array();
      double mass = 0;
      for (const auto& t : s.tiles) {
        mass += t.weight;
        tiles.push_back({{"rank", t.rank},
                         {"x_px", t.scout.x_px},
                         {"y_px", t.scout.y_px},
                         {"size_px", t.scout.size_px},
                         {"mpp", t.scout.mpp},
                         {"detail", {{"x_px", t.detail.x_px}, {"y_px", t.detail.y_px}, {"size_px", t.detail.size_px}, {"mpp", t.detail.mpp}}},
                         {"score", t.score},
                         {"weight", t.weight},
                         {"image_url", t.image.empty() ? json(nullptr) : json("/tiles/" + t.image)}});
      }
      send_json(res, 200, {{"slide_id", s.slide_id}, {"cohort", s.cohort}, {"n_tiles", s.n_tiles},
                           {"k", s.tiles.size()}, {"weight_sum", mass}, {"tiles", tiles}});
    });

    server.Get(R"(/tiles/([A-Za-z0-9_.\-]+\.png))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.matches[1];
      if (name.find("..") != std::string::npos) return send_error(res, 400, "bad tile name");
      const fs::path p = cfg.run_dir / "tiles" / name;
      if (!fs::is_regular_file(p)) return send_error(res, 404, "unknown tile '" + name + "'");
      res.set_content(read_file(p), "image/png");
    });

    server.Get("/search", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("id") || req.get_param_value("id").empty()) return send_error(res, 400, "missing id");
      const std::string id = req.get_param_value("id");
      std::size_t k = 3;
      if (req.has_param("k")) {
        const auto v = parse_int(req.get_param_value("k"));
        if (!v || *v < 1 || *v > 1000) return send_error(res, 400, "k must be an integer in [1, 1000]");
        k = static_cast<std::size_t>(*v);
      }
      if (!store || !store->get(id)) return send_error(res, 404, "unknown id '" + id + "'");
      SearchOptions opts;
      opts.top_k = k;
      if (req.has_param("cohort") && !req.get_param_value("cohort").empty()) opts.cohort = req.get_param_value("cohort");
      std::vector<SearchMatch> matches;
      try {
        matches = store->search_by_id(id, opts);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptyStore) throw;
      }
      json arr = json::array();
      for (const auto& m : matches) {
        // cosine below zero is reported as zero similarity
        const double sim = std::clamp(m.similarity, 0.0, 1.0);
        arr.push_back({{"id", m.id}, {"cohort", m.cohort}, {"similarity", sim}, {"cosine", m.similarity},
                       {"similarity_pct", std::round(sim * 1000.0) / 10.0}, {"metadata", m.metadata}});
      }
      send_json(res, 200, {{"query", id}, {"k", k}, {"matches", arr}});
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "internal error");
      }
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not found" : "error");
    });
  }
};

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = std::move(cfg);
  impl_->load();
  const std::size_t threads = std::max<std::size_t>(1, impl_->cfg.threads);
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::start() {
  if (impl_->thread.joinable()) return impl_->bound_port;
  auto& s = impl_->server;
  if (impl_->cfg.port == 0) {
    impl_->bound_port = s.bind_to_any_port(impl_->cfg.host);
  } else if (s.bind_to_port(impl_->cfg.host, impl_->cfg.port)) {
    impl_->bound_port = impl_->cfg.port;
  } else {
    impl_->bound_port = -1;
  }
  if (impl_->bound_port <= 0) {
    throw Error(ErrorCode::kIoError, "cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  s.wait_until_ready();
  return impl_->bound_port;
}

void Service::run() {
  start();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Service::port() const noexcept { return impl_->bound_port; }

}  // namespace eagle
