#include "dualface/http_api.hpp"

#include <atomic>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "dualface/image_io.hpp"

namespace dualface {

using nlohmann::json;

namespace {

json results_json(const std::vector<RetrievalResult>& results) {
  json out = json::array();
  for (const auto& r : results) out.push_back({{"entry_id", r.entry_id}, {"similarity", r.similarity}, {"rank", r.rank}});
  return out;
}

json candidate_json(const GuidanceCandidate& c, const std::optional<std::string>& selected, bool with_image) {
  json j = {{"candidate_id", c.candidate_id},
            {"template_entry_id", c.template_entry_id},
            {"rank", c.rank},
            {"template_score", std::isfinite(c.template_score) ? json(c.template_score) : json(nullptr)},
            {"synthesis_ms", c.synthesis_ms},
            {"selected", selected && *selected == c.candidate_id}};
  if (with_image) j["portrait_png"] = base64_encode(encode_png(c.portrait));
  return j;
}

json stage_json(const SessionState& s) {
  json candidates = json::array();
  for (const auto& c : s.candidates) candidates.push_back(candidate_json(c, s.selected_candidate, false));
  return {{"version", 1},
          {"session_id", s.session_id},
          {"stage", to_string(s.stage)},
          {"strokes", s.sketch.size()},
          {"candidates", candidates},
          {"selected_candidate", s.selected_candidate ? json(*s.selected_candidate) : json(nullptr)},
          {"warnings", s.warnings}};
}

json png_or_null(const std::vector<std::uint8_t>& png) { return png.empty() ? json(nullptr) : json(base64_encode(png)); }

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  send_json(res, status, {{"version", 1}, {"error", {{"kind", kind}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw ParseError("request body must be a JSON object");
    if (j.contains("version") && j.at("version") != 1) throw ParseError("unsupported body version");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not valid JSON: ") + e.what());
  }
}

// Maps library errors onto status codes.
template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "parse", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 422, "validation", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "parse", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

struct HttpApi::Impl {
  GuidanceService& service;
  httplib::Server server;
  std::atomic<bool> bound{false};

  explicit Impl(GuidanceService& s) : service(s) { routes(); }

  void routes() {
    constexpr const char* kId = "([A-Za-z0-9_-]+)";
    const std::string session = std::string("/sessions/") + kId;

    server.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"version", 1}, {"status", "ok"}, {"index_entries", service.engine().index().size()}});
    }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      std::string id;
      if (body.contains("sketch")) {
        id = service.create_session(load_sketch(body.at("sketch").dump()).sketch);
      } else {
        id = service.create_session();
      }
      const SessionState s = service.session(id);
      send_json(res, 201, {{"version", 1}, {"session_id", id}, {"stage", to_string(s.stage)}, {"strokes", s.sketch.size()}});
    }));

    server.Post(session + "/edits", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Edit edit = parse_edit(req.body);
      const EditOutcome out = service.apply_edit(req.matches[1], edit);
      send_json(res, 200,
                {{"version", 1},
                 {"stage", to_string(out.stage)},
                 {"strokes", out.stroke_count},
                 {"results", results_json(out.results)},
                 {"shadow", out.shadow},
                 {"retrieval_ms", out.retrieval_ms}});
    }));

    server.Get(session + "/shadow", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto shadow = service.shadow(req.matches[1]);
      if (!shadow) {
        res.status = 204;
        return;
      }
      const auto png = encode_png(shadow_to_gray8(*shadow));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    server.Post(session + "/stage", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      if (!body.contains("stage")) throw ParseError("stage request: missing field 'stage'");
      const Stage target = parse_stage(body.at("stage").get<std::string>());
      const std::string id = req.matches[1];
      if (req.get_param_value("stream") != "1") {
        send_json(res, 200, stage_json(service.switch_stage(id, target)));
        return;
      }
      // Streaming: one JSON line per candidate as it completes, then the final state line.
      service.session(id);  // 404 before the stream starts
      res.set_chunked_content_provider("application/x-ndjson", [this, id, target](std::size_t, httplib::DataSink& sink) {
        auto emit = [&sink](const json& line) {
          const std::string text = line.dump() + "\n";
          sink.write(text.data(), text.size());
        };
        try {
          const SessionState s = service.switch_stage(id, target, [&](const GuidanceCandidate& c) {
            emit({{"event", "candidate"}, {"candidate", candidate_json(c, std::nullopt, false)}});
          });
          json done = stage_json(s);
          done["event"] = "done";
          emit(done);
        } catch (const std::exception& e) {
          emit({{"event", "error"}, {"message", e.what()}});
        }
        sink.done();
        return true;
      });
    }));

    server.Get(session + "/candidates", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const bool images = req.get_param_value("images") == "1";
      const auto candidates = service.list_candidates(id);
      const auto selected = service.session(id).selected_candidate;
      json list = json::array();
      for (const auto& c : candidates) list.push_back(candidate_json(c, selected, images));
      send_json(res, 200, {{"version", 1}, {"candidates", list}, {"selected_candidate", selected ? json(*selected) : json(nullptr)}});
    }));

    server.Post(session + "/candidates/" + kId + "/select",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const GuidanceCandidate c = service.select_candidate(req.matches[1], req.matches[2]);
                  const auto png = encode_png(c.portrait);
                  res.set_header("X-Candidate-Id", c.candidate_id);
                  res.set_content(std::string(png.begin(), png.end()), "image/png");
                }));

    server.Get(session + "/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const SessionExport e = service.export_session(id);
      send_json(res, 200,
                {{"version", 1},
                 {"session_id", id},
                 {"stage", e.stage},
                 {"sketch", json::parse(e.sketch_document)},
                 {"selected_candidate", e.selected_candidate ? json(*e.selected_candidate) : json(nullptr)},
                 {"rasters",
                  {{"user_sketch", png_or_null(e.user_sketch_png)},
                   {"revised_contour", png_or_null(e.revised_contour_png)},
                   {"merged_mask", png_or_null(e.merged_mask_png)},
                   {"local_guidance", png_or_null(e.local_guidance_png)},
                   {"final_result", png_or_null(e.final_result_png)},
                   {"shadow", png_or_null(e.shadow_png)}}}});
    }));
  }
};

HttpApi::HttpApi(GuidanceService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
  int bound_port = port;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound_port = -1;
  }
  if (bound_port < 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound_port;
}

void HttpApi::listen() {
  if (!impl_->bound) throw Error("bind() before listen()");
  impl_->server.listen_after_bind();
}

void HttpApi::stop() {
  if (impl_) impl_->server.stop();
}

bool HttpApi::running() const { return impl_->server.is_running(); }

}  // namespace dualface
