#include <doctest.h>

#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dualface/http_api.hpp"
#include "dualface/image_io.hpp"
#include "support.hpp"

using namespace dualface;
using nlohmann::json;

namespace {

const testing::MiniCorpus& corpus() {
  static testing::TempDir dir;
  static const testing::MiniCorpus c = testing::build_mini_corpus(dir.path(), 8, 16);
  return c;
}

struct Server {
  GuidanceService service{testing::make_engine(corpus()), {}};
  HttpApi api{service};
  int port = api.bind("127.0.0.1", 0);
  std::thread thread{[this] { api.listen(); }};

  Server() {
    for (int i = 0; i < 200 && !api.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Server() {
    api.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }
};

json points_json(const std::vector<Vertex>& pts) {
  json a = json::array();
  for (auto p : pts) a.push_back({p.x, p.y});
  return a;
}

std::string create(httplib::Client& cli) {
  auto r = cli.Post("/sessions", "", "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 201);
  return json::parse(r->body).at("session_id").get<std::string>();
}

void draw_face(httplib::Client& cli, const std::string& id) {
  const StrokeSet face = testing::face_sketch();
  for (const auto& st : face.strokes()) {
    const json body = {{"version", 1}, {"op", "add"}, {"points", points_json(st.vertices)}, {"width", st.width}};
    auto r = cli.Post("/sessions/" + id + "/edits", body.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 200);
  }
}

void check_error(const httplib::Result& r, int status, const std::string& kind) {
  REQUIRE(r);
  CHECK(r->status == status);
  const json j = json::parse(r->body);
  CHECK(j.at("error").at("kind") == kind);
  CHECK_FALSE(j.at("error").at("message").get<std::string>().empty());
}

}  // namespace

TEST_CASE("health and session creation") {
  Server s;
  auto cli = s.client();
  auto h = cli.Get("/healthz");
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(json::parse(h->body).at("index_entries") == 8);

  const std::string id = create(cli);
  CHECK_FALSE(id.empty());
  const json seeded = {{"sketch", json::parse(save_sketch(testing::face_sketch()))}};
  auto r = cli.Post("/sessions", seeded.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  CHECK(json::parse(r->body).at("strokes") == 4);
}

TEST_CASE("edits return retrieval results and the shadow endpoint follows") {
  Server s;
  auto cli = s.client();
  const std::string id = create(cli);
  auto empty = cli.Get("/sessions/" + id + "/shadow");
  REQUIRE(empty);
  CHECK(empty->status == 204);

  const json add = {{"op", "add"}, {"points", points_json(testing::ellipse({256, 270}, 140, 170, 40))}};
  auto r = cli.Post("/sessions/" + id + "/edits", add.dump(), "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  const json j = json::parse(r->body);
  CHECK(j.at("stage") == "global");
  CHECK(j.at("strokes") == 1);
  CHECK(j.at("results").size() == 3);
  CHECK(j.at("results")[0].at("rank") == 1);
  CHECK(j.at("shadow") == true);

  auto png = cli.Get("/sessions/" + id + "/shadow");
  REQUIRE(png);
  CHECK(png->status == 200);
  CHECK(png->get_header_value("Content-Type") == "image/png");
  const GrayImage img = decode_png(std::vector<std::uint8_t>(png->body.begin(), png->body.end()));
  CHECK(img.size() == kDefaultCanvas);

  auto undo = cli.Post("/sessions/" + id + "/edits", R"({"op":"undo"})", "application/json");
  REQUIRE(undo);
  CHECK(json::parse(undo->body).at("strokes") == 0);
  CHECK(cli.Get("/sessions/" + id + "/shadow")->status == 204);
}

TEST_CASE("errors map to status codes") {
  Server s;
  auto cli = s.client();
  check_error(cli.Post("/sessions/missing/edits", R"({"op":"undo"})", "application/json"), 404, "not_found");
  const std::string id = create(cli);
  check_error(cli.Post("/sessions/" + id + "/edits", "{oops", "application/json"), 400, "parse");
  check_error(cli.Post("/sessions/" + id + "/edits", R"({"op":"add","points":[[900,1]]})", "application/json"), 422,
              "validation");
  check_error(cli.Post("/sessions/" + id + "/stage", R"({"stage":"local"})", "application/json"), 422, "validation");
  check_error(cli.Post("/sessions/" + id + "/candidates/c1/select", "", "application/json"), 409, "conflict");
  check_error(cli.Post("/sessions/" + id + "/stage", R"({})", "application/json"), 400, "parse");
}

TEST_CASE("stage switch, candidates, selection and export") {
  Server s;
  auto cli = s.client();
  const std::string id = create(cli);
  draw_face(cli, id);

  auto st = cli.Post("/sessions/" + id + "/stage", R"({"stage":"local"})", "application/json");
  REQUIRE(st);
  REQUIRE(st->status == 200);
  const json local = json::parse(st->body);
  CHECK(local.at("stage") == "local");
  CHECK(local.at("candidates").size() == 3);
  CHECK(local.at("selected_candidate").is_string());

  auto list = cli.Get("/sessions/" + id + "/candidates?images=1");
  REQUIRE(list);
  const json cands = json::parse(list->body).at("candidates");
  REQUIRE(cands.size() == 3);
  CHECK(cands[0].at("candidate_id") == "c1");
  CHECK(cands[0].contains("portrait_png"));
  CHECK(cands[0].at("template_score").is_number());

  auto sel = cli.Post("/sessions/" + id + "/candidates/c2/select", "", "application/json");
  REQUIRE(sel);
  CHECK(sel->status == 200);
  CHECK(sel->get_header_value("X-Candidate-Id") == "c2");
  CHECK(sel->get_header_value("Content-Type") == "image/png");
  check_error(cli.Post("/sessions/" + id + "/candidates/c7/select", "", "application/json"), 404, "not_found");

  auto ex = cli.Get("/sessions/" + id + "/export");
  REQUIRE(ex);
  const json e = json::parse(ex->body);
  CHECK(e.at("stage") == "local");
  CHECK(e.at("selected_candidate") == "c2");
  CHECK(e.at("rasters").at("merged_mask").is_string());
  CHECK(e.at("rasters").at("local_guidance").is_string());
  CHECK(e.at("sketch").at("strokes").size() == 4);

  auto back = cli.Post("/sessions/" + id + "/stage", R"({"stage":"global"})", "application/json");
  REQUIRE(back);
  CHECK(json::parse(back->body).at("candidates").empty());
  CHECK(json::parse(back->body).at("strokes") == 4);
}

TEST_CASE("streamed stage switch emits candidates then done") {
  Server s;
  auto cli = s.client();
  const std::string id = create(cli);
  draw_face(cli, id);
  auto r = cli.Post("/sessions/" + id + "/stage?stream=1", R"({"stage":"local"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  std::istringstream lines(r->body);
  std::vector<json> events;
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) events.push_back(json::parse(line));
  }
  REQUIRE(events.size() == 4);
  for (int i = 0; i < 3; ++i) CHECK(events[i].at("event") == "candidate");
  CHECK(events[3].at("event") == "done");
  CHECK(events[3].at("stage") == "local");

  const std::string blank = create(cli);
  auto err = cli.Post("/sessions/" + blank + "/stage?stream=1", R"({"stage":"local"})", "application/json");
  REQUIRE(err);
  CHECK(json::parse(err->body.substr(0, err->body.find('\n'))).at("event") == "error");
  check_error(cli.Post("/sessions/nope/stage?stream=1", R"({"stage":"local"})", "application/json"), 404,
              "not_found");
}
