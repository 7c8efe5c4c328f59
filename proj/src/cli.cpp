#include "dualface/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualface/binary_io.hpp"
#include "dualface/guidance_service.hpp"
#include "dualface/http_api.hpp"
#include "dualface/image_io.hpp"
#include "dualface/synthetic_faces.hpp"

namespace dualface {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Bad input the user can fix; maps to the usage exit code.
class UsageError : public Error {
 public:
  using Error::Error;
};

double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " path is required");
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

void require_dir(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " path is required");
  if (!fs::is_directory(p)) throw UsageError(what + " directory not found: " + p.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const fs::path& path) {
  Fnv1a h;
  h.update(read_file_bytes(path));
  return hex64(h.digest());
}

struct Globals {
  std::string config;
  std::uint64_t seed = 0x6a1f66d;
  bool verbose = false;
};

// Paths shared by query/guide/serve; flags win over --config.
struct ArtifactPaths {
  fs::path index;
  fs::path codebook;
  fs::path manifest;

  void fill_from(const Globals& g) {
    if (g.config.empty()) return;
    require_file(g.config, "config");
    ServiceConfig c = load_service_config(g.config);
    apply_env_overrides(c);
    if (index.empty()) index = c.index_path;
    if (codebook.empty()) codebook = c.codebook_path;
    if (manifest.empty()) manifest = c.manifest_path;
  }
};

StrokeSet load_sketch_file(const fs::path& path, std::vector<std::string>& warnings) {
  require_file(path, "sketch");
  LoadedSketch loaded = load_sketch(read_text(path));
  warnings.insert(warnings.end(), loaded.warnings.begin(), loaded.warnings.end());
  return loaded.sketch;
}

json results_json(const std::vector<RetrievalResult>& results) {
  json out = json::array();
  for (const auto& r : results) out.push_back({{"entry_id", r.entry_id}, {"similarity", r.similarity}, {"rank", r.rank}});
  return out;
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_interrupt(int) { g_interrupted = true; }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Portrait drawing guidance: dataset, index, retrieval and guidance tools", "dualface"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Service config file (JSON)");
  app.add_option("--seed", g.seed, "Seed for every seeded step");
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

  json report = json::object();
  std::vector<std::string> warnings;
  auto log = [&](const std::string& line) {
    if (g.verbose) err << line << "\n";
  };

  // make-corpus
  auto* corpus = app.add_subcommand("make-corpus", "Write a synthetic face corpus (label masks + images)");
  fs::path corpus_out;
  std::size_t corpus_count = 518;
  int corpus_canvas = 512;
  corpus->add_option("--out", corpus_out, "Output directory")->required();
  corpus->add_option("--count", corpus_count, "Number of faces")->check(CLI::PositiveNumber);
  corpus->add_option("--canvas", corpus_canvas, "Square canvas size")->check(CLI::Range(64, 4096));
  corpus->callback([&] {
    const auto t = Clock::now();
    const CorpusLayout layout =
        write_synthetic_corpus(corpus_out, corpus_count, g.seed, {corpus_canvas, corpus_canvas});
    report = {{"command", "make-corpus"},
              {"count", corpus_count},
              {"masks", layout.mask_dir.string()},
              {"images", layout.image_dir.string()},
              {"palette", layout.palette_path.string()},
              {"timings_ms", {{"total", ms_since(t)}}}};
  });

  // build-dataset
  auto* dataset = app.add_subcommand("build-dataset", "Extract contour sketches and write a manifest");
  fs::path ds_masks, ds_images, ds_out, ds_palette;
  int ds_canvas = 512;
  dataset->add_option("--masks", ds_masks, "Directory of label masks")->required();
  dataset->add_option("--images", ds_images, "Directory of face images")->required();
  dataset->add_option("--out", ds_out, "Output directory")->required();
  dataset->add_option("--palette", ds_palette, "Palette JSON (default: CelebAMask-HQ labels)");
  dataset->add_option("--canvas", ds_canvas, "Square canvas size")->check(CLI::Range(64, 4096));
  dataset->callback([&] {
    require_dir(ds_masks, "mask");
    require_dir(ds_images, "image");
    Palette palette = Palette::celebamask_hq();
    if (!ds_palette.empty()) {
      require_file(ds_palette, "palette");
      palette = load_palette(ds_palette);
    }
    const auto t = Clock::now();
    DatasetBuildReport r = build_dataset(ds_masks, ds_images, ds_out, palette, {ds_canvas, ds_canvas});
    warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    json items = json::array();
    for (const auto& e : r.manifest.entries) items.push_back({{"entry_id", e.entry_id}, {"status", "ok"}});
    report = {{"command", "build-dataset"},
              {"manifest", (ds_out / "manifest.json").string()},
              {"entries", r.manifest.entries.size()},
              {"skipped", r.skipped},
              {"items", items},
              {"timings_ms", {{"total", ms_since(t)}}}};
  });

  // train-codebook
  auto* train = app.add_subcommand("train-codebook", "Train the GALIF visual-word codebook");
  fs::path tr_manifest, tr_out;
  int tr_k = 256;
  std::size_t tr_per_entry = 120;
  CodebookTrainingOptions tr_opts;
  train->add_option("--manifest", tr_manifest, "Dataset manifest")->required();
  train->add_option("--out", tr_out, "Codebook output file")->required();
  train->add_option("--k", tr_k, "Number of visual words")->check(CLI::PositiveNumber);
  train->add_option("--max-per-entry", tr_per_entry, "Descriptors pooled per corpus entry (0 = all)");
  train->add_option("--max-descriptors", tr_opts.max_training_descriptors, "Training subsample cap");
  train->add_option("--iterations", tr_opts.max_iterations, "Lloyd iterations")->check(CLI::PositiveNumber);
  train->callback([&] {
    require_file(tr_manifest, "manifest");
    const DatasetManifest manifest = load_manifest(tr_manifest);
    GalifParams params;
    params.sampling.seed = g.seed;
    const auto t = Clock::now();
    log("pooling descriptors over " + std::to_string(manifest.entries.size()) + " entries");
    const auto pool = pool_corpus_descriptors(manifest, params, tr_per_entry);
    const double pool_ms = ms_since(t);
    const auto t2 = Clock::now();
    log("training k=" + std::to_string(tr_k) + " on " + std::to_string(pool.size()) + " descriptors");
    const Codebook cb = train_codebook(pool, tr_k, g.seed, tr_opts, corpus_hash(manifest));
    save_codebook(cb, tr_out);
    report = {{"command", "train-codebook"},
              {"codebook", tr_out.string()},
              {"k", cb.k()},
              {"dim", cb.dim()},
              {"descriptors", pool.size()},
              {"hash", hex64(cb.hash())},
              {"timings_ms", {{"pool", pool_ms}, {"train", ms_since(t2)}}}};
  });

  // build-index
  auto* build = app.add_subcommand("build-index", "Encode every corpus contour into the retrieval index");
  fs::path bi_manifest, bi_codebook, bi_out;
  build->add_option("--manifest", bi_manifest, "Dataset manifest")->required();
  build->add_option("--codebook", bi_codebook, "Codebook file")->required();
  build->add_option("--out", bi_out, "Index output file")->required();
  build->callback([&] {
    require_file(bi_manifest, "manifest");
    require_file(bi_codebook, "codebook");
    const DatasetManifest manifest = load_manifest(bi_manifest);
    auto cb = std::make_shared<const Codebook>(load_codebook(bi_codebook));
    GalifParams params;
    params.sampling.seed = g.seed;
    const auto t = Clock::now();
    const RetrievalIndex index = build_index(manifest, cb, params, [&](const IndexBuildProgress& p) {
      if (g.verbose && (p.done % 50 == 0 || p.done == p.total)) err << "indexed " << p.done << "/" << p.total << "\n";
    });
    save_index(index, bi_out);
    json items = json::array();
    for (const auto& e : index.entries()) items.push_back({{"entry_id", e.entry_id}, {"status", "ok"}});
    report = {{"command", "build-index"},
              {"index", bi_out.string()},
              {"entries", index.size()},
              {"items", items},
              {"hash", file_hash(bi_out)},
              {"timings_ms", {{"total", ms_since(t)}, {"per_entry", ms_since(t) / double(index.size())}}}};
  });

  // query
  auto* query = app.add_subcommand("query", "Retrieve the top-N corpus contours for sketches");
  ArtifactPaths q_paths;
  std::vector<fs::path> q_sketches, q_rasters;
  int q_n = 3;
  query->add_option("--index", q_paths.index, "Index file");
  query->add_option("--codebook", q_paths.codebook, "Codebook file");
  query->add_option("--sketch", q_sketches, "Sketch document(s)");
  query->add_option("--raster", q_rasters, "Binary sketch raster(s), ink >= 128");
  query->add_option("--n", q_n, "Results per query")->check(CLI::PositiveNumber);
  query->callback([&] {
    q_paths.fill_from(g);
    require_file(q_paths.index, "index");
    require_file(q_paths.codebook, "codebook");
    if (q_sketches.empty() && q_rasters.empty()) throw UsageError("give at least one --sketch or --raster");
    auto cb = std::make_shared<const Codebook>(load_codebook(q_paths.codebook));
    const RetrievalIndex index = load_index(q_paths.index, cb);
    json items = json::array();
    double total = 0.0;
    auto run = [&](const std::string& name, const SketchRaster& raster) {
      const auto t = Clock::now();
      const auto results = index.query(raster, q_n);
      const double ms = ms_since(t);
      total += ms;
      if (results.empty()) warnings.push_back(name + ": blank sketch, no results");
      items.push_back({{"input", name}, {"status", "ok"}, {"results", results_json(results)}, {"retrieval_ms", ms}});
    };
    for (const auto& p : q_sketches) {
      const StrokeSet s = load_sketch_file(p, warnings);
      if (s.canvas() != index.canvas()) throw UsageError(p.string() + ": canvas differs from the index canvas");
      run(p.string(), rasterize(s, index.canvas()));
    }
    for (const auto& p : q_rasters) {
      require_file(p, "raster");
      const SketchRaster raster = from_gray8(read_gray8(p));
      if (raster.size() != index.canvas()) throw UsageError(p.string() + ": raster size differs from the index canvas");
      run(p.string(), raster);
    }
    report = {{"command", "query"},
              {"items", items},
              {"timings_ms", {{"total", total}, {"mean", total / double(items.size())}}}};
  });

  // guide
  auto* guide = app.add_subcommand("guide", "Headless guidance pass: shadow, merged mask and candidates");
  ArtifactPaths gd_paths;
  fs::path gd_sketch, gd_out;
  int gd_n = 3;
  std::string gd_style = "sketch-lines";
  std::string gd_synth = "region-composite";
  std::string gd_synth_cmd;
  bool gd_no_mapping = false;
  bool gd_debug = false;
  guide->add_option("--sketch", gd_sketch, "Sketch document")->required();
  guide->add_option("--index", gd_paths.index, "Index file");
  guide->add_option("--codebook", gd_paths.codebook, "Codebook file");
  guide->add_option("--manifest", gd_paths.manifest, "Dataset manifest (palette)");
  guide->add_option("--out", gd_out, "Output directory")->required();
  guide->add_option("--n", gd_n, "Number of templates")->check(CLI::PositiveNumber);
  guide->add_option("--style", gd_style, "photo | sketch-lines");
  guide->add_option("--synth", gd_synth, "Synthesizer implementation");
  guide->add_option("--synth-command", gd_synth_cmd, "Command template for the external synthesizer");
  guide->add_flag("--no-mapping", gd_no_mapping, "Pass template masks through unchanged");
  guide->add_flag("--debug", gd_debug, "Also write per-candidate mapping debug rasters");
  guide->callback([&] {
    gd_paths.fill_from(g);
    require_file(gd_paths.index, "index");
    require_file(gd_paths.codebook, "codebook");
    require_file(gd_paths.manifest, "manifest");
    const StrokeSet sketch = load_sketch_file(gd_sketch, warnings);
    const PortraitStyle style = parse_portrait_style(gd_style);
    auto synth = SynthesizerRegistry::with_builtins().create({gd_synth, gd_synth_cmd, {}});
    auto cb = std::make_shared<const Codebook>(load_codebook(gd_paths.codebook));
    auto index = std::make_shared<const RetrievalIndex>(load_index(gd_paths.index, cb));
    if (sketch.canvas() != index->canvas()) throw UsageError("sketch canvas differs from the index canvas");
    const DatasetManifest manifest = load_manifest(gd_paths.manifest);
    fs::create_directories(gd_out);
    write_gray8(gd_out / "user_sketch.png", to_gray8(rasterize(sketch, index->canvas())));

    const auto t = Clock::now();
    const auto results = index->query(rasterize(sketch, index->canvas()), gd_n);
    const double retrieval_ms = ms_since(t);
    report = {{"command", "guide"}, {"results", results_json(results)}, {"timings_ms", {{"retrieval", retrieval_ms}}}};
    if (results.empty()) {
      warnings.push_back("blank sketch: shadow skipped and mapping refused");
      throw UsageError("blank sketch: nothing to guide");
    }
    std::vector<ContourSketch> contours;
    std::vector<DatasetEntry> templates;
    for (const auto& r : results) {
      const IndexEntry* e = index->find(r.entry_id);
      contours.push_back(from_gray8(read_gray8(e->contour_path)));
      templates.push_back(e->dataset_entry());
    }
    write_gray8(gd_out / "shadow.png", shadow_to_gray8(blend_shadow(contours)));

    CandidateOptions opts;
    opts.style = style;
    opts.mapping = !gd_no_mapping;
    const auto t2 = Clock::now();
    const CandidateSet set = generate_candidates(sketch, templates, manifest.palette, *synth, opts);
    warnings.insert(warnings.end(), set.warnings.begin(), set.warnings.end());
    std::size_t best = 0;
    for (std::size_t i = 1; i < set.candidates.size(); ++i) {
      if (set.candidates[i].template_score < set.candidates[best].template_score) best = i;
    }
    json items = json::array();
    for (std::size_t i = 0; i < set.candidates.size(); ++i) {
      const auto& c = set.candidates[i];
      const std::string stem = "candidate_" + std::to_string(c.rank);
      write_gray8(gd_out / (stem + ".png"), c.portrait);
      if (gd_debug) write_mapping_debug(c.merged, gd_out / (stem + "_debug"));
      items.push_back({{"candidate_id", c.candidate_id},
                       {"template_entry_id", c.template_entry_id},
                       {"rank", c.rank},
                       {"status", "ok"},
                       {"template_score", c.template_score},
                       {"synthesis_ms", c.synthesis_ms},
                       {"file", (gd_out / (stem + ".png")).string()}});
    }
    const GuidanceCandidate& chosen = set.candidates[best];
    write_gray8(gd_out / "merged_mask.png", chosen.merged.mask.labels());
    write_gray8(gd_out / "revised_contour.png", to_gray8(extract_contours(chosen.merged.mask)));
    write_gray8(gd_out / "local_guidance.png", chosen.portrait);
    report["candidates"] = items;
    report["selected_candidate"] = chosen.candidate_id;
    report["timings_ms"]["candidates_total"] = ms_since(t2);
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP guidance service");
  std::string sv_listen;
  serve->add_option("--listen", sv_listen, "host:port (overrides config and DUALFACE_LISTEN)");
  serve->callback([&] {
    if (g.config.empty()) throw UsageError("serve needs --config");
    require_file(g.config, "config");
    ServiceConfig config = load_service_config(g.config);
    apply_env_overrides(config);
    if (!sv_listen.empty()) config.listen = sv_listen;
    const HostPort hp = parse_listen(config.listen);
    require_file(config.index_path, "index");
    require_file(config.codebook_path, "codebook");
    require_file(config.manifest_path, "manifest");
    auto engine = GuidanceEngine::from_config(config);
    GuidanceService service(engine, {config.data_dir, config.session_ttl});
    HttpApi api(service);
    const int port = api.bind(hp.host, hp.port);
    err << "listening on " << hp.host << ":" << port << " (" << engine->index().size() << " index entries)\n";
    g_interrupted = false;
    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    std::thread watcher([&] {
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      api.stop();
    });
    api.listen();
    g_interrupted = true;
    watcher.join();
    report = {{"command", "serve"}, {"listen", hp.host + ":" + std::to_string(port)}};
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    report["status"] = "error";
    report["error"] = e.what();
    report["warnings"] = warnings;
    out << report.dump(2) << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NotFoundError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  report["status"] = "ok";
  report["seed"] = g.seed;
  report["warnings"] = warnings;
  for (const auto& w : warnings) log("warning: " + w);
  out << report.dump(2) << "\n";
  return kExitOk;
}

}  // namespace dualface
