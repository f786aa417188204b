// cneval: generate -> tournament -> metrics -> correlate -> serve/export.

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>

#include "cneval/annotation_server.hpp"
#include "cneval/error.hpp"
#include "cneval/pipeline.hpp"

namespace {

using namespace cneval;

struct Flags {
  std::string config;
  std::string run;
  std::vector<std::string> runs;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string judge_mode;
  bool fixed_order = false;
  std::string export_format;
  std::string fixture;
};

RunConfig configure(const Flags& f) {
  if (f.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(f.config);
  CliOverrides o;
  o.seed = f.seed;
  o.parallelism = f.parallelism;
  if (!f.judge_mode.empty()) o.judge_mode = parse_judge_mode(f.judge_mode);
  o.fixed_order = f.fixed_order;
  apply_overrides(cfg, o);
  return cfg;
}

const std::string& require_run(const Flags& f) {
  if (f.run.empty()) throw ConfigError("--run is required");
  return f.run;
}

int serve(const RunConfig& cfg, const std::string& run_id) {
  // Block termination signals before any thread starts; a waiter thread turns them into a clean stop.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  RunStore store(cfg.run_root, run_id, StoreOptions{cfg.fsync});
  if (!store.has_manifest()) throw Error(ErrorKind::kData, "run '" + run_id + "' does not exist");
  RunLock lock(store.dir());
  AnnotationService service(store, annotation_settings(cfg));

  ServerOptions opts;
  opts.host = cfg.annotation.host;
  opts.port = cfg.annotation.port;
  if (cfg.annotation.static_dir) opts.static_dir = cfg.annotation.static_dir->string();
  for (const auto& a : cfg.annotation.annotators) opts.annotator_tokens[a.token] = a.id;
  opts.coordinator_token = cfg.annotation.coordinator_token;
  if (opts.annotator_tokens.empty()) throw ConfigError("annotation.annotators is empty");

  AnnotationServer server(service, opts);
  const int port = server.bind();
  std::cerr << "serving run '" << run_id << "' on http://" << opts.host << ":" << port << " ("
            << service.plan().shared.size() << " shared of " << store.count(streams::kPlan) << " tournaments)\n";
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.serve();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  store.write_index();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tournament-based counter-narrative evaluation"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub, bool with_run) {
    sub->add_option("--config", f.config, "Run configuration (JSON)")->required();
    if (with_run) sub->add_option("--run", f.run, "Run id under run_root")->required();
    sub->add_option("--seed", f.seed, "Root seed override");
    sub->add_option("--parallelism", f.parallelism, "Worker ceiling override");
  };

  auto* gen = app.add_subcommand("generate", "Produce counter-narratives for every system and HS");
  common(gen, true);

  auto* tour = app.add_subcommand("tournament", "Plan and judge all pairwise tournaments");
  common(tour, true);
  tour->add_option("--judge-mode", f.judge_mode, "fast or normal")->check(CLI::IsMember({"fast", "normal"}));
  tour->add_flag("--fixed-order", f.fixed_order, "Show side A first in every tournament");

  auto* met = app.add_subcommand("metrics", "Compute automatic metrics per system");
  common(met, true);

  auto* cor = app.add_subcommand("correlate", "Correlate method rankings");
  cor->add_option("--config", f.config, "Run configuration (JSON)");
  cor->add_option("--run", f.runs, "Run id (repeatable)");
  cor->add_option("--fixture", f.fixture, "CSV of per-system scores: system,<method>,...");

  auto* srv = app.add_subcommand("serve", "Serve the annotation API for a run");
  common(srv, true);

  auto* exp = app.add_subcommand("export", "Print rankings and metric reports");
  common(exp, true);
  exp->add_option("--export", f.export_format, "csv or json")->required()->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = configure(f);
      const auto run = cmd_generate(cfg, require_run(f), std::cerr);
      return run.complete() ? 0 : exit_code_for(ErrorKind::kNetwork);
    }
    if (tour->parsed()) {
      const auto cfg = configure(f);
      const auto res = cmd_tournament(cfg, require_run(f), std::cerr);
      return res.health.complete() ? 0 : exit_code_for(ErrorKind::kNetwork);
    }
    if (met->parsed()) {
      const auto cfg = configure(f);
      const auto reports = cmd_metrics(cfg, require_run(f), std::cerr);
      json arr = json::array();
      for (const auto& r : reports) arr.push_back(r.to_json());
      std::cout << arr.dump(2) << "\n";
      return 0;
    }
    if (cor->parsed()) {
      if (!f.fixture.empty()) {
        const auto rep = correlate_fixture(f.fixture);
        std::cout << rep.to_json().dump(2) << "\n" << rep.to_heatmap();
        return 0;
      }
      const auto cfg = configure(f);
      if (f.runs.empty()) throw ConfigError("correlate needs --run (repeatable) or --fixture");
      const auto rep = cmd_correlate(cfg, f.runs, std::cerr);
      std::cout << rep.to_json().dump(2) << "\n";
      return 0;
    }
    if (srv->parsed()) {
      const auto cfg = configure(f);
      return serve(cfg, require_run(f));
    }
    if (exp->parsed()) {
      const auto cfg = configure(f);
      std::cout << cmd_export(cfg, require_run(f), f.export_format);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return exit_code_for(ErrorKind::kInternal);
  }
  return 0;
}
