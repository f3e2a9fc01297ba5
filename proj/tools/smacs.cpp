// Operator CLI: bank build/profile, ask, serve, bench, and a local
// simulated pool (sim init/serve) for trying everything without GPUs.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "smacs/config.hpp"
#include "smacs/evaluation.hpp"
#include "smacs/pipeline.hpp"
#include "smacs/service.hpp"
#include "smacs/sim_server.hpp"
#include "smacs/sim_setup.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPipeline = 3;

using namespace smacs;

std::pair<std::string, int> split_listen(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("listen", "expected host:port, got '" + addr + "'");
  try {
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("listen", "bad port in '" + addr + "'");
  }
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError("sizes", "not a number: '" + item + "'");
    }
  }
  return out;
}

std::optional<TaskKind> kind_option(const std::string& text) {
  if (text.empty()) return std::nullopt;
  auto k = parse_task_kind(text);
  if (!k) throw ConfigError("task-kind", "unknown task kind '" + text + "'");
  return k;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

struct Overrides {
  std::optional<std::size_t> K, n, k_drop;
  std::optional<double> lambda, gamma;
  void attach(CLI::App* app) {
    app->add_option("--K", K, "number of referencers");
    app->add_option("--n", n, "number of aggregation rounds");
    app->add_option("--k-drop", k_drop, "references dropped per round");
    app->add_option("--lambda", lambda, "perplexity weight");
    app->add_option("--gamma", gamma, "support threshold factor");
  }
  AskOverrides get() const { return {K, n, k_drop, lambda, gamma}; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-model question answering over a pool of OpenAI-compatible endpoints"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // bank build
  auto* bank = app.add_subcommand("bank", "question bank management");
  bank->require_subcommand(1);
  auto* build = bank->add_subcommand("build", "ingest labeled questions and embed them");
  std::vector<std::string> build_inputs;
  std::string build_out, build_config;
  std::size_t build_batch = 64;
  build->add_option("--in", build_inputs, "JSONL files of {id, dataset, task_kind, question, label}")->required();
  build->add_option("--out", build_out, "bank file to write")->required();
  build->add_option("--config", build_config, "config naming the embedder; without it the bank is left unembedded");
  build->add_option("--batch", build_batch, "embedding batch size");

  // bank profile
  auto* profile = bank->add_subcommand("profile", "score every referencer on the bank");
  std::string prof_config, prof_bank, prof_out, prof_tx_in, prof_tx_out;
  std::size_t prof_batch = 64;
  profile->add_option("--config", prof_config, "pipeline config (pool and hook)")->required();
  profile->add_option("--bank", prof_bank, "bank file; defaults to the config's bank_path");
  profile->add_option("--out", prof_out, "capability matrix file to write")->required();
  profile->add_option("--transcripts-in", prof_tx_in, "reuse recorded responses instead of calling the pool");
  profile->add_option("--transcripts-out", prof_tx_out, "save the collected responses");
  profile->add_option("--batch", prof_batch, "concurrent calls per batch");

  // ask
  auto* ask = app.add_subcommand("ask", "answer one question");
  std::string ask_config, ask_question, ask_kind, ask_dataset;
  std::optional<std::uint64_t> ask_seed;
  bool ask_timings = false;
  Overrides ask_over;
  ask->add_option("--config", ask_config, "pipeline config")->required();
  ask->add_option("--question", ask_question, "question text")->required();
  ask->add_option("--task-kind", ask_kind, "boxed-math | multiple-choice | exact-match | instruction | code");
  ask->add_option("--dataset", ask_dataset, "prompt selector, e.g. gpqa or mmlu-pro:law");
  ask->add_option("--seed", ask_seed, "RNG seed for reproducible runs");
  ask->add_flag("--timings", ask_timings, "include stage timings in the output");
  ask_over.attach(ask);

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP ask service");
  std::string serve_config, serve_listen = "127.0.0.1:8080";
  serve->add_option("--config", serve_config, "pipeline config")->required();
  serve->add_option("--listen", serve_listen, "host:port");

  // bench
  auto* bench = app.add_subcommand("bench", "scaling run over pool prefixes");
  std::string bench_config, bench_sizes = "5,10,15", bench_queries, bench_json;
  std::size_t bench_per_domain = 500;
  std::uint64_t bench_seed = 0;
  Overrides bench_over;
  bench->add_option("--config", bench_config, "pipeline config")->required();
  bench->add_option("--sizes", bench_sizes, "comma-separated ascending pool sizes");
  bench->add_option("--queries", bench_queries, "JSONL evaluation questions (required unless the backend is sim)");
  bench->add_option("--per-domain", bench_per_domain, "generated queries per domain for the sim backend");
  bench->add_option("--seed", bench_seed, "run seed; per-query seeds derive from it");
  bench->add_option("--json", bench_json, "write the full report with per-query traces");
  bench_over.attach(bench);

  // sim
  auto* sim = app.add_subcommand("sim", "simulated model pool");
  sim->require_subcommand(1);
  auto* sim_init = sim->add_subcommand("init", "write a ready-to-run simulated deployment");
  std::string init_dir, init_preset = "specialist";
  std::size_t init_per_domain = 500;
  sim_init->add_option("--dir", init_dir, "output directory")->required();
  sim_init->add_option("--preset", init_preset, "specialist | sharp")
      ->check(CLI::IsMember({"specialist", "sharp"}));
  sim_init->add_option("--per-domain", init_per_domain, "bank questions per domain");
  auto* sim_serve = sim->add_subcommand("serve", "serve a sim pool over HTTP");
  std::string sim_pool_path, sim_listen = "127.0.0.1:8000";
  sim_serve->add_option("--pool", sim_pool_path, "sim pool spec (pool.json)")->required();
  sim_serve->add_option("--listen", sim_listen, "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*build) {
      QuestionBank qb;
      for (const auto& path : build_inputs) qb.ingest(read_question_records(path));
      if (!build_config.empty()) {
        const auto cfg = load_config(build_config, PathCheck::Skip);
        auto gw = make_gateway(cfg, make_transport(cfg));
        EmbeddingCache cache;
        const std::filesystem::path cache_path = build_out + ".embcache";
        if (std::filesystem::exists(cache_path)) cache.load(cache_path);
        auto embedder = make_embedder(cfg, gw, &cache);
        embed_bank(qb, *embedder, build_batch);
        cache.save(cache_path);
      }
      qb.save(build_out);
      std::cout << "wrote " << qb.size() << " questions to " << build_out << '\n';
    } else if (*profile) {
      const auto cfg = load_config(prof_config, PathCheck::Skip);
      const auto qb = QuestionBank::load(prof_bank.empty() ? cfg.bank_path : std::filesystem::path(prof_bank));
      const auto ids = cfg.referencer_ids();
      Transcripts tx;
      if (!prof_tx_in.empty()) {
        tx = load_transcripts(prof_tx_in);
      } else {
        auto gw = make_gateway(cfg, make_transport(cfg));
        tx = collect_transcripts(*gw, qb, ids, make_prompts(cfg), prof_batch);
      }
      if (!prof_tx_out.empty()) save_transcripts(tx, prof_tx_out);
      HookOptions hook{cfg.hook_command, std::chrono::milliseconds(static_cast<long long>(cfg.hook_timeout_s * 1000))};
      const auto cap = build_capability_matrix(qb, ids, tx, hook);
      cap.save(prof_out);
      std::cout << "profiled " << cap.rows() << " models on " << cap.cols() << " questions into " << prof_out << '\n';
    } else if (*ask) {
      const auto cfg = load_config(ask_config);
      const auto pipeline = Pipeline::from_config(cfg);
      AskRequest req;
      req.question = ask_question;
      req.task_kind = kind_option(ask_kind);
      req.dataset = ask_dataset;
      req.seed = ask_seed;
      req.overrides = ask_over.get();
      std::cout << to_json(pipeline.ask(req), ask_timings) << '\n';
    } else if (*serve) {
      const auto cfg = load_config(serve_config);
      auto pipeline = std::make_shared<const Pipeline>(Pipeline::from_config(cfg));
      AskService service(pipeline);
      const auto [host, port] = split_listen(serve_listen);
      const int bound = service.bind(host, port);
      std::cerr << "listening on " << host << ':' << bound << '\n';
      service.listen_blocking();
    } else if (*bench) {
      const auto cfg = load_config(bench_config);
      const auto pipeline = Pipeline::from_config(cfg);
      std::vector<QuestionRecord> queries;
      if (!bench_queries.empty()) {
        queries = read_question_records(bench_queries);
      } else if (cfg.backend == BackendKind::Sim) {
        queries = sim::sim_queries(sim::SimWorld::load(cfg.sim_pool), bench_per_domain, "bench");
      } else {
        throw ConfigError("queries", "--queries is required for an HTTP pool");
      }
      const auto points = scaling_run(pipeline, parse_sizes(bench_sizes), queries, bench_over.get(), bench_seed);
      std::cout << scaling_table(points);
      for (const auto& p : points) {
        std::cout << "\npool size " << p.pool_size << '\n' << accuracy_table(p.outcomes).to_table();
      }
      if (!bench_json.empty()) write_file(bench_json, scaling_json(points));
    } else if (*sim_init) {
      const auto world = init_preset == "sharp" ? sim::sharp_world() : sim::specialist_world();
      const auto setup = sim::build_sim_setup(world, init_per_domain);
      sim::write_sim_setup(setup, init_dir);
      std::cout << "wrote " << init_dir << "/{pool.json,bank.jsonl,capability.txt,config.json}\n";
    } else if (*sim_serve) {
      auto pool = std::make_shared<const sim::SimPool>(sim::SimWorld::load(sim_pool_path));
      sim::SimServer server(pool);
      const auto [host, port] = split_listen(sim_listen);
      const int bound = server.bind(host, port);
      if (bound <= 0) throw Error("cannot bind " + sim_listen);
      std::cerr << "sim pool listening on http://" << host << ':' << bound << "/v1\n";
      server.listen_blocking();
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BankError& e) {
    std::cerr << "bank error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline error (stage " << e.stage() << "): " << e.what() << '\n';
    return kExitPipeline;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return 0;
}
