#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "govq/analytics_store.hpp"
#include "govq/errors.hpp"
#include "govq/eval.hpp"
#include "govq/gateway.hpp"
#include "govq/remote.hpp"

namespace {

govq::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::shared_ptr<const govq::PlannerBackend> rule_planner(const std::string& lexicon) {
  govq::ServiceConfig c;
  c.lexicon = lexicon;
  return govq::make_planner(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Governed natural-language analytics"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", config_path, "Service config JSON")->required()->check(CLI::ExistingFile);

  std::string ask_dataset, ask_lexicon, ask_now, ask_tz = "UTC", ask_token, question;
  std::vector<std::string> ask_grants;
  bool ask_unmasked = false, ask_json = false;
  auto* ask = app.add_subcommand("ask", "Answer one question against a dataset bundle");
  ask->add_option("--config", config_path, "Service config JSON; use with --token");
  ask->add_option("--token", ask_token, "Bearer token from the config");
  ask->add_option("--dataset", ask_dataset, "Dataset bundle directory");
  ask->add_option("--lexicon", ask_lexicon, "Rule backend lexicon");
  ask->add_option("--grant", ask_grants, "Target id the asker may see (repeatable)");
  ask->add_flag("--unmasked", ask_unmasked, "Grant the unmasked capability");
  ask->add_option("--now", ask_now, "Pin the clock, e.g. 2025-06-18T17:00:00Z");
  ask->add_option("--tz", ask_tz, "Session timezone");
  ask->add_flag("--json", ask_json, "Print the full response JSON");
  ask->add_option("question", question, "The question")->required();

  std::string eval_dataset, eval_corpus, eval_principals, eval_lexicon, eval_report, eval_judge_url;
  std::size_t eval_threads = 1;
  auto* eval = app.add_subcommand("eval", "Run the evaluation corpus");
  eval->add_option("--dataset", eval_dataset, "Dataset bundle directory")->required();
  eval->add_option("--corpus", eval_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--principals", eval_principals, "Principals JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--lexicon", eval_lexicon, "Rule backend lexicon");
  eval->add_option("--report", eval_report, "Write the JSON report here");
  eval->add_option("--threads", eval_threads, "Cases run in parallel");
  eval->add_option("--judge-url", eval_judge_url, "Chat endpoint for an additional model judge");

  std::uint64_t seed = 7;
  std::size_t records = 1000;
  std::string out_dir;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset bundle");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--records", records, "Number of records");
  gen->add_option("--out", out_dir, "Output bundle directory")->required();

  std::string spec_path, bc_dataset, bc_principals, bc_out;
  auto* build = app.add_subcommand("build-corpus", "Compute gold answers for a corpus case list");
  build->add_option("--spec", spec_path, "Corpus spec JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--dataset", bc_dataset, "Dataset bundle directory")->required();
  build->add_option("--principals", bc_principals, "Principals JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--out", bc_out, "Corpus JSONL to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      govq::Service service(govq::ServiceConfig::load(config_path));
      govq::HttpServer server(service);
      const int port = server.bind(service.config().host, service.config().port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << service.config().host << ":" << port << std::endl;
      server.listen();
      g_server = nullptr;
      return 0;
    }

    if (*ask) {
      std::unique_ptr<govq::Service> service;
      std::string bearer;
      if (!config_path.empty()) {
        service = std::make_unique<govq::Service>(govq::ServiceConfig::load(config_path));
        bearer = "Bearer " + ask_token;
      } else {
        if (ask_dataset.empty()) throw govq::ConfigError("ask needs --config or --dataset");
        govq::ServiceConfig c;
        c.dataset = ask_dataset;
        c.lexicon = ask_lexicon;
        c.timezone = ask_tz;
        if (!ask_now.empty()) {
          auto t = govq::dates::parse_timestamp(ask_now);
          if (!t) throw govq::ConfigError("--now must be an ISO timestamp");
          c.now = *t;
        }
        govq::TokenGrant g{"cli", "cli-user", ask_grants, {}};
        if (ask_unmasked) g.capabilities.insert("unmasked");
        if (g.grants.empty()) {
          auto ds = govq::load_dataset(c.dataset);
          g.grants = ds.org.roots();
        }
        c.tokens.push_back(g);
        service = std::make_unique<govq::Service>(c);
        bearer = "Bearer cli";
      }
      nlohmann::json body = {{"utterance", question}};
      govq::HttpReply r = service->handle("POST", "/v1/chat/cli", bearer, body.dump());
      if (ask_json || r.status != 200) {
        std::cout << r.body.dump(2) << "\n";
      } else {
        std::cout << r.body.value("text", "") << "\n";
        if (r.body.contains("clarification") && !r.body["clarification"].is_null()) {
          int i = 1;
          for (const auto& c : r.body["clarification"]["candidates"]) {
            std::cout << "  " << i++ << ". " << c["name"].get<std::string>() << "\n";
          }
        }
      }
      return r.status == 200 ? 0 : 1;
    }

    if (*eval) {
      auto ds = std::make_shared<const govq::Dataset>(govq::load_dataset(eval_dataset));
      const auto corpus = govq::load_corpus(eval_corpus);
      const auto principals = govq::load_principals(eval_principals);
      std::vector<std::shared_ptr<const govq::Judge>> judges = {std::make_shared<const govq::OracleJudge>()};
      if (!eval_judge_url.empty()) {
        govq::RemoteConfig rc;
        rc.url = eval_judge_url;
        rc.apply_environment();
        judges.push_back(
            std::make_shared<const govq::RemoteJudge>("model", std::make_shared<const govq::HttpChatTransport>(rc)));
      }
      auto system = govq::orchestrator_system([ds] { return ds; }, rule_planner(eval_lexicon));
      const govq::EvalReport report = govq::run_eval(corpus, system, judges, *ds, principals, {eval_threads});
      std::cout << govq::report_table(report);
      if (!eval_report.empty()) {
        std::ofstream out(eval_report, std::ios::trunc);
        out << govq::to_json(report).dump(2) << "\n";
      }
      return 0;
    }

    if (*gen) {
      const govq::Dataset ds = govq::generate_dataset(seed, records);
      govq::save_dataset(ds, out_dir);
      std::cout << "wrote " << ds.records.size() << " records to " << out_dir << "\n";
      return 0;
    }

    if (*build) {
      const govq::Dataset ds = govq::load_dataset(bc_dataset);
      const auto corpus = govq::build_corpus(govq::load_corpus_spec(spec_path), ds, govq::load_principals(bc_principals));
      govq::check_corpus(corpus, ds, govq::load_principals(bc_principals));
      govq::save_corpus(corpus, bc_out);
      std::cout << "wrote " << corpus.size() << " cases to " << bc_out << "\n";
      return 0;
    }
  } catch (const govq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
