#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "crucible/campaign.hpp"
#include "crucible/common.hpp"

namespace {

int cmd_validate(const std::string& config_path) {
  const auto config = crucible::campaign::load_config(config_path);
  const auto data = crucible::campaign::load_data(config);
  const auto plan = crucible::campaign::plan_campaign(config, data);
  std::cout << "config ok: " << config_path << '\n'
            << "policies: " << data.policies.size() << '\n'
            << "strategies: " << data.registry.size() << " ("
            << data.registry.by_modality(crucible::core::Modality::image).size() << " image)\n"
            << "few-shot examples: " << data.few_shots.size() << '\n'
            << "streams: " << plan.streams.size() << '\n'
            << "iterations per stream: " << plan.iterations_per_stream << '\n'
            << "planned conversations: " << plan.total_conversations() << '\n';
  return 0;
}

int cmd_run(crucible::campaign::CampaignConfig config, const std::string& out_dir, bool resume) {
  const auto result = crucible::campaign::run_campaign(config, out_dir, resume);
  std::cout << "campaign finished: " << result.out_dir.string() << '\n'
            << "completed: " << result.completed << ", failed: " << result.failed
            << ", violating: " << result.violating << '\n';
  for (const auto& stream : result.streams) {
    if (stream.aborted) {
      std::cout << "aborted stream " << stream.key << ": " << stream.abort_reason << '\n';
    }
  }
  if (result.any_aborted()) {
    std::cerr << "error: one or more streams aborted\n";
    return 2;
  }
  return 0;
}

int cmd_report(const std::string& out_dir) {
  const auto report = crucible::campaign::build_report(out_dir);
  crucible::campaign::write_report_files(out_dir, report);
  std::cout << report.text;
  return 0;
}

int cmd_export(const std::string& out_dir, const std::string& csv_path) {
  crucible::campaign::export_embeddings(out_dir, csv_path);
  std::cout << "wrote " << csv_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-evolving adversarial conversation campaigns"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string csv_path;
  std::string sampling;
  std::uint64_t seed = 0;
  std::size_t max_turns = 0;
  std::size_t workers = 0;
  bool resume = false;

  auto* validate = app.add_subcommand("validate", "check a config and print the campaign plan");
  validate->add_option("--config", config_path, "campaign config JSON")->required();

  auto* run = app.add_subcommand("run", "execute a campaign");
  run->add_option("--config", config_path, "campaign config JSON")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the campaign seed");
  auto* turns_opt = run->add_option("--max-turns", max_turns, "override max turns (1 = single-turn)");
  auto* sampling_opt =
      run->add_option("--sampling", sampling, "feedback sampling: positive|contrastive|negative");
  auto* workers_opt = run->add_option("--workers", workers, "worker thread count");
  run->add_flag("--resume", resume, "continue an interrupted campaign");

  auto* report = app.add_subcommand("report", "recompute the report from logs");
  report->add_option("--out", out_dir, "campaign output directory")->required();

  auto* exp = app.add_subcommand("export-embeddings", "write attack embeddings as CSV");
  exp->add_option("--out", out_dir, "campaign output directory")->required();
  exp->add_option("--csv", csv_path, "destination CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (run->parsed()) {
      auto config = crucible::campaign::load_config(config_path);
      if (seed_opt->count() > 0) config.seed = seed;
      if (turns_opt->count() > 0) config.max_turns = max_turns;
      if (sampling_opt->count() > 0) {
        config.sampling = crucible::horizontal::sampling_from_name(sampling);
      }
      if (workers_opt->count() > 0) config.workers = workers;
      return cmd_run(std::move(config), out_dir, resume);
    }
    if (report->parsed()) return cmd_report(out_dir);
    if (exp->parsed()) return cmd_export(out_dir, csv_path);
  } catch (const crucible::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == crucible::ErrorCode::FailureBudgetExceeded ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
