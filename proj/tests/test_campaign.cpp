#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <crucible/campaign.hpp>
#include <crucible/common.hpp>
#include <crucible/core.hpp>
#include <crucible/metrics.hpp>
#include <crucible/transform.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

using namespace crucible;
using namespace crucible::campaign;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kDataDir = CRUCIBLE_DATA_DIR;

fs::path test_root() {
  static const fs::path root = [] {
    const fs::path dir = fs::temp_directory_path() / "crucible_campaign_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = test_root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> nonempty_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

json sim_models() {
  return {{"attacker",
           {{"type", "token_copy_attacker"},
            {"vocabulary",
             {"lantern", "orchid", "pebble", "quartz", "meadow", "sparrow", "drift", "glade",
              "ember", "cobalt", "fjord", "saffron"}},
            {"copy_probability", 0.8},
            {"tokens_per_prompt", 6},
            {"seed", 7},
            {"turn_strategy", "hypothetical"},
            {"novel_every", 5},
            {"novel_name", "mirror_probe"}}},
          {"target",
           {{"type", "synthetic_target"},
            {"vulnerable_tokens", {"ember", "cobalt", "fjord", "saffron"}},
            {"threshold", 0.5},
            {"seed", 11}}},
          {"judge", {{"type", "scripted_judge"}, {"policy_id", "S1"}}},
          {"embedder", {{"type", "hash"}, {"dim", 16}, {"seed", 0}}}};
}

json sim_doc(std::size_t iterations, std::size_t max_turns, std::uint64_t seed,
             std::size_t workers, std::vector<std::string> policies,
             std::vector<std::string> strategies) {
  json doc;
  doc["campaign"] = {{"iterations", iterations}, {"max_turns", max_turns},
                     {"sampling", "contrastive_random"}, {"feedback_k", 3},
                     {"seed", seed},           {"workers", workers},
                     {"failure_budget", 3},    {"attacker_retries", 1}};
  doc["render"] = {{"wrap_width", 64}, {"scale", 1}};
  doc["models"] = sim_models();
  doc["filters"] = {{"policies", policies}, {"strategies", strategies}};
  doc["paths"] = {{"policies", kDataDir + "/policies.json"},
                  {"taxonomy", kDataDir + "/taxonomy.json"},
                  {"fewshots", kDataDir + "/fewshots.json"}};
  return doc;
}

CampaignConfig sim_config(std::size_t iterations, std::size_t max_turns, std::uint64_t seed,
                          std::size_t workers, std::vector<std::string> policies,
                          std::vector<std::string> strategies) {
  return config_from_json(
      sim_doc(iterations, max_turns, seed, workers, std::move(policies), std::move(strategies)),
      test_root());
}

ErrorCode config_code(json doc) {
  try {
    config_from_json(doc, test_root());
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a throw");
  return ErrorCode::InvalidArgument;
}

fs::path write_json(const fs::path& dir, const std::string& name, const json& doc) {
  const fs::path path = dir / name;
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  return path;
}

int run_cli(const std::string& args) {
  const std::string command =
      std::string("\"") + CRUCIBLE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::vector<std::string> sorted_pngs(const fs::path& out_dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(out_dir / "images")) {
    names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

void check_same_logs(const fs::path& a, const fs::path& b) {
  CHECK(read_file(a / "conversations.jsonl") == read_file(b / "conversations.jsonl"));
  CHECK(read_file(a / "meta.json") == read_file(b / "meta.json"));
  CHECK(read_file(a / "report.json") == read_file(b / "report.json"));
  for (const auto& entry : fs::directory_iterator(a / "streams")) {
    const fs::path other = b / "streams" / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(read_file(entry.path()) == read_file(other));
  }
  CHECK(sorted_pngs(a) == sorted_pngs(b));
}

}  // namespace

TEST_CASE("config parsing applies defaults and rejects bad values") {
  SUBCASE("a full document round-trips") {
    const CampaignConfig config = sim_config(5, 2, 42, 3, {"S1"}, {"safe_instruction_unsafe_ocr"});
    CHECK(config.iterations == 5);
    CHECK(config.max_turns == 2);
    CHECK(config.sampling == horizontal::SamplingKind::contrastive_random);
    CHECK(config.seed == 42);
    CHECK(config.workers == 3);
    CHECK(config.policy_filter == std::vector<std::string>{"S1"});
    CHECK(config.strategy_filter == std::vector<std::string>{"safe_instruction_unsafe_ocr"});
    CHECK(config.policies_path == fs::path(kDataDir + "/policies.json"));
    CHECK(config.style.wrap_width == 64);

    const json snapshot = config.to_json();
    CHECK(snapshot["campaign"]["iterations"] == 5);
    CHECK(snapshot["campaign"]["sampling"] == "contrastive_random");
    CHECK(snapshot["models"]["embedder"]["dim"] == 16);
  }

  SUBCASE("omitted sections fall back to defaults") {
    json doc;
    doc["models"] = sim_models();
    doc["models"].erase("embedder");
    doc["paths"] = sim_doc(1, 1, 0, 1, {}, {})["paths"];
    const CampaignConfig config = config_from_json(doc, test_root());
    CHECK(config.iterations == 100);
    CHECK(config.max_turns == 3);
    CHECK(config.workers == 4);
    CHECK(config.failure_budget == 3);
    CHECK(config.style.wrap_width == 64);
    CHECK(config.style.version == "ocr-v1");
    CHECK(config.embedder_model == json({{"type", "hash"}, {"dim", 64}}));
    CHECK(config.policy_filter.empty());
  }

  SUBCASE("zero counts and bad values are rejected") {
    auto doc = [] { return sim_doc(2, 2, 0, 1, {}, {}); };
    json bad = doc();
    bad["campaign"]["iterations"] = 0;
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["campaign"]["max_turns"] = 0;
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["campaign"]["workers"] = 0;
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["campaign"]["failure_budget"] = 0;
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["campaign"]["attacker_retries"] = -1;
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["campaign"]["sampling"] = "stratified";
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["campaign"]["iterations"] = "many";
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["models"].erase("judge");
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    bad = doc();
    bad["paths"].erase("taxonomy");
    CHECK(config_code(bad) == ErrorCode::ConfigInvalid);
    CHECK(config_code(json::array()) == ErrorCode::ConfigInvalid);
  }

  SUBCASE("relative data paths resolve against the config directory") {
    const CampaignConfig config = load_config(std::string(CRUCIBLE_CONFIG_DIR) +
                                              "/sim_campaign.json");
    CHECK(config.policies_path.is_absolute());
    CHECK(config.policies_path.filename() == "policies.json");
    CHECK(fs::exists(config.policies_path));
  }

  SUBCASE("missing and malformed config files") {
    try {
      load_config(test_root() / "nope.json");
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IOFailure);
    }
    const fs::path dir = fresh_dir("bad_config");
    const fs::path path = dir / "broken.json";
    std::ofstream(path) << "{nope";
    try {
      load_config(path);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
  }
}

TEST_CASE("data loading validates cross-references") {
  SUBCASE("the shipped data files load cleanly") {
    const CampaignConfig config = sim_config(1, 1, 0, 1, {}, {});
    const CampaignData data = load_data(config);
    CHECK(data.policies.size() == 13);
    CHECK(data.registry.size() == 7);
    CHECK(data.registry.by_modality(core::Modality::image).size() == 3);
    CHECK(data.few_shots.size() == 273);

    const auto pair = data.for_pair("S1", "safe_instruction_unsafe_ocr");
    CHECK(pair.size() == 3);
    for (const auto& example : pair) {
      CHECK(example.policy_id == "S1");
      CHECK(example.strategy_name == "safe_instruction_unsafe_ocr");
    }
  }

  SUBCASE("broken data files surface as ConfigInvalid") {
    const fs::path dir = fresh_dir("bad_data");
    CampaignConfig config = sim_config(1, 1, 0, 1, {}, {});

    config.fewshots_path = write_json(
        dir, "unknown_policy.json",
        {{"examples", json::array({{{"policy_id", "S99"},
                                    {"strategy", "hypothetical"},
                                    {"prompt", "benign"}}})}});
    try {
      load_data(config);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
      CHECK(std::string(e.what()).find("S99") != std::string::npos);
    }

    config.fewshots_path = write_json(
        dir, "unknown_strategy.json",
        {{"examples", json::array({{{"policy_id", "S1"},
                                    {"strategy", "mind_meld"},
                                    {"prompt", "benign"}}})}});
    try {
      load_data(config);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
    }

    // Contract violation: a scene tag under an ocr-only strategy.
    config.fewshots_path = write_json(
        dir, "bad_contract.json",
        {{"examples", json::array({{{"policy_id", "S1"},
                                    {"strategy", "safe_instruction_unsafe_ocr"},
                                    {"prompt", "<image_scene>skyline</image_scene>"}}})}});
    try {
      load_data(config);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
      CHECK(std::string(e.what()).find("is invalid") != std::string::npos);
    }

    config = sim_config(1, 1, 0, 1, {}, {});
    config.taxonomy_path = write_json(
        dir, "bad_taxonomy.json",
        {{"strategies", json::array({{{"name", "odd"},
                                      {"modality", "sound"},
                                      {"definition", "x"}}})}});
    try {
      load_data(config);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
  }
}

TEST_CASE("plans cross policies with image strategies") {
  const CampaignData data = load_data(sim_config(1, 1, 0, 1, {}, {}));

  SUBCASE("filters shape the stream grid policy-major") {
    const CampaignConfig config = sim_config(
        5, 1, 0, 1, {"S1", "S2"}, {"safe_instruction_unsafe_ocr", "text_attack_in_image"});
    const CampaignPlan plan = plan_campaign(config, data);
    REQUIRE(plan.streams.size() == 4);
    CHECK(plan.total_conversations() == 20);
    CHECK(plan.streams[0].key() == "S1__safe_instruction_unsafe_ocr");
    CHECK(plan.streams[1].key() == "S1__text_attack_in_image");
    CHECK(plan.streams[2].key() == "S2__safe_instruction_unsafe_ocr");
    CHECK(plan.streams[3].key() == "S2__text_attack_in_image");
    CHECK(plan.streams[0].iterations == 5);
  }

  SUBCASE("no filters means the full policy by image-strategy grid") {
    const CampaignConfig config = sim_config(100, 1, 0, 1, {}, {});
    const CampaignPlan plan = plan_campaign(config, data);
    CHECK(plan.streams.size() == 39);
    CHECK(plan.total_conversations() == 3900);
    std::set<std::string> keys;
    for (const auto& stream : plan.streams) keys.insert(stream.key());
    CHECK(keys.size() == 39);
  }

  SUBCASE("bad filters are rejected") {
    const auto plan_code = [&](const CampaignConfig& config) {
      try {
        plan_campaign(config, data);
      } catch (const Error& e) {
        return e.code();
      }
      FAIL("expected a throw");
      return ErrorCode::InvalidArgument;
    };
    CHECK(plan_code(sim_config(1, 1, 0, 1, {"S99"}, {})) == ErrorCode::ConfigInvalid);
    CHECK(plan_code(sim_config(1, 1, 0, 1, {}, {"mind_meld"})) == ErrorCode::ConfigInvalid);
    CHECK(plan_code(sim_config(1, 1, 0, 1, {}, {"hypothetical"})) == ErrorCode::ConfigInvalid);
  }

  SUBCASE("every planned pair needs few-shot coverage") {
    CampaignConfig config = sim_config(1, 1, 0, 1, {"S1", "S2"}, {"safe_instruction_unsafe_ocr"});
    CampaignData narrow = data;
    std::vector<core::FewShotExample> only_s1;
    for (const auto& example : narrow.few_shots) {
      if (example.policy_id == "S1") only_s1.push_back(example);
    }
    narrow.few_shots = std::move(only_s1);
    try {
      plan_campaign(config, narrow);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
      CHECK(std::string(e.what()).find("S2") != std::string::npos);
    }
  }
}

TEST_CASE("a small campaign runs end to end with stable logs") {
  const fs::path out_dir = fresh_dir("small_run");
  const CampaignConfig config =
      sim_config(3, 2, 42, 2, {"S1"}, {"safe_instruction_unsafe_ocr"});
  const CampaignResult result = run_campaign(config, out_dir, false);

  CHECK(result.completed == 3);
  CHECK(result.failed == 0);
  CHECK_FALSE(result.any_aborted());
  REQUIRE(result.streams.size() == 1);
  CHECK(result.streams[0].key == "S1__safe_instruction_unsafe_ocr");
  CHECK(result.streams[0].completed == 3);

  SUBCASE("the output directory holds the full artifact set") {
    for (const char* name : {"campaign.json", "conversations.jsonl", "meta.json", "report.json",
                             "report.txt"}) {
      CHECK(fs::exists(out_dir / name));
    }
    CHECK(fs::exists(out_dir / "streams" / "S1__safe_instruction_unsafe_ocr.convs.jsonl"));
    CHECK(fs::exists(out_dir / "streams" / "S1__safe_instruction_unsafe_ocr.memory.jsonl"));
    CHECK_FALSE(sorted_pngs(out_dir).empty());
  }

  SUBCASE("the merged log carries one line per iteration with unique ids") {
    const auto lines = nonempty_lines(read_file(out_dir / "conversations.jsonl"));
    REQUIRE(lines.size() == 3);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const json doc = json::parse(lines[i]);
      ids.insert(doc.at("id").get<std::string>());
      CHECK(doc.at("iteration").get<std::size_t>() == i + 1);
      CHECK(doc.at("turns").size() == 2);
    }
    CHECK(ids.size() == 3);
    CHECK(ids.count("S1__safe_instruction_unsafe_ocr__iter1") == 1);
  }

  SUBCASE("the report agrees with the runner's tallies") {
    const json report = json::parse(read_file(out_dir / "report.json"));
    CHECK(report.at("conversations").at("completed").get<std::size_t>() == 3);
    CHECK(report.at("conversations").at("failed").get<std::size_t>() == 0);
    CHECK(report.at("plan").at("planned_conversations").get<std::size_t>() == 3);
    CHECK(report.at("asr").at("violating").get<std::size_t>() == result.violating);
    CHECK(report.at("diversity").is_object());
    const std::string text = read_file(out_dir / "report.txt");
    CHECK(text.rfind("campaign report (generated ", 0) == 0);
    CHECK(text.find("attack success rate: ") != std::string::npos);
  }

  SUBCASE("logged conversations read back with re-rendered images") {
    const auto logged = read_conversations(out_dir, config.style);
    REQUIRE(logged.size() == 3);
    for (const auto& entry : logged) {
      CHECK_FALSE(entry.failed);
      REQUIRE(entry.conversation.has_value());
      CHECK(entry.conversation->turns().size() == 2);
      CHECK(entry.conversation->policy_id() == "S1");
    }
    CHECK(logged[0].conversation->id() == "S1__safe_instruction_unsafe_ocr__iter1");

    // A drifted render style no longer reproduces the logged geometry.
    transform::RenderStyle drifted = config.style;
    drifted.wrap_width = 4;
    try {
      read_conversations(out_dir, drifted);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IOFailure);
    }

    try {
      read_conversations(fresh_dir("no_campaign"), config.style);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IOFailure);
    }
  }

  SUBCASE("embeddings derive from the logs and export as csv") {
    const auto embeddings = embeddings_from_logs(out_dir);
    REQUIRE(embeddings.size() == 3);
    CHECK(embeddings[0].combined.size() == 32);
    CHECK(embeddings[0].label == "S1__safe_instruction_unsafe_ocr__iter1");
    CHECK(embeddings[0].policy_id == "S1");

    const fs::path csv = out_dir / "embeddings.csv";
    export_embeddings(out_dir, csv);
    const auto lines = nonempty_lines(read_file(csv));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0].rfind("label,policy_id,strategy,v0,", 0) == 0);
    CHECK(lines[1].rfind("S1__safe_instruction_unsafe_ocr__iter1,S1,", 0) == 0);
  }
}

TEST_CASE("logged bytes are independent of worker count and track the seed") {
  const auto run_with = [](const std::string& name, std::uint64_t seed, std::size_t workers) {
    const fs::path dir = fresh_dir(name);
    run_campaign(sim_config(2, 2, seed, workers, {"S1", "S2"},
                            {"safe_instruction_unsafe_ocr", "text_attack_in_image"}),
                 dir, false);
    return dir;
  };

  const fs::path serial = run_with("workers_1", 42, 1);
  const fs::path threaded = run_with("workers_3", 42, 3);
  check_same_logs(serial, threaded);

  const fs::path reseeded = run_with("workers_seed", 43, 3);
  CHECK(read_file(serial / "conversations.jsonl") !=
        read_file(reseeded / "conversations.jsonl"));
}

TEST_CASE("a crashed campaign resumes to byte-identical logs") {
  const CampaignConfig config =
      sim_config(4, 2, 9, 2, {"S1", "S2"}, {"safe_instruction_unsafe_ocr"});
  const fs::path reference = [&] {
    const fs::path dir = fresh_dir("resume_reference");
    run_campaign(config, dir, false);
    return dir;
  }();
  const auto stream_file = [](const fs::path& dir, const char* tail) {
    return dir / "streams" / (std::string("S1__safe_instruction_unsafe_ocr.") + tail);
  };

  const auto make_cut = [&](const std::string& name) {
    const fs::path dir = fresh_dir(name);
    run_campaign(config, dir, false);
    return dir;
  };
  const auto truncate_lines = [](const fs::path& path, std::size_t keep,
                                 const std::string& tail) {
    const auto lines = nonempty_lines(read_file(path));
    REQUIRE(lines.size() >= keep);
    std::ofstream out(path, std::ios::trunc);
    for (std::size_t i = 0; i < keep; ++i) out << lines[i] << '\n';
    out << tail;
  };

  SUBCASE("a clean cut resumes from the next iteration") {
    const fs::path dir = make_cut("resume_clean");
    truncate_lines(stream_file(dir, "convs.jsonl"), 2, "");
    truncate_lines(stream_file(dir, "memory.jsonl"), 2, "");
    const CampaignResult result = run_campaign(config, dir, true);
    CHECK(result.completed + result.failed == 8);
    check_same_logs(reference, dir);
  }

  SUBCASE("a torn conversation line is dropped with its orphan memory record") {
    const fs::path dir = make_cut("resume_torn_conv");
    truncate_lines(stream_file(dir, "convs.jsonl"), 2, "{\"id\": \"S1__safe_ins");
    truncate_lines(stream_file(dir, "memory.jsonl"), 3, "");
    run_campaign(config, dir, true);
    check_same_logs(reference, dir);
  }

  SUBCASE("a torn memory line is truncated before replay") {
    const fs::path dir = make_cut("resume_torn_memory");
    truncate_lines(stream_file(dir, "convs.jsonl"), 1, "");
    truncate_lines(stream_file(dir, "memory.jsonl"), 1, "{\"iteration\": 2, \"succ");
    run_campaign(config, dir, true);
    check_same_logs(reference, dir);
  }

  SUBCASE("resuming a finished campaign changes nothing") {
    const fs::path dir = make_cut("resume_finished");
    const std::string before = read_file(dir / "conversations.jsonl");
    const CampaignResult result = run_campaign(config, dir, true);
    CHECK(result.completed == 8);
    CHECK(read_file(dir / "conversations.jsonl") == before);
    check_same_logs(reference, dir);
  }

  SUBCASE("a memory log shorter than its conversation log is unrecoverable") {
    const fs::path dir = make_cut("resume_short_memory");
    truncate_lines(stream_file(dir, "convs.jsonl"), 3, "");
    truncate_lines(stream_file(dir, "memory.jsonl"), 1, "");
    try {
      run_campaign(config, dir, true);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IOFailure);
      CHECK(std::string(e.what()).find("memory log shorter") != std::string::npos);
    }
  }
}

TEST_CASE("fresh runs refuse occupied directories and resume checks the snapshot") {
  const CampaignConfig config = sim_config(1, 1, 3, 1, {"S1"}, {"safe_instruction_unsafe_ocr"});
  const fs::path dir = fresh_dir("snapshot_rules");
  run_campaign(config, dir, false);

  SUBCASE("a second fresh run into the same directory is refused") {
    try {
      run_campaign(config, dir, false);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
  }

  SUBCASE("resume without a snapshot is refused") {
    try {
      run_campaign(config, fresh_dir("no_snapshot"), true);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
  }

  SUBCASE("resume with a drifted config is refused") {
    CampaignConfig reseeded = config;
    reseeded.seed = 4;
    try {
      run_campaign(reseeded, dir, true);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
    CampaignConfig longer = config;
    longer.iterations = 2;
    try {
      run_campaign(longer, dir, true);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
  }

  SUBCASE("only the worker count may differ on resume") {
    CampaignConfig reworked = config;
    reworked.workers = 7;
    const CampaignResult result = run_campaign(reworked, dir, true);
    CHECK(result.completed == 1);
    CHECK_FALSE(result.any_aborted());
  }
}

TEST_CASE("a stream aborts when the failure budget is spent") {
  const fs::path out_dir = fresh_dir("budget_abort");
  json doc = sim_doc(5, 1, 0, 1, {"S1"}, {"safe_instruction_unsafe_ocr"});
  doc["campaign"]["failure_budget"] = 2;
  doc["models"]["attacker"] = {{"type", "scripted"},
                               {"default_reply", "no image directive at all"}};
  const CampaignConfig config = config_from_json(doc, test_root());

  const CampaignResult result = run_campaign(config, out_dir, false);
  CHECK(result.any_aborted());
  CHECK(result.completed == 0);
  CHECK(result.failed == 2);
  REQUIRE(result.streams.size() == 1);
  CHECK(result.streams[0].aborted);
  CHECK(result.streams[0].abort_reason.find("consecutive failures") != std::string::npos);

  const auto lines = nonempty_lines(read_file(out_dir / "conversations.jsonl"));
  REQUIRE(lines.size() == 2);
  for (const auto& line : lines) {
    const json entry = json::parse(line);
    CHECK(entry.at("failed").get<bool>());
    CHECK(entry.at("error_code").get<std::string>() == "StarterGenerationFailed");
  }

  // The report still builds; rate fields go null with nothing completed.
  const json report = json::parse(read_file(out_dir / "report.json"));
  CHECK(report.at("asr").is_null());
  CHECK(report.at("conversations").at("failed").get<std::size_t>() == 2);
}

TEST_CASE("the cli maps outcomes to exit codes") {
  const fs::path dir = fresh_dir("cli");
  const fs::path good_config =
      write_json(dir, "good.json", sim_doc(2, 1, 5, 1, {"S1"}, {"safe_instruction_unsafe_ocr"}));

  json bad = sim_doc(2, 1, 5, 1, {"S1"}, {"safe_instruction_unsafe_ocr"});
  bad["campaign"]["iterations"] = 0;
  const fs::path bad_config = write_json(dir, "bad.json", bad);

  json aborting = sim_doc(5, 1, 5, 1, {"S1"}, {"safe_instruction_unsafe_ocr"});
  aborting["campaign"]["failure_budget"] = 2;
  aborting["models"]["attacker"] = {{"type", "scripted"},
                                    {"default_reply", "no image directive at all"}};
  const fs::path aborting_config = write_json(dir, "aborting.json", aborting);

  CHECK(run_cli("validate --config \"" + good_config.string() + "\"") == 0);
  CHECK(run_cli("validate --config \"" + bad_config.string() + "\"") == 1);
  CHECK(run_cli("validate --config \"" + (dir / "missing.json").string() + "\"") == 1);
  CHECK(run_cli("validate --no-such-flag") == 1);

  const fs::path run_dir = dir / "run_out";
  CHECK(run_cli("run --config \"" + good_config.string() + "\" --out \"" + run_dir.string() +
                "\"") == 0);
  CHECK(fs::exists(run_dir / "report.json"));
  CHECK(run_cli("report --out \"" + run_dir.string() + "\"") == 0);
  const fs::path csv = dir / "out.csv";
  CHECK(run_cli("export-embeddings --out \"" + run_dir.string() + "\" --csv \"" + csv.string() +
                "\"") == 0);
  CHECK(fs::exists(csv));

  CHECK(run_cli("run --config \"" + aborting_config.string() + "\" --out \"" +
                (dir / "abort_out").string() + "\"") == 2);
}
