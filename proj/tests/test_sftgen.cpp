#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "reflectrank/sftgen.hpp"

using namespace rr::sftgen;

namespace {

SftConfig fast_config() {
  SftConfig cfg;
  cfg.backend.initial_backoff = std::chrono::milliseconds(0);
  return cfg;
}

// Ranking sample over an 8-item catalog, positive item "3".
SftSample make_ranking_sample(const std::string& target) {
  SftSample s;
  s.scenario_id = "scen-1";
  s.task_kind = TaskKind::ranking;
  s.target_output = target;
  s.candidates = rrtest::make_catalog(8);
  s.positive_item_id = "3";
  return s;
}

const char* kGoodRanking =
    "<think>The user prefers light comedies from the 90s.</think>\n"
    "1. Movie 3 - closest match\n2. Movie 1\n3. Movie 2\n4. Movie 4\n"
    "5. Movie 5\n6. Movie 6\n7. Movie 7\n8. Movie 8\n";

std::string numbered_without(const std::string& skip_id) {
  std::string s;
  int n = 0;
  for (int i = 1; i <= 8; ++i) {
    if (std::to_string(i) == skip_id) continue;
    s += std::to_string(++n) + ". Movie " + std::to_string(i) + "\n";
  }
  return s;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("format screen catches each defect class") {
  auto cfg = fast_config();

  auto good = make_ranking_sample(kGoodRanking);
  CHECK_FALSE(screen_format(good, cfg).has_value());

  auto no_cot = make_ranking_sample(numbered_without("none"));
  CHECK(screen_format(no_cot, cfg) == FailReason::MissingCoT);

  auto no_list = make_ranking_sample("<think>the user prefers drama</think>\nI refuse to rank.");
  CHECK(screen_format(no_list, cfg) == FailReason::MissingRanking);

  auto no_keywords = make_ranking_sample(
      "<think>sorted by release date descending</think>\n" + numbered_without("none"));
  CHECK(screen_format(no_keywords, cfg) == FailReason::MissingKeywords);

  auto no_positive = make_ranking_sample(
      "<think>the user prefers comedies</think>\n" + numbered_without("3"));
  CHECK(screen_format(no_positive, cfg) == FailReason::NoPositiveItem);
}

TEST_CASE("quality screen thresholds on the positive item's rank") {
  auto cfg = fast_config();

  auto good = make_ranking_sample(kGoodRanking);
  CHECK_FALSE(screen_quality(good, cfg).has_value());
  CHECK(good.quality_ndcg10 == 1.0);

  // positive at rank 7: ndcg@10 = 1/log2(8) = 1/3 < 0.3869
  auto low = make_ranking_sample(
      "<think>the user prefers action</think>\n"
      "1. Movie 1\n2. Movie 2\n3. Movie 4\n4. Movie 5\n"
      "5. Movie 6\n6. Movie 7\n7. Movie 3\n8. Movie 8\n");
  CHECK(screen_quality(low, cfg) == FailReason::LowNdcg);
  CHECK(low.quality_ndcg10 == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  // positive at rank 5: ndcg@10 = 1/log2(6) = 0.3869 exactly on the
  // threshold side (0.38685... >= 0.3869 is false, rank 4 passes)
  auto rank4 = make_ranking_sample(
      "<think>the user prefers action</think>\n"
      "1. Movie 1\n2. Movie 2\n3. Movie 4\n4. Movie 3\n"
      "5. Movie 5\n6. Movie 6\n7. Movie 7\n8. Movie 8\n");
  CHECK_FALSE(screen_quality(rank4, cfg).has_value());
}

TEST_CASE("auto-completed positives do not count as placed") {
  auto cfg = fast_config();
  // lenient parsing would append "3", but the teacher never listed it
  auto s = make_ranking_sample("<think>the user prefers comedies</think>\n" + numbered_without("3"));
  screen(s, cfg);
  CHECK(s.screen_status == ScreenStatus::failed);
  CHECK(s.fail_reason == FailReason::NoPositiveItem);
}

TEST_CASE("reflection samples need the update marker, quality passes vacuously") {
  auto cfg = fast_config();
  SftSample s;
  s.task_kind = TaskKind::reflection;
  s.target_output =
      "<think>the user disliked this, adjust taste</think>\n"
      "Updated User description: now avoids horror";
  CHECK_FALSE(screen_format(s, cfg).has_value());
  CHECK_FALSE(screen_quality(s, cfg).has_value());
  screen(s, cfg);
  CHECK(s.screen_status == ScreenStatus::passed);

  SftSample bad;
  bad.task_kind = TaskKind::reflection;
  bad.target_output = "<think>the user prefers drama</think>\nNew profile: avoids horror";
  CHECK(screen_format(bad, cfg) == FailReason::MissingUpdateMarker);
}

TEST_CASE("screen is idempotent") {
  auto cfg = fast_config();
  auto s = make_ranking_sample(kGoodRanking);
  screen(s, cfg);
  CHECK(s.screen_status == ScreenStatus::passed);
  screen(s, cfg);
  CHECK(s.screen_status == ScreenStatus::passed);
  CHECK_FALSE(s.fail_reason.has_value());
}

TEST_CASE("generate_samples records backend failures without aborting") {
  auto cfg = fast_config();
  auto catalog = rrtest::make_catalog(8);

  rr::agent::RankingTask task;
  task.memory = rrtest::make_memory(catalog);
  task.candidates = catalog;
  task.positive_item_id = "3";

  rr::llm::MockBackend teacher;
  teacher.register_script(
      "digest:" + rr::llm::prompt_digest(rr::agent::build_ranking_prompt(task.memory, catalog)),
      kGoodRanking);

  rr::agent::RankingTask unscripted = task;
  unscripted.memory.preference_description = "different memory, different prompt";

  std::vector<Scenario> scenarios = {{"ok", task}, {"down", unscripted}};
  auto samples = generate_samples(teacher, scenarios, cfg);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].target_output == kGoodRanking);
  CHECK(samples[0].screen_status == ScreenStatus::unscreened);
  CHECK(samples[1].screen_status == ScreenStatus::failed);
  CHECK(samples[1].fail_reason == FailReason::BackendError);

  screen(samples[0], cfg);
  CHECK(samples[0].screen_status == ScreenStatus::passed);
  screen(samples[1], cfg);  // backend failures stay failed
  CHECK(samples[1].fail_reason == FailReason::BackendError);
}

TEST_CASE("rethink recovers a failed sample within two rounds") {
  auto cfg = fast_config();
  auto s = make_ranking_sample(numbered_without("none"));  // missing think block
  screen(s, cfg);
  REQUIRE(s.fail_reason == FailReason::MissingCoT);

  rr::llm::MockBackend teacher;
  // round 1 feedback names the CoT error; teacher answers with a keyword-free
  // rationale, which fails again; round 2 feedback then yields a good answer
  teacher.register_script("(error: MissingCoT)",
                          "<think>ordered alphabetically</think>\n" + numbered_without("none"));
  teacher.register_script("(error: MissingKeywords)", kGoodRanking);

  auto fixed = augment_rethink(s, teacher, cfg, cfg.max_rethink_rounds);
  CHECK(fixed.screen_status == ScreenStatus::regenerated);
  CHECK(fixed.target_output == kGoodRanking);
  CHECK(fixed.attempt == 3);  // original + two rethink rounds
}

TEST_CASE("rethink gives up after max rounds") {
  auto cfg = fast_config();
  auto s = make_ranking_sample("no structure at all");
  screen(s, cfg);
  REQUIRE(s.screen_status == ScreenStatus::failed);

  rr::llm::MockBackend teacher;
  teacher.register_script("(error:", "still no structure");  // matches every feedback turn
  auto result = augment_rethink(s, teacher, cfg, 3);
  CHECK(result.screen_status == ScreenStatus::failed);
  CHECK(result.attempt == 4);

  auto passed = make_ranking_sample(kGoodRanking);
  screen(passed, cfg);
  CHECK_THROWS_AS(augment_rethink(passed, teacher, cfg, 3), std::invalid_argument);
}

TEST_CASE("export counts statuses and is byte-stable") {
  auto cfg = fast_config();
  std::vector<SftSample> samples;
  samples.push_back(make_ranking_sample(kGoodRanking));
  samples.push_back(make_ranking_sample("garbage"));
  samples.push_back(make_ranking_sample(kGoodRanking));
  for (auto& s : samples) screen(s, cfg);
  samples[2].screen_status = ScreenStatus::regenerated;

  rrtest::MovieLensDir dir("sft_export");
  auto path = dir.path() / "corpus.jsonl";
  auto manifest = export_corpus(samples, path, cfg);
  CHECK(manifest.exported == 2);
  CHECK(manifest.passed == 1);
  CHECK(manifest.regenerated == 1);
  CHECK(manifest.failed == 1);
  CHECK(manifest.unscreened == 0);
  REQUIRE(manifest.failures.size() == 1);
  CHECK(manifest.failures[0].second == "MissingCoT");
  CHECK(manifest.config_digest == config_digest(cfg));

  std::string first = read_file(path);
  export_corpus(samples, path, cfg);
  CHECK(read_file(path) == first);
  CHECK(first.find("assistant") != std::string::npos);

  auto with_failed = export_corpus(samples, dir.path() / "all.jsonl", cfg, true);
  CHECK(with_failed.exported == 3);
  CHECK(read_file(dir.path() / "all.jsonl").find("MissingCoT") != std::string::npos);

  write_manifest(manifest, dir.path() / "manifest.json");
  std::string m = read_file(dir.path() / "manifest.json");
  CHECK(m.find("\"exported\": 2") != std::string::npos);
  CHECK(m.find(manifest.config_digest) != std::string::npos);
}

TEST_CASE("config digest tracks screening-relevant fields") {
  auto a = fast_config();
  auto b = fast_config();
  CHECK(config_digest(a) == config_digest(b));
  b.threshold_ndcg10 = 0.5;
  CHECK(config_digest(a) != config_digest(b));
  auto c = fast_config();
  c.keywords.push_back("mood");
  CHECK(config_digest(a) != config_digest(c));
}
