#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "reflectrank/agent.hpp"
#include "reflectrank/llm.hpp"

namespace rr::sftgen {

enum class TaskKind { ranking, reflection };

enum class FailReason {
  MissingCoT,         // no <think> block
  MissingRanking,     // no parseable numbered list (ranking)
  MissingUpdateMarker,  // no "Updated User description:" line (reflection)
  MissingKeywords,    // rationale has none of the preference keywords
  NoPositiveItem,     // positive item absent from the output ranking
  LowNdcg,            // quality screen below threshold
  BackendError
};

const char* to_string(FailReason r);

enum class ScreenStatus { unscreened, passed, failed, regenerated };

struct Scenario {
  std::string id;
  std::variant<agent::RankingTask, agent::ReflectionTask> task;
};

struct SftSample {
  std::string scenario_id;
  TaskKind task_kind = TaskKind::ranking;
  std::vector<llm::ChatMessage> input_messages;
  std::string target_output;  // raw teacher text, preserved verbatim
  std::string teacher_model;
  int attempt = 1;
  ScreenStatus screen_status = ScreenStatus::unscreened;
  std::optional<FailReason> fail_reason;
  std::optional<double> quality_ndcg10;
  // kept alongside so screening and rethink can re-check the ranking
  std::vector<corpus::Item> candidates;
  std::string positive_item_id;
};

struct SftConfig {
  std::string teacher_model = "teacher";
  double temperature = 1.0;
  double threshold_ndcg10 = 0.3869;  // positive within the top 5
  std::vector<std::string> keywords = {"prefer", "enjoy", "like", "dislike",
                                       "genre", "taste", "interest"};
  int max_rethink_rounds = 3;
  llm::BackendConfig backend;
};

// One sample per scenario; backend failures are recorded as failed samples
// rather than aborting the batch.
std::vector<SftSample> generate_samples(llm::Backend& teacher, const std::vector<Scenario>& scenarios,
                                        const SftConfig& config);

// Format screen: think block present, output parseable, rationale mentions a
// preference keyword, positive item present in the ranking. Pure; re-screening
// a screened sample is a no-op.
std::optional<FailReason> screen_format(const SftSample& sample, const SftConfig& config);

// Quality screen for ranking samples: NDCG@10 of the teacher ranking against
// the scenario's positive item, pass iff >= threshold. Reflection samples
// pass vacuously. Requires format screening to have passed.
std::optional<FailReason> screen_quality(SftSample& sample, const SftConfig& config);

// Applies both screens in order and stamps screen_status.
void screen(SftSample& sample, const SftConfig& config);

// "State the error, ask again": appends the failed output and a targeted
// error message to the conversation and re-queries the teacher, up to
// max_rounds or until the screens pass. Never alters the scenario's
// candidates or positive item.
SftSample augment_rethink(const SftSample& failed_sample, llm::Backend& teacher,
                          const SftConfig& config, int max_rounds);

struct ExportManifest {
  std::size_t exported = 0;
  std::size_t passed = 0;
  std::size_t regenerated = 0;
  std::size_t failed = 0;
  std::size_t unscreened = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (scenario_id, reason)
  std::string config_digest;
};

// Newline-delimited chat-format records; only passed/regenerated samples
// unless include_failed. Byte-stable for identical inputs.
ExportManifest export_corpus(const std::vector<SftSample>& samples,
                             const std::filesystem::path& path, const SftConfig& config,
                             bool include_failed = false);

void write_manifest(const ExportManifest& manifest, const std::filesystem::path& path);

std::string config_digest(const SftConfig& config);

}  // namespace rr::sftgen
