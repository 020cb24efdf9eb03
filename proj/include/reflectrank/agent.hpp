#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reflectrank/corpus.hpp"
#include "reflectrank/llm.hpp"

namespace rr::agent {

enum class Feedback { positive, negative };
enum class Prediction { liked, disliked };
enum class ParseMode { strict, lenient };
enum class CompletionFlag { complete, auto_completed };

const char* to_string(Feedback f);
const char* to_string(Prediction p);

// A user agent's textual preference state plus interaction record. Treated
// as an immutable value: updates return a new memory with version + 1.
struct AgentMemory {
  corpus::UserRecord user;
  std::string preference_description;
  std::vector<std::pair<corpus::Item, Feedback>> history;  // chronological
  int version = 0;
};

struct RankingTask {
  AgentMemory memory;
  std::vector<corpus::Item> candidates;
  // Hidden ground truth, harness-side only; never rendered into the prompt.
  std::string positive_item_id;
};

struct RankingOutput {
  std::string think;
  std::vector<std::pair<std::string, std::string>> ranked;  // (item_id, explanation)
  CompletionFlag flag = CompletionFlag::complete;
};

struct ReflectionTask {
  AgentMemory memory;
  corpus::Item target;
  Prediction system_prediction = Prediction::liked;
  Feedback actual_feedback = Feedback::positive;
};

struct FeedbackSignal {
  Prediction predicted = Prediction::liked;
  Feedback actual = Feedback::positive;
  bool discrepant = false;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind {
    MissingRanking,
    UnknownTitle,
    DuplicateTitle,
    IncompleteRanking,
    MissingUpdateMarker
  };
  ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Slot-template store. The prompts/ directory is the single source of truth;
// tests and docs render identical bytes from it.
class PromptLibrary {
 public:
  static const PromptLibrary& defaults();  // loaded from RR_DEFAULT_PROMPTS_DIR
  static PromptLibrary load(const std::filesystem::path& dir);

  std::string ranking_system;
  std::string ranking_user;
  std::string reflection_system;
  std::string reflection_user;
};

std::vector<llm::ChatMessage> build_ranking_prompt(const AgentMemory& memory,
                                                   const std::vector<corpus::Item>& candidates,
                                                   const PromptLibrary& prompts = PromptLibrary::defaults());

// Matches numbered output lines back to candidate titles (exact first, then
// case/whitespace-normalized). Lenient mode appends unlisted candidates in
// their original order and flags the output auto_completed.
RankingOutput parse_ranking_response(const std::string& text,
                                     const std::vector<corpus::Item>& candidates,
                                     ParseMode mode = ParseMode::strict);

// Renders an output back into the numbered-list shape the parser accepts.
std::string render_ranking_output(const RankingOutput& output,
                                  const std::vector<corpus::Item>& candidates);

// 1-based rank <= liked_cutoff (inclusive) counts as liked.
Prediction classify_prediction(const RankingOutput& output, const std::string& item_id,
                               int liked_cutoff = 10);

std::optional<int> rank_of(const RankingOutput& output, const std::string& item_id);

std::vector<llm::ChatMessage> build_reflection_prompt(const ReflectionTask& task,
                                                      const PromptLibrary& prompts = PromptLibrary::defaults());

// Text after the final "Updated User description:" marker, stripped.
std::string parse_reflection_response(const std::string& text);

AgentMemory update_memory(const AgentMemory& memory, const corpus::Item& item, Feedback feedback,
                          std::string updated_description);

enum class ReflectMode { always, on_discrepancy };

struct CycleConfig {
  int liked_cutoff = 10;
  ReflectMode reflect = ReflectMode::always;
  ParseMode parse_mode = ParseMode::lenient;
  llm::BackendConfig backend;
  PromptLibrary prompts = PromptLibrary::defaults();
};

struct CycleResult {
  RankingOutput output;
  FeedbackSignal signal;
  AgentMemory memory;
  bool reflected = false;
};

class CycleError : public std::runtime_error {
 public:
  CycleError(std::string stage, const std::string& what)
      : std::runtime_error("[stage=" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// rank -> classify -> (reflect ->) memory update. The input memory is never
// mutated; when reflection is skipped only the history append and version
// bump are applied.
CycleResult run_agent_cycle(llm::Backend& backend, const AgentMemory& memory,
                            const std::vector<corpus::Item>& candidates,
                            const std::string& positive_item_id, Feedback actual_feedback,
                            const CycleConfig& config = {});

}  // namespace rr::agent
