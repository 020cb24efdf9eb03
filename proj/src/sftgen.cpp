#include "reflectrank/sftgen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "reflectrank/common.hpp"
#include "reflectrank/eval.hpp"

namespace rr::sftgen {
namespace {

using nlohmann::json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::optional<std::string> think_block(const std::string& text) {
  auto open = text.find("<think>");
  auto close = text.find("</think>");
  if (open == std::string::npos || close == std::string::npos || close <= open)
    return std::nullopt;
  return text.substr(open + 7, close - open - 7);
}

// Explicit placement of the positive item in the teacher output; lenient
// auto-appends do not count.
std::optional<int> teacher_rank(const SftSample& sample) {
  agent::RankingOutput out;
  try {
    out = agent::parse_ranking_response(sample.target_output, sample.candidates,
                                        agent::ParseMode::lenient);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  for (std::size_t i = 0; i < out.ranked.size(); ++i)
    if (out.ranked[i].first == sample.positive_item_id && out.ranked[i].second != "(auto-completed)")
      return static_cast<int>(i) + 1;
  return std::nullopt;
}

bool has_numbered_lines(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::size_t p = pos;
    while (p < eol && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
    std::size_t d = p;
    while (d < eol && std::isdigit(static_cast<unsigned char>(text[d]))) ++d;
    if (d > p && d < eol && (text[d] == '.' || text[d] == ')')) return true;
    pos = eol + 1;
  }
  return false;
}

std::string error_feedback(const SftSample& sample, FailReason reason) {
  switch (reason) {
    case FailReason::MissingCoT:
      return "Your previous response is missing the <think> </think> reasoning block. "
             "Please think step by step inside <think> tags before the ranking.";
    case FailReason::MissingRanking:
      return "Your previous response does not contain a parseable numbered ranking list. "
             "Please list every candidate as \"N. Title - Explanation\", one per line.";
    case FailReason::MissingUpdateMarker:
      return "Your previous response is missing the \"Updated User description:\" line. "
             "Please end with exactly that marker followed by the new description.";
    case FailReason::MissingKeywords:
      return "Your previous reasoning does not discuss the user's preferences. "
             "Please explain the ranking in terms of what the user prefers, enjoys, or dislikes.";
    case FailReason::NoPositiveItem: {
      return "Your previous ranking omitted a candidate the user actually interacted with. "
             "Please produce a complete ranking covering all candidates.";
    }
    case FailReason::LowNdcg: {
      std::string obs = "not in the list";
      if (auto r = teacher_rank(sample)) obs = "ranked " + std::to_string(*r);
      return "Your previous ranking placed the item the user actually chose too low (" + obs +
             "). Reconsider the user's history and rank the best-matching candidate higher.";
    }
    case FailReason::BackendError:
      return "Your previous response could not be used. Please answer again following the "
             "requested format.";
  }
  return "Please try again.";
}

}  // namespace

const char* to_string(FailReason r) {
  switch (r) {
    case FailReason::MissingCoT: return "MissingCoT";
    case FailReason::MissingRanking: return "MissingRanking";
    case FailReason::MissingUpdateMarker: return "MissingUpdateMarker";
    case FailReason::MissingKeywords: return "MissingKeywords";
    case FailReason::NoPositiveItem: return "NoPositiveItem";
    case FailReason::LowNdcg: return "LowNdcg";
    case FailReason::BackendError: return "BackendError";
  }
  return "?";
}

std::vector<SftSample> generate_samples(llm::Backend& teacher, const std::vector<Scenario>& scenarios,
                                        const SftConfig& config) {
  std::vector<SftSample> samples;
  samples.reserve(scenarios.size());
  for (const auto& scenario : scenarios) {
    SftSample s;
    s.scenario_id = scenario.id;
    s.teacher_model = config.teacher_model;
    if (std::holds_alternative<agent::RankingTask>(scenario.task)) {
      const auto& task = std::get<agent::RankingTask>(scenario.task);
      s.task_kind = TaskKind::ranking;
      s.input_messages = agent::build_ranking_prompt(task.memory, task.candidates);
      s.candidates = task.candidates;
      s.positive_item_id = task.positive_item_id;
    } else {
      const auto& task = std::get<agent::ReflectionTask>(scenario.task);
      s.task_kind = TaskKind::reflection;
      s.input_messages = agent::build_reflection_prompt(task);
    }
    llm::CompletionRequest req;
    req.messages = s.input_messages;
    req.temperature = config.temperature;
    req.model_name = config.teacher_model;
    try {
      s.target_output = llm::complete(teacher, req, config.backend);
    } catch (const llm::LlmError& e) {
      s.screen_status = ScreenStatus::failed;
      s.fail_reason = FailReason::BackendError;
      s.target_output = "";
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::optional<FailReason> screen_format(const SftSample& sample, const SftConfig& config) {
  auto think = think_block(sample.target_output);
  if (!think) return FailReason::MissingCoT;

  if (sample.task_kind == TaskKind::reflection) {
    if (sample.target_output.find("Updated User description:") == std::string::npos)
      return FailReason::MissingUpdateMarker;
  } else {
    if (!has_numbered_lines(sample.target_output)) return FailReason::MissingRanking;
  }

  std::string rationale = lower(*think);
  bool keyword_hit = config.keywords.empty();
  for (const auto& kw : config.keywords)
    if (rationale.find(lower(kw)) != std::string::npos) {
      keyword_hit = true;
      break;
    }
  if (!keyword_hit) return FailReason::MissingKeywords;

  if (sample.task_kind == TaskKind::ranking) {
    if (!teacher_rank(sample)) return FailReason::NoPositiveItem;
  }
  return std::nullopt;
}

std::optional<FailReason> screen_quality(SftSample& sample, const SftConfig& config) {
  if (sample.task_kind == TaskKind::reflection) return std::nullopt;  // vacuous pass
  auto rank = teacher_rank(sample);
  sample.quality_ndcg10 = eval::ndcg_at_k(rank, 10);
  if (*sample.quality_ndcg10 < config.threshold_ndcg10) return FailReason::LowNdcg;
  return std::nullopt;
}

void screen(SftSample& sample, const SftConfig& config) {
  if (sample.screen_status == ScreenStatus::failed && sample.fail_reason == FailReason::BackendError)
    return;
  if (auto fail = screen_format(sample, config)) {
    sample.screen_status = ScreenStatus::failed;
    sample.fail_reason = fail;
    return;
  }
  if (auto fail = screen_quality(sample, config)) {
    sample.screen_status = ScreenStatus::failed;
    sample.fail_reason = fail;
    return;
  }
  if (sample.screen_status != ScreenStatus::regenerated) sample.screen_status = ScreenStatus::passed;
  sample.fail_reason.reset();
}

SftSample augment_rethink(const SftSample& failed_sample, llm::Backend& teacher,
                          const SftConfig& config, int max_rounds) {
  if (failed_sample.screen_status != ScreenStatus::failed || !failed_sample.fail_reason)
    throw std::invalid_argument("augment_rethink: sample has not failed screening");

  SftSample current = failed_sample;
  std::vector<llm::ChatMessage> conversation = failed_sample.input_messages;

  for (int round = 0; round < max_rounds; ++round) {
    conversation.push_back({"assistant", current.target_output});
    conversation.push_back(
        {"user", error_feedback(current, *current.fail_reason) +
                     " (error: " + to_string(*current.fail_reason) + ")"});

    llm::CompletionRequest req;
    req.messages = conversation;
    req.temperature = config.temperature;
    req.model_name = config.teacher_model;
    try {
      current.target_output = llm::complete(teacher, req, config.backend);
    } catch (const llm::LlmError&) {
      current.fail_reason = FailReason::BackendError;
      current.attempt += 1;
      continue;
    }
    current.attempt += 1;
    current.screen_status = ScreenStatus::unscreened;
    screen(current, config);
    if (current.screen_status == ScreenStatus::passed) {
      current.screen_status = ScreenStatus::regenerated;
      return current;
    }
  }
  current.screen_status = ScreenStatus::failed;
  return current;
}

std::string config_digest(const SftConfig& config) {
  json j{{"teacher_model", config.teacher_model},
         {"temperature", config.temperature},
         {"threshold_ndcg10", config.threshold_ndcg10},
         {"keywords", config.keywords},
         {"max_rethink_rounds", config.max_rethink_rounds}};
  return to_hex(fnv1a64(j.dump()));
}

ExportManifest export_corpus(const std::vector<SftSample>& samples,
                             const std::filesystem::path& path, const SftConfig& config,
                             bool include_failed) {
  ExportManifest manifest;
  manifest.config_digest = config_digest(config);

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());

  for (const auto& s : samples) {
    switch (s.screen_status) {
      case ScreenStatus::passed: ++manifest.passed; break;
      case ScreenStatus::regenerated: ++manifest.regenerated; break;
      case ScreenStatus::failed:
        ++manifest.failed;
        manifest.failures.emplace_back(s.scenario_id,
                                       s.fail_reason ? to_string(*s.fail_reason) : "?");
        break;
      case ScreenStatus::unscreened: ++manifest.unscreened; break;
    }
    bool ok = s.screen_status == ScreenStatus::passed || s.screen_status == ScreenStatus::regenerated;
    if (!ok && !include_failed) continue;

    json messages = json::array();
    for (const auto& m : s.input_messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    messages.push_back({{"role", "assistant"}, {"content", s.target_output}});
    json meta{{"task_kind", s.task_kind == TaskKind::ranking ? "ranking" : "reflection"},
              {"teacher_model", s.teacher_model},
              {"attempt", s.attempt}};
    if (s.quality_ndcg10) meta["quality_ndcg10"] = *s.quality_ndcg10;
    if (include_failed) {
      meta["screen_status"] = ok ? (s.screen_status == ScreenStatus::passed ? "passed" : "regenerated")
                                 : (s.screen_status == ScreenStatus::failed ? "failed" : "unscreened");
      if (s.fail_reason) meta["fail_reason"] = to_string(*s.fail_reason);
    }
    f << json{{"messages", messages}, {"meta", meta}}.dump() << '\n';
    ++manifest.exported;
  }
  if (!f) throw std::runtime_error("write failed: " + path.string());
  return manifest;
}

void write_manifest(const ExportManifest& manifest, const std::filesystem::path& path) {
  json j{{"exported", manifest.exported},
         {"passed", manifest.passed},
         {"regenerated", manifest.regenerated},
         {"failed", manifest.failed},
         {"unscreened", manifest.unscreened},
         {"config_digest", manifest.config_digest}};
  j["failures"] = json::array();
  for (const auto& [id, reason] : manifest.failures)
    j["failures"].push_back({{"scenario_id", id}, {"reason", reason}});
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace rr::sftgen
