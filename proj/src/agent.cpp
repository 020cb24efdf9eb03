#include "reflectrank/agent.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace rr::agent {
namespace {

constexpr const char* kUpdateMarker = "Updated User description:";
constexpr const char* kAutoFill = "(auto-completed)";

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot read prompt template " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string fill(std::string tmpl, const std::vector<std::pair<std::string, std::string>>& slots) {
  for (const auto& [name, value] : slots) {
    std::string token = "{{" + name + "}}";
    std::size_t pos;
    while ((pos = tmpl.find(token)) != std::string::npos)
      tmpl.replace(pos, token.size(), value);
  }
  return tmpl;
}

std::string format_item(const corpus::Item& item) {
  std::string s = item.title;
  if (item.year) s += " (" + std::to_string(*item.year) + ")";
  if (!item.attributes.empty()) {
    s += " [";
    for (std::size_t i = 0; i < item.attributes.size(); ++i) {
      if (i) s += ", ";
      s += item.attributes[i];
    }
    s += "]";
  }
  return s;
}

std::string format_profile(const corpus::UserRecord& user) {
  std::vector<std::string> parts;
  if (!user.gender.empty()) parts.push_back("Gender: " + user.gender);
  if (!user.age.empty()) parts.push_back("Age: " + user.age);
  if (!user.occupation.empty()) parts.push_back("Occupation: " + user.occupation);
  if (parts.empty()) return "(no demographics)";
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += ", ";
    s += parts[i];
  }
  return s;
}

std::string format_history(const AgentMemory& memory) {
  if (memory.history.empty()) return "(no prior interactions)";
  std::string s;
  for (const auto& [item, feedback] : memory.history) {
    s += "- " + format_item(item) + " -- " +
         (feedback == Feedback::positive ? "liked" : "disliked") + "\n";
  }
  s.pop_back();
  return s;
}

std::string format_description(const std::string& description) {
  return description.empty() ? "(no description yet)" : description;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string normalize(const std::string& s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

const char* to_string(Feedback f) { return f == Feedback::positive ? "positive" : "negative"; }
const char* to_string(Prediction p) {
  return p == Prediction::liked ? "Predicted Liked" : "Predicted Disliked";
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  lib.ranking_system = read_file(dir / "ranking_system.txt");
  lib.ranking_user = read_file(dir / "ranking_user.txt");
  lib.reflection_system = read_file(dir / "reflection_system.txt");
  lib.reflection_user = read_file(dir / "reflection_user.txt");
  return lib;
}

const PromptLibrary& PromptLibrary::defaults() {
  static const PromptLibrary lib = load(RR_DEFAULT_PROMPTS_DIR);
  return lib;
}

std::vector<llm::ChatMessage> build_ranking_prompt(const AgentMemory& memory,
                                                   const std::vector<corpus::Item>& candidates,
                                                   const PromptLibrary& prompts) {
  std::string cands;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    cands += std::to_string(i + 1) + ". " + format_item(candidates[i]) + "\n";
  if (!cands.empty()) cands.pop_back();

  std::string user = fill(prompts.ranking_user,
                          {{"profile", format_profile(memory.user)},
                           {"description", format_description(memory.preference_description)},
                           {"history", format_history(memory)},
                           {"candidates", cands}});
  return {{"system", trim(prompts.ranking_system)}, {"user", trim(user)}};
}

RankingOutput parse_ranking_response(const std::string& text,
                                     const std::vector<corpus::Item>& candidates,
                                     ParseMode mode) {
  RankingOutput out;
  std::string body = text;
  auto topen = text.find("<think>");
  auto tclose = text.find("</think>");
  if (topen != std::string::npos && tclose != std::string::npos && tclose > topen) {
    out.think = trim(text.substr(topen + 7, tclose - topen - 7));
    body = text.substr(tclose + 8);
  }

  std::vector<bool> used(candidates.size(), false);
  bool any_line = false;
  bool irregular = false;

  std::istringstream lines(body);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    std::string t = trim(line);
    std::size_t p = 0;
    while (p < t.size() && std::isdigit(static_cast<unsigned char>(t[p]))) ++p;
    if (p == 0 || p >= t.size() || (t[p] != '.' && t[p] != ')')) continue;
    std::string content = trim(t.substr(p + 1));
    if (content.empty()) continue;
    any_line = true;

    // exact title prefix match first, longest wins
    std::ptrdiff_t best = -1;
    std::size_t best_len = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const std::string& title = candidates[c].title;
      if (content.compare(0, title.size(), title) == 0 && title.size() > best_len) {
        best = static_cast<std::ptrdiff_t>(c);
        best_len = title.size();
      }
    }
    if (best < 0) {
      // normalized prefix match
      std::string ncontent = normalize(content);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        std::string ntitle = normalize(candidates[c].title);
        if (ncontent.compare(0, ntitle.size(), ntitle) == 0 && ntitle.size() > best_len) {
          best = static_cast<std::ptrdiff_t>(c);
          best_len = candidates[c].title.size();
          // recover the un-normalized prefix length approximately: fall back
          // to matching up to the separator below
          best_len = ntitle.size();
        }
      }
      if (best >= 0) {
        // explanation starts after the first " - " following the title text
        auto sep = content.find(" - ");
        std::string expl = sep == std::string::npos ? "" : trim(content.substr(sep + 3));
        if (used[static_cast<std::size_t>(best)]) {
          if (mode == ParseMode::strict)
            throw ParseError(ParseError::Kind::DuplicateTitle,
                             "duplicate title at line " + std::to_string(lineno) + ": " + content);
          irregular = true;
          continue;
        }
        used[static_cast<std::size_t>(best)] = true;
        out.ranked.emplace_back(candidates[static_cast<std::size_t>(best)].item_id, expl);
        continue;
      }
      if (mode == ParseMode::strict)
        throw ParseError(ParseError::Kind::UnknownTitle,
                         "unknown title at line " + std::to_string(lineno) + ": " + content);
      irregular = true;
      continue;
    }

    std::string rest = trim(content.substr(best_len));
    if (rest.rfind("- ", 0) == 0) rest = trim(rest.substr(2));
    else if (!rest.empty() && rest.front() == '-') rest = trim(rest.substr(1));
    if (used[static_cast<std::size_t>(best)]) {
      if (mode == ParseMode::strict)
        throw ParseError(ParseError::Kind::DuplicateTitle,
                         "duplicate title at line " + std::to_string(lineno) + ": " + content);
      irregular = true;
      continue;
    }
    used[static_cast<std::size_t>(best)] = true;
    out.ranked.emplace_back(candidates[static_cast<std::size_t>(best)].item_id, rest);
  }

  if (!any_line && mode == ParseMode::strict)
    throw ParseError(ParseError::Kind::MissingRanking, "no numbered ranking lines found");

  bool complete = out.ranked.size() == candidates.size();
  if (!complete) {
    if (mode == ParseMode::strict)
      throw ParseError(ParseError::Kind::IncompleteRanking,
                       "ranking lists " + std::to_string(out.ranked.size()) + " of " +
                           std::to_string(candidates.size()) + " candidates");
    for (std::size_t c = 0; c < candidates.size(); ++c)
      if (!used[c]) out.ranked.emplace_back(candidates[c].item_id, kAutoFill);
    out.flag = CompletionFlag::auto_completed;
  } else {
    out.flag = irregular ? CompletionFlag::auto_completed : CompletionFlag::complete;
  }
  // treat the auto-fill marker as the flag carrier so render/parse round-trips
  for (const auto& [id, expl] : out.ranked)
    if (expl == kAutoFill) out.flag = CompletionFlag::auto_completed;
  return out;
}

std::string render_ranking_output(const RankingOutput& output,
                                  const std::vector<corpus::Item>& candidates) {
  std::string s = "<think>\n" + output.think + "\n</think>\n";
  for (std::size_t i = 0; i < output.ranked.size(); ++i) {
    const auto& [id, expl] = output.ranked[i];
    auto it = std::find_if(candidates.begin(), candidates.end(),
                           [&](const corpus::Item& c) { return c.item_id == id; });
    if (it == candidates.end())
      throw std::invalid_argument("render_ranking_output: item " + id + " not in candidates");
    s += std::to_string(i + 1) + ". " + it->title;
    if (!expl.empty()) s += " - " + expl;
    s += "\n";
  }
  return s;
}

std::optional<int> rank_of(const RankingOutput& output, const std::string& item_id) {
  for (std::size_t i = 0; i < output.ranked.size(); ++i)
    if (output.ranked[i].first == item_id) return static_cast<int>(i) + 1;
  return std::nullopt;
}

Prediction classify_prediction(const RankingOutput& output, const std::string& item_id,
                               int liked_cutoff) {
  auto rank = rank_of(output, item_id);
  if (!rank) throw std::invalid_argument("classify_prediction: item " + item_id + " not ranked");
  return *rank <= liked_cutoff ? Prediction::liked : Prediction::disliked;
}

std::vector<llm::ChatMessage> build_reflection_prompt(const ReflectionTask& task,
                                                      const PromptLibrary& prompts) {
  bool discrepant = (task.system_prediction == Prediction::liked &&
                     task.actual_feedback == Feedback::negative) ||
                    (task.system_prediction == Prediction::disliked &&
                     task.actual_feedback == Feedback::positive);
  std::string user = fill(
      prompts.reflection_user,
      {{"profile", format_profile(task.memory.user)},
       {"description", format_description(task.memory.preference_description)},
       {"history", format_history(task.memory)},
       {"target", format_item(task.target)},
       {"prediction", to_string(task.system_prediction)},
       {"feedback", std::string(to_string(task.actual_feedback)) + " (the user " +
                        (task.actual_feedback == Feedback::positive ? "liked" : "disliked") +
                        " this movie)"},
       {"discrepancy", discrepant
            ? "The prediction disagrees with the user's actual feedback."
            : "The prediction agrees with the user's actual feedback."}});
  return {{"system", trim(prompts.reflection_system)}, {"user", trim(user)}};
}

std::string parse_reflection_response(const std::string& text) {
  auto pos = text.rfind(kUpdateMarker);  // teacher models sometimes restate; last wins
  if (pos == std::string::npos)
    throw ParseError(ParseError::Kind::MissingUpdateMarker,
                     std::string("marker \"") + kUpdateMarker + "\" not found");
  return trim(text.substr(pos + std::string(kUpdateMarker).size()));
}

AgentMemory update_memory(const AgentMemory& memory, const corpus::Item& item, Feedback feedback,
                          std::string updated_description) {
  AgentMemory next = memory;
  next.history.emplace_back(item, feedback);
  next.preference_description = std::move(updated_description);
  next.version = memory.version + 1;
  return next;
}

CycleResult run_agent_cycle(llm::Backend& backend, const AgentMemory& memory,
                            const std::vector<corpus::Item>& candidates,
                            const std::string& positive_item_id, Feedback actual_feedback,
                            const CycleConfig& config) {
  auto positive = std::find_if(candidates.begin(), candidates.end(),
                               [&](const corpus::Item& c) { return c.item_id == positive_item_id; });
  if (positive == candidates.end())
    throw CycleError("rank", "positive item " + positive_item_id + " not among candidates");

  CycleResult result;
  try {
    llm::CompletionRequest req;
    req.messages = build_ranking_prompt(memory, candidates, config.prompts);
    std::string text = llm::complete(backend, req, config.backend);
    result.output = parse_ranking_response(text, candidates, config.parse_mode);
  } catch (const CycleError&) {
    throw;
  } catch (const std::exception& e) {
    throw CycleError("rank", e.what());
  }

  result.signal.predicted = classify_prediction(result.output, positive_item_id, config.liked_cutoff);
  result.signal.actual = actual_feedback;
  result.signal.discrepant =
      (result.signal.predicted == Prediction::liked && actual_feedback == Feedback::negative) ||
      (result.signal.predicted == Prediction::disliked && actual_feedback == Feedback::positive);

  bool reflect = config.reflect == ReflectMode::always || result.signal.discrepant;
  std::string description = memory.preference_description;
  if (reflect) {
    try {
      ReflectionTask task{memory, *positive, result.signal.predicted, actual_feedback};
      llm::CompletionRequest req;
      req.messages = build_reflection_prompt(task, config.prompts);
      std::string text = llm::complete(backend, req, config.backend);
      description = parse_reflection_response(text);
      result.reflected = true;
    } catch (const std::exception& e) {
      throw CycleError("reflect", e.what());
    }
  }
  result.memory = update_memory(memory, *positive, actual_feedback, std::move(description));
  return result;
}

}  // namespace rr::agent
