#include "reflectrank/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "reflectrank/common.hpp"

namespace rr::corpus {
namespace {

using nlohmann::json;

// Latin-1 byte -> UTF-8. ML-1M titles carry accented characters.
std::string latin1_to_utf8(const std::string& in) {
  std::string out;
  out.reserve(in.size());
  for (unsigned char c : in) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xc0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& line, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

[[noreturn]] void malformed(const std::filesystem::path& file, std::size_t lineno,
                            const std::string& what) {
  throw CorpusError(file.filename().string() + ":" + std::to_string(lineno) + ": " + what);
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw CorpusError("cannot open " + p.string());
  return f;
}

RawData load_movielens(const std::filesystem::path& dir) {
  RawData data;

  {
    auto f = open_or_throw(dir / "movies.dat");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto fields = split(line, "::");
      if (fields.size() != 3) malformed(dir / "movies.dat", lineno, "expected 3 fields");
      Item item;
      item.item_id = fields[0];
      std::string title = latin1_to_utf8(fields[1]);
      // trailing "(YYYY)" is the release year
      if (title.size() >= 6 && title.back() == ')') {
        auto open = title.rfind('(');
        if (open != std::string::npos && title.size() - open == 6) {
          std::string y = title.substr(open + 1, 4);
          if (std::all_of(y.begin(), y.end(), [](unsigned char c) { return std::isdigit(c); })) {
            item.year = std::stoi(y);
            title = title.substr(0, open);
            while (!title.empty() && title.back() == ' ') title.pop_back();
          }
        }
      }
      item.title = title;
      if (item.title.empty()) malformed(dir / "movies.dat", lineno, "empty title");
      if (!fields[2].empty()) item.attributes = split(latin1_to_utf8(fields[2]), "|");
      data.catalog.push_back(std::move(item));
    }
  }

  if (std::filesystem::exists(dir / "users.dat")) {
    auto f = open_or_throw(dir / "users.dat");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line.back() == '\r') line.pop_back();
      auto fields = split(line, "::");
      if (fields.size() < 4) malformed(dir / "users.dat", lineno, "expected >= 4 fields");
      data.users.push_back({fields[0], fields[1], fields[2], fields[3]});
    }
  }

  std::unordered_set<std::string> known_items;
  for (const auto& it : data.catalog) {
    if (!known_items.insert(it.item_id).second)
      throw CorpusError("duplicate item_id " + it.item_id);
  }

  {
    auto f = open_or_throw(dir / "ratings.dat");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line.back() == '\r') line.pop_back();
      auto fields = split(line, "::");
      if (fields.size() != 4) malformed(dir / "ratings.dat", lineno, "expected 4 fields");
      Interaction in;
      in.user_id = fields[0];
      in.item_id = fields[1];
      try {
        in.rating = std::stoi(fields[2]);
        in.timestamp = std::stoll(fields[3]);
      } catch (const std::exception&) {
        malformed(dir / "ratings.dat", lineno, "non-numeric rating or timestamp");
      }
      if (in.rating < 1 || in.rating > 5)
        malformed(dir / "ratings.dat", lineno, "rating out of range");
      if (!known_items.count(in.item_id))
        malformed(dir / "ratings.dat", lineno, "unknown item " + in.item_id);
      in.positive = in.rating > 3;
      data.interactions.push_back(std::move(in));
    }
  }
  return data;
}

RawData load_amazon(const std::filesystem::path& dir) {
  RawData data;
  std::unordered_set<std::string> known_items;

  {
    auto f = open_or_throw(dir / "metadata.jsonl");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        malformed(dir / "metadata.jsonl", lineno, e.what());
      }
      Item item;
      item.item_id = j.at("asin").get<std::string>();
      item.title = j.value("title", "");
      if (item.title.empty()) malformed(dir / "metadata.jsonl", lineno, "empty title");
      if (j.contains("brand") && j["brand"].is_string() && !j["brand"].get<std::string>().empty())
        item.attributes.push_back(j["brand"].get<std::string>());
      if (!known_items.insert(item.item_id).second)
        malformed(dir / "metadata.jsonl", lineno, "duplicate asin " + item.item_id);
      data.catalog.push_back(std::move(item));
    }
  }

  {
    auto f = open_or_throw(dir / "interactions.jsonl");
    std::string line;
    std::size_t lineno = 0;
    std::unordered_set<std::string> seen_users;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        malformed(dir / "interactions.jsonl", lineno, e.what());
      }
      Interaction in;
      try {
        in.user_id = j.at("reviewerID").get<std::string>();
        in.item_id = j.at("asin").get<std::string>();
        in.rating = static_cast<int>(j.at("overall").get<double>());
        in.timestamp = j.at("unixReviewTime").get<std::int64_t>();
      } catch (const json::exception& e) {
        malformed(dir / "interactions.jsonl", lineno, e.what());
      }
      if (in.rating < 1 || in.rating > 5)
        malformed(dir / "interactions.jsonl", lineno, "rating out of range");
      if (!known_items.count(in.item_id))
        malformed(dir / "interactions.jsonl", lineno, "unknown item " + in.item_id);
      in.positive = in.rating > 3;
      if (seen_users.insert(in.user_id).second)
        data.users.push_back({in.user_id, "", "", ""});
      data.interactions.push_back(std::move(in));
    }
  }
  return data;
}

}  // namespace

RawData load_raw(RawFormat format, const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) throw CorpusError("path does not exist: " + dir.string());
  return format == RawFormat::movielens ? load_movielens(dir) : load_amazon(dir);
}

std::vector<Interaction> kcore_filter(std::vector<Interaction> interactions, int k) {
  if (k < 1) throw CorpusError("kcore_filter: k must be >= 1");
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, int> user_count, item_count;
    for (const auto& in : interactions) {
      ++user_count[in.user_id];
      ++item_count[in.item_id];
    }
    std::vector<Interaction> kept;
    kept.reserve(interactions.size());
    for (auto& in : interactions) {
      if (user_count[in.user_id] >= k && item_count[in.item_id] >= k)
        kept.push_back(std::move(in));
      else
        changed = true;
    }
    interactions = std::move(kept);
  }
  return interactions;
}

std::vector<InteractionSequence> build_sequences(const std::vector<Interaction>& interactions,
                                                 std::size_t max_len, bool strict) {
  std::unordered_map<std::string, std::vector<Interaction>> by_user;
  std::vector<std::string> order;  // first-seen order, re-sorted below
  for (const auto& in : interactions) {
    auto [it, inserted] = by_user.try_emplace(in.user_id);
    if (inserted) order.push_back(in.user_id);
    it->second.push_back(in);
  }
  std::sort(order.begin(), order.end());

  std::vector<InteractionSequence> out;
  out.reserve(order.size());
  for (const auto& uid : order) {
    auto& rows = by_user[uid];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Interaction& a, const Interaction& b) {
                       if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                       return a.item_id < b.item_id;
                     });
    std::set<std::tuple<std::string, std::string, std::int64_t>> seen;
    std::vector<Interaction> clean;
    for (auto& in : rows) {
      auto key = std::make_tuple(in.user_id, in.item_id, in.timestamp);
      if (!seen.insert(key).second) {
        if (strict)
          throw CorpusError("duplicate interaction (" + in.user_id + ", " + in.item_id + ", " +
                            std::to_string(in.timestamp) + ")");
        continue;  // lenient: drop the duplicate
      }
      clean.push_back(std::move(in));
    }
    // keep the most recent max_len so the last item stays available as the
    // held-out target
    if (clean.size() > max_len)
      clean.erase(clean.begin(), clean.end() - static_cast<std::ptrdiff_t>(max_len));
    out.push_back({uid, std::move(clean)});
  }
  return out;
}

std::pair<std::vector<InteractionSequence>, std::vector<InteractionSequence>>
sample_split(const std::vector<InteractionSequence>& sequences, std::size_t n_train,
             std::size_t n_test, std::uint64_t seed) {
  if (n_train + n_test > sequences.size())
    throw CorpusError("sample_split: need " + std::to_string(n_train + n_test) + " users, have " +
                      std::to_string(sequences.size()) + " (short by " +
                      std::to_string(n_train + n_test - sequences.size()) + ")");
  std::vector<std::size_t> idx(sequences.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // sort by user_id so the shuffle result is independent of input order
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return sequences[a].user_id < sequences[b].user_id;
  });
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_int(i)]);

  std::pair<std::vector<InteractionSequence>, std::vector<InteractionSequence>> out;
  for (std::size_t i = 0; i < n_train; ++i) out.first.push_back(sequences[idx[i]]);
  for (std::size_t i = 0; i < n_test; ++i) out.second.push_back(sequences[idx[n_train + i]]);
  auto by_uid = [](const InteractionSequence& a, const InteractionSequence& b) {
    return a.user_id < b.user_id;
  };
  std::sort(out.first.begin(), out.first.end(), by_uid);
  std::sort(out.second.begin(), out.second.end(), by_uid);
  return out;
}

DatasetStats compute_stats(const std::vector<Interaction>& interactions) {
  std::unordered_set<std::string> users, items;
  for (const auto& in : interactions) {
    users.insert(in.user_id);
    items.insert(in.item_id);
  }
  DatasetStats s;
  s.n_users = users.size();
  s.n_items = items.size();
  s.n_interactions = interactions.size();
  double cells = static_cast<double>(s.n_users) * static_cast<double>(s.n_items);
  if (cells == 0.0) {
    s.sparsity = 0.0;
    s.degenerate = true;
  } else {
    s.sparsity = 1.0 - static_cast<double>(s.n_interactions) / cells;
  }
  return s;
}

DatasetStats compute_stats(const std::vector<InteractionSequence>& sequences) {
  std::vector<Interaction> flat;
  for (const auto& seq : sequences)
    flat.insert(flat.end(), seq.interactions.begin(), seq.interactions.end());
  return compute_stats(flat);
}

void write_canonical(const std::filesystem::path& path,
                     const std::vector<InteractionSequence>& sequences) {
  std::ofstream f(path);
  if (!f) throw CorpusError("cannot write " + path.string());
  for (const auto& seq : sequences) {
    for (const auto& in : seq.interactions) {
      nlohmann::json j{{"user_id", in.user_id},
                       {"item_id", in.item_id},
                       {"rating", in.rating},
                       {"timestamp", in.timestamp},
                       {"positive", in.positive}};
      f << j.dump() << '\n';
    }
  }
  if (!f) throw CorpusError("write failed: " + path.string());
}

}  // namespace rr::corpus
