#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rr::corpus {

struct Item {
  std::string item_id;
  std::string title;
  std::optional<int> year;
  std::vector<std::string> attributes;  // genres / brand tags
  std::map<std::string, std::string> extra;
};

struct UserRecord {
  std::string user_id;
  std::string gender;      // empty when unknown
  std::string age;         // empty when unknown
  std::string occupation;  // empty when unknown
};

struct Interaction {
  std::string user_id;
  std::string item_id;
  int rating = 0;              // 1..5
  std::int64_t timestamp = 0;  // unix seconds
  bool positive = false;       // rating > 3
};

struct InteractionSequence {
  std::string user_id;
  std::vector<Interaction> interactions;  // ascending timestamps, length <= max_len
};

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  double sparsity = 0.0;  // 1 - inters / (users * items)
  bool degenerate = false;  // users*items == 0, sparsity forced to 0
};

enum class RawFormat { movielens, amazon };

struct RawData {
  std::vector<Item> catalog;
  std::vector<UserRecord> users;
  std::vector<Interaction> interactions;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads the raw layout under `dir`:
//   movielens: ratings.dat / movies.dat / users.dat ("::"-separated, latin-1)
//   amazon:    interactions.jsonl / metadata.jsonl (one JSON record per line)
// Every interaction must reference a loaded item; the positive flag is
// derived from rating > 3.
RawData load_raw(RawFormat format, const std::filesystem::path& dir);

// Maximal subset where every surviving user and item has >= k interactions
// (iterated to fixpoint). May return an empty set.
std::vector<Interaction> kcore_filter(std::vector<Interaction> interactions, int k);

// Per-user chronological sequences, truncated to the most recent max_len.
// Duplicate (user, item, timestamp) triples are an error in strict mode and
// deduplicated in lenient mode.
std::vector<InteractionSequence> build_sequences(const std::vector<Interaction>& interactions,
                                                 std::size_t max_len = 40, bool strict = true);

// Disjoint seeded uniform samples of whole users; same seed gives the same
// split.
std::pair<std::vector<InteractionSequence>, std::vector<InteractionSequence>>
sample_split(const std::vector<InteractionSequence>& sequences, std::size_t n_train,
             std::size_t n_test, std::uint64_t seed);

DatasetStats compute_stats(const std::vector<Interaction>& interactions);
DatasetStats compute_stats(const std::vector<InteractionSequence>& sequences);

// Canonical corpus emission: one interaction per line, schema in
// docs/formats.md.
void write_canonical(const std::filesystem::path& path,
                     const std::vector<InteractionSequence>& sequences);

}  // namespace rr::corpus
