#pragma once

// Shared test fixtures: tiny synthetic catalogs and movielens-layout files.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "reflectrank/agent.hpp"
#include "reflectrank/common.hpp"
#include "reflectrank/corpus.hpp"

namespace rrtest {

inline std::vector<rr::corpus::Item> make_catalog(int n) {
  std::vector<rr::corpus::Item> catalog;
  for (int i = 1; i <= n; ++i) {
    rr::corpus::Item item;
    item.item_id = std::to_string(i);
    item.title = "Movie " + std::to_string(i);
    item.year = 1990 + (i % 20);
    item.attributes = {"Genre" + std::to_string(i % 5)};
    catalog.push_back(std::move(item));
  }
  return catalog;
}

// Users u001..u<n>, each with `len` interactions over a catalog of
// `n_items`; ratings cycle 1..5, timestamps ascending.
inline std::vector<rr::corpus::Interaction> make_interactions(int n_users, int len, int n_items) {
  std::vector<rr::corpus::Interaction> out;
  rr::Rng rng(99);
  for (int u = 1; u <= n_users; ++u) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%03d", u);
    for (int t = 0; t < len; ++t) {
      rr::corpus::Interaction in;
      in.user_id = buf;
      in.item_id = std::to_string(1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_items))));
      // avoid duplicate (user,item,timestamp): timestamp strictly increases
      in.timestamp = 1000000 + t * 60 + u;
      in.rating = 1 + static_cast<int>(rng.uniform_int(5));
      in.positive = in.rating > 3;
      out.push_back(std::move(in));
    }
  }
  return out;
}

inline rr::agent::AgentMemory make_memory(const std::vector<rr::corpus::Item>& catalog) {
  rr::agent::AgentMemory m;
  m.user = {"u001", "F", "25", "writer"};
  m.preference_description = "enjoys character-driven dramas";
  for (std::size_t i = 0; i + 15 < catalog.size() && i < 5; ++i)
    m.history.emplace_back(catalog[i],
                           i % 2 ? rr::agent::Feedback::negative : rr::agent::Feedback::positive);
  return m;
}

// A temp directory holding a minimal movielens layout.
class MovieLensDir {
 public:
  explicit MovieLensDir(const std::string& name) {
    dir_ = std::filesystem::temp_directory_path() / ("rrtest_" + name);
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  ~MovieLensDir() { std::filesystem::remove_all(dir_); }

  const std::filesystem::path& path() const { return dir_; }

  void write(const std::string& file, const std::string& contents) {
    std::ofstream f(dir_ / file);
    f << contents;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace rrtest
