#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "reflectrank/corpus.hpp"

using namespace rr::corpus;

namespace {

const char* kMovies =
    "1::Toy Story (1995)::Animation|Children's|Comedy\n"
    "1193::One Flew Over the Cuckoo's Nest (1975)::Drama\n"
    "2::Jumanji (1995)::Adventure|Children's|Fantasy\n";
const char* kUsers =
    "1::F::1::10::48067\n"
    "2::M::56::16::70072\n";

std::string serialize(const std::vector<InteractionSequence>& seqs) {
  std::ostringstream ss;
  for (const auto& s : seqs) {
    ss << s.user_id << ":";
    for (const auto& in : s.interactions) ss << in.item_id << "@" << in.timestamp << ",";
    ss << ";";
  }
  return ss.str();
}

}  // namespace

TEST_CASE("load_raw movielens basic") {
  rrtest::MovieLensDir dir("ml_basic");
  dir.write("movies.dat", kMovies);
  dir.write("users.dat", kUsers);
  dir.write("ratings.dat",
            "1::1193::5::978300760\n"
            "1::1::3::978300761\n"
            "2::2::4::978300762\n");
  RawData data = load_raw(RawFormat::movielens, dir.path());
  CHECK(data.catalog.size() == 3);
  CHECK(data.users.size() == 2);
  REQUIRE(data.interactions.size() == 3);
  CHECK(data.interactions[0].rating == 5);
  CHECK(data.interactions[0].positive);
  CHECK_FALSE(data.interactions[1].positive);  // rating 3 is not positive
  CHECK(data.catalog[0].title == "Toy Story");
  CHECK(data.catalog[0].year == 1995);
  CHECK(data.catalog[0].attributes.size() == 3);
}

TEST_CASE("load_raw empty ratings file") {
  rrtest::MovieLensDir dir("ml_empty");
  dir.write("movies.dat", kMovies);
  dir.write("users.dat", kUsers);
  dir.write("ratings.dat", "");
  RawData data = load_raw(RawFormat::movielens, dir.path());
  CHECK(data.catalog.size() == 3);
  CHECK(data.interactions.empty());
}

TEST_CASE("load_raw errors carry line numbers") {
  rrtest::MovieLensDir dir("ml_bad");
  dir.write("movies.dat", kMovies);
  dir.write("ratings.dat", "1::1193::5::978300760\n1::1::abc\n");
  try {
    load_raw(RawFormat::movielens, dir.path());
    FAIL("expected CorpusError");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("load_raw unknown item reference") {
  rrtest::MovieLensDir dir("ml_unknown");
  dir.write("movies.dat", kMovies);
  dir.write("ratings.dat", "1::999::5::978300760\n");
  CHECK_THROWS_AS(load_raw(RawFormat::movielens, dir.path()), CorpusError);
}

TEST_CASE("load_raw amazon layout") {
  rrtest::MovieLensDir dir("amz");
  dir.write("metadata.jsonl",
            "{\"asin\":\"A1\",\"title\":\"Blue Album\",\"brand\":\"The Band\"}\n"
            "{\"asin\":\"A2\",\"title\":\"Red Album\"}\n");
  dir.write("interactions.jsonl",
            "{\"reviewerID\":\"r1\",\"asin\":\"A1\",\"overall\":5.0,\"unixReviewTime\":1234}\n"
            "{\"reviewerID\":\"r1\",\"asin\":\"A2\",\"overall\":2.0,\"unixReviewTime\":1250}\n");
  RawData data = load_raw(RawFormat::amazon, dir.path());
  CHECK(data.catalog.size() == 2);
  CHECK(data.catalog[0].attributes == std::vector<std::string>{"The Band"});
  REQUIRE(data.interactions.size() == 2);
  CHECK(data.interactions[0].positive);
  CHECK_FALSE(data.interactions[1].positive);
}

TEST_CASE("kcore removes below-threshold users") {
  auto rows = rrtest::make_interactions(3, 9, 4);   // 3 users x 9 rows
  auto more = rrtest::make_interactions(2, 30, 4);  // 2 heavy users
  for (auto& r : more) r.user_id += "x";
  rows.insert(rows.end(), more.begin(), more.end());
  auto filtered = kcore_filter(rows, 10);
  for (const auto& in : filtered) CHECK(in.user_id.back() == 'x');
}

TEST_CASE("kcore already satisfied is identity") {
  auto rows = rrtest::make_interactions(4, 12, 2);  // every item very popular
  auto filtered = kcore_filter(rows, 3);
  CHECK(filtered.size() == rows.size());
}

TEST_CASE("kcore cascade matches brute-force maximal subset") {
  // chain: removing user u2 drops item B below k, which removes u3's rows
  std::vector<Interaction> rows;
  auto add = [&](const char* u, const char* i, int t) {
    rows.push_back({u, i, 4, t, true});
  };
  add("u1", "A", 1); add("u1", "B", 2);
  add("u2", "B", 3);                    // u2 has a single row
  add("u3", "B", 4); add("u3", "C", 5);
  add("u4", "A", 6); add("u4", "C", 7);

  auto filtered = kcore_filter(rows, 2);

  // oracle: best subset over all 2^7 row subsets where all degrees >= 2
  std::size_t best = 0;
  std::set<std::pair<std::string, std::string>> best_set;
  for (unsigned mask = 0; mask < (1u << rows.size()); ++mask) {
    std::map<std::string, int> uc, ic;
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < rows.size(); ++j)
      if (mask & (1u << j)) {
        ++uc[rows[j].user_id];
        ++ic[rows[j].item_id];
        members.push_back(j);
      }
    bool ok = true;
    for (std::size_t j : members)
      if (uc[rows[j].user_id] < 2 || ic[rows[j].item_id] < 2) ok = false;
    if (ok && members.size() > best) {
      best = members.size();
      best_set.clear();
      for (std::size_t j : members) best_set.insert({rows[j].user_id, rows[j].item_id});
    }
  }
  CHECK(filtered.size() == best);
  for (const auto& in : filtered) CHECK(best_set.count({in.user_id, in.item_id}) == 1);
}

TEST_CASE("kcore output is a fixpoint") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    rr::Rng rng(seed);
    std::vector<Interaction> rows;
    int n = 30 + static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < n; ++i) {
      Interaction in;
      in.user_id = "u" + std::to_string(rng.uniform_int(8));
      in.item_id = "i" + std::to_string(rng.uniform_int(8));
      in.rating = 4;
      in.timestamp = i;
      rows.push_back(in);
    }
    auto once = kcore_filter(rows, 3);
    auto twice = kcore_filter(once, 3);
    CHECK(once.size() == twice.size());
  }
}

TEST_CASE("build_sequences truncates to most recent") {
  auto rows = rrtest::make_interactions(1, 55, 100);
  auto seqs = build_sequences(rows, 40);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].interactions.size() == 40);
  // most recent survive: last timestamp of input == last of output
  CHECK(seqs[0].interactions.back().timestamp == rows.back().timestamp);
  CHECK(seqs[0].interactions.front().timestamp == rows[15].timestamp);
}

TEST_CASE("build_sequences sorts unsorted input") {
  auto rows = rrtest::make_interactions(1, 10, 100);
  std::swap(rows[0], rows[9]);
  std::swap(rows[3], rows[7]);
  auto seqs = build_sequences(rows, 40);
  REQUIRE(seqs.size() == 1);
  for (std::size_t i = 1; i < seqs[0].interactions.size(); ++i)
    CHECK(seqs[0].interactions[i - 1].timestamp <= seqs[0].interactions[i].timestamp);
}

TEST_CASE("build_sequences two users keeps all rows") {
  auto rows = rrtest::make_interactions(2, 40, 100);
  auto seqs = build_sequences(rows, 40);
  CHECK(seqs.size() == 2);
  CHECK(seqs[0].interactions.size() + seqs[1].interactions.size() == 80);
}

TEST_CASE("build_sequences duplicate handling") {
  auto rows = rrtest::make_interactions(1, 5, 100);
  rows.push_back(rows[2]);
  CHECK_THROWS_AS(build_sequences(rows, 40, true), CorpusError);
  auto seqs = build_sequences(rows, 40, false);
  CHECK(seqs[0].interactions.size() == 5);
}

TEST_CASE("sample_split determinism and partition") {
  auto seqs = build_sequences(rrtest::make_interactions(30, 12, 50), 40);
  auto [train1, test1] = sample_split(seqs, 10, 10, 7);
  auto [train2, test2] = sample_split(seqs, 10, 10, 7);
  CHECK(serialize(train1) == serialize(train2));
  CHECK(serialize(test1) == serialize(test2));

  std::set<std::string> train_ids, test_ids;
  for (const auto& s : train1) train_ids.insert(s.user_id);
  for (const auto& s : test1) test_ids.insert(s.user_id);
  for (const auto& id : test_ids) CHECK(train_ids.count(id) == 0);

  auto [all_train, all_test] = sample_split(seqs, 15, 15, 3);
  std::set<std::string> all;
  for (const auto& s : all_train) all.insert(s.user_id);
  for (const auto& s : all_test) all.insert(s.user_id);
  CHECK(all.size() == 30);
}

TEST_CASE("sample_split shortfall error") {
  auto seqs = build_sequences(rrtest::make_interactions(5, 12, 50), 40);
  CHECK_THROWS_WITH_AS(sample_split(seqs, 4, 4, 1), doctest::Contains("short by 3"), CorpusError);
}

TEST_CASE("train stats have exactly n_train users") {
  auto seqs = build_sequences(rrtest::make_interactions(30, 12, 50), 40);
  auto [train, test] = sample_split(seqs, 12, 9, 11);
  CHECK(compute_stats(train).n_users == 12);
  CHECK(compute_stats(test).n_users == 9);
}

TEST_CASE("compute_stats formula and degenerate case") {
  std::vector<Interaction> rows = {{"u1", "i1", 4, 1, true},
                                   {"u1", "i2", 2, 2, false},
                                   {"u2", "i2", 5, 3, true},
                                   {"u2", "i3", 1, 4, false}};
  auto s = compute_stats(rows);
  CHECK(s.n_users == 2);
  CHECK(s.n_items == 3);
  CHECK(s.n_interactions == 4);
  CHECK(s.sparsity == doctest::Approx(1.0 - 4.0 / 6.0).epsilon(1e-12));
  CHECK_FALSE(s.degenerate);

  auto empty = compute_stats(std::vector<Interaction>{});
  CHECK(empty.n_users == 0);
  CHECK(empty.sparsity == 0.0);
  CHECK(empty.degenerate);
}

TEST_CASE("sparsity recomputes from the other fields") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rows = rrtest::make_interactions(5 + static_cast<int>(seed), 8, 20);
    auto s = compute_stats(rows);
    double recomputed = 1.0 - static_cast<double>(s.n_interactions) /
                                  (static_cast<double>(s.n_users) * static_cast<double>(s.n_items));
    CHECK(std::abs(s.sparsity - recomputed) < 1e-9);
  }
}

TEST_CASE("truncation loses only prefix rows") {
  auto rows = rrtest::make_interactions(3, 50, 100);
  auto seqs = build_sequences(rows, 40);
  std::size_t total = 0;
  for (const auto& s : seqs) {
    CHECK(s.interactions.size() <= 40);
    total += s.interactions.size();
  }
  CHECK(total == 3 * 40);
}
