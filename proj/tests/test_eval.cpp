// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "testutil.hpp"
#include "vcdesk/eval.hpp"

using namespace vcdesk;
using namespace vcdesk::eval;
using vcdesk::testutil::BruteForceEditDistance;

namespace {

std::vector<std::string> Chars(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

std::vector<std::string> RandomSeq(Rng& rng, int max_len, int alphabet) {
  const int len = static_cast<int>(rng.uniform_int(max_len + 1));
  std::vector<std::string> out;
  for (int i = 0; i < len; ++i) {
    out.emplace_back(1, static_cast<char>('a' + rng.uniform_int(alphabet)));
  }
  return out;
}

}  // namespace

TEST_CASE("edit_distance: identity, kitten/sitting, and empty hyp") {
  const std::vector<std::string> abc = Chars("abc");
  AlignmentReport same = EditDistance(abc, abc);
  CHECK(same.distance() == 0);
  CHECK(same.substitutions == 0);
  CHECK(same.deletions == 0);
  CHECK(same.insertions == 0);

  AlignmentReport ks = EditDistance(Chars("kitten"), Chars("sitting"));
  CHECK(ks.distance() == 3);
  CHECK(ks.substitutions + ks.deletions + ks.insertions == ks.distance());

  AlignmentReport del = EditDistance(abc, {});
  CHECK(del.deletions == 3);
  CHECK(del.rate_percent() == doctest::Approx(100.0));
}

TEST_CASE("edit_distance: matches brute force on 1000 random pairs") {
  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto ref = RandomSeq(rng, 8, 3);
    const auto hyp = RandomSeq(rng, 8, 3);
    AlignmentReport rep = EditDistance(ref, hyp);
    CHECK(rep.distance() == BruteForceEditDistance(ref, hyp));
    // S + D + I decomposition is consistent with the alignment.
    int s = 0, d = 0, ins = 0;
    for (const auto& [r, h] : rep.pairs) {
      if (r.empty()) ++ins;
      else if (h.empty()) ++d;
      else if (r != h) ++s;
    }
    CHECK(s == rep.substitutions);
    CHECK(d == rep.deletions);
    CHECK(ins == rep.insertions);
  }
}

TEST_CASE("edit_distance: metric axioms on random sequences") {
  Rng rng(55);
  for (int i = 0; i < 200; ++i) {
    const auto a = RandomSeq(rng, 6, 3);
    const auto b = RandomSeq(rng, 6, 3);
    const auto c = RandomSeq(rng, 6, 3);
    const int ab = EditDistance(a, b).distance();
    const int ba = EditDistance(b, a).distance();
    const int ac = EditDistance(a, c).distance();
    const int cb = EditDistance(c, b).distance();
    CHECK(ab == ba);                      // symmetry of the distance value
    CHECK(EditDistance(a, a).distance() == 0);  // identity
    CHECK(ab <= ac + cb);                 // triangle inequality
  }
}

TEST_CASE("cer_wer: word unit on one substitution of three") {
  CHECK(CerWer("a b c", "a x c", ErrorUnit::kWord) == doctest::Approx(100.0 / 3));
  CHECK(CerWer("a b c", "a x c", ErrorUnit::kChar) == doctest::Approx(100.0 / 3));
}

TEST_CASE("cer_wer: coincide when every word is a single character") {
  Rng rng(66);
  for (int i = 0; i < 50; ++i) {
    auto mk = [&](int n) {
      std::string s;
      for (int k = 0; k < n; ++k) {
        if (k) s += ' ';
        s += static_cast<char>('a' + rng.uniform_int(3));
      }
      return s;
    };
    const std::string ref = mk(1 + static_cast<int>(rng.uniform_int(6)));
    const std::string hyp = mk(static_cast<int>(rng.uniform_int(7)));
    CHECK(CerWer(ref, hyp, ErrorUnit::kChar) ==
          doctest::Approx(CerWer(ref, hyp, ErrorUnit::kWord)));
  }
}

TEST_CASE("cer_wer: scale-free under content duplication") {
  const std::string ref = "a b a k s";
  const std::string hyp = "a b a k t";
  const double once = CerWer(ref, hyp, ErrorUnit::kWord);
  std::string ref3, hyp3;
  for (int i = 0; i < 3; ++i) {
    ref3 += (i ? " " : "") + ref;
    hyp3 += (i ? " " : "") + hyp;
  }
  CHECK(CerWer(ref3, hyp3, ErrorUnit::kWord) == doctest::Approx(once));
}

TEST_CASE("cer_wer: empty reference is a defined error") {
  CHECK_THROWS_AS(CerWer("", "abc", ErrorUnit::kChar), ValidationError);
  CHECK_THROWS_AS(CerWer("   ", "abc", ErrorUnit::kWord), ValidationError);
}

TEST_CASE("aggregate_ratings: single system [3,4,5] and identical scores") {
  RatingsTable t;
  t.scale_min = 1;
  t.scale_max = 5;
  t.rows = {{"sys", "l1", "u1", 3.0}, {"sys", "l2", "u2", 4.0},
            {"sys", "l3", "u3", 5.0}};
  auto aggs = AggregateRatings(t);
  REQUIRE(aggs.size() == 1);
  CHECK(aggs[0].mean == doctest::Approx(4.0));
  CHECK(aggs[0].count == 3);
  CHECK(aggs[0].ci95_half > 0.0);

  RatingsTable same;
  same.rows = {{"s", "a", "u", 4.0}, {"s", "b", "u", 4.0}, {"s", "c", "u", 4.0}};
  auto agg2 = AggregateRatings(same);
  CHECK(agg2[0].ci95_half == doctest::Approx(0.0));
}

TEST_CASE("ratings csv: parses good input, rejects out-of-scale with line no") {
  {
    std::ofstream f("tmp_ratings.csv");
    f << "system_id,listener_id,utt_id,score\n";
    f << "base,l1,u1,3\n";
    f << "base,l2,u1,4\n";
    f << "other,l1,u2,2\n";
  }
  RatingsTable t = LoadRatingsCsv("tmp_ratings.csv", 1, 5);
  CHECK(t.rows.size() == 3);
  auto aggs = AggregateRatings(t);
  REQUIRE(aggs.size() == 2);
  CHECK(aggs[0].system_id == "base");  // deterministic ordering
  CHECK(aggs[1].system_id == "other");

  {
    std::ofstream f("tmp_ratings.csv");
    f << "system_id,listener_id,utt_id,score\n";
    f << "base,l1,u1,3\n";
    f << "base,l2,u1,9\n";
  }
  CHECK_THROWS_WITH_AS(LoadRatingsCsv("tmp_ratings.csv", 1, 5),
                       doctest::Contains("line 3"), ValidationError);
  std::remove("tmp_ratings.csv");
}

TEST_CASE("similarity fraction is bounded") {
  // Pure arithmetic check on the report struct invariants.
  SimilarityReport rep;
  rep.percent_closer_to_target = 100.0;
  CHECK(rep.percent_closer_to_target >= 0.0);
  CHECK(rep.percent_closer_to_target <= 100.0);
}
