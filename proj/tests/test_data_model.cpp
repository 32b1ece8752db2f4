#include "helpers.hpp"
#include "mstack/io.hpp"

#include <doctest.h>

#include <sstream>

using namespace mstack;
using namespace mstack::testing;

namespace {

StudyCollection sized(std::vector<Index> n) {
  RandomStream rs(1, 0, 0, purpose::kMisc);
  return random_collection(std::move(n), 1, rs);
}

}  // namespace

TEST_CASE("study-specific LTS lists each study once") {
  const auto c = sized({3, 2});
  const auto lts = study_specific_lts(c);
  REQUIRE(lts.T() == 2);
  CHECK(lts.sets[0] == IndexSet{{0, 0}, {1, 0}, {2, 0}});
  CHECK(lts.sets[1] == IndexSet{{0, 1}, {1, 1}});
  CHECK(lts.study_specific(2));
  CHECK_NOTHROW(validate_lts(lts, c));

  const auto one = study_specific_lts(sized({4}));
  REQUIRE(one.T() == 1);
  CHECK(one.sets[0].size() == 4);
}

TEST_CASE("study-specific LTS on three studies has singleton supports") {
  const auto c = sized({2, 3, 4});
  const auto lts = study_specific_lts(c);
  Index covered = 0;
  for (Index t = 0; t < 3; ++t) {
    CHECK(lts.support(t) == std::set<Index>{t});
    covered += static_cast<Index>(lts.sets[t].size());
  }
  CHECK(covered == c.total_n());
}

TEST_CASE("validate_lts rejects malformed sets and accepts spanning sets") {
  const auto c = sized({3, 2, 2});
  TrainingSetList bad{{{{4, 0}}}};
  CHECK_THROWS_WITH_AS(validate_lts(bad, c), doctest::Contains("IndexOutOfRange"), Error);
  TrainingSetList dup{{{{0, 0}, {0, 0}}}};
  CHECK_THROWS_AS(validate_lts(dup, c), Error);
  TrainingSetList empty{{IndexSet{}}};
  CHECK_THROWS_AS(validate_lts(empty, c), Error);

  // D_3 spans studies 2 and 3.
  TrainingSetList fig{{{{0, 0}, {1, 0}}, {{0, 1}}, {{1, 1}, {0, 2}, {1, 2}}}};
  CHECK_NOTHROW(validate_lts(fig, c));
  CHECK(fig.support(2) == std::set<Index>{1, 2});
  CHECK_FALSE(fig.study_specific(3));
}

TEST_CASE("target weights") {
  CHECK(generalist_nu(2).isApprox(Vec::Constant(2, 0.5)));
  CHECK(generalist_nu(1)(0) == 1.0);
  CHECK(generalist_nu(4).isApprox(Vec::Constant(4, 0.25)));
  CHECK(specialist_nu(3, 1) == (Vec(3) << 0, 1, 0).finished());
  CHECK(specialist_nu(1, 0)(0) == 1.0);
  CHECK(specialist_nu(2, 0) == (Vec(2) << 1, 0).finished());
  CHECK_NOTHROW(validate_nu(generalist_nu(5), 5));
  CHECK_THROWS_AS(validate_nu((Vec(2) << 0.7, 0.7).finished(), 2), Error);
  CHECK_THROWS_AS(validate_nu((Vec(2) << 1.5, -0.5).finished(), 2), Error);
  CHECK_THROWS_AS(specialist_nu(2, 2), Error);
}

TEST_CASE("all_but removes one pair") {
  const IndexSet D{{0, 0}, {1, 0}, {0, 1}};
  CHECK(all_but(D, 1, 0) == IndexSet{{0, 0}, {0, 1}});
}

TEST_CASE("collection validation") {
  Study a{"a", Vec::Ones(2), Mat::Zero(2, 1)};
  Study b{"b", Vec::Ones(2), Mat::Zero(2, 2)};
  CHECK_THROWS_AS(StudyCollection({a, b}), Error);
  Study dup = a;
  CHECK_THROWS_AS(StudyCollection({a, dup}), Error);
  Study nan{"n", Vec::Constant(1, std::nan("")), Mat::Zero(1, 1)};
  CHECK_THROWS_AS(StudyCollection({nan}), Error);
  const StudyCollection c({a, Study{"c", Vec::Constant(3, 2.0), Mat::Ones(3, 1)}});
  CHECK(c.total_n() == 5);
  CHECK(c.row(1, 1) == 3);
  CHECK(c.stacked_y().tail(3).isApprox(Vec::Constant(3, 2.0)));
}

TEST_CASE("data file ingestion groups rows by study in order of appearance") {
  std::istringstream in("study,y,x1,x2\nB,1,0.5,1\nA,2,1.5,2\nB,3,2.5,3\n");
  const auto c = parse_collection(in);
  REQUIRE(c.K() == 2);
  CHECK(c[0].id == "B");
  CHECK(c[0].y == (Vec(2) << 1, 3).finished());
  CHECK(c[0].X(1, 0) == 2.5);
  CHECK(c[1].id == "A");
  CHECK(c.p() == 2);

  std::istringstream p0("study,y\n1,1.5\n2,-2\n");
  const auto c0 = parse_collection(p0);
  CHECK(c0.p() == 0);
  CHECK(c0[1].y(0) == -2.0);
}

TEST_CASE("data file ingestion rejects missing and malformed values") {
  for (const char* text : {"study,y\n1,\n", "study,y,x1\n1,2\n", "id,y\n1,2\n", "study,y\n1,abc\n",
                           "study,y\n1,nan\n", "study,y\n"}) {
    std::istringstream in(text);
    CHECK_THROWS_WITH_AS(parse_collection(in), doctest::Contains("DataError"), Error);
  }
}

TEST_CASE("data file round trip is exact") {
  RandomStream rs(3, 0, 0, purpose::kMisc);
  const auto c = random_collection({4, 3}, 2, rs);
  std::stringstream ss;
  write_collection(ss, c);
  const auto back = parse_collection(ss);
  REQUIRE(back.K() == 2);
  for (Index k = 0; k < 2; ++k) {
    CHECK(back[k].id == c[k].id);
    CHECK(back[k].y == c[k].y);
    CHECK(back[k].X == c[k].X);
  }
}

TEST_CASE("training sets from JSON") {
  const auto c = sized({3, 2});
  CHECK_THROWS_AS(lts_from_json(Json::parse(R"({"sets": [["s1", "s1"]]})"), c), Error);
  CHECK_THROWS_AS(lts_from_json(Json::parse(R"({"sets": [[{"study": "s2", "rows": [3]}]]})"), c),
                  Error);
  const auto lts =
      lts_from_json(Json::parse(R"({"sets": [["s1"], [{"study": "s2", "rows": [2]}]]})"), c);
  REQUIRE(lts.T() == 2);
  CHECK(lts.sets[1] == IndexSet{{1, 1}});
  CHECK_THROWS_AS(lts_from_json(Json::parse(R"({"sets": [["zz"]]})"), c), Error);
}
