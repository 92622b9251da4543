#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <unordered_map>

#include "irtcl/csv.hpp"
#include "irtcl/rasch.hpp"
#include "oracles.hpp"

using namespace irtcl;

namespace {

ResponseMatrix small_matrix(const std::vector<std::vector<int>>& z) {
  ResponseMatrix::Builder b;
  for (std::size_t i = 0; i < z.front().size(); ++i) b.add_item(ItemId("q" + std::to_string(i)));
  for (std::size_t j = 0; j < z.size(); ++j)
    for (std::size_t i = 0; i < z[j].size(); ++i)
      if (z[j][i] >= 0) b.add(SubjectId("s" + std::to_string(j)), ItemId("q" + std::to_string(i)), z[j][i]);
  return std::move(b).build();
}

}  // namespace

TEST(Icc, Examples) {
  EXPECT_DOUBLE_EQ(icc_prob(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(icc_prob(2, 2), 0.5);
  EXPECT_NEAR(icc_prob(2, 0), 0.880797077977882, 1e-12);
}

TEST(Icc, RejectsNonFinite) {
  EXPECT_THROW(icc_prob(NAN, 0), ValidationError);
  EXPECT_THROW(icc_prob(0, INFINITY), ValidationError);
}

TEST(Icc, StableAtExtremes) {
  EXPECT_GT(icc_prob(800, 0), 0.999);
  EXPECT_LT(icc_prob(-800, 0), 1e-300);
  EXPECT_FALSE(std::isnan(icc_prob(-800, 0)));
}

TEST(Icc, ComplementSymmetry) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-40, 40);
  for (int k = 0; k < 1000; ++k) {
    double t = u(rng), b = u(rng);
    EXPECT_NEAR(icc_prob(t, b) + icc_prob(b, t), 1.0, 1e-15);
  }
}

TEST(Icc, Monotone) {
  for (double b : {-3.0, 0.0, 2.5}) {
    for (double t = -10; t < 10; t += 0.25) {
      EXPECT_LT(icc_prob(t, b), icc_prob(t + 0.25, b));
      EXPECT_GT(icc_prob(b, t), icc_prob(b, t + 0.25));
    }
  }
}

TEST(Icc, MatchesOracle) {
  for (double t = -8; t <= 8; t += 0.5)
    for (double b = -8; b <= 8; b += 0.5) EXPECT_NEAR(icc_prob(t, b), static_cast<double>(oracle::icc(t, b)), 1e-15);
}

TEST(LogLikelihood, SingleResponseAtEqualParameters) {
  auto z = small_matrix({{1}});
  EXPECT_NEAR(log_likelihood(z, {{SubjectId("s0"), 0.3}}, {{ItemId("q0"), 0.3}}), std::log(0.5), 1e-15);
}

TEST(LogLikelihood, EmptyMatrixIsZero) { EXPECT_EQ(log_likelihood(ResponseMatrix{}, {}, {}), 0.0); }

TEST(LogLikelihood, ThreeResponses) {
  auto z = small_matrix({{1, 1, 0}});
  std::unordered_map<ItemId, double> b{{ItemId("q0"), -1}, {ItemId("q1"), 0}, {ItemId("q2"), 1}};
  double expect = std::log(oracle::icc(1, -1)) + std::log(oracle::icc(1, 0)) + std::log(1 - oracle::icc(1, 1));
  EXPECT_NEAR(log_likelihood(z, {{SubjectId("s0"), 1.0}}, b), expect, 1e-12);
}

TEST(LogLikelihood, MissingParameterIsError) {
  auto z = small_matrix({{1, 0}});
  EXPECT_THROW(log_likelihood(z, {{SubjectId("s0"), 0}}, {{ItemId("q0"), 0}}), ValidationError);
  EXPECT_THROW(log_likelihood(z, {}, {{ItemId("q0"), 0}, {ItemId("q1"), 0}}), ValidationError);
}

TEST(LogLikelihood, MatchesNaiveDoubleLoop) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0, 2);
  std::uniform_int_distribution<int> cell(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<int>> dense(20, std::vector<int>(20));
    for (auto& row : dense)
      for (auto& v : row) v = cell(rng);
    for (auto& row : dense) row[0] = 1;  // keep every subject and item index present
    for (auto& v : dense[0]) v = 0;
    std::vector<double> theta(20), b(20);
    for (auto& t : theta) t = normal(rng);
    for (auto& x : b) x = normal(rng);
    auto z = small_matrix(dense);
    std::unordered_map<SubjectId, double> tm;
    std::unordered_map<ItemId, double> bm;
    for (int j = 0; j < 20; ++j) tm[SubjectId("s" + std::to_string(j))] = theta[j];
    for (int i = 0; i < 20; ++i) bm[ItemId("q" + std::to_string(i))] = b[i];
    double ll = log_likelihood(z, tm, bm);
    EXPECT_NEAR(ll, static_cast<double>(oracle::log_likelihood(dense, theta, b)), 1e-9);
    EXPECT_LE(ll, 0.0);
  }
}

TEST(LogLikelihood, TranslationInvariance) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0, 1);
  std::bernoulli_distribution coin(0.6);
  std::vector<std::vector<int>> dense(15, std::vector<int>(30));
  for (auto& row : dense)
    for (auto& v : row) v = coin(rng);
  auto z = small_matrix(dense);
  std::unordered_map<SubjectId, double> tm;
  std::unordered_map<ItemId, double> bm;
  for (int j = 0; j < 15; ++j) tm[SubjectId("s" + std::to_string(j))] = normal(rng);
  for (int i = 0; i < 30; ++i) bm[ItemId("q" + std::to_string(i))] = normal(rng);
  double base = log_likelihood(z, tm, bm);
  for (double c : {-3.7, -0.5, 0.25, 2.0, 5.5}) {
    auto t2 = tm;
    auto b2 = bm;
    for (auto& [k, v] : t2) v += c;
    for (auto& [k, v] : b2) v += c;
    EXPECT_NEAR(log_likelihood(z, t2, b2), base, 1e-9) << "c = " << c;
  }
}

TEST(LogLikelihood, ClampsExtremeProbabilities) {
  auto z = small_matrix({{0}});
  double ll = log_likelihood(z, {{SubjectId("s0"), 100}}, {{ItemId("q0"), -100}});
  EXPECT_NEAR(ll, std::log(1e-12), 1e-4);  // 1 - 1e-12 is not exact in double
}

TEST(Ids, RejectEmpty) {
  EXPECT_THROW(ItemId(""), ValidationError);
  EXPECT_THROW(SubjectId(""), ValidationError);
  EXPECT_EQ(ItemId("a").str(), "a");
  EXPECT_LT(ItemId("a"), ItemId("b"));
}

TEST(ResponseMatrix, BuilderInvariants) {
  ResponseMatrix::Builder b;
  b.add(SubjectId("s1"), ItemId("q2"), 1);
  b.add(SubjectId("s0"), ItemId("q1"), 0);
  b.add(SubjectId("s1"), ItemId("q1"), 1);
  EXPECT_THROW(b.add(SubjectId("s1"), ItemId("q1"), 0), ValidationError);
  EXPECT_THROW(b.add(SubjectId("s2"), ItemId("q1"), 2), ValidationError);
  auto z = std::move(b).build();
  EXPECT_EQ(z.n_subjects(), 2u);
  EXPECT_EQ(z.n_items(), 2u);
  EXPECT_EQ(z.n_responses(), 3u);
  auto q1 = *z.item_index(ItemId("q1"));
  ASSERT_EQ(z.item_responses(q1).size(), 2u);
  for (const auto& r : z.item_responses(q1)) EXPECT_EQ(r.item, q1);
  EXPECT_FALSE(z.item_index(ItemId("nope")).has_value());
  EXPECT_EQ(z.subject_counts(), (std::vector<std::size_t>{2, 1}));
}

TEST(ResponseMatrix, DuplicateNamesBothLocations) {
  auto t = csv::parse("subject_id,item_id,response\na,x,1\nb,x,0\na,x,0\n", "r.csv");
  try {
    parse_response_csv(t);
    FAIL() << "expected a duplicate error";
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("r.csv:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("r.csv:4"), std::string::npos) << msg;
  }
}

TEST(ResponseMatrix, CsvRoundTrip) {
  auto z = small_matrix({{1, 0, -1}, {0, 1, 1}, {-1, -1, 1}});
  auto text = format_response_csv(z);
  auto back = parse_response_csv(csv::parse(text, "mem"));
  EXPECT_EQ(format_response_csv(back), text);
  EXPECT_EQ(back.n_responses(), z.n_responses());
}

TEST(ResponseMatrix, CsvRejectsBadResponses) {
  EXPECT_THROW(parse_response_csv(csv::parse("subject_id,item_id,response\na,x,2\n", "m")), ValidationError);
  EXPECT_THROW(parse_response_csv(csv::parse("subject_id,item_id,response\na,x,yes\n", "m")), ValidationError);
  EXPECT_THROW(parse_response_csv(csv::parse("subject_id,item\na,x\n", "m")), ValidationError);
  EXPECT_THROW(parse_response_csv(csv::parse("subject_id,item_id,response\na,x\n", "m")), ValidationError);
}

TEST(ParameterJson, RoundTrip) {
  std::vector<ItemDifficulty> d{{ItemId("q1"), 1.25}, {ItemId("q2"), -0.5}};
  std::vector<SubjectAbility> a{{SubjectId("s"), 0.75}};
  auto d2 = difficulties_from_json(difficulties_to_json(d));
  auto a2 = abilities_from_json(abilities_to_json(a));
  ASSERT_EQ(d2.size(), 2u);
  EXPECT_EQ(d2[1].item, ItemId("q2"));
  EXPECT_EQ(d2[1].b, -0.5);
  ASSERT_EQ(a2.size(), 1u);
  EXPECT_EQ(a2[0].theta, 0.75);
  EXPECT_THROW(difficulties_from_json(nlohmann::json::parse(R"([{"item_id":"q","b":"x"}])")), ValidationError);
}

TEST(Csv, QuotesCrlfAndBom) {
  auto t = csv::parse("\xEF\xBB\xBFid,text\r\na,\"x, \"\"y\"\"\"\r\nb,\"multi\nline\"\r\nc,z\r\n", "m");
  ASSERT_EQ(t.rows().size(), 3u);
  EXPECT_EQ(t.header()[0], "id");
  EXPECT_EQ(t.rows()[0].fields[1], "x, \"y\"");
  EXPECT_EQ(t.rows()[1].fields[1], "multi\nline");
  EXPECT_EQ(t.rows()[2].line, 5u);
}

TEST(Csv, FieldCountMismatchNamesLine) {
  try {
    csv::parse("a,b\n1,2\n3\n", "f.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("f.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Csv, NumberFormattingRoundTrips) {
  for (double v : {0.1, -2.5e-300, 1.0 / 3.0, 123456789.125}) EXPECT_EQ(csv::to_double(csv::fmt(v), "x"), v);
  EXPECT_THROW(csv::to_double("1.5abc", "x"), ValidationError);
  EXPECT_THROW(csv::to_int("2.5", "x"), ValidationError);
}

TEST(Csv, MissingFileNamesPath) {
  try {
    csv::read("/nonexistent/dir/file.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/file.csv"), std::string::npos);
  }
}
