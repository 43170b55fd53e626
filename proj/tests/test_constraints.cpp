#include <doctest.h>

#include <ccnn/constraints.hpp>
#include <ccnn/matrix.hpp>
#include <ccnn/serialize.hpp>

#include <cmath>
#include <random>
#include <set>
#include <vector>

using namespace ccnn;

namespace {

double row_value(const ConstraintRow& row, const LabelDistribution& p) {
  double v = 0.0;
  for (const Coefficient& c : row.coefficients) v += c.value * p(c.pixel, c.label);
  return v;
}

}  // namespace

TEST_CASE("suppression rows cover exactly the absent foreground labels") {
  const ConstraintConfig cfg;
  const auto rows = suppression_rows({1}, cfg, 100, 3);
  REQUIRE(rows.size() == 1);
  const ConstraintRow& row = rows[0];
  CHECK(row.tag == ConstraintTag::suppression);
  CHECK(row.bound == 0.0);
  CHECK(row.slack_weight == cfg.beta_default);
  REQUIRE(row.coefficients.size() == 100);
  for (const Coefficient& c : row.coefficients) {
    CHECK(c.label == 2);
    CHECK(c.value == -1.0);
  }

  CHECK(suppression_rows({1, 2}, cfg, 100, 3).empty());
  CHECK(suppression_rows({}, cfg, 10, 2).size() == 1);  // label 1 absent
}

TEST_CASE("suppression rows reject out-of-range tags") {
  const ConstraintConfig cfg;
  CHECK_THROWS_AS(suppression_rows({3}, cfg, 10, 3), std::invalid_argument);
  CHECK_THROWS_AS(suppression_rows({0}, cfg, 10, 3), std::invalid_argument);  // background not a tag
}

TEST_CASE("foreground rows use the base fraction, boosted for large labels") {
  const ConstraintConfig cfg;  // a_fg = 0.05, a_big = 0.1, beta_fg = 2
  const auto rows = foreground_rows({1}, {}, cfg, 100, 3);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].tag == ConstraintTag::foreground);
  CHECK(rows[0].bound == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(rows[0].slack_weight == 2.0);
  REQUIRE(rows[0].coefficients.size() == 100);
  for (const Coefficient& c : rows[0].coefficients) {
    CHECK(c.label == 1);
    CHECK(c.value == 1.0);
  }

  const auto boosted = foreground_rows({1}, {1}, cfg, 100, 3);
  REQUIRE(boosted.size() == 1);
  CHECK(boosted[0].bound == doctest::Approx(10.0).epsilon(1e-15));

  CHECK(foreground_rows({}, {}, cfg, 100, 3).empty());
}

TEST_CASE("background rows encode the band as two inequalities on label 0") {
  ConstraintConfig cfg;  // a_bg = 0.3, b_bg = 0.7
  const auto rows = background_rows(cfg, 100, 3);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].tag == ConstraintTag::background_lower);
  CHECK(rows[0].bound == doctest::Approx(30.0).epsilon(1e-15));
  CHECK(rows[1].tag == ConstraintTag::background_upper);
  CHECK(rows[1].bound == doctest::Approx(-70.0).epsilon(1e-15));
  for (const Coefficient& c : rows[0].coefficients) {
    CHECK(c.label == 0);
    CHECK(c.value == 1.0);
  }
  for (const Coefficient& c : rows[1].coefficients) {
    CHECK(c.label == 0);
    CHECK(c.value == -1.0);
  }

  // equality band: lower and upper meet
  cfg.a_bg = 0.5;
  cfg.b_bg = 0.5;
  const auto eq = background_rows(cfg, 10, 3);
  CHECK(eq[0].bound == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(eq[1].bound == doctest::Approx(-5.0).epsilon(1e-15));
}

TEST_CASE("size rows cap the area of labels known to be small") {
  const ConstraintConfig cfg;  // b_small = 0.01
  const auto rows = size_rows({1}, {}, cfg, 100, 3);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].tag == ConstraintTag::size_upper);
  CHECK(rows[0].bound == doctest::Approx(-1.0).epsilon(1e-15));
  for (const Coefficient& c : rows[0].coefficients) {
    CHECK(c.label == 1);
    CHECK(c.value == -1.0);
  }

  const auto big_n = size_rows({2}, {}, cfg, 1000, 3);
  CHECK(big_n[0].bound == doctest::Approx(-10.0).epsilon(1e-15));

  CHECK(size_rows({}, {}, cfg, 100, 3).empty());
  CHECK_THROWS_AS(size_rows({1}, {1}, cfg, 100, 3), std::invalid_argument);
}

TEST_CASE("assembling the standard families for a two-tag image yields five rows") {
  const ConstraintConfig cfg;
  const int n = 100, m = 3;
  std::vector<ConstraintRow> rows;
  for (auto& r : suppression_rows({1, 2}, cfg, n, m)) rows.push_back(r);
  for (auto& r : foreground_rows({1, 2}, {}, cfg, n, m)) rows.push_back(r);
  for (auto& r : background_rows(cfg, n, m)) rows.push_back(r);
  // both tags present, no suppression rows; 2 fg + 2 bg
  CHECK(rows.size() == 4);
  for (auto& r : size_rows({1}, {}, cfg, n, m)) rows.push_back(r);
  const ConstraintSet cs = ConstraintSet::assemble(rows, n, m);
  CHECK(cs.size() == 5);
  CHECK(cs.pixels() == n);
  CHECK(cs.labels() == m);
}

TEST_CASE("assemble validates shapes and coefficient ranges") {
  const ConstraintSet empty = ConstraintSet::assemble({}, 4, 2);
  CHECK(empty.empty());
  CHECK(empty.size() == 0);

  ConstraintRow bad_pixel;
  bad_pixel.coefficients.push_back({4, 0, 1.0});
  CHECK_THROWS_AS(ConstraintSet::assemble({bad_pixel}, 4, 2), std::invalid_argument);

  ConstraintRow bad_label;
  bad_label.coefficients.push_back({0, 2, 1.0});
  CHECK_THROWS_AS(ConstraintSet::assemble({bad_label}, 4, 2), std::invalid_argument);

  ConstraintRow no_coeffs;
  CHECK_THROWS_AS(ConstraintSet::assemble({no_coeffs}, 4, 2), std::invalid_argument);

  ConstraintRow bad_beta;
  bad_beta.coefficients.push_back({0, 0, 1.0});
  bad_beta.slack_weight = 0.0;
  CHECK_THROWS_AS(ConstraintSet::assemble({bad_beta}, 4, 2), std::invalid_argument);

  // duplicate rows are permitted
  ConstraintRow dup;
  dup.coefficients.push_back({0, 0, 1.0});
  dup.bound = 0.1;
  const ConstraintSet twice = ConstraintSet::assemble({dup, dup}, 4, 2);
  CHECK(twice.size() == 2);
}

TEST_CASE("tag-derived rows admit a feasible distribution when budgets fit") {
  // Constructive witness: background gets a_bg, the present tags split the
  // rest evenly, absent labels get zero. Every family bound must then hold.
  const int n = 40;
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 3 + static_cast<int>(rng() % 2u);
    std::set<int> tags;
    for (int l = 1; l < m; ++l)
      if (rng() % 2u == 0u) tags.insert(l);
    if (tags.empty()) tags.insert(1 + static_cast<int>(rng() % static_cast<unsigned>(m - 1)));

    const ConstraintConfig cfg;
    std::vector<ConstraintRow> rows;
    for (auto& r : suppression_rows(tags, cfg, n, m)) rows.push_back(r);
    for (auto& r : foreground_rows(tags, {}, cfg, n, m)) rows.push_back(r);
    for (auto& r : background_rows(cfg, n, m)) rows.push_back(r);
    const ConstraintSet cs = ConstraintSet::assemble(rows, n, m);

    std::vector<double> values(static_cast<std::size_t>(n) * m, 0.0);
    const double share = (1.0 - cfg.a_bg) / static_cast<double>(tags.size());
    for (int i = 0; i < n; ++i) {
      values[static_cast<std::size_t>(i) * m] = cfg.a_bg;
      for (int t : tags) values[static_cast<std::size_t>(i) * m + t] = share;
    }
    const LabelDistribution witness(n, m, values);

    const auto vals = cs.values(witness);
    const auto bounds = cs.bounds();
    for (int j = 0; j < cs.size(); ++j) CHECK(vals[j] >= bounds[j] - 1e-12);
  }
}

TEST_CASE("constraint values are linear in the distribution") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  const int n = 6, m = 3;

  auto random_dist = [&]() {
    std::vector<double> v(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int l = 0; l < m; ++l) {
        v[static_cast<std::size_t>(i) * m + l] = unit(rng);
        sum += v[static_cast<std::size_t>(i) * m + l];
      }
      for (int l = 0; l < m; ++l) v[static_cast<std::size_t>(i) * m + l] /= sum;
    }
    return LabelDistribution(n, m, v);
  };

  std::vector<ConstraintRow> rows;
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  for (int j = 0; j < 3; ++j) {
    ConstraintRow row;
    for (int i = 0; i < n; ++i)
      if (rng() % 2u == 0u)
        row.coefficients.push_back({i, static_cast<int>(rng() % static_cast<unsigned>(m)),
                                    coeff(rng)});
    if (row.coefficients.empty()) row.coefficients.push_back({0, 0, 1.0});
    rows.push_back(std::move(row));
  }
  const ConstraintSet cs = ConstraintSet::assemble(rows, n, m);

  const LabelDistribution p1 = random_dist();
  const LabelDistribution p2 = random_dist();
  const double alpha = 0.37;
  std::vector<double> blend_values(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < m; ++l)
      blend_values[static_cast<std::size_t>(i) * m + l] =
          alpha * p1(i, l) + (1.0 - alpha) * p2(i, l);
  const LabelDistribution blend(n, m, blend_values);

  const auto v1 = cs.values(p1);
  const auto v2 = cs.values(p2);
  const auto vb = cs.values(blend);
  for (int j = 0; j < cs.size(); ++j)
    CHECK(vb[j] == doctest::Approx(alpha * v1[j] + (1.0 - alpha) * v2[j]).epsilon(1e-12));

  // and values() agrees with a direct evaluation of each row
  for (int j = 0; j < cs.size(); ++j)
    CHECK(v1[j] == doctest::Approx(row_value(cs.row(j), p1)).epsilon(1e-14));
}

TEST_CASE("accumulate_bias scatters lambda-weighted coefficients") {
  const int n = 2, m = 2;
  ConstraintRow r0;
  r0.coefficients = {{0, 0, 1.0}, {1, 0, -2.0}};
  ConstraintRow r1;
  r1.coefficients = {{0, 0, 0.5}, {1, 1, 3.0}};
  const ConstraintSet cs = ConstraintSet::assemble({r0, r1}, n, m);

  std::vector<double> bias(4, 0.0);
  const std::vector<double> lambda{2.0, 4.0};
  cs.accumulate_bias(lambda, bias.data());
  CHECK(bias[0] == doctest::Approx(2.0 * 1.0 + 4.0 * 0.5).epsilon(1e-15));
  CHECK(bias[1] == 0.0);
  CHECK(bias[2] == doctest::Approx(2.0 * -2.0).epsilon(1e-15));
  CHECK(bias[3] == doctest::Approx(4.0 * 3.0).epsilon(1e-15));
}

TEST_CASE("constraint rows survive a JSON round trip") {
  ConstraintRow hard;
  hard.coefficients = {{0, 1, -1.25}, {3, 0, 2.0}};
  hard.bound = 0.75;
  hard.tag = ConstraintTag::custom;

  ConstraintRow soft;
  soft.coefficients = {{1, 1, 1.0}};
  soft.bound = -0.5;
  soft.slack_weight = 2.0;
  soft.tag = ConstraintTag::foreground;

  for (const ConstraintRow& row : {hard, soft}) {
    const ConstraintRow back = row_from_json(row_to_json(row));
    CHECK(back.bound == row.bound);
    CHECK(back.tag == row.tag);
    REQUIRE(back.coefficients.size() == row.coefficients.size());
    for (std::size_t i = 0; i < row.coefficients.size(); ++i) {
      CHECK(back.coefficients[i].pixel == row.coefficients[i].pixel);
      CHECK(back.coefficients[i].label == row.coefficients[i].label);
      CHECK(back.coefficients[i].value == row.coefficients[i].value);
    }
    if (std::isinf(row.slack_weight))
      CHECK(std::isinf(back.slack_weight));
    else
      CHECK(back.slack_weight == row.slack_weight);
  }
}

TEST_CASE("constraint config validation rejects inconsistent fractions") {
  ConstraintConfig cfg;
  cfg.validate();  // defaults are fine

  ConstraintConfig bad = cfg;
  bad.a_bg = 0.8;
  bad.b_bg = 0.7;  // lower above upper
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.a_fg = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.beta_default = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("tag names round trip through strings") {
  for (ConstraintTag tag :
       {ConstraintTag::suppression, ConstraintTag::foreground, ConstraintTag::background_lower,
        ConstraintTag::background_upper, ConstraintTag::size_upper, ConstraintTag::custom}) {
    CHECK(constraint_tag_from_string(to_string(tag)) == tag);
  }
  CHECK_THROWS_AS(constraint_tag_from_string("nonsense"), std::invalid_argument);
}
