#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "fractdim/rng.hpp"
#include "fractdim/symbolic.hpp"

using namespace fractdim;

namespace {

Eigen::MatrixXd scalar1x1(double v) {
  Eigen::MatrixXd t(1, 1);
  t(0, 0) = v;
  return t;
}

AffineIfs cantor_pair() {
  return validate_ifs(1, {scalar1x1(1.0 / 3.0), scalar1x1(1.0 / 3.0)});
}

// Independent product: multiply the word's matrices left to right.
Eigen::MatrixXd direct_product(const AffineIfs& ifs, const Word& w) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(ifs.d, ifs.d);
  for (int sym : w) p = p * ifs.maps[static_cast<std::size_t>(sym - 1)];
  return p;
}

}  // namespace

TEST_CASE("validate_ifs accepts contracting invertible maps", "[symbolic]") {
  Eigen::MatrixXd t(2, 2);
  t << 0.6, 0.0, 0.0, 0.2;
  const AffineIfs one = validate_ifs(2, {t});
  REQUIRE_FALSE(one.strict_half);  // norm 0.6 >= 1/2
  REQUIRE(one.norm_max == Catch::Approx(0.6).epsilon(1e-12));

  const AffineIfs cantor = cantor_pair();
  REQUIRE(cantor.strict_half);
  REQUIRE(cantor.norm_max == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("validate_ifs rejects bad systems", "[symbolic]") {
  Eigen::MatrixXd sing(2, 2);
  sing << 0.3, 0.3, 0.3, 0.3;  // rank 1
  Eigen::MatrixXd ok(2, 2);
  ok << 0.3, 0.0, 0.0, 0.3;
  Eigen::MatrixXd big(2, 2);
  big << 1.1, 0.0, 0.0, 0.2;  // norm >= 1
  REQUIRE_THROWS_AS(validate_ifs(2, {sing, ok}), ValidationError);
  REQUIRE_THROWS_AS(validate_ifs(2, {ok, big}), ValidationError);
  REQUIRE_THROWS_AS(validate_ifs(0, {}), ValidationError);
  REQUIRE_THROWS_AS(validate_ifs(2, {}), ValidationError);
  Eigen::MatrixXd wrong(1, 1);
  wrong << 0.5;
  REQUIRE_THROWS_AS(validate_ifs(2, {ok, wrong}), ValidationError);
}

TEST_CASE("word strings round-trip and reject bad digits", "[symbolic]") {
  REQUIRE(parse_word("1212") == Word({1, 2, 1, 2}));
  REQUIRE(parse_word("") == Word{});
  REQUIRE(format_word(Word{3, 1, 9}) == "319");
  REQUIRE_THROWS_AS(parse_word("120"), ValidationError);
  REQUIRE_THROWS_AS(parse_word("1a"), ValidationError);
}

TEST_CASE("common_prefix splits at the first mismatch", "[symbolic]") {
  const auto cp = common_prefix(parse_word("121"), parse_word("122"));
  REQUIRE(cp.prefix == parse_word("12"));
  REQUIRE_FALSE(cp.diagonal);

  const auto diag = common_prefix(parse_word("12"), parse_word("12"));
  REQUIRE(diag.diagonal);
  REQUIRE(diag.prefix == parse_word("12"));

  // One word extending the other is still off-diagonal.
  const auto ext = common_prefix(parse_word("12"), parse_word("121"));
  REQUIRE_FALSE(ext.diagonal);
  REQUIRE(ext.prefix == parse_word("12"));

  REQUIRE(common_prefix(parse_word("1"), parse_word("2")).prefix.empty());
}

TEST_CASE("singular values of a diagonal word product", "[symbolic]") {
  // diag(1/2, 1/4) squared has singular values exactly {1/4, 1/16}.
  Eigen::MatrixXd t(2, 2);
  t << 0.5, 0.0, 0.0, 0.25;
  const AffineIfs ifs = validate_ifs(2, {t, t});
  const auto sv = singular_values(ifs, parse_word("11"));
  REQUIRE(sv.size() == 2);
  REQUIRE(sv[0] == Catch::Approx(0.25).epsilon(1e-14));
  REQUIRE(sv[1] == Catch::Approx(0.0625).epsilon(1e-14));
}

TEST_CASE("singular values agree with a direct SVD of the product",
          "[symbolic]") {
  RngStream rng(77, 0);
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.31, 0.11, -0.05, 0.22;
  b << 0.12, -0.2, 0.17, 0.08;
  const AffineIfs ifs = validate_ifs(2, {a, b});
  for (int trial = 0; trial < 50; ++trial) {
    Word w;
    const int len = 1 + static_cast<int>(rng.uniform() * 8);
    for (int i = 0; i < len; ++i)
      w.push_back(1 + static_cast<int>(rng.uniform() * 2));
    const auto sv = singular_values(ifs, w);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(direct_product(ifs, w));
    REQUIRE(sv.size() == 2);
    for (int k = 0; k < 2; ++k)
      REQUIRE(sv[static_cast<std::size_t>(k)] ==
              Catch::Approx(svd.singularValues()(k)).margin(1e-14));
    // Submultiplicativity of the top singular value under concatenation.
    if (w.size() >= 2) {
      const Word head(w.begin(), w.begin() + w.size() / 2);
      const Word tail(w.begin() + w.size() / 2, w.end());
      REQUIRE(sv[0] <= singular_values(ifs, head)[0] *
                           singular_values(ifs, tail)[0] * (1 + 1e-12));
    }
  }
}

TEST_CASE("coding point of a geometric word", "[symbolic]") {
  const AffineIfs ifs = cantor_pair();
  std::vector<Eigen::VectorXd> a(2, Eigen::VectorXd::Zero(1));
  a[1](0) = 2.0 / 3.0;

  Word twos(20, 2);
  const auto p = coding_point(ifs, twos, a);
  // sum_{k=0..19} (2/3) 3^-k = 1 - 3^-20, and the tail bound is 3^-20.
  REQUIRE(p.point(0) ==
          Catch::Approx(1.0 - std::pow(3.0, -20.0)).epsilon(1e-14));
  REQUIRE(p.truncation_error ==
          Catch::Approx(std::pow(3.0, -20.0)).epsilon(1e-9));

  // Outermost-first composition: word "21" maps the origin to 2/3.
  const auto q = coding_point(ifs, parse_word("21"), a);
  REQUIRE(q.point(0) == Catch::Approx(2.0 / 3.0).epsilon(1e-14));

  // Empty word: origin with the full a-priori bound.
  const auto o = coding_point(ifs, Word{}, a);
  REQUIRE(o.point(0) == 0.0);
  REQUIRE(o.truncation_error == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("refinement to a singular-value threshold (brute-force oracle)",
          "[symbolic]") {
  const AffineIfs ifs = validate_ifs(1, {scalar1x1(0.5), scalar1x1(0.25)});
  const auto refined =
      refine_to_depth(ifs, SymbolicSet::full_shift(2), RefineStop::threshold(0.1));

  // Oracle: breadth-first expansion with direct scalar products.
  std::set<std::string> expect;
  std::vector<std::pair<Word, double>> frontier{{Word{}, 1.0}};
  while (!frontier.empty()) {
    std::vector<std::pair<Word, double>> next;
    for (auto& [w, prod] : frontier) {
      if (prod <= 0.1) {
        expect.insert(format_word(w));
        continue;
      }
      for (int s = 1; s <= 2; ++s) {
        Word e = w;
        e.push_back(s);
        next.emplace_back(e, prod * (s == 1 ? 0.5 : 0.25));
      }
    }
    frontier = std::move(next);
  }
  REQUIRE(expect.size() == 8);

  std::set<std::string> got;
  for (const auto& w : refined.words) got.insert(format_word(w));
  REQUIRE(got == expect);
}

TEST_CASE("refinement of full shifts matches closed forms", "[symbolic]") {
  for (int m : {2, 3}) {
    std::vector<Eigen::MatrixXd> maps(static_cast<std::size_t>(m),
                                      scalar1x1(1.0 / 3.0));
    const AffineIfs ifs = validate_ifs(1, maps);
    const auto r = refine_to_depth(ifs, SymbolicSet::full_shift(m),
                                   RefineStop::threshold(1.0 / 9.0));
    REQUIRE(r.words.size() == static_cast<std::size_t>(m * m));
    for (const auto& w : r.words) REQUIRE(w.size() == 2);
  }
  // Fixed-depth rule.
  const auto d3 = refine_to_depth(cantor_pair(), SymbolicSet::full_shift(2),
                                  RefineStop::depth(3));
  REQUIRE(d3.words.size() == 8);
  // Threshold >= 1 is satisfied by every word already: unchanged.
  const SymbolicSet base{2, {parse_word("1"), parse_word("22")}};
  const auto same = refine_to_depth(cantor_pair(), base, RefineStop::threshold(1.0));
  REQUIRE(same.words == base.words);
}

TEST_CASE("refinement respects the leaf cap", "[symbolic]") {
  REQUIRE_THROWS_AS(refine_to_depth(cantor_pair(), SymbolicSet::full_shift(2),
                                    RefineStop::depth(10), 100),
                    ResourceCapError);
}

TEST_CASE("refinement preserves antichains and their cylinder unions",
          "[symbolic]") {
  const AffineIfs ifs = validate_ifs(1, {scalar1x1(0.45), scalar1x1(0.3),
                                         scalar1x1(0.2)});
  RngStream rng(13, 5);
  for (int trial = 0; trial < 20; ++trial) {
    // Random antichain: random subtree splits of the root.
    SymbolicSet set{3, {}};
    std::vector<Word> frontier{Word{}};
    while (!frontier.empty()) {
      Word w = frontier.back();
      frontier.pop_back();
      if (w.size() < 3 && rng.uniform() < 0.45) {
        for (int s = 1; s <= 3; ++s) {
          Word e = w;
          e.push_back(s);
          frontier.push_back(e);
        }
      } else {
        set.words.push_back(w);
      }
    }
    std::sort(set.words.begin(), set.words.end());
    set.validate();

    const auto refined =
        refine_to_depth(ifs, set, RefineStop::threshold(0.05));
    refined.validate();  // still an antichain

    // Every leaf extends exactly one input word.
    for (const auto& leaf : refined.words) {
      int holders = 0;
      for (const auto& w : set.words) {
        if (w.size() <= leaf.size() &&
            std::equal(w.begin(), w.end(), leaf.begin()))
          ++holders;
      }
      REQUIRE(holders == 1);
    }

    // Union preserved: a random deep extension of each input word has
    // exactly one leaf as a prefix.
    for (const auto& w : set.words) {
      Word deep = w;
      while (deep.size() < 12)
        deep.push_back(1 + static_cast<int>(rng.uniform() * 3));
      int covers = 0;
      for (const auto& leaf : refined.words) {
        if (leaf.size() <= deep.size() &&
            std::equal(leaf.begin(), leaf.end(), deep.begin()))
          ++covers;
      }
      REQUIRE(covers == 1);
    }
  }
}

TEST_CASE("antichain validation rejects nested words", "[symbolic]") {
  SymbolicSet bad{2, {parse_word("1"), parse_word("12")}};
  REQUIRE_THROWS_AS(bad.validate(), ValidationError);
  SymbolicSet empty{2, {}};
  REQUIRE_THROWS_AS(empty.validate(), ValidationError);
  SymbolicSet out_of_range{2, {parse_word("3")}};
  REQUIRE_THROWS_AS(out_of_range.validate(), ValidationError);
  SymbolicSet ok{2, {parse_word("1"), parse_word("21"), parse_word("22")}};
  ok.validate();
}

TEST_CASE("prefix tree indexes leaves in lexicographic order", "[symbolic]") {
  const AffineIfs ifs = cantor_pair();
  const auto set = refine_to_depth(ifs, SymbolicSet::full_shift(2),
                                   RefineStop::depth(3));
  const PrefixTree tree = build_prefix_tree(ifs, set);

  REQUIRE(tree.leaf_words.size() == 8);
  REQUIRE(std::is_sorted(tree.leaf_words.begin(), tree.leaf_words.end()));

  // Every node's singular values match the direct product of its word.
  for (const auto& node : tree.nodes) {
    const auto sv = node.sv;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(direct_product(ifs, node.word));
    REQUIRE(sv[0] == Catch::Approx(svd.singularValues()(0)).margin(1e-14));
    // Leaf ranges are consistent: [first, first+count) within bounds.
    REQUIRE(node.first_leaf >= 0);
    REQUIRE(node.first_leaf + node.leaf_count <=
            static_cast<int>(tree.leaf_words.size()));
    REQUIRE(node.leaf_count > 0);
  }

  // Children partition the parent's leaf range.
  for (const auto& node : tree.nodes) {
    if (node.children.empty()) continue;
    int covered = 0;
    for (int c : node.children) covered += tree.nodes[static_cast<std::size_t>(c)].leaf_count;
    REQUIRE(covered == node.leaf_count);
  }
}
