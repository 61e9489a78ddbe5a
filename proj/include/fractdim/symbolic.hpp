#pragma once

// Symbolic space over {1..m}: words, self-affine iterated function systems
// (linear parts), cylinder antichains, and their refinement trees.
//
// Conventions: a Word lists symbols outermost-first, so the map product of
// w = (i1..in) is T_{i1} T_{i2} ... T_{in} and the coding point of w under
// translations a is a_{i1} + T_{i1}(a_{i2} + T_{i2}(...)). The empty word is
// the root cylinder (full shift).

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "fractdim/common.hpp"

namespace fractdim {

using Word = std::vector<int>;  // symbols 1..m

/// Parse "1212" into {1,2,1,2}. Digits 1..9 only; "" is the root word.
inline Word parse_word(const std::string& s) {
  Word w;
  w.reserve(s.size());
  for (char c : s) {
    if (c < '1' || c > '9')
      throw ValidationError("word digits must be in 1..9, got '" +
                            std::string(1, c) + "'");
    w.push_back(c - '0');
  }
  return w;
}

inline std::string format_word(const Word& w) {
  std::string s;
  s.reserve(w.size());
  for (int sym : w) {
    if (sym < 1 || sym > 9)
      throw ValidationError("only alphabets up to 9 symbols serialize as digit strings");
    s.push_back(static_cast<char>('0' + sym));
  }
  return s;
}

/// Linear parts of a self-affine IFS: d x d invertible maps with norm < 1.
struct AffineIfs {
  int d = 0;
  std::vector<Eigen::MatrixXd> maps;
  double norm_max = 0.0;    // max_j ||T_j||
  bool strict_half = false; // max_j ||T_j|| < 1/2

  int alphabet() const { return static_cast<int>(maps.size()); }
};

inline double spectral_norm(const Eigen::MatrixXd& t) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(t).singularValues()(0);
}

inline AffineIfs validate_ifs(int d, const std::vector<Eigen::MatrixXd>& maps) {
  if (d <= 0) throw ValidationError("ifs dimension d must be >= 1");
  if (maps.empty()) throw ValidationError("ifs needs at least one map");
  AffineIfs ifs;
  ifs.d = d;
  ifs.maps = maps;
  for (std::size_t j = 0; j < maps.size(); ++j) {
    const auto& t = maps[j];
    if (t.rows() != d || t.cols() != d)
      throw ValidationError("map " + std::to_string(j + 1) + " is not " +
                            std::to_string(d) + "x" + std::to_string(d));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(t);
    if (!lu.isInvertible())
      throw ValidationError("map " + std::to_string(j + 1) + " is singular");
    const double n = spectral_norm(t);
    if (!(n < 1.0))
      throw ValidationError("map " + std::to_string(j + 1) +
                            " has norm >= 1 (not a contraction)");
    ifs.norm_max = std::max(ifs.norm_max, n);
  }
  ifs.strict_half = ifs.norm_max < 0.5;
  return ifs;
}

struct CommonPrefix {
  Word prefix;
  bool diagonal = false;  // the two words are identical
};

inline CommonPrefix common_prefix(const Word& x, const Word& y) {
  CommonPrefix cp;
  const std::size_t n = std::min(x.size(), y.size());
  std::size_t k = 0;
  while (k < n && x[k] == y[k]) ++k;
  cp.prefix.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k));
  cp.diagonal = (x.size() == y.size() && k == x.size());
  return cp;
}

inline void check_symbols(const AffineIfs& ifs, const Word& w) {
  for (int sym : w)
    if (sym < 1 || sym > ifs.alphabet())
      throw ValidationError("word symbol " + std::to_string(sym) +
                            " outside alphabet 1.." +
                            std::to_string(ifs.alphabet()));
}

inline Eigen::MatrixXd word_product(const AffineIfs& ifs, const Word& w) {
  check_symbols(ifs, w);
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(ifs.d, ifs.d);
  for (int sym : w) p = p * ifs.maps[static_cast<std::size_t>(sym - 1)];
  return p;
}

/// Singular values of T_w, non-increasing, length d.
inline std::vector<double> singular_values(const AffineIfs& ifs, const Word& w) {
  const Eigen::VectorXd sv =
      Eigen::JacobiSVD<Eigen::MatrixXd>(word_product(ifs, w)).singularValues();
  return std::vector<double>(sv.data(), sv.data() + sv.size());
}

struct CodingPoint {
  Eigen::VectorXd point;
  double truncation_error = 0.0;  // norm_max^|w| * max_j|a_j| / (1 - norm_max)
};

/// Finite-depth coding point: the word's composition applied to the origin,
/// with the a-priori tail bound reported alongside.
inline CodingPoint coding_point(const AffineIfs& ifs, const Word& w,
                                const std::vector<Eigen::VectorXd>& a) {
  check_symbols(ifs, w);
  if (static_cast<int>(a.size()) != ifs.alphabet())
    throw ValidationError("translation count != alphabet size");
  double a_max = 0.0;
  for (const auto& aj : a) {
    if (aj.size() != ifs.d)
      throw ValidationError("translation dimension != ifs dimension");
    a_max = std::max(a_max, aj.norm());
  }
  CodingPoint cp;
  cp.point = Eigen::VectorXd::Zero(ifs.d);
  for (auto it = w.rbegin(); it != w.rend(); ++it)
    cp.point = a[static_cast<std::size_t>(*it - 1)] +
               ifs.maps[static_cast<std::size_t>(*it - 1)] * cp.point;
  cp.truncation_error = std::pow(ifs.norm_max, static_cast<double>(w.size())) *
                        a_max / (1.0 - ifs.norm_max);
  return cp;
}

/// A finite union of cylinders given by an antichain of words (sorted).
struct SymbolicSet {
  int m = 0;
  std::vector<Word> words;

  static SymbolicSet full_shift(int m) {
    if (m < 1) throw ValidationError("alphabet size must be >= 1");
    return SymbolicSet{m, {Word{}}};
  }

  void validate() const {
    if (m < 1) throw ValidationError("alphabet size must be >= 1");
    if (words.empty()) throw ValidationError("symbolic set has no words");
    for (const auto& w : words)
      for (int sym : w)
        if (sym < 1 || sym > m)
          throw ValidationError("word symbol outside alphabet");
    if (!std::is_sorted(words.begin(), words.end()))
      throw ValidationError("words must be sorted lexicographically");
    // Sorted order puts any prefix immediately before an extension of it,
    // so adjacent checks suffice for the antichain property.
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
      const Word& u = words[i];
      const Word& v = words[i + 1];
      if (u.size() <= v.size() && std::equal(u.begin(), u.end(), v.begin()))
        throw ValidationError("antichain violated: '" + format_word(u) +
                              "' is a prefix of '" + format_word(v) + "'");
    }
  }
};

/// Stop rule for refinement: either a fixed depth or a singular-value
/// threshold alpha_1(T_I) <= c, applied minimally.
struct RefineStop {
  int depth_value = -1;
  double threshold_value = -1.0;

  static RefineStop depth(int n) {
    if (n < 0) throw ValidationError("refinement depth must be >= 0");
    RefineStop s;
    s.depth_value = n;
    return s;
  }
  static RefineStop threshold(double c) {
    if (!(c > 0.0)) throw ValidationError("refinement threshold must be > 0");
    RefineStop s;
    s.threshold_value = c;
    return s;
  }
  bool by_depth() const { return depth_value >= 0; }
};

inline constexpr long kDefaultLeafCap = 200000;

/// Expand each word of the antichain until the stop rule holds, keeping the
/// cylinder union fixed. Words already satisfying the rule pass through.
inline SymbolicSet refine_to_depth(const AffineIfs& ifs, const SymbolicSet& set,
                                   const RefineStop& stop,
                                   long leaf_cap = kDefaultLeafCap) {
  set.validate();
  if (set.m != ifs.alphabet())
    throw ValidationError("symbolic set alphabet != ifs alphabet");
  SymbolicSet out;
  out.m = set.m;

  struct Item {
    Word w;
    Eigen::MatrixXd prod;
  };
  const auto satisfied = [&](const Item& it) {
    if (stop.by_depth())
      return static_cast<int>(it.w.size()) >= stop.depth_value;
    return spectral_norm(it.prod) <= stop.threshold_value;
  };

  // Depth-first with children pushed in reverse keeps lexicographic order.
  std::vector<Item> stack;
  for (auto rit = set.words.rbegin(); rit != set.words.rend(); ++rit)
    stack.push_back({*rit, word_product(ifs, *rit)});
  while (!stack.empty()) {
    Item it = std::move(stack.back());
    stack.pop_back();
    if (satisfied(it)) {
      out.words.push_back(std::move(it.w));
      if (static_cast<long>(out.words.size()) > leaf_cap)
        throw ResourceCapError("refinement leaf cap (" +
                               std::to_string(leaf_cap) + ") exceeded");
      continue;
    }
    for (int sym = ifs.alphabet(); sym >= 1; --sym) {
      Item child;
      child.w = it.w;
      child.w.push_back(sym);
      child.prod = it.prod * ifs.maps[static_cast<std::size_t>(sym - 1)];
      stack.push_back(std::move(child));
    }
  }
  return out;
}

/// Prefix tree over an antichain, with per-node singular values and the
/// contiguous range of leaves (in sorted order) below each node. Kernel
/// matrices over the antichain fill blockwise from this structure.
struct PrefixTreeNode {
  Word word;
  std::vector<double> sv;
  int first_leaf = 0;
  int leaf_count = 0;
  std::vector<int> children;  // empty for leaves
  bool is_leaf = false;
};

struct PrefixTree {
  std::vector<PrefixTreeNode> nodes;  // nodes[0] is the root
  std::vector<Word> leaf_words;       // sorted; leaf i <-> leaf_words[i]
};

namespace detail {

inline int build_tree_rec(const AffineIfs& ifs, PrefixTree& tree, int lo,
                          int hi, std::size_t depth,
                          const Eigen::MatrixXd& prod, const Word& word) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  {
    PrefixTreeNode& n = tree.nodes.back();
    n.word = word;
    const Eigen::VectorXd sv =
        Eigen::JacobiSVD<Eigen::MatrixXd>(prod).singularValues();
    n.sv.assign(sv.data(), sv.data() + sv.size());
    n.first_leaf = lo;
    n.leaf_count = hi - lo;
  }
  if (tree.leaf_words[static_cast<std::size_t>(lo)].size() == depth) {
    // The antichain guarantees this word has no extensions in range.
    tree.nodes[static_cast<std::size_t>(id)].is_leaf = true;
    return id;
  }
  int i = lo;
  std::vector<int> children;
  while (i < hi) {
    const int sym = tree.leaf_words[static_cast<std::size_t>(i)][depth];
    int j = i;
    while (j < hi &&
           tree.leaf_words[static_cast<std::size_t>(j)][depth] == sym)
      ++j;
    Word cw = word;
    cw.push_back(sym);
    const Eigen::MatrixXd cp =
        prod * ifs.maps[static_cast<std::size_t>(sym - 1)];
    children.push_back(build_tree_rec(ifs, tree, i, j, depth + 1, cp, cw));
    i = j;
  }
  tree.nodes[static_cast<std::size_t>(id)].children = std::move(children);
  return id;
}

}  // namespace detail

inline PrefixTree build_prefix_tree(const AffineIfs& ifs,
                                    const SymbolicSet& set) {
  set.validate();
  if (set.m != ifs.alphabet())
    throw ValidationError("symbolic set alphabet != ifs alphabet");
  PrefixTree tree;
  tree.leaf_words = set.words;
  tree.nodes.reserve(2 * set.words.size());
  detail::build_tree_rec(ifs, tree, 0, static_cast<int>(set.words.size()), 0,
                         Eigen::MatrixXd::Identity(ifs.d, ifs.d), Word{});
  return tree;
}

}  // namespace fractdim
