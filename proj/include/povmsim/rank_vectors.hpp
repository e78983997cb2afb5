#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace povmsim {

// Integer signature (r_1,...,r_n), sum r_a = d, classifying projective
// measurements by effect ranks.
struct RankVector {
  std::vector<int> r;

  int outcomes() const { return static_cast<int>(r.size()); }
  int sum() const { return std::accumulate(r.begin(), r.end(), 0); }
  int active_count() const {
    int m = 0;
    for (int x : r) m += (x > 0);
    return m;
  }
  std::vector<int> active_outcomes() const {
    std::vector<int> out;
    for (int a = 0; a < outcomes(); ++a)
      if (r[a] > 0) out.push_back(a);
    return out;
  }
  bool operator==(const RankVector& o) const { return r == o.r; }
  std::string str() const {
    std::string s = "(";
    for (size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + std::to_string(r[i]);
    return s + ")";
  }
};

// C(n+d-1, n-1): number of compositions of d into n nonnegative parts.
inline std::uint64_t rank_vector_count(int n, int d) {
  if (n < 1 || d < 1) throw std::invalid_argument("rank_vector_count: need n,d >= 1");
  // C(n+d-1, min(d, n-1)) with incremental division stays exact in uint64
  // for every instance this library meets (n <= 64, d <= 16).
  std::uint64_t num = 1;
  int k = std::min(d, n - 1);
  for (int i = 1; i <= k; ++i) {
    num = num * static_cast<std::uint64_t>(n + d - 1 - k + i);
    num /= static_cast<std::uint64_t>(i);
  }
  return num;
}

// Streams all compositions of d into n nonnegative parts exactly once, in
// colexicographic order, starting from (d,0,...,0). Restartable.
class RankVectorStream {
 public:
  RankVectorStream(int n, int d) : n_(n), d_(d) {
    if (n < 1 || d < 0) throw std::invalid_argument("RankVectorStream: need n >= 1, d >= 0");
    reset();
  }

  void reset() {
    cur_.assign(static_cast<size_t>(n_), 0);
    cur_[0] = d_;
    fresh_ = true;
    done_ = false;
  }

  // Writes the next vector into out; returns false when exhausted.
  bool next(RankVector& out) {
    if (done_) return false;
    if (fresh_) {
      fresh_ = false;
      out.r = cur_;
      return true;
    }
    // colex successor: move the leftmost nonzero one slot right, dump its
    // remainder back onto the first slot
    int i = 0;
    while (i < n_ && cur_[static_cast<size_t>(i)] == 0) ++i;
    if (i == n_ - 1) {
      done_ = true;
      return false;
    }
    int v = cur_[static_cast<size_t>(i)];
    cur_[static_cast<size_t>(i)] = 0;
    cur_[0] = v - 1;
    cur_[static_cast<size_t>(i) + 1] += 1;
    out.r = cur_;
    return true;
  }

  std::vector<RankVector> all() {
    reset();
    std::vector<RankVector> out;
    RankVector rv;
    while (next(rv)) out.push_back(rv);
    reset();
    return out;
  }

 private:
  int n_, d_;
  std::vector<int> cur_;
  bool fresh_ = true, done_ = false;
};

inline std::vector<RankVector> enumerate_rank_vectors(int n, int d) {
  return RankVectorStream(n, d).all();
}

}  // namespace povmsim
