#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <vector>

#include "siatrans/metrics.hpp"
#include "siatrans/nn.hpp"

namespace siatrans::testing {

inline SaliencyMap random_map(std::size_t h, std::size_t w, Rng& rng) {
  SaliencyMap m(h, w);
  // Mix of exact grid values and arbitrary reals so ties with thresholds occur.
  for (auto& v : m.values) v = rng.uniform(0, 1) < 0.3 ? std::round(rng.uniform(0, 255)) / 255.0 : rng.uniform(0, 1);
  return m;
}

inline SaliencyMap random_gt(std::size_t h, std::size_t w, Rng& rng) {
  SaliencyMap g(h, w);
  for (auto& v : g.values) v = rng.uniform(0, 1) < 0.4 ? 1.0 : 0.0;
  g.values[0] = 1.0;
  g.values[1] = 0.0;
  return g;
}

// ---- brute-force oracles ----

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

inline Counts count_at(const SaliencyMap& s, const SaliencyMap& g, double t) {
  Counts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = s.values[i] >= t, y = g.values[i] == 1.0;
    c.tp += p && y;
    c.fp += p && !y;
    c.fn += !p && y;
  }
  return c;
}

inline double e_oracle(const SaliencyMap& s, const SaliencyMap& g, double t) {
  const std::size_t n = s.size();
  std::vector<double> b(n);
  double mb = 0, mg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    b[i] = s.values[i] >= t ? 1.0 : 0.0;
    mb += b[i] / n;
    mg += g.values[i] / n;
  }
  double e = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ps = b[i] - mb, pg = g.values[i] - mg;
    const double xi = 2 * pg * ps / (pg * pg + ps * ps + 1e-8);
    e += (xi + 1) * (xi + 1) / 4;
  }
  return e / n;
}

// Structure measure written from the construction directly, with a
// block-statistics helper that works on flattened index lists.
struct StructureReference {
  static double similarity(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double sum = 0, sq = 0;
    for (double x : v) sum += x;
    const double mu = sum / n;
    for (double x : v) sq += (x - mu) * (x - mu);
    const double sd = v.size() > 1 ? std::sqrt(sq / (n - 1)) : 0.0;
    return 2 * mu / (mu * mu + 1 + sd + DBL_EPSILON);
  }

  static double object(const SaliencyMap& s, const SaliencyMap& g) {
    std::vector<double> inside, outside;
    for (std::size_t i = 0; i < s.size(); ++i) {
      (g.values[i] == 1.0 ? inside : outside).push_back(g.values[i] == 1.0 ? s.values[i] : 1 - s.values[i]);
    }
    const double share = static_cast<double>(inside.size()) / s.size();
    double r = 0;
    if (!inside.empty()) r += share * similarity(inside);
    if (!outside.empty()) r += (1 - share) * similarity(outside);
    return r;
  }

  static double ssim(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty()) return 0.0;
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
      cov += (a[i] - ma) * (b[i] - mb);
    }
    const double d = n - 1 + DBL_EPSILON;
    va /= d;
    vb /= d;
    cov /= d;
    const double num = 4 * ma * mb * cov, den = (ma * ma + mb * mb) * (va + vb);
    if (num != 0) return num / (den + DBL_EPSILON);
    return den == 0 ? 1.0 : 0.0;
  }

  static double region(const SaliencyMap& s, const SaliencyMap& g) {
    const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
    double ys = 0, xs = 0, k = 0;
    for (long i = 0; i < h * w; ++i) {
      if (g.values[i] == 1.0) {
        ys += i / w;
        xs += i % w;
        ++k;
      }
    }
    long cx = std::lround(xs / k) + 1, cy = std::lround(ys / k) + 1;
    // lround breaks .5 ties away from zero; the construction rounds half to even.
    if (std::fabs(xs / k - std::floor(xs / k) - 0.5) == 0 && (static_cast<long>(std::floor(xs / k)) % 2 == 0)) --cx;
    if (std::fabs(ys / k - std::floor(ys / k) - 0.5) == 0 && (static_cast<long>(std::floor(ys / k)) % 2 == 0)) --cy;
    cx = std::min(cx, w);
    cy = std::min(cy, h);
    double total = 0;
    const long ys0[2] = {0, cy}, ys1[2] = {cy, h}, xs0[2] = {0, cx}, xs1[2] = {cx, w};
    for (int by = 0; by < 2; ++by) {
      for (int bx = 0; bx < 2; ++bx) {
        std::vector<double> a, b;
        for (long y = ys0[by]; y < ys1[by]; ++y) {
          for (long x = xs0[bx]; x < xs1[bx]; ++x) {
            a.push_back(s(y, x));
            b.push_back(g(y, x));
          }
        }
        total += static_cast<double>(a.size()) / static_cast<double>(h * w) * ssim(a, b);
      }
    }
    return total;
  }

  static double measure(const SaliencyMap& s, const SaliencyMap& g) {
    return std::max(0.5 * object(s, g) + 0.5 * region(s, g), 0.0);
  }
};

/// Brute-force PR, max-F, max-E and MAE plus the reference structure measure
/// on one instance; returns the largest deviation from the library.
struct OracleDeviation {
  double pr = 0.0, f = 0.0, e = 0.0, mae = 0.0, s = 0.0;
};

inline OracleDeviation compare_with_oracles(const SaliencyMap& s, const SaliencyMap& g) {
  OracleDeviation d;
  const auto c = pr_curve(s, g);
  double positives = 0;
  for (double v : g.values) positives += v;
  double best_f = 0, best_e = 0;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const double t = static_cast<double>(k) / 255.0;
    const auto n = count_at(s, g, t);
    const double p = n.tp + n.fp > 0 ? n.tp / (n.tp + n.fp) : 1.0;
    const double r = positives > 0 ? n.tp / positives : 1.0;
    d.pr = std::max({d.pr, std::fabs(c.precision[k] - p), std::fabs(c.recall[k] - r)});
    best_f = std::max(best_f, 0.3 * p + r > 0 ? 1.3 * p * r / (0.3 * p + r) : 0.0);
    best_e = std::max(best_e, e_oracle(s, g, t));
  }
  d.f = std::fabs(max_f_measure(c).value - best_f);
  d.e = std::fabs(max_e_measure(s, g) - best_e);
  d.s = std::fabs(s_measure(s, g) - StructureReference::measure(s, g));
  double mae = 0;
  for (std::size_t i = 0; i < s.size(); ++i) mae += std::fabs(s.values[i] - g.values[i]);
  const std::vector<SaliencyMap> ps{s}, gs{g};
  d.mae = std::fabs(dataset_mae(ps, gs) - mae / static_cast<double>(s.size()));
  return d;
}

}  // namespace siatrans::testing
