#pragma once

// Independent reference implementations used to check the library. None of
// these call into the code they are checking beyond plain model evaluation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hazardforge/eval_metrics.hpp"
#include "hazardforge/hazard_boost.hpp"
#include "hazardforge/survival_data.hpp"

namespace oracle {

using namespace hazardforge;

// Adaptive Simpson with an absolute per-interval tolerance. Discontinuities
// are chased down to tiny intervals, which is what a piecewise-constant
// integrand needs.
inline double simpson(const std::function<double(double)>& f, double a, double b, double fa,
                      double fm, double fb, double whole, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 1e-14 || !(lm > a && rm < b)) {
    return left + right;
  }
  return simpson(f, a, m, fa, flm, fm, left, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b) {
  if (!(a < b)) return 0.0;
  // Start from a fixed subdivision so no step hides between the first samples.
  const int n = 16;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    const double lo = a + (b - a) * k / n;
    const double hi = k + 1 == n ? b : a + (b - a) * (k + 1) / n;
    const double fa = f(lo);
    const double fm = f(0.5 * (lo + hi));
    const double fb = f(hi);
    total += simpson(f, lo, hi, fa, fm, fb, (hi - lo) / 6.0 * (fa + 4.0 * fm + fb), 60);
  }
  return total;
}

// Quadrature NLL; the event term is the hazard just before t_end.
inline double quadrature_nll(const HazardEnsemble& model, const std::vector<Episode>& episodes) {
  double total = 0.0;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      total += integrate([&](double u) { return hazard(model, u, e.covariates); }, e.t_start,
                         e.t_end);
      if (e.delta == 1) {
        const double t_minus = std::nextafter(e.t_end, -std::numeric_limits<double>::infinity());
        total -= std::log(hazard(model, t_minus, e.covariates));
      }
    }
  }
  return total;
}

inline double quadrature_cumhaz(const HazardEnsemble& model, const Episode& ep, double t) {
  double total = 0.0;
  for (const auto& e : ep.epochs) {
    const double lo = std::max(e.t_start, model.schema.monitoring_start);
    const double hi = std::min(e.t_end, t);
    total += integrate([&](double u) { return hazard(model, u, e.covariates); }, lo, hi);
  }
  return total;
}

// Golden-section search on the constant-hazard NLL E*exp(f) - N*f. Function
// values are compared through a cancellation-free difference so the search
// can resolve the optimum well below sqrt(machine epsilon).
inline double golden_section_f0(double events, double exposure) {
  auto less = [&](double a, double b) {  // NLL(a) < NLL(b)
    const double diff = exposure * std::exp(b) * std::expm1(a - b) - events * (a - b);
    return diff < 0.0;
  };
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -30.0;
  double hi = 10.0;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  for (int it = 0; it < 400 && hi - lo > 1e-13; ++it) {
    if (less(x1, x2)) {
      hi = x2;
      x2 = x1;
      x1 = hi - phi * (hi - lo);
    } else {
      lo = x1;
      x1 = x2;
      x2 = lo + phi * (hi - lo);
    }
  }
  return 0.5 * (lo + hi);
}

// Brute-force Mann-Whitney statistic with ties counted one half.
inline double mann_whitney(const std::vector<ScoredEpisode>& s) {
  double num = 0.0;
  double pairs = 0.0;
  for (const auto& p : s) {
    if (!p.positive) continue;
    for (const auto& n : s) {
      if (n.positive) continue;
      pairs += 1.0;
      if (p.score > n.score) num += 1.0;
      else if (p.score == n.score) num += 0.5;
    }
  }
  return num / pairs;
}

// Walks the flag-then-wait protocol forward in time: monitoring stops at the
// first flag; an event before any flag ends the episode unflagged.
inline Confusion protocol_simulator(const std::vector<MonitoringTrace>& traces, double rho) {
  Confusion c;
  for (const auto& tr : traces) {
    std::optional<double> flag;
    for (const auto& p : tr.path) {
      if (tr.first_event_time && p.t_start >= *tr.first_event_time) break;  // event came first
      if (p.hazard >= rho) {
        flag = p.t_start;
        break;
      }
    }
    if (tr.first_event_time) {
      (flag ? c.tp : c.fn) += 1;
    } else {
      bool flagged_any = false;
      for (const auto& p : tr.path) flagged_any = flagged_any || p.hazard >= rho;
      (flagged_any ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

// Exhaustive F1 sweep over distinct finite scores with rational comparison.
inline std::pair<double, double> exhaustive_f1(const std::vector<ScoredEpisode>& s) {
  std::vector<double> cand;
  for (const auto& p : s) {
    if (std::isfinite(p.score)) cand.push_back(p.score);
  }
  std::sort(cand.begin(), cand.end());
  long long best_num = -1;
  long long best_den = 1;
  double best_rho = 0.0;
  for (const double rho : cand) {
    long long tp = 0, fp = 0, fn = 0;
    for (const auto& p : s) {
      const bool flag = p.score >= rho;
      if (p.positive && flag) ++tp;
      if (!p.positive && flag) ++fp;
      if (p.positive && !flag) ++fn;
    }
    const long long num = 2 * tp;
    const long long den = 2 * tp + fp + fn;
    // strict improvement only; ascending order keeps the smallest rho on ties
    if (best_num < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_rho = rho;
    }
  }
  return {best_rho, best_den > 0 ? static_cast<double>(best_num) / best_den : 0.0};
}

// First-round split found by enumerating every (feature, partition, missing
// direction) and evaluating the gain from scratch on fragments.
struct ExhaustiveSplit {
  int feature = -1;        // 0 = time
  double lo_value = 0.0;   // largest value sent left
  double hi_value = 0.0;   // smallest value sent right
  bool missing_left = true;
  double gain = 0.0;
};

inline ExhaustiveSplit exhaustive_root_split(const std::vector<Episode>& episodes,
                                             double min_hessian = 1e-6) {
  double n_events = 0.0;
  double exposure = 0.0;
  std::vector<double> bounds;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      n_events += e.delta;
      exposure += e.t_end - e.t_start;
      bounds.push_back(e.t_start);
      bounds.push_back(e.t_end);
    }
  }
  const double base = n_events / exposure;
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  std::vector<double> cuts;
  if (bounds.size() >= 3) cuts.assign(bounds.begin() + 1, bounds.end() - 1);

  // Fragments at every cut: (t_lo, covariates, g, h).
  struct Frag {
    double t;
    const std::vector<double>* x;
    double g;
    double h;
  };
  std::vector<Frag> frags;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      double lo = e.t_start;
      for (const double c : cuts) {
        if (c > e.t_start && c < e.t_end) {
          const double w = base * (c - lo);
          frags.push_back({lo, &e.covariates, w, w});
          lo = c;
        }
      }
      const double w = base * (e.t_end - lo);
      frags.push_back({lo, &e.covariates, w - e.delta, w});
    }
  }
  double gp = 0.0, hp = 0.0;
  for (const auto& f : frags) {
    gp += f.g;
    hp += f.h;
  }
  const std::size_t width = episodes.front().epochs.front().covariates.size();
  ExhaustiveSplit best;
  for (std::size_t feat = 0; feat <= width; ++feat) {
    auto value = [&](const Frag& f) { return feat == 0 ? f.t : (*f.x)[feat - 1]; };
    std::vector<double> values;
    for (const auto& f : frags) {
      const double v = value(f);
      if (!std::isnan(v)) values.push_back(v);
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
      for (const bool miss_left : {true, false}) {
        double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
        for (const auto& f : frags) {
          const double v = value(f);
          const bool left = std::isnan(v) ? miss_left : v <= values[k];
          (left ? gl : gr) += f.g;
          (left ? hl : hr) += f.h;
        }
        if (hl < min_hessian || hr < min_hessian) continue;
        const double gain = gl * gl / hl + gr * gr / hr - gp * gp / hp;
        if (gain <= 0.0) continue;
        // same tie rule as documented: lower feature, lower threshold, left
        if (best.feature < 0 || gain > best.gain + 1e-12 * std::max(1.0, std::abs(best.gain))) {
          best = {static_cast<int>(feat), values[k], values[k + 1], miss_left, gain};
        }
      }
    }
  }
  return best;
}

// One-sample Kolmogorov-Smirnov against Exp(rate): statistic and asymptotic
// p-value (Kolmogorov series with the Stephens small-sample correction).
struct KsResult {
  double d = 0.0;
  double p_value = 1.0;
};

inline KsResult ks_exponential(std::vector<double> x, double rate) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = -std::expm1(-rate * x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double sqrt_n = std::sqrt(n);
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  if (lambda < 0.3) return {d, 1.0};  // series unusable; p > 0.9999 here
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-16) break;
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() /
           ("hazardforge-" + tag + "-" + std::to_string(rng() % 1000000000ULL));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
