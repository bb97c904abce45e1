#pragma once

// Modified Bessel functions of the third kind for real order, evaluated in
// the log domain, and the generalized inverse Gaussian (GIG) distribution.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hmghgm {

/// Concentration parameters below this value are clamped up to it.
inline constexpr double kConcentrationFloor = 1e-8;

/// GIG(lambda, chi, psi) with density proportional to
/// w^(lambda-1) exp(-(chi/w + psi*w)/2) on w > 0.
struct GigParams {
  double lambda = 1.0;
  double chi = 1.0;
  double psi = 1.0;

  /// Copy with chi and psi raised to kConcentrationFloor. Throws
  /// std::domain_error on non-finite or non-positive concentrations.
  GigParams clamped() const;
};

/// log K_nu(x) for real nu and x > 0.
///
/// Uses Temme's series (x <= 2) or Steed's continued fraction (x > 2) for the
/// reduced order |nu| - round(|nu|), followed by the upward recurrence carried
/// as a running log. Finite for 1e-300 < x < 1e300 and |nu| <= 500.
double log_bessel_k(double nu, double x);

/// log(K_{nu+1}(x) / K_nu(x)), computed without forming either value.
double log_bessel_k_ratio(double nu, double x);

struct LogBesselTriple {
  double lower;   // log K_{nu-1}(x)
  double centre;  // log K_nu(x)
  double upper;   // log K_{nu+1}(x)
};

/// log K at orders nu-1, nu, nu+1 from one reduced-order evaluation; the
/// neighbouring orders are reached by recurrence steps that add positive
/// terms only.
LogBesselTriple log_bessel_k_triple(double nu, double x);

/// d/dnu log K_nu(x) by central differences with h = max(1e-6, 1e-6 |nu|).
double dlog_bessel_k_dnu(double nu, double x);

struct GigMoments {
  double e_w = 0.0;
  double e_inv_w = 0.0;
  double e_log_w = 0.0;
};

GigMoments gig_moments(const GigParams& p);

/// Log density of the GIG law at w > 0 (returns -inf for w <= 0).
double gig_log_density(double w, const GigParams& p);

/// Draws one GIG variate using Devroye's (2014) log-concave rejection
/// envelope: a flat centre piece flanked by two exponential tails on the
/// log scale. Expected iterations are uniformly bounded in the parameters.
class GigSampler {
 public:
  explicit GigSampler(const GigParams& p);

  template <class Engine>
  double operator()(Engine& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double cand = 0.0;
    for (;;) {
      const double u = unif(rng);
      const double v = unif(rng);
      const double w = unif(rng);
      if (u < q_ / (p_ + q_ + r_)) {
        cand = -s_shift_ + q_ * v;
      } else if (u < (q_ + r_) / (p_ + q_ + r_)) {
        cand = t_shift_ - r_ * std::log(v);
      } else {
        cand = -s_shift_ + p_ * std::log(v);
      }
      if (w * hat(cand) <= std::exp(log_target(cand))) break;
    }
    return finish(cand);
  }

  const GigParams& params() const { return params_; }

 private:
  double log_target(double x) const;
  double hat(double x) const;
  double finish(double cand) const;

  GigParams params_;
  double abs_lambda_ = 0.0;
  double omega_ = 0.0;
  double alpha_ = 0.0;
  double s_ = 0.0, t_ = 0.0;
  double s_shift_ = 0.0, t_shift_ = 0.0;
  double eta_ = 0.0, zeta_ = 0.0, theta_ = 0.0, xi_ = 0.0;
  double p_ = 0.0, q_ = 0.0, r_ = 0.0;
};

/// n independent GIG draws from a std::mt19937_64 seeded with `seed`.
/// n == 0 yields an empty vector.
std::vector<double> gig_sample(const GigParams& p, std::size_t n, std::uint64_t seed);

}  // namespace hmghgm
