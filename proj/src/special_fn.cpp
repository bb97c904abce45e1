#include "hmghgm/special_fn.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hmghgm {

namespace {

constexpr double kSeriesEps = 1e-17;
constexpr int kMaxTerms = 100000;

// 1/Gamma(z) = sum_{k>=1} c_k z^k (Abramowitz & Stegun 6.1.34).
constexpr double kRecipGammaCoef[] = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

struct TemmeGammas {
  double gam1;   // (1/G(1-mu) - 1/G(1+mu)) / (2 mu)
  double gam2;   // (1/G(1-mu) + 1/G(1+mu)) / 2
  double gampl;  // 1/G(1+mu)
  double gammi;  // 1/G(1-mu)
};

// Valid for |mu| <= 1/2. Even-indexed coefficients feed gam1, odd feed gam2.
TemmeGammas temme_gammas(double mu) {
  const double mu2 = mu * mu;
  double odd = 0.0;
  double even = 0.0;
  constexpr int n = static_cast<int>(std::size(kRecipGammaCoef));
  for (int k = n; k >= 1; --k) {
    const double c = kRecipGammaCoef[k - 1];
    if (k % 2 == 1) {
      odd = odd * mu2 + c;
    } else {
      even = even * mu2 + c;
    }
  }
  TemmeGammas g{};
  g.gam1 = -even;
  g.gam2 = odd;
  g.gampl = g.gam2 - mu * g.gam1;
  g.gammi = g.gam2 + mu * g.gam1;
  return g;
}

struct LogPair {
  double first;   // log K_a(x)
  double second;  // log K_{a+1}(x)
};

// Temme's series for |mu| <= 1/2, x <= 2.
LogPair temme_series(double mu, double x) {
  const double x2 = 0.5 * x;
  const double pimu = std::numbers::pi * mu;
  const double fact = std::abs(pimu) < 1e-15 ? 1.0 : pimu / std::sin(pimu);
  const double d = -std::log(x2);
  const double e = mu * d;
  const double fact2 = std::abs(e) < 1e-15 ? 1.0 : std::sinh(e) / e;
  const TemmeGammas g = temme_gammas(mu);
  double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
  double sum = ff;
  const double ee = std::exp(e);
  double p = 0.5 * ee / g.gampl;
  double q = 0.5 / (ee * g.gammi);
  double c = 1.0;
  const double dd = x2 * x2;
  double sum1 = p;
  const double mu2 = mu * mu;
  for (int i = 1; i <= kMaxTerms; ++i) {
    const double fi = static_cast<double>(i);
    ff = (fi * ff + p + q) / (fi * fi - mu2);
    c *= dd / fi;
    p /= (fi - mu);
    q /= (fi + mu);
    const double del = c * ff;
    sum += del;
    sum1 += c * p - fi * del;
    if (std::abs(del) < std::abs(sum) * kSeriesEps) break;
  }
  return {std::log(sum), std::log(sum1) + std::log(2.0 / x)};
}

// Steed's continued fraction (Temme's CF2 form) for |mu| <= 1/2, x > 2.
LogPair steed_cf2(double mu, double x) {
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu * mu;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i <= kMaxTerms; ++i) {
    a -= 2.0 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < kSeriesEps) break;
  }
  h *= a1;
  const double lk0 = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x - std::log(s);
  return {lk0, lk0 + std::log((mu + x + 0.5 - h) / x)};
}

void check_args(double nu, double x) {
  if (!std::isfinite(x) || !(x > 0.0)) {
    throw std::domain_error("log_bessel_k: argument must be finite and positive, got " +
                            std::to_string(x));
  }
  if (!std::isfinite(nu)) {
    throw std::domain_error("log_bessel_k: order must be finite");
  }
}

// Hankel expansion for x > 1e6, where the continued fraction's recurrences
// overflow. Two correction terms leave a relative error below 1e-18.
LogPair hankel_large_x(double mu, double x) {
  auto log_k = [x](double order) {
    const double m = 4.0 * order * order;
    const double z = 8.0 * x;
    const double t1 = (m - 1.0) / z;
    const double t2 = t1 * (m - 9.0) / (2.0 * z);
    return 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x + std::log1p(t1 + t2);
  };
  return {log_k(mu), log_k(mu + 1.0)};
}

// (log K_a(x), log K_{a+1}(x)) for a >= 0.
LogPair log_k_pair(double a, double x) {
  const double n_real = std::floor(a + 0.5);
  const long n = static_cast<long>(n_real);
  const double mu = a - n_real;
  const LogPair base = x <= 2.0 ? temme_series(mu, x) : x <= 1e6 ? steed_cf2(mu, x) : hankel_large_x(mu, x);

  double log_k = base.first;
  double log_r = base.second - base.first;
  if (n == 0) return base;

  if (x > 1e-280) {
    // Ratios r_j = K_{j+1}/K_j stay >= 1 and finite; accumulate their product
    // and flush to the log accumulator before it can overflow.
    double r = std::exp(log_r);
    double prod = 1.0;
    for (long k = 1; k <= n; ++k) {
      if (r > 1e100) {
        log_k += std::log(r);
      } else {
        prod *= r;
        if (prod > 1e200) {
          log_k += std::log(prod);
          prod = 1.0;
        }
      }
      r = 1.0 / r + 2.0 * (mu + static_cast<double>(k)) / x;
    }
    log_k += std::log(prod);
    return {log_k, log_k + std::log(r)};
  }

  const double log_x = std::log(x);
  for (long k = 1; k <= n; ++k) {
    log_k += log_r;
    const double a_term = std::log(2.0 * (mu + static_cast<double>(k))) - log_x;
    const double b_term = -log_r;
    const double hi = std::max(a_term, b_term);
    log_r = hi + std::log1p(std::exp(std::min(a_term, b_term) - hi));
  }
  return {log_k, log_k + log_r};
}

}  // namespace

GigParams GigParams::clamped() const {
  if (!std::isfinite(lambda)) throw std::domain_error("GIG: lambda must be finite");
  if (!std::isfinite(chi) || chi < 0.0 || !std::isfinite(psi) || psi < 0.0) {
    throw std::domain_error("GIG: chi and psi must be finite and non-negative");
  }
  return {lambda, std::max(chi, kConcentrationFloor), std::max(psi, kConcentrationFloor)};
}

double log_bessel_k(double nu, double x) {
  check_args(nu, x);
  return log_k_pair(std::abs(nu), x).first;
}

double log_bessel_k_ratio(double nu, double x) {
  check_args(nu, x);
  if (nu >= 0.0) {
    const LogPair p = log_k_pair(nu, x);
    return p.second - p.first;
  }
  if (nu <= -1.0) {
    // K_{nu+1}/K_nu = K_{|nu|-1}/K_{|nu|}
    const LogPair p = log_k_pair(-nu - 1.0, x);
    return p.first - p.second;
  }
  return log_k_pair(nu + 1.0, x).first - log_k_pair(-nu, x).first;
}

LogBesselTriple log_bessel_k_triple(double nu, double x) {
  check_args(nu, x);
  const double a = std::abs(nu);
  double below = 0.0;
  double at = 0.0;
  double above = 0.0;
  if (a >= 1.0) {
    const LogPair p = log_k_pair(a - 1.0, x);
    below = p.first;
    at = p.second;
    // K_{a+1} = K_{a-1} + (2a/x) K_a
    const double inv_r = std::exp(p.first - p.second);
    above = at + std::log(inv_r + 2.0 * a / x);
  } else {
    const LogPair p = log_k_pair(a, x);
    at = p.first;
    above = p.second;
    below = log_k_pair(1.0 - a, x).first;
  }
  if (nu >= 0.0) return {below, at, above};
  return {above, at, below};
}

double dlog_bessel_k_dnu(double nu, double x) {
  check_args(nu, x);
  const double h = std::max(1e-6, 1e-6 * std::abs(nu));
  return (log_k_pair(std::abs(nu + h), x).first - log_k_pair(std::abs(nu - h), x).first) /
         (2.0 * h);
}

GigMoments gig_moments(const GigParams& p) {
  const GigParams c = p.clamped();
  const double log_chi = std::log(c.chi);
  const double log_psi = std::log(c.psi);
  const double omega = std::exp(0.5 * (log_chi + log_psi));
  const double log_eta = 0.5 * (log_chi - log_psi);
  GigMoments m;
  m.e_w = std::exp(log_eta + log_bessel_k_ratio(c.lambda, omega));
  m.e_inv_w = std::exp(-log_eta - log_bessel_k_ratio(c.lambda - 1.0, omega));
  m.e_log_w = log_eta + dlog_bessel_k_dnu(c.lambda, omega);
  return m;
}

double gig_log_density(double w, const GigParams& p) {
  const GigParams c = p.clamped();
  if (!(w > 0.0)) return -std::numeric_limits<double>::infinity();
  const double omega = std::sqrt(c.chi * c.psi);
  return 0.5 * c.lambda * (std::log(c.psi) - std::log(c.chi)) - std::numbers::ln2 -
         log_bessel_k(c.lambda, omega) + (c.lambda - 1.0) * std::log(w) -
         0.5 * (c.chi / w + c.psi * w);
}

GigSampler::GigSampler(const GigParams& p) : params_(p.clamped()) {
  abs_lambda_ = std::abs(params_.lambda);
  omega_ = std::sqrt(params_.chi * params_.psi);
  // sqrt(omega^2 + lambda^2) - |lambda| without cancellation
  alpha_ = omega_ * omega_ / (std::sqrt(omega_ * omega_ + abs_lambda_ * abs_lambda_) + abs_lambda_);

  auto psi_fn = [this](double x) {
    return -alpha_ * (std::cosh(x) - 1.0) - abs_lambda_ * (std::expm1(x) - x);
  };
  auto dpsi_fn = [this](double x) { return -alpha_ * std::sinh(x) - abs_lambda_ * std::expm1(x); };

  double lc = -psi_fn(1.0);
  if (lc >= 0.5 && lc <= 2.0) {
    t_ = 1.0;
  } else if (lc > 2.0) {
    t_ = std::sqrt(2.0 / (alpha_ + abs_lambda_));
  } else {
    t_ = std::log(4.0 / (alpha_ + 2.0 * abs_lambda_));
  }
  lc = -psi_fn(-1.0);
  if (lc >= 0.5 && lc <= 2.0) {
    s_ = 1.0;
  } else if (lc > 2.0) {
    s_ = std::sqrt(4.0 / (alpha_ * std::cosh(1.0) + abs_lambda_));
  } else {
    const double inv_a = 1.0 / alpha_;
    const double tail = std::log1p(inv_a + std::sqrt(inv_a * inv_a + 2.0 * inv_a));
    s_ = abs_lambda_ > 0.0 ? std::min(1.0 / abs_lambda_, tail) : tail;
  }
  eta_ = -psi_fn(t_);
  zeta_ = -dpsi_fn(t_);
  theta_ = -psi_fn(-s_);
  xi_ = dpsi_fn(-s_);
  p_ = 1.0 / xi_;
  r_ = 1.0 / zeta_;
  t_shift_ = t_ - r_ * eta_;
  s_shift_ = s_ - p_ * theta_;
  q_ = t_shift_ + s_shift_;
}

double GigSampler::log_target(double x) const {
  return -alpha_ * (std::cosh(x) - 1.0) - abs_lambda_ * (std::expm1(x) - x);
}

double GigSampler::hat(double x) const {
  if (x >= -s_shift_ && x <= t_shift_) return 1.0;
  if (x > t_shift_) return std::exp(-eta_ - zeta_ * (x - t_));
  return std::exp(-theta_ + xi_ * (x + s_));
}

double GigSampler::finish(double cand) const {
  const double ratio = abs_lambda_ / omega_;
  const double w = (ratio + std::sqrt(1.0 + ratio * ratio)) * std::exp(cand);
  const double scale = std::sqrt(params_.chi / params_.psi);
  return params_.lambda >= 0.0 ? w * scale : scale / w;
}

std::vector<double> gig_sample(const GigParams& p, std::size_t n, std::uint64_t seed) {
  const GigSampler sampler(p);
  std::mt19937_64 rng(seed);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler(rng));
  return out;
}

}  // namespace hmghgm
