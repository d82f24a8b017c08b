// Copyright 2026 The PPP Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ppp/distributions.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ppp/error.hpp"

namespace ppp::stats {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a,b) (modified Lentz). Converges quickly when
// x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 100000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= kEps) return h;
  }
  fail(ErrorCode::degenerate, "incomplete beta continued fraction did not converge");
}

// x^a (1-x)^b / (a B(a,b)), computed in log space.
double beta_prefactor(double a, double b, double x, double xc) {
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return std::exp(a * std::log(x) + b * std::log(xc) - log_beta);
}

}  // namespace

double incomplete_beta(double a, double b, double x, double xc) {
  if (!(a > 0.0) || !(b > 0.0)) {
    fail(ErrorCode::invalid_argument, "incomplete_beta: shape parameters must be positive");
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    fail(ErrorCode::invalid_argument, "incomplete_beta: x outside [0, 1]");
  }
  if (x == 0.0) return 0.0;
  if (xc == 0.0) return 1.0;
  const double front = beta_prefactor(a, b, x, xc);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  // Symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
  return 1.0 - front * beta_continued_fraction(b, a, xc) / b;
}

double incomplete_beta(double a, double b, double x) {
  return incomplete_beta(a, b, x, 1.0 - x);
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) fail(ErrorCode::invalid_argument, "student_t_cdf: df must be positive");
  if (std::isnan(t)) fail(ErrorCode::invalid_argument, "student_t_cdf: t is NaN");
  if (t == 0.0) return 0.5;
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double t2 = t * t;
  // P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)
  const double x = df / (df + t2);
  const double xc = t2 / (df + t2);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x, xc);
  return t > 0 ? 1.0 - tail : tail;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) fail(ErrorCode::invalid_argument, "student_t_two_sided: df must be positive");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  const double t2 = t * t;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2));
}

double f_cdf(double f, double df1, double df2) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) {
    fail(ErrorCode::invalid_argument, "f_cdf: degrees of freedom must be positive");
  }
  if (std::isnan(f)) fail(ErrorCode::invalid_argument, "f_cdf: f is NaN");
  if (f <= 0.0) return 0.0;
  if (std::isinf(f)) return 1.0;
  const double num = df1 * f;
  return incomplete_beta(0.5 * df1, 0.5 * df2, num / (num + df2), df2 / (num + df2));
}

double f_sf(double f, double df1, double df2) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) {
    fail(ErrorCode::invalid_argument, "f_sf: degrees of freedom must be positive");
  }
  if (std::isnan(f)) fail(ErrorCode::invalid_argument, "f_sf: f is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  const double num = df1 * f;
  return incomplete_beta(0.5 * df2, 0.5 * df1, df2 / (num + df2), num / (num + df2));
}

}  // namespace ppp::stats
