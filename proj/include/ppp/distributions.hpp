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

#pragma once

namespace ppp::stats {

/// Regularized incomplete beta I_x(a, b). `x_complement` must equal 1 - x;
/// passing it separately keeps precision when x is close to 1.
double incomplete_beta(double a, double b, double x, double x_complement);
double incomplete_beta(double a, double b, double x);

/// Student-t cumulative distribution with `df` > 0 degrees of freedom.
/// Handles t = +-infinity.
double student_t_cdf(double t, double df);

/// Two-sided tail P(|T| >= |t|).
double student_t_two_sided(double t, double df);

/// Fisher-Snedecor F cumulative distribution and upper tail.
double f_cdf(double f, double df1, double df2);
double f_sf(double f, double df1, double df2);

}  // namespace ppp::stats
