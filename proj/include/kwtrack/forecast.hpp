#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "time.hpp"

namespace kwtrack {

inline constexpr std::size_t kMinSeriesLength = 8;

// log1p-transformed bucket counts. Differencing is part of the model spec, so
// d_applied stays 0 for prepared series.
struct PreparedSeries {
    std::string token;
    std::vector<double> values;
    int d_applied = 0;
    Duration bucket_width{std::chrono::hours{1}};
    Instant origin{};

    std::size_t size() const { return values.size(); }
};

inline PreparedSeries prepare(std::span<const std::int64_t> counts, std::string token = {},
                              Instant origin = {}, Duration bucket_width = std::chrono::hours{1}) {
    if (counts.size() < kMinSeriesLength)
        throw InsufficientData("series has " + std::to_string(counts.size()) + " buckets, need " +
                               std::to_string(kMinSeriesLength));
    PreparedSeries out{std::move(token), {}, 0, bucket_width, origin};
    out.values.reserve(counts.size());
    for (auto c : counts) {
        if (c < 0) throw std::invalid_argument("negative count");
        out.values.push_back(std::log1p(static_cast<double>(c)));
    }
    return out;
}

inline PreparedSeries prepare(const FrequencySeries& series) {
    return prepare(series.counts, series.token.surface, series.origin, series.bucket_width);
}

// Lag-1 difference applied d times.
inline std::vector<double> difference(std::span<const double> values, int d) {
    if (d < 0) throw std::invalid_argument("differencing order must be >= 0");
    if (values.size() <= static_cast<std::size_t>(d))
        throw InsufficientData("series too short to difference " + std::to_string(d) + " times");
    std::vector<double> out(values.begin(), values.end());
    for (int k = 0; k < d; ++k) {
        for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i] = out[i + 1] - out[i];
        out.pop_back();
    }
    return out;
}

struct ArimaSpec {
    int p = 0;
    int d = 0;
    int q = 0;

    int order_sum() const { return p + d + q; }
    friend bool operator==(const ArimaSpec&, const ArimaSpec&) = default;
};

inline std::vector<ArimaSpec> arima_grid(int max_p = 3, int max_d = 2, int max_q = 3) {
    std::vector<ArimaSpec> grid;
    for (int p = 0; p <= max_p; ++p)
        for (int d = 0; d <= max_d; ++d)
            for (int q = 0; q <= max_q; ++q) grid.push_back({p, d, q});
    return grid;
}

struct ArimaFit {
    ArimaSpec spec;
    std::vector<double> ar;
    std::vector<double> ma;
    double intercept = 0.0;
    double residual_variance = 0.0;
    double validation_mse = std::numeric_limits<double>::quiet_NaN();
};

namespace arima_detail {

// True when every root of 1 - c1 z - ... - ck z^k lies outside the unit
// circle. Uses the step-down recursion: the polynomial is stable iff every
// reflection coefficient has magnitude below one.
inline bool roots_outside_unit_circle(std::span<const double> c) {
    std::vector<double> a(c.begin(), c.end());
    for (std::size_t k = a.size(); k >= 1; --k) {
        const double kappa = a[k - 1];
        if (!std::isfinite(kappa) || std::abs(kappa) >= 1.0 - 1e-7) return false;
        const double denom = 1.0 - kappa * kappa;
        std::vector<double> next(k - 1);
        for (std::size_t j = 1; j < k; ++j) next[j - 1] = (a[j - 1] + kappa * a[k - j - 1]) / denom;
        a = std::move(next);
    }
    return true;
}

inline bool stationary(std::span<const double> ar) { return roots_outside_unit_circle(ar); }

inline bool invertible(std::span<const double> ma) {
    std::vector<double> neg(ma.begin(), ma.end());
    for (auto& v : neg) v = -v;
    return roots_outside_unit_circle(neg);
}

// Conditional residuals: e_t = 0 for t < p, otherwise
// e_t = w_t - c - sum phi_i w_{t-i} - sum theta_j e_{t-j}.
inline std::vector<double> css_residuals(std::span<const double> w, double c, std::span<const double> ar,
                                         std::span<const double> ma) {
    const std::size_t p = ar.size(), q = ma.size();
    std::vector<double> e(w.size(), 0.0);
    for (std::size_t t = p; t < w.size(); ++t) {
        double pred = c;
        for (std::size_t i = 1; i <= p; ++i) pred += ar[i - 1] * w[t - i];
        for (std::size_t j = 1; j <= q && j <= t; ++j) pred += ma[j - 1] * e[t - j];
        e[t] = w[t] - pred;
    }
    return e;
}

inline double css(std::span<const double> w, double c, std::span<const double> ar, std::span<const double> ma) {
    auto e = css_residuals(w, c, ar, ma);
    double s = 0.0;
    for (std::size_t t = ar.size(); t < e.size(); ++t) s += e[t] * e[t];
    return s;
}

// Minimum-norm least squares with an intercept column prepended.
inline Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    return X.completeOrthogonalDecomposition().solve(y);
}

// Least-squares AR(p) with intercept on rows t >= start; the optional `extra`
// regressors enter as additional lagged columns.
inline Eigen::VectorXd regress_lags(std::span<const double> w, std::size_t p, std::span<const double> extra,
                                    std::size_t q, std::size_t start) {
    const auto rows = static_cast<Eigen::Index>(w.size() - start);
    Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(1 + p + q));
    Eigen::VectorXd y(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        std::size_t t = start + static_cast<std::size_t>(r);
        X(r, 0) = 1.0;
        for (std::size_t i = 1; i <= p; ++i) X(r, static_cast<Eigen::Index>(i)) = w[t - i];
        for (std::size_t j = 1; j <= q; ++j) X(r, static_cast<Eigen::Index>(p + j)) = extra[t - j];
        y[r] = w[t];
    }
    return ols(X, y);
}

// Nelder-Mead simplex minimizer.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, int max_evals = 4000, double tol = 1e-12) {
    const std::size_t n = x0.size();
    if (n == 0) return x0;
    std::vector<std::vector<double>> pts(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += std::abs(x0[i]) > 1e-3 ? 0.1 * x0[i] : 0.05;
    std::vector<double> fx(n + 1);
    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    for (std::size_t i = 0; i <= n; ++i) fx[i] = eval(pts[i]);

    std::vector<std::size_t> idx(n + 1);
    while (evals < max_evals) {
        for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
        const std::size_t best = idx.front(), worst = idx.back(), second = idx[n - 1];
        if (std::isfinite(fx[worst]) && fx[worst] - fx[best] <= tol * (std::abs(fx[best]) + 1e-30)) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) centroid[i] += pts[idx[k]][i] / static_cast<double>(n);
        auto along = [&](double t) {
            std::vector<double> x(n);
            for (std::size_t i = 0; i < n; ++i) x[i] = centroid[i] + t * (pts[worst][i] - centroid[i]);
            return x;
        };
        auto xr = along(-1.0);
        double fr = eval(xr);
        if (fr < fx[best]) {
            auto xe = along(-2.0);
            double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fx[worst] = fe;
            } else {
                pts[worst] = xr;
                fx[worst] = fr;
            }
        } else if (fr < fx[second]) {
            pts[worst] = xr;
            fx[worst] = fr;
        } else {
            bool outside = fr < fx[worst];
            auto xc = along(outside ? -0.5 : 0.5);
            double fc = eval(xc);
            if (fc < (outside ? fr : fx[worst])) {
                pts[worst] = xc;
                fx[worst] = fc;
            } else {
                for (std::size_t k = 1; k <= n; ++k) {
                    auto& x = pts[idx[k]];
                    for (std::size_t i = 0; i < n; ++i) x[i] = pts[best][i] + 0.5 * (x[i] - pts[best][i]);
                    fx[idx[k]] = eval(x);
                }
            }
        }
    }
    std::size_t arg = static_cast<std::size_t>(std::min_element(fx.begin(), fx.end()) - fx.begin());
    return pts[arg];
}

// Shrinks coefficients toward zero until the polynomial condition holds.
inline void shrink_until(std::vector<double>& coeffs, bool (*ok)(std::span<const double>)) {
    for (int k = 0; k < 60 && !ok(coeffs); ++k)
        for (auto& c : coeffs) c *= 0.9;
    if (!ok(coeffs)) std::fill(coeffs.begin(), coeffs.end(), 0.0);
}

}  // namespace arima_detail

// Fits ARMA(p, q) with intercept to the d-times differenced `train` by
// conditional sum of squares. Pure AR specs are solved exactly by least
// squares; specs with an MA part start from a Hannan-Rissanen estimate and are
// refined by Nelder-Mead under stationarity and invertibility constraints.
// Throws InsufficientData when the differenced segment is shorter than
// p + q + 2, or when a pure AR fit lands on a unit root.
inline ArimaFit fit_arima(std::span<const double> train, ArimaSpec spec) {
    using namespace arima_detail;
    if (spec.p < 0 || spec.d < 0 || spec.q < 0) throw std::invalid_argument("negative ARIMA order");
    if (train.size() <= static_cast<std::size_t>(spec.d))
        throw InsufficientData("training segment shorter than differencing order");
    const auto w = difference(train, spec.d);
    const std::size_t p = static_cast<std::size_t>(spec.p), q = static_cast<std::size_t>(spec.q);
    if (w.size() < p + q + 2) throw InsufficientData("training segment too short for spec");

    ArimaFit fit;
    fit.spec = spec;
    if (q == 0) {
        auto beta = regress_lags(w, p, {}, 0, p);
        fit.intercept = beta[0];
        for (std::size_t i = 0; i < p; ++i) fit.ar.push_back(beta[static_cast<Eigen::Index>(1 + i)]);
        if (!beta.allFinite()) throw InsufficientData("least squares failed");
        if (!stationary(fit.ar)) throw InsufficientData("AR fit is not stationary");
    } else {
        // Hannan-Rissanen: innovations from a long AR, then a joint regression.
        std::vector<double> innovations(w.size(), 0.0);
        std::size_t m = std::max(p, q) + 3;
        m = std::min(m, (w.size() - 1) / 3);
        if (m >= 1 && w.size() > 2 * m + 1) {
            auto longar = regress_lags(w, m, {}, 0, m);
            std::vector<double> phi(m);
            for (std::size_t i = 0; i < m; ++i) phi[i] = longar[static_cast<Eigen::Index>(1 + i)];
            innovations = css_residuals(w, longar[0], phi, {});
        }
        std::size_t start = std::max(p, m + q);
        if (w.size() < start + p + q + 2) start = std::max(p, q);
        std::vector<double> x0(1 + p + q, 0.0);
        if (w.size() >= start + p + q + 2) {
            auto beta = regress_lags(w, p, innovations, q, start);
            if (beta.allFinite())
                for (Eigen::Index i = 0; i < beta.size(); ++i) x0[static_cast<std::size_t>(i)] = beta[i];
        }
        std::vector<double> ar(x0.begin() + 1, x0.begin() + 1 + static_cast<std::ptrdiff_t>(p));
        std::vector<double> ma(x0.begin() + 1 + static_cast<std::ptrdiff_t>(p), x0.end());
        shrink_until(ar, stationary);
        shrink_until(ma, invertible);
        std::copy(ar.begin(), ar.end(), x0.begin() + 1);
        std::copy(ma.begin(), ma.end(), x0.begin() + 1 + static_cast<std::ptrdiff_t>(p));

        auto objective = [&](const std::vector<double>& x) {
            std::span<const double> a(x.data() + 1, p), b(x.data() + 1 + p, q);
            if (!stationary(a) || !invertible(b)) return std::numeric_limits<double>::infinity();
            return css(w, x[0], a, b);
        };
        auto best = nelder_mead(objective, x0, static_cast<int>(400 * (1 + p + q)));
        if (!std::isfinite(objective(best))) throw InsufficientData("CSS optimization failed");
        fit.intercept = best[0];
        fit.ar.assign(best.begin() + 1, best.begin() + 1 + static_cast<std::ptrdiff_t>(p));
        fit.ma.assign(best.begin() + 1 + static_cast<std::ptrdiff_t>(p), best.end());
    }
    double sse = css(w, fit.intercept, fit.ar, fit.ma);
    fit.residual_variance = sse / static_cast<double>(w.size() - p);
    if (!std::isfinite(fit.residual_variance)) throw InsufficientData("non-finite residual variance");
    return fit;
}

// Mean squared one-step-ahead error of `fit` over values[holdout_start..).
// For one-step predictions the level error equals the innovation of the
// differenced series, so this runs the residual recursion through the whole
// series and averages the tail.
inline double one_step_mse(const ArimaFit& fit, std::span<const double> values, std::size_t holdout_start) {
    const auto w = difference(values, fit.spec.d);
    const auto e = arima_detail::css_residuals(w, fit.intercept, fit.ar, fit.ma);
    const std::size_t d = static_cast<std::size_t>(fit.spec.d);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t t = std::max(holdout_start, d); t < values.size(); ++t) {
        s += e[t - d] * e[t - d];
        ++n;
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

// Returns true when `a` should be preferred over `b`: lower validation MSE,
// then smaller p+d+q, smaller d, smaller p. MSEs within 1e-12 relative (or
// 1e-20 absolute) count as tied.
inline bool preferred(const ArimaFit& a, const ArimaFit& b) {
    double tol = 1e-12 * std::max(std::abs(a.validation_mse), std::abs(b.validation_mse)) + 1e-20;
    if (std::abs(a.validation_mse - b.validation_mse) > tol) return a.validation_mse < b.validation_mse;
    if (a.spec.order_sum() != b.spec.order_sum()) return a.spec.order_sum() < b.spec.order_sum();
    if (a.spec.d != b.spec.d) return a.spec.d < b.spec.d;
    if (a.spec.p != b.spec.p) return a.spec.p < b.spec.p;
    return a.spec.q < b.spec.q;
}

// Grid search: each spec is fit on the first split_fraction of the series and
// scored by one-step-ahead MSE on the rest. Infeasible or failing specs are
// skipped.
inline ArimaFit fit_grid(const PreparedSeries& series, const std::vector<ArimaSpec>& grid,
                         double split_fraction = 0.8) {
    if (grid.empty()) throw std::invalid_argument("empty ARIMA grid");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw std::invalid_argument("split fraction must be in (0,1)");
    const std::size_t n = series.size();
    const auto train_len = static_cast<std::size_t>(std::floor(split_fraction * static_cast<double>(n)));
    if (train_len < 2 || train_len >= n) throw InsufficientData("series too short to split");
    std::span<const double> all(series.values);

    std::optional<ArimaFit> best;
    for (const auto& spec : grid) {
        ArimaFit fit;
        try {
            fit = fit_arima(all.first(train_len), spec);
        } catch (const InsufficientData&) {
            continue;
        }
        fit.validation_mse = one_step_mse(fit, all, train_len);
        if (!std::isfinite(fit.validation_mse)) continue;
        if (!best || preferred(fit, *best)) best = std::move(fit);
    }
    if (!best) throw InsufficientData("no feasible ARIMA spec for series of length " + std::to_string(n));
    return *best;
}

enum class Trend { rising, declining, flat };

inline std::string_view to_string(Trend t) {
    switch (t) {
        case Trend::rising: return "rising";
        case Trend::declining: return "declining";
        case Trend::flat: return "flat";
    }
    return "flat";
}

inline constexpr double kTrendDeadBand = 0.01;

struct Forecast {
    int horizon = 0;
    std::vector<double> points;
    std::vector<double> ci_lower;
    std::vector<double> ci_upper;
    double level = 0.95;
    Trend trend = Trend::flat;
    double slope = 0.0;
};

// Least-squares slope of ys against 0, 1, 2, ...
inline double ls_slope(std::span<const double> ys) {
    const std::size_t n = ys.size();
    if (n < 2) return 0.0;
    double mx = (static_cast<double>(n) - 1.0) / 2.0, my = 0.0;
    for (double y : ys) my += y;
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = static_cast<double>(i) - mx;
        sxy += dx * (ys[i] - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

// Variance of ys around their least-squares line.
inline double trend_residual_variance(std::span<const double> ys) {
    const std::size_t n = ys.size();
    if (n < 2) return 0.0;
    double slope = ls_slope(ys);
    double my = 0.0;
    for (double y : ys) my += y;
    my /= static_cast<double>(n);
    double mx = (static_cast<double>(n) - 1.0) / 2.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = ys[i] - (my + slope * (static_cast<double>(i) - mx));
        s += r * r;
    }
    return s / static_cast<double>(n);
}

inline Trend classify_trend(double slope, double dead_band = kTrendDeadBand) {
    if (slope > dead_band) return Trend::rising;
    if (slope < -dead_band) return Trend::declining;
    return Trend::flat;
}

// Iterated multi-step forecast on the log scale from the end of `series`.
// Interval half-width is z(level) * sigma * sqrt(sum_{j<h} psi_j^2), with psi
// the MA(inf) weights of the integrated model.
inline Forecast forecast(const ArimaFit& fit, const PreparedSeries& series, int horizon = 15, double level = 0.95) {
    if (horizon < 1 || horizon > 24) throw std::invalid_argument("horizon must be in [1, 24]");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
    const std::size_t d = static_cast<std::size_t>(fit.spec.d);
    const std::size_t p = fit.ar.size(), q = fit.ma.size();
    std::vector<double> y = series.values;
    std::vector<double> w = difference(y, fit.spec.d);
    std::vector<double> e = arima_detail::css_residuals(w, fit.intercept, fit.ar, fit.ma);

    // Integration weights: y_t = w_t + sum_k b_k y_{t-k}, b_k = -(-1)^k C(d,k).
    std::vector<double> integ(d + 1, 0.0);
    {
        std::vector<double> binom(d + 1, 1.0);
        for (std::size_t k = 1; k <= d; ++k) binom[k] = binom[k - 1] * static_cast<double>(d - k + 1) / static_cast<double>(k);
        for (std::size_t k = 1; k <= d; ++k) integ[k] = (k % 2 == 1 ? 1.0 : -1.0) * binom[k];
    }

    Forecast out;
    out.horizon = horizon;
    out.level = level;
    for (int h = 0; h < horizon; ++h) {
        const std::size_t t = w.size();
        double next = fit.intercept;
        for (std::size_t i = 1; i <= p; ++i) next += fit.ar[i - 1] * w[t - i];
        for (std::size_t j = 1; j <= q; ++j)
            if (t >= j) next += fit.ma[j - 1] * e[t - j];
        w.push_back(next);
        e.push_back(0.0);
        double level_value = next;
        const std::size_t ty = y.size();
        for (std::size_t k = 1; k <= d; ++k) level_value += integ[k] * y[ty - k];
        y.push_back(level_value);
        out.points.push_back(level_value);
    }

    // psi weights of phi(L)(1-L)^d y = theta(L) e.
    std::vector<double> full_ar(p + d, 0.0);  // y_t = sum a_k y_{t-k} + ...
    {
        std::vector<double> poly(p + 1, 0.0);  // 1 - phi_1 L - ...
        poly[0] = 1.0;
        for (std::size_t i = 1; i <= p; ++i) poly[i] = -fit.ar[i - 1];
        for (std::size_t k = 0; k < d; ++k) {
            std::vector<double> next(poly.size() + 1, 0.0);
            for (std::size_t i = 0; i < poly.size(); ++i) {
                next[i] += poly[i];
                next[i + 1] -= poly[i];
            }
            poly = std::move(next);
        }
        for (std::size_t k = 1; k < poly.size(); ++k) full_ar[k - 1] = -poly[k];
    }
    std::vector<double> psi(static_cast<std::size_t>(horizon), 0.0);
    psi[0] = 1.0;
    for (std::size_t j = 1; j < psi.size(); ++j) {
        double v = j <= q ? fit.ma[j - 1] : 0.0;
        for (std::size_t k = 1; k <= j && k <= full_ar.size(); ++k) v += full_ar[k - 1] * psi[j - k];
        psi[j] = v;
    }
    const double z = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
    const double sigma2 = std::max(fit.residual_variance, 0.0);
    double acc = 0.0;
    for (int h = 0; h < horizon; ++h) {
        acc += psi[static_cast<std::size_t>(h)] * psi[static_cast<std::size_t>(h)];
        double half = z * std::sqrt(sigma2 * acc);
        out.ci_lower.push_back(out.points[static_cast<std::size_t>(h)] - half);
        out.ci_upper.push_back(out.points[static_cast<std::size_t>(h)] + half);
    }
    out.slope = ls_slope(out.points);
    out.trend = classify_trend(out.slope);
    return out;
}

// ---------------------------------------------------------------------------

struct ForecastConfig {
    int max_p = 3;
    int max_d = 2;
    int max_q = 3;
    double split_fraction = 0.8;
    int horizon = 15;
    double level = 0.95;
};

struct KeywordForecast {
    PreparedSeries series;
    ArimaFit fit;
    Forecast forecast;
};

// prepare -> fit_grid -> forecast; nullopt when the series cannot support a
// forecast (too short, or no feasible spec).
inline std::optional<KeywordForecast> forecast_keyword(const FrequencySeries& freq, const ForecastConfig& cfg = {}) {
    try {
        auto prepared = prepare(freq);
        auto fit = fit_grid(prepared, arima_grid(cfg.max_p, cfg.max_d, cfg.max_q), cfg.split_fraction);
        auto fc = forecast(fit, prepared, cfg.horizon, cfg.level);
        return KeywordForecast{std::move(prepared), std::move(fit), std::move(fc)};
    } catch (const InsufficientData&) {
        return std::nullopt;
    }
}

// Forecast export record consumed by the HTTP API and the UI.
inline nlohmann::json forecast_record(const std::string& keyword, Instant origin, Duration bucket_width,
                                      const std::vector<double>& history, const ArimaFit* fit, const Forecast* fc) {
    nlohmann::json j = {{"keyword", keyword},
                        {"origin", format_iso8601(origin)},
                        {"bucket_width", bucket_width.count()},
                        {"history", history}};
    if (fit == nullptr || fc == nullptr) {
        j["unforecast"] = true;
        return j;
    }
    j["unforecast"] = false;
    j["points"] = fc->points;
    j["ci_lower"] = fc->ci_lower;
    j["ci_upper"] = fc->ci_upper;
    j["level"] = fc->level;
    j["trend"] = std::string(to_string(fc->trend));
    j["slope"] = fc->slope;
    j["validation_mse"] = fit->validation_mse;
    j["spec"] = {{"p", fit->spec.p}, {"d", fit->spec.d}, {"q", fit->spec.q}};
    j["ar"] = fit->ar;
    j["ma"] = fit->ma;
    j["intercept"] = fit->intercept;
    j["residual_variance"] = fit->residual_variance;
    return j;
}

}  // namespace kwtrack
