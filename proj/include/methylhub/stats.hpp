#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "methylhub/error.hpp"
#include "methylhub/rng.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 300;
    constexpr double kEpsilon = 3.0e-16;
    constexpr double kTiny = 1.0e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEpsilon) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// Two-sided p-value for a Student-t statistic with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
    if (!std::isfinite(t)) return std::numeric_limits<double>::min();
    if (t == 0.0) return 1.0;
    const double p = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

enum class Direction { HYPER, HYPO };

inline const char* direction_name(Direction d) {
    return d == Direction::HYPER ? "HYPER" : "HYPO";
}

struct WelchResult {
    double delta = 0.0;   // mean(x) - mean(y)
    double t_stat = 0.0;
    double df = 0.0;
    double p_value = 1.0;
    Direction direction() const { return delta > 0.0 ? Direction::HYPER : Direction::HYPO; }
};

struct DiffMethResult {
    std::string feature_id;
    double delta = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    double q_value = 1.0;
    Direction direction = Direction::HYPO;
};

struct CorrelationResult {
    double r = 0.0;
    Index n = 0;
    double ci_low = -1.0;
    double ci_high = 1.0;
    double p_value = 1.0;
    Index n_covariates = 0;
};

// Welch's unequal-variance t test with Welch-Satterthwaite degrees of freedom.
inline WelchResult welch_test(const Vector& x, const Vector& y) {
    const Index nx = x.size();
    const Index ny = y.size();
    if (nx < 2 || ny < 2)
        throw Error(ErrorCode::TOO_FEW_SAMPLES, "welch_test needs at least 2 values per group");
    const double mx = x.mean();
    const double my = y.mean();
    const double vx = (x.array() - mx).square().sum() / static_cast<double>(nx - 1);
    const double vy = (y.array() - my).square().sum() / static_cast<double>(ny - 1);

    WelchResult res;
    res.delta = mx - my;
    const double se2 = vx / static_cast<double>(nx) + vy / static_cast<double>(ny);
    if (se2 == 0.0) {
        if (res.delta != 0.0)
            throw Error(ErrorCode::DEGENERATE_VECTOR,
                        "both groups constant with different means");
        res.t_stat = 0.0;
        res.df = static_cast<double>(nx + ny - 2);
        res.p_value = 1.0;
        return res;
    }
    res.t_stat = res.delta / std::sqrt(se2);
    const double ax = vx / static_cast<double>(nx);
    const double ay = vy / static_cast<double>(ny);
    res.df = se2 * se2 /
             (ax * ax / static_cast<double>(nx - 1) + ay * ay / static_cast<double>(ny - 1));
    res.p_value = student_t_two_sided_p(res.t_stat, res.df);
    return res;
}

// Two-sided permutation p-value for the group mean difference: label
// shuffles with a fixed seed. Meant for small-n verification of the
// parametric Welch p.
inline double permutation_test(const Vector& x, const Vector& y, int n_permutations,
                               std::uint64_t seed) {
    if (x.size() < 2 || y.size() < 2)
        throw Error(ErrorCode::TOO_FEW_SAMPLES, "permutation test needs 2 values per group");
    if (n_permutations < 1)
        throw Error(ErrorCode::CONFIG_INVALID, "need at least one permutation");
    const Index nx = x.size();
    Vector pooled(nx + y.size());
    pooled << x, y;
    const auto mean_diff = [&](const Vector& v) {
        return v.head(nx).mean() - v.tail(v.size() - nx).mean();
    };
    const double observed = std::fabs(mean_diff(pooled));
    Rng rng(seed);
    std::vector<double> shuffled(pooled.data(), pooled.data() + pooled.size());
    int at_least_as_extreme = 0;
    for (int p = 0; p < n_permutations; ++p) {
        rng.shuffle(shuffled);
        const Vector v = Eigen::Map<const Vector>(shuffled.data(),
                                                  static_cast<Index>(shuffled.size()));
        if (std::fabs(mean_diff(v)) >= observed - 1e-12) ++at_least_as_extreme;
    }
    return (at_least_as_extreme + 1.0) / (n_permutations + 1.0);
}

// Benjamini-Hochberg step-up adjustment; preserves input order.
inline std::vector<double> bh_fdr(const std::vector<double>& p_values) {
    const std::size_t m = p_values.size();
    for (double p : p_values)
        if (!(p > 0.0 && p <= 1.0))
            throw Error(ErrorCode::VALUE_OUT_OF_RANGE, "p-values must lie in (0, 1]");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::vector<double> q(m, 0.0);
    double running = 1.0;
    for (std::size_t rank = m; rank >= 1; --rank) {
        const std::size_t i = order[rank - 1];
        running = std::min(running, p_values[i] * static_cast<double>(m) /
                                        static_cast<double>(rank));
        q[i] = running;
    }
    return q;
}

namespace detail {

inline CorrelationResult correlation_from_r(double r, Index n, Index n_covariates) {
    CorrelationResult res;
    res.n = n;
    res.n_covariates = n_covariates;
    res.r = std::clamp(r, -1.0, 1.0);

    const double df = static_cast<double>(n - n_covariates - 2);
    const double denom = 1.0 - res.r * res.r;
    if (denom <= 0.0) {
        res.p_value = std::numeric_limits<double>::min();
    } else {
        const double t = res.r * std::sqrt(df / denom);
        res.p_value = student_t_two_sided_p(t, df);
    }

    const double ci_n = static_cast<double>(n - n_covariates - 3);
    if (std::fabs(res.r) >= 1.0 - 1e-15 || ci_n <= 0.0) {
        res.ci_low = res.ci_high = res.r;
        return res;
    }
    const double z = std::atanh(res.r);
    const double half_width = 1.96 / std::sqrt(ci_n);
    res.ci_low = std::tanh(z - half_width);
    res.ci_high = std::tanh(z + half_width);
    return res;
}

}  // namespace detail

inline CorrelationResult pearson(const Vector& x, const Vector& y) {
    if (x.size() != y.size())
        throw Error(ErrorCode::DIMENSION_MISMATCH, "pearson vectors differ in length");
    const Index n = x.size();
    if (n < 4) throw Error(ErrorCode::TOO_FEW_SAMPLES, "pearson needs n >= 4");
    const Vector xc = x.array() - x.mean();
    const Vector yc = y.array() - y.mean();
    const double sx = xc.squaredNorm();
    const double sy = yc.squaredNorm();
    if (sx <= 0.0 || sy <= 0.0)
        throw Error(ErrorCode::DEGENERATE_VECTOR, "pearson input has zero variance");
    return detail::correlation_from_r(xc.dot(yc) / std::sqrt(sx * sy), n, 0);
}

// Partial correlation of x and y given covariates Z (n x k): the Pearson
// correlation of their least-squares residuals against [1, Z], with degrees
// of freedom reduced by k.
inline CorrelationResult partial_correlation(const Vector& x, const Vector& y, const Matrix& z) {
    const Index n = x.size();
    if (y.size() != n || (z.size() > 0 && z.rows() != n))
        throw Error(ErrorCode::DIMENSION_MISMATCH, "partial_correlation inputs differ in length");
    const Index k = z.size() > 0 ? z.cols() : 0;
    if (k == 0) return pearson(x, y);
    if (n <= k + 3)
        throw Error(ErrorCode::TOO_FEW_SAMPLES, "partial_correlation needs n > covariates + 3");

    Matrix design(n, k + 1);
    design.col(0).setOnes();
    design.rightCols(k) = z;
    Eigen::ColPivHouseholderQR<Matrix> rank_check(design);
    if (rank_check.rank() < design.cols())
        throw Error(ErrorCode::RANK_DEFICIENT_DESIGN,
                    "covariate design is rank deficient");

    Eigen::HouseholderQR<Matrix> qr(design);
    const Matrix thin_q = qr.householderQ() * Matrix::Identity(n, design.cols());
    const Vector rx = x - thin_q * (thin_q.transpose() * x);
    const Vector ry = y - thin_q * (thin_q.transpose() * y);

    // A residual that vanished entirely lies in the covariate span; its
    // partial correlation is zero by convention.
    const double sx = rx.squaredNorm();
    const double sy = ry.squaredNorm();
    const double tol_x = 1e-20 * (x.array() - x.mean()).square().sum();
    const double tol_y = 1e-20 * (y.array() - y.mean()).square().sum();
    if (sx <= tol_x || sy <= tol_y) return detail::correlation_from_r(0.0, n, k);
    return detail::correlation_from_r(rx.dot(ry) / std::sqrt(sx * sy), n, k);
}

// Per-probe case-control Welch tests with BH correction across all probes.
// Rows come back sorted by ascending p-value, ties broken by feature id.
inline std::vector<DiffMethResult> diff_meth_all(const MValueMatrix& m,
                                                 const SampleTable& samples) {
    std::vector<Index> case_cols, control_cols;
    for (Index j = 0; j < m.n_samples(); ++j) {
        const Sample* s = samples.find(m.sample_ids[static_cast<std::size_t>(j)]);
        if (s == nullptr)
            throw Error(ErrorCode::ID_MISMATCH,
                        "sample missing from sample table: " +
                            m.sample_ids[static_cast<std::size_t>(j)]);
        (s->label == Phenotype::CASE ? case_cols : control_cols).push_back(j);
    }
    if (case_cols.size() < 2 || control_cols.size() < 2)
        throw Error(ErrorCode::TOO_FEW_SAMPLES, "need at least 2 samples per group");

    std::vector<DiffMethResult> results;
    results.reserve(static_cast<std::size_t>(m.n_probes()));
    Vector x(static_cast<Index>(case_cols.size()));
    Vector y(static_cast<Index>(control_cols.size()));
    std::vector<double> p_values;
    p_values.reserve(static_cast<std::size_t>(m.n_probes()));
    for (Index i = 0; i < m.n_probes(); ++i) {
        for (std::size_t a = 0; a < case_cols.size(); ++a)
            x(static_cast<Index>(a)) = m.values(i, case_cols[a]);
        for (std::size_t a = 0; a < control_cols.size(); ++a)
            y(static_cast<Index>(a)) = m.values(i, control_cols[a]);
        const WelchResult w = welch_test(x, y);
        DiffMethResult row;
        row.feature_id = m.probe_ids[static_cast<std::size_t>(i)];
        row.delta = w.delta;
        row.t_stat = w.t_stat;
        row.p_value = w.p_value;
        row.direction = w.direction();
        results.push_back(std::move(row));
        p_values.push_back(w.p_value);
    }
    const std::vector<double> q_values = bh_fdr(p_values);
    for (std::size_t i = 0; i < results.size(); ++i) results[i].q_value = q_values[i];
    std::stable_sort(results.begin(), results.end(),
                     [](const DiffMethResult& a, const DiffMethResult& b) {
                         if (a.p_value != b.p_value) return a.p_value < b.p_value;
                         return a.feature_id < b.feature_id;
                     });
    return results;
}

}  // namespace methylhub
