#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "methylhub/error.hpp"
#include "methylhub/rng.hpp"
#include "methylhub/stats.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

struct TrainHyper {
    std::vector<int> hidden_sizes;
    double learning_rate = 1e-3;
};

struct TrainConfig {
    std::uint64_t seed = 0;
    std::vector<std::vector<int>> hidden_sizes_grid = {{32}, {64, 16}};
    std::vector<double> learning_rate_grid = {1e-3, 1e-4};
    int epochs = 200;
    int batch_size = 32;
    double l2_penalty = 1e-4;
    double momentum = 0.9;
    Index feature_prefilter_k = 5000;
    int outer_folds = 5;
    int inner_folds = 3;

    void validate() const {
        if (hidden_sizes_grid.empty() || learning_rate_grid.empty())
            throw Error(ErrorCode::CONFIG_INVALID, "hyperparameter grids must be non-empty");
        if (outer_folds < 2 || inner_folds < 2)
            throw Error(ErrorCode::CONFIG_INVALID, "fold counts must be >= 2");
        if (epochs < 1 || batch_size < 1)
            throw Error(ErrorCode::CONFIG_INVALID, "epochs and batch_size must be >= 1");
        if (feature_prefilter_k < 1)
            throw Error(ErrorCode::CONFIG_INVALID, "feature_prefilter_k must be >= 1");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["hidden_sizes_grid"] = hidden_sizes_grid;
        j["learning_rate_grid"] = learning_rate_grid;
        j["epochs"] = epochs;
        j["batch_size"] = batch_size;
        j["l2_penalty"] = l2_penalty;
        j["momentum"] = momentum;
        j["feature_prefilter_k"] = feature_prefilter_k;
        j["outer_folds"] = outer_folds;
        j["inner_folds"] = inner_folds;
        return j;
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        if (j.contains("seed")) c.seed = j.at("seed");
        if (j.contains("hidden_sizes_grid"))
            c.hidden_sizes_grid = j.at("hidden_sizes_grid").get<std::vector<std::vector<int>>>();
        if (j.contains("learning_rate_grid"))
            c.learning_rate_grid = j.at("learning_rate_grid").get<std::vector<double>>();
        if (j.contains("epochs")) c.epochs = j.at("epochs");
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size");
        if (j.contains("l2_penalty")) c.l2_penalty = j.at("l2_penalty");
        if (j.contains("momentum")) c.momentum = j.at("momentum");
        if (j.contains("feature_prefilter_k")) c.feature_prefilter_k = j.at("feature_prefilter_k");
        if (j.contains("outer_folds")) c.outer_folds = j.at("outer_folds");
        if (j.contains("inner_folds")) c.inner_folds = j.at("inner_folds");
        c.validate();
        return c;
    }
};

// Feed-forward net: rectifier hidden layers, logistic output. Weights are
// (out x in) per layer; layer_sizes = [d_in, h..., 1].
struct MlpModel {
    std::vector<int> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    std::vector<Index> feature_subset;
    bool trained = false;

    Index input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
    std::size_t n_layers() const { return weights.size(); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["layer_sizes"] = layer_sizes;
        nlohmann::json ws = nlohmann::json::array();
        nlohmann::json bs = nlohmann::json::array();
        for (std::size_t l = 0; l < weights.size(); ++l) {
            std::vector<double> flat(static_cast<std::size_t>(weights[l].size()));
            for (Index r = 0; r < weights[l].rows(); ++r)
                for (Index c = 0; c < weights[l].cols(); ++c)
                    flat[static_cast<std::size_t>(r * weights[l].cols() + c)] = weights[l](r, c);
            ws.push_back(flat);
            bs.push_back(std::vector<double>(biases[l].data(), biases[l].data() + biases[l].size()));
        }
        j["weights"] = ws;
        j["biases"] = bs;
        j["feature_subset"] = feature_subset;
        return j;
    }

    static MlpModel from_json(const nlohmann::json& j) {
        MlpModel m;
        m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        const auto& ws = j.at("weights");
        const auto& bs = j.at("biases");
        for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
            const Index out = m.layer_sizes[l + 1];
            const Index in = m.layer_sizes[l];
            const auto flat = ws.at(l).get<std::vector<double>>();
            Matrix w(out, in);
            for (Index r = 0; r < out; ++r)
                for (Index c = 0; c < in; ++c)
                    w(r, c) = flat[static_cast<std::size_t>(r * in + c)];
            m.weights.push_back(std::move(w));
            const auto bias = bs.at(l).get<std::vector<double>>();
            m.biases.push_back(Eigen::Map<const Vector>(bias.data(), static_cast<Index>(bias.size())));
        }
        m.feature_subset = j.at("feature_subset").get<std::vector<Index>>();
        m.trained = true;
        return m;
    }
};

inline MlpModel make_mlp(Index d_in, const std::vector<int>& hidden, std::uint64_t seed) {
    MlpModel m;
    m.layer_sizes.push_back(static_cast<int>(d_in));
    for (int h : hidden) m.layer_sizes.push_back(h);
    m.layer_sizes.push_back(1);
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        const Index in = m.layer_sizes[l];
        const Index out = m.layer_sizes[l + 1];
        Rng rng(derive_seed(seed, {17, static_cast<std::uint64_t>(l)}));
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        Matrix w(out, in);
        for (Index r = 0; r < out; ++r)
            for (Index c = 0; c < in; ++c) w(r, c) = scale * rng.normal();
        m.weights.push_back(std::move(w));
        m.biases.push_back(Vector::Zero(out));
    }
    m.feature_subset.resize(static_cast<std::size_t>(d_in));
    std::iota(m.feature_subset.begin(), m.feature_subset.end(), Index{0});
    return m;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Pre-logistic outputs for a batch (rows = samples).
inline Vector logit_forward_batch(const MlpModel& m, const Matrix& x) {
    if (x.cols() != m.input_dim())
        throw Error(ErrorCode::DIMENSION_MISMATCH,
                    "input has " + std::to_string(x.cols()) + " features, model expects " +
                        std::to_string(m.input_dim()));
    Matrix a = x;
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        Matrix z = a * m.weights[l].transpose();
        z.rowwise() += m.biases[l].transpose();
        if (l + 1 < m.n_layers()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a.col(0);
}

inline double logit_forward(const MlpModel& m, const Vector& x) {
    return logit_forward_batch(m, x.transpose())(0);
}

inline double forward(const MlpModel& m, const Vector& x) {
    return sigmoid(logit_forward(m, x));
}

inline Vector forward_batch(const MlpModel& m, const Matrix& x) {
    Vector z = logit_forward_batch(m, x);
    for (Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
    return z;
}

// Gradient of the pre-logistic output with respect to the input vector.
inline Vector input_gradient(const MlpModel& m, const Vector& x) {
    if (x.size() != m.input_dim())
        throw Error(ErrorCode::DIMENSION_MISMATCH, "input size mismatch");
    std::vector<Vector> pre(m.n_layers());
    Vector a = x;
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        pre[l] = m.weights[l] * a + m.biases[l];
        a = l + 1 < m.n_layers() ? pre[l].cwiseMax(0.0) : pre[l];
    }
    Vector grad = Vector::Ones(1);
    for (std::size_t l = m.n_layers(); l-- > 0;) {
        grad = m.weights[l].transpose() * grad;
        if (l > 0) grad = grad.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return grad;
}

struct LossGrad {
    double loss = 0.0;
    std::vector<Matrix> w_grad;
    std::vector<Vector> b_grad;
};

// Weighted mean binary cross-entropy plus l2 * ||W||^2, with its exact
// gradient. Labels are 0/1; weights need not be normalized.
inline LossGrad loss_and_gradient(const MlpModel& m, const Matrix& x, const std::vector<int>& y,
                                  const std::vector<double>& sample_weights, double l2) {
    const Index n = x.rows();
    if (static_cast<Index>(y.size()) != n || static_cast<Index>(sample_weights.size()) != n)
        throw Error(ErrorCode::DIMENSION_MISMATCH, "labels/weights do not match batch size");

    std::vector<Matrix> activations(m.n_layers() + 1);
    std::vector<Matrix> pre(m.n_layers());
    activations[0] = x;
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        pre[l] = activations[l] * m.weights[l].transpose();
        pre[l].rowwise() += m.biases[l].transpose();
        activations[l + 1] = l + 1 < m.n_layers() ? pre[l].cwiseMax(0.0) : pre[l];
    }
    const Vector logits = activations[m.n_layers()].col(0);

    double weight_sum = 0.0;
    for (double w : sample_weights) weight_sum += w;

    LossGrad out;
    Vector dlogit(n);
    for (Index i = 0; i < n; ++i) {
        const double z = logits(i);
        const double target = static_cast<double>(y[static_cast<std::size_t>(i)]);
        const double w = sample_weights[static_cast<std::size_t>(i)] / weight_sum;
        // softplus(z) - y*z, computed stably
        out.loss += w * (std::max(z, 0.0) - target * z + std::log1p(std::exp(-std::fabs(z))));
        dlogit(i) = w * (sigmoid(z) - target);
    }
    for (const Matrix& w : m.weights) out.loss += l2 * w.squaredNorm();

    out.w_grad.resize(m.n_layers());
    out.b_grad.resize(m.n_layers());
    Matrix delta = dlogit;
    for (std::size_t l = m.n_layers(); l-- > 0;) {
        out.w_grad[l] = delta.transpose() * activations[l] + 2.0 * l2 * m.weights[l];
        out.b_grad[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix upstream = delta * m.weights[l];
            delta = upstream.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return out;
}

struct TrainResult {
    MlpModel model;
    double first_epoch_loss = 0.0;
    double final_epoch_loss = 0.0;
};

// Inverse class-frequency weights so both classes carry equal total mass.
inline std::vector<double> class_balance_weights(const std::vector<int>& y) {
    double n_pos = 0.0, n_neg = 0.0;
    for (int v : y) (v != 0 ? n_pos : n_neg) += 1.0;
    if (n_pos == 0.0 || n_neg == 0.0)
        throw Error(ErrorCode::SINGLE_CLASS, "training data contains a single class");
    const double n = n_pos + n_neg;
    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        w[i] = y[i] != 0 ? n / (2.0 * n_pos) : n / (2.0 * n_neg);
    return w;
}

// Mini-batch gradient descent with momentum; deterministic given the seed.
inline TrainResult train(const Matrix& x, const std::vector<int>& y, const TrainHyper& hyper,
                         const TrainConfig& cfg, std::uint64_t seed) {
    const Index n = x.rows();
    if (static_cast<Index>(y.size()) != n)
        throw Error(ErrorCode::DIMENSION_MISMATCH, "labels do not match sample count");
    if (!x.allFinite())
        throw Error(ErrorCode::NONFINITE_INPUT, "training matrix contains non-finite values");
    const std::vector<double> weights = class_balance_weights(y);

    MlpModel model = make_mlp(x.cols(), hyper.hidden_sizes, derive_seed(seed, {1}));
    std::vector<Matrix> w_vel;
    std::vector<Vector> b_vel;
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        w_vel.push_back(Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
        b_vel.push_back(Vector::Zero(model.biases[l].size()));
    }

    Rng shuffle_rng(derive_seed(seed, {2}));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    const auto full_loss = [&]() {
        return loss_and_gradient(model, x, y, weights, cfg.l2_penalty).loss;
    };

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (Index start = 0; start < n; start += cfg.batch_size) {
            const Index size = std::min<Index>(cfg.batch_size, n - start);
            Matrix xb(size, x.cols());
            std::vector<int> yb(static_cast<std::size_t>(size));
            std::vector<double> wb(static_cast<std::size_t>(size));
            for (Index k = 0; k < size; ++k) {
                const Index src = order[static_cast<std::size_t>(start + k)];
                xb.row(k) = x.row(src);
                yb[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(src)];
                wb[static_cast<std::size_t>(k)] = weights[static_cast<std::size_t>(src)];
            }
            const LossGrad g = loss_and_gradient(model, xb, yb, wb, cfg.l2_penalty);
            for (std::size_t l = 0; l < model.n_layers(); ++l) {
                w_vel[l] = cfg.momentum * w_vel[l] - hyper.learning_rate * g.w_grad[l];
                b_vel[l] = cfg.momentum * b_vel[l] - hyper.learning_rate * g.b_grad[l];
                model.weights[l] += w_vel[l];
                model.biases[l] += b_vel[l];
            }
        }
        if (epoch == 0) result.first_epoch_loss = full_loss();
    }
    result.final_epoch_loss = full_loss();
    model.trained = true;
    result.model = std::move(model);
    return result;
}

// Mann-Whitney AUROC via midranks: the fraction of (case, control) pairs
// ranked correctly, ties counting one half.
inline double auroc(const Vector& scores, const std::vector<int>& labels) {
    const Index n = scores.size();
    if (static_cast<Index>(labels.size()) != n)
        throw Error(ErrorCode::DIMENSION_MISMATCH, "labels do not match score count");
    Index n_pos = 0, n_neg = 0;
    for (int v : labels) (v != 0 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw Error(ErrorCode::SINGLE_CLASS, "auroc needs both classes");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return scores(a) < scores(b); });
    double rank_sum_pos = 0.0;
    Index i = 0;
    while (i < n) {
        Index j = i + 1;
        while (j < n && scores(order[static_cast<std::size_t>(j)]) ==
                            scores(order[static_cast<std::size_t>(i)]))
            ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (Index k = i; k < j; ++k)
            if (labels[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] != 0)
                rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Stratified k-fold test index sets: each class is shuffled then dealt
// round-robin, so every fold holds both classes.
inline std::vector<std::vector<Index>> stratified_folds(const std::vector<int>& labels, int k,
                                                        std::uint64_t seed) {
    std::vector<Index> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] != 0 ? pos : neg).push_back(static_cast<Index>(i));
    if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k)
        throw Error(ErrorCode::SINGLE_CLASS,
                    "every fold needs both classes: smallest class has " +
                        std::to_string(std::min(pos.size(), neg.size())) + " samples for " +
                        std::to_string(k) + " folds");
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < pos.size(); ++i) folds[i % k].push_back(pos[i]);
    for (std::size_t i = 0; i < neg.size(); ++i) folds[i % k].push_back(neg[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

// Top-k features by Welch |t| computed on the given training rows only.
// Returned indices are sorted ascending.
inline std::vector<Index> prefilter_top_t(const Matrix& x, const std::vector<int>& labels,
                                          const std::vector<Index>& train_rows, Index k) {
    const Index d = x.cols();
    std::vector<double> abs_t(static_cast<std::size_t>(d), 0.0);
    std::vector<Index> pos, neg;
    for (Index r : train_rows)
        (labels[static_cast<std::size_t>(r)] != 0 ? pos : neg).push_back(r);
    for (Index c = 0; c < d; ++c) {
        double mx = 0.0, my = 0.0;
        for (Index r : pos) mx += x(r, c);
        for (Index r : neg) my += x(r, c);
        mx /= static_cast<double>(pos.size());
        my /= static_cast<double>(neg.size());
        double vx = 0.0, vy = 0.0;
        for (Index r : pos) vx += (x(r, c) - mx) * (x(r, c) - mx);
        for (Index r : neg) vy += (x(r, c) - my) * (x(r, c) - my);
        vx /= static_cast<double>(pos.size() - 1);
        vy /= static_cast<double>(neg.size() - 1);
        const double se2 = vx / static_cast<double>(pos.size()) + vy / static_cast<double>(neg.size());
        if (se2 > 0.0)
            abs_t[static_cast<std::size_t>(c)] = std::fabs(mx - my) / std::sqrt(se2);
        else
            abs_t[static_cast<std::size_t>(c)] = mx == my ? 0.0 : 1e300;
    }
    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return abs_t[static_cast<std::size_t>(a)] > abs_t[static_cast<std::size_t>(b)];
    });
    const Index k_eff = std::min(k, d);
    std::vector<Index> selected(order.begin(), order.begin() + k_eff);
    std::sort(selected.begin(), selected.end());
    return selected;
}

struct FoldResult {
    int fold_index = 0;
    double auroc_value = 0.0;
    TrainHyper chosen;
    MlpModel model;
    std::vector<std::string> test_sample_ids;
    std::vector<Index> test_indices;
    std::vector<Index> feature_subset;
    Vector test_scores;
};

struct CvResult {
    std::vector<FoldResult> folds;
    double mean_auroc = 0.0;
    double sd_auroc = 0.0;
    double pooled_auroc = 0.0;
};

namespace detail {

inline Matrix gather(const Matrix& x, const std::vector<Index>& rows,
                     const std::vector<Index>& cols) {
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (Index i = 0; i < out.rows(); ++i)
        for (Index j = 0; j < out.cols(); ++j)
            out(i, j) = x(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
    return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& labels,
                                      const std::vector<Index>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (Index r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
    return out;
}

}  // namespace detail

// Nested cross-validation: feature prefiltering and hyperparameter selection
// happen strictly inside each outer-train split; the outer-test samples touch
// nothing but the final evaluation.
inline CvResult nested_cv(const Matrix& x, const SampleTable& samples, const TrainConfig& cfg,
                          int n_threads = 1) {
    cfg.validate();
    const Index n = x.rows();
    if (static_cast<Index>(samples.rows.size()) != n)
        throw Error(ErrorCode::DIMENSION_MISMATCH, "sample table does not match matrix rows");
    if (!x.allFinite())
        throw Error(ErrorCode::NONFINITE_INPUT, "matrix contains non-finite values");
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = samples.rows[i].label == Phenotype::CASE ? 1 : 0;

    const auto outer = stratified_folds(labels, cfg.outer_folds, derive_seed(cfg.seed, {100}));
    const int n_folds = cfg.outer_folds;

    std::vector<std::optional<FoldResult>> slots(static_cast<std::size_t>(n_folds));
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;
    std::atomic<int> next_fold{0};

    const auto run_fold = [&](int fold) {
        const auto& test_idx = outer[static_cast<std::size_t>(fold)];
        std::vector<Index> train_idx;
        train_idx.reserve(static_cast<std::size_t>(n) - test_idx.size());
        {
            std::vector<bool> in_test(static_cast<std::size_t>(n), false);
            for (Index t : test_idx) in_test[static_cast<std::size_t>(t)] = true;
            for (Index i = 0; i < n; ++i)
                if (!in_test[static_cast<std::size_t>(i)]) train_idx.push_back(i);
        }

        const std::vector<Index> feat =
            prefilter_top_t(x, labels, train_idx, cfg.feature_prefilter_k);
        const std::vector<int> train_labels = detail::gather_labels(labels, train_idx);
        const auto inner = stratified_folds(train_labels, cfg.inner_folds,
                                            derive_seed(cfg.seed, {200, static_cast<std::uint64_t>(fold)}));

        TrainHyper best;
        double best_score = -1.0;
        int combo = 0;
        for (const auto& hidden : cfg.hidden_sizes_grid) {
            for (double lr : cfg.learning_rate_grid) {
                TrainHyper hyper{hidden, lr};
                double mean_inner = 0.0;
                for (int in_fold = 0; in_fold < cfg.inner_folds; ++in_fold) {
                    const auto& inner_test_local = inner[static_cast<std::size_t>(in_fold)];
                    std::vector<Index> inner_train, inner_test;
                    {
                        std::vector<bool> is_test(train_idx.size(), false);
                        for (Index t : inner_test_local) is_test[static_cast<std::size_t>(t)] = true;
                        for (std::size_t i = 0; i < train_idx.size(); ++i)
                            (is_test[i] ? inner_test : inner_train).push_back(train_idx[i]);
                    }
                    const auto trained = train(
                        detail::gather(x, inner_train, feat),
                        detail::gather_labels(labels, inner_train), hyper, cfg,
                        derive_seed(cfg.seed, {300, static_cast<std::uint64_t>(fold),
                                               static_cast<std::uint64_t>(combo),
                                               static_cast<std::uint64_t>(in_fold)}));
                    const Vector scores =
                        forward_batch(trained.model, detail::gather(x, inner_test, feat));
                    mean_inner += auroc(scores, detail::gather_labels(labels, inner_test));
                }
                mean_inner /= static_cast<double>(cfg.inner_folds);
                if (mean_inner > best_score) {
                    best_score = mean_inner;
                    best = hyper;
                }
                ++combo;
            }
        }

        auto final_trained = train(detail::gather(x, train_idx, feat),
                                   detail::gather_labels(labels, train_idx), best, cfg,
                                   derive_seed(cfg.seed, {400, static_cast<std::uint64_t>(fold)}));
        final_trained.model.feature_subset = feat;

        FoldResult result;
        result.fold_index = fold;
        result.chosen = best;
        result.feature_subset = feat;
        result.test_indices = test_idx;
        result.test_scores = forward_batch(final_trained.model, detail::gather(x, test_idx, feat));
        result.auroc_value = auroc(result.test_scores, detail::gather_labels(labels, test_idx));
        for (Index t : test_idx)
            result.test_sample_ids.push_back(samples.rows[static_cast<std::size_t>(t)].sample_id);
        result.model = std::move(final_trained.model);
        slots[static_cast<std::size_t>(fold)] = std::move(result);
    };

    const auto worker = [&]() {
        while (true) {
            const int fold = next_fold.fetch_add(1);
            if (fold >= n_folds) return;
            try {
                run_fold(fold);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int workers = std::max(1, std::min(n_threads, n_folds));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    CvResult cv;
    for (auto& slot : slots) cv.folds.push_back(std::move(*slot));

    double mean = 0.0;
    for (const auto& f : cv.folds) mean += f.auroc_value;
    mean /= static_cast<double>(n_folds);
    double ss = 0.0;
    for (const auto& f : cv.folds) ss += (f.auroc_value - mean) * (f.auroc_value - mean);
    cv.mean_auroc = mean;
    cv.sd_auroc = n_folds > 1 ? std::sqrt(ss / static_cast<double>(n_folds - 1)) : 0.0;

    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    for (const auto& f : cv.folds)
        for (Index i = 0; i < f.test_scores.size(); ++i) {
            pooled_scores.push_back(f.test_scores(i));
            pooled_labels.push_back(labels[static_cast<std::size_t>(
                f.test_indices[static_cast<std::size_t>(i)])]);
        }
    cv.pooled_auroc = auroc(
        Eigen::Map<const Vector>(pooled_scores.data(), static_cast<Index>(pooled_scores.size())),
        pooled_labels);
    return cv;
}

}  // namespace methylhub
