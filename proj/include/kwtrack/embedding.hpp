#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "tokenize.hpp"

namespace kwtrack {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense index <-> token surface. Indices are assigned by descending corpus
// count, then lexicographically.
class Vocabulary {
public:
    Vocabulary() = default;

    static Vocabulary from_counts(const std::map<std::string, std::int64_t>& counts,
                                  std::int64_t min_count) {
        std::vector<std::pair<std::string, std::int64_t>> kept;
        for (const auto& [tok, c] : counts)
            if (c >= min_count && c > 0) kept.emplace_back(tok, c);
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        Vocabulary v;
        v.min_count_ = min_count;
        for (auto& [tok, c] : kept) {
            v.index_.emplace(tok, v.tokens_.size());
            v.tokens_.push_back(tok);
            v.counts_.push_back(c);
        }
        return v;
    }

    std::size_t size() const { return tokens_.size(); }
    bool empty() const { return tokens_.empty(); }
    bool contains(const std::string& tok) const { return index_.count(tok) != 0; }

    std::optional<std::size_t> find(const std::string& tok) const {
        auto it = index_.find(tok);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t index_of(const std::string& tok) const {
        auto it = index_.find(tok);
        if (it == index_.end()) throw NotFound(tok);
        return it->second;
    }

    const std::string& token(std::size_t i) const { return tokens_.at(i); }
    std::int64_t count(std::size_t i) const { return counts_.at(i); }
    std::int64_t min_count() const { return min_count_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::vector<std::int64_t> counts_;
    std::unordered_map<std::string, std::size_t> index_;
    std::int64_t min_count_ = 1;
};

struct CooccurrenceEntry {
    std::uint32_t row;
    std::uint32_t col;
    double value;
};

// Sparse co-occurrence counts, entries sorted by (row, col); every stored
// value is positive.
class CooccurrenceMatrix {
public:
    CooccurrenceMatrix() = default;
    CooccurrenceMatrix(std::size_t dim, std::vector<CooccurrenceEntry> entries, int window, bool symmetric)
        : dim_(dim), entries_(std::move(entries)), window_(window), symmetric_(symmetric) {
        std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
    }

    std::size_t dim() const { return dim_; }
    std::size_t nonzeros() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    int window() const { return window_; }
    bool symmetric() const { return symmetric_; }
    const std::vector<CooccurrenceEntry>& entries() const { return entries_; }

    double at(std::size_t i, std::size_t j) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{i, j},
                                   [](const CooccurrenceEntry& e, const std::pair<std::size_t, std::size_t>& k) {
                                       return e.row != k.first ? e.row < k.first : e.col < k.second;
                                   });
        if (it == entries_.end() || it->row != i || it->col != j) return 0.0;
        return it->value;
    }

private:
    std::size_t dim_ = 0;
    std::vector<CooccurrenceEntry> entries_;
    int window_ = 10;
    bool symmetric_ = true;
};

struct CooccurrenceResult {
    Vocabulary vocabulary;
    CooccurrenceMatrix matrix;
};

// Symmetric distance-weighted counts: every pair of in-vocabulary tokens at
// offset k <= context_window within one document adds 1/k to both (i, j) and
// (j, i). Out-of-vocabulary tokens are removed before windowing.
//
// Counts are accumulated per (pair, offset) as integers and only summed at the
// end in a fixed order, so the result is bit-identical under any permutation
// of the documents.
inline CooccurrenceResult build_cooccurrence(const std::vector<std::vector<std::string>>& docs,
                                             std::int64_t vocab_min_count, int context_window) {
    if (docs.empty()) throw InsufficientData("co-occurrence requires a non-empty corpus");
    if (context_window < 1) throw std::invalid_argument("context window must be >= 1");

    std::map<std::string, std::int64_t> counts;
    for (const auto& d : docs)
        for (const auto& t : d) ++counts[t];
    Vocabulary vocab = Vocabulary::from_counts(counts, vocab_min_count);
    if (vocab.empty()) throw InsufficientData("vocabulary empty after min_count pruning; corpus too small");

    const std::uint64_t V = vocab.size();
    const std::uint64_t W = static_cast<std::uint64_t>(context_window);
    std::unordered_map<std::uint64_t, std::int64_t> hits;  // ((i*V + j) * W + (k-1)) -> count
    std::vector<std::uint32_t> ids;
    for (const auto& d : docs) {
        ids.clear();
        for (const auto& t : d)
            if (auto i = vocab.find(t)) ids.push_back(static_cast<std::uint32_t>(*i));
        for (std::size_t q = 0; q < ids.size(); ++q) {
            for (std::size_t k = 1; k <= W && k <= q; ++k) {
                std::uint64_t a = ids[q - k], b = ids[q];
                ++hits[(a * V + b) * W + (k - 1)];
                ++hits[(b * V + a) * W + (k - 1)];
            }
        }
    }

    std::vector<std::pair<std::uint64_t, std::int64_t>> sorted(hits.begin(), hits.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<CooccurrenceEntry> entries;
    for (std::size_t s = 0; s < sorted.size();) {
        std::uint64_t pair = sorted[s].first / W;
        double x = 0.0;
        for (; s < sorted.size() && sorted[s].first / W == pair; ++s) {
            auto k = sorted[s].first % W + 1;
            x += static_cast<double>(sorted[s].second) / static_cast<double>(k);
        }
        entries.push_back({static_cast<std::uint32_t>(pair / V), static_cast<std::uint32_t>(pair % V), x});
    }
    return {std::move(vocab), CooccurrenceMatrix(V, std::move(entries), context_window, true)};
}

inline std::vector<std::vector<std::string>> tokenized_documents(const CorpusWindow& window) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(window.size());
    for (const auto& d : window.documents) {
        std::vector<std::string> toks;
        for (auto& t : tokenize(d.text)) toks.push_back(std::move(t.surface));
        docs.push_back(std::move(toks));
    }
    return docs;
}

inline CooccurrenceResult build_cooccurrence(const CorpusWindow& window, std::int64_t vocab_min_count,
                                             int context_window) {
    if (window.empty()) throw InsufficientData("co-occurrence requires a non-empty window");
    return build_cooccurrence(tokenized_documents(window), vocab_min_count, context_window);
}

// ---------------------------------------------------------------------------
// GloVe

struct GloveParams {
    int dimension = 50;
    int epochs = 50;
    double x_max = 100.0;
    double alpha = 0.75;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
    int threads = 1;  // > 1 selects lock-free (Hogwild) updates; not reproducible
};

// Main and context vectors plus their biases, one row per vocabulary entry.
struct GloveWeights {
    RowMatrix main;
    RowMatrix context;
    Eigen::VectorXd bias;
    Eigen::VectorXd context_bias;

    static GloveWeights zeros(std::size_t V, int d) {
        return {RowMatrix::Zero(V, d), RowMatrix::Zero(V, d), Eigen::VectorXd::Zero(V),
                Eigen::VectorXd::Zero(V)};
    }
};

inline double glove_weight(double x, double x_max, double alpha) {
    return x < x_max ? std::pow(x / x_max, alpha) : 1.0;
}

// J = sum f(x_ij) (w_i . w~_j + b_i + b~_j - log x_ij)^2
inline double glove_objective(const GloveWeights& w, const CooccurrenceMatrix& cooc, double x_max,
                              double alpha) {
    double j = 0.0;
    for (const auto& e : cooc.entries()) {
        double diff = w.main.row(e.row).dot(w.context.row(e.col)) + w.bias[e.row] +
                      w.context_bias[e.col] - std::log(e.value);
        j += glove_weight(e.value, x_max, alpha) * diff * diff;
    }
    return j;
}

// Full analytic gradient of glove_objective.
inline GloveWeights glove_gradient(const GloveWeights& w, const CooccurrenceMatrix& cooc, double x_max,
                                   double alpha) {
    GloveWeights g = GloveWeights::zeros(w.main.rows(), static_cast<int>(w.main.cols()));
    for (const auto& e : cooc.entries()) {
        double diff = w.main.row(e.row).dot(w.context.row(e.col)) + w.bias[e.row] +
                      w.context_bias[e.col] - std::log(e.value);
        double c = 2.0 * glove_weight(e.value, x_max, alpha) * diff;
        g.main.row(e.row) += c * w.context.row(e.col);
        g.context.row(e.col) += c * w.main.row(e.row);
        g.bias[e.row] += c;
        g.context_bias[e.col] += c;
    }
    return g;
}

struct TrainingStep {
    int epoch;
    double loss;
};

class EmbeddingModel {
public:
    EmbeddingModel() = default;

    EmbeddingModel(Vocabulary vocab, GloveWeights weights, GloveParams params,
                   std::vector<TrainingStep> log)
        : vocab_(std::move(vocab)), weights_(std::move(weights)), params_(params), log_(std::move(log)) {
        vectors_ = weights_.main + weights_.context;
        normalize();
    }

    // Model from published vectors only (e.g. loaded from a text file).
    EmbeddingModel(Vocabulary vocab, RowMatrix vectors, GloveParams params, std::vector<TrainingStep> log)
        : vocab_(std::move(vocab)), vectors_(std::move(vectors)), params_(params), log_(std::move(log)) {
        weights_ = GloveWeights::zeros(vectors_.rows(), static_cast<int>(vectors_.cols()));
        weights_.main = vectors_;
        normalize();
    }

    const Vocabulary& vocabulary() const { return vocab_; }
    const RowMatrix& vectors() const { return vectors_; }
    const RowMatrix& unit_vectors() const { return unit_; }
    const GloveWeights& weights() const { return weights_; }
    const GloveParams& params() const { return params_; }
    const std::vector<TrainingStep>& training_log() const { return log_; }
    int dimension() const { return static_cast<int>(vectors_.cols()); }
    double final_loss() const { return log_.empty() ? 0.0 : log_.back().loss; }

    Eigen::VectorXd vector(const std::string& tok) const {
        return vectors_.row(vocab_.index_of(tok)).transpose();
    }

private:
    void normalize() {
        unit_ = vectors_;
        for (Eigen::Index i = 0; i < unit_.rows(); ++i) {
            double n = unit_.row(i).norm();
            if (n > 0) unit_.row(i) /= n;
        }
    }

    Vocabulary vocab_;
    GloveWeights weights_;
    RowMatrix vectors_;
    RowMatrix unit_;
    GloveParams params_;
    std::vector<TrainingStep> log_;
};

namespace detail {

template <bool Shared>
inline double load(double& v) {
    if constexpr (Shared) {
        return std::atomic_ref<double>(v).load(std::memory_order_relaxed);
    } else {
        return v;
    }
}

template <bool Shared>
inline void store(double& v, double x) {
    if constexpr (Shared) {
        std::atomic_ref<double>(v).store(x, std::memory_order_relaxed);
    } else {
        v = x;
    }
}

// One AdaGrad step on a single co-occurrence entry (gradient of half the
// weighted squared error, as in the reference implementation).
template <bool Shared>
inline void glove_step(GloveWeights& w, GloveWeights& gsq, const CooccurrenceEntry& e, double x_max,
                       double alpha, double lr) {
    const Eigen::Index d = w.main.cols();
    double* wi = w.main.row(e.row).data();
    double* cj = w.context.row(e.col).data();
    double* gwi = gsq.main.row(e.row).data();
    double* gcj = gsq.context.row(e.col).data();

    double dot = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) dot += load<Shared>(wi[k]) * load<Shared>(cj[k]);
    double diff = dot + load<Shared>(w.bias[e.row]) + load<Shared>(w.context_bias[e.col]) - std::log(e.value);
    double fdiff = glove_weight(e.value, x_max, alpha) * diff;
    if (!std::isfinite(fdiff)) return;

    for (Eigen::Index k = 0; k < d; ++k) {
        double a = load<Shared>(wi[k]), b = load<Shared>(cj[k]);
        double g1 = fdiff * b, g2 = fdiff * a;
        double s1 = load<Shared>(gwi[k]), s2 = load<Shared>(gcj[k]);
        store<Shared>(wi[k], a - lr * g1 / std::sqrt(s1));
        store<Shared>(cj[k], b - lr * g2 / std::sqrt(s2));
        store<Shared>(gwi[k], s1 + g1 * g1);
        store<Shared>(gcj[k], s2 + g2 * g2);
    }
    double sb = load<Shared>(gsq.bias[e.row]);
    store<Shared>(w.bias[e.row], load<Shared>(w.bias[e.row]) - lr * fdiff / std::sqrt(sb));
    store<Shared>(gsq.bias[e.row], sb + fdiff * fdiff);
    double sc = load<Shared>(gsq.context_bias[e.col]);
    store<Shared>(w.context_bias[e.col], load<Shared>(w.context_bias[e.col]) - lr * fdiff / std::sqrt(sc));
    store<Shared>(gsq.context_bias[e.col], sc + fdiff * fdiff);
}

}  // namespace detail

inline GloveWeights random_glove_weights(std::size_t V, int d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    GloveWeights w = GloveWeights::zeros(V, d);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(V); ++i) {
        for (int k = 0; k < d; ++k) w.main(i, k) = u(rng) / d;
        for (int k = 0; k < d; ++k) w.context(i, k) = u(rng) / d;
        w.bias[i] = u(rng) / d;
        w.context_bias[i] = u(rng) / d;
    }
    return w;
}

// Trains GloVe vectors with AdaGrad over shuffled co-occurrence entries. The
// training log holds the exact objective before training (epoch 0) and after
// every epoch. `warm_start`, when given, seeds the rows of tokens it knows.
inline EmbeddingModel train_glove(const Vocabulary& vocab, const CooccurrenceMatrix& cooc,
                                  const GloveParams& params,
                                  const EmbeddingModel* warm_start = nullptr) {
    if (cooc.empty()) throw InsufficientData("co-occurrence matrix is empty");
    if (params.dimension < 2) throw std::invalid_argument("embedding dimension must be >= 2");
    if (params.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (cooc.dim() != vocab.size()) throw std::invalid_argument("vocabulary and matrix disagree");

    const std::size_t V = vocab.size();
    const int d = params.dimension;
    std::mt19937_64 rng(params.seed);
    GloveWeights w = random_glove_weights(V, d, rng);
    if (warm_start != nullptr && warm_start->dimension() == d) {
        const auto& prev = warm_start->weights();
        for (std::size_t i = 0; i < V; ++i) {
            if (auto j = warm_start->vocabulary().find(vocab.token(i))) {
                w.main.row(i) = prev.main.row(*j);
                w.context.row(i) = prev.context.row(*j);
                w.bias[i] = prev.bias[*j];
                w.context_bias[i] = prev.context_bias[*j];
            }
        }
    }
    GloveWeights gsq{RowMatrix::Ones(V, d), RowMatrix::Ones(V, d), Eigen::VectorXd::Ones(V),
                     Eigen::VectorXd::Ones(V)};

    std::vector<TrainingStep> log;
    log.push_back({0, glove_objective(w, cooc, params.x_max, params.alpha)});

    const auto& entries = cooc.entries();
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), 0);
    const int threads = std::max(1, params.threads);

    for (int epoch = 1; epoch <= params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        if (threads == 1) {
            for (auto idx : order)
                detail::glove_step<false>(w, gsq, entries[idx], params.x_max, params.alpha, params.learning_rate);
        } else {
            std::vector<std::thread> pool;
            const std::size_t chunk = (order.size() + threads - 1) / threads;
            for (int t = 0; t < threads; ++t) {
                std::size_t lo = t * chunk, hi = std::min(order.size(), lo + chunk);
                pool.emplace_back([&, lo, hi] {
                    for (std::size_t s = lo; s < hi; ++s)
                        detail::glove_step<true>(w, gsq, entries[order[s]], params.x_max, params.alpha,
                                                 params.learning_rate);
                });
            }
            for (auto& th : pool) th.join();
        }
        double loss = glove_objective(w, cooc, params.x_max, params.alpha);
        bool finite = std::isfinite(loss) && w.main.allFinite() && w.context.allFinite() &&
                      w.bias.allFinite() && w.context_bias.allFinite();
        if (!finite) throw TrainingDiverged(epoch);
        log.push_back({epoch, loss});
    }
    return EmbeddingModel(vocab, std::move(w), params, std::move(log));
}

// ---------------------------------------------------------------------------
// Neighbors

inline double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                                const Eigen::Ref<const Eigen::VectorXd>& b) {
    double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

struct Neighbor {
    std::string token;
    double similarity;
};

struct NeighborList {
    std::string query;
    std::vector<Neighbor> neighbors;
};

// Top-k vocabulary entries by cosine similarity to `query` (query excluded),
// optionally restricted to token kinds. Ties go to the more frequent token,
// then the lexicographically smaller one.
inline NeighborList nearest_neighbors(const EmbeddingModel& model, const std::string& query, std::size_t k,
                                      const std::optional<std::set<TokenKind>>& kinds = std::nullopt) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    const auto& vocab = model.vocabulary();
    auto qi = vocab.find(query);
    if (!qi) throw NotFound(query);

    const auto& unit = model.unit_vectors();
    struct Scored {
        std::size_t index;
        double sim;
    };
    std::vector<Scored> all;
    all.reserve(vocab.size());
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (i == *qi) continue;
        if (kinds && !kinds->count(kind_of(vocab.token(i)))) continue;
        double s = std::clamp(unit.row(*qi).dot(unit.row(i)), -1.0, 1.0);
        all.push_back({i, s});
    }
    auto better = [&](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (vocab.count(a.index) != vocab.count(b.index)) return vocab.count(a.index) > vocab.count(b.index);
        return vocab.token(a.index) < vocab.token(b.index);
    };
    std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), better);
    NeighborList out{query, {}};
    for (std::size_t i = 0; i < take; ++i) out.neighbors.push_back({vocab.token(all[i].index), all[i].sim});
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: "<token> v1 ... vd" per line, plus "<path>.meta.json".

inline void save_embedding(const EmbeddingModel& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(17);
    const auto& vocab = model.vocabulary();
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        out << vocab.token(i);
        for (Eigen::Index k = 0; k < model.vectors().cols(); ++k) out << ' ' << model.vectors()(i, k);
        out << '\n';
    }
    nlohmann::json meta = {{"dimension", model.dimension()},
                           {"epochs", model.params().epochs},
                           {"seed", model.params().seed},
                           {"x_max", model.params().x_max},
                           {"alpha", model.params().alpha},
                           {"learning_rate", model.params().learning_rate},
                           {"loss", model.final_loss()},
                           {"min_count", vocab.min_count()}};
    nlohmann::json counts = nlohmann::json::array();
    for (std::size_t i = 0; i < vocab.size(); ++i) counts.push_back(vocab.count(i));
    meta["counts"] = counts;
    std::ofstream m(path.string() + ".meta.json");
    m << meta.dump(2) << '\n';
}

inline EmbeddingModel load_embedding(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<std::string> tokens;
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!rows.empty() && row.size() != rows.front().size())
            throw Error("inconsistent vector width in " + path.string());
        tokens.push_back(tok);
        rows.push_back(std::move(row));
    }
    GloveParams params;
    std::vector<TrainingStep> log;
    std::vector<std::int64_t> counts(tokens.size(), 0);
    std::int64_t min_count = 1;
    std::ifstream m(path.string() + ".meta.json");
    if (m) {
        auto meta = nlohmann::json::parse(m);
        params.epochs = meta.value("epochs", params.epochs);
        params.seed = meta.value("seed", params.seed);
        params.x_max = meta.value("x_max", params.x_max);
        params.alpha = meta.value("alpha", params.alpha);
        params.learning_rate = meta.value("learning_rate", params.learning_rate);
        min_count = meta.value("min_count", min_count);
        if (meta.contains("loss")) log.push_back({params.epochs, meta["loss"].get<double>()});
        if (meta.contains("counts") && meta["counts"].size() == tokens.size())
            counts = meta["counts"].get<std::vector<std::int64_t>>();
    }
    // Preserve file order: counts are already non-increasing for saved models.
    std::map<std::string, std::int64_t> count_map;
    for (std::size_t i = 0; i < tokens.size(); ++i) count_map[tokens[i]] = std::max<std::int64_t>(counts[i], 1);
    Vocabulary vocab = Vocabulary::from_counts(count_map, 1);
    const int d = rows.empty() ? 0 : static_cast<int>(rows.front().size());
    params.dimension = d;
    RowMatrix vectors(tokens.size(), d);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        std::size_t r = vocab.index_of(tokens[i]);
        for (int k = 0; k < d; ++k) vectors(r, k) = rows[i][k];
    }
    return EmbeddingModel(std::move(vocab), std::move(vectors), params, std::move(log));
}

}  // namespace kwtrack
