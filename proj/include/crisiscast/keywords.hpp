#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Keyword corpora: LDA topics, saliency / relevance term scores, essentiality propagated
// from tagged seed terms through word-embedding similarity, and trend ratios.

namespace crisiscast::keywords {

/// Lowercase, split on anything that is not an ASCII letter or digit, drop tokens shorter than 2.
std::vector<std::string> tokenize(std::string_view text);

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<std::vector<std::string>> documents);
    /// One document per line; lines with no surviving token are skipped.
    static Corpus from_lines(std::istream &is);

    [[nodiscard]] const std::vector<std::vector<std::string>> &documents() const noexcept { return docs_; }
    /// Sorted unique terms.
    [[nodiscard]] const std::vector<std::string> &vocabulary() const noexcept { return vocab_; }
    [[nodiscard]] const std::vector<long> &term_frequency() const noexcept { return freq_; }
    [[nodiscard]] std::optional<std::size_t> id_of(std::string_view term) const;
    [[nodiscard]] long count(std::string_view term) const;
    [[nodiscard]] long total_tokens() const noexcept { return total_; }
    [[nodiscard]] bool empty() const noexcept { return total_ == 0; }

private:
    std::vector<std::vector<std::string>> docs_;
    std::vector<std::string> vocab_;
    std::vector<long> freq_;
    std::unordered_map<std::string, std::size_t> index_;
    long total_ = 0;
};

/// Deterministic split: roughly `fraction` of the documents (at least one) go to the second corpus.
std::pair<Corpus, Corpus> split_corpus(const Corpus &c, double fraction, std::uint64_t seed);

struct LdaOptions {
    int topics = 20;
    double alpha = -1.0;  ///< negative: 50 / topics
    double beta = 0.01;
    int iterations = 1000;
    std::uint64_t seed = 0;
    /// Called after every sweep with the per-topic token counts.
    std::function<void(int sweep, std::span<const long> topic_counts)> on_sweep;
};

struct TopicModel {
    int topics = 0;
    double alpha = 0.0;  ///< document-topic prior used in the fit
    std::vector<std::string> vocabulary;
    Eigen::MatrixXd phi;            ///< K x V, p(w|t)
    Eigen::VectorXd topic_weights;  ///< p(t), normalized topic token counts
    Eigen::MatrixXd doc_theta;      ///< D x K
    std::vector<long> topic_counts;

    [[nodiscard]] std::optional<std::size_t> id_of(std::string_view term) const;
    /// p(w) = sum_t p(t) p(w|t)
    [[nodiscard]] double term_probability(std::size_t w) const;
    /// p(t|w) by Bayes' rule.
    [[nodiscard]] Eigen::VectorXd topics_given_term(std::size_t w) const;
};

/// Collapsed Gibbs sampling. Throws EmptyCorpus, BadHyperparameter.
TopicModel fit_lda(const Corpus &c, const LdaOptions &opts = {});

/// Perplexity of held-out documents; topic mixtures are folded in by Gibbs sampling with phi fixed.
/// Terms outside the model vocabulary are ignored.
double heldout_perplexity(const TopicModel &m, const Corpus &heldout, int sweeps = 50, std::uint64_t seed = 0);

/// frequency(w) * sum_t p(t|w) log(p(t|w) / p(t)); zero-probability topics contribute 0.
double saliency(const TopicModel &m, const Corpus &c, std::string_view term);
/// lambda p(w|t) + (1 - lambda) p(w|t) / p(w).
double relevance(const TopicModel &m, std::string_view term, int topic, double lambda);

/// Tagged terms, lowercase, values in [0,1].
class SeedTags {
public:
    void add(std::string term, double value);
    [[nodiscard]] std::optional<double> find(std::string_view term) const;
    [[nodiscard]] const std::map<std::string, double, std::less<>> &entries() const noexcept { return tags_; }

private:
    std::map<std::string, double, std::less<>> tags_;
};

class EmbeddingTable {
public:
    void add(std::string term, Eigen::VectorXd vec);
    [[nodiscard]] std::size_t dimension() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return table_.size(); }
    /// The term's own vector, else the mean of its tokens' vectors; nullopt when nothing is known.
    [[nodiscard]] std::optional<Eigen::VectorXd> lookup(std::string_view term) const;

private:
    std::unordered_map<std::string, Eigen::VectorXd> table_;
    std::size_t dim_ = 0;
};

/// Seed value for seed terms; otherwise the cosine-weighted (max(cos,0)) mean over the `neighbors` most
/// similar seeds, clamped to [0,1]. Throws UnknownTerm, InsufficientSeeds.
double essentiality(const SeedTags &seeds, const EmbeddingTable &emb, std::string_view term, int neighbors = 10);

struct TrendEntry {
    std::string term;
    double ratio = 0.0;
};

/// (recent share) / (baseline share + 1/baseline tokens) for terms seen at least `min_count` times recently.
std::vector<TrendEntry> trending_terms(const Corpus &recent, const Corpus &baseline, long min_count = 5);

/// CSV `term,score` with an optional header line.
SeedTags read_seed_tags(std::istream &is);
/// One term per line followed by its vector components.
EmbeddingTable read_embeddings(std::istream &is);

struct KeywordScore {
    std::string term;
    long frequency = 0;
    double saliency = 0.0;
    int best_topic = 0;
    double relevance = 0.0;     ///< for best_topic
    double essentiality = 0.0;  ///< NaN when the term has no embedding
    double trend_ratio = 0.0;   ///< NaN without trend corpora or below the count floor
};

struct ScoreOptions {
    double lambda = 0.6;
    int neighbors = 10;
    long min_count = 5;
};

/// Scores every vocabulary term of `c`. Rows sorted by descending saliency, then term.
std::vector<KeywordScore> score_terms(const TopicModel &m, const Corpus &c, const SeedTags &seeds,
                                      const EmbeddingTable &emb, const Corpus *recent, const Corpus *baseline,
                                      const ScoreOptions &opts = {});

/// Columns term,frequency,saliency,best_topic,relevance,essentiality,trend_ratio; NaN written empty.
void write_scores_csv(std::ostream &os, std::span<const KeywordScore> rows);

}  // namespace crisiscast::keywords
