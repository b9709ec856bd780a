#include "crisiscast/keywords.hpp"

#include "crisiscast/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace crisiscast::keywords {

namespace {

constexpr const char *kModule = "keywords";

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto &ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::size_t require_term(const TopicModel &m, std::string_view term) {
    const auto id = m.id_of(term);
    if (!id) throw_data(kModule, "UnknownTerm", "'" + std::string(term) + "' is not in the model vocabulary");
    return *id;
}

/// Draws an index with probability proportional to w.
std::size_t draw(std::span<const double> w, double total, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, total);
    double x = u(rng);
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
        if (x < w[k]) return k;
        x -= w[k];
    }
    return w.size() - 1;
}

double parse_real(const std::string &text, const std::string &what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (used == 0 || used != text.size()) throw_data(kModule, "ParseError", "bad number '" + text + "' in " + what);
    return v;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 2) out.push_back(cur);
        cur.clear();
    };
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (u < 128 && std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

Corpus::Corpus(std::vector<std::vector<std::string>> documents) : docs_(std::move(documents)) {
    std::map<std::string, long, std::less<>> counts;
    for (const auto &d : docs_)
        for (const auto &t : d) ++counts[t];
    for (const auto &[t, n] : counts) {
        index_.emplace(t, vocab_.size());
        vocab_.push_back(t);
        freq_.push_back(n);
        total_ += n;
    }
}

Corpus Corpus::from_lines(std::istream &is) {
    std::vector<std::vector<std::string>> docs;
    std::string line;
    while (std::getline(is, line)) {
        auto toks = tokenize(line);
        if (!toks.empty()) docs.push_back(std::move(toks));
    }
    return Corpus(std::move(docs));
}

std::optional<std::size_t> Corpus::id_of(std::string_view term) const {
    const auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

long Corpus::count(std::string_view term) const {
    const auto id = id_of(term);
    return id ? freq_[*id] : 0;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus &c, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw_usage(kModule, "BadParameter", "split fraction must lie in (0,1)");
    const auto &docs = c.documents();
    if (docs.size() < 2) throw_data(kModule, "EmptyCorpus", "need at least two documents to split");
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * static_cast<double>(docs.size()))));
    std::vector<bool> is_held(docs.size(), false);
    for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = true;
    std::vector<std::vector<std::string>> a, b;
    for (std::size_t i = 0; i < docs.size(); ++i) (is_held[i] ? b : a).push_back(docs[i]);
    return {Corpus(std::move(a)), Corpus(std::move(b))};
}

std::optional<std::size_t> TopicModel::id_of(std::string_view term) const {
    const auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), term);
    if (it == vocabulary.end() || *it != term) return std::nullopt;
    return static_cast<std::size_t>(it - vocabulary.begin());
}

double TopicModel::term_probability(std::size_t w) const {
    return topic_weights.dot(phi.col(static_cast<Eigen::Index>(w)));
}

Eigen::VectorXd TopicModel::topics_given_term(std::size_t w) const {
    const Eigen::VectorXd joint = topic_weights.cwiseProduct(phi.col(static_cast<Eigen::Index>(w)));
    const double pw = joint.sum();
    return pw > 0.0 ? Eigen::VectorXd(joint / pw) : Eigen::VectorXd::Zero(joint.size());
}

TopicModel fit_lda(const Corpus &c, const LdaOptions &opts) {
    if (c.empty()) throw_data(kModule, "EmptyCorpus", "corpus has no tokens");
    const double alpha = opts.alpha < 0.0 ? 50.0 / opts.topics : opts.alpha;
    if (opts.topics < 2 || !(alpha > 0.0) || !(opts.beta > 0.0) || opts.iterations < 1 || !std::isfinite(alpha) ||
        !std::isfinite(opts.beta)) {
        throw_usage(kModule, "BadHyperparameter", "need topics >= 2, alpha > 0, beta > 0, iterations >= 1");
    }
    const auto K = static_cast<std::size_t>(opts.topics);
    const std::size_t V = c.vocabulary().size();
    const std::size_t D = c.documents().size();
    const double vbeta = static_cast<double>(V) * opts.beta;

    std::vector<std::vector<std::size_t>> words(D), z(D);
    std::vector<long> nkw(K * V, 0), nk(K, 0), ndk(D * K, 0);
    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<std::size_t> pick(0, K - 1);
    for (std::size_t d = 0; d < D; ++d) {
        for (const auto &t : c.documents()[d]) {
            const std::size_t w = *c.id_of(t);
            const std::size_t k = pick(rng);
            words[d].push_back(w);
            z[d].push_back(k);
            ++nkw[k * V + w];
            ++nk[k];
            ++ndk[d * K + k];
        }
    }

    std::vector<double> p(K);
    for (int sweep = 1; sweep <= opts.iterations; ++sweep) {
        for (std::size_t d = 0; d < D; ++d) {
            for (std::size_t i = 0; i < words[d].size(); ++i) {
                const std::size_t w = words[d][i];
                std::size_t k = z[d][i];
                --nkw[k * V + w];
                --nk[k];
                --ndk[d * K + k];
                double total = 0.0;
                for (std::size_t j = 0; j < K; ++j) {
                    p[j] = (static_cast<double>(ndk[d * K + j]) + alpha) *
                           (static_cast<double>(nkw[j * V + w]) + opts.beta) / (static_cast<double>(nk[j]) + vbeta);
                    total += p[j];
                }
                k = draw(p, total, rng);
                z[d][i] = k;
                ++nkw[k * V + w];
                ++nk[k];
                ++ndk[d * K + k];
            }
        }
        if (std::accumulate(nk.begin(), nk.end(), 0L) != c.total_tokens()) {
            throw_numerical(kModule, "InconsistentCounts", "topic counts drifted from the corpus size");
        }
        if (opts.on_sweep) opts.on_sweep(sweep, nk);
    }

    TopicModel m;
    m.topics = opts.topics;
    m.alpha = alpha;
    m.vocabulary = c.vocabulary();
    m.topic_counts = nk;
    m.phi.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(V));
    m.topic_weights.resize(static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        for (std::size_t w = 0; w < V; ++w) {
            m.phi(ki, static_cast<Eigen::Index>(w)) =
                (static_cast<double>(nkw[k * V + w]) + opts.beta) / (static_cast<double>(nk[k]) + vbeta);
        }
        m.topic_weights(ki) = static_cast<double>(nk[k]) / static_cast<double>(c.total_tokens());
    }
    m.doc_theta.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(K));
    for (std::size_t d = 0; d < D; ++d) {
        const double denom = static_cast<double>(words[d].size()) + static_cast<double>(K) * alpha;
        for (std::size_t k = 0; k < K; ++k) {
            m.doc_theta(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) =
                (static_cast<double>(ndk[d * K + k]) + alpha) / denom;
        }
    }
    return m;
}

double heldout_perplexity(const TopicModel &m, const Corpus &heldout, int sweeps, std::uint64_t seed) {
    if (sweeps < 1) throw_usage(kModule, "BadParameter", "sweeps must be >= 1");
    const auto K = static_cast<std::size_t>(m.topics);
    const double alpha = m.alpha;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, K - 1);
    std::vector<double> p(K);
    double loglik = 0.0;
    long n = 0;
    for (const auto &doc : heldout.documents()) {
        std::vector<std::size_t> words;
        for (const auto &t : doc)
            if (auto id = m.id_of(t)) words.push_back(*id);
        if (words.empty()) continue;
        std::vector<std::size_t> z(words.size());
        std::vector<long> ndk(K, 0);
        for (auto &k : z) ++ndk[k = pick(rng)];
        for (int s = 0; s < sweeps; ++s) {
            for (std::size_t i = 0; i < words.size(); ++i) {
                --ndk[z[i]];
                double total = 0.0;
                for (std::size_t j = 0; j < K; ++j) {
                    p[j] = (static_cast<double>(ndk[j]) + alpha) *
                           m.phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(words[i]));
                    total += p[j];
                }
                z[i] = draw(p, total, rng);
                ++ndk[z[i]];
            }
        }
        const double denom = static_cast<double>(words.size()) + static_cast<double>(K) * alpha;
        for (std::size_t w : words) {
            double pw = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                pw += (static_cast<double>(ndk[j]) + alpha) / denom *
                      m.phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(w));
            }
            loglik += std::log(pw);
            ++n;
        }
    }
    if (n == 0) throw_data(kModule, "EmptyCorpus", "held-out documents share no term with the model");
    return std::exp(-loglik / static_cast<double>(n));
}

double saliency(const TopicModel &m, const Corpus &c, std::string_view term) {
    const std::size_t w = require_term(m, term);
    const Eigen::VectorXd ptw = m.topics_given_term(w);
    double kl = 0.0;
    for (Eigen::Index t = 0; t < ptw.size(); ++t) {
        if (ptw(t) > 0.0) kl += ptw(t) * std::log(ptw(t) / m.topic_weights(t));
    }
    return static_cast<double>(c.count(term)) * kl;
}

double relevance(const TopicModel &m, std::string_view term, int topic, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw_usage(kModule, "LambdaOutOfRange", "lambda must lie in [0,1]");
    const std::size_t w = require_term(m, term);
    if (topic < 0 || topic >= m.topics) throw_usage(kModule, "BadParameter", "topic index out of range");
    const double pwt = m.phi(topic, static_cast<Eigen::Index>(w));
    const double pw = m.term_probability(w);
    return lambda * pwt + (1.0 - lambda) * pwt / pw;
}

void SeedTags::add(std::string term, double value) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw_data(kModule, "BadSeedValue", "seed '" + term + "' has value outside [0,1]");
    }
    term = lowercase(trim(term));
    if (term.empty()) throw_data(kModule, "ParseError", "empty seed term");
    tags_[term] = value;
}

std::optional<double> SeedTags::find(std::string_view term) const {
    const auto it = tags_.find(lowercase(term));
    if (it == tags_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingTable::add(std::string term, Eigen::VectorXd vec) {
    if (vec.size() == 0) throw_data(kModule, "ParseError", "embedding for '" + term + "' is empty");
    if (dim_ != 0 && static_cast<std::size_t>(vec.size()) != dim_) {
        throw_data(kModule, "DimensionMismatch",
                   "embedding for '" + term + "' has dimension " + std::to_string(vec.size()) + ", expected " +
                       std::to_string(dim_));
    }
    if (!vec.allFinite() || vec.norm() == 0.0) {
        throw_data(kModule, "ZeroVector", "embedding for '" + term + "' is zero or non-finite");
    }
    dim_ = static_cast<std::size_t>(vec.size());
    table_[lowercase(term)] = std::move(vec);
}

std::optional<Eigen::VectorXd> EmbeddingTable::lookup(std::string_view term) const {
    const std::string key = lowercase(term);
    if (const auto it = table_.find(key); it != table_.end()) return it->second;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    int found = 0;
    for (const auto &tok : tokenize(key)) {
        if (const auto it = table_.find(tok); it != table_.end()) {
            sum += it->second;
            ++found;
        }
    }
    if (found == 0 || sum.norm() == 0.0) return std::nullopt;
    return Eigen::VectorXd(sum / found);
}

double essentiality(const SeedTags &seeds, const EmbeddingTable &emb, std::string_view term, int neighbors) {
    if (neighbors < 1) throw_usage(kModule, "BadParameter", "neighbors must be >= 1");
    if (const auto v = seeds.find(term)) return *v;
    const auto target = emb.lookup(term);
    if (!target) throw_data(kModule, "UnknownTerm", "no embedding for '" + std::string(term) + "'");
    const double tn = target->norm();

    struct Cand {
        double cos;
        double value;
        const std::string *term;
    };
    std::vector<Cand> cands;
    for (const auto &[s, value] : seeds.entries()) {
        const auto v = emb.lookup(s);
        if (!v) continue;
        cands.push_back({target->dot(*v) / (tn * v->norm()), value, &s});
    }
    if (cands.size() < static_cast<std::size_t>(neighbors)) {
        throw_data(kModule, "InsufficientSeeds",
                   std::to_string(cands.size()) + " seeds have embeddings, need " + std::to_string(neighbors));
    }
    const auto mid = cands.begin() + neighbors;
    std::partial_sort(cands.begin(), mid, cands.end(), [](const Cand &a, const Cand &b) {
        return a.cos != b.cos ? a.cos > b.cos : *a.term < *b.term;
    });
    double num = 0.0, den = 0.0, plain = 0.0;
    for (auto it = cands.begin(); it != mid; ++it) {
        const double w = std::max(it->cos, 0.0);
        num += w * it->value;
        den += w;
        plain += it->value;
    }
    // no positively similar neighbour: fall back to the unweighted mean
    const double score = den > 0.0 ? num / den : plain / neighbors;
    return std::clamp(score, 0.0, 1.0);
}

std::vector<TrendEntry> trending_terms(const Corpus &recent, const Corpus &baseline, long min_count) {
    if (recent.empty() || baseline.empty()) throw_data(kModule, "EmptyCorpus", "trend corpora must be non-empty");
    const double nr = static_cast<double>(recent.total_tokens());
    const double nb = static_cast<double>(baseline.total_tokens());
    const double eps = 1.0 / nb;
    std::vector<TrendEntry> out;
    for (std::size_t i = 0; i < recent.vocabulary().size(); ++i) {
        const long cnt = recent.term_frequency()[i];
        if (cnt < min_count) continue;
        const auto &t = recent.vocabulary()[i];
        const double ratio =
            (static_cast<double>(cnt) / nr) / (static_cast<double>(baseline.count(t)) / nb + eps);
        out.push_back({t, ratio});
    }
    std::stable_sort(out.begin(), out.end(), [](const TrendEntry &a, const TrendEntry &b) { return a.ratio > b.ratio; });
    return out;
}

SeedTags read_seed_tags(std::istream &is) {
    SeedTags tags;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            throw_data(kModule, "ParseError", "seed line " + std::to_string(lineno) + " lacks a comma");
        }
        const std::string term = trim(std::string_view(line).substr(0, comma));
        const std::string score = trim(std::string_view(line).substr(comma + 1));
        if (lineno == 1 && lowercase(term) == "term" && lowercase(score) == "score") continue;
        tags.add(term, parse_real(score, "seed line " + std::to_string(lineno)));
    }
    return tags;
}

EmbeddingTable read_embeddings(std::istream &is) {
    EmbeddingTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string term, tok;
        if (!(ls >> term)) continue;
        std::vector<double> v;
        while (ls >> tok) v.push_back(parse_real(tok, "embedding line " + std::to_string(lineno)));
        t.add(term, Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    return t;
}

std::vector<KeywordScore> score_terms(const TopicModel &m, const Corpus &c, const SeedTags &seeds,
                                      const EmbeddingTable &emb, const Corpus *recent, const Corpus *baseline,
                                      const ScoreOptions &opts) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    std::unordered_map<std::string, double> trend;
    if (recent && baseline) {
        for (auto &e : trending_terms(*recent, *baseline, opts.min_count)) trend.emplace(e.term, e.ratio);
    }
    std::vector<KeywordScore> rows;
    for (std::size_t i = 0; i < c.vocabulary().size(); ++i) {
        const auto &term = c.vocabulary()[i];
        const auto id = m.id_of(term);
        if (!id) continue;
        KeywordScore s;
        s.term = term;
        s.frequency = c.term_frequency()[i];
        s.saliency = saliency(m, c, term);
        Eigen::Index best = 0;
        m.topics_given_term(*id).maxCoeff(&best);
        s.best_topic = static_cast<int>(best);
        s.relevance = relevance(m, term, s.best_topic, opts.lambda);
        s.essentiality = nan;
        if (seeds.find(term) || emb.lookup(term)) {
            try {
                s.essentiality = essentiality(seeds, emb, term, opts.neighbors);
            } catch (const Error &e) {
                if (e.code() != "InsufficientSeeds") throw;
            }
        }
        const auto it = trend.find(term);
        s.trend_ratio = it == trend.end() ? nan : it->second;
        rows.push_back(std::move(s));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const KeywordScore &a, const KeywordScore &b) { return a.saliency > b.saliency; });
    return rows;
}

void write_scores_csv(std::ostream &os, std::span<const KeywordScore> rows) {
    auto put = [&os](double v) {
        if (std::isfinite(v)) os << v;
    };
    os << "term,frequency,saliency,best_topic,relevance,essentiality,trend_ratio\n" << std::setprecision(17);
    for (const auto &r : rows) {
        os << r.term << ',' << r.frequency << ',';
        put(r.saliency);
        os << ',' << r.best_topic << ',';
        put(r.relevance);
        os << ',';
        put(r.essentiality);
        os << ',';
        put(r.trend_ratio);
        os << '\n';
    }
}

}  // namespace crisiscast::keywords
