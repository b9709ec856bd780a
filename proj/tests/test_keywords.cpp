#include "crisiscast/keywords.hpp"

#include "keyword_fixtures.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace crisiscast;
using namespace crisiscast::keywords;

namespace {

// Hand-built two-topic model over a three-term vocabulary.
TopicModel toy_model(Eigen::MatrixXd phi, Eigen::VectorXd weights) {
    TopicModel m;
    m.topics = static_cast<int>(phi.rows());
    m.vocabulary = {"alpha", "beta", "gamma"};
    m.phi = std::move(phi);
    m.topic_weights = std::move(weights);
    return m;
}

Corpus counts_corpus(int a, int b, int g) {
    std::vector<std::string> doc;
    doc.insert(doc.end(), static_cast<std::size_t>(a), "alpha");
    doc.insert(doc.end(), static_cast<std::size_t>(b), "beta");
    doc.insert(doc.end(), static_cast<std::size_t>(g), "gamma");
    return Corpus({doc});
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x(i++) = d;
    return x;
}

}  // namespace

TEST_CASE("tokenizer") {
    CHECK(tokenize("Hand-Sanitizer, 500ml & a MASK!") ==
          std::vector<std::string>{"hand", "sanitizer", "500ml", "mask"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("a b c").empty());
    CHECK(tokenize("caf\xc3\xa9 au lait") == std::vector<std::string>{"caf", "au", "lait"});
}

TEST_CASE("corpus bookkeeping") {
    std::istringstream is("toilet paper, toilet roll\n\n  x \nflour yeast flour\n");
    const auto c = Corpus::from_lines(is);
    CHECK(c.documents().size() == 2);
    CHECK(c.vocabulary() == std::vector<std::string>{"flour", "paper", "roll", "toilet", "yeast"});
    CHECK(c.count("toilet") == 2);
    CHECK(c.count("flour") == 2);
    CHECK(c.count("mask") == 0);
    long recount = 0;
    for (const auto &d : c.documents()) recount += static_cast<long>(d.size());
    CHECK(c.total_tokens() == recount);
    CHECK(c.total_tokens() == 7);
}

TEST_CASE("saliency hand cases") {
    // p(t) = (0.5, 0.5); "alpha" only in topic 0, so p(t|alpha) = (1, 0)
    const auto m = toy_model((Eigen::MatrixXd(2, 3) << 0.5, 0.25, 0.25, 0.0, 0.5, 0.5).finished(), vec({0.5, 0.5}));
    const auto c = counts_corpus(10, 3, 4);
    CHECK(std::abs(saliency(m, c, "alpha") - 10.0 * std::log(2.0)) < 1e-9);
    const auto c2 = counts_corpus(20, 3, 4);
    CHECK(saliency(m, c2, "alpha") == doctest::Approx(2.0 * saliency(m, c, "alpha")).epsilon(1e-15));

    // identical rows: p(t|w) = p(t) for every term
    const auto flat = toy_model((Eigen::MatrixXd(2, 3) << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5).finished(), vec({0.3, 0.7}));
    for (const char *t : {"alpha", "beta", "gamma"}) CHECK(std::abs(saliency(flat, c, t)) < 1e-15);

    CHECK(error_code([&] { (void)saliency(m, c, "delta"); }) == "UnknownTerm");
}

TEST_CASE("relevance hand cases and endpoints") {
    // p(w|t=0) = 0.02 for alpha; p(w) = 0.5*0.02 + 0.5*0.0 = 0.01
    const auto m = toy_model((Eigen::MatrixXd(2, 3) << 0.02, 0.49, 0.49, 0.0, 0.5, 0.5).finished(), vec({0.5, 0.5}));
    CHECK(std::abs(relevance(m, "alpha", 0, 0.6) - 0.812) < 1e-12);
    CHECK(relevance(m, "alpha", 0, 1.0) == 0.02);
    CHECK(relevance(m, "alpha", 0, 0.0) == 0.02 / m.term_probability(0));
    // lift exceeds p(w|t): relevance falls as lambda grows
    double prev = relevance(m, "alpha", 0, 0.0);
    for (int i = 1; i <= 10; ++i) {
        const double r = relevance(m, "alpha", 0, i / 10.0);
        CHECK(r < prev);
        prev = r;
    }
    CHECK(error_code([&] { (void)relevance(m, "alpha", 0, 1.5); }) == "LambdaOutOfRange");
    CHECK(exit_code_of([&] { (void)relevance(m, "alpha", 0, -0.1); }) == 1);
    CHECK(error_code([&] { (void)relevance(m, "omega", 0, 0.5); }) == "UnknownTerm");
}

TEST_CASE("essentiality hand cases") {
    SeedTags seeds;
    seeds.add("Bread", 1.0);
    seeds.add("milk", 1.0);
    seeds.add("yacht", 0.0);
    EmbeddingTable emb;
    // cosines to "flour" = e1 are exactly 0.9, 0.8, 0.1
    emb.add("bread", vec({0.9, std::sqrt(1.0 - 0.81), 0.0, 0.0}));
    emb.add("milk", vec({0.8, 0.0, 0.6, 0.0}));
    emb.add("yacht", vec({0.1, 0.0, 0.0, std::sqrt(0.99)}));
    emb.add("flour", vec({1.0, 0.0, 0.0, 0.0}));
    CHECK(std::abs(essentiality(seeds, emb, "flour", 3) - (0.9 + 0.8) / (0.9 + 0.8 + 0.1)) < 1e-9);
    CHECK(essentiality(seeds, emb, "bread", 3) == 1.0);
    CHECK(essentiality(seeds, emb, "YACHT", 3) == 0.0);

    SeedTags two;
    two.add("up", 1.0);
    two.add("down", 0.0);
    EmbeddingTable sym;
    sym.add("up", vec({1.0, 1.0}));
    sym.add("down", vec({1.0, -1.0}));
    sym.add("mid", vec({2.0, 0.0}));
    CHECK(essentiality(two, sym, "mid", 2) == 0.5);

    CHECK(error_code([&] { (void)essentiality(seeds, emb, "flour", 4); }) == "InsufficientSeeds");
    CHECK(error_code([&] { (void)essentiality(seeds, emb, "unknown", 2); }) == "UnknownTerm");
    CHECK(error_code([&] { emb.add("zero", vec({0, 0, 0, 0})); }) == "ZeroVector");
    CHECK(error_code([&] { emb.add("short", vec({1, 0})); }) == "DimensionMismatch");
    CHECK(error_code([&] { seeds.add("bad", 1.5); }) == "BadSeedValue");
}

TEST_CASE("essentiality stays in [0,1] and ignores seed order") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EmbeddingTable emb;
    std::vector<std::pair<std::string, double>> tags;
    for (int i = 0; i < 40; ++i) {
        emb.add("seed" + std::to_string(i), vec({z(rng), z(rng), z(rng), z(rng), z(rng)}));
        tags.emplace_back("seed" + std::to_string(i), u(rng));
    }
    for (int i = 0; i < 30; ++i) emb.add("term" + std::to_string(i), vec({z(rng), z(rng), z(rng), z(rng), z(rng)}));
    SeedTags forward, backward;
    for (const auto &[t, v] : tags) forward.add(t, v);
    for (auto it = tags.rbegin(); it != tags.rend(); ++it) backward.add(it->first, it->second);
    for (int i = 0; i < 30; ++i) {
        const std::string t = "term" + std::to_string(i);
        const double a = essentiality(forward, emb, t, 10);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        CHECK(a == essentiality(backward, emb, t, 10));
    }
}

TEST_CASE("multi-token keywords use mean-pooled vectors") {
    EmbeddingTable emb;
    emb.add("hand", vec({1.0, 0.0}));
    emb.add("sanitizer", vec({0.0, 1.0}));
    const auto v = emb.lookup("Hand Sanitizer");
    REQUIRE(v);
    CHECK((*v - vec({0.5, 0.5})).norm() < 1e-15);
    CHECK_FALSE(emb.lookup("yacht club"));
}

TEST_CASE("trending terms") {
    std::vector<std::string> recent, base;
    recent.insert(recent.end(), 50, "mask");
    recent.insert(recent.end(), 4, "glitter");
    recent.insert(recent.end(), 946, "food");
    base.insert(base.end(), 1, "mask");
    base.insert(base.end(), 999, "food");
    const auto t = trending_terms(Corpus({recent}), Corpus({base}), 5);
    REQUIRE(t.size() == 2);
    CHECK(t[0].term == "mask");
    CHECK(std::abs(t[0].ratio - 25.0) < 1e-12);
    CHECK(t[1].term == "food");

    const auto same = trending_terms(Corpus({base}), Corpus({base}), 5);
    REQUIRE(same.size() == 1);
    for (const auto &e : same) CHECK(std::abs(e.ratio - 1.0) < 0.01);
    CHECK(error_code([&] { (void)trending_terms(Corpus{}, Corpus({base}), 1); }) == "EmptyCorpus");
}

TEST_CASE("LDA on a single vocabulary pool tracks the empirical distribution") {
    const std::vector<std::string> pool{"aa", "bb", "cc", "dd", "ee", "ff", "gg", "hh", "ii", "jj"};
    std::vector<double> w{10, 8, 7, 5, 4, 3, 2, 2, 1, 1};
    std::mt19937_64 rng(5);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::vector<std::vector<std::string>> docs(300);
    for (auto &d : docs)
        for (int i = 0; i < 100; ++i) d.push_back(pool[pick(rng)]);
    const Corpus c(docs);
    const auto m = fit_lda(c, {.topics = 2, .alpha = 0.1, .beta = 0.01, .iterations = 100, .seed = 1});
    Eigen::Index dom = 0;
    m.topic_weights.maxCoeff(&dom);
    double l1 = 0.0;
    for (std::size_t v = 0; v < c.vocabulary().size(); ++v) {
        l1 += std::abs(m.phi(dom, static_cast<Eigen::Index>(v)) -
                       static_cast<double>(c.term_frequency()[v]) / static_cast<double>(c.total_tokens()));
    }
    MESSAGE("L1 distance of dominant topic: " << l1);
    CHECK(l1 < 0.05);
}

TEST_CASE("LDA recovers two disjoint topics") {
    const auto fx = fixture::two_topic_corpus(200, 50, 17);
    std::vector<long> sums;
    LdaOptions opts{.topics = 2, .alpha = 0.5, .beta = 0.01, .iterations = 200, .seed = 3};
    opts.on_sweep = [&](int, std::span<const long> nk) { sums.push_back(nk[0] + nk[1]); };
    const auto m = fit_lda(fx.corpus, opts);
    CHECK(sums.size() == 200);
    CHECK(std::all_of(sums.begin(), sums.end(), [&](long s) { return s == fx.corpus.total_tokens(); }));

    const double cos = fixture::matched_cosine(m.phi, fx.generators);
    MESSAGE("matched cosine " << cos);
    CHECK(cos >= 0.9);

    for (Eigen::Index k = 0; k < 2; ++k) CHECK(std::abs(m.phi.row(k).sum() - 1.0) < 1e-9);
    CHECK(std::abs(m.topic_weights.sum() - 1.0) < 1e-12);
    CHECK(m.phi.minCoeff() >= 0.0);
    for (Eigen::Index d = 0; d < m.doc_theta.rows(); ++d) CHECK(std::abs(m.doc_theta.row(d).sum() - 1.0) < 1e-12);
    for (const auto &t : fx.vocabulary) CHECK(saliency(m, fx.corpus, t) >= 0.0);

    const auto again = fit_lda(fx.corpus, {.topics = 2, .alpha = 0.5, .beta = 0.01, .iterations = 200, .seed = 3});
    CHECK((again.phi.array() == m.phi.array()).all());
}

TEST_CASE("held-out perplexity improves with sweeps") {
    const auto fx = fixture::two_topic_corpus(200, 50, 23);
    const auto [train, held] = split_corpus(fx.corpus, 0.1, 4);
    CHECK(held.documents().size() == 20);
    const auto early = fit_lda(train, {.topics = 2, .alpha = 0.5, .beta = 0.01, .iterations = 1, .seed = 2});
    const auto late = fit_lda(train, {.topics = 2, .alpha = 0.5, .beta = 0.01, .iterations = 100, .seed = 2});
    const double p1 = heldout_perplexity(early, held, 30, 1);
    const double pn = heldout_perplexity(late, held, 30, 1);
    MESSAGE("perplexity after 1 sweep " << p1 << ", after 100 sweeps " << pn);
    CHECK(pn < p1);
}

TEST_CASE("LDA preconditions") {
    CHECK(error_code([] { (void)fit_lda(Corpus{}, {}); }) == "EmptyCorpus");
    const Corpus c(std::vector<std::vector<std::string>>{{"aa", "bb"}});
    CHECK(error_code([&] { (void)fit_lda(c, {.topics = 1}); }) == "BadHyperparameter");
    CHECK(error_code([&] { (void)fit_lda(c, {.topics = 2, .alpha = 0.0}); }) == "BadHyperparameter");
    CHECK(error_code([&] { (void)fit_lda(c, {.topics = 2, .beta = -1.0}); }) == "BadHyperparameter");
    CHECK(fit_lda(c, {.topics = 4, .iterations = 2}).alpha == 12.5);
}

TEST_CASE("loaders and score CSV") {
    std::istringstream seeds_in("term,score\nToilet Paper, 1.0\nyacht,0\n");
    const auto seeds = read_seed_tags(seeds_in);
    CHECK(seeds.find("toilet paper") == 1.0);
    CHECK(seeds.find("yacht") == 0.0);
    std::istringstream bad_seed("mask,high\n");
    CHECK(error_code([&] { (void)read_seed_tags(bad_seed); }) == "ParseError");

    std::istringstream emb_in("toilet 1 0 0\npaper 0 1 0\nyacht 0 0 1\ntissue 0.9 0.5 0\n");
    const auto emb = read_embeddings(emb_in);
    CHECK(emb.size() == 4);
    CHECK(emb.dimension() == 3);
    std::istringstream bad_emb("toilet 1 0 0\npaper 0 x 0\n");
    CHECK(error_code([&] { (void)read_embeddings(bad_emb); }) == "ParseError");

    const Corpus c({{"tissue", "yacht", "tissue", "dinghy"}, {"tissue", "tissue"}});
    const auto m = fit_lda(c, {.topics = 2, .iterations = 20, .seed = 1});
    const auto rows = score_terms(m, c, seeds, emb, nullptr, nullptr, {.lambda = 0.6, .neighbors = 2, .min_count = 1});
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].saliency >= rows[i].saliency);
    const auto find = [&](const std::string &t) { return *std::find_if(rows.begin(), rows.end(), [&](auto &r) { return r.term == t; }); };
    CHECK(std::isnan(find("dinghy").essentiality));
    CHECK(find("yacht").essentiality == 0.0);
    CHECK(find("tissue").essentiality > 0.5);
    CHECK(std::isnan(find("tissue").trend_ratio));

    std::ostringstream os;
    write_scores_csv(os, rows);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "term,frequency,saliency,best_topic,relevance,essentiality,trend_ratio");
    int n = 0, empty_ess = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.rfind("dinghy,", 0) == 0) empty_ess += line.find(",,") != std::string::npos ? 1 : 0;
    }
    CHECK(n == 3);
    CHECK(empty_ess == 1);
}
