#pragma once

// Seeded synthetic data: separable representation clusters, a weakly
// informative probability channel and a small poisoned-corpus RAG fixture.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "kcheck/repstore.hpp"
#include "kcheck/rng.hpp"

namespace kcheck {

double normal_cdf(double x);
double normal_quantile(double p);  // inverse of normal_cdf, p in (0, 1)

// Per-coordinate mean offset mu so that N(+mu 1, I) vs N(-mu 1, I) has the
// given Bayes accuracy in `dim` dimensions: Phi(mu sqrt(dim)) = accuracy.
double mu_for_bayes_accuracy(double accuracy, int dim);

struct ClusterSpec {
    int dim = 64;
    double mu = 0.0;
    double sigma = 1.0;
    Task task = Task::T1Internal;
    std::string model = "synthetic";
    int layer = 0;
    std::string id_prefix = "s";
};

/// n_pos draws from N(+mu 1, sigma^2 I) labelled 1, then n_neg draws from
/// N(-mu 1, sigma^2 I) labelled 0. Ids are "<prefix><index>".
std::vector<RepresentationRecord> gaussian_clusters(std::size_t n_pos, std::size_t n_neg, const ClusterSpec& spec,
                                                    SplitMix64& rng);

/// One token-score record per representation record (same id). A latent
/// z = label * delta + N(0, 1) with delta = sqrt(2) Phi^-1(auc) gives every
/// token the logprob log(sigmoid(z)), so perplexity, lowest and average
/// probability all rank the records with expected AUC `auc`.
std::vector<TokenScoreRecord> weak_token_scores(const std::vector<RepresentationRecord>& records, double auc,
                                                std::size_t n_tokens, SplitMix64& rng);

struct RagFixtureSpec {
    std::size_t n_queries = 20;
    int embed_dim = 32;
    int rep_dim = 32;
    double rep_separation = 4.0;  // mu sqrt(dim) of the scenario clusters
    std::size_t n_train_per_class = 100;
    std::size_t k_retrieve = 10;
    std::uint64_t seed = 0;
};

/// Queries alternate clean/noisy and known/unknown in a fixed pattern. Noisy
/// queries get two injected misleading passages ("The answer is <wrong>.")
/// that pass validate_misleading; every fifth query has no golden passage.
/// Scenario representations cover each query's top-k retrieved passages
/// for all of t2-t4, labelled by ground truth.
struct RagFixture {
    std::vector<QueryRecord> queries;
    std::vector<PassageRecord> passages;
    std::vector<RepresentationRecord> query_embeddings;    // id = query id
    std::vector<RepresentationRecord> passage_embeddings;  // id = pid
    std::vector<RepresentationRecord> reps;                // meta query_id / pid
    std::array<std::vector<RepresentationRecord>, 4> train;  // per task, t1..t4
    std::map<std::string, std::string> memory;               // question -> answer for known queries
    std::map<std::string, std::string> wrong_answers;        // query id -> injected answer
};

RagFixture make_rag_fixture(const RagFixtureSpec& spec);

/// Writes queries.jsonl, passages.jsonl, query_emb.rvf, passage_emb.rvf,
/// reps.rvf, train_t1.rvf .. train_t4.rvf, memory.jsonl and mislead.jsonl
/// into `dir` (created if needed). Returns the written paths.
std::vector<std::string> write_rag_fixture(const RagFixture& fixture, const std::string& dir);

}  // namespace kcheck
