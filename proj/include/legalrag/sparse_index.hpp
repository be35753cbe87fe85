#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "legalrag/analyzer.hpp"
#include "legalrag/types.hpp"

namespace legalrag {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    bool operator==(const Bm25Params&) const = default;
};

/// In-memory BM25 inverted index over the article corpus. Immutable once
/// built; concurrent searches are safe.
///
/// Score per Okapi BM25 with Lucene-style non-negative IDF:
///   score(d) = sum over query token occurrences t of
///              idf(t) * tf * (k1+1) / (tf + k1 * (1 - b + b * len/avglen))
///   idf(t)   = ln((N - df + 0.5) / (df + 0.5) + 1)
class SparseIndex {
public:
    struct Posting {
        uint32_t doc = 0;  // index into doc_ids()
        uint32_t tf = 0;
    };

    static SparseIndex build(const std::vector<LegalArticle>& articles,
                             const AnalyzerConfig& analyzer = {}, const Bm25Params& params = {});

    /// Top-k by score descending, ties by ascending article_id; only docs
    /// with positive score are returned. Empty query tokenization -> empty.
    std::vector<RankedCandidate> search(const std::string& query, std::size_t k) const;

    double idf(const std::string& term) const;

    std::size_t doc_count() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    const Bm25Params& params() const { return params_; }
    const AnalyzerConfig& analyzer() const { return analyzer_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::vector<uint32_t>& doc_lengths() const { return doc_lengths_; }
    const std::vector<Posting>* postings(const std::string& term) const;

    void save(const std::filesystem::path& path) const;
    static SparseIndex load(const std::filesystem::path& path);

private:
    SparseIndex() = default;

    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
    std::vector<uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    Bm25Params params_;
    AnalyzerConfig analyzer_;
};

}  // namespace legalrag
