#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "legalrag/types.hpp"

namespace legalrag {

/// Text-embedding backend. Output vectors must be one per input, all of the
/// same dimension, unit L2 norm (re-normalized at ingestion regardless).
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string id() const = 0;
};

/// L2-normalize in place; zero vectors are left untouched and reported false.
bool l2_normalize(std::vector<float>& v);

/// Exact (flat) cosine index, one vector per article, grouped by literature.
/// Immutable once built; concurrent searches are safe.
class VectorIndex {
public:
    struct Entry {
        std::string article_id;
        std::vector<float> vector;
    };

    /// Embeds every article (batched); articles keep corpus order within
    /// their literature group; groups keep first-appearance order.
    static VectorIndex build(const std::vector<LegalArticle>& articles,
                             const std::vector<Literature>& literatures, EmbeddingBackend& backend,
                             std::size_t batch_size = 64);

    /// For each named literature: top-k by cosine (dot product of unit
    /// vectors) descending, ties by ascending article_id. Results are
    /// concatenated in the order literatures are named. Unknown literature
    /// names raise an error listing them.
    std::vector<RankedCandidate> search(const std::vector<float>& query_vector,
                                        const std::vector<std::string>& literature_names,
                                        std::size_t k_per_literature) const;

    /// Cosine of the query against one article (on-demand scoring for
    /// candidates that did not come through the dense route).
    double score(const std::vector<float>& query_vector, const std::string& article_id) const;

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const;
    std::vector<std::string> literature_names() const;
    const std::vector<Entry>* group(const std::string& literature_name) const;

    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

private:
    VectorIndex() = default;
    void index_entries();

    std::vector<std::string> group_order_;
    std::unordered_map<std::string, std::vector<Entry>> by_literature_;
    std::unordered_map<std::string, std::pair<std::string, std::size_t>> by_id_;  // id -> (lit, pos)
    std::size_t dimension_ = 0;
};

}  // namespace legalrag
