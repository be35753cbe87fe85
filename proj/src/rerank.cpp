#include "legalrag/rerank.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace legalrag {

using json = nlohmann::json;

std::vector<double> BigramOverlapReranker::score_pairs(const std::string& query,
                                                       const std::vector<std::string>& docs) {
    const auto query_tokens = tokenize(query, analyzer_);
    const std::unordered_set<std::string> query_set(query_tokens.begin(), query_tokens.end());
    std::vector<double> scores;
    scores.reserve(docs.size());
    for (const auto& doc : docs) {
        const auto doc_tokens = tokenize(doc, analyzer_);
        const std::unordered_set<std::string> doc_set(doc_tokens.begin(), doc_tokens.end());
        std::size_t overlap = 0;
        for (const auto& t : query_set) {
            if (doc_set.contains(t)) ++overlap;
        }
        scores.push_back(static_cast<double>(overlap));
    }
    return scores;
}

std::vector<RankedCandidate> rerank(RerankBackend& backend, const KvCache* cache,
                                    const std::string& rewritten_query,
                                    const std::vector<RankedCandidate>& candidates,
                                    const Corpus& corpus, std::size_t final_k) {
    if (final_k == 0) throw std::invalid_argument("rerank: final_k must be >= 1");
    if (candidates.empty()) return {};

    std::vector<std::string> docs;
    docs.reserve(candidates.size());
    for (const auto& c : candidates) docs.push_back(corpus.at(c.article_id).text);

    std::vector<double> scores(candidates.size());
    std::vector<std::string> keys(candidates.size());
    std::vector<std::size_t> misses;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (cache) {
            keys[i] = sha256_hex("rerank\x1f" + backend.id() + "\x1f" + rewritten_query + "\x1f" +
                                 docs[i]);
            if (auto hit = cache->get(keys[i])) {
                scores[i] = json::parse(*hit).get<double>();
                continue;
            }
        }
        misses.push_back(i);
    }
    if (!misses.empty()) {
        std::vector<std::string> miss_docs;
        miss_docs.reserve(misses.size());
        for (std::size_t i : misses) miss_docs.push_back(docs[i]);
        const auto fresh = backend.score_pairs(rewritten_query, miss_docs);
        if (fresh.size() != miss_docs.size()) {
            throw BackendError("rerank backend returned " + std::to_string(fresh.size()) +
                               " scores for " + std::to_string(miss_docs.size()) + " documents");
        }
        for (std::size_t j = 0; j < misses.size(); ++j) {
            if (!std::isfinite(fresh[j])) {
                throw BackendError("rerank backend returned a non-finite score");
            }
            scores[misses[j]] = fresh[j];
            if (cache) {
                json v = fresh[j];
                cache->put(keys[misses[j]], v.dump(), backend.id());
            }
        }
    }

    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a].article_id < candidates[b].article_id;
    });
    if (order.size() > final_k) order.resize(final_k);

    std::vector<RankedCandidate> out;
    out.reserve(order.size());
    for (std::size_t i : order) {
        out.push_back(RankedCandidate{candidates[i].article_id, scores[i], Route::Reranked});
    }
    return out;
}

namespace {

/// Deterministic cross-platform RNG: splitmix64 over a derived seed.
/// (std::uniform_int_distribution is implementation-defined, so exports
/// would not be byte-identical across standard libraries.)
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Unbiased value in [0, bound) via rejection sampling.
    uint64_t below(uint64_t bound) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % bound;
    }

private:
    uint64_t state_;
};

uint64_t derive_seed(uint64_t seed, const std::string& conversation_id, int turn_index) {
    const std::string material =
        std::to_string(seed) + "\x1f" + conversation_id + "\x1f" + std::to_string(turn_index);
    const std::string digest = sha256_hex(material);
    uint64_t out = 0;
    for (int i = 0; i < 16; ++i) {
        const char c = digest[i];
        out = (out << 4) | static_cast<uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
    }
    return out;
}

}  // namespace

std::vector<RerankTrainingExample> export_training_data(const std::vector<TurnPool>& trace_pools,
                                                        const std::vector<Conversation>& gold,
                                                        uint64_t seed) {
    struct Key {
        std::string conversation_id;
        int turn_index;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            return std::hash<std::string>{}(k.conversation_id) ^
                   (std::hash<int>{}(k.turn_index) << 1);
        }
    };
    std::unordered_map<Key, const TurnPool*, KeyHash> pools;
    for (const auto& p : trace_pools) pools.emplace(Key{p.conversation_id, p.turn_index}, &p);

    constexpr std::size_t kNegatives = 5;
    std::vector<RerankTrainingExample> out;
    for (const auto& conv : gold) {
        for (const auto& turn : conv.turns) {
            if (turn.gold_article_ids.empty()) continue;  // unlabeled: nothing to export
            auto it = pools.find(Key{conv.conversation_id, turn.turn_index});
            if (it == pools.end()) {
                throw std::runtime_error("export_training_data: turn missing from trace: " +
                                         conv.conversation_id + "/turn " +
                                         std::to_string(turn.turn_index));
            }
            const TurnPool& pool = *it->second;

            RerankTrainingExample ex;
            ex.conversation_id = conv.conversation_id;
            ex.turn_index = turn.turn_index;
            ex.query = pool.rewritten_query;
            ex.positive_ids = turn.gold_article_ids;
            ex.seed = seed;

            const std::unordered_set<std::string> positives(turn.gold_article_ids.begin(),
                                                            turn.gold_article_ids.end());
            std::vector<std::string> eligible;
            for (const auto& id : pool.post_filter_top10) {
                if (!positives.contains(id)) eligible.push_back(id);
            }
            if (eligible.size() <= kNegatives) {
                ex.negative_ids = eligible;
                if (eligible.size() < kNegatives) ex.flags.push_back("short_pool");
            } else {
                SplitMix64 rng(derive_seed(seed, conv.conversation_id, turn.turn_index));
                // Partial Fisher-Yates: first kNegatives positions.
                for (std::size_t i = 0; i < kNegatives; ++i) {
                    const std::size_t j =
                        i + static_cast<std::size_t>(rng.below(eligible.size() - i));
                    std::swap(eligible[i], eligible[j]);
                }
                ex.negative_ids.assign(eligible.begin(), eligible.begin() + kNegatives);
            }
            out.push_back(std::move(ex));
        }
    }
    return out;
}

std::string serialize_training_data(const std::vector<RerankTrainingExample>& examples,
                                    const Corpus& corpus) {
    std::string out;
    for (const auto& ex : examples) {
        auto texts_of = [&](const std::vector<std::string>& ids) {
            json arr = json::array();
            for (const auto& id : ids) arr.push_back(corpus.at(id).text);
            return arr;
        };
        json rec{{"conversation_id", ex.conversation_id},
                 {"turn_index", ex.turn_index},
                 {"query", ex.query},
                 {"positive_ids", ex.positive_ids},
                 {"positive_texts", texts_of(ex.positive_ids)},
                 {"negative_ids", ex.negative_ids},
                 {"negative_texts", texts_of(ex.negative_ids)},
                 {"flags", ex.flags},
                 {"seed", ex.seed}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

}  // namespace legalrag
