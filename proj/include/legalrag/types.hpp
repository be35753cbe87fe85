#pragma once

#include <string>
#include <vector>

namespace legalrag {

/// One statutory provision, the retrieval unit.
struct LegalArticle {
    std::string article_id;
    std::string literature_name;
    std::string article_label;
    std::string text;

    bool operator==(const LegalArticle&) const = default;
};

/// A statute grouping many articles, the literature-filter unit.
struct Literature {
    std::string name;
    std::vector<std::string> article_ids;

    bool operator==(const Literature&) const = default;
};

struct ConversationTurn {
    int turn_index = 0;
    std::string query;
    std::string reference_response;
    std::vector<std::string> gold_article_ids;
    std::vector<std::string> reference_keywords;

    bool operator==(const ConversationTurn&) const = default;
};

struct Conversation {
    std::string conversation_id;
    std::vector<ConversationTurn> turns;

    bool operator==(const Conversation&) const = default;
};

enum class Route { Sparse, Dense, Fused, Reranked };

const char* route_name(Route route);

struct RankedCandidate {
    std::string article_id;
    double score = 0.0;
    Route route = Route::Sparse;

    bool operator==(const RankedCandidate&) const = default;
};

}  // namespace legalrag
