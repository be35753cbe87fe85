#include "legalrag/types.hpp"

namespace legalrag {

const char* route_name(Route route) {
    switch (route) {
        case Route::Sparse: return "sparse";
        case Route::Dense: return "dense";
        case Route::Fused: return "fused";
        case Route::Reranked: return "reranked";
    }
    return "unknown";
}

}  // namespace legalrag
