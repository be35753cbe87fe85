#include "legalrag/dense_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "legalrag/util.hpp"

namespace legalrag {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'V', 'I'};
constexpr uint32_t kVersion = 1;

double dot(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

template <typename T>
void put(std::string& out, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
    put(out, static_cast<uint64_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    template <typename T>
    T get() {
        T v;
        need(sizeof(T));
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_str() {
        const auto len = get<uint64_t>();
        need(len);
        std::string s = data_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    std::vector<float> get_floats(std::size_t n) {
        need(n * sizeof(float));
        std::vector<float> v(n);
        std::memcpy(v.data(), data_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
        return v;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw std::runtime_error("vector index file truncated");
    }

    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace

bool l2_normalize(std::vector<float>& v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (sq <= 0.0) return false;
    const double inv = 1.0 / std::sqrt(sq);
    for (float& x : v) x = static_cast<float>(x * inv);
    return true;
}

VectorIndex VectorIndex::build(const std::vector<LegalArticle>& articles,
                               const std::vector<Literature>& literatures,
                               EmbeddingBackend& backend, std::size_t batch_size) {
    if (articles.empty()) throw std::invalid_argument("build_vector_index: empty article list");
    if (batch_size == 0) batch_size = 1;

    std::unordered_map<std::string, const LegalArticle*> by_id;
    for (const auto& a : articles) by_id.emplace(a.article_id, &a);

    VectorIndex index;
    for (const auto& lit : literatures) {
        index.group_order_.push_back(lit.name);
        auto& group = index.by_literature_[lit.name];
        group.reserve(lit.article_ids.size());

        for (std::size_t start = 0; start < lit.article_ids.size(); start += batch_size) {
            const std::size_t end = std::min(start + batch_size, lit.article_ids.size());
            std::vector<std::string> texts;
            texts.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                auto it = by_id.find(lit.article_ids[i]);
                if (it == by_id.end()) {
                    throw std::invalid_argument("literature '" + lit.name +
                                                "' references unknown article '" +
                                                lit.article_ids[i] + "'");
                }
                texts.push_back(it->second->text);
            }

            std::vector<std::vector<float>> vectors;
            try {
                vectors = backend.embed(texts);
            } catch (const std::exception& e) {
                throw BackendError("embedding batch failed (literature '" + lit.name +
                                   "', articles " + lit.article_ids[start] + "..): " + e.what());
            }
            if (vectors.size() != texts.size()) {
                throw BackendError("embedding backend returned " +
                                   std::to_string(vectors.size()) + " vectors for " +
                                   std::to_string(texts.size()) + " texts");
            }
            for (std::size_t i = 0; i < vectors.size(); ++i) {
                auto& v = vectors[i];
                if (index.dimension_ == 0) index.dimension_ = v.size();
                if (v.size() != index.dimension_) {
                    throw BackendError("embedding dimension mismatch: got " +
                                       std::to_string(v.size()) + ", expected " +
                                       std::to_string(index.dimension_));
                }
                if (!l2_normalize(v)) {
                    throw BackendError("zero embedding vector for article '" +
                                       lit.article_ids[start + i] + "'");
                }
                group.push_back(Entry{lit.article_ids[start + i], std::move(v)});
            }
        }
    }
    index.index_entries();
    return index;
}

void VectorIndex::index_entries() {
    by_id_.clear();
    for (const auto& name : group_order_) {
        const auto& group = by_literature_.at(name);
        for (std::size_t i = 0; i < group.size(); ++i) {
            if (!by_id_.emplace(group[i].article_id, std::make_pair(name, i)).second) {
                throw std::runtime_error("article '" + group[i].article_id +
                                         "' appears in more than one vector group");
            }
        }
    }
}

std::vector<RankedCandidate> VectorIndex::search(const std::vector<float>& query_vector,
                                                 const std::vector<std::string>& literature_names,
                                                 std::size_t k_per_literature) const {
    if (k_per_literature == 0) {
        throw std::invalid_argument("dense_search: k_per_literature must be >= 1");
    }
    if (query_vector.size() != dimension_) {
        throw std::invalid_argument("dense_search: query dimension " +
                                    std::to_string(query_vector.size()) + " != index dimension " +
                                    std::to_string(dimension_));
    }
    std::vector<std::string> unknown;
    for (const auto& name : literature_names) {
        if (!by_literature_.contains(name)) unknown.push_back(name);
    }
    if (!unknown.empty()) {
        std::string msg = "dense_search: unknown literatures:";
        for (const auto& u : unknown) msg += " '" + u + "'";
        throw std::invalid_argument(msg);
    }

    std::vector<RankedCandidate> out;
    for (const auto& name : literature_names) {
        const auto& group = by_literature_.at(name);
        std::vector<std::pair<double, const Entry*>> scored;
        scored.reserve(group.size());
        for (const auto& entry : group) {
            scored.emplace_back(dot(query_vector, entry.vector), &entry);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second->article_id < b.second->article_id;
        });
        const std::size_t take = std::min(k_per_literature, scored.size());
        for (std::size_t i = 0; i < take; ++i) {
            out.push_back(RankedCandidate{scored[i].second->article_id, scored[i].first,
                                          Route::Dense});
        }
    }
    return out;
}

double VectorIndex::score(const std::vector<float>& query_vector,
                          const std::string& article_id) const {
    auto it = by_id_.find(article_id);
    if (it == by_id_.end()) {
        throw std::invalid_argument("vector index has no article '" + article_id + "'");
    }
    const auto& entry = by_literature_.at(it->second.first)[it->second.second];
    return dot(query_vector, entry.vector);
}

std::size_t VectorIndex::size() const { return by_id_.size(); }

std::vector<std::string> VectorIndex::literature_names() const { return group_order_; }

const std::vector<VectorIndex::Entry>* VectorIndex::group(
    const std::string& literature_name) const {
    auto it = by_literature_.find(literature_name);
    return it == by_literature_.end() ? nullptr : &it->second;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put(out, static_cast<uint64_t>(dimension_));
    put(out, static_cast<uint64_t>(group_order_.size()));
    for (const auto& name : group_order_) {
        const auto& group = by_literature_.at(name);
        put_str(out, name);
        put(out, static_cast<uint64_t>(group.size()));
        for (const auto& entry : group) {
            put_str(out, entry.article_id);
            out.append(reinterpret_cast<const char*>(entry.vector.data()),
                       entry.vector.size() * sizeof(float));
        }
    }
    write_file_atomic(path, out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    Reader in(read_file(path));
    char magic[4];
    for (char& c : magic) c = in.get<char>();
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a vector index file: " + path.string());
    }
    const auto version = in.get<uint32_t>();
    if (version != kVersion) {
        throw std::runtime_error("vector index version mismatch: found " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kVersion));
    }
    VectorIndex index;
    index.dimension_ = static_cast<std::size_t>(in.get<uint64_t>());
    const auto n_groups = in.get<uint64_t>();
    for (uint64_t g = 0; g < n_groups; ++g) {
        std::string name = in.get_str();
        const auto n_entries = in.get<uint64_t>();
        std::vector<Entry> group;
        group.reserve(n_entries);
        for (uint64_t i = 0; i < n_entries; ++i) {
            Entry entry;
            entry.article_id = in.get_str();
            entry.vector = in.get_floats(index.dimension_);
            group.push_back(std::move(entry));
        }
        index.group_order_.push_back(name);
        index.by_literature_.emplace(std::move(name), std::move(group));
    }
    index.index_entries();
    return index;
}

}  // namespace legalrag
