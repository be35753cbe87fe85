#include "legalrag/sparse_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "legalrag/util.hpp"

namespace legalrag {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'S', 'I'};
constexpr uint32_t kVersion = 1;

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

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw std::runtime_error("sparse index file truncated");
    }

    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace

SparseIndex SparseIndex::build(const std::vector<LegalArticle>& articles,
                               const AnalyzerConfig& analyzer, const Bm25Params& params) {
    if (articles.empty()) throw std::invalid_argument("build_index: empty article list");
    if (params.k1 < 0.0) throw std::invalid_argument("bm25: k1 must be >= 0");
    if (params.b < 0.0 || params.b > 1.0) throw std::invalid_argument("bm25: b must be in [0,1]");

    SparseIndex index;
    index.params_ = params;
    index.analyzer_ = analyzer;
    index.doc_ids_.reserve(articles.size());
    index.doc_lengths_.reserve(articles.size());

    uint64_t total_len = 0;
    for (uint32_t doc = 0; doc < articles.size(); ++doc) {
        const auto tokens = tokenize(articles[doc].text, analyzer);
        index.doc_ids_.push_back(articles[doc].article_id);
        index.doc_lengths_.push_back(static_cast<uint32_t>(tokens.size()));
        total_len += tokens.size();

        std::unordered_map<std::string, uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (auto& [term, count] : tf) {
            index.postings_[term].push_back(Posting{doc, count});
        }
    }
    // Postings stay sorted by doc index (insertion order is ascending).
    index.avg_doc_length_ = static_cast<double>(total_len) / static_cast<double>(articles.size());
    return index;
}

double SparseIndex::idf(const std::string& term) const {
    auto it = postings_.find(term);
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    const double n = static_cast<double>(doc_ids_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

const std::vector<SparseIndex::Posting>* SparseIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::vector<RankedCandidate> SparseIndex::search(const std::string& query, std::size_t k) const {
    if (k == 0) throw std::invalid_argument("bm25_search: k must be >= 1");
    const auto query_tokens = tokenize(query, analyzer_);
    if (query_tokens.empty()) return {};

    std::vector<double> scores(doc_ids_.size(), 0.0);
    std::vector<uint32_t> touched;
    std::vector<char> seen(doc_ids_.size(), 0);

    // Accumulation order: query tokens in query order, postings in doc order.
    for (const auto& term : query_tokens) {
        const auto* plist = postings(term);
        if (!plist) continue;
        const double term_idf = idf(term);
        for (const auto& p : *plist) {
            const double tf = static_cast<double>(p.tf);
            const double len = static_cast<double>(doc_lengths_[p.doc]);
            const double norm =
                1.0 - params_.b + params_.b * len / (avg_doc_length_ > 0.0 ? avg_doc_length_ : 1.0);
            scores[p.doc] += term_idf * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
            if (!seen[p.doc]) {
                seen[p.doc] = 1;
                touched.push_back(p.doc);
            }
        }
    }

    std::vector<uint32_t> hits;
    hits.reserve(touched.size());
    for (uint32_t doc : touched) {
        if (scores[doc] > 0.0) hits.push_back(doc);
    }
    std::sort(hits.begin(), hits.end(), [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return doc_ids_[a] < doc_ids_[b];
    });
    if (hits.size() > k) hits.resize(k);

    std::vector<RankedCandidate> out;
    out.reserve(hits.size());
    for (uint32_t doc : hits) {
        out.push_back(RankedCandidate{doc_ids_[doc], scores[doc], Route::Sparse});
    }
    return out;
}

void SparseIndex::save(const std::filesystem::path& path) const {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put(out, params_.k1);
    put(out, params_.b);
    put(out, static_cast<uint32_t>(analyzer_.mode));
    put(out, static_cast<uint8_t>(analyzer_.lowercase));
    put(out, static_cast<uint8_t>(analyzer_.strip_punctuation));
    put(out, avg_doc_length_);
    put(out, static_cast<uint64_t>(doc_ids_.size()));
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        put_str(out, doc_ids_[i]);
        put(out, doc_lengths_[i]);
    }
    // Term dictionary in sorted order for a reproducible file.
    std::map<std::string, const std::vector<Posting>*> sorted;
    for (const auto& [term, plist] : postings_) sorted.emplace(term, &plist);
    put(out, static_cast<uint64_t>(sorted.size()));
    for (const auto& [term, plist] : sorted) {
        put_str(out, term);
        put(out, static_cast<uint64_t>(plist->size()));
        for (const auto& p : *plist) {
            put(out, p.doc);
            put(out, p.tf);
        }
    }
    write_file_atomic(path, out);
}

SparseIndex SparseIndex::load(const std::filesystem::path& path) {
    Reader in(read_file(path));
    char magic[4];
    for (char& c : magic) c = in.get<char>();
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a sparse index file: " + path.string());
    }
    const auto version = in.get<uint32_t>();
    if (version != kVersion) {
        throw std::runtime_error("sparse index version mismatch: found " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kVersion));
    }
    SparseIndex index;
    index.params_.k1 = in.get<double>();
    index.params_.b = in.get<double>();
    index.analyzer_.mode = static_cast<TokenizerMode>(in.get<uint32_t>());
    index.analyzer_.lowercase = in.get<uint8_t>() != 0;
    index.analyzer_.strip_punctuation = in.get<uint8_t>() != 0;
    index.avg_doc_length_ = in.get<double>();
    const auto n_docs = in.get<uint64_t>();
    index.doc_ids_.reserve(n_docs);
    index.doc_lengths_.reserve(n_docs);
    for (uint64_t i = 0; i < n_docs; ++i) {
        index.doc_ids_.push_back(in.get_str());
        index.doc_lengths_.push_back(in.get<uint32_t>());
    }
    const auto n_terms = in.get<uint64_t>();
    for (uint64_t i = 0; i < n_terms; ++i) {
        std::string term = in.get_str();
        const auto n_postings = in.get<uint64_t>();
        std::vector<Posting> plist;
        plist.reserve(n_postings);
        for (uint64_t j = 0; j < n_postings; ++j) {
            Posting p;
            p.doc = in.get<uint32_t>();
            p.tf = in.get<uint32_t>();
            plist.push_back(p);
        }
        index.postings_.emplace(std::move(term), std::move(plist));
    }
    return index;
}

}  // namespace legalrag
