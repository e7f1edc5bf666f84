#include "dvsm/data.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dvsm/error.hpp"
#include "dvsm/rng.hpp"

namespace dvsm {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::Classification ? "classification" : "regression";
}

TaskKind parse_task_kind(std::string_view name) {
    if (name == "classification" || name == "nli") return TaskKind::Classification;
    if (name == "regression" || name == "sts") return TaskKind::Regression;
    throw UsageError("unknown task kind '" + std::string(name) + "' (expected classification or regression)");
}

std::string_view label_name(std::size_t label) {
    static constexpr std::string_view names[] = {"entailment", "contradiction", "neutral"};
    if (label >= kNumNliClasses) throw UsageError("label index " + std::to_string(label) + " out of range");
    return names[label];
}

std::optional<std::size_t> parse_label(std::string_view name) {
    for (std::size_t i = 0; i < kNumNliClasses; ++i)
        if (label_name(i) == name) return i;
    return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view sentence) {
    std::vector<std::string> out;
    std::string current;
    for (char c : sentence) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
    for (const char* special : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) {
        ids_.emplace(special, static_cast<std::int64_t>(tokens_.size()));
        tokens_.emplace_back(special);
    }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    Vocab v;
    for (auto& t : tokens) {
        if (t.empty()) throw DataError("vocabulary contains an empty token");
        if (!v.ids_.emplace(t, static_cast<std::int64_t>(v.tokens_.size())).second) {
            throw DataError("duplicate vocabulary token '" + t + "'");
        }
        v.tokens_.push_back(std::move(t));
    }
    return v;
}

Vocab Vocab::build(std::span<const std::filesystem::path> corpus, std::size_t min_freq) {
    std::map<std::string, std::size_t> counts;
    for (const auto& path : corpus) {
        const std::string text = read_file(path);
        for (std::string_view line : split_lines(text)) {
            auto fields = split_tabs(line);
            if (fields.size() >= 3) fields.resize(2);
            for (auto field : fields)
                for (auto& tok : tokenize(field)) ++counts[tok];
        }
    }
    for (const char* special : {"[pad]", "[unk]", "[cls]", "[sep]"}) counts.erase(special);
    if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : counts)
        if (n >= std::max<std::size_t>(min_freq, 1)) kept.emplace_back(tok, n);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, n] : kept) tokens.push_back(tok);
    return from_tokens(std::move(tokens));
}

Vocab Vocab::load(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    auto lines = split_lines(text);
    Vocab base;
    if (lines.size() < base.size()) throw DataError(path.string() + ": vocabulary is missing reserved tokens");
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (lines[i] != base.tokens_[i]) {
            throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected reserved token " +
                            base.tokens_[i]);
        }
    }
    std::vector<std::string> rest;
    for (std::size_t i = base.size(); i < lines.size(); ++i) rest.emplace_back(lines[i]);
    return from_tokens(std::move(rest));
}

void Vocab::save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& t : tokens_) out += t + "\n";
    write_file(path, out);
}

std::int64_t Vocab::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(std::int64_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DataError("token id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocab::encode(std::string_view sentence) const {
    std::vector<std::int64_t> ids;
    for (const auto& tok : tokenize(sentence)) ids.push_back(id(tok));
    return ids;
}

std::string Vocab::decode(std::span<const std::int64_t> ids) const {
    std::string out;
    for (auto id : ids) {
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// pair files

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fingerprint_file(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    return fnv1a64({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    auto [end, ec] = std::to_chars(buf, buf + 16, value, 16);
    std::string s(buf, end);
    return std::string(16 - s.size(), '0') + s;
}

PairDataset parse_pairs(std::string_view text, TaskKind task, std::string_view source) {
    PairDataset ds;
    ds.task = task;
    ds.fingerprint = fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    auto lines = split_lines(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        const std::string where = std::string(source) + ":" + std::to_string(n + 1) + ": ";
        if (trim(lines[n]).empty()) continue;
        auto fields = split_tabs(lines[n]);
        if (fields.size() != 3) {
            throw DataError(where + "expected 3 tab-separated fields, found " + std::to_string(fields.size()));
        }
        LabeledPair pair{std::string(trim(fields[0])), std::string(trim(fields[1])), std::nullopt, std::nullopt};
        if (tokenize(pair.sentence_a).empty() || tokenize(pair.sentence_b).empty()) {
            throw DataError(where + "empty sentence");
        }
        const std::string_view target = trim(fields[2]);
        if (task == TaskKind::Classification) {
            pair.label = parse_label(target);
            if (!pair.label) {
                double dummy;
                auto [p, ec] = std::from_chars(target.data(), target.data() + target.size(), dummy);
                if (ec == std::errc() && p == target.data() + target.size()) {
                    throw DataError(where + "task-kind mismatch: found a similarity score where a class label "
                                            "was expected");
                }
                throw DataError(where + "unknown label '" + std::string(target) + "'");
            }
        } else {
            if (parse_label(target)) {
                throw DataError(where + "task-kind mismatch: found class label '" + std::string(target) +
                                "' where a similarity score was expected");
            }
            double score = 0.0;
            auto [p, ec] = std::from_chars(target.data(), target.data() + target.size(), score);
            if (ec != std::errc() || p != target.data() + target.size()) {
                throw DataError(where + "malformed score '" + std::string(target) + "'");
            }
            if (!(score >= 0.0 && score <= kMaxStsScore)) {
                throw DataError(where + "score " + std::string(target) + " outside [0, 5]");
            }
            pair.score = score;
        }
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

PairDataset load_pairs(const std::filesystem::path& path, TaskKind task) {
    return parse_pairs(read_file(path), task, path.string());
}

std::string format_pairs(std::span<const LabeledPair> pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += p.sentence_a;
        out += '\t';
        out += p.sentence_b;
        out += '\t';
        if (p.label) {
            out += label_name(*p.label);
        } else if (p.score) {
            out += format_double(*p.score);
        } else {
            throw UsageError("pair has neither label nor score");
        }
        out += '\n';
    }
    return out;
}

void write_pairs(const std::filesystem::path& path, std::span<const LabeledPair> pairs) {
    write_file(path, format_pairs(pairs));
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size, bool shuffle,
                                                 std::uint64_t seed) {
    if (batch_size == 0) throw UsageError("batch_size must be at least 1");
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    if (shuffle && count > 1) {
        Rng rng(seed);
        for (std::size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count; start += batch_size) {
        const std::size_t end = std::min(count, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

// ---------------------------------------------------------------------------
// synthetic overlap task

Overlap multiset_overlap(std::span<const std::string> a, std::span<const std::string> b) {
    std::map<std::string_view, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& t : a) ++counts[t].first;
    for (const auto& t : b) ++counts[t].second;
    Overlap o;
    for (const auto& [tok, c] : counts) {
        o.intersection += std::min(c.first, c.second);
        o.union_size += std::max(c.first, c.second);
    }
    return o;
}

std::size_t overlap_label(const Overlap& o) {
    if (o.union_size == 0) throw UsageError("overlap of two empty sentences");
    if (10 * o.intersection >= 6 * o.union_size) return 0;
    if (10 * o.intersection <= o.union_size) return 1;
    return 2;
}

double overlap_score(const Overlap& o) {
    if (o.union_size == 0) throw UsageError("overlap of two empty sentences");
    return kMaxStsScore * static_cast<double>(o.intersection) / static_cast<double>(o.union_size);
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

}  // namespace

std::vector<LabeledPair> gen_synthetic(std::size_t num_pairs, std::size_t vocab_size, std::uint64_t seed,
                                       TaskKind task, const SyntheticOptions& options) {
    if (vocab_size < 20) throw UsageError("gen_synthetic needs vocab_size >= 20");
    if (options.min_len == 0 || options.max_len < options.min_len) throw UsageError("invalid sentence lengths");
    Rng rng(seed);
    auto random_token = [&] { return "w" + std::to_string(rng.below(vocab_size)); };
    auto random_len = [&] { return options.min_len + rng.below(options.max_len - options.min_len + 1); };

    const std::size_t entail_quota = (num_pairs * 4 + 5) / 10;
    const std::size_t contra_quota = (num_pairs * 3 + 5) / 10;
    const std::size_t quotas[3] = {entail_quota, contra_quota,
                                   num_pairs - std::min(num_pairs, entail_quota + contra_quota)};
    std::size_t filled[3] = {0, 0, 0};

    std::vector<LabeledPair> out;
    out.reserve(num_pairs);
    const std::size_t budget = options.max_attempts_per_pair * std::max<std::size_t>(num_pairs, 1);
    for (std::size_t attempt = 0; out.size() < num_pairs; ++attempt) {
        if (attempt >= budget) throw DataError("gen_synthetic: class quotas infeasible within the retry budget");
        std::vector<std::string> a(random_len());
        for (auto& t : a) t = random_token();
        // b keeps a random number of a's tokens and fills the rest with fresh draws.
        const std::size_t len_b = random_len();
        const std::size_t kept = rng.below(std::min(a.size(), len_b) + 1);
        std::vector<std::string> pool = a;
        for (std::size_t i = pool.size() - 1; i > 0; --i) std::swap(pool[i], pool[rng.below(i + 1)]);
        std::vector<std::string> b(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(kept));
        while (b.size() < len_b) b.push_back(random_token());
        for (std::size_t i = b.size() - 1; i > 0; --i) std::swap(b[i], b[rng.below(i + 1)]);

        const Overlap o = multiset_overlap(a, b);
        const std::size_t cls = overlap_label(o);
        if (filled[cls] >= quotas[cls]) continue;
        ++filled[cls];
        LabeledPair pair{join(a), join(b), std::nullopt, std::nullopt};
        if (task == TaskKind::Classification) {
            pair.label = cls;
        } else {
            pair.score = overlap_score(o);
        }
        out.push_back(std::move(pair));
    }
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.below(i)]);
    return out;
}

// ---------------------------------------------------------------------------
// teacher cache

namespace {

constexpr char kCacheMagic[8] = {'D', 'V', 'T', 'C', 'A', 'C', 'H', 'E'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw DataError(what_ + ": truncated file");
    }

    std::string_view data_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace

std::span<const double> TeacherCache::prediction(std::size_t example, std::size_t teacher) const {
    if (example >= count || teacher >= num_teachers()) throw UsageError("teacher cache index out of range");
    return std::span<const double>(values).subspan((example * num_teachers() + teacher) * num_outputs, num_outputs);
}

void TeacherCache::validate() const {
    if (teacher_ids.empty()) throw DataError("teacher cache holds no teachers");
    if (num_outputs == 0) throw DataError("teacher cache has zero outputs per prediction");
    if (values.size() != count * num_teachers() * num_outputs) throw DataError("teacher cache size mismatch");
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("teacher cache holds a non-finite value");
    if (num_outputs > 1) {
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t k = 0; k < num_teachers(); ++k) {
                double total = 0.0;
                for (double p : prediction(i, k)) {
                    if (p < 0.0) throw DataError("teacher cache holds a negative probability");
                    total += p;
                }
                if (std::fabs(total - 1.0) > 1e-6) {
                    throw DataError("teacher distribution for example " + std::to_string(i) + " sums to " +
                                    format_double(total));
                }
            }
    }
}

void TeacherCache::check_matches(const PairDataset& dataset) const {
    if (fingerprint != dataset.fingerprint) {
        throw DataError("teacher cache fingerprint " + hex64(fingerprint) + " does not match dataset fingerprint " +
                        hex64(dataset.fingerprint));
    }
    if (count != dataset.size()) {
        throw DataError("teacher cache covers " + std::to_string(count) + " examples, dataset has " +
                        std::to_string(dataset.size()));
    }
}

void TeacherCache::save(const std::filesystem::path& path) const {
    validate();
    std::string out(kCacheMagic, sizeof kCacheMagic);
    put<std::uint32_t>(out, kCacheVersion);
    put<std::uint64_t>(out, fingerprint);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(num_teachers()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(num_outputs));
    put<std::uint64_t>(out, count);
    for (const auto& id : teacher_ids) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out += id;
    }
    for (double v : values) put<double>(out, v);
    write_file(path, out);
}

TeacherCache TeacherCache::load(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    Reader r(data, path.string());
    if (r.bytes(sizeof kCacheMagic) != std::string_view(kCacheMagic, sizeof kCacheMagic)) {
        throw DataError(path.string() + ": not a teacher cache");
    }
    if (const auto version = r.get<std::uint32_t>(); version != kCacheVersion) {
        throw DataError(path.string() + ": unsupported teacher cache version " + std::to_string(version));
    }
    TeacherCache c;
    c.fingerprint = r.get<std::uint64_t>();
    const auto k = r.get<std::uint32_t>();
    c.num_outputs = r.get<std::uint32_t>();
    c.count = r.get<std::uint64_t>();
    for (std::uint32_t i = 0; i < k; ++i) c.teacher_ids.emplace_back(r.bytes(r.get<std::uint32_t>()));
    const std::size_t n = c.count * k * c.num_outputs;
    if (n > data.size()) throw DataError(path.string() + ": truncated file");
    c.values.resize(n);
    for (auto& v : c.values) v = r.get<double>();
    if (!r.done()) throw DataError(path.string() + ": trailing bytes after teacher cache");
    c.validate();
    return c;
}

TeacherCache TeacherCache::merge(std::span<const TeacherCache> caches) {
    if (caches.empty()) throw UsageError("no teacher caches given");
    TeacherCache out;
    out.fingerprint = caches[0].fingerprint;
    out.num_outputs = caches[0].num_outputs;
    out.count = caches[0].count;
    for (const auto& c : caches) {
        if (c.fingerprint != out.fingerprint || c.count != out.count) {
            throw DataError("teacher caches were built over different datasets");
        }
        if (c.num_outputs != out.num_outputs) throw DataError("teacher caches disagree on the number of outputs");
        out.teacher_ids.insert(out.teacher_ids.end(), c.teacher_ids.begin(), c.teacher_ids.end());
    }
    if (caches.size() == 1) return caches[0];
    const std::size_t k_total = out.teacher_ids.size();
    out.values.resize(out.count * k_total * out.num_outputs);
    for (std::size_t i = 0; i < out.count; ++i) {
        std::size_t k_out = 0;
        for (const auto& c : caches)
            for (std::size_t k = 0; k < c.num_teachers(); ++k, ++k_out) {
                auto src = c.prediction(i, k);
                std::copy(src.begin(), src.end(),
                          out.values.begin() + static_cast<std::ptrdiff_t>((i * k_total + k_out) * out.num_outputs));
            }
    }
    return out;
}

}  // namespace dvsm
