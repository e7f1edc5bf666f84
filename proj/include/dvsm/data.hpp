#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dvsm {

// Reserved vocabulary ids.
inline constexpr std::int64_t kPadId = 0;
inline constexpr std::int64_t kUnkId = 1;
inline constexpr std::int64_t kClsId = 2;
inline constexpr std::int64_t kSepId = 3;

enum class TaskKind { Classification, Regression };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

/// Three-way labels: entailment = 0, contradiction = 1, neutral = 2.
inline constexpr std::size_t kNumNliClasses = 3;
std::string_view label_name(std::size_t label);
std::optional<std::size_t> parse_label(std::string_view name);

/// Lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view sentence);

/// Word-level vocabulary. Ids 0..3 are [PAD], [UNK], [CLS], [SEP].
class Vocab {
public:
    Vocab();

    /// Counts lowercased whitespace tokens and keeps those seen at least min_freq
    /// times, ordered by frequency (descending) then token. Lines with at least
    /// three tab-separated fields are pair records; only the two sentences count.
    static Vocab build(std::span<const std::filesystem::path> corpus, std::size_t min_freq);
    static Vocab from_tokens(std::vector<std::string> tokens);
    /// One token per line; line number is the id.
    static Vocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    std::int64_t id(std::string_view token) const;
    const std::string& token(std::int64_t id) const;

    std::vector<std::int64_t> encode(std::string_view sentence) const;
    std::string decode(std::span<const std::int64_t> ids) const;

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int64_t> ids_;
};

/// A sentence pair with either a class label or a similarity score in [0, 5].
struct LabeledPair {
    std::string sentence_a;
    std::string sentence_b;
    std::optional<std::size_t> label;
    std::optional<double> score;
};

struct PairDataset {
    TaskKind task = TaskKind::Classification;
    std::vector<LabeledPair> pairs;
    /// FNV-1a 64 of the raw file bytes (0 for in-memory datasets).
    std::uint64_t fingerprint = 0;

    std::size_t size() const noexcept { return pairs.size(); }
};

inline constexpr double kMaxStsScore = 5.0;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fingerprint_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

/// Tab-separated lines: sentence_a, sentence_b, label-or-score. Errors carry the line number.
PairDataset load_pairs(const std::filesystem::path& path, TaskKind task);
PairDataset parse_pairs(std::string_view text, TaskKind task, std::string_view source = "<memory>");
std::string format_pairs(std::span<const LabeledPair> pairs);
void write_pairs(const std::filesystem::path& path, std::span<const LabeledPair> pairs);

/// Index batches over [0, count). Shuffled with a seeded Fisher-Yates when requested;
/// the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size, bool shuffle,
                                                 std::uint64_t seed);

/// Multiset Jaccard overlap as an exact fraction.
struct Overlap {
    std::size_t intersection = 0;
    std::size_t union_size = 0;
};
Overlap multiset_overlap(std::span<const std::string> a, std::span<const std::string> b);
/// Jaccard >= 0.6 -> entailment, <= 0.1 -> contradiction, otherwise neutral. Integer arithmetic only.
std::size_t overlap_label(const Overlap& overlap);
double overlap_score(const Overlap& overlap);

struct SyntheticOptions {
    std::size_t min_len = 4;
    std::size_t max_len = 8;
    /// Attempts allowed per requested pair before giving up on the class quotas.
    std::size_t max_attempts_per_pair = 1000;
};

/// Pairs over tokens "w0".."w{vocab_size-1}" labeled by multiset overlap, with
/// class quotas 40% entailment / 30% contradiction / 30% neutral filled by
/// rejection sampling. The same seed yields the same sentence pairs for both task kinds.
std::vector<LabeledPair> gen_synthetic(std::size_t num_pairs, std::size_t vocab_size, std::uint64_t seed,
                                       TaskKind task, const SyntheticOptions& options = {});

/// Frozen teacher outputs for one dataset: count x K x n doubles.
struct TeacherCache {
    std::uint64_t fingerprint = 0;
    std::vector<std::string> teacher_ids;
    /// Classes per distribution, or 1 for regression scores.
    std::size_t num_outputs = 0;
    std::size_t count = 0;
    std::vector<double> values;

    std::size_t num_teachers() const noexcept { return teacher_ids.size(); }
    std::span<const double> prediction(std::size_t example, std::size_t teacher) const;

    void validate() const;
    /// Throws DataError unless fingerprint and example count match.
    void check_matches(const PairDataset& dataset) const;

    void save(const std::filesystem::path& path) const;
    static TeacherCache load(const std::filesystem::path& path);
    /// Concatenates teachers of caches built over the same dataset.
    static TeacherCache merge(std::span<const TeacherCache> caches);

    bool operator==(const TeacherCache&) const = default;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace dvsm
