#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfportrait/core.hpp"
#include "selfportrait/semantic.hpp"

namespace selfportrait {

enum class EditClass { retained, reworded, pruned };
std::string_view to_string(EditClass c);
EditClass parse_edit_class(std::string_view text);

inline constexpr double kRetainedThreshold = 0.95;
inline constexpr double kRewordedThreshold = 0.60;

// Half-open bands, upper band wins at a boundary.
EditClass band_for(double similarity) noexcept;

struct Classification {
    EditClass edit_class = EditClass::pruned;
    double similarity = 0.0;
};

// Empty (or whitespace-only) `after` is pruned with similarity 0.
Classification classify(std::string_view before, std::string_view after, EmbeddingProvider& provider);

// Splits on '.', '!' or '?' followed by whitespace or end of text.
std::vector<std::string> split_sentences(std::string_view text);

struct SentenceClass {
    std::string before_sentence;
    std::optional<std::string> matched_after_sentence;
    EditClass edit_class = EditClass::pruned;
    double similarity = 0.0;

    bool operator==(const SentenceClass&) const = default;
};

// Global greedy max-cosine matching; every after-sentence is used at most once and
// unmatched before-sentences are pruned. Output follows before-sentence order.
std::vector<SentenceClass> classify_sentences(std::string_view before, std::string_view after,
                                              EmbeddingProvider& provider);

struct EditRecord {
    UserId user_id;
    Section section = Section::recent;
    std::int64_t base_version = 0;
    std::string before_text;
    std::string after_text;
    Timestamp timestamp{};
    EditClass summary_class = EditClass::pruned;
    double summary_similarity = 0.0;
    std::vector<SentenceClass> sentence_classes;

    bool operator==(const EditRecord&) const = default;
};

void to_json(nlohmann::json& j, const EditRecord& e);
void from_json(const nlohmann::json& j, EditRecord& e);

EditRecord make_edit_record(const UserId& user, Section section, std::int64_t base_version,
                            std::string before, std::string after, Timestamp when,
                            EmbeddingProvider& provider);

enum class EditGranularity { summary, sentence };

struct WeeklyEditCount {
    int week_index = 0;  // 1-based
    Section section = Section::recent;
    EditClass edit_class = EditClass::pruned;
    std::size_t count = 0;

    bool operator==(const WeeklyEditCount&) const = default;
};

// Counts per (week, section, class); week_index = floor(days since start / 7) + 1.
// Edits before the start or after `weeks` weeks are left out. Rows are sorted and
// zero-count cells omitted.
std::vector<WeeklyEditCount> weekly_edit_series(std::span<const EditRecord> edits,
                                                Timestamp experiment_start, int weeks = 8,
                                                EditGranularity granularity = EditGranularity::summary);

std::string weekly_edit_csv(std::span<const WeeklyEditCount> rows);

}  // namespace selfportrait
