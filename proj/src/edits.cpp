#include "selfportrait/edits.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

namespace selfportrait {

std::string_view to_string(EditClass c) {
    switch (c) {
        case EditClass::retained: return "retained";
        case EditClass::reworded: return "reworded";
        case EditClass::pruned: return "pruned";
    }
    return "pruned";
}

EditClass parse_edit_class(std::string_view text) {
    for (EditClass c : {EditClass::retained, EditClass::reworded, EditClass::pruned}) {
        if (to_string(c) == text) return c;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown edit class '" + std::string(text) + "'");
}

EditClass band_for(double similarity) noexcept {
    if (similarity >= kRetainedThreshold) return EditClass::retained;
    if (similarity >= kRewordedThreshold) return EditClass::reworded;
    return EditClass::pruned;
}

Classification classify(std::string_view before, std::string_view after, EmbeddingProvider& provider) {
    if (normalize_text(before).empty()) {
        throw Error(ErrorCode::InvalidArgument, "before text must be non-empty");
    }
    if (normalize_text(after).empty()) return {EditClass::pruned, 0.0};
    const std::string texts[] = {std::string(before), std::string(after)};
    const auto emb = provider.embed(texts);
    if (emb.size() != 2) throw Error(ErrorCode::ProviderFailure, "provider returned wrong count");
    const double sim = cosine(emb[0], emb[1]);
    return {band_for(sim), sim};
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        auto begin = current.find_first_not_of(" \t\r\n");
        if (begin != std::string::npos) {
            auto end = current.find_last_not_of(" \t\r\n");
            out.push_back(current.substr(begin, end - begin + 1));
        }
        current.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        current.push_back(c);
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            flush();
        }
    }
    flush();
    return out;
}

std::vector<SentenceClass> classify_sentences(std::string_view before, std::string_view after,
                                              EmbeddingProvider& provider) {
    const auto b = split_sentences(before);
    const auto a = split_sentences(after);
    if (b.empty()) throw Error(ErrorCode::InvalidArgument, "before text has no sentences");

    std::vector<SentenceClass> out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i].before_sentence = b[i];
    if (a.empty()) return out;

    std::vector<std::string> all(b);
    all.insert(all.end(), a.begin(), a.end());
    const auto emb = provider.embed(all);
    if (emb.size() != all.size()) throw Error(ErrorCode::ProviderFailure, "provider returned wrong count");

    struct Pair {
        double sim;
        std::size_t i;
        std::size_t j;
    };
    std::vector<Pair> pairs;
    pairs.reserve(b.size() * a.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            pairs.push_back({cosine(emb[i], emb[b.size() + j]), i, j});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        return std::tie(x.i, x.j) < std::tie(y.i, y.j);
    });
    std::vector<bool> before_used(b.size(), false), after_used(a.size(), false);
    for (const auto& p : pairs) {
        if (before_used[p.i] || after_used[p.j]) continue;
        before_used[p.i] = after_used[p.j] = true;
        out[p.i].matched_after_sentence = a[p.j];
        out[p.i].similarity = p.sim;
        out[p.i].edit_class = band_for(p.sim);
    }
    return out;
}

void to_json(nlohmann::json& j, const EditRecord& e) {
    nlohmann::json sentences = nlohmann::json::array();
    for (const auto& s : e.sentence_classes) {
        sentences.push_back({{"before", s.before_sentence},
                             {"after", s.matched_after_sentence ? nlohmann::json(*s.matched_after_sentence)
                                                                : nlohmann::json()},
                             {"class", to_string(s.edit_class)},
                             {"similarity", s.similarity}});
    }
    j = nlohmann::json{{"user_id", e.user_id},
                       {"section", to_string(e.section)},
                       {"base_version", e.base_version},
                       {"before_text", e.before_text},
                       {"after_text", e.after_text},
                       {"timestamp", format_timestamp(e.timestamp)},
                       {"summary_class", to_string(e.summary_class)},
                       {"summary_similarity", e.summary_similarity},
                       {"sentence_classes", std::move(sentences)}};
}

void from_json(const nlohmann::json& j, EditRecord& e) {
    j.at("user_id").get_to(e.user_id);
    e.section = parse_section(j.at("section").get<std::string>());
    j.at("base_version").get_to(e.base_version);
    j.at("before_text").get_to(e.before_text);
    j.at("after_text").get_to(e.after_text);
    e.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
    e.summary_class = parse_edit_class(j.at("summary_class").get<std::string>());
    e.summary_similarity = j.value("summary_similarity", 0.0);
    e.sentence_classes.clear();
    for (const auto& s : j.value("sentence_classes", nlohmann::json::array())) {
        SentenceClass sc;
        s.at("before").get_to(sc.before_sentence);
        if (s.contains("after") && !s.at("after").is_null()) {
            sc.matched_after_sentence = s.at("after").get<std::string>();
        }
        sc.edit_class = parse_edit_class(s.at("class").get<std::string>());
        sc.similarity = s.value("similarity", 0.0);
        e.sentence_classes.push_back(std::move(sc));
    }
}

EditRecord make_edit_record(const UserId& user, Section section, std::int64_t base_version,
                            std::string before, std::string after, Timestamp when,
                            EmbeddingProvider& provider) {
    EditRecord e;
    e.user_id = user;
    e.section = section;
    e.base_version = base_version;
    e.timestamp = when;
    if (normalize_text(before).empty()) {
        // Nothing to compare against: any new text counts as a fresh authoring.
        e.summary_class = normalize_text(after).empty() ? EditClass::retained : EditClass::pruned;
        e.summary_similarity = normalize_text(after).empty() ? 1.0 : 0.0;
    } else {
        const auto c = classify(before, after, provider);
        e.summary_class = c.edit_class;
        e.summary_similarity = c.similarity;
        e.sentence_classes = classify_sentences(before, after, provider);
    }
    e.before_text = std::move(before);
    e.after_text = std::move(after);
    return e;
}

std::vector<WeeklyEditCount> weekly_edit_series(std::span<const EditRecord> edits,
                                                Timestamp experiment_start, int weeks,
                                                EditGranularity granularity) {
    using namespace std::chrono;
    std::map<std::tuple<int, Section, EditClass>, std::size_t> counts;
    for (const auto& e : edits) {
        if (e.timestamp < experiment_start) continue;
        const auto elapsed_days = duration_cast<days>(e.timestamp - experiment_start).count();
        const int week = static_cast<int>(elapsed_days / 7) + 1;
        if (week > weeks) continue;
        if (granularity == EditGranularity::summary) {
            ++counts[{week, e.section, e.summary_class}];
        } else {
            for (const auto& s : e.sentence_classes) ++counts[{week, e.section, s.edit_class}];
        }
    }
    std::vector<WeeklyEditCount> out;
    out.reserve(counts.size());
    for (const auto& [key, n] : counts) {
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), n});
    }
    return out;
}

std::string weekly_edit_csv(std::span<const WeeklyEditCount> rows) {
    std::string out = "week_index,section,class,count\n";
    for (const auto& r : rows) {
        out += std::to_string(r.week_index) + "," + std::string(to_string(r.section)) + "," +
               std::string(to_string(r.edit_class)) + "," + std::to_string(r.count) + "\n";
    }
    return out;
}

}  // namespace selfportrait
