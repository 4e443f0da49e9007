#include "selfportrait/summarize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace selfportrait {

namespace {

std::string trim_copy(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

// Last line starting with `key` (e.g. "TAGS:"), returned without the key. The data lines
// follow any user context in the templates, so the last match wins.
std::optional<std::string> find_line(const std::string& prompt, std::string_view key) {
    std::istringstream in(prompt);
    std::string line;
    std::optional<std::string> found;
    while (std::getline(in, line)) {
        const auto t = trim_copy(line);
        if (t.rfind(key, 0) == 0) found = trim_copy(std::string_view(t).substr(key.size()));
    }
    return found;
}

// "Horror (5); Comedy (3)" -> {"Horror", "Comedy"}
std::vector<std::string> facet_values(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        auto end = line.find(';', pos);
        if (end == std::string::npos) end = line.size();
        auto item = trim_copy(std::string_view(line).substr(pos, end - pos));
        const auto paren = item.rfind(" (");
        if (paren != std::string::npos && !item.empty() && item.back() == ')') item.resize(paren);
        if (!item.empty()) out.push_back(std::move(item));
        pos = end + 1;
    }
    return out;
}

std::string phrase_list(const std::vector<std::string>& values) {
    if (values.size() <= 1) return values.empty() ? std::string() : values.front();
    return join(std::vector<std::string>(values.begin(), values.end() - 1), ", ") + " and " +
           values.back();
}

constexpr std::string_view kDefaultLongterm =
    "You are a movie-taste analyst helping a user reflect on their long-term interests.\n"
    "Below is a cluster of community tags drawn from movies the user {{polarity_phrase}}.\n"
    "Write exactly one sentence, addressed to the user, that names the shared theme and "
    "mentions at least one of the tags verbatim.\n"
    "{{context}}"
    "TASK: {{task}}\n"
    "TAGS: {{terms}}\n";

constexpr std::string_view kDefaultRecent =
    "You are a movie-taste analyst helping a user reflect on their recent interests.\n"
    "The table lists the most frequent facets of movies the user rated highly in the past "
    "year, with counts.\n"
    "Write exactly five sentences, one per facet, in the order given.\n"
    "{{context}}"
    "TASK: recent\n"
    "{{facet_table}}";

constexpr std::string_view kDefaultContext =
    "The user previously edited this part of their profile and wrote:\n"
    "\"\"\"\n"
    "{{user_context}}\n"
    "\"\"\"\n"
    "Keep the user's own wording where it still agrees with the data.\n";

std::string facet_label(Facet f) {
    switch (f) {
        case Facet::genre: return "GENRES";
        case Facet::actor: return "ACTORS";
        case Facet::director: return "DIRECTORS";
        case Facet::release_year: return "RELEASE YEARS";
        case Facet::language: return "LANGUAGES";
    }
    return "";
}

std::string render_context(const PromptTemplates& templates, const std::optional<std::string>& ctx) {
    if (!ctx || trim_copy(*ctx).empty()) return "";
    const std::pair<std::string, std::string> values[] = {{"user_context", *ctx}};
    return render_template(templates.context, values);
}

std::string recent_sentence(Facet f, const std::vector<std::string>& values) {
    if (values.empty()) {
        switch (f) {
            case Facet::genre: return "No particular genre stands out recently.";
            case Facet::actor: return "No particular actor stands out recently.";
            case Facet::director: return "No particular director stands out recently.";
            case Facet::release_year: return "Your recent favorites span no particular era.";
            case Facet::language: return "No particular language stands out recently.";
        }
    }
    const auto list = phrase_list(values);
    switch (f) {
        case Facet::genre: return "Lately you have favored genres such as " + list + ".";
        case Facet::actor: return "Your recent favorites often feature " + list + ".";
        case Facet::director: return "Films directed by " + list + " stand out in your recent ratings.";
        case Facet::release_year: return "You have been enjoying films released in " + list + ".";
        case Facet::language: return "Your recent favorites are mostly in " + list + ".";
    }
    return "";
}

}  // namespace

std::string MockSummaryProvider::complete(const std::string& prompt) {
    const auto task = find_line(prompt, "TASK:");
    if (!task) throw Error(ErrorCode::ProviderFailure, "mock provider: prompt has no TASK line");
    if (*task == "liked" || *task == "disliked") {
        const auto tags = find_line(prompt, "TAGS:").value_or("");
        if (*task == "liked") return "Movies featuring " + tags + " appeal to you.";
        return "Movies featuring " + tags + " are generally not favored.";
    }
    if (*task == "recent") {
        std::string out;
        for (Facet f : kAllFacets) {
            const auto line = find_line(prompt, facet_label(f) + ":").value_or("");
            if (!out.empty()) out += ' ';
            out += recent_sentence(f, facet_values(line));
        }
        return out;
    }
    throw Error(ErrorCode::ProviderFailure, "mock provider: unknown task '" + *task + "'");
}

PromptTemplates PromptTemplates::defaults() {
    return {std::string(kDefaultLongterm), std::string(kDefaultRecent), std::string(kDefaultContext)};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    auto t = defaults();
    auto read = [&](const char* name, std::string& target) {
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) return;
        std::ostringstream ss;
        ss << in.rdbuf();
        target = ss.str();
    };
    read("longterm.txt", t.longterm);
    read("recent.txt", t.recent);
    read("context.txt", t.context);
    return t;
}

std::string render_template(std::string_view tmpl,
                            std::span<const std::pair<std::string, std::string>> values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out.append(tmpl.substr(pos, open - pos));
        const auto key = tmpl.substr(open + 2, close - open - 2);
        auto it = std::find_if(values.begin(), values.end(),
                               [&](const auto& kv) { return kv.first == key; });
        if (it == values.end()) {
            out.append(tmpl.substr(open, close + 2 - open));
        } else {
            out.append(it->second);
        }
        pos = close + 2;
    }
    out.append(tmpl.substr(std::min(pos, tmpl.size())));
    return out;
}

const std::optional<std::string>& UserContext::for_section(Section s) const {
    switch (s) {
        case Section::recent: return recent;
        case Section::liked: return liked;
        case Section::disliked: return disliked;
    }
    return recent;
}

std::vector<InterestCluster> contrastive_filter(std::span<const InterestCluster> liked,
                                                std::span<const InterestCluster> disliked,
                                                double threshold) {
    std::vector<InterestCluster> kept;
    for (const auto& neg : disliked) {
        bool contradicts = false;
        for (const auto& pos : liked) {
            if (cosine(neg.centroid, pos.centroid) >= threshold) {
                contradicts = true;
                break;
            }
        }
        if (!contradicts) kept.push_back(neg);
    }
    return kept;
}

std::string first_sentence(std::string_view text) {
    std::string t = trim_copy(text);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const char c = t[i];
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == t.size() || std::isspace(static_cast<unsigned char>(t[i + 1])))) {
            t.resize(i + 1);
            break;
        }
    }
    // Collapse embedded newlines.
    std::replace(t.begin(), t.end(), '\n', ' ');
    if (!t.empty() && t.back() != '.' && t.back() != '!' && t.back() != '?') t.push_back('.');
    return t;
}

namespace {

std::string summarize_cluster(const InterestCluster& cluster, SummaryProvider& provider,
                              const PromptTemplates& templates,
                              const std::optional<std::string>& ctx, std::vector<std::string>& prompts) {
    const bool liked = cluster.polarity == Polarity::liked;
    const std::pair<std::string, std::string> values[] = {
        {"polarity_phrase", liked ? "rated highly" : "rated poorly"},
        {"task", std::string(to_string(cluster.polarity))},
        {"terms", join(cluster.top_terms, ", ")},
        {"context", render_context(templates, ctx)},
    };
    auto prompt = render_template(templates.longterm, values);
    auto answer = first_sentence(provider.complete(prompt));
    prompts.push_back(std::move(prompt));
    if (answer.empty()) throw Error(ErrorCode::ProviderFailure, "provider returned empty text");
    return answer;
}

}  // namespace

LongtermSummary generate_longterm(std::span<const InterestCluster> liked,
                                  std::span<const InterestCluster> disliked,
                                  SummaryProvider& provider, const PromptTemplates& templates,
                                  const UserContext& context, double contrastive_threshold) {
    if (liked.empty()) throw Error(ErrorCode::NoLikedClusters, "no liked clusters to summarize");
    LongtermSummary out;
    std::vector<std::string> sentences;
    for (const auto& c : liked) {
        auto s = summarize_cluster(c, provider, templates, context.liked, out.prompts);
        out.liked_sentences.push_back({s, c.id});
        sentences.push_back(std::move(s));
    }
    out.liked_summary = join(sentences, " ");

    sentences.clear();
    for (const auto& c : contrastive_filter(liked, disliked, contrastive_threshold)) {
        auto s = summarize_cluster(c, provider, templates, context.disliked, out.prompts);
        out.disliked_sentences.push_back({s, c.id});
        sentences.push_back(std::move(s));
    }
    out.disliked_summary = sentences.empty() ? std::string(kNoDislikesPlaceholder) : join(sentences, " ");
    return out;
}

std::string_view to_string(Facet f) {
    switch (f) {
        case Facet::genre: return "genre";
        case Facet::actor: return "actor";
        case Facet::director: return "director";
        case Facet::release_year: return "release_year";
        case Facet::language: return "language";
    }
    return "genre";
}

FacetTable facet_table(std::span<const MovieRecord> movies, std::size_t k) {
    std::array<std::map<std::string, std::size_t>, 5> counts;
    auto& genre = counts[static_cast<std::size_t>(Facet::genre)];
    auto& actor = counts[static_cast<std::size_t>(Facet::actor)];
    auto& director = counts[static_cast<std::size_t>(Facet::director)];
    auto& year = counts[static_cast<std::size_t>(Facet::release_year)];
    auto& language = counts[static_cast<std::size_t>(Facet::language)];
    for (const auto& m : movies) {
        for (const auto& g : m.genres) {
            if (g != "(no genres listed)") ++genre[g];
        }
        for (const auto& a : m.actors) ++actor[a];
        for (const auto& d : m.directors) ++director[d];
        if (m.release_year != 0) ++year[std::to_string(m.release_year)];
        if (!m.language.empty()) ++language[m.language];
    }
    FacetTable table;
    for (std::size_t f = 0; f < counts.size(); ++f) {
        std::vector<FacetCount> all;
        for (const auto& [value, n] : counts[f]) all.push_back({value, n});
        std::stable_sort(all.begin(), all.end(),
                         [](const FacetCount& a, const FacetCount& b) { return a.count > b.count; });
        if (all.size() > k) all.resize(k);
        table.top[f] = std::move(all);
    }
    return table;
}

RecentSummary generate_recent(std::span<const MovieRecord> recent_movies, SummaryProvider& provider,
                              const PromptTemplates& templates,
                              const std::optional<std::string>& user_context) {
    if (recent_movies.empty()) throw Error(ErrorCode::EmptyRecentSet, "no recent highly rated movies");
    RecentSummary out;
    out.facets = facet_table(recent_movies);
    std::string table;
    for (Facet f : kAllFacets) {
        table += facet_label(f) + ":";
        const auto& values = out.facets[f];
        for (std::size_t i = 0; i < values.size(); ++i) {
            table += (i ? "; " : " ") + values[i].value + " (" + std::to_string(values[i].count) + ")";
        }
        table += '\n';
    }
    const std::pair<std::string, std::string> values[] = {
        {"facet_table", table},
        {"context", render_context(templates, user_context)},
    };
    out.prompt = render_template(templates.recent, values);
    out.text = trim_copy(provider.complete(out.prompt));
    if (out.text.empty()) throw Error(ErrorCode::ProviderFailure, "provider returned empty text");
    return out;
}

void to_json(nlohmann::json& j, const GenerationRecord& r) {
    j = nlohmann::json{{"user_id", r.user_id},
                       {"portrait_version", r.portrait_version},
                       {"input_cluster_ids", r.input_cluster_ids},
                       {"ratings_count_at_generation", r.ratings_count_at_generation},
                       {"user_context", r.user_context ? nlohmann::json(*r.user_context) : nlohmann::json()},
                       {"prompt_hash", r.prompt_hash},
                       {"generated_at", format_timestamp(r.generated_at)},
                       {"trigger", r.trigger}};
}

void from_json(const nlohmann::json& j, GenerationRecord& r) {
    j.at("user_id").get_to(r.user_id);
    j.at("portrait_version").get_to(r.portrait_version);
    r.input_cluster_ids = j.value("input_cluster_ids", std::vector<std::string>{});
    j.at("ratings_count_at_generation").get_to(r.ratings_count_at_generation);
    const auto ctx = j.find("user_context");
    r.user_context = (ctx == j.end() || ctx->is_null()) ? std::nullopt
                                                        : std::optional(ctx->get<std::string>());
    r.prompt_hash = j.value("prompt_hash", "");
    r.generated_at = parse_timestamp(j.at("generated_at").get<std::string>());
    r.trigger = j.value("trigger", "initial");
}

bool should_regenerate(const GenerationRecord& record, std::int64_t current_rating_count,
                       const RegenerationPolicy& policy, Timestamp now, Timestamp last_check) {
    if (now < last_check) {
        throw Error(ErrorCode::ClockSkew, format_timestamp(now) + " precedes last check " +
                                              format_timestamp(last_check));
    }
    if (current_rating_count < record.ratings_count_at_generation) {
        throw Error(ErrorCode::InvalidArgument, "rating count decreased since generation");
    }
    if (now - last_check < policy.cadence) return false;
    const std::int64_t delta = current_rating_count - record.ratings_count_at_generation;
    if (delta >= policy.absolute_threshold) return true;
    // Relative slack so that e.g. 0.1 * 30 still admits delta == 3.
    const double needed =
        policy.fraction_threshold * static_cast<double>(record.ratings_count_at_generation);
    return delta > 0 && static_cast<double>(delta) >= needed * (1.0 - 1e-12);
}

bool faithfulness_check(std::string_view summary_sentence, const InterestCluster& cluster) {
    const auto sentence = normalize_text(summary_sentence);
    if (sentence.empty()) return false;
    return std::any_of(cluster.top_terms.begin(), cluster.top_terms.end(), [&](const std::string& t) {
        const auto term = normalize_text(t);
        return !term.empty() && sentence.find(term) != std::string::npos;
    });
}

std::string stable_hash_hex(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::vector<TagOccurrence> tags_for(const std::vector<MovieId>& movies, const Catalog& catalog) {
    std::vector<TagOccurrence> out;
    for (const auto& id : movies) {
        const auto* tagged = catalog.find_tags(id);
        if (tagged && !tagged->top_tags.empty()) {
            for (const auto& t : tagged->top_tags) out.push_back({t.tag, id});
            continue;
        }
        if (const auto* movie = catalog.find_movie(id)) {
            for (const auto& g : movie->genres) {
                if (g != "(no genres listed)") out.push_back({g, id});
            }
        }
    }
    return out;
}

}  // namespace

GenerationResult generate_portrait(const GenerationRequest& request, const Catalog& catalog,
                                   EmbeddingProvider& embedder, SummaryProvider& summarizer,
                                   const PromptTemplates& templates,
                                   const ClusterOptions& cluster_options) {
    GenerationResult result;
    result.quartiles = extract_quartiles(request.ratings, request.reference_date);
    const auto& q = result.quartiles;

    const auto liked_tags = tags_for(q.liked_longterm, catalog);
    if (liked_tags.empty()) {
        throw Error(ErrorCode::NoLikedClusters, "liked movies carry no tags or genres");
    }
    result.liked_clusters = cluster_tags(liked_tags, embedder, Polarity::liked, cluster_options);
    const auto disliked_tags = q.degenerate() ? std::vector<TagOccurrence>{}
                                              : tags_for(q.disliked_longterm, catalog);
    if (!disliked_tags.empty()) {
        result.disliked_clusters =
            cluster_tags(disliked_tags, embedder, Polarity::disliked, cluster_options);
    }
    result.longterm = generate_longterm(result.liked_clusters, result.disliked_clusters, summarizer,
                                        templates, request.context);

    std::string recent_text(kNoRecentPlaceholder);
    std::string recent_prompt;
    std::vector<MovieRecord> recent_movies;
    for (const auto& id : q.liked_recent) {
        if (const auto* m = catalog.find_movie(id)) recent_movies.push_back(*m);
    }
    if (!recent_movies.empty()) {
        auto recent = generate_recent(recent_movies, summarizer, templates, request.context.recent);
        recent_text = std::move(recent.text);
        recent_prompt = std::move(recent.prompt);
    }

    Portrait& p = result.portrait;
    p.user_id = request.user_id;
    p.version = request.version;
    p.generated_at = request.generated_at;
    p.recent_summary = std::move(recent_text);
    p.liked_summary = result.longterm.liked_summary;
    p.disliked_summary = result.longterm.disliked_summary;
    for (Section s : kAllSections) {
        p.section_authors[static_cast<std::size_t>(s)] =
            request.context.for_section(s) ? Author::merged : Author::ai;
    }
    p.author = combined_author(p.section_authors);

    GenerationRecord& rec = result.record;
    rec.user_id = request.user_id;
    rec.portrait_version = request.version;
    for (const auto& c : result.liked_clusters) rec.input_cluster_ids.push_back(c.id);
    for (const auto& c : result.disliked_clusters) rec.input_cluster_ids.push_back(c.id);
    rec.ratings_count_at_generation = static_cast<std::int64_t>(request.ratings.size());
    if (!request.context.empty()) {
        std::string ctx;
        for (Section s : kAllSections) {
            if (const auto& text = request.context.for_section(s)) {
                ctx += "[" + std::string(to_string(s)) + "] " + *text + "\n";
            }
        }
        rec.user_context = ctx;
    }
    std::string all_prompts = recent_prompt;
    for (const auto& pr : result.longterm.prompts) all_prompts += "\x1e" + pr;
    rec.prompt_hash = stable_hash_hex(all_prompts);
    rec.generated_at = request.generated_at;
    rec.trigger = request.trigger;
    return result;
}

}  // namespace selfportrait
