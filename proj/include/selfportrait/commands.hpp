#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "selfportrait/config.hpp"
#include "selfportrait/ingest.hpp"
#include "selfportrait/summarize.hpp"

namespace selfportrait {

// Process exit code for a domain error: 2 malformed input, 3 insufficient data, 1 otherwise.
int exit_code_for(ErrorCode code) noexcept;

struct GenerateOptions {
    std::optional<Timestamp> reference_date;  // default: latest rating timestamp
    std::optional<std::vector<UserId>> users;  // default: everyone with ratings
    std::size_t min_ratings = 20;
    std::size_t jobs = 1;
};

struct UserGeneration {
    UserId user_id;
    std::optional<GenerationResult> result;
    std::string skipped;  // reason when below the rating minimum
    std::string error;    // provider or pipeline failure
};

// One entry per requested user in user-id order, independent of `jobs`.
std::vector<UserGeneration> generate_all(const Dataset& dataset, EmbeddingProvider& embedder,
                                         SummaryProvider& summarizer, const PromptTemplates& templates,
                                         const ClusterOptions& clustering, const GenerateOptions& options);

// Full command line: ingest | generate | simulate | analyze | serve. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace selfportrait
