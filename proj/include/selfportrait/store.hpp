#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <vector>

#include "selfportrait/core.hpp"
#include "selfportrait/edits.hpp"
#include "selfportrait/jsonl.hpp"
#include "selfportrait/metrics.hpp"
#include "selfportrait/summarize.hpp"

namespace selfportrait {

// On-disk layout of a store directory:
//   portraits.jsonl    every portrait version ever written
//   edits.jsonl        classified edit records
//   events.jsonl       interaction events
//   generations.jsonl  generation records
//   snapshot.json      latest portraits plus the portraits.jsonl line count they cover
class Store {
public:
    explicit Store(std::filesystem::path dir);

    struct State {
        std::map<UserId, Portrait> portraits;  // highest version per user
        std::map<UserId, GenerationRecord> generations;  // latest per user
        std::vector<EditRecord> edits;
        std::vector<InteractionEvent> events;
    };

    // Snapshot, then the portrait log tail past the snapshot; a full scan when no snapshot.
    State replay();

    void append_portrait(const Portrait& p);
    void append_edit(const EditRecord& e);
    void append_event(const InteractionEvent& e);
    void append_generation(const GenerationRecord& r);

    // `latest` must reflect every one of the first `lines` portrait records. Written to a
    // temporary file and renamed into place.
    void write_snapshot(const std::map<UserId, Portrait>& latest, std::size_t lines);

    std::size_t portrait_lines() const noexcept { return portrait_lines_.load(); }
    std::vector<Portrait> history(const UserId& user) const;
    const std::filesystem::path& dir() const noexcept { return dir_; }

    static constexpr const char* kPortraits = "portraits.jsonl";
    static constexpr const char* kEdits = "edits.jsonl";
    static constexpr const char* kEvents = "events.jsonl";
    static constexpr const char* kGenerations = "generations.jsonl";
    static constexpr const char* kSnapshot = "snapshot.json";

private:
    std::filesystem::path dir_;
    std::atomic<std::size_t> portrait_lines_{0};
    jsonl::Appender portraits_;
    jsonl::Appender edits_;
    jsonl::Appender events_;
    jsonl::Appender generations_;
};

}  // namespace selfportrait
