#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace selfportrait::jsonl {

// Missing file reads as empty. A truncated final line (torn write) is ignored;
// any other unparsable line throws SchemaViolation.
std::vector<nlohmann::json> read_all(const std::filesystem::path& path);

void write_all(const std::filesystem::path& path, std::span<const nlohmann::json> records);

// Append-only writer; each append is one flushed line.
class Appender {
public:
    explicit Appender(std::filesystem::path path);

    void append(const nlohmann::json& record);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
    std::ofstream out_;
};

}  // namespace selfportrait::jsonl
