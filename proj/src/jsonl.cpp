#include "selfportrait/jsonl.hpp"

#include <iterator>
#include <string>

#include "selfportrait/core.hpp"

namespace selfportrait::jsonl {

namespace fs = std::filesystem;

std::vector<nlohmann::json> read_all(const fs::path& path) {
    std::vector<nlohmann::json> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded()) {
            if (in.peek() == std::char_traits<char>::eof()) break;  // torn tail
            throw Error(ErrorCode::SchemaViolation,
                        path.filename().string() + " line " + std::to_string(line_no) +
                            ": invalid JSON");
        }
        out.push_back(std::move(parsed));
    }
    return out;
}

void write_all(const fs::path& path, std::span<const nlohmann::json> records) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& r : records) out << r.dump() << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

namespace {

// Drops an unterminated final line so the next append starts on a fresh line.
void repair_torn_tail(const fs::path& path) {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec || size == 0) return;
    std::ifstream in(path, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(size) - 1);
    if (in.get() == '\n') return;
    in.seekg(0);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto last_newline = content.rfind('\n');
    fs::resize_file(path, last_newline == std::string::npos ? 0 : last_newline + 1);
}

}  // namespace

Appender::Appender(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    repair_torn_tail(path_);
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error(ErrorCode::IoError, "cannot open " + path_.string());
}

void Appender::append(const nlohmann::json& record) {
    const std::string line = record.dump() + '\n';
    std::lock_guard lock(mutex_);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoError, "append failed for " + path_.string());
}

}  // namespace selfportrait::jsonl
