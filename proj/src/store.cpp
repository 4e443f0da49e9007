#include "selfportrait/store.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace selfportrait {

namespace fs = std::filesystem;

Store::Store(fs::path dir)
    : dir_(std::move(dir)),
      portraits_(dir_ / kPortraits),
      edits_(dir_ / kEdits),
      events_(dir_ / kEvents),
      generations_(dir_ / kGenerations) {}

namespace {

template <class T>
std::vector<T> decode_all(const fs::path& path) {
    std::vector<T> out;
    std::size_t line = 0;
    for (const auto& j : jsonl::read_all(path)) {
        ++line;
        try {
            out.push_back(j.get<T>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaViolation,
                        path.filename().string() + " record " + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

void keep_highest(std::map<UserId, Portrait>& latest, Portrait p) {
    auto it = latest.find(p.user_id);
    if (it == latest.end()) {
        latest.emplace(p.user_id, std::move(p));
    } else if (p.version > it->second.version) {
        it->second = std::move(p);
    }
}

}  // namespace

Store::State Store::replay() {
    State state;
    std::size_t covered = 0;
    const auto snapshot_path = dir_ / kSnapshot;
    if (std::ifstream in(snapshot_path); in) {
        try {
            const auto snap = nlohmann::json::parse(in);
            covered = snap.at("portrait_lines").get<std::size_t>();
            for (const auto& p : snap.at("portraits")) keep_highest(state.portraits, p.get<Portrait>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, std::string("snapshot.json: ") + e.what());
        }
    }
    const auto lines = jsonl::read_all(dir_ / kPortraits);
    if (covered > lines.size()) covered = 0;  // log was replaced; trust the log
    for (std::size_t i = covered; i < lines.size(); ++i) {
        try {
            keep_highest(state.portraits, lines[i].get<Portrait>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, "portraits.jsonl record " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    portrait_lines_ = lines.size();

    for (auto& r : decode_all<GenerationRecord>(dir_ / kGenerations)) {
        auto it = state.generations.find(r.user_id);
        if (it == state.generations.end() || r.portrait_version >= it->second.portrait_version) {
            state.generations.insert_or_assign(r.user_id, std::move(r));
        }
    }
    state.edits = decode_all<EditRecord>(dir_ / kEdits);
    state.events = decode_all<InteractionEvent>(dir_ / kEvents);
    return state;
}

void Store::append_portrait(const Portrait& p) {
    portraits_.append(p);
    ++portrait_lines_;
}

void Store::append_edit(const EditRecord& e) { edits_.append(e); }
void Store::append_event(const InteractionEvent& e) { events_.append(e); }
void Store::append_generation(const GenerationRecord& r) { generations_.append(r); }

void Store::write_snapshot(const std::map<UserId, Portrait>& latest, std::size_t lines) {
    nlohmann::json portraits = nlohmann::json::array();
    for (const auto& [id, p] : latest) portraits.push_back(p);
    const nlohmann::json snap{{"portrait_lines", lines}, {"portraits", std::move(portraits)}};
    const auto tmp = dir_ / (std::string(kSnapshot) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out << snap.dump() << '\n';
        out.flush();
        if (!out) throw Error(ErrorCode::IoError, "snapshot write failed");
    }
    fs::rename(tmp, dir_ / kSnapshot);
}

std::vector<Portrait> Store::history(const UserId& user) const {
    std::vector<Portrait> out;
    for (const auto& j : jsonl::read_all(dir_ / kPortraits)) {
        if (j.value("user_id", std::string()) == user) out.push_back(j.get<Portrait>());
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.version < b.version; });
    return out;
}

}  // namespace selfportrait
