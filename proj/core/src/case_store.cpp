#include "cex/case_store.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cex/error.hpp"
#include "cex/image_io.hpp"

namespace cex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string case_line(const StoredCase& c) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["image"] = c.image_file;
    j["meta"] = c.meta;
    j["record"] = nlohmann::ordered_json::parse(c.record_json);
    return j.dump();
}

StoredCase parse_line(const std::string& line) {
    const json j = json::parse(line);
    StoredCase c;
    c.id = j.at("id").get<std::string>();
    c.image_file = j.at("image").get<std::string>();
    c.meta = j.at("meta").get<Metadata>();
    c.record_json = j.at("record").dump();
    c.record = record_from_json(c.record_json);
    c.record_json = record_to_json(c.record);
    return c;
}

// Length of the log up to and including its last newline.
std::uintmax_t complete_length(const fs::path& log) {
    std::ifstream in(log, std::ios::binary | std::ios::ate);
    if (!in) return 0;
    std::streamoff n = in.tellg();
    char ch = 0;
    while (n > 0) {
        in.seekg(n - 1);
        in.get(ch);
        if (ch == '\n') break;
        --n;
    }
    return static_cast<std::uintmax_t>(n);
}

}  // namespace

CaseStore::CaseStore(fs::path root, bool read_only) : root_(std::move(root)), read_only_(read_only) {
    if (!read_only_) {
        std::error_code ec;
        fs::create_directories(root_ / "images", ec);
        if (ec) fail(Errc::io, "cannot create case store at " + root_.string() + ": " + ec.message());
    }
    reload();
}

std::vector<StoredCase> CaseStore::replay(const fs::path& log) {
    std::vector<StoredCase> cases;
    std::ifstream in(log, std::ios::binary);
    if (!in) return cases;
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) break;  // torn tail from an interrupted append
        ++line_no;
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        try {
            cases.push_back(parse_line(line));
        } catch (const std::exception& e) {
            fail(Errc::parse, log.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cases;
}

CaseIndex CaseStore::build_index(std::span<const StoredCase> cases) {
    CaseIndex index;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& r = cases[i].record;
        index[{cases[i].id, r.model_hash, r.bundle_hash}] = i;
    }
    return index;
}

void CaseStore::reload() {
    auto cases = replay(log_path());
    auto index = build_index(cases);
    std::unique_lock lock(mutex_);
    cases_ = std::move(cases);
    index_ = std::move(index);
}

StoredCase CaseStore::append(std::span<const std::uint8_t> image_bytes, const ExplanationRecord& record,
                             const Metadata& meta) {
    if (read_only_) fail(Errc::read_only, "case store is read-only");
    if (record.sample_id.empty()) fail(Errc::validation, "case record has no sample id");

    StoredCase c;
    c.id = record.sample_id;
    c.meta = meta;
    c.image_file = "images/" + c.id + ".png";
    c.record = record;
    c.record_json = record_to_json(record);
    const std::string line = case_line(c) + "\n";

    std::lock_guard writer(write_mutex_);
    const fs::path image_path = root_ / c.image_file;
    if (!fs::exists(image_path)) write_file(image_path.string(), image_bytes);

    std::error_code ec;
    auto before = fs::exists(log_path()) ? fs::file_size(log_path(), ec) : 0;
    if (before > 0) {
        const auto complete = complete_length(log_path());
        if (complete != before) {
            fs::resize_file(log_path(), complete, ec);  // drop a torn tail before appending
            if (ec) fail(Errc::io, "cannot repair " + log_path().string() + ": " + ec.message());
            before = complete;
        }
    }
    {
        std::ofstream out(log_path(), std::ios::binary | std::ios::app);
        out.write(line.data(), static_cast<std::streamsize>(line.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::resize_file(log_path(), before, ec);
            fail(Errc::io, "failed to append to " + log_path().string());
        }
    }

    std::unique_lock lock(mutex_);
    cases_.push_back(c);
    index_[{c.id, record.model_hash, record.bundle_hash}] = cases_.size() - 1;
    return c;
}

std::optional<StoredCase> CaseStore::find(const CaseKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return cases_[it->second];
}

std::vector<StoredCase> CaseStore::find_id(const std::string& id) const {
    std::shared_lock lock(mutex_);
    std::vector<StoredCase> out;
    for (const auto& c : cases_) {
        if (c.id == id) out.push_back(c);
    }
    return out;
}

std::vector<StoredCase> CaseStore::all() const {
    std::shared_lock lock(mutex_);
    return cases_;
}

std::size_t CaseStore::size() const {
    std::shared_lock lock(mutex_);
    return cases_.size();
}

CaseIndex CaseStore::index() const {
    std::shared_lock lock(mutex_);
    return index_;
}

std::vector<std::uint8_t> CaseStore::image_bytes(const StoredCase& c) const {
    return read_file((root_ / c.image_file).string());
}

}  // namespace cex
