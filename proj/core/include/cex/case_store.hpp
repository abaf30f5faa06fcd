#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "cex/explainer.hpp"
#include "cex/types.hpp"

namespace cex {

struct StoredCase {
    std::string id;
    Metadata meta;
    std::string image_file;  // relative to the store root
    ExplanationRecord record;
    std::string record_json;  // exactly as logged
};

// (sample id, model hash, bundle hash)
using CaseKey = std::tuple<std::string, std::string, std::string>;
using CaseIndex = std::map<CaseKey, std::size_t>;

// Append-only JSON-lines log of explained cases under `root`:
//   root/records.jsonl   one case per line
//   root/images/<id>.png uploaded bytes, verbatim
// The index is rebuilt by replaying the log; a torn trailing line is ignored.
class CaseStore {
public:
    explicit CaseStore(std::filesystem::path root, bool read_only = false);

    const std::filesystem::path& root() const noexcept { return root_; }
    bool read_only() const noexcept { return read_only_; }

    // Throws read_only on a read-only store and io when the write fails;
    // a failed write is rolled back so the log stays replayable.
    StoredCase append(std::span<const std::uint8_t> image_bytes, const ExplanationRecord& record,
                      const Metadata& meta = {});

    std::optional<StoredCase> find(const CaseKey& key) const;
    // Every logged case with this id, oldest first.
    std::vector<StoredCase> find_id(const std::string& id) const;
    std::vector<StoredCase> all() const;
    std::size_t size() const;
    CaseIndex index() const;

    std::vector<std::uint8_t> image_bytes(const StoredCase& c) const;

    // Replays the log from disk. Static form for the rebuild oracle.
    void reload();
    static std::vector<StoredCase> replay(const std::filesystem::path& log);
    static CaseIndex build_index(std::span<const StoredCase> cases);

private:
    std::filesystem::path log_path() const { return root_ / "records.jsonl"; }

    std::filesystem::path root_;
    bool read_only_ = false;
    mutable std::shared_mutex mutex_;
    std::mutex write_mutex_;
    std::vector<StoredCase> cases_;
    CaseIndex index_;
};

}  // namespace cex
