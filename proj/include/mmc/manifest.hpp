#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace mmc {

/// One pipeline stage outcome. Artifacts listed here must exist on disk when
/// the record is appended.
struct StageRecord {
    std::string stage;
    std::string status; // "done" | "cached" | "skipped" | "failed"
    std::string detail;
    std::vector<std::string> artifacts;
    nlohmann::json data = nlohmann::json::object();
};

/// Append-only run journal (manifest.jsonl in the run directory): a run
/// header, one record per stage, and a closing record. Rewriting history is
/// not supported on purpose.
class RunManifest {
public:
    RunManifest(std::filesystem::path run_dir, std::string run_id);

    const std::string& run_id() const { return run_id_; }
    const std::filesystem::path& run_dir() const { return run_dir_; }

    void begin(const nlohmann::json& meta);
    void record_stage(const StageRecord& record);
    void finish(bool success, const nlohmann::json& summary);

    /// All journal records, oldest first.
    static std::vector<nlohmann::json> read(const std::filesystem::path& run_dir);

private:
    void append(nlohmann::json record);

    std::filesystem::path run_dir_;
    std::string run_id_;
};

/// Advisory exclusive lock on a run directory, released when the holder goes
/// away (flock semantics survive crashes).
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& run_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    int fd_ = -1;
};

} // namespace mmc
