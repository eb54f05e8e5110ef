#include "mmc/manifest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <fstream>

#include "mmc/errors.hpp"

namespace mmc {
namespace {

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

RunManifest::RunManifest(std::filesystem::path run_dir, std::string run_id)
    : run_dir_(std::move(run_dir)), run_id_(std::move(run_id)) {
    std::filesystem::create_directories(run_dir_);
}

void RunManifest::append(nlohmann::json record) {
    record["run_id"] = run_id_;
    record["timestamp"] = timestamp_now();
    std::ofstream out(run_dir_ / "manifest.jsonl", std::ios::app);
    if (!out)
        throw Error(ErrorCode::io_error, "cannot append manifest in " + run_dir_.string());
    out << record.dump() << '\n';
}

void RunManifest::begin(const nlohmann::json& meta) {
    nlohmann::json record{{"event", "run_started"}};
    record["meta"] = meta;
    append(std::move(record));
}

void RunManifest::record_stage(const StageRecord& record) {
    for (const auto& artifact : record.artifacts) {
        if (!std::filesystem::exists(artifact))
            throw Error(ErrorCode::io_error,
                        "stage '" + record.stage + "' lists missing artifact " + artifact);
    }
    nlohmann::json doc{{"event", "stage"},
                       {"stage", record.stage},
                       {"status", record.status},
                       {"detail", record.detail},
                       {"artifacts", record.artifacts}};
    if (!record.data.empty()) doc["data"] = record.data;
    append(std::move(doc));
}

void RunManifest::finish(bool success, const nlohmann::json& summary) {
    nlohmann::json record{{"event", "run_finished"}, {"success", success}};
    record["summary"] = summary;
    append(std::move(record));
}

std::vector<nlohmann::json> RunManifest::read(const std::filesystem::path& run_dir) {
    std::vector<nlohmann::json> records;
    std::ifstream in(run_dir / "manifest.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            records.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception&) {
        }
    }
    return records;
}

RunLock::RunLock(const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    const auto lock_path = run_dir / ".lock";
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw Error(ErrorCode::io_error, "cannot open lock file " + lock_path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw Error(ErrorCode::stage_failure,
                    "run directory is locked by another process: " + run_dir.string());
    }
}

RunLock::~RunLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

} // namespace mmc
