#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "finest/run.hpp"
#include "finest/study.hpp"

namespace finest {

struct ApiResponse {
    int status = 200;
    std::string body;  // JSON, or empty for 204
};

/// Transport-independent handlers for the annotation API. Task payloads are
/// the blinded AnnotationTask records; the ledger never leaves this class.
class AnnotationService {
public:
    AnnotationService(std::vector<AnnotationTask> tasks, std::vector<LedgerEntry> ledger, VoteStore& votes,
                      int panel_size = 3);

    /// GET /api/annotator/{id}/next: the first task this annotator has not
    /// voted on that still needs votes; 204 when none is left.
    ApiResponse next_task(std::string_view annotator_id) const;
    /// POST /api/annotator/{id}/vote.
    ApiResponse submit_vote(std::string_view annotator_id, std::string_view body);
    /// GET /api/progress.
    ApiResponse progress() const;
    /// GET /api/report: 425 until every task has panel_size votes.
    ApiResponse report() const;

    /// Routes (method, path) to the handlers above; 404 otherwise.
    ApiResponse handle(std::string_view method, std::string_view path, std::string_view body);

    bool complete() const;
    int panel_size() const noexcept { return panel_size_; }

private:
    std::vector<AnnotationTask> tasks_;
    std::vector<LedgerEntry> ledger_;
    std::map<std::string, std::size_t> index_;
    VoteStore& votes_;
    int panel_size_;
};

/// Serves an AnnotationService over HTTP, plus optional static UI files.
class AnnotationServer {
public:
    AnnotationServer(AnnotationService& service, std::optional<std::filesystem::path> ui_dir = std::nullopt);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds (port 0 picks a free one) and serves on a background thread.
    /// Returns the bound port.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
};

/// Serves the annotation API for a run's tasks until interrupted; votes go
/// to votes.jsonl in the run directory.
void serve_study(RunContext& run, const std::string& host, int port,
                 const std::optional<std::filesystem::path>& ui_dir);

}  // namespace finest
