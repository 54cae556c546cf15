#include "finest/annotation_service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <regex>

#include <spdlog/spdlog.h>

#include "finest/stages.hpp"

namespace finest {

namespace {

ApiResponse json_response(int status, const json& body) { return {status, body.dump()}; }

ApiResponse error_response(int status, const std::string& message) {
    return json_response(status, {{"error", message}});
}

bool valid_annotator(std::string_view id) {
    if (id.empty() || id.size() > 64) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-' || c == '.';
    });
}

}  // namespace

AnnotationService::AnnotationService(std::vector<AnnotationTask> tasks, std::vector<LedgerEntry> ledger,
                                     VoteStore& votes, int panel_size)
    : tasks_(std::move(tasks)), ledger_(std::move(ledger)), votes_(votes), panel_size_(panel_size) {
    if (panel_size_ < 1) throw Error(Errc::invalid_argument, "panel size must be at least 1");
    if (tasks_.size() != ledger_.size()) throw Error(Errc::invalid_argument, "tasks and ledger differ in length");
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        if (tasks_[i].task_id != ledger_[i].task_id) {
            throw Error(Errc::invalid_argument, "ledger row " + std::to_string(i + 1) + " does not match its task");
        }
        index_[tasks_[i].task_id] = i;
    }
}

ApiResponse AnnotationService::next_task(std::string_view annotator_id) const {
    if (!valid_annotator(annotator_id)) return error_response(400, "invalid annotator id");
    const std::string id(annotator_id);
    for (const auto& task : tasks_) {
        if (votes_.has_voted(id, task.task_id)) continue;
        if (votes_.count_for(task.task_id) >= static_cast<std::size_t>(panel_size_)) continue;
        return json_response(200, task.to_json());
    }
    return {204, ""};
}

ApiResponse AnnotationService::submit_vote(std::string_view annotator_id, std::string_view body) {
    if (!valid_annotator(annotator_id)) return error_response(400, "invalid annotator id");
    json payload = json::parse(body, nullptr, false);
    if (payload.is_discarded() || !payload.is_object()) return error_response(400, "body must be a JSON object");
    payload["annotator_id"] = std::string(annotator_id);
    try {
        const Vote vote = Vote::from_json(payload);
        if (!index_.count(vote.task_id)) return error_response(404, "unknown task");
        votes_.submit(vote);
        return json_response(200, {{"accepted", true}});
    } catch (const Error& ex) {
        if (ex.code() == Errc::vote_conflict) return error_response(409, "a different vote for this task exists");
        if (ex.code() == Errc::io_error) return error_response(500, "vote could not be stored");
        return error_response(400, ex.what());
    }
}

ApiResponse AnnotationService::progress() const {
    std::size_t fully = 0;
    for (const auto& task : tasks_) {
        if (votes_.count_for(task.task_id) >= static_cast<std::size_t>(panel_size_)) ++fully;
    }
    json per_annotator = json::object();
    for (const auto& v : votes_.votes()) {
        if (!index_.count(v.task_id)) continue;
        per_annotator[v.annotator_id] = per_annotator.value(v.annotator_id, 0) + 1;
    }
    return json_response(200, {{"tasks_total", tasks_.size()},
                               {"tasks_fully_voted", fully},
                               {"per_annotator_counts", per_annotator}});
}

bool AnnotationService::complete() const {
    return std::all_of(tasks_.begin(), tasks_.end(), [&](const AnnotationTask& t) {
        return votes_.count_for(t.task_id) >= static_cast<std::size_t>(panel_size_);
    });
}

ApiResponse AnnotationService::report() const {
    if (!complete()) return error_response(425, "not every task has its full panel of votes yet");
    try {
        return json_response(200, study_report(ledger_, votes_.votes()).to_json(false));
    } catch (const Error& ex) {
        return error_response(500, ex.what());
    }
}

ApiResponse AnnotationService::handle(std::string_view method, std::string_view path, std::string_view body) {
    static const std::regex kAnnotator(R"(^/api/annotator/([^/]+)/(next|vote)$)");
    const std::string p(path);
    std::smatch m;
    if (std::regex_match(p, m, kAnnotator)) {
        if (m[2] == "next" && method == "GET") return next_task(m[1].str());
        if (m[2] == "vote" && method == "POST") return submit_vote(m[1].str(), body);
        return error_response(405, "method not allowed");
    }
    if (p == "/api/progress" && method == "GET") return progress();
    if (p == "/api/report" && method == "GET") return report();
    return error_response(404, "not found");
}

// ---------------------------------------------------------------------------
// HTTP binding

struct AnnotationServer::Impl {
    AnnotationService& service;
    httplib::Server server;
    explicit Impl(AnnotationService& s) : service(s) {}
};

AnnotationServer::AnnotationServer(AnnotationService& service, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(service)) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        const ApiResponse out = impl_->service.handle(req.method, req.path, req.body);
        res.status = out.status;
        if (out.status != 204) res.set_content(out.body, "application/json");
    };
    impl_->server.Get(R"(/api/.*)", forward);
    impl_->server.Post(R"(/api/.*)", forward);
    if (ui_dir) {
        if (!impl_->server.set_mount_point("/", ui_dir->string())) {
            throw Error(Errc::io_error, "UI directory " + ui_dir->string() + " does not exist");
        }
    }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound <= 0) throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    spdlog::info("annotation service listening on {}:{}", host, bound);
    return bound;
}

void AnnotationServer::run(const std::string& host, int port) {
    spdlog::info("annotation service listening on {}:{}", host, port);
    if (!impl_->server.listen(host, port)) throw Error(Errc::io_error, "cannot listen on " + host + ":" + std::to_string(port));
}

void AnnotationServer::stop() {
    if (impl_) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

void serve_study(RunContext& run, const std::string& host, int port,
                 const std::optional<std::filesystem::path>& ui_dir) {
    auto tasks = load_tasks(run.file("tasks.jsonl"));
    auto ledger = load_ledger(run.file("ledger.jsonl"));
    VoteStore store(run.file("votes.jsonl"));
    AnnotationService service(std::move(tasks), std::move(ledger), store, run.config().study.panel_size);
    AnnotationServer server(service, ui_dir);
    server.run(host, port);
}

}  // namespace finest
