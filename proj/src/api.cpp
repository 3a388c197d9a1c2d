// SPDX-License-Identifier: Apache-2.0
#include "trainscan/net/api.hpp"

#include "trainscan/codec.hpp"
#include "trainscan/diel.hpp"
#include "trainscan/error.hpp"

#include <httplib.h>

#include <charconv>
#include <fstream>
#include <sstream>

namespace trainscan::net {

using codec::json;

std::string to_string(Permission p) {
    switch (p) {
    case Permission::read: return "read";
    case Permission::annotate: return "annotate";
    case Permission::submit: return "submit";
    }
    return "unknown";
}

namespace {

Permission permission_from(const std::string& s) {
    if (s == "read") return Permission::read;
    if (s == "annotate") return Permission::annotate;
    if (s == "submit") return Permission::submit;
    throw Error(ErrorCode::format, "unknown permission '" + s + "'");
}

std::set<Permission> permission_set(const json& j) {
    std::set<Permission> out;
    for (const auto& p : j) {
        out.insert(permission_from(p.get<std::string>()));
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

AccessPolicy AccessPolicy::open() { return AccessPolicy{}; }

AccessPolicy AccessPolicy::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

AccessPolicy AccessPolicy::from_json(const std::string& text) {
    AccessPolicy p;
    p.open_ = false;
    try {
        const json j = json::parse(text);
        p.default_ = permission_set(j.value("default", json::array({"read"})));
        const json clients = j.value("clients", json::object());
        for (const auto& [client, perms] : clients.items()) {
            p.clients_[client] = permission_set(perms);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::format, std::string("permissions file: ") + e.what());
    }
    return p;
}

bool AccessPolicy::allows(const std::string& client, Permission perm) const {
    if (open_) {
        return true;
    }
    const auto it = clients_.find(client);
    const auto& set = it == clients_.end() ? default_ : it->second;
    return set.count(perm) != 0;
}

// ---------------------------------------------------------------------------

namespace {

json info_json(const JobInfo& info) {
    json j{{"job_id", info.job_id},
           {"state", info.state},
           {"manifest", info.manifest},
           {"first_event_id", info.first_event_id},
           {"event_count", info.event_count},
           {"error", info.error}};
    if (info.status) {
        const json s = codec::to_json(*info.status);
        j["units_total"] = s.value("units_total", 0);
        j["units_done"] = s.value("units_done", 0);
        j["discarded_results"] = s.value("discarded_results", 0);
        j["workers"] = s.value("workers", json::array());
    }
    return j;
}

JobInfo info_from_json(const json& j) {
    JobInfo info;
    info.job_id = j.at("job_id").get<std::string>();
    info.state = j.at("state").get<std::string>();
    info.manifest = j.value("manifest", std::string());
    info.first_event_id = j.value("first_event_id", std::uint64_t{0});
    info.event_count = j.value("event_count", std::size_t{0});
    info.error = j.value("error", std::string());
    return info;
}

} // namespace

JobService::JobService(std::filesystem::path root, pipeline::AnalysisConfig default_config,
                       sched::LocalRunOptions run_options)
    : root_(std::move(root)), default_config_(std::move(default_config)), run_options_(run_options) {
    std::filesystem::create_directories(root_);
    store_ = std::make_unique<store::EventStore>(root_ / "events.tsv", root_ / "tag_journal.tsv");
    const auto index = root_ / "jobs.json";
    if (std::filesystem::exists(index)) {
        const json j = json::parse(read_file(index));
        for (const auto& item : j.at("jobs")) {
            Entry e;
            e.info = info_from_json(item);
            if (e.info.state == "queued" || e.info.state == "running") {
                e.info.state = "failed";
                e.info.error = "interrupted by a server restart";
            }
            jobs_.push_back(std::move(e));
        }
        next_id_ = j.value("next_id", jobs_.size() + 1);
    }
    runner_ = std::thread([this] { run_loop(); });
}

JobService::~JobService() { shutdown(); }

void JobService::shutdown() {
    {
        std::lock_guard lock(mutex_);
        if (stopping_) {
            return;
        }
        stopping_ = true;
        if (current_) {
            current_->fail("server shutting down");
        }
        cv_.notify_all();
    }
    if (runner_.joinable()) {
        runner_.join();
    }
}

void JobService::persist_locked() const {
    json list = json::array();
    for (const auto& e : jobs_) {
        list.push_back(info_json(e.info));
    }
    const json doc{{"format", "trainscan.jobs"}, {"version", 1}, {"next_id", next_id_}, {"jobs", list}};
    const auto path = root_ / "jobs.json";
    const auto tmp = root_ / "jobs.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << doc.dump(2) << '\n';
        if (!out) {
            throw Error(ErrorCode::io, "cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string JobService::submit(JobRequest request) {
    auto config = request.config ? *request.config : default_config_;
    if (request.local_workers < 0) {
        throw Error(ErrorCode::invalid_argument, "local_workers must not be negative");
    }
    if (!std::filesystem::is_regular_file(request.manifest)) {
        throw Error(ErrorCode::not_found, "no manifest at '" + request.manifest.string() + "'");
    }
    sched::Job job = sched::make_job(request.manifest, request.channels, std::move(config), request.chunking,
                                     request.span);
    job.validate();
    std::lock_guard lock(mutex_);
    if (stopping_) {
        throw Error(ErrorCode::invalid_argument, "the server is shutting down");
    }
    Entry e;
    e.info.job_id = "job-" + std::to_string(next_id_++);
    e.info.state = "queued";
    e.info.manifest = std::filesystem::absolute(request.manifest).string();
    job.job_id = e.info.job_id;
    job.manifest_path = std::filesystem::absolute(request.manifest);
    manifests_[e.info.manifest] = job.manifest;
    e.job = std::move(job);
    e.local_workers = request.local_workers;
    jobs_.push_back(std::move(e));
    queue_.push_back(jobs_.size() - 1);
    persist_locked();
    cv_.notify_all();
    return jobs_.back().info.job_id;
}

std::optional<JobInfo> JobService::info(const std::string& job_id) const {
    std::shared_ptr<sched::HeadNode> head;
    JobInfo out;
    {
        std::lock_guard lock(mutex_);
        const auto it = std::find_if(jobs_.begin(), jobs_.end(), [&](const Entry& e) { return e.info.job_id == job_id; });
        if (it == jobs_.end()) {
            return std::nullopt;
        }
        out = it->info;
        if (out.state == "running" && current_ && current_->job().job_id == job_id) {
            head = current_;
        }
    }
    if (head) {
        out.status = head->status();
    }
    return out;
}

std::vector<JobInfo> JobService::list() const {
    std::vector<std::string> ids;
    {
        std::lock_guard lock(mutex_);
        for (const auto& e : jobs_) {
            ids.push_back(e.info.job_id);
        }
    }
    std::vector<JobInfo> out;
    for (const auto& id : ids) {
        if (auto i = info(id)) {
            out.push_back(std::move(*i));
        }
    }
    return out;
}

std::shared_ptr<sched::HeadNode> JobService::current_head() const {
    std::lock_guard lock(mutex_);
    return current_;
}

bool JobService::wait_idle(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return queue_.empty() && !busy_; });
}

std::shared_ptr<const audio::RecordingManifest> JobService::manifest_for_event(std::uint64_t event_id) const {
    std::string path;
    {
        std::lock_guard lock(mutex_);
        for (const auto& e : jobs_) {
            if (e.info.event_count > 0 && event_id >= e.info.first_event_id &&
                event_id < e.info.first_event_id + e.info.event_count) {
                path = e.info.manifest;
            }
        }
        if (path.empty()) {
            return nullptr;
        }
        if (auto it = manifests_.find(path); it != manifests_.end()) {
            return it->second;
        }
    }
    auto loaded = std::make_shared<const audio::RecordingManifest>(audio::RecordingManifest::load(path));
    std::lock_guard lock(mutex_);
    return manifests_.emplace(path, std::move(loaded)).first->second;
}

std::vector<pipeline::FeatureRow> JobService::features(const std::string& job_id) const {
    const auto info = this->info(job_id);
    const auto path = root_ / (job_id + ".features.tsv");
    if (!info || info->state != "completed" || !std::filesystem::exists(path)) {
        return {};
    }
    return pipeline::load_features(path);
}

void JobService::run_loop() {
    while (true) {
        std::size_t index = 0;
        std::shared_ptr<sched::HeadNode> head;
        int local = 1;
        std::string job_id;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) {
                for (auto i : queue_) {
                    jobs_[i].info.state = "failed";
                    jobs_[i].info.error = "server shut down before the job ran";
                }
                queue_.clear();
                persist_locked();
                cv_.notify_all();
                return;
            }
            index = queue_.front();
            queue_.pop_front();
            busy_ = true;
            head = std::make_shared<sched::HeadNode>(*jobs_[index].job, run_options_.scheduler);
            current_ = head;
            jobs_[index].info.state = "running";
            local = jobs_[index].local_workers;
            job_id = jobs_[index].info.job_id;
            persist_locked();
        }
        try {
            if (!head->finished()) {
                if (local > 0) {
                    sched::run_local_workers(*head, local, run_options_);
                } else {
                    while (!head->wait_for(run_options_.monitor_interval)) {
                        head->check_timeouts();
                    }
                }
            }
        } catch (const std::exception& e) {
            head->fail(e.what());
        }
        std::vector<store::EventRecord> events;
        std::string error;
        try {
            auto merged = head->result();
            events = std::move(merged.events);
            pipeline::save_features(root_ / (job_id + ".features.tsv"), merged.features);
        } catch (const std::exception& e) {
            error = e.what();
        }
        std::uint64_t first = 0;
        if (error.empty()) {
            const auto n = events.size();
            try {
                store_->append(std::move(events));
                const auto snap = store_->snapshot();
                first = n == 0 ? 0 : (*snap)[snap->size() - n].event_id;
            } catch (const std::exception& e) {
                error = e.what();
            }
            std::lock_guard lock(mutex_);
            jobs_[index].info.event_count = error.empty() ? n : 0;
        }
        std::lock_guard lock(mutex_);
        auto& info = jobs_[index].info;
        info.status = head->status();
        info.state = error.empty() ? "completed" : "failed";
        info.error = error;
        info.first_event_id = first;
        jobs_[index].job.reset();
        current_.reset();
        busy_ = false;
        persist_locked();
        cv_.notify_all();
    }
}

// ---------------------------------------------------------------------------

bool EventFilter::matches(const store::EventRecord& e) const {
    if (t0 && e.end_utc <= *t0) return false;
    if (t1 && e.begin_utc >= *t1) return false;
    if (channel && e.channel != *channel) return false;
    if (tag) {
        if (*tag == diel::kUntagged ? e.tag.has_value() : e.tag != *tag) return false;
    }
    if (min_score && e.score < *min_score) return false;
    return true;
}

namespace {

struct HttpError {
    int status;
    std::string message;
};

template <typename T>
T parse_number(const std::string& name, const std::string& text) {
    T v{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
        throw HttpError{400, "invalid " + name + " '" + text + "'"};
    }
    return v;
}

UtcTime parse_time_param(const std::string& name, const std::string& text) {
    if (auto t = parse_iso8601(text)) {
        return *t;
    }
    throw HttpError{400, "invalid " + name + " '" + text + "' (expected ISO 8601)"};
}

EventFilter filter_from(const httplib::Request& req) {
    EventFilter f;
    if (req.has_param("t0")) f.t0 = parse_time_param("t0", req.get_param_value("t0"));
    if (req.has_param("t1")) f.t1 = parse_time_param("t1", req.get_param_value("t1"));
    if (f.t0 && f.t1 && !(*f.t0 < *f.t1)) {
        throw HttpError{400, "t0 must precede t1"};
    }
    if (req.has_param("channel")) f.channel = parse_number<int>("channel", req.get_param_value("channel"));
    if (req.has_param("tag")) {
        f.tag = req.get_param_value("tag");
        if (*f.tag != diel::kUntagged && !store::is_valid_tag(*f.tag)) {
            throw HttpError{400, "unknown tag code '" + *f.tag + "'"};
        }
    }
    if (req.has_param("min_score")) {
        f.min_score = parse_number<double>("min_score", req.get_param_value("min_score"));
    }
    return f;
}

/// "+HH:MM", "-HH:MM", "Z" or signed seconds.
Micros parse_tz(const std::string& text) {
    if (text.empty() || text == "Z" || text == "UTC") {
        return Micros{0};
    }
    if ((text[0] == '+' || text[0] == '-') && text.size() == 6 && text[3] == ':') {
        const int h = parse_number<int>("tz", text.substr(1, 2));
        const int m = parse_number<int>("tz", text.substr(4, 2));
        if (h > 14 || m > 59) {
            throw HttpError{400, "invalid tz '" + text + "'"};
        }
        const auto off = std::chrono::hours(h) + std::chrono::minutes(m);
        return text[0] == '-' ? -Micros(off) : Micros(off);
    }
    const auto s = parse_number<std::int64_t>("tz", text[0] == '+' ? text.substr(1) : text);
    if (s < -14 * 3600 || s > 14 * 3600) {
        throw HttpError{400, "invalid tz '" + text + "'"};
    }
    return std::chrono::seconds(s);
}

std::uint64_t id_from(const httplib::Request& req) {
    return parse_number<std::uint64_t>("event id", req.matches[1]);
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

int status_for(ErrorCode c) {
    switch (c) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::permission: return 403;
    case ErrorCode::io:
    case ErrorCode::job_failed: return 500;
    default: return 400;
    }
}

} // namespace

ApiServer::ApiServer(JobService& jobs, ApiOptions options)
    : jobs_(jobs), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw Error(ErrorCode::io, "cannot bind the API to " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void ApiServer::stop() {
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

void ApiServer::routes() {
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
    // Every handler runs behind the permission check and the error mapping.
    auto guard = [this](Permission need, Handler h) {
        return [this, need, h](const httplib::Request& req, httplib::Response& res) {
            const std::string client = req.get_header_value("X-Client-Id");
            try {
                if (!options_.policy.allows(client, need)) {
                    throw HttpError{403, "client '" + client + "' lacks " + to_string(need) + " permission"};
                }
                h(req, res);
            } catch (const HttpError& e) {
                send_json(res, json{{"error", e.message}, {"status", e.status}}, e.status);
            } catch (const Error& e) {
                const int status = status_for(e.code());
                send_json(res, json{{"error", e.what()}, {"code", std::string(to_string(e.code()))}, {"status", status}},
                          status);
            } catch (const json::exception& e) {
                send_json(res, json{{"error", std::string("malformed JSON body: ") + e.what()}, {"status", 400}}, 400);
            } catch (const std::exception& e) {
                send_json(res, json{{"error", e.what()}, {"status", 500}}, 500);
            }
        };
    };
    auto& s = *server_;

    s.Post("/jobs", guard(Permission::submit, [this](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        JobRequest r;
        r.manifest = body.at("manifest").get<std::string>();
        r.channels = body.value("channels", std::vector<int>{});
        if (body.contains("t0") || body.contains("t1")) {
            r.span = TimeSpan::make(parse_time_param("t0", body.at("t0").get<std::string>()),
                                    parse_time_param("t1", body.at("t1").get<std::string>()));
        }
        if (body.contains("config")) {
            r.config = pipeline::AnalysisConfig::from_json(body.at("config").dump());
        }
        if (body.contains("chunking")) {
            r.chunking.unit_core_s = body["chunking"].value("unit_core_s", r.chunking.unit_core_s);
            r.chunking.overlap_s = body["chunking"].value("overlap_s", r.chunking.overlap_s);
        }
        r.local_workers = body.value("local_workers", 1);
        const std::string id = jobs_.submit(std::move(r));
        send_json(res, info_json(*jobs_.info(id)), 202);
    }));

    s.Get("/jobs", guard(Permission::read, [this](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& info : jobs_.list()) {
            list.push_back(info_json(info));
        }
        send_json(res, json{{"jobs", list}});
    }));

    s.Get(R"(/jobs/([A-Za-z0-9_.-]+))", guard(Permission::read, [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto info = jobs_.info(id);
        if (!info) {
            throw HttpError{404, "unknown job '" + id + "'"};
        }
        json j = info_json(*info);
        if (req.get_param_value("events") == "1") {
            json events = json::array();
            const auto snap = jobs_.store().snapshot();
            for (const auto& e : *snap) {
                if (info->event_count > 0 && e.event_id >= info->first_event_id &&
                    e.event_id < info->first_event_id + info->event_count) {
                    events.push_back(codec::to_json(e));
                }
            }
            j["events"] = std::move(events);
        }
        if (req.get_param_value("features") == "1") {
            json rows = json::array();
            for (const auto& r : jobs_.features(id)) {
                rows.push_back(codec::to_json(r));
            }
            j["features"] = std::move(rows);
        }
        send_json(res, j);
    }));

    s.Get("/events", guard(Permission::read, [this](const httplib::Request& req, httplib::Response& res) {
        const EventFilter f = filter_from(req);
        const std::size_t limit = req.has_param("limit") ? parse_number<std::size_t>("limit", req.get_param_value("limit"))
                                                         : options_.default_limit;
        const std::size_t offset =
            req.has_param("offset") ? parse_number<std::size_t>("offset", req.get_param_value("offset")) : 0;
        const auto snap = jobs_.store().snapshot();
        json events = json::array();
        std::size_t total = 0;
        for (const auto& e : *snap) {
            if (!f.matches(e)) continue;
            if (total >= offset && total - offset < limit) {
                events.push_back(codec::to_json(e));
            }
            ++total;
        }
        send_json(res, json{{"total", total}, {"offset", offset}, {"limit", limit}, {"events", events}});
    }));

    s.Get(R"(/events/(\d+))", guard(Permission::read, [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = id_from(req);
        const auto e = jobs_.store().get(id);
        if (!e) {
            throw HttpError{404, "unknown event " + std::to_string(id)};
        }
        send_json(res, codec::to_json(*e));
    }));

    s.Get(R"(/events/(\d+)/thumbnail)", guard(Permission::read, [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = id_from(req);
        const auto e = jobs_.store().get(id);
        if (!e) {
            throw HttpError{404, "unknown event " + std::to_string(id)};
        }
        ThumbnailOptions opt;
        if (req.has_param("width")) opt.width = parse_number<int>("width", req.get_param_value("width"));
        if (req.has_param("height")) opt.height = parse_number<int>("height", req.get_param_value("height"));
        if (opt.width < 1 || opt.height < 1 || opt.width > 4096 || opt.height > 4096) {
            throw HttpError{400, "thumbnail size must be within 1..4096"};
        }
        auto manifest = jobs_.manifest_for_event(id);
        if (!manifest) manifest = options_.fallback_manifest;
        if (!manifest) {
            throw HttpError{404, "no recording manifest known for event " + std::to_string(id)};
        }
        res.set_content(encode_png(render_event(*manifest, *e, opt)), "image/png");
    }));

    s.Put(R"(/events/(\d+)/tag)", guard(Permission::annotate, [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = id_from(req);
        const json body = json::parse(req.body);
        const std::string tag = body.at("tag").get<std::string>();
        if (!store::is_valid_tag(tag)) {
            throw HttpError{400, "unknown tag code '" + tag + "'"};
        }
        std::string annotator = body.value("annotator", req.get_header_value("X-Client-Id"));
        if (annotator.empty()) annotator = "anonymous";
        send_json(res, codec::to_json(jobs_.store().set_tag(id, tag, annotator)));
    }));

    s.Get("/diel", guard(Permission::read, [this](const httplib::Request& req, httplib::Response& res) {
        const EventFilter f = filter_from(req);
        const bool layered = req.get_param_value("layered") == "1" || req.get_param_value("layered") == "true";
        const Micros tz = parse_tz(req.get_param_value("tz"));
        const int bins = req.has_param("bins") ? parse_number<int>("bins", req.get_param_value("bins")) : 24;
        if (bins < 1 || bins > 1440 || 86400 % bins != 0) {
            throw HttpError{400, "bins must divide a day into whole seconds (1..1440)"};
        }
        std::vector<store::EventRecord> events;
        const auto snap = jobs_.store().snapshot();
        std::copy_if(snap->begin(), snap->end(), std::back_inserter(events), [&](const auto& e) { return f.matches(e); });
        // The grid counts by begin time; events straddling t0 are counted where they begin.
        std::optional<TimeSpan> span = diel::begin_extent(events);
        if (f.t0 && f.t1) {
            const auto ext = span;
            span = TimeSpan{std::min(*f.t0, ext ? ext->t0 : *f.t0), std::max(*f.t1, ext ? ext->t1 : *f.t1)};
        }
        diel::DielGrid grid;
        grid.bins_per_day = bins;
        grid.tz_offset = tz;
        if (span) {
            grid = diel::aggregate_diel(events, *span, tz, layered, bins);
        }
        res.set_content(diel::export_diel(grid), "application/json");
    }));

    s.Get("/tags", guard(Permission::read, [](const httplib::Request&, httplib::Response& res) {
        json tags = json::array();
        for (const auto& t : store::kTagVocabulary) {
            tags.push_back({{"code", t.code}, {"description", t.description}, {"noise", store::is_noise_tag(t.code)}});
        }
        send_json(res, json{{"tags", tags}});
    }));
}

} // namespace trainscan::net
