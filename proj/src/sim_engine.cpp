#include "tiered/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <ostream>
#include <queue>
#include <tuple>
#include <unordered_map>

#include "tiered/errors.hpp"
#include "tiered/prefetch.hpp"
#include "tiered/rng.hpp"

namespace tiered {

namespace {

constexpr std::uint64_t kTier1Stream = 100;
constexpr std::uint64_t kTier2Stream = 200;
constexpr std::uint64_t kEvictorStream = 300;
constexpr std::uint64_t kSharedTier2Stream = 400;

enum class EventType : std::uint8_t { Arrival, Tier1Done, Tier2Done };

struct Event {
    double t = 0.0;
    std::uint64_t seq = 0;
    EventType type = EventType::Arrival;
    std::size_t proc = 0;
    std::size_t item = 0;  // request index or job id
};

struct LaterFirst {
    bool operator()(const Event& a, const Event& b) const {
        return std::tie(a.t, a.seq) > std::tie(b.t, b.seq);
    }
};

enum class JobKind : std::uint8_t { Demand, Writeback, Prefetch };

struct Job {
    JobKind kind = JobKind::Demand;
    PageId page;
    std::size_t proc = 0;
    std::vector<std::size_t> waiters;  // requests answered by this fetch
    double enqueue_time = 0.0;
    bool steady = false;  // originated after warm-up
    bool in_service = false;
};

struct ProcessState {
    ProcessState(const SimConfig& cfg, std::size_t index)
        : cache(cfg.cache.n_lines),
          evictor(cfg.eviction, cfg.ensemble, derive_seed(cfg.seed, kEvictorStream + index)),
          sid(cfg.prefetch_history),
          buffer(cfg.prefetch_enabled ? cfg.prefetch_width : 0),
          tier1_rng(derive_seed(cfg.seed, kTier1Stream + index)),
          tier2_rng(derive_seed(cfg.seed, kTier2Stream + index)) {}

    Tier1Cache cache;
    Evictor evictor;
    StreamIdentifier sid;
    PrefetchBuffer buffer;
    Rng tier1_rng;
    Rng tier2_rng;

    std::deque<std::size_t> tier1_queue;
    std::uint32_t tier1_busy = 0;

    std::uint64_t demand_waiting = 0;

    std::unordered_map<PageId, std::size_t, PageIdHash> pending;  // page -> job
    std::vector<PageId> iteration_misses;
    std::uint64_t polled = 0;

    ProcessMetrics m;
    double response_sum = 0.0;
    double wait_sum = 0.0;
    std::uint64_t wait_count = 0;
    double queue_area = 0.0;
    double queue_mark = 0.0;
    std::uint64_t steady_misses = 0;
};

class Simulator {
public:
    Simulator(const SimConfig& cfg, std::span<const Request> trace) : cfg_(cfg), trace_(trace) {
        for (std::size_t p = 0; p < cfg.cache.n_processes; ++p) procs_.emplace_back(cfg, p);
        per_process_.resize(procs_.size());
        warmup_index_ = static_cast<std::size_t>(std::floor(cfg.warmup_fraction * static_cast<double>(trace.size())));
        if (!trace.empty()) {
            metrics_.arrival_span = trace.back().arrival_time - trace.front().arrival_time;
            window_start_ = warmup_index_ < trace.size() ? trace[warmup_index_].arrival_time
                                                          : trace.back().arrival_time;
            window_end_ = trace.back().arrival_time;
        }
        metrics_.warmup_end = window_start_;
        for (auto& p : procs_) p.queue_mark = window_start_;
        sample_interval_ = cfg.sample_interval > 0.0 ? cfg.sample_interval
                                                     : std::max(window_end_, 1e-9) / 256.0;
        hit_time_ = cfg.tier1_model ? per_request_seconds(load_paper_model(*cfg.tier1_model), cfg.tier1_model_x,
                                                         cfg.service_floor)
                                    : 0.0;
        miss_mean_ = cfg.tier2_model ? per_request_seconds(load_paper_model(*cfg.tier2_model),
                                                           cfg.tier2_model_x, cfg.service_floor)
                                     : 1.0 / cfg.miss_service_rate;
        if (cfg.tier2_mode == Tier2Mode::Shared) shared_rng_.emplace(derive_seed(cfg.seed, kSharedTier2Stream));
    }

    SimMetrics run() {
        if (cfg_.prewarm) prewarm();
        if (cfg_.timing == Timing::Functional) {
            for (std::size_t i = 0; i < trace_.size(); ++i) functional_access(i);
        } else {
            run_events();
        }
        finish();
        return std::move(metrics_);
    }

private:
    PageId page_id(const Request& r) const {
        return PageId{r.file_id, page_of(r.offset, cfg_.cache.line_size)};
    }

    std::size_t owner(const PageId& page) const { return map_page(page.page, cfg_.cache); }

    std::uint64_t tick() { return ++tick_; }

    void prewarm() {
        for (const Request& r : trace_) {
            const PageId page = page_id(r);
            ProcessState& p = procs_[owner(page)];
            if (!p.cache.full() && !p.cache.contains(page))
                p.cache.fill(page, tick(), [](const Tier1Cache&) -> PageId {
                    throw InvariantError("prewarm: eviction requested");
                });
        }
    }

    void check_single_copy(const PageId& page, std::size_t home) const {
        for (std::size_t q = 0; q < procs_.size(); ++q) {
            if (q != home && procs_[q].cache.contains(page))
                throw InvariantError("single-copy violated: page resident in two caches");
        }
    }

    // Installs `page` in process `proc`; dirty victims become tier-2 writes.
    void fill(std::size_t proc, const PageId& page, double now) {
        ProcessState& p = procs_[proc];
        if (cfg_.check_invariants) check_single_copy(page, proc);
        auto evicted = p.cache.fill(page, tick(), [&p](const Tier1Cache& c) { return p.evictor.select(c); });
        if (!evicted) return;
        ++p.m.evictions;
        if (!evicted->dirty) return;
        ++p.m.dirty_writebacks;
        if (cfg_.timing == Timing::Event) {
            const std::size_t id = new_job(JobKind::Writeback, evicted->page, proc, now, false);
            queue_for(proc, JobKind::Writeback).push_back(id);
            try_start_tier2(proc, now);
        }
    }

    void count_request(ProcessState& p, std::size_t index, const Request& r) {
        ++p.m.requests;
        if (r.kind == RequestKind::Read) {
            ++p.m.reads;
        } else {
            ++p.m.writes;
        }
        if (index >= warmup_index_) ++p.m.steady_requests;
    }

    void propose(std::size_t proc, double now) {
        ProcessState& p = procs_[proc];
        if (!cfg_.prefetch_enabled) return;
        std::vector<PageId> in_flight;
        for (const auto& [page, id] : p.pending) {
            if (jobs_[id].kind == JobKind::Prefetch) in_flight.push_back(page);
        }
        std::sort(in_flight.begin(), in_flight.end());
        for (const PageId& page : propose_prefetches(p.sid, p.buffer, p.cache, in_flight)) {
            // Prefetches follow the cache mapping; pages owned elsewhere are skipped.
            if (owner(page) != proc || p.pending.contains(page)) continue;
            ++p.m.prefetches_issued;
            ++p.buffer.issued;
            if (cfg_.timing == Timing::Functional) {
                p.buffer.insert(page);
                ++p.m.prefetches_landed;
                continue;
            }
            const std::size_t id = new_job(JobKind::Prefetch, page, proc, now, false);
            p.pending.emplace(page, id);
            queue_for(proc, JobKind::Prefetch).push_back(id);
        }
        if (cfg_.timing == Timing::Event) try_start_tier2(proc, now);
    }

    // ---- functional timing -------------------------------------------------

    void functional_access(std::size_t index) {
        const Request& r = trace_[index];
        const PageId page = page_id(r);
        const std::size_t proc = owner(page);
        ProcessState& p = procs_[proc];
        count_request(p, index, r);
        ++p.m.completed;
        functional_outcome(proc, index, page, r);
        maybe_end_iteration(p);
    }

    void functional_outcome(std::size_t proc, std::size_t index, const PageId& page, const Request& r) {
        ProcessState& p = procs_[proc];
        if (p.cache.access(page, r.kind, tick()) == AccessOutcome::Hit) {
            ++p.m.hits;
            return;
        }
        if (p.buffer.take(page)) {
            ++p.m.prefetch_hits;
            ++p.buffer.hits;
            fill(proc, page, 0.0);
            if (r.kind == RequestKind::Write) p.cache.mark_dirty(page);
            return;
        }
        ++p.m.misses;
        if (index >= warmup_index_) ++p.steady_misses;
        ++p.m.tier2_fetches;
        p.iteration_misses.push_back(page);
        p.sid.observe_miss(page);
        fill(proc, page, 0.0);
        if (r.kind == RequestKind::Write) p.cache.mark_dirty(page);
        propose(proc, 0.0);
    }

    // One polling iteration spans poll_requests requests of a process.
    void maybe_end_iteration(ProcessState& p) {
        if (++p.polled % cfg_.poll_requests != 0) return;
        p.evictor.end_iteration(p.iteration_misses);
        p.iteration_misses.clear();
    }

    // ---- event timing ------------------------------------------------------

    void schedule(double t, EventType type, std::size_t proc, std::size_t item) {
        events_.push(Event{t, seq_++, type, proc, item});
    }

    std::size_t new_job(JobKind kind, const PageId& page, std::size_t proc, double now, bool steady) {
        Job job;
        job.kind = kind;
        job.page = page;
        job.proc = proc;
        job.enqueue_time = now;
        job.steady = steady;
        jobs_.push_back(std::move(job));
        return jobs_.size() - 1;
    }

    std::deque<std::size_t>& queue_for(std::size_t proc, JobKind kind) {
        auto& owner_queues = cfg_.tier2_mode == Tier2Mode::Shared ? shared_ : per_process_[proc];
        switch (kind) {
            case JobKind::Demand: return owner_queues.demand;
            case JobKind::Writeback: return owner_queues.writeback;
            case JobKind::Prefetch: return owner_queues.prefetch;
        }
        throw InvariantError("queue_for: unhandled job kind");
    }

    struct TierQueues {
        std::deque<std::size_t> demand;
        std::deque<std::size_t> writeback;
        std::deque<std::size_t> prefetch;
        std::uint32_t busy = 0;
    };

    void account_queue(ProcessState& p, double now) {
        const double from = std::max(p.queue_mark, window_start_);
        const double to = std::min(now, window_end_);
        if (to > from) p.queue_area += static_cast<double>(p.demand_waiting) * (to - from);
        p.queue_mark = std::max(p.queue_mark, now);
    }

    void sample_until(double t) {
        while (next_sample_ <= t && next_sample_ <= window_end_) {
            for (std::size_t q = 0; q < procs_.size(); ++q)
                metrics_.miss_queue_series.push_back({next_sample_, q, procs_[q].demand_waiting});
            next_sample_ += sample_interval_;
        }
    }

    void run_events() {
        if (trace_.empty()) return;
        schedule(trace_[0].arrival_time, EventType::Arrival, 0, 0);
        while (!events_.empty()) {
            const Event ev = events_.top();
            events_.pop();
            sample_until(ev.t);
            switch (ev.type) {
                case EventType::Arrival: on_arrival(ev.item, ev.t); break;
                case EventType::Tier1Done: on_tier1_done(ev.proc, ev.item, ev.t); break;
                case EventType::Tier2Done: on_tier2_done(ev.item, ev.t); break;
            }
        }
    }

    void on_arrival(std::size_t index, double now) {
        if (index + 1 < trace_.size()) schedule(trace_[index + 1].arrival_time, EventType::Arrival, 0, index + 1);
        const Request& r = trace_[index];
        const PageId page = page_id(r);
        const std::size_t proc = owner(page);
        ProcessState& p = procs_[proc];
        count_request(p, index, r);

        if (p.cache.access(page, r.kind, tick()) == AccessOutcome::Hit) {
            ++p.m.hits;
            enqueue_tier1(proc, index, now);
        } else if (p.buffer.take(page)) {
            ++p.m.prefetch_hits;
            ++p.buffer.hits;
            fill(proc, page, now);
            if (r.kind == RequestKind::Write) p.cache.mark_dirty(page);
            enqueue_tier1(proc, index, now);
        } else {
            on_miss(proc, index, page, now);
        }
        maybe_end_iteration(p);
        if (index + 1 == trace_.size()) note_end_of_arrivals(now);
    }

    void on_miss(std::size_t proc, std::size_t index, const PageId& page, double now) {
        ProcessState& p = procs_[proc];
        ++p.m.misses;
        const bool steady = index >= warmup_index_;
        if (steady) ++p.steady_misses;
        p.iteration_misses.push_back(page);
        p.sid.observe_miss(page);

        const auto pending = cfg_.coalesce ? p.pending.find(page) : p.pending.end();
        if (pending != p.pending.end()) {
            Job& job = jobs_[pending->second];
            job.waiters.push_back(index);
            if (job.kind == JobKind::Demand) {
                ++p.m.coalesced;
            } else {
                // A demand miss on a prefetch in flight takes it over at demand priority.
                job.kind = JobKind::Demand;
                ++p.m.tier2_fetches;
                if (!job.in_service) {
                    auto& pq = queue_for(proc, JobKind::Prefetch);
                    pq.erase(std::find(pq.begin(), pq.end(), pending->second));
                    account_queue(p, now);
                    job.enqueue_time = now;
                    job.steady = steady;
                    ++p.demand_waiting;
                    queue_for(proc, JobKind::Demand).push_back(pending->second);
                }
            }
        } else {
            const std::size_t id = new_job(JobKind::Demand, page, proc, now, steady);
            jobs_[id].waiters.push_back(index);
            ++p.m.tier2_fetches;
            if (cfg_.coalesce) p.pending.emplace(page, id);
            account_queue(p, now);
            ++p.demand_waiting;
            queue_for(proc, JobKind::Demand).push_back(id);
        }
        try_start_tier2(proc, now);
        propose(proc, now);
    }

    void note_end_of_arrivals(double now) {
        for (auto& p : procs_) {
            account_queue(p, now);
            const double backlog_limit = 10.0 + 0.05 * static_cast<double>(p.m.misses);
            if (static_cast<double>(p.demand_waiting) > backlog_limit) metrics_.unbounded_queue_growth = true;
            if (metrics_.arrival_span > 0.0 && p.m.tier2_busy_time >= 0.98 * metrics_.arrival_span)
                metrics_.unbounded_queue_growth = true;
        }
    }

    double tier1_service(ProcessState& p) {
        return cfg_.tier1_model ? hit_time_ : p.tier1_rng.exponential(cfg_.hit_service_rate);
    }

    double tier2_service(ProcessState& p) {
        Rng& rng = shared_rng_ ? *shared_rng_ : p.tier2_rng;
        return rng.exponential(1.0 / miss_mean_);
    }

    void enqueue_tier1(std::size_t proc, std::size_t index, double now) {
        ProcessState& p = procs_[proc];
        if (p.tier1_busy < cfg_.k_service_threads) {
            ++p.tier1_busy;
            const double s = tier1_service(p);
            p.m.hit_service_time += s;
            schedule(now + s, EventType::Tier1Done, proc, index);
        } else {
            p.tier1_queue.push_back(index);
        }
    }

    void on_tier1_done(std::size_t proc, std::size_t index, double now) {
        ProcessState& p = procs_[proc];
        const double response = now - trace_[index].arrival_time;
        if (response < 0.0) throw InvariantError("request completed before it arrived");
        ++p.m.completed;
        p.response_sum += response;
        p.m.max_response = std::max(p.m.max_response, response);
        p.m.completion_time = std::max(p.m.completion_time, now);
        metrics_.response_histogram.add(response);
        --p.tier1_busy;
        if (!p.tier1_queue.empty()) {
            const std::size_t next = p.tier1_queue.front();
            p.tier1_queue.pop_front();
            enqueue_tier1(proc, next, now);
        }
    }

    // Next job in priority order demand > writeback > prefetch.
    std::optional<std::size_t> pop_job(TierQueues& q) {
        for (auto* dq : {&q.demand, &q.writeback, &q.prefetch}) {
            if (!dq->empty()) {
                const std::size_t id = dq->front();
                dq->pop_front();
                return id;
            }
        }
        return std::nullopt;
    }

    void try_start_tier2(std::size_t proc, double now) {
        const bool shared = cfg_.tier2_mode == Tier2Mode::Shared;
        TierQueues& q = shared ? shared_ : per_process_[proc];
        const std::uint32_t servers = shared ? cfg_.shared_tier2_servers : 1;
        while (q.busy < servers) {
            const auto id = pop_job(q);
            if (!id) return;
            Job& job = jobs_[*id];
            ProcessState& p = procs_[job.proc];
            job.in_service = true;
            ++q.busy;
            if (job.kind == JobKind::Demand) {
                account_queue(p, now);
                --p.demand_waiting;
                if (job.steady) {
                    p.wait_sum += now - job.enqueue_time;
                    ++p.wait_count;
                }
            }
            const double s = tier2_service(p);
            p.m.tier2_busy_time += s;
            if (job.kind == JobKind::Demand) p.m.miss_service_time += s;
            schedule(now + s, EventType::Tier2Done, job.proc, *id);
        }
    }

    void on_tier2_done(std::size_t id, double now) {
        Job& job = jobs_[id];
        const std::size_t proc = job.proc;
        ProcessState& p = procs_[proc];
        const bool shared = cfg_.tier2_mode == Tier2Mode::Shared;
        --(shared ? shared_ : per_process_[proc]).busy;
        if (job.kind != JobKind::Writeback) {
            const auto it = p.pending.find(job.page);
            if (it != p.pending.end() && it->second == id) p.pending.erase(it);
        }

        if (job.kind == JobKind::Demand) {
            bool first = true;
            for (std::size_t index : job.waiters) {
                const Request& r = trace_[index];
                if (first && !p.cache.contains(job.page)) {
                    if (p.buffer.take(job.page)) ++p.buffer.hits;
                    fill(proc, job.page, now);
                    if (r.kind == RequestKind::Write) p.cache.mark_dirty(job.page);
                } else {
                    p.cache.access(job.page, r.kind, tick());
                }
                first = false;
                enqueue_tier1(proc, index, now);
            }
        } else if (job.kind == JobKind::Prefetch) {
            if (!p.cache.contains(job.page) && p.buffer.insert(job.page)) ++p.m.prefetches_landed;
        }
        try_start_tier2(proc, now);
    }

    void finish() {
        ProcessMetrics& agg = metrics_.aggregate;
        double response_sum = 0.0;
        double wait_sum = 0.0;
        std::uint64_t wait_count = 0;
        std::uint64_t steady_misses = 0;
        const double window = window_end_ - window_start_;
        for (auto& p : procs_) {
            ProcessMetrics& m = p.m;
            if (m.hits + m.misses + m.prefetch_hits != m.requests)
                throw InvariantError("access outcomes do not sum to requests");
            if (m.completed != m.requests) throw InvariantError("not every request completed");
            if (p.cache.size() > p.cache.capacity()) throw InvariantError("valid lines exceed capacity");
            m.mean_response = m.completed > 0 ? p.response_sum / static_cast<double>(m.completed) : 0.0;
            m.mean_miss_wait = p.wait_count > 0 ? p.wait_sum / static_cast<double>(p.wait_count) : 0.0;
            m.mean_miss_queue_length = window > 0.0 ? p.queue_area / window : 0.0;
            m.steady_miss_rate = m.steady_requests > 0
                                     ? static_cast<double>(p.steady_misses) / static_cast<double>(m.steady_requests)
                                     : 0.0;
            if (const ExpertEnsemble* e = p.evictor.ensemble())
                metrics_.final_expert_probs.emplace_back(e->probs().begin(), e->probs().end());

            agg.requests += m.requests;
            agg.hits += m.hits;
            agg.misses += m.misses;
            agg.prefetch_hits += m.prefetch_hits;
            agg.evictions += m.evictions;
            agg.dirty_writebacks += m.dirty_writebacks;
            agg.tier2_fetches += m.tier2_fetches;
            agg.coalesced += m.coalesced;
            agg.prefetches_issued += m.prefetches_issued;
            agg.prefetches_landed += m.prefetches_landed;
            agg.reads += m.reads;
            agg.writes += m.writes;
            agg.completed += m.completed;
            agg.max_response = std::max(agg.max_response, m.max_response);
            agg.hit_service_time += m.hit_service_time;
            agg.miss_service_time += m.miss_service_time;
            agg.tier2_busy_time += m.tier2_busy_time;
            agg.completion_time = std::max(agg.completion_time, m.completion_time);
            agg.mean_miss_queue_length += m.mean_miss_queue_length;
            agg.steady_requests += m.steady_requests;
            response_sum += p.response_sum;
            wait_sum += p.wait_sum;
            wait_count += p.wait_count;
            steady_misses += p.steady_misses;
            metrics_.processes.push_back(m);
        }
        agg.mean_response = agg.completed > 0 ? response_sum / static_cast<double>(agg.completed) : 0.0;
        agg.mean_miss_wait = wait_count > 0 ? wait_sum / static_cast<double>(wait_count) : 0.0;
        agg.steady_miss_rate = agg.steady_requests > 0
                                   ? static_cast<double>(steady_misses) / static_cast<double>(agg.steady_requests)
                                   : 0.0;
        metrics_.throughput = agg.completion_time > 0.0
                                  ? static_cast<double>(agg.completed) / agg.completion_time
                                  : 0.0;
    }

    const SimConfig& cfg_;
    std::span<const Request> trace_;
    std::vector<ProcessState> procs_;
    std::vector<TierQueues> per_process_;
    TierQueues shared_;
    std::optional<Rng> shared_rng_;
    std::vector<Job> jobs_;
    std::priority_queue<Event, std::vector<Event>, LaterFirst> events_;
    std::uint64_t seq_ = 0;
    std::uint64_t tick_ = 0;
    std::size_t warmup_index_ = 0;
    double window_start_ = 0.0;
    double window_end_ = 0.0;
    double sample_interval_ = 1.0;
    double next_sample_ = 0.0;
    double hit_time_ = 0.0;
    double miss_mean_ = 0.0;
    SimMetrics metrics_;
};

double relative_error(double simulated, double analytic) {
    if (analytic == 0.0) return simulated == 0.0 ? 0.0 : INFINITY;
    return std::abs(simulated - analytic) / std::abs(analytic);
}

}  // namespace

void Histogram::add(double seconds) {
    const double us = seconds * 1e6;
    std::size_t bin = 0;
    if (us >= 2.0) bin = static_cast<std::size_t>(std::floor(std::log2(us)));
    counts[std::min(bin, kBins - 1)] += 1;
}

std::uint64_t Histogram::total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

void validate(const SimConfig& config) {
    validate(config.traffic);
    validate(config.cache);
    if (config.eviction == EvictionPolicy::WeightSharing) validate(config.ensemble);
    if (config.cache.line_size != config.traffic.page_size)
        throw ConfigError("cache.line_size", "must equal traffic.page_size");
    if (config.prefetch_enabled && config.prefetch_width == 0)
        throw ConfigError("prefetch.width", "must be at least 1 when prefetching");
    if (config.prefetch_history < 3) throw ConfigError("prefetch.history", "must be at least 3");
    if (!config.tier1_model && !(config.hit_service_rate > 0.0))
        throw ConfigError("tier1.service_rate", "must be positive");
    if (!config.tier2_model && !(config.miss_service_rate > 0.0))
        throw ConfigError("tier2.service_rate", "must be positive");
    if (config.tier1_model && family_of(*config.tier1_model) != DeviceFamily::Nvme)
        throw ConfigError("tier1.model", "must be an NVMe model");
    if (config.tier2_model && family_of(*config.tier2_model) != DeviceFamily::Hdd)
        throw ConfigError("tier2.model", "must be an HDD model");
    if (config.tier1_model && !(config.tier1_model_x[3] > 0.0))
        throw ConfigError("tier1.x", "x4 (request count) must be positive");
    if (config.tier2_model && !(config.tier2_model_x[1] * config.tier2_model_x[2] > 0.0))
        throw ConfigError("tier2.x", "x2 * x3 (stripes) must be positive");
    if (!(config.service_floor > 0.0)) throw ConfigError("run.service_floor", "must be positive");
    if (config.poll_requests == 0) throw ConfigError("eviction.poll_requests", "must be at least 1");
    if (config.k_service_threads == 0) throw ConfigError("tier1.service_threads", "must be at least 1");
    if (config.tier2_mode == Tier2Mode::Shared && config.shared_tier2_servers == 0)
        throw ConfigError("tier2.servers", "must be at least 1");
    if (!(config.horizon_time > 0.0)) throw ConfigError("run.horizon_time", "must be positive");
    if (!(config.warmup_fraction >= 0.0 && config.warmup_fraction < 1.0))
        throw ConfigError("run.warmup_fraction", "must lie in [0, 1)");
    if (config.sample_interval < 0.0) throw ConfigError("run.sample_interval", "must be non-negative");
}

std::vector<Request> make_trace(const SimConfig& config) {
    TrafficSpec spec = config.traffic;
    spec.rng_seed = config.seed;
    auto trace = generate(spec);
    if (config.horizon_requests > 0 && trace.size() > config.horizon_requests) trace.resize(config.horizon_requests);
    const auto past = std::find_if(trace.begin(), trace.end(),
                                   [&](const Request& r) { return r.arrival_time > config.horizon_time; });
    trace.erase(past, trace.end());
    return trace;
}

SimMetrics run(const SimConfig& config) {
    validate(config);
    const auto trace = make_trace(config);
    return run(config, trace);
}

SimMetrics run(const SimConfig& config, std::span<const Request> trace) {
    SimConfig cfg = config;
    cfg.traffic.model = TrafficModel::Poisson;  // the trace is given; skip traffic checks
    validate(cfg.cache);
    if (cfg.eviction == EvictionPolicy::WeightSharing) validate(cfg.ensemble);
    Simulator sim(config, trace);
    return sim.run();
}

std::vector<SweepPoint> sweep_cache_size(const SimConfig& config, std::span<const std::size_t> sizes) {
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (sizes[i] <= sizes[i - 1]) throw ConfigError("sweep.sizes", "must be strictly increasing");
    }
    validate(config);
    const auto trace = make_trace(config);
    std::vector<std::future<SweepPoint>> runs;
    for (std::size_t n : sizes) {
        runs.push_back(std::async(std::launch::async, [&config, &trace, n] {
            SimConfig c = config;
            c.cache.n_lines = n;
            const SimMetrics m = run(c, trace);
            return SweepPoint{n, m.aggregate.miss_rate(), m.aggregate.misses};
        }));
    }
    std::vector<SweepPoint> out;
    for (auto& f : runs) out.push_back(f.get());
    return out;
}

QueueNetworkParams queue_params_for(const SimConfig& config, const SimMetrics& metrics) {
    QueueNetworkParams q;
    const auto procs = static_cast<double>(std::max<std::size_t>(1, metrics.processes.size()));
    q.arrival_rate = metrics.arrival_span > 0.0
                         ? static_cast<double>(metrics.aggregate.requests) / metrics.arrival_span / procs
                         : config.traffic.arrival_rate / procs;
    q.hit_service_rate = config.tier1_model
                             ? 1.0 / per_request_seconds(load_paper_model(*config.tier1_model),
                                                         config.tier1_model_x, config.service_floor)
                             : config.hit_service_rate;
    q.miss_service_rate = config.tier2_model
                              ? 1.0 / per_request_seconds(load_paper_model(*config.tier2_model),
                                                          config.tier2_model_x, config.service_floor)
                              : config.miss_service_rate;
    q.miss_rate = metrics.aggregate.miss_rate();
    q.servers = config.k_service_threads;
    for (const auto& m : metrics.processes) {
        q.processes.push_back({static_cast<double>(m.hits + m.prefetch_hits + m.misses), 0.0,
                               static_cast<double>(m.tier2_fetches)});
    }
    return q;
}

AnalyticComparison compare_to_analytic(const SimMetrics& metrics, QueueNetworkParams params) {
    AnalyticComparison c;
    if (metrics.aggregate.requests == 0 || metrics.processes.empty()) {
        c.empty = true;
        return c;
    }
    const auto procs = static_cast<double>(metrics.processes.size());
    c.measured_miss_rate = metrics.aggregate.steady_requests > 0 ? metrics.aggregate.steady_miss_rate
                                                                 : metrics.aggregate.miss_rate();
    params.miss_rate = c.measured_miss_rate;
    c.analytic = analyze_separate_queues(params);
    c.equilibrium = c.analytic.in_equilibrium;
    c.observed_completion = metrics.aggregate.completion_time;
    if (c.analytic.bounds) {
        c.bound_total = c.analytic.bounds->total;
        c.bound_respected = c.observed_completion >= c.bound_total * (1.0 - 0.05);
    }
    if (!c.equilibrium) return c;

    const double window = metrics.arrival_span > 0.0 ? metrics.arrival_span : 1.0;
    const double rho2_sim = metrics.aggregate.tier2_busy_time / window / procs;
    const double L2_sim = metrics.aggregate.mean_miss_queue_length / procs;
    const double W2_sim = metrics.aggregate.mean_miss_wait;
    auto add = [&](const char* name, double sim, double analytic) {
        c.rows.push_back({name, sim, analytic, relative_error(sim, analytic)});
    };
    add("rho2", rho2_sim, c.analytic.rho2);
    if (c.analytic.L2) add("L2", L2_sim, *c.analytic.L2);
    if (c.analytic.W2) add("W2", W2_sim, *c.analytic.W2);
    if (c.analytic.W1 && c.analytic.W2) {
        // Hits: tier-1 wait + service. Misses: IO wait + fetch, then the same.
        const double tier1 = *c.analytic.W1 + 1.0 / params.hit_service_rate;
        const double miss = *c.analytic.W2 + 1.0 / params.miss_service_rate;
        add("mean_response", metrics.aggregate.mean_response, tier1 + params.miss_rate * miss);
    }
    return c;
}

nlohmann::json to_json(const SimMetrics& metrics) {
    auto process_json = [](const ProcessMetrics& m) {
        return nlohmann::json{{"requests", m.requests},
                              {"hits", m.hits},
                              {"misses", m.misses},
                              {"prefetch_hits", m.prefetch_hits},
                              {"evictions", m.evictions},
                              {"dirty_writebacks", m.dirty_writebacks},
                              {"tier2_fetches", m.tier2_fetches},
                              {"coalesced", m.coalesced},
                              {"prefetches_issued", m.prefetches_issued},
                              {"prefetches_landed", m.prefetches_landed},
                              {"reads", m.reads},
                              {"writes", m.writes},
                              {"completed", m.completed},
                              {"miss_rate", m.miss_rate()},
                              {"mean_response", m.mean_response},
                              {"max_response", m.max_response},
                              {"T_h_observed", m.hit_service_time},
                              {"T_m_observed", m.miss_service_time},
                              {"completion_time", m.completion_time},
                              {"tier2_busy_time", m.tier2_busy_time},
                              {"steady_state",
                               {{"requests", m.steady_requests},
                                {"miss_rate", m.steady_miss_rate},
                                {"mean_miss_queue_length", m.mean_miss_queue_length},
                                {"mean_miss_wait", m.mean_miss_wait}}}};
    };
    nlohmann::json j;
    j["schema_version"] = 1;
    j["aggregate"] = process_json(metrics.aggregate);
    j["processes"] = nlohmann::json::array();
    for (const auto& m : metrics.processes) j["processes"].push_back(process_json(m));
    j["response_histogram_log2_us"] = metrics.response_histogram.counts;
    j["arrival_span"] = metrics.arrival_span;
    j["warmup_end"] = metrics.warmup_end;
    j["throughput"] = metrics.throughput;
    j["unbounded_queue_growth"] = metrics.unbounded_queue_growth;
    j["final_expert_probs"] = metrics.final_expert_probs;
    return j;
}

nlohmann::json to_json(const AnalyticComparison& c) {
    nlohmann::json j;
    j["empty"] = c.empty;
    j["equilibrium"] = c.equilibrium;
    j["measured_miss_rate"] = c.measured_miss_rate;
    if (c.empty) return j;
    j["analytic"] = to_json(c.analytic);
    j["rows"] = nlohmann::json::array();
    for (const auto& r : c.rows) {
        j["rows"].push_back({{"quantity", r.quantity},
                             {"simulated", r.simulated},
                             {"analytic", r.analytic},
                             {"relative_error", r.relative_error}});
    }
    j["bound_total"] = c.bound_total;
    j["observed_completion"] = c.observed_completion;
    j["bound_respected"] = c.bound_respected;
    return j;
}

void write_metrics_csv(std::ostream& out, const SimMetrics& metrics) {
    out << "process,requests,hits,misses,prefetch_hits,evictions,dirty_writebacks,tier2_fetches,"
           "miss_rate,mean_response,max_response,T_h_observed,T_m_observed,completion_time,"
           "mean_miss_queue_length,mean_miss_wait\n";
    auto row = [&](const std::string& name, const ProcessMetrics& m) {
        out << name << ',' << m.requests << ',' << m.hits << ',' << m.misses << ',' << m.prefetch_hits << ','
            << m.evictions << ',' << m.dirty_writebacks << ',' << m.tier2_fetches << ','
            << nlohmann::json(m.miss_rate()).dump() << ',' << nlohmann::json(m.mean_response).dump() << ','
            << nlohmann::json(m.max_response).dump() << ',' << nlohmann::json(m.hit_service_time).dump() << ','
            << nlohmann::json(m.miss_service_time).dump() << ','
            << nlohmann::json(m.completion_time).dump() << ','
            << nlohmann::json(m.mean_miss_queue_length).dump() << ','
            << nlohmann::json(m.mean_miss_wait).dump() << '\n';
    };
    for (std::size_t i = 0; i < metrics.processes.size(); ++i) row(std::to_string(i), metrics.processes[i]);
    row("all", metrics.aggregate);
}

void write_timeseries_csv(std::ostream& out, const SimMetrics& metrics) {
    out << "t,process,metric,value\n";
    for (const auto& s : metrics.miss_queue_series) {
        out << nlohmann::json(s.t).dump() << ',' << s.process << ",miss_queue_length," << s.miss_queue_length
            << '\n';
    }
}

}  // namespace tiered
