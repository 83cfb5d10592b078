#include "tiered/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "tiered/errors.hpp"
#include "tiered/rng.hpp"

namespace tiered {

namespace {

constexpr std::uint64_t kWorkloadStream = 1;

// Draws shared by both generators: timing, placement inside the page, kind.
class RequestFactory {
public:
    explicit RequestFactory(const TrafficSpec& spec)
        : spec_(spec),
          rng_(derive_seed(spec.rng_seed, kWorkloadStream)),
          slots_(spec.page_size / spec.request_size) {}

    Rng& rng() { return rng_; }
    double now() const { return clock_; }

    void advance_clock() { clock_ += rng_.exponential(spec_.arrival_rate); }

    Request make(std::uint64_t page) {
        Request r;
        r.arrival_time = clock_;
        r.file_id = 0;
        r.offset = page * spec_.page_size + rng_.below(slots_) * spec_.request_size;
        r.size = spec_.request_size;
        r.kind = rng_.uniform() < spec_.read_fraction ? RequestKind::Read : RequestKind::Write;
        return r;
    }

private:
    const TrafficSpec& spec_;
    Rng rng_;
    std::uint64_t slots_;
    double clock_ = 0.0;
};

void require_model(const TrafficSpec& spec, TrafficModel want) {
    if (spec.model != want) {
        throw ConfigError("traffic.model", "expected " + std::string(to_string(want)) +
                                               ", got " + std::string(to_string(spec.model)));
    }
}

std::uint64_t parse_u64(std::string_view text, std::size_t line, const char* field) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError(line, std::string("bad ") + field + " '" + std::string(text) + "'");
    }
    return value;
}

double parse_double(std::string_view text, std::size_t line, const char* field) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
        throw ParseError(line, std::string("bad ") + field + " '" + std::string(text) + "'");
    }
    return value;
}

constexpr std::string_view kTraceHeader = "arrival_time,file_id,offset,size,kind";

}  // namespace

std::string_view to_string(TrafficModel model) {
    switch (model) {
        case TrafficModel::Poisson: return "poisson";
        case TrafficModel::Irm: return "irm";
        case TrafficModel::Trace: return "trace";
    }
    return "?";
}

TrafficModel traffic_model_from_string(std::string_view name) {
    if (name == "poisson") return TrafficModel::Poisson;
    if (name == "irm") return TrafficModel::Irm;
    if (name == "trace") return TrafficModel::Trace;
    throw ConfigError("traffic.model", "unknown model '" + std::string(name) + "'");
}

void validate(const TrafficSpec& spec) {
    if (!(spec.arrival_rate > 0.0) || !std::isfinite(spec.arrival_rate))
        throw ConfigError("traffic.arrival_rate", "must be positive");
    if (!(spec.read_fraction >= 0.0 && spec.read_fraction <= 1.0))
        throw ConfigError("traffic.read_fraction", "must lie in [0, 1]");
    if (spec.page_size == 0) throw ConfigError("traffic.page_size", "must be positive");
    if (spec.request_size == 0) throw ConfigError("traffic.request_size", "must be positive");
    if (spec.request_size > spec.page_size)
        throw ConfigError("traffic.request_size", "must not exceed page_size");
    if (spec.model == TrafficModel::Trace) {
        if (spec.trace_path.empty()) throw ConfigError("traffic.trace_path", "required for trace model");
        return;
    }
    if (spec.n_pages == 0) throw ConfigError("traffic.n_pages", "must be at least 1");
    if (spec.model == TrafficModel::Irm && !(spec.zipf_exponent > 0.0))
        throw ConfigError("traffic.zipf_exponent", "must be positive");
    if (spec.model == TrafficModel::Poisson && !(spec.mean_lifetime > 0.0))
        throw ConfigError("traffic.mean_lifetime", "must be positive");
}

std::vector<double> zipf_probabilities(std::size_t n, double exponent) {
    std::vector<double> p(n);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        p[r] = std::pow(static_cast<double>(r + 1), -exponent);
        total += p[r];
    }
    for (double& v : p) v /= total;
    return p;
}

TrafficSpec poisson_recency_preset(std::size_t n_requests, std::uint64_t seed) {
    TrafficSpec spec;
    spec.model = TrafficModel::Poisson;
    spec.n_requests = n_requests;
    spec.n_pages = std::max<std::size_t>(n_requests, 1);
    spec.page_intro_interval = 4;
    spec.mean_lifetime = 6.0;
    spec.rng_seed = seed;
    return spec;
}

TrafficSpec irm_popularity_preset(std::size_t n_requests, std::uint64_t seed) {
    TrafficSpec spec;
    spec.model = TrafficModel::Irm;
    spec.n_requests = n_requests;
    spec.n_pages = 5000;
    spec.zipf_exponent = 0.9;
    spec.popularity_cap = 0;
    spec.rng_seed = seed;
    return spec;
}

std::vector<Request> generate_poisson(const TrafficSpec& spec) {
    require_model(spec, TrafficModel::Poisson);
    validate(spec);
    std::vector<Request> out;
    out.reserve(spec.n_requests);
    if (spec.n_requests == 0) return out;

    const std::size_t interval = spec.page_intro_interval > 0
                                     ? spec.page_intro_interval
                                     : std::max<std::size_t>(1, spec.n_requests / spec.n_pages);
    RequestFactory factory(spec);

    // weight_j = exp((intro_j - anchor) / tau). The common factor exp(-now / tau)
    // cancels in the normalization, so weights never change once assigned;
    // the anchor is moved forward before exponents can overflow.
    std::vector<double> cumulative;
    double anchor = 0.0;
    const double tau = spec.mean_lifetime;
    auto introduce = [&](double t) {
        if ((t - anchor) / tau > 600.0) {
            const double scale = std::exp(-(t - anchor) / tau);
            for (double& c : cumulative) c *= scale;
            anchor = t;
        }
        const double w = std::exp((t - anchor) / tau);
        cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + w);
    };

    for (std::size_t i = 0; i < spec.n_requests; ++i) {
        if (i > 0) factory.advance_clock();
        if (i % interval == 0 && cumulative.size() < spec.n_pages) introduce(factory.now());
        const double target = factory.rng().uniform() * cumulative.back();
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
        if (it == cumulative.end()) --it;
        out.push_back(factory.make(static_cast<std::uint64_t>(it - cumulative.begin())));
    }
    return out;
}

std::vector<Request> generate_irm(const TrafficSpec& spec) {
    require_model(spec, TrafficModel::Irm);
    validate(spec);
    std::vector<Request> out;
    out.reserve(spec.n_requests);
    if (spec.n_requests == 0) return out;

    const std::vector<double> p = zipf_probabilities(spec.n_pages, spec.zipf_exponent);
    std::vector<double> cumulative(p.size());
    std::partial_sum(p.begin(), p.end(), cumulative.begin());

    RequestFactory factory(spec);

    // occupant[r] is the page currently holding popularity rank r. Ranks are
    // dealt to page numbers by a seeded shuffle so that address order carries
    // no popularity information.
    std::vector<std::uint64_t> occupant(spec.n_pages);
    std::vector<std::size_t> served(spec.n_pages, 0);
    std::iota(occupant.begin(), occupant.end(), std::uint64_t{0});
    for (std::size_t r = spec.n_pages; r > 1; --r) std::swap(occupant[r - 1], occupant[factory.rng().below(r)]);
    std::uint64_t next_page = spec.n_pages;

    for (std::size_t i = 0; i < spec.n_requests; ++i) {
        if (i > 0) factory.advance_clock();
        const double target = factory.rng().uniform() * cumulative.back();
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
        if (it == cumulative.end()) --it;
        const auto rank = static_cast<std::size_t>(it - cumulative.begin());
        out.push_back(factory.make(occupant[rank]));
        if (spec.popularity_cap > 0 && ++served[rank] >= spec.popularity_cap) {
            occupant[rank] = next_page++;
            served[rank] = 0;
        }
    }
    return out;
}

std::vector<Request> generate(const TrafficSpec& spec) {
    switch (spec.model) {
        case TrafficModel::Poisson: return generate_poisson(spec);
        case TrafficModel::Irm: return generate_irm(spec);
        case TrafficModel::Trace: {
            validate(spec);
            return load_trace(spec.trace_path);
        }
    }
    throw ConfigError("traffic.model", "unhandled model");
}

std::vector<Request> parse_trace(std::istream& in) {
    std::vector<Request> out;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError(1, "missing header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw ParseError(1, "expected header '" + std::string(kTraceHeader) + "'");

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::string_view rest(line);
        std::string_view fields[5];
        for (int f = 0; f < 5; ++f) {
            const auto comma = rest.find(',');
            if (f < 4 && comma == std::string_view::npos)
                throw ParseError(line_no, "expected 5 fields");
            fields[f] = rest.substr(0, comma);
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
            if (f == 4 && comma != std::string_view::npos) throw ParseError(line_no, "expected 5 fields");
        }
        Request r;
        r.arrival_time = parse_double(fields[0], line_no, "arrival_time");
        r.file_id = parse_u64(fields[1], line_no, "file_id");
        r.offset = parse_u64(fields[2], line_no, "offset");
        r.size = parse_u64(fields[3], line_no, "size");
        if (fields[4] == "R") {
            r.kind = RequestKind::Read;
        } else if (fields[4] == "W") {
            r.kind = RequestKind::Write;
        } else {
            throw ParseError(line_no, "kind must be R or W");
        }
        if (r.arrival_time < 0.0) throw ParseError(line_no, "arrival_time is negative");
        if (r.size == 0) throw ParseError(line_no, "size must be at least 1");
        if (!out.empty() && r.arrival_time < out.back().arrival_time)
            throw ParseError(line_no, "arrival_time decreases");
        out.push_back(r);
    }
    return out;
}

std::vector<Request> load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("traffic.trace_path", "cannot open '" + path.string() + "'");
    return parse_trace(in);
}

void write_trace(std::ostream& out, std::span<const Request> requests) {
    out << kTraceHeader << '\n';
    char buf[64];
    for (const Request& r : requests) {
        const auto res = std::to_chars(buf, buf + sizeof buf, r.arrival_time);
        out.write(buf, res.ptr - buf);
        out << ',' << r.file_id << ',' << r.offset << ',' << r.size << ','
            << (r.kind == RequestKind::Read ? 'R' : 'W') << '\n';
    }
}

void save_trace(const std::filesystem::path& path, std::span<const Request> requests) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("out", "cannot write '" + path.string() + "'");
    write_trace(out, requests);
}

}  // namespace tiered
