#include "tiered/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "tiered/errors.hpp"

namespace tiered {

std::string_view to_string(Timing timing) {
    return timing == Timing::Event ? "event" : "functional";
}

Timing timing_from_string(std::string_view name) {
    if (name == "event") return Timing::Event;
    if (name == "functional") return Timing::Functional;
    throw ConfigError("run.timing", "unknown timing '" + std::string(name) + "'");
}

std::string_view to_string(Tier2Mode mode) {
    return mode == Tier2Mode::PerProcess ? "per_process" : "shared";
}

Tier2Mode tier2_mode_from_string(std::string_view name) {
    if (name == "per_process") return Tier2Mode::PerProcess;
    if (name == "shared") return Tier2Mode::Shared;
    throw ConfigError("tier2.mode", "unknown mode '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split_path(std::string_view dotted, std::string_view field) {
    std::vector<std::string> keys;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        auto key = dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start);
        if (key.empty()) throw ConfigError(std::string(field), "empty key in '" + std::string(dotted) + "'");
        keys.emplace_back(key);
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    return keys;
}

void set_path(YAML::Node node, const std::vector<std::string>& keys, std::size_t i, const YAML::Node& value) {
    if (i + 1 == keys.size()) {
        node[keys[i]] = value;
        return;
    }
    if (!node[keys[i]] || !node[keys[i]].IsMap()) node[keys[i]] = YAML::Node(YAML::NodeType::Map);
    set_path(node[keys[i]], keys, i + 1, value);
}

void apply_override(YAML::Node& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set", "expected key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    YAML::Node value;
    try {
        value = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::Exception& e) {
        throw ConfigError(key, std::string("unparsable value: ") + e.what());
    }
    if (!value) value = YAML::Node(YAML::NodeType::Null);
    set_path(root, split_path(key, key), 0, value);
}

// A mapping whose keys must all be consumed.
class Section {
public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_.empty() ? "config" : path_, "expected a mapping");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return node_.IsMap() && node_[key] && !node_[key].IsNull(); }

    Section child(const std::string& key) {
        seen_.insert(key);
        return Section(node_.IsMap() ? node_[key] : YAML::Node(), field(key));
    }

    YAML::Node raw(const std::string& key) {
        seen_.insert(key);
        return node_[key];
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!has(key)) return;
        const YAML::Node v = node_[key];
        try {
            out = convert<T>(v, key);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(field(key), "invalid value '" + scalar_text(v) + "'");
        }
    }

    template <typename T, typename Parse>
    void read_enum(const std::string& key, T& out, Parse parse) {
        std::string name;
        read(key, name);
        if (!has(key)) return;
        try {
            out = parse(name);
        } catch (const ConfigError& e) {
            throw ConfigError(field(key), e.what());
        }
    }

    void finish() const {
        if (!node_.IsMap()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
        }
    }

private:
    static std::string scalar_text(const YAML::Node& v) {
        if (v.IsScalar()) return v.Scalar();
        std::ostringstream os;
        os << v;
        return os.str();
    }

    template <typename T>
    T convert(const YAML::Node& v, const std::string& key) {
        if constexpr (std::is_same_v<T, bool> || std::is_same_v<T, std::string>) {
            if (!v.IsScalar()) throw ConfigError(field(key), "expected a scalar");
            return v.as<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.IsScalar()) throw ConfigError(field(key), "expected a number");
            const auto text = v.Scalar();
            if (text == ".inf" || text == "inf") return std::numeric_limits<T>::infinity();
            const T x = v.as<T>();
            if (std::isnan(x)) throw ConfigError(field(key), "not a number");
            return x;
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.IsScalar()) throw ConfigError(field(key), "expected an integer");
            if (!v.Scalar().empty() && v.Scalar().front() == '-')
                throw ConfigError(field(key), "must be non-negative");
            return v.as<T>();
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

    YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<double> read_vector(Section& s, const std::string& key) {
    std::vector<double> out;
    const YAML::Node v = s.raw(key);
    if (!v || v.IsNull()) return out;
    if (!v.IsSequence()) throw ConfigError(s.field(key), "expected a list");
    for (const auto& item : v) {
        try {
            out.push_back(item.as<double>());
        } catch (const YAML::Exception&) {
            throw ConfigError(s.field(key), "list entries must be numbers");
        }
    }
    return out;
}

void read_predictors(Section& s, const std::string& key, Predictors& x) {
    const auto v = read_vector(s, key);
    if (v.empty()) return;
    if (v.size() != x.size()) throw ConfigError(s.field(key), "expected 5 values x1..x5");
    std::copy(v.begin(), v.end(), x.begin());
}

void read_device(Section& s, const std::string& key, std::optional<Device>& device) {
    std::string name;
    s.read(key, name);
    if (name.empty() || name == "none") {
        if (s.has(key)) device.reset();
        return;
    }
    try {
        device = device_from_string(name);
    } catch (const ConfigError& e) {
        throw ConfigError(s.field(key), e.what());
    }
}

RunConfig build(const YAML::Node& root_node) {
    RunConfig rc;
    SimConfig& c = rc.sim;
    Section root(root_node, "");

    if (!root.has("version")) throw ConfigError("version", "missing schema version");
    int version = 0;
    root.read("version", version);
    if (version != kConfigVersion)
        throw ConfigError("version", "unsupported schema version " + std::to_string(version));

    root.read("seed", c.seed);

    auto traffic = root.child("traffic");
    traffic.read_enum("model", c.traffic.model, traffic_model_from_string);
    traffic.read("n_requests", c.traffic.n_requests);
    traffic.read("page_size", c.traffic.page_size);
    traffic.read("request_size", c.traffic.request_size);
    traffic.read("n_pages", c.traffic.n_pages);
    traffic.read("arrival_rate", c.traffic.arrival_rate);
    traffic.read("read_fraction", c.traffic.read_fraction);
    traffic.read("zipf_exponent", c.traffic.zipf_exponent);
    traffic.read("popularity_cap", c.traffic.popularity_cap);
    traffic.read("mean_lifetime", c.traffic.mean_lifetime);
    traffic.read("page_intro_interval", c.traffic.page_intro_interval);
    traffic.read("trace_path", c.traffic.trace_path);
    traffic.finish();

    auto cache = root.child("cache");
    cache.read("n_lines", c.cache.n_lines);
    cache.read("line_size", c.cache.line_size);
    cache.read("n_processes", c.cache.n_processes);
    cache.read_enum("mapping", c.cache.mapping, mapping_from_string);
    cache.read("block_size", c.cache.block_size);
    cache.read("total_pages", c.cache.total_pages);
    cache.finish();

    auto ev = root.child("eviction");
    ev.read_enum("policy", c.eviction, eviction_policy_from_string);
    if (const YAML::Node experts = ev.raw("experts"); experts && !experts.IsNull()) {
        if (!experts.IsSequence()) throw ConfigError("eviction.experts", "expected a list");
        c.ensemble.experts.clear();
        for (const auto& e : experts) c.ensemble.experts.push_back(expert_from_string(e.as<std::string>()));
    }
    ev.read("alpha", c.ensemble.alpha);
    ev.read("beta", c.ensemble.beta);
    ev.read("epoch_width", c.ensemble.epoch_width);
    ev.read("threshold", c.ensemble.threshold);
    ev.read_enum("mode", c.ensemble.mode, penalty_mode_from_string);
    ev.read("poll_requests", c.poll_requests);
    ev.finish();

    auto pf = root.child("prefetch");
    pf.read("enabled", c.prefetch_enabled);
    pf.read("width", c.prefetch_width);
    pf.read("history", c.prefetch_history);
    pf.finish();

    auto t1 = root.child("tier1");
    t1.read("service_rate", c.hit_service_rate);
    read_device(t1, "model", c.tier1_model);
    read_predictors(t1, "x", c.tier1_model_x);
    t1.read("service_threads", c.k_service_threads);
    t1.finish();

    auto t2 = root.child("tier2");
    t2.read("service_rate", c.miss_service_rate);
    read_device(t2, "model", c.tier2_model);
    read_predictors(t2, "x", c.tier2_model_x);
    t2.read_enum("mode", c.tier2_mode, tier2_mode_from_string);
    t2.read("servers", c.shared_tier2_servers);
    t2.read("coalesce", c.coalesce);
    t2.finish();

    auto run = root.child("run");
    run.read_enum("timing", c.timing, timing_from_string);
    run.read("prewarm", c.prewarm);
    run.read("horizon_time", c.horizon_time);
    run.read("horizon_requests", c.horizon_requests);
    run.read("warmup_fraction", c.warmup_fraction);
    run.read("sample_interval", c.sample_interval);
    run.read("service_floor", c.service_floor);
    run.read("check_invariants", c.check_invariants);
    run.finish();

    auto sweep = root.child("sweep");
    for (double size : read_vector(sweep, "sizes")) {
        if (size < 1 || size != std::floor(size)) throw ConfigError("sweep.sizes", "sizes must be positive integers");
        rc.sweep_sizes.push_back(static_cast<std::size_t>(size));
    }
    sweep.finish();
    for (std::size_t i = 1; i < rc.sweep_sizes.size(); ++i)
        if (rc.sweep_sizes[i] <= rc.sweep_sizes[i - 1])
            throw ConfigError("sweep.sizes", "sizes must be strictly increasing");

    auto out = root.child("output");
    out.read("timeseries", rc.write_timeseries);
    out.read("compare_analytic", rc.compare_analytic);
    out.finish();

    root.finish();
    validate(c);
    return rc;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, std::span<const std::string> overrides) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError("config", std::string("malformed YAML: ") + e.what());
    }
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError("config", "top level must be a mapping");
    for (const auto& o : overrides) apply_override(root, o);
    return build(root);
}

RunConfig load_run_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str(), overrides);
}

nlohmann::json to_json(const RunConfig& rc) {
    const SimConfig& c = rc.sim;
    using nlohmann::json;
    auto device = [](const std::optional<Device>& d) { return d ? std::string(to_string(*d)) : std::string("none"); };
    json experts = json::array();
    for (auto e : c.ensemble.experts) experts.push_back(std::string(to_string(e)));

    json run = {
        {"timing", std::string(to_string(c.timing))},
        {"prewarm", c.prewarm},
        {"horizon_requests", c.horizon_requests},
        {"warmup_fraction", c.warmup_fraction},
        {"sample_interval", c.sample_interval},
        {"service_floor", c.service_floor},
        {"check_invariants", c.check_invariants},
    };
    if (std::isfinite(c.horizon_time)) run["horizon_time"] = c.horizon_time;

    return {
        {"version", kConfigVersion},
        {"seed", c.seed},
        {"traffic",
         {{"model", std::string(to_string(c.traffic.model))},
          {"n_requests", c.traffic.n_requests},
          {"page_size", c.traffic.page_size},
          {"request_size", c.traffic.request_size},
          {"n_pages", c.traffic.n_pages},
          {"arrival_rate", c.traffic.arrival_rate},
          {"read_fraction", c.traffic.read_fraction},
          {"zipf_exponent", c.traffic.zipf_exponent},
          {"popularity_cap", c.traffic.popularity_cap},
          {"mean_lifetime", c.traffic.mean_lifetime},
          {"page_intro_interval", c.traffic.page_intro_interval},
          {"trace_path", c.traffic.trace_path}}},
        {"cache",
         {{"n_lines", c.cache.n_lines},
          {"line_size", c.cache.line_size},
          {"n_processes", c.cache.n_processes},
          {"mapping", std::string(to_string(c.cache.mapping))},
          {"block_size", c.cache.block_size},
          {"total_pages", c.cache.total_pages}}},
        {"eviction",
         {{"policy", std::string(to_string(c.eviction))},
          {"experts", experts},
          {"alpha", c.ensemble.alpha},
          {"beta", c.ensemble.beta},
          {"epoch_width", c.ensemble.epoch_width},
          {"threshold", c.ensemble.threshold},
          {"mode", std::string(to_string(c.ensemble.mode))},
          {"poll_requests", c.poll_requests}}},
        {"prefetch", {{"enabled", c.prefetch_enabled}, {"width", c.prefetch_width}, {"history", c.prefetch_history}}},
        {"tier1",
         {{"service_rate", c.hit_service_rate},
          {"model", device(c.tier1_model)},
          {"x", c.tier1_model_x},
          {"service_threads", c.k_service_threads}}},
        {"tier2",
         {{"service_rate", c.miss_service_rate},
          {"model", device(c.tier2_model)},
          {"x", c.tier2_model_x},
          {"mode", std::string(to_string(c.tier2_mode))},
          {"servers", c.shared_tier2_servers},
          {"coalesce", c.coalesce}}},
        {"run", run},
        {"sweep", {{"sizes", rc.sweep_sizes}}},
        {"output", {{"timeseries", rc.write_timeseries}, {"compare_analytic", rc.compare_analytic}}},
    };
}

}  // namespace tiered
